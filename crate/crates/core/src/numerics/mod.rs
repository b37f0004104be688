//! Differentiable dense-tensor substrate.

mod gradcheck;
mod param;
mod tape;
mod tensor;


pub use gradcheck::{finite_diff_check, relative_error, GradCheckOptions, GradCheckReport, ParamCheck};
pub use param::{ParamId, ParamSet, Parameter};
pub use tape::{sigmoid_scalar, Gradients, Groups, Tape, Var};
pub use tensor::Tensor;

pub(crate) use tape::shifted_mean;

#[derive(Debug, thiserror::Error)]
pub enum NumericsError {
    #[error("{op}: incompatible shapes {left:?} and {right:?}")]
    Shape {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("tensor of shape {shape:?} cannot hold {len} values")]
    Construction { shape: Vec<usize>, len: usize },
    #[error("{op}: index {index} out of bounds ({bound})")]
    Index {
        op: &'static str,
        index: usize,
        bound: usize,
    },
    #[error("{op}: unsupported axis {axis}")]
    Axis { op: &'static str, axis: usize },
    #[error("{0}: empty input")]
    Empty(&'static str),
    #[error("backward requires a scalar output, got shape {0:?}")]
    NotScalar(Vec<usize>),
    #[error("duplicate parameter name `{0}`")]
    DuplicateParameter(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
}

/// Cosine similarity of every row of `a` against every row of `b`.
/// Rows with zero norm have similarity 0 against everything.
pub fn cosine_similarity_matrix(a: &Tensor, b: &Tensor) -> Result<Tensor, NumericsError> {
    if a.cols() != b.cols() {
        return Err(NumericsError::Shape {
            op: "cosine_similarity",
            left: a.shape().to_vec(),
            right: b.shape().to_vec(),
        });
    }
    let norm = |r: &[f64]| r.iter().map(|v| v * v).sum::<f64>().sqrt();
    let na: Vec<f64> = (0..a.rows()).map(|i| norm(a.row(i))).collect();
    let nb: Vec<f64> = (0..b.rows()).map(|j| norm(b.row(j))).collect();
    let mut out = Vec::with_capacity(a.rows() * b.rows());
    for (i, ni) in na.iter().enumerate() {
        for (j, nj) in nb.iter().enumerate() {
            let denom = ni * nj;
            if denom == 0.0 {
                out.push(0.0);
            } else {
                let dot: f64 = a.row(i).iter().zip(b.row(j)).map(|(x, y)| x * y).sum();
                out.push((dot / denom).clamp(-1.0, 1.0));
            }
        }
    }
    Ok(Tensor::matrix(a.rows(), b.rows(), out))
}

/// Splits a matrix along `axis` into pieces of the given sizes.
pub fn split(t: &Tensor, axis: usize, sizes: &[usize]) -> Result<Vec<Tensor>, NumericsError> {
    let (r, c) = (t.rows(), t.cols());
    let total: usize = sizes.iter().sum();
    let extent = if axis == 0 { r } else { c };
    if axis > 1 {
        return Err(NumericsError::Axis { op: "split", axis });
    }
    if total != extent {
        return Err(NumericsError::Index {
            op: "split",
            index: total,
            bound: extent,
        });
    }
    let mut out = Vec::with_capacity(sizes.len());
    let mut offset = 0;
    for &s in sizes {
        let piece = if axis == 0 {
            Tensor::matrix(s, c, t.data()[offset * c..(offset + s) * c].to_vec())
        } else {
            let mut d = Vec::with_capacity(r * s);
            for i in 0..r {
                d.extend_from_slice(&t.row(i)[offset..offset + s]);
            }
            Tensor::matrix(r, s, d)
        };
        out.push(piece);
        offset += s;
    }
    Ok(out)
}
