use crate::numerics::{NumericsError, Tape, Var};

/// Projection weights, each stored `out x in` (`d_model x d_model`).
#[derive(Clone, Copy, Debug)]
pub struct AttentionWeights {
    pub query: Var,
    pub key: Var,
    pub value: Var,
    pub out: Var,
}

pub struct AttentionOutput {
    pub output: Var,
    /// One `tokens x tokens` weight matrix per (group, head), group-major.
    pub weights: Vec<Var>,
}

/// Multi-head scaled dot-product attention from `queries` onto
/// `keys_values`. Rows are tokens; every consecutive block of
/// `group_size` rows is an independent sequence (one sample's variables).
pub fn cross_attention(
    tape: &mut Tape,
    queries: Var,
    keys_values: Var,
    weights: AttentionWeights,
    num_heads: usize,
    group_size: usize,
) -> Result<AttentionOutput, NumericsError> {
    let (rows, d) = {
        let q = tape.value(queries);
        (q.rows(), q.cols())
    };
    if num_heads == 0 || d % num_heads != 0 || group_size == 0 || rows % group_size != 0 {
        return Err(NumericsError::Shape {
            op: "cross_attention",
            left: vec![rows, d],
            right: vec![group_size, num_heads],
        });
    }
    let head_dim = d / num_heads;
    let scale = 1.0 / (head_dim as f64).sqrt();
    let q = tape.linear(queries, weights.query, None)?;
    let k = tape.linear(keys_values, weights.key, None)?;
    let v = tape.linear(keys_values, weights.value, None)?;

    let mut groups = Vec::with_capacity(rows / group_size);
    let mut attn = Vec::with_capacity(rows / group_size * num_heads);
    for g in 0..rows / group_size {
        let r = g * group_size..(g + 1) * group_size;
        let mut heads = Vec::with_capacity(num_heads);
        for h in 0..num_heads {
            let c = h * head_dim..(h + 1) * head_dim;
            let qh = tape.slice(q, r.clone(), c.clone())?;
            let kh = tape.slice(k, r.clone(), c.clone())?;
            let vh = tape.slice(v, r.clone(), c)?;
            let kt = tape.transpose(kh);
            let scores = tape.matmul(qh, kt)?;
            let scores = tape.scale(scores, scale);
            let a = tape.softmax_rows(scores);
            attn.push(a);
            heads.push(tape.matmul(a, vh)?);
        }
        groups.push(tape.concat(&heads, 1)?);
    }
    let merged = tape.concat(&groups, 0)?;
    let output = tape.linear(merged, weights.out, None)?;
    Ok(AttentionOutput { output, weights: attn })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Tensor;

    fn weights(tape: &mut Tape, d: usize) -> AttentionWeights {
        let w = |tape: &mut Tape, s: f64| {
            let data = (0..d * d).map(|k| ((k as f64 + s) * 0.37).sin()).collect();
            tape.constant(Tensor::matrix(d, d, data))
        };
        AttentionWeights {
            query: w(tape, 1.0),
            key: w(tape, 2.0),
            value: w(tape, 3.0),
            out: w(tape, 4.0),
        }
    }

    #[test]
    fn single_token_returns_projected_value() {
        let mut tape = Tape::new();
        let w = weights(&mut tape, 4);
        let x = tape.constant(Tensor::matrix(1, 4, vec![0.1, 0.2, -0.3, 0.4]));
        let p = tape.constant(Tensor::matrix(1, 4, vec![1.0, -1.0, 0.5, 2.0]));
        let out = cross_attention(&mut tape, x, p, w, 2, 1).unwrap();
        for a in &out.weights {
            assert_eq!(tape.value(*a).data(), &[1.0]);
        }
        let v = tape.linear(p, w.value, None).unwrap();
        let expect = tape.linear(v, w.out, None).unwrap();
        assert!(tape.value(out.output).max_abs_diff(tape.value(expect)) < 1e-15);
    }

    #[test]
    fn identical_keys_split_evenly() {
        let mut tape = Tape::new();
        let w = weights(&mut tape, 4);
        let x = tape.constant(Tensor::matrix(2, 4, vec![0.1, 0.2, -0.3, 0.4, 1.0, 0.0, 0.0, 2.0]));
        let p = tape.constant(Tensor::matrix(2, 4, vec![1.0, -1.0, 0.5, 2.0, 1.0, -1.0, 0.5, 2.0]));
        let out = cross_attention(&mut tape, x, p, w, 1, 2).unwrap();
        assert_eq!(tape.value(out.weights[0]).data(), &[0.5, 0.5, 0.5, 0.5]);
    }

    #[test]
    fn heads_must_divide_width() {
        let mut tape = Tape::new();
        let w = weights(&mut tape, 4);
        let x = tape.constant(Tensor::zeros(&[2, 4]));
        assert!(cross_attention(&mut tape, x, x, w, 3, 2).is_err());
    }
}
