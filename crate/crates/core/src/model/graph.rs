//! Similarity filtering, bipartite graph construction and one round of
//! message passing between time-patch and text-token nodes.

use crate::numerics::{cosine_similarity_matrix, shifted_mean, NumericsError, Tape, Tensor, Var};

/// Row-major boolean matrix.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    rows: usize,
    cols: usize,
    bits: Vec<bool>,
}

impl Mask {
    pub fn new(rows: usize, cols: usize, bits: Vec<bool>) -> Self {
        assert_eq!(bits.len(), rows * cols, "mask size");
        Self { rows, cols, bits }
    }

    pub fn from_rows(rows: &[Vec<bool>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == cols), "ragged mask");
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.bits[i * self.cols + j]
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }
}

/// Keeps `S(i,j)` when it reaches `mean_i + alpha * std_i`, with the
/// population statistics of row `i`.
pub fn dynamic_filter(sim: &Tensor, alpha: f64) -> Mask {
    let (r, c) = (sim.rows(), sim.cols());
    let mut bits = Vec::with_capacity(r * c);
    for i in 0..r {
        let row = sim.row(i);
        let mean = shifted_mean(row.iter().copied());
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / c.max(1) as f64;
        let threshold = mean + alpha * var.sqrt();
        bits.extend(row.iter().map(|&s| s >= threshold));
    }
    Mask::new(r, c, bits)
}

/// Symmetric same-modality mask: the filter applied to the self-similarity
/// matrix, an edge kept when either direction passes, self-loops dropped.
pub fn intra_modality_mask(nodes: &Tensor, alpha: f64) -> Result<Mask, NumericsError> {
    let sim = cosine_similarity_matrix(nodes, nodes)?;
    let m = dynamic_filter(&sim, alpha);
    let n = nodes.rows();
    let bits = (0..n * n)
        .map(|k| {
            let (i, j) = (k / n, k % n);
            i != j && (m.get(i, j) || m.get(j, i))
        })
        .collect();
    Ok(Mask::new(n, n, bits))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NodeRef {
    Time(usize),
    Text(usize),
}

/// Undirected graph over `num_time` patch nodes and `num_text` token nodes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HeteroGraph {
    pub num_time: usize,
    pub num_text: usize,
    /// `(time, text)` pairs.
    pub cross_edges: Vec<(usize, usize)>,
    /// `(a, b)` with `a < b`; empty unless same-modality edges are enabled.
    pub time_edges: Vec<(usize, usize)>,
    pub text_edges: Vec<(usize, usize)>,
}

/// One cross-modality edge per set mask entry.
pub fn build_hetero_graph(mask: &Mask) -> HeteroGraph {
    let mut cross_edges = Vec::with_capacity(mask.count_ones());
    for i in 0..mask.rows() {
        for j in 0..mask.cols() {
            if mask.get(i, j) {
                cross_edges.push((i, j));
            }
        }
    }
    HeteroGraph {
        num_time: mask.rows(),
        num_text: mask.cols(),
        cross_edges,
        time_edges: Vec::new(),
        text_edges: Vec::new(),
    }
}

fn upper_pairs(mask: &Mask) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for i in 0..mask.rows() {
        for j in i + 1..mask.cols() {
            if mask.get(i, j) {
                out.push((i, j));
            }
        }
    }
    out
}

impl HeteroGraph {
    pub fn with_intra_edges(mut self, time_mask: &Mask, text_mask: &Mask) -> Self {
        assert_eq!(time_mask.rows(), self.num_time);
        assert_eq!(text_mask.rows(), self.num_text);
        self.time_edges = upper_pairs(time_mask);
        self.text_edges = upper_pairs(text_mask);
        self
    }

    pub fn num_edges(&self) -> usize {
        self.cross_edges.len() + self.time_edges.len() + self.text_edges.len()
    }

    pub fn time_neighbors(&self) -> Vec<Vec<NodeRef>> {
        let mut out = vec![Vec::new(); self.num_time];
        for &(i, j) in &self.cross_edges {
            out[i].push(NodeRef::Text(j));
        }
        for &(a, b) in &self.time_edges {
            out[a].push(NodeRef::Time(b));
            out[b].push(NodeRef::Time(a));
        }
        out
    }

    pub fn text_neighbors(&self) -> Vec<Vec<NodeRef>> {
        let mut out = vec![Vec::new(); self.num_text];
        for &(i, j) in &self.cross_edges {
            out[j].push(NodeRef::Time(i));
        }
        for &(a, b) in &self.text_edges {
            out[a].push(NodeRef::Text(b));
            out[b].push(NodeRef::Text(a));
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GraphKind {
    /// `relu(W [x ; mean(neighbours)])`.
    Sage,
    /// `relu(W sum_j x_j / sqrt(deg_i deg_j))`, no self term.
    Gcn,
}

impl GraphKind {
    pub fn as_str(self) -> &'static str {
        match self {
            GraphKind::Sage => "sage",
            GraphKind::Gcn => "gcn",
        }
    }
}

/// Update weights per node type; both may be the same variable.
#[derive(Clone, Copy, Debug)]
pub struct GraphWeights {
    pub time: Var,
    pub text: Var,
}

/// One synchronous update of a batch of disjoint graphs. `time` stacks the
/// patch nodes of every graph in order, `text` the token nodes. Both node
/// types read the pre-update embeddings.
pub fn message_pass(
    tape: &mut Tape,
    time: Var,
    text: Var,
    graphs: &[HeteroGraph],
    weights: GraphWeights,
    kind: GraphKind,
) -> Result<(Var, Var), NumericsError> {
    let total_time: usize = graphs.iter().map(|g| g.num_time).sum();
    let total_text: usize = graphs.iter().map(|g| g.num_text).sum();
    let (rt, rx) = (tape.value(time).rows(), tape.value(text).rows());
    if rt != total_time || rx != total_text {
        return Err(NumericsError::Shape {
            op: "message_pass",
            left: vec![rt, rx],
            right: vec![total_time, total_text],
        });
    }
    let nodes = tape.concat(&[time, text], 0)?;

    let mut time_groups = Vec::with_capacity(total_time);
    let mut text_groups = Vec::with_capacity(total_text);
    let (mut time_off, mut text_off) = (0, total_time);
    for g in graphs {
        let tn = g.time_neighbors();
        let xn = g.text_neighbors();
        let locate = |r: &NodeRef| match *r {
            NodeRef::Time(i) => time_off + i,
            NodeRef::Text(j) => text_off + j,
        };
        let degree = |r: &NodeRef| match *r {
            NodeRef::Time(i) => tn[i].len(),
            NodeRef::Text(j) => xn[j].len(),
        };
        for (own, lists, groups) in [(&tn, true, &mut time_groups), (&xn, false, &mut text_groups)] {
            for (k, neighbours) in own.iter().enumerate() {
                let self_ref = if lists { NodeRef::Time(k) } else { NodeRef::Text(k) };
                let d = neighbours.len() as f64;
                let group: Vec<(usize, f64)> = neighbours
                    .iter()
                    .map(|n| {
                        let w = match kind {
                            GraphKind::Sage => 1.0 / d,
                            GraphKind::Gcn => 1.0 / (degree(&self_ref) as f64 * degree(n) as f64).sqrt(),
                        };
                        (locate(n), w)
                    })
                    .collect();
                groups.push(group);
            }
        }
        time_off += g.num_time;
        text_off += g.num_text;
    }
    time_groups.extend(text_groups);
    let agg = tape.aggregate(nodes, time_groups)?;
    let d = tape.value(agg).cols();
    let agg_time = tape.slice(agg, 0..total_time, 0..d)?;
    let agg_text = tape.slice(agg, total_time..total_time + total_text, 0..d)?;

    let update = |tape: &mut Tape, own: Var, agg: Var, w: Var| -> Result<Var, NumericsError> {
        let input = match kind {
            GraphKind::Sage => tape.concat(&[own, agg], 1)?,
            GraphKind::Gcn => agg,
        };
        let z = tape.linear(input, w, None)?;
        Ok(tape.relu(z))
    };
    let new_time = update(tape, time, agg_time, weights.time)?;
    let new_text = update(tape, text, agg_text, weights.text)?;
    Ok((new_time, new_text))
}

/// GraphSAGE update of a single graph.
pub fn sage_update(
    tape: &mut Tape,
    time: Var,
    text: Var,
    graph: &HeteroGraph,
    weights: GraphWeights,
) -> Result<(Var, Var), NumericsError> {
    message_pass(tape, time, text, std::slice::from_ref(graph), weights, GraphKind::Sage)
}

/// Similarity, filtering and graph construction for one variable.
pub fn align_graph(time: &Tensor, text: &Tensor, alpha: f64, intra_edges: bool) -> Result<HeteroGraph, NumericsError> {
    let sim = cosine_similarity_matrix(time, text)?;
    let graph = build_hetero_graph(&dynamic_filter(&sim, alpha));
    if intra_edges {
        let tm = intra_modality_mask(time, alpha)?;
        let xm = intra_modality_mask(text, alpha)?;
        Ok(graph.with_intra_edges(&tm, &xm))
    } else {
        Ok(graph)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn filter_examples() {
        let s = Tensor::matrix(1, 3, vec![0.9, 0.5, 0.1]);
        assert_eq!(dynamic_filter(&s, 0.0), Mask::from_rows(&[vec![true, true, false]]));
        assert_eq!(dynamic_filter(&s, 1.0), Mask::from_rows(&[vec![true, false, false]]));
        let c = Tensor::matrix(1, 2, vec![0.4, 0.4]);
        for a in [0.0, 0.5, 3.0] {
            assert_eq!(dynamic_filter(&c, a), Mask::from_rows(&[vec![true, true]]));
        }
    }

    #[test]
    fn graph_from_mask() {
        let g = build_hetero_graph(&Mask::from_rows(&[vec![true, false], vec![false, true]]));
        assert_eq!(g.cross_edges, vec![(0, 0), (1, 1)]);
        let empty = build_hetero_graph(&Mask::new(2, 3, vec![false; 6]));
        assert_eq!(empty.num_edges(), 0);
        assert!(empty.time_neighbors().iter().all(Vec::is_empty));
    }

    #[test]
    fn sage_selector_example() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::matrix(1, 2, vec![1.0, 0.0]));
        let p = tape.constant(Tensor::matrix(1, 2, vec![0.0, 1.0]));
        let w = tape.constant(Tensor::matrix(2, 4, vec![1., 0., 0., 0., 0., 1., 0., 0.]));
        let g = build_hetero_graph(&Mask::from_rows(&[vec![true]]));
        let (t, _) = sage_update(&mut tape, x, p, &g, GraphWeights { time: w, text: w }).unwrap();
        assert_eq!(tape.value(t).data(), &[1.0, 0.0]);
    }

    #[test]
    fn isolated_node_sees_zero_aggregate() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::matrix(1, 2, vec![1.0, -2.0]));
        let p = tape.constant(Tensor::matrix(1, 2, vec![5.0, 7.0]));
        let wt = Tensor::matrix(2, 4, vec![0.3, -0.1, 0.7, 0.2, 0.5, 0.4, -0.6, 0.9]);
        let w = tape.constant(wt.clone());
        let g = build_hetero_graph(&Mask::from_rows(&[vec![false]]));
        let (t, _) = sage_update(&mut tape, x, p, &g, GraphWeights { time: w, text: w }).unwrap();
        let expect = [(0.3 - 0.1 * -2.0f64).max(0.0), (0.5 + 0.4 * -2.0f64).max(0.0)];
        assert_eq!(tape.value(t).data(), &expect);
    }

    #[test]
    fn gcn_normalisation() {
        // time 0 -- text 0, text 1; time 1 -- text 1
        let g = build_hetero_graph(&Mask::from_rows(&[vec![true, true], vec![false, true]]));
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::matrix(2, 1, vec![0.0, 0.0]));
        let p = tape.constant(Tensor::matrix(2, 1, vec![1.0, 2.0]));
        let w = tape.constant(Tensor::matrix(1, 1, vec![1.0]));
        let (t, _) = message_pass(&mut tape, x, p, &[g], GraphWeights { time: w, text: w }, GraphKind::Gcn).unwrap();
        let r2 = 2f64.sqrt();
        let expect0 = 1.0 / r2 + 2.0 / 2.0;
        let expect1 = 2.0 / r2;
        assert!((tape.value(t).get(0, 0) - expect0).abs() < 1e-15);
        assert!((tape.value(t).get(1, 0) - expect1).abs() < 1e-15);
    }

    #[test]
    fn intra_mask_is_symmetric_without_loops() {
        let nodes = Tensor::matrix(4, 2, vec![1.0, 0.0, 0.9, 0.1, 0.0, 1.0, -1.0, 0.2]);
        let m = intra_modality_mask(&nodes, 0.5).unwrap();
        for i in 0..4 {
            assert!(!m.get(i, i));
            for j in 0..4 {
                assert_eq!(m.get(i, j), m.get(j, i));
            }
        }
        assert!(m.get(0, 1));
    }

    proptest! {
        #[test]
        fn mask_invariant_under_positive_row_scaling(
            data in prop::collection::vec(-1.0f64..1.0, 12),
            text in prop::collection::vec(-1.0f64..1.0, 8),
            row in 0usize..3,
            c in 0.01f64..100.0,
        ) {
            let time = Tensor::matrix(3, 4, data.clone());
            let text = Tensor::matrix(2, 4, text);
            let mut scaled = data;
            for v in &mut scaled[row * 4..row * 4 + 4] {
                *v *= c;
            }
            let a = align_graph(&time, &text, 0.5, false).unwrap();
            let b = align_graph(&Tensor::matrix(3, 4, scaled), &text, 0.5, false).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
