use crate::numerics::{NumericsError, Tape, Var};

/// `(weight, bias)` of an affine map, weight stored `out x in`.
pub type Affine = (Var, Var);

/// Decision-level weights. A missing branch map drops that branch; the
/// decision gate is only used when both branches are present.
#[derive(Clone, Copy, Debug)]
pub struct FusionWeights {
    pub gate: Affine,
    pub branch1: Option<Affine>,
    pub branch2: Option<Affine>,
    pub decision: Option<Affine>,
}

#[derive(Clone, Copy, Debug)]
pub struct FusionOutput {
    pub output: Var,
    pub gate: Var,
    /// `gate * time + (1 - gate) * text`.
    pub mixed: Var,
    pub branch1: Option<Var>,
    pub branch2: Option<Var>,
    pub decision_gate: Option<Var>,
}

fn affine(tape: &mut Tape, x: Var, (w, b): Affine) -> Result<Var, NumericsError> {
    tape.linear(x, w, Some(b))
}

/// Gated fusion of the time and text forecasts followed by two residual
/// branches (onto the time forecast and onto the raw-patch forecast) and a
/// second gate choosing between them. All inputs are `rows x horizon`.
pub fn decision_fuse(
    tape: &mut Tape,
    time_head: Var,
    text_head: Var,
    original_head: Var,
    weights: &FusionWeights,
) -> Result<FusionOutput, NumericsError> {
    let pair = tape.concat(&[time_head, text_head], 1)?;
    let gate_logits = affine(tape, pair, weights.gate)?;
    let gate = tape.sigmoid(gate_logits);
    let mixed = tape.convex_mix(gate, time_head, text_head)?;

    let branch1 = match weights.branch1 {
        Some(w) => {
            let z = affine(tape, mixed, w)?;
            Some(tape.add(z, time_head)?)
        }
        None => None,
    };
    let branch2 = match weights.branch2 {
        Some(w) => {
            let z = affine(tape, mixed, w)?;
            Some(tape.add(z, original_head)?)
        }
        None => None,
    };
    let (output, decision_gate) = match (branch1, branch2) {
        (Some(b1), Some(b2)) => {
            let w = weights.decision.ok_or(NumericsError::Empty("decision gate weights"))?;
            let pair = tape.concat(&[b1, b2], 1)?;
            let logits = affine(tape, pair, w)?;
            let g = tape.sigmoid(logits);
            (tape.convex_mix(g, b1, b2)?, Some(g))
        }
        (Some(b), None) | (None, Some(b)) => (b, None),
        (None, None) => return Err(NumericsError::Empty("decision branches")),
    };
    Ok(FusionOutput {
        output,
        gate,
        mixed,
        branch1,
        branch2,
        decision_gate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Tensor;

    struct Fixture {
        tape: Tape,
        time: Var,
        text: Var,
        original: Var,
        weights: FusionWeights,
    }

    fn fixture(gate_bias: f64) -> Fixture {
        let m = 3;
        let mut tape = Tape::new();
        let time = tape.constant(Tensor::matrix(2, m, vec![1.0, -2.0, 0.5, 3.0, 0.0, -1.0]));
        let text = tape.constant(Tensor::matrix(2, m, vec![-1.0, 4.0, 0.25, 1.0, 2.0, 2.0]));
        let original = tape.constant(Tensor::matrix(2, m, vec![0.0, 1.0, 2.0, -3.0, 5.0, 1.5]));
        let zero = |tape: &mut Tape, r, c| tape.constant(Tensor::zeros(&[r, c]));
        let gate = (zero(&mut tape, m, 2 * m), tape.constant(Tensor::full(&[m], gate_bias)));
        let b1 = (zero(&mut tape, m, m), tape.constant(Tensor::zeros(&[m])));
        let b2 = (zero(&mut tape, m, m), tape.constant(Tensor::zeros(&[m])));
        let dec = (zero(&mut tape, m, 2 * m), tape.constant(Tensor::zeros(&[m])));
        Fixture {
            tape,
            time,
            text,
            original,
            weights: FusionWeights {
                gate,
                branch1: Some(b1),
                branch2: Some(b2),
                decision: Some(dec),
            },
        }
    }

    #[test]
    fn symmetric_gate_averages() {
        let mut f = fixture(0.0);
        let out = decision_fuse(&mut f.tape, f.time, f.text, f.original, &f.weights).unwrap();
        let t = f.tape.value(f.time).clone();
        let p = f.tape.value(f.text).clone();
        let o = f.tape.value(f.original).clone();
        for k in 0..t.len() {
            assert_eq!(f.tape.value(out.gate).data()[k], 0.5);
            assert_eq!(f.tape.value(out.mixed).data()[k], (t.data()[k] + p.data()[k]) / 2.0);
            assert_eq!(f.tape.value(out.output).data()[k], (t.data()[k] + o.data()[k]) / 2.0);
        }
    }

    #[test]
    fn saturated_gate_selects_time() {
        let mut f = fixture(30.0);
        let out = decision_fuse(&mut f.tape, f.time, f.text, f.original, &f.weights).unwrap();
        assert!(f.tape.value(out.mixed).max_abs_diff(f.tape.value(f.time)) < 1e-9);
    }

    #[test]
    fn single_branch_passes_through() {
        let mut f = fixture(0.0);
        f.weights.branch1 = None;
        let out = decision_fuse(&mut f.tape, f.time, f.text, f.original, &f.weights).unwrap();
        assert_eq!(out.output.index(), out.branch2.unwrap().index());
        assert!(out.decision_gate.is_none());
    }
}
