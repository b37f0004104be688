//! Central finite-difference check of reverse-mode gradients.

use super::param::{ParamId, ParamSet};
use super::tape::{Tape, Var};
use super::NumericsError;

#[derive(Clone, Debug)]
pub struct GradCheckOptions {
    /// Central-difference step.
    pub h: f64,
    /// Pass threshold on the maximum relative error.
    pub tol: f64,
    /// Lower bound on the relative-error denominator, so that gradients
    /// that are zero up to roundoff do not dominate the report.
    pub rel_floor: f64,
    /// Negative-control hook: adds 1.0 to the first analytic gradient entry.
    #[doc(hidden)]
    pub corrupt_analytic: bool,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            h: 1e-5,
            tol: 1e-4,
            rel_floor: 1e-6,
            corrupt_analytic: false,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ParamCheck {
    pub name: String,
    pub worst_index: usize,
    pub max_rel_error: f64,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub per_param: Vec<ParamCheck>,
    pub max_rel_error: f64,
    /// Name of the parameter holding the worst element.
    pub worst_param: String,
    pub checked_elements: usize,
    pub passed: bool,
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares the reverse-mode gradient of a scalar function of `params`
/// against `(f(θ+h) − f(θ−h)) / 2h` for every parameter element.
///
/// `f` receives a fresh tape plus the parameters bound on it (in set order)
/// and must return a scalar node. It is evaluated `1 + 2·n` times, so keep
/// it small.
pub fn finite_diff_check<F, E>(params: &mut ParamSet, mut f: F, opts: &GradCheckOptions) -> Result<GradCheckReport, E>
where
    F: FnMut(&mut Tape, &[Var]) -> Result<Var, E>,
    E: From<NumericsError>,
{
    let mut tape = Tape::new();
    let vars = params.bind(&mut tape);
    let out = f(&mut tape, &vars)?;
    let f0 = tape.value(out).data()[0];
    if !f0.is_finite() {
        return Err(NumericsError::NonFinite("objective at base point".into()).into());
    }
    let grads = tape.backward(out)?;
    let mut analytic: Vec<Vec<f64>> = vars
        .iter()
        .zip(params.iter())
        .map(|(v, p)| {
            grads
                .get(*v)
                .map(|g| g.data().to_vec())
                .unwrap_or_else(|| vec![0.0; p.tensor.len()])
        })
        .collect();
    drop(tape);
    if opts.corrupt_analytic {
        if let Some(first) = analytic.iter_mut().find(|a| !a.is_empty()) {
            first[0] += 1.0;
        }
    }

    let mut eval = |params: &ParamSet| -> Result<f64, E> {
        let mut tape = Tape::new();
        let vars = params.bind(&mut tape);
        let out = f(&mut tape, &vars)?;
        let v = tape.value(out).data()[0];
        if !v.is_finite() {
            return Err(NumericsError::NonFinite("objective at perturbed point".into()).into());
        }
        Ok(v)
    };

    let names: Vec<String> = params.iter().map(|p| p.name.clone()).collect();
    let mut per_param = Vec::with_capacity(names.len());
    let mut checked = 0;
    for (pi, name) in names.iter().enumerate() {
        let mut worst = ParamCheck {
            name: name.clone(),
            worst_index: 0,
            max_rel_error: 0.0,
            analytic: 0.0,
            numeric: 0.0,
        };
        for (k, &a) in analytic[pi].iter().enumerate() {
            let orig = params.by_id(ParamId(pi)).tensor.data()[k];
            set_elem(params, pi, k, orig + opts.h);
            let plus = eval(params)?;
            set_elem(params, pi, k, orig - opts.h);
            let minus = eval(params)?;
            set_elem(params, pi, k, orig);
            let numeric = (plus - minus) / (2.0 * opts.h);
            let err = relative_error(a, numeric, opts.rel_floor);
            if err > worst.max_rel_error || k == 0 {
                worst.worst_index = k;
                worst.max_rel_error = err;
                worst.analytic = a;
                worst.numeric = numeric;
            }
            checked += 1;
        }
        per_param.push(worst);
    }

    let (max_rel_error, worst_param) =
        per_param
            .iter()
            .map(|c| (c.max_rel_error, c.name.clone()))
            .fold((0.0, String::new()), |acc, x| {
                if x.0 > acc.0 || acc.1.is_empty() {
                    x
                } else {
                    acc
                }
            });
    Ok(GradCheckReport {
        passed: max_rel_error < opts.tol,
        per_param,
        max_rel_error,
        worst_param,
        checked_elements: checked,
    })
}

fn set_elem(params: &mut ParamSet, pi: usize, k: usize, v: f64) {
    params.by_id_mut(ParamId(pi)).tensor.data_mut()[k] = v;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Tensor;

    #[test]
    fn square_at_three() {
        let mut ps = ParamSet::new();
        ps.add("x", Tensor::scalar(3.0)).unwrap();
        let report =
            finite_diff_check::<_, NumericsError>(&mut ps, |t, v| t.mul(v[0], v[0]), &GradCheckOptions::default())
                .unwrap();
        assert!(report.passed);
        let c = &report.per_param[0];
        assert!((c.numeric - 6.0).abs() < 1e-6);
        assert!((c.analytic - 6.0).abs() < 1e-12);
    }

    #[test]
    fn sigmoid_sum_at_zero() {
        let mut ps = ParamSet::new();
        ps.add("x", Tensor::zeros(&[1, 3])).unwrap();
        let mut tape = Tape::new();
        let v = ps.bind(&mut tape);
        let s = tape.sigmoid(v[0]);
        let out = tape.sum(s);
        let g = tape.backward(out).unwrap();
        assert_eq!(g.get(v[0]).unwrap().data(), &[0.25, 0.25, 0.25]);
        let report = finite_diff_check::<_, NumericsError>(
            &mut ps,
            |t, v| {
                let s = t.sigmoid(v[0]);
                Ok(t.sum(s))
            },
            &GradCheckOptions::default(),
        )
        .unwrap();
        assert!(report.passed, "{report:?}");
    }

    #[test]
    fn corrupted_gradient_fails() {
        let mut ps = ParamSet::new();
        ps.add("x", Tensor::scalar(3.0)).unwrap();
        let opts = GradCheckOptions {
            corrupt_analytic: true,
            ..Default::default()
        };
        let report = finite_diff_check::<_, NumericsError>(&mut ps, |t, v| t.mul(v[0], v[0]), &opts).unwrap();
        assert!(!report.passed);
        assert_eq!(report.worst_param, "x");
    }

    #[test]
    fn non_finite_objective_is_an_error() {
        let mut ps = ParamSet::new();
        ps.add("x", Tensor::scalar(f64::INFINITY)).unwrap();
        let r = finite_diff_check::<_, NumericsError>(&mut ps, |t, v| Ok(t.sum(v[0])), &GradCheckOptions::default());
        assert!(matches!(r, Err(NumericsError::NonFinite(_))));
    }
}
