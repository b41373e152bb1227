//! Central finite-difference gradient checks.

use super::{Graph, GradStore, ParamStore, Tensor, Var};
use crate::error::Result;

#[derive(Clone, Debug, Default)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_abs_err: f64,
    pub max_rel_err: f64,
    pub failures: Vec<String>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    fn record(&mut self, label: impl FnOnce() -> String, analytic: f64, numeric: f64, rtol: f64, atol: f64) {
        self.checked += 1;
        let abs = (analytic - numeric).abs();
        let scale = analytic.abs().max(numeric.abs());
        self.max_abs_err = self.max_abs_err.max(abs);
        if scale > atol {
            self.max_rel_err = self.max_rel_err.max(abs / scale);
        }
        if !(abs <= rtol * scale + atol) {
            self.failures
                .push(format!("{}: analytic {analytic:e} vs numeric {numeric:e}", label()));
        }
    }

    pub fn merge(&mut self, other: GradCheckReport) {
        self.checked += other.checked;
        self.max_abs_err = self.max_abs_err.max(other.max_abs_err);
        self.max_rel_err = self.max_rel_err.max(other.max_rel_err);
        self.failures.extend(other.failures);
    }
}

/// Compares backward gradients of `f` with respect to every element of
/// `inputs` against central differences of step `step`.
///
/// An element passes when `|a - n| <= rtol * max(|a|, |n|) + atol`.
pub fn check_gradients<F>(inputs: &[Tensor], f: F, step: f64, rtol: f64, atol: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph<'_>, &[Var]) -> Result<Var>,
{
    let eval = |ts: &[Tensor]| -> Result<f64> {
        let mut g = Graph::new();
        let vars: Vec<Var> = ts.iter().map(|t| g.input(t.clone())).collect();
        let out = f(&mut g, &vars)?;
        Ok(g.scalar(out))
    };

    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.input(t.clone())).collect();
    let out = f(&mut g, &vars)?;
    g.backward(out)?;
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .zip(inputs)
        .map(|(&v, t)| g.grad(v).map_or_else(|| vec![0.0; t.len()], <[f64]>::to_vec))
        .collect();

    let mut report = GradCheckReport::default();
    let mut work = inputs.to_vec();
    for (ti, t) in inputs.iter().enumerate() {
        for j in 0..t.len() {
            let orig = t.data()[j];
            work[ti].data_mut()[j] = orig + step;
            let plus = eval(&work)?;
            work[ti].data_mut()[j] = orig - step;
            let minus = eval(&work)?;
            work[ti].data_mut()[j] = orig;
            let numeric = (plus - minus) / (2.0 * step);
            report.record(|| format!("input {ti}[{j}]"), analytic[ti][j], numeric, rtol, atol);
        }
    }
    Ok(report)
}

/// Same check over the parameters of a store. At most `max_per_param`
/// elements of each parameter are probed, spread evenly across it.
pub fn check_param_gradients<F>(
    params: &ParamStore,
    f: F,
    step: f64,
    rtol: f64,
    atol: f64,
    max_per_param: usize,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph<'_>) -> Result<Var>,
{
    let mut g = Graph::with_params(params);
    let out = f(&mut g)?;
    g.backward(out)?;
    let mut analytic = GradStore::zeros_like(params);
    g.accumulate_param_grads(&mut analytic);
    drop(g);

    let mut work = params.clone();
    let mut report = GradCheckReport::default();
    for id in params.ids() {
        let n = params.get(id).len();
        let stride = n.div_ceil(max_per_param.max(1)).max(1);
        for j in (0..n).step_by(stride) {
            let orig = params.get(id).data()[j];
            work.get_mut(id).data_mut()[j] = orig + step;
            let plus = eval_params(&work, &f)?;
            work.get_mut(id).data_mut()[j] = orig - step;
            let minus = eval_params(&work, &f)?;
            work.get_mut(id).data_mut()[j] = orig;
            let numeric = (plus - minus) / (2.0 * step);
            report.record(
                || format!("{}[{j}]", params.name(id)),
                analytic.get(id)[j],
                numeric,
                rtol,
                atol,
            );
        }
    }
    Ok(report)
}

fn eval_params<F>(params: &ParamStore, f: &F) -> Result<f64>
where
    F: Fn(&mut Graph<'_>) -> Result<Var>,
{
    let mut g = Graph::with_params(params);
    let out = f(&mut g)?;
    Ok(g.scalar(out))
}
