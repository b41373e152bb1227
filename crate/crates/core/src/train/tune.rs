use crate::error::{Error, Result};
use crate::model::{Mode, MtlConfig};

/// `lo, lo + step, …` up to `hi` inclusive, rounded to 1e-9 so grid points
/// print cleanly.
pub fn lambda_grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    if !(step > 0.0) || hi < lo {
        return Vec::new();
    }
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    (0..=n)
        .map(|i| ((lo + i as f64 * step) * 1e9).round() / 1e9)
        .collect()
}

/// Which weight the search varies.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TuneTarget {
    /// `λ` of vanilla-mtl over `[0.1, 0.9]`.
    Vanilla,
    /// `λ2` of agree-mtl over `[0.1, 0.4]` with `λ1 = 0.5`.
    Agree,
}

impl TuneTarget {
    pub fn default_grid(self, step: f64) -> Vec<f64> {
        match self {
            TuneTarget::Vanilla => lambda_grid(0.1, 0.9, step),
            TuneTarget::Agree => lambda_grid(0.1, 0.4, step),
        }
    }

    /// Model configuration for one grid point.
    pub fn config(self, base: &MtlConfig, value: f64) -> MtlConfig {
        match self {
            TuneTarget::Vanilla => MtlConfig {
                mode: Mode::VanillaMtl,
                lambda: value,
                ..base.clone()
            },
            TuneTarget::Agree => MtlConfig {
                mode: Mode::AgreeMtl,
                lambda1: 0.5,
                lambda2: value,
                ..base.clone()
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TuneResult {
    pub best: f64,
    pub best_score: f64,
    /// `(grid value, dev score)` for every point tried.
    pub trace: Vec<(f64, f64)>,
}

/// Grid search maximizing `dev_eval(train(config))`. Ties go to the smallest
/// grid value.
pub fn tune_lambdas<M>(
    target: TuneTarget,
    base: &MtlConfig,
    grid: &[f64],
    mut train: impl FnMut(MtlConfig) -> Result<M>,
    mut dev_eval: impl FnMut(&M) -> Result<f64>,
) -> Result<TuneResult> {
    let mut points: Vec<f64> = grid.to_vec();
    points.sort_by(f64::total_cmp);
    let mut trace = Vec::with_capacity(points.len());
    let mut best: Option<(f64, f64)> = None;
    for &v in &points {
        let model = train(target.config(base, v))?;
        let score = dev_eval(&model)?;
        trace.push((v, score));
        if best.map_or(true, |(_, s)| score > s) {
            best = Some((v, score));
        }
    }
    let (best, best_score) = best.ok_or_else(|| Error::Contract("empty lambda grid".into()))?;
    Ok(TuneResult {
        best,
        best_score,
        trace,
    })
}
