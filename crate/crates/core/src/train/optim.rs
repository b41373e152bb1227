use crate::autodiff::{GradStore, ParamStore};
use crate::error::{Error, Result};

/// Scales every gradient by `max_norm / norm` when the global L2 norm
/// exceeds `max_norm`. Returns the factor applied (1.0 when unclipped).
pub fn clip_gradients(grads: &mut GradStore, max_norm: f64) -> Result<f64> {
    if grads.has_non_finite() {
        return Err(Error::Numeric("non-finite gradient before clipping".into()));
    }
    let norm = grads.global_norm();
    if norm > max_norm {
        let factor = max_norm / norm;
        grads.scale(factor);
        Ok(factor)
    } else {
        Ok(1.0)
    }
}

/// Adagrad with a constant initial accumulator.
#[derive(Clone, Debug)]
pub struct Adagrad {
    pub learning_rate: f64,
    accum: Vec<Vec<f64>>,
}

impl Adagrad {
    pub fn new(params: &ParamStore, learning_rate: f64, accumulator_init: f64) -> Self {
        Self {
            learning_rate,
            accum: params
                .iter()
                .map(|(_, p)| vec![accumulator_init; p.value.len()])
                .collect(),
        }
    }

    /// `acc += g²; w -= lr · g / √acc`.
    pub fn step(&mut self, params: &mut ParamStore, grads: &GradStore) -> Result<()> {
        if grads.has_non_finite() {
            return Err(Error::Numeric("non-finite gradient in optimizer step".into()));
        }
        let lr = self.learning_rate;
        for ((id, g), acc) in grads.iter().zip(&mut self.accum) {
            let w = params.get_mut(id).data_mut();
            for ((wi, &gi), ai) in w.iter_mut().zip(g).zip(acc.iter_mut()) {
                if gi != 0.0 {
                    *ai += gi * gi;
                    *wi -= lr * gi / ai.sqrt();
                }
            }
        }
        Ok(())
    }

    pub fn accumulators(&self) -> &[Vec<f64>] {
        &self.accum
    }
}
