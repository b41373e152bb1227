//! Minimal reverse-mode automatic differentiation over dense `f64` tensors.

mod gradcheck;
mod graph;
mod params;
mod tensor;

pub use gradcheck::{check_gradients, check_param_gradients, GradCheckReport};
pub use graph::{Graph, Var, KL_EPSILON};
pub use params::{GradStore, NamedParam, ParamId, ParamStore};
pub use tensor::Tensor;
#[cfg(test)]
pub(crate) use graph::sigmoid;

