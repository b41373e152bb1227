pub mod autodiff;
pub mod baselines;
pub mod checkpoint;
pub mod cli;
pub mod corpus;
pub mod decode;
pub mod error;
pub mod experiment;
pub mod manifest;
pub mod model;
pub mod nn;
pub mod rouge;
pub mod train;

pub use error::{Error, Result};
