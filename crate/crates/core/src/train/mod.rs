//! Optimization, batching, dataset splits and weight tuning.

mod batch;
mod config;
mod optim;
mod split;
mod trainer;
mod tune;

pub use batch::{encode_dataset, encode_triplet, Batch, Encoded};
pub use config::{Profile, TrainConfig};
pub use optim::{clip_gradients, Adagrad};
pub use split::{split_dataset, Split};
pub use trainer::{metrics_csv, EpochMetrics, StepOutcome, StepRecord, Trainer, METRICS_HEADER};
pub use tune::{lambda_grid, tune_lambdas, TuneResult, TuneTarget};
