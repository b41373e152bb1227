use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::batch::{Batch, Encoded};
use super::config::TrainConfig;
use super::optim::{clip_gradients, Adagrad};
use crate::autodiff::{GradStore, Graph};
use crate::error::{Error, Result};
use crate::model::{LossValues, MtlModel};

/// Per-epoch means over the examples that contributed a loss.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub examples: usize,
    pub skipped: usize,
    pub title: f64,
    pub query: Option<f64>,
    pub agree: Option<f64>,
    pub combined: f64,
    /// Largest pre-clip global gradient norm seen in the epoch.
    pub max_grad_norm: f64,
    pub steps: usize,
}

pub const METRICS_HEADER: &str = "epoch,examples,skipped,loss_title,loss_query,loss_agree,loss_combined,max_grad_norm,steps";

fn opt_cell(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x:.17e}"))
}

impl EpochMetrics {
    /// One CSV line; absent loss terms are written as `NA`.
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{:.17e},{},{},{:.17e},{:.17e},{}",
            self.epoch,
            self.examples,
            self.skipped,
            self.title,
            opt_cell(self.query),
            opt_cell(self.agree),
            self.combined,
            self.max_grad_norm,
            self.steps
        )
    }
}

pub fn metrics_csv(rows: &[EpochMetrics]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(out, "{}", r.csv_row());
    }
    out
}

/// Gradient norms of one optimizer step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepRecord {
    pub pre_clip_norm: f64,
    pub clip_factor: f64,
    pub post_clip_norm: f64,
}

/// Result of one mini-batch.
#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub losses: Vec<LossValues>,
    pub skipped: usize,
    pub record: Option<StepRecord>,
}

/// Owns the model and optimizer state of one run.
#[derive(Clone, Debug)]
pub struct Trainer {
    pub model: MtlModel,
    pub config: TrainConfig,
    pub optimizer: Adagrad,
    pub history: Vec<EpochMetrics>,
    pub steps: Vec<StepRecord>,
    rng: ChaCha8Rng,
}

impl Trainer {
    pub fn new(model: MtlModel, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let optimizer = Adagrad::new(&model.params, config.learning_rate, config.accumulator_init);
        let rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_5eed);
        Ok(Self {
            model,
            config,
            optimizer,
            history: Vec::new(),
            steps: Vec::new(),
            rng,
        })
    }

    /// Losses of one batch without updating anything.
    pub fn batch_losses(&self, batch: &Batch<'_>) -> Result<Vec<LossValues>> {
        (0..batch.len())
            .map(|i| {
                let mut g = Graph::with_params(&self.model.params);
                let b = self.model.combined_loss(&mut g, &batch.example(i))?;
                Ok(b.values(&g))
            })
            .collect()
    }

    /// Mean-over-examples gradient, clipping and one Adagrad update.
    /// Examples that break the extractive premise are skipped.
    pub fn train_step(&mut self, batch: &Batch<'_>) -> Result<StepOutcome> {
        let mut grads = GradStore::zeros_like(&self.model.params);
        let mut losses = Vec::with_capacity(batch.len());
        let mut skipped = 0;
        // Count usable examples first so every gradient is scaled by 1/B.
        let usable: Vec<bool> = batch.items.iter().map(|e| premise_holds(e)).collect();
        let b = usable.iter().filter(|&&u| u).count();
        for i in 0..batch.len() {
            if !usable[i] {
                skipped += 1;
                continue;
            }
            let mut g = Graph::with_params(&self.model.params);
            let breakdown = self.model.combined_loss(&mut g, &batch.example(i))?;
            g.backward_scaled(breakdown.combined, 1.0 / b as f64)?;
            g.accumulate_param_grads(&mut grads);
            losses.push(breakdown.values(&g));
        }
        if skipped > 0 {
            log::warn!("skipped {skipped} example(s) violating the extractive premise");
        }
        if losses.is_empty() {
            return Ok(StepOutcome {
                losses,
                skipped,
                record: None,
            });
        }
        let pre = grads.global_norm();
        let factor = clip_gradients(&mut grads, self.config.max_grad_norm)?;
        let record = StepRecord {
            pre_clip_norm: pre,
            clip_factor: factor,
            post_clip_norm: grads.global_norm(),
        };
        self.optimizer.step(&mut self.model.params, &grads)?;
        self.steps.push(record);
        Ok(StepOutcome {
            losses,
            skipped,
            record: Some(record),
        })
    }

    /// One shuffled pass over `data`.
    pub fn train_epoch(&mut self, data: &[Encoded]) -> Result<EpochMetrics> {
        if data.is_empty() {
            return Err(Error::Contract("training set is empty".into()));
        }
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut self.rng);
        let mut sums = LossSums::default();
        let mut skipped = 0;
        let mut max_norm: f64 = 0.0;
        let mut steps = 0;
        for chunk in order.chunks(self.config.batch_size) {
            let batch = Batch::new(chunk.iter().map(|&i| &data[i]).collect());
            let out = self.train_step(&batch)?;
            skipped += out.skipped;
            for l in &out.losses {
                sums.add(l);
            }
            if let Some(r) = out.record {
                max_norm = max_norm.max(r.pre_clip_norm);
                steps += 1;
            }
        }
        let m = sums.finish(self.history.len() + 1, skipped, max_norm, steps);
        self.history.push(m.clone());
        Ok(m)
    }

    /// Runs `config.epochs` epochs, or until `stop` returns true after an epoch.
    pub fn fit(
        &mut self,
        data: &[Encoded],
        mut stop: impl FnMut(&MtlModel, &EpochMetrics) -> Result<bool>,
    ) -> Result<()> {
        for _ in 0..self.config.epochs {
            let m = self.train_epoch(data)?;
            log::info!(
                "epoch {} combined {:.4} title {:.4}",
                m.epoch,
                m.combined,
                m.title
            );
            if stop(&self.model, &m)? {
                break;
            }
        }
        Ok(())
    }
}

fn premise_holds(e: &Encoded) -> bool {
    e.title.iter().all(|t| e.source.contains(t))
}

#[derive(Default)]
struct LossSums {
    n: usize,
    title: f64,
    query: Option<f64>,
    agree: Option<f64>,
    combined: f64,
}

impl LossSums {
    fn add(&mut self, l: &LossValues) {
        self.n += 1;
        self.title += l.title;
        self.combined += l.combined;
        if let Some(q) = l.query {
            *self.query.get_or_insert(0.0) += q;
        }
        if let Some(a) = l.agree {
            *self.agree.get_or_insert(0.0) += a;
        }
    }

    fn finish(self, epoch: usize, skipped: usize, max_grad_norm: f64, steps: usize) -> EpochMetrics {
        let n = self.n.max(1) as f64;
        EpochMetrics {
            epoch,
            examples: self.n,
            skipped,
            title: self.title / n,
            query: self.query.map(|q| q / n),
            agree: self.agree.map(|a| a / n),
            combined: self.combined / n,
            max_grad_norm,
            steps,
        }
    }
}
