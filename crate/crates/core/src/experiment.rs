//! End-to-end method comparison on one corpus.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::baselines::{default_budget, ilp_title, truncate_title, TermWeights};
use crate::corpus::{Triplet, Vocab};
use crate::decode::{beam_search, DecodeOptions};
use crate::error::{Error, Result};
use crate::model::{Mode, MtlModel};
use crate::rouge::{corpus_rouge, RougeSet};
use crate::train::{encode_dataset, split_dataset, Encoded, EpochMetrics, Split, TrainConfig, Trainer};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    Trunc,
    Ilp,
    PtrNet,
    VanillaMtl,
    AgreeMtl,
}

impl Method {
    /// Every method in report order.
    pub const ALL: [Method; 5] = [
        Method::Trunc,
        Method::Ilp,
        Method::PtrNet,
        Method::VanillaMtl,
        Method::AgreeMtl,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Trunc => "Trunc.",
            Method::Ilp => "ILP",
            Method::PtrNet => "Ptr-Net",
            Method::VanillaMtl => "Vanilla-MTL",
            Method::AgreeMtl => "Agree-MTL",
        }
    }

    /// Training mode of the neural methods.
    pub fn mode(self) -> Option<Mode> {
        match self {
            Method::PtrNet => Some(Mode::PtrOnly),
            Method::VanillaMtl => Some(Mode::VanillaMtl),
            Method::AgreeMtl => Some(Mode::AgreeMtl),
            _ => None,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().trim_end_matches('.') {
            "trunc" => Ok(Method::Trunc),
            "ilp" => Ok(Method::Ilp),
            "ptr-net" | "ptr-only" => Ok(Method::PtrNet),
            "vanilla-mtl" => Ok(Method::VanillaMtl),
            "agree-mtl" => Ok(Method::AgreeMtl),
            _ => Err(format!("unknown method {s:?}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub train: TrainConfig,
    pub decode: DecodeOptions,
    /// Character budget of the baselines; defaults to the rounded mean
    /// training short-title length.
    pub budget: Option<usize>,
    pub weights: TermWeights,
}

impl ExperimentConfig {
    pub fn new(train: TrainConfig) -> Self {
        Self {
            train,
            decode: DecodeOptions::default(),
            budget: None,
            weights: TermWeights::default(),
        }
    }
}

/// Split, vocabulary and encoded training set shared by every method.
#[derive(Clone, Debug)]
pub struct PreparedCorpus {
    pub split: Split<Triplet>,
    pub vocab: Vocab,
    pub train: Vec<Encoded>,
    pub skipped: usize,
}

/// Splits with `seed` and builds the vocabulary over the whole corpus, so
/// every source and title character has an id; query-only characters
/// below `query_min_count` map to UNK.
pub fn prepare(corpus: &[Triplet], seed: u64, query_min_count: usize) -> Result<PreparedCorpus> {
    let split = split_dataset(corpus, seed)?;
    let vocab = Vocab::build(corpus, query_min_count);
    let (train, skipped) = encode_dataset(&vocab, &split.train);
    if train.is_empty() {
        return Err(Error::Contract("no usable training triplets".into()));
    }
    Ok(PreparedCorpus {
        split,
        vocab,
        train,
        skipped,
    })
}

/// Trains a fresh model of `cfg.mode` on the prepared training split.
pub fn train_model(prep: &PreparedCorpus, cfg: &TrainConfig) -> Result<Trainer> {
    let model = MtlModel::new(cfg.dims(prep.vocab.len()), cfg.mtl(), cfg.seed);
    let mut trainer = Trainer::new(model, cfg.clone())?;
    trainer.fit(&prep.train, |_, _| Ok(false))?;
    Ok(trainer)
}

/// Beam-decodes every source.
pub fn decode_all(model: &MtlModel, vocab: &Vocab, triplets: &[Triplet], opts: &DecodeOptions) -> Result<Vec<String>> {
    triplets
        .iter()
        .map(|t| {
            let ids = vocab.encode_strict(&t.source)?;
            let chars: Vec<char> = t.source.chars().collect();
            Ok(beam_search(model, &ids, opts)?.text(&chars))
        })
        .collect()
}

/// ROUGE of `outputs` against the triplets' short titles.
pub fn score(outputs: &[String], triplets: &[Triplet]) -> Result<RougeSet> {
    let pairs: Vec<(&str, &str)> = outputs
        .iter()
        .zip(triplets)
        .map(|(o, t)| (o.as_str(), t.short_title.as_str()))
        .collect();
    corpus_rouge(&pairs)
}

#[derive(Clone, Debug)]
pub struct MethodReport {
    pub method: Method,
    pub scores: RougeSet,
    pub outputs: Vec<String>,
    /// Per-epoch training metrics of neural methods.
    pub history: Vec<EpochMetrics>,
    /// Test titles where the ILP product rule had to be dropped.
    pub relaxed: usize,
    pub budget: Option<usize>,
    pub model: Option<MtlModel>,
}

/// Runs one method and scores it on the test split.
pub fn run_method(method: Method, prep: &PreparedCorpus, cfg: &ExperimentConfig) -> Result<MethodReport> {
    let test = &prep.split.test;
    let budget = cfg.budget.unwrap_or_else(|| default_budget(&prep.split.train));
    let mut report = MethodReport {
        method,
        scores: RougeSet::default(),
        outputs: Vec::new(),
        history: Vec::new(),
        relaxed: 0,
        budget: None,
        model: None,
    };
    match method.mode() {
        None => {
            report.budget = Some(budget);
            for t in test {
                let out = if method == Method::Trunc {
                    truncate_title(t, budget)
                } else {
                    let (text, sol) = ilp_title(t, budget, &cfg.weights)?;
                    report.relaxed += usize::from(sol.relaxed);
                    text
                };
                report.outputs.push(out);
            }
        }
        Some(mode) => {
            let tc = TrainConfig {
                mode,
                ..cfg.train.clone()
            };
            let trainer = train_model(prep, &tc)?;
            report.outputs = decode_all(&trainer.model, &prep.vocab, test, &cfg.decode)?;
            report.history = trainer.history;
            report.model = Some(trainer.model);
        }
    }
    report.scores = score(&report.outputs, test)?;
    Ok(report)
}

/// Runs each method on the same split; a failing method does not stop
/// the others.
pub fn compare(
    corpus: &[Triplet],
    cfg: &ExperimentConfig,
    methods: &[Method],
) -> Result<(PreparedCorpus, Vec<(Method, Result<MethodReport>)>)> {
    let prep = prepare(corpus, cfg.train.seed, cfg.train.query_min_count)?;
    let results = methods
        .iter()
        .map(|&m| {
            log::info!("running {m}");
            (m, run_method(m, &prep, cfg))
        })
        .collect();
    Ok((prep, results))
}

/// ROUGE-1 F1 ordering among the methods present in `rows`:
/// Trunc. < ILP < Ptr-Net and Agree-MTL above Ptr-Net, each by at least
/// `min_gap` (a fraction, 0.01 = one point).
pub fn ordering_checks(rows: &[(String, RougeSet)], min_gap: f64) -> Vec<(String, bool)> {
    let get = |m: Method| rows.iter().find(|(n, _)| n == m.name()).map(|(_, s)| s.rouge1.f1);
    let pairs = [
        (Method::Trunc, Method::Ilp),
        (Method::Ilp, Method::PtrNet),
        (Method::PtrNet, Method::AgreeMtl),
    ];
    pairs
        .iter()
        .filter_map(|&(lo, hi)| {
            let (a, b) = (get(lo)?, get(hi)?);
            Some((format!("{hi} - {lo} >= {:.0} ROUGE-1 point(s)", 100.0 * min_gap), b - a >= min_gap - 1e-12))
        })
        .collect()
}
