use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Mode, ModelDims, MtlConfig};

/// Named size presets. `paper` uses 128-d embeddings, 128-d encoder
/// directions, a 256-d decoder and batch 128; `desk` shrinks everything so
/// full experiments run on one CPU core.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    Desk,
    Paper,
}

impl FromStr for Profile {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "desk" => Ok(Profile::Desk),
            "paper" => Ok(Profile::Paper),
            _ => Err(format!("unknown profile {s:?} (desk, paper)")),
        }
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Profile::Desk => "desk",
            Profile::Paper => "paper",
        })
    }
}

/// Every knob of a training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_grad_norm: f64,
    pub accumulator_init: f64,
    pub epochs: usize,
    pub seed: u64,
    pub mode: Mode,
    pub lambda1: f64,
    pub lambda2: f64,
    /// Title weight for vanilla-mtl.
    pub lambda: f64,
    pub renormalize: bool,
    pub reverse_kl: bool,
    pub embed_dim: usize,
    pub enc_hidden: usize,
    pub attn_dim: usize,
    pub max_source_len: usize,
    /// Query-only characters rarer than this map to UNK.
    pub query_min_count: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::profile(Profile::Desk)
    }
}

impl TrainConfig {
    pub fn profile(p: Profile) -> Self {
        let mtl = MtlConfig::default();
        let base = Self {
            learning_rate: 0.15,
            batch_size: 128,
            max_grad_norm: 2.0,
            accumulator_init: 0.1,
            epochs: 10,
            seed: 1,
            mode: mtl.mode,
            lambda1: mtl.lambda1,
            lambda2: mtl.lambda2,
            lambda: mtl.lambda,
            renormalize: mtl.renormalize,
            reverse_kl: mtl.reverse_kl,
            embed_dim: 128,
            enc_hidden: 128,
            attn_dim: 256,
            max_source_len: 128,
            query_min_count: 2,
        };
        match p {
            Profile::Paper => base,
            Profile::Desk => Self {
                batch_size: 32,
                embed_dim: 32,
                enc_hidden: 32,
                attn_dim: 32,
                ..base
            },
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(vec![e.to_string()]))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn mtl(&self) -> MtlConfig {
        MtlConfig {
            mode: self.mode,
            lambda1: self.lambda1,
            lambda2: self.lambda2,
            lambda: self.lambda,
            renormalize: self.renormalize,
            reverse_kl: self.reverse_kl,
        }
    }

    pub fn dims(&self, vocab_size: usize) -> ModelDims {
        ModelDims {
            vocab_size,
            embed_dim: self.embed_dim,
            enc_hidden: self.enc_hidden,
            attn_dim: self.attn_dim,
            max_source_len: self.max_source_len,
        }
    }

    /// Every problem with the configuration, not just the first.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        let positive_f = [
            ("learning_rate", self.learning_rate),
            ("max_grad_norm", self.max_grad_norm),
            ("accumulator_init", self.accumulator_init),
        ];
        for (name, v) in positive_f {
            if !(v > 0.0 && v.is_finite()) {
                out.push(format!("{name} must be positive, got {v}"));
            }
        }
        let positive_u = [
            ("batch_size", self.batch_size),
            ("epochs", self.epochs),
            ("embed_dim", self.embed_dim),
            ("enc_hidden", self.enc_hidden),
            ("attn_dim", self.attn_dim),
            ("max_source_len", self.max_source_len),
            ("query_min_count", self.query_min_count),
        ];
        for (name, v) in positive_u {
            if v == 0 {
                out.push(format!("{name} must be positive"));
            }
        }
        out.extend(self.mtl().problems());
        out
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.problems();
        if p.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(p))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip() {
        let c = TrainConfig::profile(Profile::Paper);
        assert_eq!(TrainConfig::from_toml_str(&c.to_toml_string()).unwrap(), c);
    }

    #[test]
    fn partial_toml_keeps_defaults() {
        let c = TrainConfig::from_toml_str("epochs = 3\nmode = \"ptr-only\"\n").unwrap();
        assert_eq!(c.epochs, 3);
        assert_eq!(c.mode, Mode::PtrOnly);
        assert_eq!(c.learning_rate, 0.15);
    }

    #[test]
    fn lists_every_problem() {
        let c = TrainConfig {
            learning_rate: 0.0,
            batch_size: 0,
            lambda1: 0.9,
            lambda2: 0.9,
            ..TrainConfig::default()
        };
        assert_eq!(c.problems().len(), 3);
        assert!(TrainConfig::from_toml_str("bogus = 1").is_err());
    }
}
