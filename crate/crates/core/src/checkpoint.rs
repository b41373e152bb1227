//! JSON checkpoints split into encoder, pointer-decoder, query-decoder and
//! config sections.
//!
//! Floats are written in shortest round-trip form, so save followed by load
//! restores every parameter bit for bit.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::corpus::Vocab;
use crate::error::{Error, Result};
use crate::model::{Mode, ModelDims, MtlConfig, MtlModel};

pub const FORMAT: &str = "titlecomp-checkpoint";
pub const VERSION: u32 = 1;

/// Section name and the parameter-name prefix it holds.
const SECTIONS: [(&str, &str); 3] = [
    ("encoder", "encoder."),
    ("pointer-decoder", "pointer."),
    ("query-decoder", "query."),
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub dims: ModelDims,
    pub config: MtlConfig,
    pub vocab: Vocab,
    pub sections: BTreeMap<String, BTreeMap<String, Tensor>>,
}

impl Checkpoint {
    /// Snapshot of a model. A ptr-only model has no query-decoder section.
    pub fn from_model(model: &MtlModel, vocab: &Vocab) -> Self {
        let mut sections = BTreeMap::new();
        for (section, prefix) in SECTIONS {
            if section == "query-decoder" && model.config.mode == Mode::PtrOnly {
                continue;
            }
            let params: BTreeMap<String, Tensor> = model
                .params
                .iter()
                .filter(|(_, p)| p.name.starts_with(prefix))
                .map(|(_, p)| (p.name.clone(), p.value.clone()))
                .collect();
            sections.insert(section.to_string(), params);
        }
        Self {
            format: FORMAT.into(),
            version: VERSION,
            dims: model.dims.clone(),
            config: model.config.clone(),
            vocab: vocab.clone(),
            sections,
        }
    }

    pub fn has_section(&self, name: &str) -> bool {
        self.sections.contains_key(name)
    }

    /// Rebuilds the model. Sections absent from the checkpoint keep the
    /// fresh initialization drawn from `init_seed`; only the query decoder
    /// may be absent. `config` overrides the stored loss configuration,
    /// e.g. to continue a ptr-only run in agree-mtl mode.
    pub fn to_model(&self, init_seed: u64, config: Option<MtlConfig>) -> Result<MtlModel> {
        if self.dims.vocab_size != self.vocab.len() {
            return Err(Error::Checkpoint(format!(
                "vocabulary has {} entries but the model expects {}",
                self.vocab.len(),
                self.dims.vocab_size
            )));
        }
        let cfg = config.unwrap_or_else(|| self.config.clone());
        let mut model = MtlModel::new(self.dims.clone(), cfg, init_seed);
        for (section, prefix) in SECTIONS {
            let Some(stored) = self.sections.get(section) else {
                if section == "query-decoder" {
                    continue;
                }
                return Err(Error::Checkpoint(format!("missing {section} section")));
            };
            let expected: Vec<String> = model
                .params
                .iter()
                .filter(|(_, p)| p.name.starts_with(prefix))
                .map(|(_, p)| p.name.clone())
                .collect();
            for name in stored.keys() {
                if !expected.contains(name) {
                    return Err(Error::Checkpoint(format!("unexpected parameter {name} in {section}")));
                }
            }
            for name in &expected {
                let value = stored
                    .get(name)
                    .ok_or_else(|| Error::Checkpoint(format!("{section} lacks parameter {name}")))?;
                let id = model.params.find(name).expect("listed above");
                model
                    .params
                    .set(id, value.clone())
                    .map_err(|e| Error::Checkpoint(format!("{name}: {e}")))?;
            }
        }
        Ok(model)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_str(text)?;
        if ck.format != FORMAT {
            return Err(Error::Checkpoint(format!("unknown format {:?}", ck.format)));
        }
        if ck.version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {}", ck.version)));
        }
        Ok(ck)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::file(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        Self::from_json(&text)
    }
}
