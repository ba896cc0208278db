use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Model, ModelParams, RunConfig};
use crate::charvocab::CharAlphabet;
use crate::error::{Error, Result};
use crate::features::IdfTable;

const FORMAT: &str = "csr-checkpoint";
const VERSION: u32 = 1;

/// A trained model plus what is needed to score new text with it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub alphabet_sha256: String,
    pub config: RunConfig,
    pub idf: Option<IdfTable>,
    pub params: ModelParams,
}

impl Checkpoint {
    pub fn new(model: &Model, alphabet: &CharAlphabet, idf: Option<IdfTable>) -> Self {
        Self {
            format: FORMAT.into(),
            version: VERSION,
            alphabet_sha256: alphabet.fingerprint(),
            config: model.config.clone(),
            idf,
            params: model.params.clone(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| Error::Checkpoint(e.to_string()))
    }

    /// Parses and validates against `alphabet` and the stored configuration.
    pub fn from_json(text: &str, alphabet: &CharAlphabet) -> Result<Self> {
        let ck: Self = serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))?;
        if ck.format != FORMAT || ck.version != VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint {} v{}",
                ck.format, ck.version
            )));
        }
        if ck.alphabet_sha256 != alphabet.fingerprint() {
            return Err(Error::Checkpoint(
                "checkpoint was written with a different character alphabet".into(),
            ));
        }
        ck.config
            .validate()
            .map_err(|e| Error::Checkpoint(format!("stored configuration: {e}")))?;
        ck.params
            .check_shapes(&ck.config)
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
        for (name, values) in ck.params.trainable() {
            if values.iter().any(|v| !v.is_finite()) {
                return Err(Error::Checkpoint(format!(
                    "{name} contains non-finite values"
                )));
            }
        }
        Ok(ck)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>, alphabet: &CharAlphabet) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, alphabet)
    }

    pub fn model(&self) -> Model {
        Model {
            config: self.config.clone(),
            params: self.params.clone(),
        }
    }
}
