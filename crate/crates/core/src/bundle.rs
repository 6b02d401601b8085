//! A directory holding everything needed to serve completions.
//!
//! ```text
//! manifest.json         {"format":1,"strategy":"joint"|"separate","case_fold":false}
//! src.vocab, tgt.vocab  vocabularies
//! model.ckpt            joint model, or model-{zero,prefix,suffix,bi}.ckpt
//! romanizer.tsv         optional typing-form table
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::benchmark::{BenchmarkError, ContextType, Romanizer};
use crate::completer::{Completer, ModelSet, PrefixIndex};
use crate::corpus::{CorpusError, Vocabulary};
use crate::trainer::Strategy;
use crate::wpm::{load_checkpoint, save_checkpoint, ModelError};

const FORMAT: u32 = 1;

#[derive(Debug, Error)]
pub enum BundleError {
    #[error("bundle manifest: {0}")]
    Manifest(String),
    #[error("model/vocabulary mismatch: {0}")]
    Mismatch(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Romanizer(#[from] BenchmarkError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Manifest {
    format: u32,
    strategy: Strategy,
    case_fold: bool,
}

/// A completer together with the romanizer its index was built from.
#[derive(Clone, Debug)]
pub struct ModelBundle {
    pub completer: Completer,
    pub romanizer: Romanizer,
}

fn model_file(ctype: Option<ContextType>) -> String {
    match ctype {
        None => "model.ckpt".to_owned(),
        Some(t) => format!("model-{t}.ckpt"),
    }
}

impl ModelBundle {
    pub fn new(models: ModelSet, src_vocab: Vocabulary, tgt_vocab: Vocabulary, romanizer: Romanizer, case_fold: bool) -> Self {
        let index = PrefixIndex::build(&tgt_vocab, &romanizer, case_fold);
        Self {
            completer: Completer::new(models, src_vocab, tgt_vocab, index),
            romanizer,
        }
    }

    pub fn strategy(&self) -> Strategy {
        match self.completer.models {
            ModelSet::Joint(_) => Strategy::Joint,
            ModelSet::Separate(_) => Strategy::Separate,
        }
    }

    pub fn save(&self, dir: &Path) -> Result<(), BundleError> {
        fs::create_dir_all(dir)?;
        let c = &self.completer;
        c.src_vocab.save(&dir.join("src.vocab"))?;
        c.tgt_vocab.save(&dir.join("tgt.vocab"))?;
        match &c.models {
            ModelSet::Joint(m) => save_checkpoint(m, &dir.join(model_file(None)))?,
            ModelSet::Separate(map) => {
                for (&t, m) in map {
                    save_checkpoint(m, &dir.join(model_file(Some(t))))?;
                }
            }
        }
        let rom_path = dir.join("romanizer.tsv");
        if self.romanizer.is_identity() {
            if rom_path.exists() {
                fs::remove_file(&rom_path)?;
            }
        } else {
            self.romanizer.write_table(io::BufWriter::new(fs::File::create(&rom_path)?))?;
        }
        let manifest = Manifest {
            format: FORMAT,
            strategy: self.strategy(),
            case_fold: c.index.case_fold(),
        };
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        fs::write(dir.join("manifest.json"), text + "\n")?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, BundleError> {
        let text = fs::read_to_string(dir.join("manifest.json"))?;
        let manifest: Manifest = serde_json::from_str(&text).map_err(|e| BundleError::Manifest(e.to_string()))?;
        if manifest.format != FORMAT {
            return Err(BundleError::Manifest(format!("unsupported format {}", manifest.format)));
        }
        let src_vocab = Vocabulary::load(&dir.join("src.vocab"))?;
        let tgt_vocab = Vocabulary::load(&dir.join("tgt.vocab"))?;
        let models = match manifest.strategy {
            Strategy::Joint => ModelSet::Joint(load_checkpoint(&dir.join(model_file(None)))?),
            Strategy::Separate => {
                let mut map = BTreeMap::new();
                for t in ContextType::ALL {
                    map.insert(t, load_checkpoint(&dir.join(model_file(Some(t))))?);
                }
                ModelSet::Separate(map)
            }
        };
        let all: Vec<_> = match &models {
            ModelSet::Joint(m) => vec![m],
            ModelSet::Separate(map) => map.values().collect(),
        };
        for m in all {
            if m.config.src_vocab_size != src_vocab.len() || m.config.tgt_vocab_size != tgt_vocab.len() {
                return Err(BundleError::Mismatch(format!(
                    "checkpoint expects {}/{} words, vocabularies have {}/{}",
                    m.config.src_vocab_size,
                    m.config.tgt_vocab_size,
                    src_vocab.len(),
                    tgt_vocab.len()
                )));
            }
        }
        let rom_path = dir.join("romanizer.tsv");
        let romanizer = if rom_path.exists() {
            Romanizer::load_table(&rom_path)?
        } else {
            Romanizer::Identity
        };
        Ok(Self::new(models, src_vocab, tgt_vocab, romanizer, manifest.case_fold))
    }
}
