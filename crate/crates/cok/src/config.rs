//! Run manifests. A TOML file names the inputs, backend and every tunable;
//! the resolved manifest is copied into each report so a run can be repeated
//! under replay.

use std::path::{Path, PathBuf};

use cok_core::rethink::RethinkConfig;
use cok_core::verify::VerifyConfig;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kb_io::{manifest_error, read_to_string};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EncoderSpec {
    /// Hashed word and character-trigram features.
    #[default]
    Hashed,
    /// Vectors precomputed into a file.
    Precomputed { path: PathBuf },
    /// An embedding service.
    Http {
        url: String,
        dim: usize,
        #[serde(default = "default_encoder_timeout")]
        timeout_s: u64,
    },
}

fn default_encoder_timeout() -> u64 {
    30
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BackendSpec {
    /// Live chat-completions endpoint described by a TOML file.
    Http { config: PathBuf },
    /// Completions from a JSONL script.
    Script { path: PathBuf },
    /// Completions from a recorded log; unseen requests fail.
    Replay { path: PathBuf },
    /// Live endpoint, appending every exchange to a log.
    Record { config: PathBuf, path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: Option<PathBuf>,
    /// Exemplar files; all are loaded and grouped by task type.
    pub exemplars: Vec<PathBuf>,
    /// Shipped exemplar set, used when `exemplars` is empty.
    pub task: Option<String>,
    /// KB TSV files or KB manifests.
    pub kb: Vec<PathBuf>,
    pub aliases: Option<PathBuf>,
    /// Embedding checkpoint for implicit verification.
    pub checkpoint: Option<PathBuf>,
    pub encoder: EncoderSpec,
    pub backend: Option<BackendSpec>,
    pub seed: u64,
    pub parallelism: usize,
    /// Percentage of exemplar triples replaced with random KB triples.
    pub perturb_beta: Option<f64>,
    pub rethink: RethinkConfig,
    pub verify: VerifyConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: None,
            exemplars: Vec::new(),
            task: None,
            kb: Vec::new(),
            aliases: None,
            checkpoint: None,
            encoder: EncoderSpec::Hashed,
            backend: None,
            seed: 0,
            parallelism: 1,
            perturb_beta: None,
            rethink: RethinkConfig::default(),
            verify: VerifyConfig::default(),
        }
    }
}

fn rebase(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl RunConfig {
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|e| manifest_error(path, &e))
    }

    /// Loads a manifest; relative paths inside it are taken relative to the
    /// manifest's directory.
    pub fn from_path(path: &Path) -> Result<Self> {
        let mut cfg = Self::parse(&read_to_string(path)?, path)?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.dataset.iter_mut().for_each(|p| rebase(base, p));
        cfg.exemplars.iter_mut().for_each(|p| rebase(base, p));
        cfg.kb.iter_mut().for_each(|p| rebase(base, p));
        cfg.aliases.iter_mut().for_each(|p| rebase(base, p));
        cfg.checkpoint.iter_mut().for_each(|p| rebase(base, p));
        if let EncoderSpec::Precomputed { path } = &mut cfg.encoder {
            rebase(base, path);
        }
        match &mut cfg.backend {
            Some(BackendSpec::Http { config }) => rebase(base, config),
            Some(BackendSpec::Script { path } | BackendSpec::Replay { path }) => rebase(base, path),
            Some(BackendSpec::Record { config, path }) => {
                rebase(base, config);
                rebase(base, path);
            }
            None => {}
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |m: &str| Err(Error::Invalid(m.into()));
        if self.parallelism == 0 {
            return invalid("parallelism must be at least 1");
        }
        if let Some(b) = self.perturb_beta {
            if !(0.0..=100.0).contains(&b) {
                return invalid("perturb_beta must lie in [0, 100]");
            }
        }
        if !(self.verify.gamma > 0.0 && self.verify.gamma < 1.0) {
            return invalid("gamma must lie in (0, 1)");
        }
        self.rethink.validate()?;
        Ok(())
    }
}
