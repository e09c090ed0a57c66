//! External text encoders: a precomputed embedding file and an HTTP service.
//!
//! Both fall back to the zero vector for text they cannot encode, which
//! scores 0 similarity against everything (and so never links a triple).

use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::sync::Mutex;
use std::time::Duration;

use cok_core::encoder::{Embedding, HashedNgramEncoder, TextEncoder};
use cok_core::llm::BackendError;
use cok_core::text::normalize;
use serde::{Deserialize, Serialize};

use crate::config::EncoderSpec;
use crate::error::{Error, Result};

fn zero(dim: usize) -> Embedding {
    Embedding::Sparse {
        dim,
        entries: Vec::new(),
    }
}

/// Vectors looked up by normalized text.
///
/// File layout, repeated per entry: `u32` text length, UTF-8 text, `u32`
/// dimension, then that many little-endian `f64`s. All entries share one
/// dimension.
#[derive(Debug, Clone)]
pub struct PrecomputedEncoder {
    dim: usize,
    vectors: HashMap<String, Embedding>,
}

impl PrecomputedEncoder {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            vectors: HashMap::new(),
        }
    }

    pub fn insert(&mut self, text: &str, vector: Vec<f64>) -> Result<()> {
        if vector.len() != self.dim {
            return Err(Error::Invalid(format!(
                "vector for {text:?} has dimension {}, expected {}",
                vector.len(),
                self.dim
            )));
        }
        self.vectors
            .insert(normalize(text), Embedding::Dense(vector).normalized());
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn decode(bytes: &[u8]) -> std::result::Result<Self, String> {
        let mut rest = bytes;
        let mut take = |n: usize| -> std::result::Result<&[u8], String> {
            if rest.len() < n {
                return Err(format!("truncated at byte {}", bytes.len() - rest.len()));
            }
            let (head, tail) = rest.split_at(n);
            rest = tail;
            Ok(head)
        };
        let mut out: Option<Self> = None;
        let mut consumed = 0usize;
        while consumed < bytes.len() {
            let len = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
            let text = std::str::from_utf8(take(len)?)
                .map_err(|e| format!("invalid UTF-8: {e}"))?
                .to_string();
            let dim = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
            let raw = take(dim * 8)?;
            consumed += 8 + len + dim * 8;
            let v: Vec<f64> = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            let enc = out.get_or_insert_with(|| Self::new(dim));
            enc.insert(&text, v).map_err(|e| e.to_string())?;
        }
        Ok(out.unwrap_or_else(|| Self::new(0)))
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes).map_err(|m| Error::data(path, 0, m))
    }

    /// Serializes `(text, vector)` pairs in the file layout above.
    pub fn encode_entries<'a>(entries: impl IntoIterator<Item = (&'a str, &'a [f64])>) -> Vec<u8> {
        let mut out = Vec::new();
        for (text, v) in entries {
            out.extend_from_slice(&(text.len() as u32).to_le_bytes());
            out.extend_from_slice(text.as_bytes());
            out.extend_from_slice(&(v.len() as u32).to_le_bytes());
            for x in v {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }
}

impl TextEncoder for PrecomputedEncoder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn encode(&self, text: &str) -> Embedding {
        match self.vectors.get(&normalize(text)) {
            Some(v) => v.clone(),
            None => {
                log::debug!("no precomputed vector for {text:?}");
                zero(self.dim)
            }
        }
    }
}

#[derive(Serialize)]
struct EncodeRequest<'a> {
    texts: &'a [&'a str],
}

#[derive(Deserialize)]
struct EncodeResponse {
    vectors: Vec<Vec<f64>>,
}

/// Client for a service answering `POST {"texts": [...]}` with
/// `{"vectors": [[...], ...]}`. Results are cached per text.
pub struct HttpEncoder {
    url: String,
    dim: usize,
    agent: ureq::Agent,
    cache: Mutex<HashMap<String, Embedding>>,
}

impl HttpEncoder {
    pub fn new(url: &str, dim: usize, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .build()
            .into();
        Self {
            url: url.to_string(),
            dim,
            agent,
            cache: Mutex::new(HashMap::new()),
        }
    }

    /// Encodes a batch in one request; vectors are L2-normalized here.
    pub fn encode_batch(&self, texts: &[&str]) -> std::result::Result<Vec<Embedding>, BackendError> {
        let transport = |e: String| BackendError::Transport { attempts: vec![e] };
        let response: EncodeResponse = self
            .agent
            .post(&self.url)
            .send_json(EncodeRequest { texts })
            .map_err(|e| transport(e.to_string()))?
            .body_mut()
            .read_json()
            .map_err(|e| BackendError::Protocol(e.to_string()))?;
        if response.vectors.len() != texts.len() {
            return Err(BackendError::Protocol(format!(
                "{} vectors for {} texts",
                response.vectors.len(),
                texts.len()
            )));
        }
        response
            .vectors
            .into_iter()
            .map(|v| {
                if v.len() == self.dim {
                    Ok(Embedding::Dense(v).normalized())
                } else {
                    Err(BackendError::Protocol(format!(
                        "vector of dimension {}, expected {}",
                        v.len(),
                        self.dim
                    )))
                }
            })
            .collect()
    }
}

impl TextEncoder for HttpEncoder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn encode(&self, text: &str) -> Embedding {
        let key = normalize(text);
        if let Some(v) = self.cache.lock().unwrap().get(&key) {
            return v.clone();
        }
        match self.encode_batch(&[&key]) {
            Ok(mut v) => {
                let v = v.pop().expect("one vector per text");
                self.cache.lock().unwrap().insert(key, v.clone());
                v
            }
            Err(e) => {
                log::warn!("encoder request failed: {e}");
                zero(self.dim)
            }
        }
    }
}

/// Builds the encoder a run manifest names.
pub fn open_encoder(spec: &EncoderSpec) -> Result<Box<dyn TextEncoder>> {
    Ok(match spec {
        EncoderSpec::Hashed => Box::new(HashedNgramEncoder),
        EncoderSpec::Precomputed { path } => Box::new(PrecomputedEncoder::from_path(path)?),
        EncoderSpec::Http { url, dim, timeout_s } => Box::new(HttpEncoder::new(url, *dim, Duration::from_secs(*timeout_s))),
    })
}
