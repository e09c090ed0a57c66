//! Append-only response log for record/replay.
//!
//! Layout: magic `COKR`, `u16` version, then records, each a `u32` payload
//! length followed by the payload: `u64` request fingerprint, `f64`
//! temperature, `u32` max tokens, `u32` sample count, `u32` text count and
//! the texts as `u32`-length-prefixed UTF-8. Integers are little-endian.

use std::collections::{HashMap, VecDeque};
use std::fs::{File, OpenOptions};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use cok_core::llm::{fingerprint, BackendError, DecodingParams, GenerationRequest, GenerationResponse, LlmBackend};

use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"COKR";
pub const REPLAY_VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayRecord {
    pub fingerprint: u64,
    pub params: DecodingParams,
    pub texts: Vec<String>,
}

impl ReplayRecord {
    fn encode(&self) -> Vec<u8> {
        let mut p = Vec::new();
        p.extend_from_slice(&self.fingerprint.to_le_bytes());
        p.extend_from_slice(&self.params.temperature.to_le_bytes());
        p.extend_from_slice(&self.params.max_tokens.to_le_bytes());
        p.extend_from_slice(&self.params.n_samples.to_le_bytes());
        p.extend_from_slice(&(self.texts.len() as u32).to_le_bytes());
        for t in &self.texts {
            p.extend_from_slice(&(t.len() as u32).to_le_bytes());
            p.extend_from_slice(t.as_bytes());
        }
        let mut out = Vec::with_capacity(p.len() + 4);
        out.extend_from_slice(&(p.len() as u32).to_le_bytes());
        out.extend_from_slice(&p);
        out
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        let s = self
            .bytes
            .get(self.pos..self.pos + n)
            .ok_or_else(|| format!("truncated at byte {}", self.pos))?;
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> std::result::Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> std::result::Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Parses a whole log.
pub fn decode_log(bytes: &[u8]) -> std::result::Result<Vec<ReplayRecord>, String> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(4)? != MAGIC {
        return Err("not a replay log (bad magic)".into());
    }
    let version = u16::from_le_bytes(c.take(2)?.try_into().unwrap());
    if version != REPLAY_VERSION {
        return Err(format!("unsupported replay log version {version}"));
    }
    let mut out = Vec::new();
    while c.pos < bytes.len() {
        let len = c.u32()? as usize;
        let mut r = Cursor {
            bytes: c.take(len)?,
            pos: 0,
        };
        let fingerprint = r.u64()?;
        let temperature = f64::from_bits(r.u64()?);
        let max_tokens = r.u32()?;
        let n_samples = r.u32()?;
        let count = r.u32()? as usize;
        let mut texts = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            let n = r.u32()? as usize;
            let t = std::str::from_utf8(r.take(n)?).map_err(|e| format!("invalid UTF-8: {e}"))?;
            texts.push(t.to_string());
        }
        if r.pos != len {
            return Err(format!("record ending at byte {} has trailing data", c.pos));
        }
        out.push(ReplayRecord {
            fingerprint,
            params: DecodingParams {
                temperature,
                max_tokens,
                n_samples,
            },
            texts,
        });
    }
    Ok(out)
}

pub fn read_log(path: &Path) -> Result<Vec<ReplayRecord>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_log(&bytes).map_err(|m| Error::data(path, 0, m))
}

/// Forwards to `inner` and appends every successful exchange to a log.
pub struct RecordingBackend<B> {
    inner: B,
    path: PathBuf,
    file: Mutex<File>,
}

impl<B: LlmBackend> RecordingBackend<B> {
    /// Appends to an existing log (after checking its header) or starts a
    /// new one.
    pub fn create(inner: B, path: &Path) -> Result<Self> {
        let mut file = OpenOptions::new()
            .read(true)
            .append(true)
            .create(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        let mut head = Vec::new();
        file.read_to_end(&mut head).map_err(|e| Error::io(path, e))?;
        if head.is_empty() {
            file.write_all(MAGIC).map_err(|e| Error::io(path, e))?;
            file.write_all(&REPLAY_VERSION.to_le_bytes()).map_err(|e| Error::io(path, e))?;
        } else {
            decode_log(&head).map_err(|m| Error::data(path, 0, m))?;
        }
        Ok(Self {
            inner,
            path: path.to_path_buf(),
            file: Mutex::new(file),
        })
    }

    pub fn inner(&self) -> &B {
        &self.inner
    }
}

impl<B: LlmBackend> LlmBackend for RecordingBackend<B> {
    fn complete(&self, request: &GenerationRequest) -> Result<GenerationResponse, BackendError> {
        let response = self.inner.complete(request)?;
        let record = ReplayRecord {
            fingerprint: fingerprint(&request.prompt, &request.params),
            params: request.params.clone(),
            texts: response.texts.clone(),
        };
        let mut f = self.file.lock().unwrap();
        f.write_all(&record.encode())
            .and_then(|_| f.flush())
            .map_err(|e| BackendError::Io(format!("{}: {e}", self.path.display())))?;
        Ok(response)
    }
}

/// Serves recorded responses by request fingerprint, in recorded order.
#[derive(Debug)]
pub struct ReplayBackend {
    records: Mutex<HashMap<u64, VecDeque<Vec<String>>>>,
}

impl ReplayBackend {
    pub fn from_records(records: impl IntoIterator<Item = ReplayRecord>) -> Self {
        let mut map: HashMap<u64, VecDeque<Vec<String>>> = HashMap::new();
        for r in records {
            map.entry(r.fingerprint).or_default().push_back(r.texts);
        }
        Self {
            records: Mutex::new(map),
        }
    }

    pub fn open(path: &Path) -> Result<Self> {
        Ok(Self::from_records(read_log(path)?))
    }
}

impl LlmBackend for ReplayBackend {
    fn complete(&self, request: &GenerationRequest) -> Result<GenerationResponse, BackendError> {
        let fp = fingerprint(&request.prompt, &request.params);
        let texts = self
            .records
            .lock()
            .unwrap()
            .get_mut(&fp)
            .and_then(VecDeque::pop_front)
            .ok_or(BackendError::CacheMiss { fingerprint: fp })?;
        Ok(GenerationResponse { texts, usage: None })
    }
}
