//! Backend-neutral text generation interface.

use alloc::string::String;
use alloc::vec::Vec;
use core::hash::Hasher;

use fnv::FnvHasher;

/// Default completion budget.
pub const DEFAULT_MAX_TOKENS: u32 = 512;
/// Reasoning paths sampled per iteration under self-consistency.
pub const SELF_CONSISTENCY_SAMPLES: u32 = 10;
/// Sampling temperature used when self-consistency is switched on.
pub const SELF_CONSISTENCY_TEMPERATURE: f64 = 0.7;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct DecodingParams {
    pub temperature: f64,
    pub max_tokens: u32,
    pub n_samples: u32,
}

impl Default for DecodingParams {
    /// Greedy decoding: temperature 0, one sample, 512 tokens.
    fn default() -> Self {
        Self {
            temperature: 0.0,
            max_tokens: DEFAULT_MAX_TOKENS,
            n_samples: 1,
        }
    }
}

impl DecodingParams {
    pub fn self_consistency() -> Self {
        Self {
            temperature: SELF_CONSISTENCY_TEMPERATURE,
            n_samples: SELF_CONSISTENCY_SAMPLES,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(BackendError::Config("temperature must be a non-negative number".into()));
        }
        if self.max_tokens == 0 || self.n_samples == 0 {
            return Err(BackendError::Config("max_tokens and n_samples must be positive".into()));
        }
        if self.n_samples > 1 && self.temperature == 0.0 {
            return Err(BackendError::Config(
                "sampling more than one completion requires temperature > 0".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GenerationRequest {
    pub model: String,
    pub prompt: String,
    pub params: DecodingParams,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GenerationResponse {
    pub texts: Vec<String>,
    pub usage: Option<Usage>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BackendError {
    #[error("transport failed after {} attempt(s): {}", attempts.len(), attempts.join("; "))]
    Transport { attempts: Vec<String> },
    #[error("scripted backend has no response left for prompt {fingerprint:016x}")]
    ScriptExhausted { fingerprint: u64 },
    #[error("replay log has no record for fingerprint {fingerprint:016x}")]
    CacheMiss { fingerprint: u64 },
    #[error("invalid request: {0}")]
    Config(String),
    #[error("malformed backend response: {0}")]
    Protocol(String),
    #[error("i/o: {0}")]
    Io(String),
}

/// A completion service. Implementations must be safe to call from several
/// workers at once.
pub trait LlmBackend: Send + Sync {
    fn complete(&self, request: &GenerationRequest) -> Result<GenerationResponse, BackendError>;
}

impl<B: LlmBackend + ?Sized> LlmBackend for &B {
    fn complete(&self, request: &GenerationRequest) -> Result<GenerationResponse, BackendError> {
        (**self).complete(request)
    }
}

impl<B: LlmBackend + ?Sized> LlmBackend for alloc::boxed::Box<B> {
    fn complete(&self, request: &GenerationRequest) -> Result<GenerationResponse, BackendError> {
        (**self).complete(request)
    }
}

impl<B: LlmBackend + ?Sized> LlmBackend for alloc::sync::Arc<B> {
    fn complete(&self, request: &GenerationRequest) -> Result<GenerationResponse, BackendError> {
        (**self).complete(request)
    }
}

/// Stable 64-bit FNV-1a hash of the prompt bytes.
pub fn prompt_fingerprint(prompt: &str) -> u64 {
    let mut h = FnvHasher::default();
    h.write(prompt.as_bytes());
    h.finish()
}

/// Stable hash of the prompt together with its decoding parameters; keys
/// record/replay logs.
pub fn fingerprint(prompt: &str, params: &DecodingParams) -> u64 {
    let mut h = FnvHasher::default();
    h.write(prompt.as_bytes());
    h.write_u8(0xff);
    h.write(&params.temperature.to_bits().to_le_bytes());
    h.write(&params.max_tokens.to_le_bytes());
    h.write(&params.n_samples.to_le_bytes());
    h.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn greedy_defaults() {
        let p = DecodingParams::default();
        assert_eq!((p.temperature, p.max_tokens, p.n_samples), (0.0, 512, 1));
        assert!(p.validate().is_ok());
        assert_eq!(DecodingParams::self_consistency().n_samples, 10);
        assert!(DecodingParams::self_consistency().validate().is_ok());
    }

    #[test]
    fn sampling_needs_temperature() {
        let p = DecodingParams { n_samples: 3, ..Default::default() };
        assert!(matches!(p.validate(), Err(BackendError::Config(_))));
    }

    #[test]
    fn fingerprints_are_stable() {
        // FNV-1a 64 of the empty string is the offset basis
        assert_eq!(prompt_fingerprint(""), 0xcbf2_9ce4_8422_2325);
        let p = DecodingParams::default();
        assert_eq!(fingerprint("Q: x\nA:", &p), fingerprint("Q: x\nA:", &p));
        assert_ne!(fingerprint("Q: x\nA:", &p), fingerprint("Q: y\nA:", &p));
        assert_ne!(
            fingerprint("Q", &p),
            fingerprint("Q", &DecodingParams { max_tokens: 256, ..p.clone() })
        );
    }
}
