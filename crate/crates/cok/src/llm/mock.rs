use std::collections::{HashMap, VecDeque};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use cok_core::llm::{prompt_fingerprint, BackendError, GenerationRequest, GenerationResponse, LlmBackend};
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::kb_io::read_to_string;

type Queue = VecDeque<Vec<String>>;

/// Serves scripted completions. Responses registered for a specific prompt
/// take precedence over the global queue; both are consumed in order.
#[derive(Debug, Default)]
pub struct ScriptedBackend {
    global: Mutex<Queue>,
    keyed: Mutex<HashMap<u64, Queue>>,
    calls: AtomicUsize,
}

#[derive(Deserialize)]
struct ScriptLine {
    /// 16 hex digits, as printed by [`prompt_fingerprint`].
    prompt_fingerprint: Option<String>,
    text: Option<String>,
    texts: Option<Vec<String>>,
}

impl ScriptedBackend {
    pub fn new() -> Self {
        Self::default()
    }

    /// Queues one response (one text per sample) for any prompt.
    pub fn push<S: Into<String>>(&self, texts: impl IntoIterator<Item = S>) -> &Self {
        self.global
            .lock()
            .unwrap()
            .push_back(texts.into_iter().map(Into::into).collect());
        self
    }

    /// Queues one response for exactly this prompt.
    pub fn push_for<S: Into<String>>(&self, prompt: &str, texts: impl IntoIterator<Item = S>) -> &Self {
        self.push_for_fingerprint(prompt_fingerprint(prompt), texts)
    }

    pub fn push_for_fingerprint<S: Into<String>>(&self, fingerprint: u64, texts: impl IntoIterator<Item = S>) -> &Self {
        self.keyed
            .lock()
            .unwrap()
            .entry(fingerprint)
            .or_default()
            .push_back(texts.into_iter().map(Into::into).collect());
        self
    }

    /// Reads a JSONL script: one response per line with `text` or `texts`,
    /// and optionally `prompt_fingerprint` to bind it to one prompt.
    pub fn from_script(path: &Path) -> Result<Self> {
        let backend = Self::new();
        for (i, line) in read_to_string(path)?.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let rec: ScriptLine = serde_json::from_str(line).map_err(|e| Error::data(path, i + 1, e.to_string()))?;
            let texts = match (rec.text, rec.texts) {
                (Some(t), None) => vec![t],
                (None, Some(ts)) if !ts.is_empty() => ts,
                _ => return Err(Error::data(path, i + 1, "expected exactly one of `text` or `texts`")),
            };
            match rec.prompt_fingerprint {
                Some(h) => {
                    let fp = u64::from_str_radix(&h, 16)
                        .map_err(|e| Error::data(path, i + 1, format!("bad fingerprint {h:?}: {e}")))?;
                    backend.push_for_fingerprint(fp, texts);
                }
                None => {
                    backend.push(texts);
                }
            }
        }
        Ok(backend)
    }

    /// Number of `complete` calls so far, including failed ones.
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn remaining(&self) -> usize {
        self.global.lock().unwrap().len() + self.keyed.lock().unwrap().values().map(VecDeque::len).sum::<usize>()
    }
}

impl LlmBackend for ScriptedBackend {
    fn complete(&self, request: &GenerationRequest) -> Result<GenerationResponse, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        request.params.validate()?;
        let fingerprint = prompt_fingerprint(&request.prompt);
        let keyed = self.keyed.lock().unwrap().get_mut(&fingerprint).and_then(VecDeque::pop_front);
        let texts = keyed
            .or_else(|| self.global.lock().unwrap().pop_front())
            .ok_or(BackendError::ScriptExhausted { fingerprint })?;
        Ok(GenerationResponse { texts, usage: None })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use cok_core::llm::DecodingParams;

    fn req(prompt: &str) -> GenerationRequest {
        GenerationRequest {
            model: "m".into(),
            prompt: prompt.into(),
            params: DecodingParams::default(),
        }
    }

    #[test]
    fn global_queue_serves_any_prompt() {
        let b = ScriptedBackend::new();
        b.push(["A: …answer is (C)."]);
        assert_eq!(b.complete(&req("anything")).unwrap().texts, ["A: …answer is (C)."]);
        assert!(matches!(b.complete(&req("again")), Err(BackendError::ScriptExhausted { .. })));
        assert_eq!(b.calls(), 2);
    }

    #[test]
    fn keyed_responses_take_precedence() {
        let b = ScriptedBackend::new();
        b.push(["global"]).push_for("p1", ["one"]).push_for("p1", ["two"]);
        assert_eq!(b.complete(&req("p1")).unwrap().texts, ["one"]);
        assert_eq!(b.complete(&req("p2")).unwrap().texts, ["global"]);
        assert_eq!(b.complete(&req("p1")).unwrap().texts, ["two"]);
        assert_eq!(b.remaining(), 0);
    }

    #[test]
    fn rejects_greedy_multi_sample() {
        let b = ScriptedBackend::new();
        b.push(["x"]);
        let mut r = req("p");
        r.params.n_samples = 3;
        assert!(matches!(b.complete(&r), Err(BackendError::Config(_))));
    }

    #[test]
    fn script_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.jsonl");
        let fp = format!("{:016x}", prompt_fingerprint("bound"));
        std::fs::write(
            &p,
            format!("{{\"text\": \"a\"}}\n\n{{\"texts\": [\"b\", \"c\"]}}\n{{\"prompt_fingerprint\": \"{fp}\", \"text\": \"d\"}}\n"),
        )
        .unwrap();
        let b = ScriptedBackend::from_script(&p).unwrap();
        assert_eq!(b.complete(&req("bound")).unwrap().texts, ["d"]);
        assert_eq!(b.complete(&req("x")).unwrap().texts, ["a"]);
        assert_eq!(b.complete(&req("x")).unwrap().texts, ["b", "c"]);
        std::fs::write(&p, "{\"text\": \"a\", \"texts\": [\"b\"]}\n").unwrap();
        assert!(ScriptedBackend::from_script(&p).unwrap_err().to_string().contains(":1"));
    }
}
