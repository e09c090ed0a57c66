//! Surface-text normalization shared by the KB, the parser and the encoder.

use alloc::string::String;
use unicode_normalization::UnicodeNormalization;

/// NFC-normalizes `raw`, trims it and collapses every internal whitespace run
/// to a single ASCII space. Casing is preserved.
pub fn normalize(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    let mut pending_space = false;
    for ch in raw.nfc() {
        if ch.is_whitespace() {
            pending_space = !out.is_empty();
        } else {
            if pending_space {
                out.push(' ');
                pending_space = false;
            }
            out.push(ch);
        }
    }
    out
}

/// Comparison key: [`normalize`] followed by lowercasing.
pub fn fold(raw: &str) -> String {
    normalize(raw).to_lowercase()
}
