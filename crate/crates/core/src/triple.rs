//! The `(subject, relation, object)` unit shared by knowledge and evidence.

use alloc::format;
use alloc::string::String;
use core::fmt;

use crate::text::{fold, normalize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum TripleError {
    #[error("triple {0} is empty after normalization")]
    EmptyField(Slot),
}

/// Position of a field inside a triple.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Slot {
    Subject,
    Relation,
    Object,
}

impl fmt::Display for Slot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Slot::Subject => "subject",
            Slot::Relation => "relation",
            Slot::Object => "object",
        })
    }
}

/// A normalized triple. Fields keep their original casing for rendering;
/// membership tests go through [`Triple::key`].
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Triple {
    pub subject: String,
    pub relation: String,
    pub object: String,
}

/// Case-folded form of a triple used for set membership and indexing.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TripleKey {
    pub subject: String,
    pub relation: String,
    pub object: String,
}

impl Triple {
    pub fn new(subject: &str, relation: &str, object: &str) -> Result<Self, TripleError> {
        let subject = normalize(subject);
        let relation = normalize(relation);
        let object = normalize(object);
        for (slot, field) in [
            (Slot::Subject, &subject),
            (Slot::Relation, &relation),
            (Slot::Object, &object),
        ] {
            if field.is_empty() {
                return Err(TripleError::EmptyField(slot));
            }
        }
        Ok(Self {
            subject,
            relation,
            object,
        })
    }

    pub fn field(&self, slot: Slot) -> &str {
        match slot {
            Slot::Subject => &self.subject,
            Slot::Relation => &self.relation,
            Slot::Object => &self.object,
        }
    }

    pub fn key(&self) -> TripleKey {
        TripleKey {
            subject: fold(&self.subject),
            relation: fold(&self.relation),
            object: fold(&self.object),
        }
    }

    /// `(s, r, o)` — the form used in prompts and for encoder similarity.
    pub fn render(&self) -> String {
        format!("({}, {}, {})", self.subject, self.relation, self.object)
    }
}

impl fmt::Display for Triple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.subject, self.relation, self.object)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalizes_fields() {
        let t = Triple::new(" system ", "last  letter", "m").unwrap();
        assert_eq!(t.render(), "(system, last letter, m)");
    }

    #[test]
    fn rejects_empty_fields() {
        assert_eq!(
            Triple::new("a", "  ", "b"),
            Err(TripleError::EmptyField(Slot::Relation))
        );
    }

    #[test]
    fn key_folds_case() {
        let a = Triple::new("Ferret", "isA", "animal").unwrap();
        let b = Triple::new(" ferret", "ISA", "Animal ").unwrap();
        assert_ne!(a, b);
        assert_eq!(a.key(), b.key());
    }
}
