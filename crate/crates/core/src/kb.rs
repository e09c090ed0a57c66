//! In-memory triple knowledge base: exact membership, correction lookup and
//! brute-force similarity retrieval.
//!
//! Bulk data arrives as TSV text (`subject\trelation\tobject`, one triple per
//! line, `#` comments). Reading files is the caller's job; this module only
//! sees strings.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::encoder::{Embedding, TextEncoder};
use crate::text::{fold, normalize};
use crate::triple::{Triple, TripleError, TripleKey};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum KbError {
    #[error("{source_name}:{line}: {message}")]
    Parse {
        source_name: String,
        line: usize,
        message: String,
    },
    #[error("alias table: {0}")]
    Alias(String),
    #[error("unknown knowledge base domain `{0}`")]
    UnknownDomain(String),
}

/// Domain tag carried by each KB source.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Domain {
    Dictionary,
    Commonsense,
    Causality,
    Entity,
    Event,
    Script,
    /// The source declared no domain.
    #[default]
    Unspecified,
}

impl Domain {
    pub const ALL: [Domain; 7] = [
        Domain::Dictionary,
        Domain::Commonsense,
        Domain::Causality,
        Domain::Entity,
        Domain::Event,
        Domain::Script,
        Domain::Unspecified,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Domain::Dictionary => "dictionary",
            Domain::Commonsense => "commonsense",
            Domain::Causality => "causality",
            Domain::Entity => "entity",
            Domain::Event => "event",
            Domain::Script => "script",
            Domain::Unspecified => "unspecified",
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Domain {
    type Err = KbError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = fold(s);
        Domain::ALL
            .into_iter()
            .find(|d| d.as_str() == key)
            .ok_or_else(|| KbError::UnknownDomain(s.to_string()))
    }
}

/// Relation alias table: folded alias → canonical relation surface.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct AliasTable {
    map: BTreeMap<String, String>,
}

impl AliasTable {
    pub fn empty() -> Self {
        Self::default()
    }

    /// The shipped default: the letter-concatenation prompts spell the
    /// relation "last latter" while the dictionary KB uses "last letter".
    pub fn with_defaults() -> Self {
        let mut t = Self::empty();
        t.insert("last latter", "last letter")
            .expect("default alias table is consistent");
        t
    }

    pub fn insert(&mut self, alias: &str, canonical: &str) -> Result<(), KbError> {
        let alias_key = fold(alias);
        let canonical = normalize(canonical);
        let canonical_key = fold(&canonical);
        if alias_key.is_empty() || canonical_key.is_empty() {
            return Err(KbError::Alias("empty alias or canonical relation".into()));
        }
        if alias_key == canonical_key {
            return Ok(());
        }
        if self.map.contains_key(&canonical_key) {
            return Err(KbError::Alias(alloc::format!(
                "canonical relation `{canonical}` is itself an alias"
            )));
        }
        if self.map.values().any(|c| fold(c) == alias_key) {
            return Err(KbError::Alias(alloc::format!(
                "alias `{alias}` is already used as a canonical relation"
            )));
        }
        self.map.insert(alias_key, canonical);
        Ok(())
    }

    /// Parses `alias\tcanonical` lines on top of the current table.
    pub fn extend_from_tsv(&mut self, text: &str, source_name: &str) -> Result<(), KbError> {
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<String> = line.split('\t').map(unescape_field).collect();
            if fields.len() != 2 {
                return Err(KbError::Parse {
                    source_name: source_name.to_string(),
                    line: idx + 1,
                    message: alloc::format!("expected 2 fields, found {}", fields.len()),
                });
            }
            self.insert(&fields[0], &fields[1]).map_err(|e| KbError::Parse {
                source_name: source_name.to_string(),
                line: idx + 1,
                message: e.to_string(),
            })?;
        }
        Ok(())
    }

    /// Canonical surface for `relation`, or `None` if it is not an alias.
    pub fn canonical(&self, relation: &str) -> Option<&str> {
        self.map.get(&fold(relation)).map(String::as_str)
    }

    pub fn resolve(&self, relation: &str) -> String {
        match self.canonical(relation) {
            Some(c) => c.to_string(),
            None => normalize(relation),
        }
    }

    pub fn resolve_triple(&self, t: &Triple) -> Triple {
        match self.canonical(&t.relation) {
            Some(c) => Triple {
                subject: t.subject.clone(),
                relation: c.to_string(),
                object: t.object.clone(),
            },
            None => t.clone(),
        }
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.map.iter().map(|(a, c)| (a.as_str(), c.as_str()))
    }
}

pub fn unescape_field(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    let mut chars = raw.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('t') => out.push('\t'),
            Some('n') => out.push('\n'),
            Some('\\') => out.push('\\'),
            Some(other) => {
                out.push('\\');
                out.push(other);
            }
            None => out.push('\\'),
        }
    }
    out
}

pub fn escape_field(field: &str) -> String {
    let mut out = String::with_capacity(field.len());
    for c in field.chars() {
        match c {
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\\' => out.push_str("\\\\"),
            _ => out.push(c),
        }
    }
    out
}

/// Reads a `# domain: <tag>` directive from a comment line.
fn domain_directive(line: &str) -> Option<&str> {
    let rest = line.strip_prefix('#')?.trim_start();
    let rest = rest.strip_prefix("domain:")?;
    Some(rest.trim())
}

/// Parses one TSV data line into a triple (before alias resolution).
pub fn parse_tsv_line(line: &str) -> Result<Triple, String> {
    let fields: Vec<String> = line.split('\t').map(unescape_field).collect();
    if fields.len() != 3 {
        return Err(alloc::format!("expected 3 fields, found {}", fields.len()));
    }
    Triple::new(&fields[0], &fields[1], &fields[2]).map_err(|e| match e {
        TripleError::EmptyField(slot) => alloc::format!("empty {slot} after normalization"),
    })
}

/// Accumulates triples from any number of sources, deduplicating after
/// normalization and alias resolution.
#[derive(Debug, Clone, Default)]
pub struct KbBuilder {
    aliases: AliasTable,
    triples: Vec<Triple>,
    domains: Vec<Domain>,
    keys: BTreeMap<TripleKey, usize>,
}

impl KbBuilder {
    pub fn new(aliases: AliasTable) -> Self {
        Self {
            aliases,
            ..Self::default()
        }
    }

    /// Returns `true` if the triple was new.
    pub fn add(&mut self, triple: &Triple, domain: Domain) -> bool {
        let t = self.aliases.resolve_triple(triple);
        let key = t.key();
        if self.keys.contains_key(&key) {
            return false;
        }
        self.keys.insert(key, self.triples.len());
        self.triples.push(t);
        self.domains.push(domain);
        true
    }

    /// Adds every line of a TSV source. A `# domain:` directive in the file
    /// applies when `domain` is `None`. Returns the number of data lines read.
    pub fn add_tsv(
        &mut self,
        text: &str,
        source_name: &str,
        domain: Option<Domain>,
    ) -> Result<usize, KbError> {
        let mut current = domain.unwrap_or_default();
        let mut lines = 0;
        for (idx, raw) in text.split('\n').enumerate() {
            let line = raw.strip_suffix('\r').unwrap_or(raw);
            if line.starts_with('#') {
                if domain.is_none() {
                    if let Some(tag) = domain_directive(line) {
                        current = tag.parse().map_err(|e: KbError| KbError::Parse {
                            source_name: source_name.to_string(),
                            line: idx + 1,
                            message: e.to_string(),
                        })?;
                    }
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let triple = parse_tsv_line(line).map_err(|message| KbError::Parse {
                source_name: source_name.to_string(),
                line: idx + 1,
                message,
            })?;
            self.add(&triple, current);
            lines += 1;
        }
        Ok(lines)
    }

    pub fn build(self) -> KnowledgeBase {
        let mut index_sr: BTreeMap<(String, String), Vec<usize>> = BTreeMap::new();
        let mut index_so: BTreeMap<(String, String), Vec<usize>> = BTreeMap::new();
        let mut index_ro: BTreeMap<(String, String), Vec<usize>> = BTreeMap::new();
        let mut index_s: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (key, &id) in &self.keys {
            index_sr
                .entry((key.subject.clone(), key.relation.clone()))
                .or_default()
                .push(id);
            index_so
                .entry((key.subject.clone(), key.object.clone()))
                .or_default()
                .push(id);
            index_ro
                .entry((key.relation.clone(), key.object.clone()))
                .or_default()
                .push(id);
            index_s.entry(key.subject.clone()).or_default().push(id);
        }
        KnowledgeBase {
            aliases: self.aliases,
            triples: self.triples,
            domains: self.domains,
            keys: self.keys,
            index_sr,
            index_so,
            index_ro,
            index_s,
        }
    }
}

/// An immutable, indexed set of triples.
#[derive(Debug, Clone, Default)]
pub struct KnowledgeBase {
    aliases: AliasTable,
    triples: Vec<Triple>,
    domains: Vec<Domain>,
    keys: BTreeMap<TripleKey, usize>,
    index_sr: BTreeMap<(String, String), Vec<usize>>,
    index_so: BTreeMap<(String, String), Vec<usize>>,
    index_ro: BTreeMap<(String, String), Vec<usize>>,
    index_s: BTreeMap<String, Vec<usize>>,
}

impl KnowledgeBase {
    pub fn builder(aliases: AliasTable) -> KbBuilder {
        KbBuilder::new(aliases)
    }

    pub fn from_triples<'a>(
        triples: impl IntoIterator<Item = &'a Triple>,
        aliases: AliasTable,
    ) -> Self {
        let mut b = KbBuilder::new(aliases);
        for t in triples {
            b.add(t, Domain::Unspecified);
        }
        b.build()
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    /// Triples in first-seen order, with canonical relations.
    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn aliases(&self) -> &AliasTable {
        &self.aliases
    }

    pub fn domain(&self, id: usize) -> Domain {
        self.domains[id]
    }

    pub fn domain_of(&self, t: &Triple) -> Option<Domain> {
        self.id_of(t).map(|id| self.domains[id])
    }

    pub fn domain_counts(&self) -> BTreeMap<Domain, usize> {
        let mut counts = BTreeMap::new();
        for d in &self.domains {
            *counts.entry(*d).or_insert(0) += 1;
        }
        counts
    }

    /// Applies the alias table to the relation of `t`.
    pub fn resolve(&self, t: &Triple) -> Triple {
        self.aliases.resolve_triple(t)
    }

    pub(crate) fn id_of(&self, t: &Triple) -> Option<usize> {
        self.keys.get(&self.resolve(t).key()).copied()
    }

    /// Exact membership of the normalized, alias-resolved triple.
    pub fn contains(&self, t: &Triple) -> bool {
        self.id_of(t).is_some()
    }

    pub fn entities(&self) -> BTreeSet<&str> {
        let mut seen = BTreeSet::new();
        let mut out = BTreeSet::new();
        for t in &self.triples {
            for e in [&t.subject, &t.object] {
                if seen.insert(fold(e)) {
                    out.insert(e.as_str());
                }
            }
        }
        out
    }

    pub fn objects_for(&self, subject: &str, relation: &str) -> Vec<&Triple> {
        let key = (fold(subject), fold(&self.aliases.resolve(relation)));
        self.lookup(self.index_sr.get(&key))
    }

    pub fn relations_for(&self, subject: &str, object: &str) -> Vec<&Triple> {
        self.lookup(self.index_so.get(&(fold(subject), fold(object))))
    }

    pub fn subjects_for(&self, relation: &str, object: &str) -> Vec<&Triple> {
        let key = (fold(&self.aliases.resolve(relation)), fold(object));
        self.lookup(self.index_ro.get(&key))
    }

    pub fn with_subject(&self, subject: &str) -> Vec<&Triple> {
        self.lookup(self.index_s.get(&fold(subject)))
    }

    fn lookup(&self, ids: Option<&Vec<usize>>) -> Vec<&Triple> {
        ids.map(|ids| ids.iter().map(|&i| &self.triples[i]).collect())
            .unwrap_or_default()
    }

    /// Up to `k` KB triples that could replace `t`, searched tier by tier:
    /// same (subject, relation), same (subject, object), same
    /// (relation, object), then anything with the same subject. Within a tier
    /// candidates are ranked by encoder similarity to `t`. `t` itself is
    /// never returned.
    pub fn find_corrections<E: TextEncoder + ?Sized>(
        &self,
        t: &Triple,
        k: usize,
        encoder: &E,
    ) -> Vec<Triple> {
        if k == 0 {
            return Vec::new();
        }
        let query = self.resolve(t);
        let qk = query.key();
        let tiers = [
            self.index_sr.get(&(qk.subject.clone(), qk.relation.clone())),
            self.index_so.get(&(qk.subject.clone(), qk.object.clone())),
            self.index_ro.get(&(qk.relation.clone(), qk.object.clone())),
            self.index_s.get(&qk.subject),
        ];
        let rendered_query = encoder.encode(&query.render());
        let self_id = self.keys.get(&qk).copied();
        let mut taken: BTreeSet<usize> = BTreeSet::new();
        let mut out = Vec::new();
        for ids in tiers.into_iter().flatten() {
            let mut ranked: Vec<(f64, usize)> = ids
                .iter()
                .copied()
                .filter(|id| Some(*id) != self_id && !taken.contains(id))
                .map(|id| {
                    let sim = encoder.encode(&self.triples[id].render()).dot(&rendered_query);
                    (sim, id)
                })
                .collect();
            ranked.sort_by(|a, b| {
                b.0.total_cmp(&a.0)
                    .then_with(|| self.triples[a.1].key().cmp(&self.triples[b.1].key()))
            });
            for (_, id) in ranked {
                if out.len() == k {
                    return out;
                }
                taken.insert(id);
                out.push(self.triples[id].clone());
            }
        }
        out
    }

    /// Encodes every triple once so repeated searches only pay for the query.
    pub fn embed<E: TextEncoder + ?Sized>(&self, encoder: &E) -> TripleEmbeddings<'_> {
        TripleEmbeddings {
            kb: self,
            vectors: self
                .triples
                .iter()
                .map(|t| encoder.encode(&t.render()))
                .collect(),
        }
    }

    /// Exact top-`k` triples by inner product with `encode(text)`.
    pub fn retrieve_similar<E: TextEncoder + ?Sized>(
        &self,
        text: &str,
        k: usize,
        encoder: &E,
    ) -> Vec<(Triple, f64)> {
        self.embed(encoder).search(&encoder.encode(text), k)
    }

    /// TSV rendering that [`KbBuilder::add_tsv`] reads back to the same set.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for t in &self.triples {
            out.push_str(&escape_field(&t.subject));
            out.push('\t');
            out.push_str(&escape_field(&t.relation));
            out.push('\t');
            out.push_str(&escape_field(&t.object));
            out.push('\n');
        }
        out
    }
}

/// Precomputed triple encodings for brute-force inner-product search.
pub struct TripleEmbeddings<'kb> {
    kb: &'kb KnowledgeBase,
    vectors: Vec<Embedding>,
}

impl TripleEmbeddings<'_> {
    /// Descending score; equal scores fall back to folded triple order.
    pub fn search(&self, query: &Embedding, k: usize) -> Vec<(Triple, f64)> {
        let mut scored: Vec<(f64, usize)> = self
            .vectors
            .iter()
            .enumerate()
            .map(|(i, v)| (v.dot(query), i))
            .collect();
        let triples = &self.kb.triples;
        scored.sort_by(|a, b| {
            b.0.total_cmp(&a.0)
                .then_with(|| triples[a.1].key().cmp(&triples[b.1].key()))
        });
        scored
            .into_iter()
            .take(k)
            .map(|(s, i)| (triples[i].clone(), s))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::HashedNgramEncoder;
    use alloc::vec;

    fn t(s: &str, r: &str, o: &str) -> Triple {
        Triple::new(s, r, o).unwrap()
    }

    fn kb(text: &str) -> KnowledgeBase {
        let mut b = KbBuilder::new(AliasTable::with_defaults());
        b.add_tsv(text, "test.tsv", None).unwrap();
        b.build()
    }

    #[test]
    fn parses_dictionary_line() {
        let kb = kb("system\tlast letter\tm\n");
        assert_eq!(kb.triples(), &[t("system", "last letter", "m")]);
    }

    #[test]
    fn empty_source() {
        let kb = kb("");
        assert!(kb.is_empty());
        assert!(kb.with_subject("x").is_empty());
        assert!(kb.objects_for("x", "y").is_empty());
    }

    #[test]
    fn duplicates_collapse() {
        let kb = kb("a\tb\tc\na\tb\tc\n A \tB\tc\n");
        assert_eq!(kb.len(), 1);
    }

    #[test]
    fn aliases_resolve_before_indexing() {
        let kb = kb("Elon\tlast latter\tn\nElon\tlast letter\tn\n");
        assert_eq!(kb.len(), 1);
        assert_eq!(kb.triples()[0].relation, "last letter");
        assert!(kb.contains(&t("elon", "LAST LATTER", "N")));
    }

    #[test]
    fn malformed_line_reports_position() {
        let mut b = KbBuilder::new(AliasTable::empty());
        let err = b.add_tsv("# c\na\tb\tc\na\tb\n", "k.tsv", None).unwrap_err();
        assert_eq!(
            err,
            KbError::Parse {
                source_name: "k.tsv".into(),
                line: 3,
                message: "expected 3 fields, found 2".into()
            }
        );
        let err = b.add_tsv("a\t \tc\n", "k.tsv", None).unwrap_err();
        assert!(matches!(err, KbError::Parse { line: 1, .. }));
    }

    #[test]
    fn domain_directive_and_override() {
        let mut b = KbBuilder::new(AliasTable::empty());
        b.add_tsv("# domain: commonsense\nferret\tisA\tanimal\n", "a", None)
            .unwrap();
        b.add_tsv("# domain: commonsense\nsystem\tlast letter\tm\n", "b", Some(Domain::Dictionary))
            .unwrap();
        let kb = b.build();
        assert_eq!(kb.domain_of(&t("ferret", "isA", "animal")), Some(Domain::Commonsense));
        assert_eq!(kb.domain_of(&t("system", "last letter", "m")), Some(Domain::Dictionary));
    }

    #[test]
    fn contains_normalizes() {
        let kb = kb("ferret\tisA\tanimal\n");
        assert!(kb.contains(&t("ferret", "isA", "animal")));
        assert!(kb.contains(&t(" Ferret ", "isA", "animal")));
        assert!(!kb.contains(&t("ferret", "isA", "plant")));
    }

    #[test]
    fn alias_table_rejects_chains() {
        let mut a = AliasTable::with_defaults();
        assert!(a.insert("last letter", "final letter").is_err());
        assert!(a.insert("final letter", "last latter").is_err());
        assert!(a.insert("lastletter", "last letter").is_ok());
        let mut b = AliasTable::empty();
        b.extend_from_tsv("# aliases\nis a\tisA\n", "aliases.tsv").unwrap();
        assert_eq!(b.canonical("IS A"), Some("isA"));
        assert!(b.extend_from_tsv("x\ty\tz\n", "aliases.tsv").is_err());
    }

    #[test]
    fn corrections_follow_tiers() {
        let kb = kb("Derrick White\tisA\tbasketball player\n\
                     Derrick White\tplays for\tCeltics\n\
                     Jayson Tatum\tisA\tbasketball player\n");
        let q = t("Derrick White", "isA", "hockey player");
        let enc = HashedNgramEncoder;
        assert_eq!(
            kb.find_corrections(&q, 1, &enc),
            vec![t("Derrick White", "isA", "basketball player")]
        );
        // tier 4 fills in after tier 1
        assert_eq!(
            kb.find_corrections(&q, 5, &enc),
            vec![
                t("Derrick White", "isA", "basketball player"),
                t("Derrick White", "plays for", "Celtics"),
            ]
        );
        assert!(kb
            .find_corrections(&t("Zqxv", "eats", "rocks"), 3, &enc)
            .is_empty());
    }

    #[test]
    fn corrections_skip_the_query_itself() {
        let kb = kb("a\tr\tb\na\tr\tc\n");
        let got = kb.find_corrections(&t("a", "r", "b"), 5, &HashedNgramEncoder);
        assert_eq!(got, vec![t("a", "r", "c")]);
    }

    #[test]
    fn corrections_pick_most_similar_within_tier() {
        let kb = kb("Vishal\tlast letter\tl\n\
                     Vishal\tlast letter\tlx\n\
                     Vishal\tlast letter\tiota\n");
        let enc = HashedNgramEncoder;
        let q = t("Vishal", "last latter", "i");
        let got = kb.find_corrections(&q, 1, &enc);
        // oracle: score every tier-1 candidate directly
        let qv = enc.encode(&kb.resolve(&q).render());
        let best = kb
            .triples()
            .iter()
            .max_by(|a, b| {
                enc.encode(&a.render())
                    .dot(&qv)
                    .total_cmp(&enc.encode(&b.render()).dot(&qv))
            })
            .unwrap();
        assert_eq!(got, vec![best.clone()]);
    }

    #[test]
    fn retrieval_self_match_ranks_first() {
        let kb = kb("ferret\tisA\tanimal\ncountry\tisA\tplace\nferret\tpopular\tBritain\n");
        let enc = HashedNgramEncoder;
        let hits = kb.retrieve_similar("(country, isA, place)", 1, &enc);
        assert_eq!(hits[0].0, t("country", "isA", "place"));
        assert!((hits[0].1 - 1.0).abs() < 1e-12);
        assert_eq!(kb.retrieve_similar("ferret", 3, &enc).len(), 3);
    }

    #[test]
    fn tsv_round_trip_keeps_escapes() {
        let kb1 = kb("a\\tb\tr\to\\\\x\n");
        let kb2 = kb(&kb1.to_tsv());
        assert_eq!(kb1.triples(), kb2.triples());
    }
}
