//! Knowledge-base files: TSV triples, alias tables, TOML manifests and
//! embedding checkpoints.

use std::fs;
use std::path::{Path, PathBuf};

use cok_core::embed::{decode_checkpoint, encode_checkpoint};
use cok_core::kb::{AliasTable, Domain, KbBuilder, KnowledgeBase};
use cok_core::EmbeddingModel;
use serde::Deserialize;

use crate::error::{Error, Result};

pub(crate) fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// The built-in aliases plus, if given, a two-column `alias<TAB>canonical` file.
pub fn load_aliases(path: Option<&Path>) -> Result<AliasTable> {
    let mut table = AliasTable::with_defaults();
    if let Some(p) = path {
        table.extend_from_tsv(&read_to_string(p)?, &p.display().to_string())?;
    }
    Ok(table)
}

/// Loads TSV files into one knowledge base. Each file's domain comes from
/// its `# domain:` directive, if any.
pub fn load_kb<P: AsRef<Path>>(paths: &[P], aliases: Option<&Path>) -> Result<KnowledgeBase> {
    let mut builder = KbBuilder::new(load_aliases(aliases)?);
    for p in paths {
        let p = p.as_ref();
        builder.add_tsv(&read_to_string(p)?, &p.display().to_string(), None)?;
    }
    Ok(builder.build())
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KbManifest {
    pub aliases: Option<PathBuf>,
    #[serde(rename = "source", default)]
    pub sources: Vec<KbSource>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KbSource {
    pub path: PathBuf,
    pub domain: Option<String>,
}

impl KbManifest {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = read_to_string(path)?;
        let mut m: KbManifest = toml::from_str(&text).map_err(|e| manifest_error(path, &e))?;
        let base = path.parent().unwrap_or(Path::new(""));
        if let Some(a) = &mut m.aliases {
            *a = base.join(&*a);
        }
        for s in &mut m.sources {
            s.path = base.join(&s.path);
        }
        Ok(m)
    }

    pub fn load(&self) -> Result<KnowledgeBase> {
        let mut builder = KbBuilder::new(load_aliases(self.aliases.as_deref())?);
        for s in &self.sources {
            let domain = s.domain.as_deref().map(str::parse::<Domain>).transpose()?;
            builder.add_tsv(&read_to_string(&s.path)?, &s.path.display().to_string(), domain)?;
        }
        Ok(builder.build())
    }
}

pub(crate) fn manifest_error(path: &Path, e: &toml::de::Error) -> Error {
    let line = e
        .span()
        .and_then(|s| fs::read_to_string(path).ok().map(|t| t[..s.start].lines().count().max(1)))
        .unwrap_or(0);
    Error::data(path, line, e.message().to_string())
}

/// Treats a `.toml` path as a manifest and anything else as a TSV file.
pub fn load_kb_any<P: AsRef<Path>>(paths: &[P], aliases: Option<&Path>) -> Result<KnowledgeBase> {
    match paths {
        [one] if one.as_ref().extension().is_some_and(|e| e == "toml") => {
            let mut m = KbManifest::from_path(one.as_ref())?;
            if aliases.is_some() {
                m.aliases = aliases.map(Path::to_path_buf);
            }
            m.load()
        }
        _ => load_kb(paths, aliases),
    }
}

pub fn save_kb(kb: &KnowledgeBase, path: &Path) -> Result<()> {
    write_file(path, kb.to_tsv())
}

pub fn save_model(model: &EmbeddingModel, path: &Path) -> Result<()> {
    write_file(path, encode_checkpoint(model))
}

pub fn load_model(path: &Path) -> Result<EmbeddingModel> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes).map_err(|source| Error::Checkpoint {
        path: path.to_path_buf(),
        source,
    })
}
