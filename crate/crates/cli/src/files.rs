use std::fs;
use std::io::{BufReader, Write};
use std::path::Path;

use anyhow::{Context, Result};
use ontorag::ragstore::VectorStore;
use ontorag::subsume::SubsumptionDictionary;
use ontorag::Ontology;

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

/// Writes through a temporary file in the destination directory, then
/// renames it into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .with_context(|| format!("cannot create a temporary file in {}", dir.display()))?;
    tmp.write_all(contents)
        .and_then(|()| tmp.as_file().sync_all())
        .with_context(|| format!("cannot write {}", path.display()))?;
    tmp.persist(path)
        .with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

pub fn load_ontology(path: &Path) -> Result<Ontology> {
    let report = ontorag::parse::parse_ontology(&read_text(path)?)
        .with_context(|| format!("cannot parse ontology {}", path.display()))?;
    for w in &report.warnings {
        eprintln!("warning: {}:{}: {}", path.display(), w.line, w.message);
    }
    Ok(report.ontology)
}

pub fn load_dictionary(path: &Path) -> Result<SubsumptionDictionary> {
    SubsumptionDictionary::from_json(&read_text(path)?)
        .with_context(|| format!("cannot parse dictionary {}", path.display()))
}

pub fn load_store(path: &Path) -> Result<VectorStore> {
    let file = fs::File::open(path).with_context(|| format!("cannot read {}", path.display()))?;
    VectorStore::load(BufReader::new(file)).with_context(|| format!("cannot load store {}", path.display()))
}
