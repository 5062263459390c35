use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use prefaudit_core::corpus::{load_dir, parse_jsonl, ContractRecord};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Marks an error as a usage or environment problem (exit code 2) rather
/// than a finding or validation failure (exit code 1).
#[derive(Debug)]
pub struct Usage(pub String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

/// Paths are taken as given; a relative path that does not exist is looked
/// up under the data root instead.
pub fn resolve(data_dir: &Path, path: &Path) -> PathBuf {
    if path.is_relative() && !path.exists() {
        let under = data_dir.join(path);
        if under.exists() {
            return under;
        }
    }
    path.to_path_buf()
}

pub fn read(data_dir: &Path, path: &Path) -> Result<String> {
    let p = resolve(data_dir, path);
    fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))
}

pub fn write(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

pub fn parse_lines<T: DeserializeOwned>(text: &str, what: &str) -> Result<Vec<T>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| serde_json::from_str(l).with_context(|| format!("{what} line {}", n + 1)))
        .collect()
}

pub fn to_lines<T: Serialize>(items: &[T]) -> Result<String> {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item)?);
        out.push('\n');
    }
    Ok(out)
}

/// Loads a directory of sources, a corpus JSONL file or a single `.sol` file.
pub fn load_corpus(data_dir: &Path, path: &Path) -> Result<Vec<ContractRecord>> {
    let p = resolve(data_dir, path);
    if p.is_dir() {
        return load_dir(&p).with_context(|| format!("loading {}", p.display()));
    }
    let text = fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
    match p.extension().and_then(|e| e.to_str()) {
        Some("jsonl") => parse_jsonl(&text).with_context(|| format!("parsing {}", p.display())),
        Some("sol") => {
            let name = p.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default();
            Ok(vec![ContractRecord::contract(p.display().to_string(), name, text)?])
        }
        _ => Err(usage(format!("{}: expected a directory, .jsonl or .sol file", p.display()))),
    }
}

#[derive(Serialize)]
struct CorpusLine<'a> {
    id: &'a str,
    filename: &'a str,
    source: &'a str,
    category: prefaudit_core::corpus::Category,
    origin: prefaudit_core::corpus::Origin,
}

/// Corpus JSONL in the same shape `load_corpus` reads.
pub fn corpus_lines(records: &[ContractRecord]) -> Result<String> {
    let lines: Vec<CorpusLine> = records
        .iter()
        .map(|r| CorpusLine { id: &r.id, filename: &r.filename, source: &r.source, category: r.category, origin: r.origin })
        .collect();
    to_lines(&lines)
}

/// Exit code for a failed command: 2 for usage, configuration and I/O
/// problems, 1 for everything else.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    let environmental = err.chain().any(|e| e.is::<Usage>() || e.is::<std::io::Error>());
    if environmental {
        2
    } else {
        1
    }
}
