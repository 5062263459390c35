use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{check_unique_ids, tokenize, Category, ContractRecord, CorpusError, Origin};

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRecord {
    id: String,
    filename: String,
    source: String,
    category: Category,
    #[serde(default)]
    origin: Origin,
}

/// Parses a corpus in JSONL form, one `{id, filename, source, category}`
/// object per line (`origin` optional). Blank lines are skipped.
pub fn parse_jsonl(text: &str) -> Result<Vec<ContractRecord>, CorpusError> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawRecord = serde_json::from_str(line).map_err(|source| CorpusError::Jsonl {
            line: n + 1,
            source,
        })?;
        out.push(ContractRecord::new(
            raw.id,
            raw.filename,
            raw.source,
            raw.origin,
            raw.category,
        )?);
    }
    check_unique_ids(&out)?;
    Ok(out)
}

pub fn load_jsonl(path: &Path) -> Result<Vec<ContractRecord>, CorpusError> {
    let text = fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_jsonl(&text)
}

fn collect_files(dir: &Path, out: &mut Vec<PathBuf>) -> Result<(), CorpusError> {
    let io_err = |source| CorpusError::Io {
        path: dir.display().to_string(),
        source,
    };
    for entry in fs::read_dir(dir).map_err(io_err)? {
        let path = entry.map_err(io_err)?.path();
        if path.is_dir() {
            collect_files(&path, out)?;
        } else if matches!(path.extension().and_then(|e| e.to_str()), Some("sol" | "txt")) {
            out.push(path);
        }
    }
    Ok(())
}

/// Loads every `.sol` (contract) and `.txt` (English text) file below `dir`.
///
/// Record ids are the `/`-separated paths relative to `dir`; files are read
/// in sorted path order. Empty files are skipped.
pub fn load_dir(dir: &Path) -> Result<Vec<ContractRecord>, CorpusError> {
    let mut files = Vec::new();
    collect_files(dir, &mut files)?;
    files.sort();
    let mut out = Vec::new();
    for path in files {
        let source = fs::read_to_string(&path).map_err(|source| CorpusError::Io {
            path: path.display().to_string(),
            source,
        })?;
        if source.trim().is_empty() {
            continue;
        }
        let rel = path.strip_prefix(dir).unwrap_or(&path);
        let id = rel
            .components()
            .map(|c| c.as_os_str().to_string_lossy())
            .collect::<Vec<_>>()
            .join("/");
        let filename = path
            .file_name()
            .map(|f| f.to_string_lossy().into_owned())
            .unwrap_or_default();
        let category = if path.extension().is_some_and(|e| e == "sol") {
            Category::Contract
        } else {
            Category::English
        };
        out.push(ContractRecord::new(id, filename, source, Origin::Github, category)?);
    }
    Ok(out)
}

/// Full-scale corpus sizes the desk-scale manifests are documented against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceTargets {
    pub contract_instances: u64,
    pub contract_tokens: u64,
    pub general_instances: u64,
    pub general_tokens: u64,
}

impl Default for ReferenceTargets {
    fn default() -> Self {
        ReferenceTargets {
            contract_instances: 186_397,
            contract_tokens: 501_620_000,
            general_instances: 100_000,
            general_tokens: 118_940_000,
        }
    }
}

/// Per-category record and token counts of a corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub counts: BTreeMap<Category, u64>,
    pub token_totals: BTreeMap<Category, u64>,
    pub dedup_threshold: f64,
    pub reference: ReferenceTargets,
}

impl CorpusManifest {
    pub fn from_records(records: &[ContractRecord], dedup_threshold: f64) -> Result<Self, CorpusError> {
        if !(0.0..=1.0).contains(&dedup_threshold) {
            return Err(CorpusError::BadThreshold(dedup_threshold));
        }
        let mut counts: BTreeMap<Category, u64> = Category::ALL.iter().map(|&c| (c, 0)).collect();
        let mut token_totals = counts.clone();
        for r in records {
            *counts.entry(r.category).or_default() += 1;
            *token_totals.entry(r.category).or_default() += tokenize(&r.source).len() as u64;
        }
        Ok(CorpusManifest {
            counts,
            token_totals,
            dedup_threshold,
            reference: ReferenceTargets::default(),
        })
    }

    pub fn total_records(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn total_tokens(&self) -> u64 {
        self.token_totals.values().sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_jsonl_records() {
        let text = r#"{"id":"a","filename":"A.sol","source":"uint a;","category":"contract"}

{"id":"b","filename":"n.txt","source":"two plus two","category":"math","origin":"blog"}
"#;
        let recs = parse_jsonl(text).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[1].category, Category::Math);
        assert_eq!(recs[1].origin, Origin::Blog);
        assert_eq!(recs[0].origin, Origin::Synthetic);
    }

    #[test]
    fn parse_jsonl_reports_line() {
        let text = "{\"id\":\"a\",\"filename\":\"A.sol\",\"source\":\"x\",\"category\":\"contract\"}\n{bad";
        match parse_jsonl(text) {
            Err(CorpusError::Jsonl { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        let dup = "{\"id\":\"a\",\"filename\":\"A.sol\",\"source\":\"x\",\"category\":\"contract\"}\n\
                   {\"id\":\"a\",\"filename\":\"B.sol\",\"source\":\"y\",\"category\":\"contract\"}";
        assert!(matches!(parse_jsonl(dup), Err(CorpusError::DuplicateId(_))));
    }

    #[test]
    fn load_directory() {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir(dir.path().join("sub")).unwrap();
        fs::write(dir.path().join("sub/Token.sol"), "contract T { uint x; }").unwrap();
        fs::write(dir.path().join("notes.txt"), "plain words here").unwrap();
        fs::write(dir.path().join("empty.sol"), "  ").unwrap();
        fs::write(dir.path().join("skip.md"), "ignored").unwrap();
        let recs = load_dir(dir.path()).unwrap();
        let ids: Vec<_> = recs.iter().map(|r| r.id.as_str()).collect();
        assert_eq!(ids, ["notes.txt", "sub/Token.sol"]);
        assert_eq!(recs[1].filename, "Token.sol");
        assert_eq!(recs[1].category, Category::Contract);
        assert_eq!(recs[0].category, Category::English);
    }

    #[test]
    fn manifest_counts() {
        let recs = vec![
            ContractRecord::contract("a", "A.sol", "uint a = 1;").unwrap(),
            ContractRecord::new("b", "b.txt", "hello world", Origin::Blog, Category::English).unwrap(),
        ];
        let m = CorpusManifest::from_records(&recs, 0.9).unwrap();
        assert_eq!(m.counts[&Category::Contract], 1);
        assert_eq!(m.token_totals[&Category::Contract], 5);
        assert_eq!(m.token_totals[&Category::English], 2);
        assert_eq!(m.counts[&Category::Chinese], 0);
        assert_eq!(m.total_tokens(), 7);
        let json = serde_json::to_string(&m).unwrap();
        assert!(json.contains("\"general_code\":0"));
        let back: CorpusManifest = serde_json::from_str(&json).unwrap();
        assert_eq!(back, m);
        assert!(CorpusManifest::from_records(&recs, 2.0).is_err());
    }
}
