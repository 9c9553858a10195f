use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Label, Split};
use crate::error::{Error, Result};

pub const HEADER: [&str; 4] = ["path", "label", "split", "domain"];

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// As written in the file; relative paths resolve against the manifest's directory.
    pub path: String,
    pub label: Label,
    pub split: Split,
    pub domain: String,
}

/// A validated list of image records on disk.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetManifest {
    pub root: PathBuf,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn new(root: impl Into<PathBuf>, entries: Vec<ManifestEntry>) -> Result<Self> {
        let m = Self { root: root.into(), entries };
        m.check_unique()?;
        Ok(m)
    }

    fn check_unique(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for e in &self.entries {
            if !seen.insert(e.path.as_str()) {
                return Err(Error::Config(format!("duplicate manifest path {}", e.path)));
            }
        }
        Ok(())
    }

    /// Number of bonafide entries (m).
    pub fn bonafide_count(&self) -> usize {
        self.entries.iter().filter(|e| e.label == Label::Bonafide).count()
    }

    /// Number of attack entries (n).
    pub fn attack_count(&self) -> usize {
        self.entries.iter().filter(|e| e.label == Label::Attack).count()
    }

    pub fn resolve(&self, entry: &ManifestEntry) -> PathBuf {
        let p = Path::new(&entry.path);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.root.join(p)
        }
    }

    pub fn select(&self, split: Split, domain: Option<&str>) -> Vec<&ManifestEntry> {
        self.entries
            .iter()
            .filter(|e| e.split == split && domain.is_none_or(|d| e.domain == d))
            .collect()
    }

    /// Domains in order of first appearance.
    pub fn domains(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for e in &self.entries {
            if !out.contains(&e.domain) {
                out.push(e.domain.clone());
            }
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
        w.write_record(HEADER).expect("in-memory write");
        for e in &self.entries {
            w.write_record([e.path.as_str(), e.label.code(), e.split.name(), e.domain.as_str()])
                .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv())?;
        Ok(())
    }

    /// Parses manifest text without touching the filesystem.
    pub fn parse(text: &str, root: impl Into<PathBuf>, source: &Path) -> Result<Self> {
        let parse_err = |line: usize, reason: String| Error::ManifestParse {
            path: source.to_path_buf(),
            line,
            reason,
        };
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .flexible(true)
            .from_reader(text.as_bytes());
        let mut entries = Vec::new();
        let mut seen = HashSet::new();
        let mut header_seen = false;
        for rec in rdr.records() {
            let rec = rec.map_err(|e| {
                let line = e.position().map_or(0, |p| p.line() as usize);
                parse_err(line, e.to_string())
            })?;
            let line = rec.position().map_or(0, |p| p.line() as usize);
            if rec.iter().all(|f| f.is_empty()) {
                continue;
            }
            if !header_seen {
                let fields: Vec<&str> = rec.iter().collect();
                if fields != HEADER {
                    return Err(parse_err(line, format!("expected header `{}`", HEADER.join(","))));
                }
                header_seen = true;
                continue;
            }
            if rec.len() != 4 {
                return Err(parse_err(line, format!("expected 4 fields, found {}", rec.len())));
            }
            let label = Label::parse(&rec[1]).ok_or_else(|| parse_err(line, format!("unknown label `{}`", &rec[1])))?;
            let split = Split::parse(&rec[2]).ok_or_else(|| parse_err(line, format!("unknown split `{}`", &rec[2])))?;
            let path = rec[0].to_string();
            if path.is_empty() {
                return Err(parse_err(line, "empty path".into()));
            }
            if !seen.insert(path.clone()) {
                return Err(parse_err(line, format!("duplicate path {path}")));
            }
            entries.push(ManifestEntry { path, label, split, domain: rec[3].to_string() });
        }
        if !header_seen {
            return Err(parse_err(1, "missing header line".into()));
        }
        Ok(Self { root: root.into(), entries })
    }
}

/// Reads and validates a manifest; every referenced image must exist.
pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::Ingest {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let manifest = DatasetManifest::parse(&text, root, path)?;
    for e in &manifest.entries {
        let p = manifest.resolve(e);
        if !p.is_file() {
            return Err(Error::Ingest { path: p, reason: "image file not found".into() });
        }
    }
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    const VALID: &str = "path,label,split,domain\na.png,0,train,A\nb.png,1,train,A\nc.png,0,test,B\nd.png,1,val,A\n";

    #[test]
    fn parses_valid_file() {
        let m = DatasetManifest::parse(VALID, "/data", Path::new("m.csv")).unwrap();
        assert_eq!(m.entries.len(), 4);
        assert_eq!(m.bonafide_count(), 2);
        assert_eq!(m.attack_count(), 2);
        assert_eq!(m.domains(), vec!["A", "B"]);
        assert_eq!(m.resolve(&m.entries[0]), PathBuf::from("/data/a.png"));
    }

    #[test]
    fn rejects_duplicate_path() {
        let text = "path,label,split,domain\na.png,0,train,A\na.png,1,train,A\n";
        let err = DatasetManifest::parse(text, "", Path::new("m.csv")).unwrap_err();
        assert!(err.to_string().contains("a.png"), "{err}");
    }

    #[test]
    fn rejects_unknown_label_with_line() {
        let text = "path,label,split,domain\na.png,0,train,A\nb.png,2,train,A\n";
        let err = DatasetManifest::parse(text, "", Path::new("m.csv")).unwrap_err();
        match err {
            Error::ManifestParse { line, ref reason, .. } => {
                assert_eq!(line, 3);
                assert!(reason.contains('2'));
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn requires_header() {
        assert!(DatasetManifest::parse("a.png,0,train,A\n", "", Path::new("m.csv")).is_err());
    }

    #[test]
    fn round_trips_modulo_whitespace() {
        let spaced = "path, label, split, domain\n a.png ,0, train,A\nb.png,1,train,A\n\nc.png,0,test,B\nd.png,1,val,A\n";
        let m = DatasetManifest::parse(spaced, "", Path::new("m.csv")).unwrap();
        let strip = |s: &str| s.chars().filter(|c| !c.is_whitespace()).collect::<String>();
        assert_eq!(strip(&m.to_csv()), strip(spaced));
    }

    #[test]
    fn missing_file_is_an_ingest_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        fs::write(&path, "path,label,split,domain\nnope.png,0,train,A\n").unwrap();
        match load_manifest(&path) {
            Err(Error::Ingest { path, .. }) => assert!(path.ends_with("nope.png")),
            other => panic!("unexpected {other:?}"),
        }
    }
}
