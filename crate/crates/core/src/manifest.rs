//! Dataset manifests: one utterance per line, `audio[TAB]labels`, with the
//! label column optional. Blank lines and lines starting with `#` are
//! skipped. Relative paths resolve against the manifest's directory.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub audio: PathBuf,
    pub labels: Option<PathBuf>,
    /// 1-based line number in the manifest file.
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetManifest {
    pub base_dir: PathBuf,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Fails unless every entry carries a label file.
    pub fn require_labels(&self) -> Result<()> {
        match self.entries.iter().find(|e| e.labels.is_none()) {
            Some(e) => Err(Error::InvalidArgument(format!(
                "manifest line {} has no label file: {}",
                e.line,
                e.audio.display()
            ))),
            None => Ok(()),
        }
    }
}

fn resolve(base: &Path, field: &str, line: usize) -> Result<PathBuf> {
    let p = Path::new(field);
    let p = if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
    if !p.is_file() {
        return Err(Error::MissingFile { line, path: p });
    }
    Ok(p)
}

/// Parses manifest text; `base_dir` anchors relative paths.
pub fn parse_manifest_str(text: &str, base_dir: &Path) -> Result<DatasetManifest> {
    let mut entries = Vec::new();
    let mut seen = HashSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut cols = trimmed.split('\t').map(str::trim).filter(|c| !c.is_empty());
        let audio = resolve(base_dir, cols.next().unwrap_or_default(), line)?;
        let labels = cols.next().map(|l| resolve(base_dir, l, line)).transpose()?;
        if cols.next().is_some() {
            return Err(Error::InvalidArgument(format!("manifest line {line} has more than two columns")));
        }
        let key = audio.canonicalize().unwrap_or_else(|_| audio.clone());
        if !seen.insert(key) {
            return Err(Error::DuplicateEntry { line, path: audio });
        }
        entries.push(ManifestEntry { audio, labels, line });
    }
    if entries.is_empty() {
        return Err(Error::EmptyManifest);
    }
    Ok(DatasetManifest { base_dir: base_dir.to_path_buf(), entries })
}

pub fn parse_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest> {
    let path = path.as_ref();
    if !path.is_file() {
        return Err(Error::NotFound(path.to_path_buf()));
    }
    let text = std::fs::read_to_string(path)?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    parse_manifest_str(&text, &base)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn touch(dir: &Path, name: &str) {
        std::fs::write(dir.join(name), b"x").unwrap();
    }

    #[test]
    fn three_lines_three_entries() {
        let dir = tempfile::tempdir().unwrap();
        for n in ["a.wav", "b.wav", "c.wav", "a.lab"] {
            touch(dir.path(), n);
        }
        let m = dir.path().join("m.txt");
        std::fs::write(&m, "# corpus\na.wav\ta.lab\n\nb.wav\nc.wav\n").unwrap();
        let parsed = parse_manifest(&m).unwrap();
        assert_eq!(parsed.len(), 3);
        assert_eq!(parsed.entries[0].labels.as_deref(), Some(dir.path().join("a.lab").as_path()));
        assert_eq!(parsed.entries[2].line, 5);
        assert!(parsed.require_labels().is_err());
    }

    #[test]
    fn missing_file_names_the_line() {
        let dir = tempfile::tempdir().unwrap();
        touch(dir.path(), "a.wav");
        match parse_manifest_str("a.wav\n# x\nnope.wav\n", dir.path()) {
            Err(Error::MissingFile { line, path }) => {
                assert_eq!(line, 3);
                assert!(path.ends_with("nope.wav"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn duplicates_and_empties_rejected() {
        let dir = tempfile::tempdir().unwrap();
        touch(dir.path(), "a.wav");
        let abs = dir.path().join("a.wav");
        let text = format!("a.wav\n{}\n", abs.display());
        assert!(matches!(parse_manifest_str(&text, dir.path()), Err(Error::DuplicateEntry { line: 2, .. })));
        assert!(matches!(parse_manifest_str("# only\n\n", dir.path()), Err(Error::EmptyManifest)));
    }
}
