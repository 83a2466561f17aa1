//! Output directory handling. Every file is written to a temporary sibling and
//! renamed into place.

use mkv_core::{Error, Result};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

pub struct OutputDir {
    root: PathBuf,
    seed: u64,
    config_hash: String,
}

impl OutputDir {
    pub fn create(root: &Path, seed: u64, config_hash: &str) -> Result<Self> {
        fs::create_dir_all(root).map_err(|e| Error::Io(format!("{}: {e}", root.display())))?;
        Ok(Self {
            root: root.to_path_buf(),
            seed,
            config_hash: config_hash.into(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn write_bytes(&self, name: &str, bytes: &[u8]) -> Result<()> {
        atomic_write(&self.path(name), bytes)
    }

    pub fn write_json<T: serde::Serialize>(&self, name: &str, value: &T) -> Result<()> {
        let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::Io(e.to_string()))?;
        s.push('\n');
        self.write_bytes(name, s.as_bytes())
    }

    /// CSV with the `# seed=.. config_hash=..` header row, then `columns`.
    pub fn write_csv(&self, name: &str, columns: &[&str], rows: &[Vec<String>]) -> Result<()> {
        let mut buf = self.header();
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(columns)?;
        for r in rows {
            w.write_record(r)?;
        }
        w.flush()?;
        drop(w);
        self.write_bytes(name, &buf)
    }

    /// Streams a body produced by `fill` after the header row.
    pub fn write_with(&self, name: &str, fill: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
        let mut buf = self.header();
        fill(&mut buf)?;
        self.write_bytes(name, &buf)
    }

    fn header(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        writeln!(buf, "# seed={} config_hash={}", self.seed, self.config_hash).expect("write to vec");
        buf
    }
}

pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    let io = |e: std::io::Error| Error::Io(format!("{}: {e}", path.display()));
    {
        let mut f = fs::File::create(&tmp).map_err(io)?;
        f.write_all(bytes).map_err(io)?;
        f.sync_all().map_err(io)?;
    }
    fs::rename(&tmp, path).map_err(io)
}

/// Formats a float so that it parses back to the same value.
pub fn num(v: f64) -> String {
    format!("{v:e}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_has_seed_and_hash_header() {
        let dir = tempfile::tempdir().unwrap();
        let out = OutputDir::create(dir.path(), 7, "abc").unwrap();
        out.write_csv("t.csv", &["a", "b"], &[vec!["1".into(), num(0.5)]]).unwrap();
        let text = fs::read_to_string(dir.path().join("t.csv")).unwrap();
        assert_eq!(text, "# seed=7 config_hash=abc\na,b\n1,5e-1\n");
        let leftovers: Vec<_> = fs::read_dir(dir.path()).unwrap().collect();
        assert_eq!(leftovers.len(), 1);
    }
}
