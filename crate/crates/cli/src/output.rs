//! Self-describing CSV files, written all-or-nothing.
//!
//! Every CSV starts with a block of `# key value` comment lines (tool
//! version, config hash, seed, ...), followed by a header row and the data.
//! Only the comment block may differ between two runs of the same config;
//! it carries the creation time.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> CliResult<String> {
    let bytes = std::fs::read(path).map_err(|e| CliError::usage(format!("cannot read {}: {e}", path.display())))?;
    Ok(sha256_hex(&bytes))
}

/// The `# key value` block at the top of an output file.
#[derive(Debug, Clone, Default)]
pub struct Metadata {
    entries: Vec<(String, String)>,
}

impl Metadata {
    pub fn new(command: &str) -> Self {
        let created = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        let mut m = Metadata::default();
        m.push("tool", format!("pinvnet {}", env!("CARGO_PKG_VERSION")));
        m.push("command", command);
        m.push("created_unix", created);
        m
    }

    pub fn push(&mut self, key: &str, value: impl ToString) {
        self.entries.push((key.to_string(), value.to_string()));
    }

    pub fn with(&self, key: &str, value: impl ToString) -> Self {
        let mut m = self.clone();
        m.push(key, value);
        m
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            let _ = writeln!(out, "# {k} {}", v.replace('\n', " "));
        }
        out
    }
}

/// Output files staged next to their destinations and moved into place only
/// by [`Staged::commit`]. Dropping an uncommitted set deletes the staged
/// files, so a failed command leaves no partial outputs behind.
#[derive(Debug)]
pub struct Staged {
    dir: PathBuf,
    files: Vec<(PathBuf, PathBuf)>,
}

impl Staged {
    pub fn new(dir: &Path) -> CliResult<Self> {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::runtime(format!("cannot create output directory {}: {e}", dir.display())))?;
        Ok(Staged {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn write(&mut self, name: &str, contents: &str) -> CliResult<()> {
        let dest = self.dir.join(name);
        let tmp = self.dir.join(format!(".{name}.partial"));
        std::fs::write(&tmp, contents).map_err(|e| CliError::runtime(format!("cannot write {}: {e}", tmp.display())))?;
        self.files.push((tmp, dest));
        Ok(())
    }

    pub fn commit(mut self) -> CliResult<Vec<PathBuf>> {
        let files = std::mem::take(&mut self.files);
        let mut done = Vec::with_capacity(files.len());
        for (i, (tmp, dest)) in files.iter().enumerate() {
            if let Err(e) = std::fs::rename(tmp, dest) {
                for (t, _) in &files[i..] {
                    let _ = std::fs::remove_file(t);
                }
                return Err(CliError::runtime(format!("cannot move {} into place: {e}", dest.display())));
            }
            done.push(dest.clone());
        }
        Ok(done)
    }
}

impl Drop for Staged {
    fn drop(&mut self) {
        for (tmp, _) in &self.files {
            let _ = std::fs::remove_file(tmp);
        }
    }
}

/// Drops the `#` comment block, leaving the header row and data.
pub fn strip_metadata(csv: &str) -> String {
    csv.lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| format!("{l}\n"))
        .collect()
}
