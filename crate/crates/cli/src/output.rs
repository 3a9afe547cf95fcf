//! Output directories are assembled in a hidden staging directory next to
//! the target and renamed into place, so a failed command leaves nothing
//! behind.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use tempfile::TempDir;

use crate::error::{CliError, Result};
use crate::manifest::MANIFEST_FILE;

pub struct Staging {
    dir: TempDir,
    target: PathBuf,
    files: Vec<String>,
}

impl Staging {
    pub fn new(target: &Path) -> Result<Self> {
        let parent = match target.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        };
        fs::create_dir_all(&parent).map_err(|e| CliError::io(&parent, e))?;
        if target.exists() && !is_replaceable(target)? {
            return Err(CliError::input(
                target,
                "exists and is not a previous output directory (no manifest.json)",
            ));
        }
        let dir = tempfile::Builder::new()
            .prefix(".kmerstream-staging-")
            .tempdir_in(&parent)
            .map_err(|e| CliError::io(&parent, e))?;
        Ok(Self {
            dir,
            target: target.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    /// Creates a file (and its parent directories) inside the staging area.
    pub fn create(&mut self, name: &str) -> Result<BufWriter<fs::File>> {
        let path = self.path(name);
        if let Some(p) = path.parent() {
            fs::create_dir_all(p).map_err(|e| CliError::io(p, e))?;
        }
        let f = fs::File::create(&path).map_err(|e| CliError::io(&path, e))?;
        self.files.push(name.to_string());
        Ok(BufWriter::new(f))
    }

    pub fn write_with<F>(&mut self, name: &str, f: F) -> Result<()>
    where
        F: FnOnce(&mut BufWriter<fs::File>) -> std::io::Result<()>,
    {
        let path = self.path(name);
        let mut w = self.create(name)?;
        f(&mut w).and_then(|_| w.flush()).map_err(|e| CliError::io(&path, e))
    }

    /// Output files written so far, in creation order.
    pub fn files(&self) -> &[String] {
        &self.files
    }

    pub fn commit(self) -> Result<PathBuf> {
        if self.target.exists() {
            fs::remove_dir_all(&self.target).map_err(|e| CliError::io(&self.target, e))?;
        }
        let staged = self.dir.keep();
        fs::rename(&staged, &self.target).map_err(|e| {
            let _ = fs::remove_dir_all(&staged);
            CliError::io(&self.target, e)
        })?;
        Ok(self.target)
    }
}

fn is_replaceable(target: &Path) -> Result<bool> {
    if !target.is_dir() {
        return Ok(false);
    }
    let mut entries = fs::read_dir(target).map_err(|e| CliError::io(target, e))?;
    Ok(entries.next().is_none() || target.join(MANIFEST_FILE).is_file())
}

/// Parses a byte count with an optional binary suffix: `512`, `64K`, `1G`,
/// `2GiB`.
pub fn parse_size(s: &str) -> std::result::Result<u64, String> {
    let t = s.trim();
    let digits = t.find(|c: char| !c.is_ascii_digit()).unwrap_or(t.len());
    if digits == 0 {
        return Err(format!("{s:?} is not a byte count"));
    }
    let n: u64 = t[..digits].parse().map_err(|e| format!("{s:?}: {e}"))?;
    let suffix = t[digits..].trim().to_ascii_uppercase();
    let shift = match suffix.trim_end_matches("IB").trim_end_matches('B') {
        "" => 0,
        "K" => 10,
        "M" => 20,
        "G" => 30,
        "T" => 40,
        _ => return Err(format!("{s:?}: unknown size suffix")),
    };
    n.checked_mul(1u64 << shift).ok_or_else(|| format!("{s:?} overflows"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes() {
        assert_eq!(parse_size("512"), Ok(512));
        assert_eq!(parse_size("64K"), Ok(64 << 10));
        assert_eq!(parse_size("1G"), Ok(1 << 30));
        assert_eq!(parse_size("2GiB"), Ok(2 << 30));
        assert_eq!(parse_size("3mb"), Ok(3 << 20));
        assert!(parse_size("G").is_err());
        assert!(parse_size("4X").is_err());
        assert!(parse_size("99999999999T").is_err());
    }

    #[test]
    fn failed_staging_leaves_nothing() {
        let root = tempfile::tempdir().unwrap();
        let target = root.path().join("out");
        {
            let mut st = Staging::new(&target).unwrap();
            st.write_with("a.txt", |w| w.write_all(b"x")).unwrap();
        }
        assert!(!target.exists());
        assert_eq!(fs::read_dir(root.path()).unwrap().count(), 0);
    }

    #[test]
    fn commit_replaces_previous_output_only() {
        let root = tempfile::tempdir().unwrap();
        let target = root.path().join("out");
        for round in 0..2 {
            let mut st = Staging::new(&target).unwrap();
            st.write_with(MANIFEST_FILE, |w| write!(w, "{round}")).unwrap();
            st.commit().unwrap();
        }
        assert_eq!(fs::read_to_string(target.join(MANIFEST_FILE)).unwrap(), "1");
        let foreign = root.path().join("foreign");
        fs::create_dir(&foreign).unwrap();
        fs::write(foreign.join("keep.txt"), "mine").unwrap();
        assert!(Staging::new(&foreign).is_err());
    }
}
