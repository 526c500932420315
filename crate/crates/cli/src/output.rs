//! Atomic file output.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use tempfile::NamedTempFile;

use crate::CliError;

/// Output directory with temp-then-rename writes.
#[derive(Debug, Clone)]
pub struct OutDir {
    root: PathBuf,
}

impl OutDir {
    pub fn create(root: impl Into<PathBuf>) -> Result<Self, CliError> {
        let root = root.into();
        std::fs::create_dir_all(&root)
            .map_err(|e| CliError::output(format!("cannot create {}: {e}", root.display())))?;
        Ok(OutDir { root })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Writes `name` through a temporary file in the same directory.
    pub fn write_with(
        &self,
        name: &str,
        body: impl FnOnce(&mut dyn Write) -> std::io::Result<()>,
    ) -> Result<PathBuf, CliError> {
        let target = self.path(name);
        let fail = |e: std::io::Error| CliError::output(format!("cannot write {}: {e}", target.display()));
        let mut tmp = NamedTempFile::new_in(&self.root).map_err(fail)?;
        {
            let mut buf = std::io::BufWriter::new(tmp.as_file_mut());
            body(&mut buf).map_err(fail)?;
            buf.flush().map_err(fail)?;
        }
        tmp.as_file().sync_all().map_err(fail)?;
        tmp.persist(&target).map_err(|e| fail(e.error))?;
        Ok(target)
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf, CliError> {
        let text = serde_json::to_string_pretty(value)
            .map_err(|e| CliError::output(format!("cannot serialize {name}: {e}")))?;
        self.write_with(name, |w| {
            w.write_all(text.as_bytes())?;
            w.write_all(b"\n")
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn writes_replace_and_leave_no_temp_files() {
        let dir = tempfile::tempdir().unwrap();
        let out = OutDir::create(dir.path().join("nested")).unwrap();
        out.write_json("a.json", &[1, 2]).unwrap();
        out.write_json("a.json", &[3]).unwrap();
        let text = std::fs::read_to_string(out.path("a.json")).unwrap();
        assert_eq!(text, "[\n  3\n]\n");
        let names: Vec<_> = std::fs::read_dir(out.root()).unwrap().map(|e| e.unwrap().file_name()).collect();
        assert_eq!(names.len(), 1);
    }
}
