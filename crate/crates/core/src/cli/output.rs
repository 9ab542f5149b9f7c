//! Output staging: files are written to a temporary directory and moved into
//! place only when the whole command has succeeded.

use std::fmt::Display;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

pub struct Staging {
    target: PathBuf,
    tmp: PathBuf,
    committed: bool,
}

impl Staging {
    pub fn new(target: &Path) -> Result<Self> {
        let name = target
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "out".into());
        let parent = match target.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        };
        std::fs::create_dir_all(&parent).map_err(|e| Error::io(&parent, e))?;
        let tmp = parent.join(format!(".{name}.tmp-{}", std::process::id()));
        if tmp.exists() {
            std::fs::remove_dir_all(&tmp).map_err(|e| Error::io(&tmp, e))?;
        }
        std::fs::create_dir(&tmp).map_err(|e| Error::io(&tmp, e))?;
        Ok(Self {
            target: target.to_path_buf(),
            tmp,
            committed: false,
        })
    }

    /// Where to write output file `name` before the commit.
    pub fn path(&self, name: &str) -> PathBuf {
        self.tmp.join(name)
    }

    pub fn write(&self, name: &str, contents: impl AsRef<[u8]>) -> Result<()> {
        let p = self.path(name);
        std::fs::write(&p, contents).map_err(|e| Error::io(p, e))
    }

    /// Moves the staged files into the target directory. A missing target is
    /// created by renaming the staging directory as a whole.
    pub fn commit(mut self) -> Result<()> {
        if !self.target.exists() {
            std::fs::rename(&self.tmp, &self.target).map_err(|e| Error::io(&self.target, e))?;
        } else {
            let entries = std::fs::read_dir(&self.tmp).map_err(|e| Error::io(&self.tmp, e))?;
            for entry in entries {
                let entry = entry.map_err(|e| Error::io(&self.tmp, e))?;
                let dest = self.target.join(entry.file_name());
                if dest.is_dir() {
                    std::fs::remove_dir_all(&dest).map_err(|e| Error::io(&dest, e))?;
                }
                std::fs::rename(entry.path(), &dest).map_err(|e| Error::io(&dest, e))?;
            }
            std::fs::remove_dir(&self.tmp).map_err(|e| Error::io(&self.tmp, e))?;
        }
        self.committed = true;
        Ok(())
    }
}

impl Drop for Staging {
    fn drop(&mut self) {
        if !self.committed {
            let _ = std::fs::remove_dir_all(&self.tmp);
        }
    }
}

/// Ordered `key<TAB>value` report.
#[derive(Default)]
pub struct Report(Vec<(String, String)>);

impl Report {
    pub fn add(&mut self, key: &str, value: impl Display) {
        self.0.push((key.to_string(), value.to_string()));
    }

    pub fn render(&self) -> String {
        self.0.iter().map(|(k, v)| format!("{k}\t{v}\n")).collect()
    }
}
