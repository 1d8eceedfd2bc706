//! Work-directory layout plus atomic, checksummed artifact writes.
//!
//! Every artifact lands via a temp file and a rename, with a sha256 sidecar
//! written afterwards, so a failed command never leaves a partial artifact
//! and identical runs can be compared by checksum alone.

use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::CliError;

/// Path helpers for everything a run persists.
#[derive(Debug, Clone)]
pub struct Workspace {
    root: PathBuf,
}

impl Workspace {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Workspace { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn ensure(&self) -> Result<(), CliError> {
        fs::create_dir_all(&self.root)?;
        fs::create_dir_all(self.root.join("models"))?;
        Ok(())
    }

    pub fn cleaned(&self) -> PathBuf {
        self.root.join("cleaned.tsv")
    }

    pub fn train_split(&self) -> PathBuf {
        self.root.join("train.tsv")
    }

    pub fn test_split(&self) -> PathBuf {
        self.root.join("test.tsv")
    }

    pub fn importance(&self) -> PathBuf {
        self.root.join("importance.json")
    }

    pub fn model(&self, name: &str) -> PathBuf {
        self.root.join("models").join(format!("{name}.json"))
    }

    pub fn metrics(&self) -> PathBuf {
        self.root.join("metrics.json")
    }

    pub fn gan(&self) -> PathBuf {
        self.root.join("gan.json")
    }

    pub fn synthetic(&self) -> PathBuf {
        self.root.join("synthetic.tsv")
    }

    pub fn evasion(&self) -> PathBuf {
        self.root.join("evasion.json")
    }

    pub fn bulk(&self) -> PathBuf {
        self.root.join("bulk.ndjson")
    }

    pub fn summary(&self) -> PathBuf {
        self.root.join("summary.json")
    }

    pub fn report(&self) -> PathBuf {
        self.root.join("report.txt")
    }

    /// Fails with a validation error naming the command that produces the
    /// missing artifact.
    pub fn require(&self, path: PathBuf, produced_by: &str) -> Result<PathBuf, CliError> {
        if path.is_file() {
            Ok(path)
        } else {
            Err(CliError::validation(format!(
                "missing artifact {}; run `ganids {produced_by}` first",
                path.display()
            )))
        }
    }
}

/// Files the save step wrote next to `tmp` (same name plus a suffix, such as
/// dataset `.meta.json` sidecars), paired with their final locations.
fn companions(tmp: &Path, path: &Path) -> Vec<(PathBuf, PathBuf)> {
    let (Some(dir), Some(tmp_name), Some(final_name)) =
        (tmp.parent(), tmp.file_name(), path.file_name())
    else {
        return Vec::new();
    };
    let dir = if dir.as_os_str().is_empty() { Path::new(".") } else { dir };
    let Ok(entries) = fs::read_dir(dir) else {
        return Vec::new();
    };
    let tmp_name = tmp_name.to_string_lossy().into_owned();
    let final_name = final_name.to_string_lossy().into_owned();
    let mut out = Vec::new();
    for entry in entries.flatten() {
        let name = entry.file_name().to_string_lossy().into_owned();
        if let Some(suffix) = name.strip_prefix(&tmp_name) {
            if !suffix.is_empty() {
                out.push((entry.path(), dir.join(format!("{final_name}{suffix}"))));
            }
        }
    }
    out.sort();
    out
}

/// Writes through `save` at a temp path, renames into place, then drops the
/// sha256 sidecar. Companion files written next to the temp path move over
/// the same way. All temp files are removed if `save` fails.
pub fn commit<F>(path: &Path, save: F) -> Result<(), CliError>
where
    F: FnOnce(&Path) -> Result<(), CliError>,
{
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    if let Err(e) = save(&tmp) {
        let _ = fs::remove_file(&tmp);
        for (from, _) in companions(&tmp, path) {
            let _ = fs::remove_file(from);
        }
        return Err(e);
    }
    let moved = companions(&tmp, path);
    for (from, to) in &moved {
        fs::rename(from, to)?;
    }
    fs::rename(&tmp, path)?;
    write_checksum(path)?;
    for (_, to) in &moved {
        write_checksum(to)?;
    }
    Ok(())
}

/// Serializes `value` as JSON through [`commit`].
pub fn commit_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let body = serde_json::to_string(value)?;
    commit(path, |tmp| Ok(fs::write(tmp, &body)?))
}

pub fn checksum(path: &Path) -> Result<String, CliError> {
    let bytes = fs::read(path)?;
    Ok(format!("{:x}", Sha256::digest(&bytes)))
}

/// `sha256sum`-format sidecar: hex digest, two spaces, file name.
pub fn write_checksum(path: &Path) -> Result<(), CliError> {
    let digest = checksum(path)?;
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let mut sidecar = path.as_os_str().to_owned();
    sidecar.push(".sha256");
    fs::write(PathBuf::from(sidecar), format!("{digest}  {name}\n"))?;
    Ok(())
}
