//! Output files that disappear again when a command fails.

use std::path::{Path, PathBuf};

use crate::{io_err, CliError};

/// Removes tracked outputs on drop unless [`OutputGuard::commit`] was called.
///
/// Tracked files are always removed; tracked directories only when this run
/// created them.
#[derive(Debug)]
pub struct OutputGuard {
    paths: Vec<(PathBuf, bool)>,
    committed: bool,
}

impl OutputGuard {
    /// Guard for outputs inside `dir`, creating it if needed.
    pub fn new(dir: &Path) -> Result<Self, CliError> {
        let mut guard = OutputGuard { paths: Vec::new(), committed: false };
        // Track the outermost directory this run creates.
        let mut created = None;
        let mut probe = Some(dir);
        while let Some(p) = probe {
            if p.as_os_str().is_empty() || p.exists() {
                break;
            }
            created = Some(p.to_path_buf());
            probe = p.parent();
        }
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        if let Some(c) = created {
            guard.paths.push((c, true));
        }
        Ok(guard)
    }

    /// Guard for a single output file; its parent directory must exist.
    pub fn for_file(path: &Path) -> Result<Self, CliError> {
        let parent = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        if !parent.is_dir() {
            return Err(io_err(path, std::io::Error::new(std::io::ErrorKind::NotFound, "parent directory does not exist")));
        }
        let mut guard = OutputGuard { paths: Vec::new(), committed: false };
        guard.track(path.to_path_buf());
        Ok(guard)
    }

    pub fn track(&mut self, path: PathBuf) {
        let removable = !path.is_dir();
        self.paths.push((path, removable));
    }

    pub fn commit(&mut self) {
        self.committed = true;
    }
}

impl Drop for OutputGuard {
    fn drop(&mut self) {
        if self.committed {
            return;
        }
        for (path, removable) in self.paths.iter().rev() {
            if !removable {
                continue;
            }
            let result = if path.is_dir() { std::fs::remove_dir_all(path) } else { std::fs::remove_file(path) };
            if let Err(e) = result {
                if e.kind() != std::io::ErrorKind::NotFound {
                    log::warn!("could not remove partial output {}: {e}", path.display());
                }
            }
        }
    }
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}
