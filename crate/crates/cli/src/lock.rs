use std::fs::OpenOptions;
use std::io::{ErrorKind, Write};
use std::path::{Path, PathBuf};

use crate::CliError;

pub const LOCK_FILE: &str = ".workload-forge.lock";

/// Exclusive claim on a work directory, released on drop.
#[derive(Debug)]
pub struct WorkdirLock {
    path: PathBuf,
}

impl WorkdirLock {
    pub fn acquire(workdir: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(workdir)
            .map_err(|e| CliError::Runtime(format!("cannot create work directory {}: {e}", workdir.display())))?;
        let path = workdir.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(Self { path })
            }
            Err(e) if e.kind() == ErrorKind::AlreadyExists => Err(CliError::Runtime(format!(
                "work directory {} is in use by another run (delete {} if it is stale)",
                workdir.display(),
                path.display()
            ))),
            Err(e) => Err(CliError::Runtime(format!("cannot create {}: {e}", path.display()))),
        }
    }
}

impl Drop for WorkdirLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn second_claim_fails_until_release() {
        let dir = std::env::temp_dir().join(format!("wf-lock-{}", std::process::id()));
        let first = WorkdirLock::acquire(&dir).unwrap();
        assert!(WorkdirLock::acquire(&dir).is_err());
        drop(first);
        let again = WorkdirLock::acquire(&dir).unwrap();
        drop(again);
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
