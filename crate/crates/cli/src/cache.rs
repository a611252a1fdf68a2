use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{io_err, CliError, CliResult};

/// Length-prefixed SHA-256 over labelled fields.
pub struct KeyHasher(Sha256);

impl KeyHasher {
    pub fn new(stage: &str) -> Self {
        let mut h = KeyHasher(Sha256::new());
        h.bytes("stage", stage.as_bytes());
        h
    }

    pub fn bytes(&mut self, label: &str, data: &[u8]) -> &mut Self {
        for part in [label.as_bytes(), data] {
            self.0.update((part.len() as u64).to_le_bytes());
            self.0.update(part);
        }
        self
    }

    pub fn file(&mut self, label: &str, path: &Path) -> CliResult<&mut Self> {
        let data = std::fs::read(path).map_err(|e| io_err(path, e))?;
        Ok(self.bytes(label, &Sha256::digest(&data)))
    }

    pub fn json<T: Serialize>(&mut self, label: &str, value: &T) -> &mut Self {
        let text = serde_json::to_vec(value).expect("cache key fields serialize");
        self.bytes(label, &text)
    }

    pub fn finish(&mut self) -> String {
        hex::encode(self.0.clone().finalize())
    }
}

pub const STAMP: &str = "stamp.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Stamp {
    stage: String,
    key: String,
}

/// Key recorded by the last successful run of the stage in `dir`, if any.
pub fn stamp_key(dir: &Path) -> Option<String> {
    let text = std::fs::read_to_string(dir.join(STAMP)).ok()?;
    serde_json::from_str::<Stamp>(&text).ok().map(|s| s.key)
}

/// True when `dir` holds a stamp for `key` and every listed output.
pub fn is_fresh(dir: &Path, key: &str, outputs: &[PathBuf]) -> bool {
    stamp_key(dir).as_deref() == Some(key) && outputs.iter().all(|p| p.is_file())
}

pub fn clear_stamp(dir: &Path) -> CliResult<()> {
    let p = dir.join(STAMP);
    match std::fs::remove_file(&p) {
        Err(e) if e.kind() != std::io::ErrorKind::NotFound => Err(io_err(&p, e)),
        _ => Ok(()),
    }
}

pub fn write_stamp(dir: &Path, stage: &str, key: &str) -> CliResult<()> {
    let p = dir.join(STAMP);
    let text = serde_json::to_string_pretty(&Stamp { stage: stage.into(), key: key.into() }).expect("stamp serializes");
    std::fs::write(&p, text).map_err(|e| io_err(&p, e))
}

/// Exclusive ownership of an output directory, released on drop.
#[derive(Debug)]
pub struct OutputLock {
    path: PathBuf,
}

impl OutputLock {
    pub const FILE: &'static str = ".lock";

    pub fn acquire(output: &Path) -> CliResult<Self> {
        std::fs::create_dir_all(output).map_err(|e| io_err(output, e))?;
        let path = output.join(Self::FILE);
        let mut f = OpenOptions::new().write(true).create_new(true).open(&path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::AlreadyExists {
                CliError::Generic(format!(
                    "{} is locked by another run; delete {} if that run is gone",
                    output.display(),
                    path.display()
                ))
            } else {
                io_err(&path, e)
            }
        })?;
        let _ = writeln!(f, "{}", std::process::id());
        Ok(Self { path })
    }
}

impl Drop for OutputLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn key_depends_on_field_boundaries() {
        let a = KeyHasher::new("s").bytes("x", b"ab").bytes("y", b"c").finish();
        let b = KeyHasher::new("s").bytes("x", b"a").bytes("y", b"bc").finish();
        assert_ne!(a, b);
        assert_eq!(a, KeyHasher::new("s").bytes("x", b"ab").bytes("y", b"c").finish());
    }

    #[test]
    fn lock_is_exclusive_and_released() {
        let dir = tempfile::tempdir().unwrap();
        let lock = OutputLock::acquire(dir.path()).unwrap();
        assert!(OutputLock::acquire(dir.path()).is_err());
        drop(lock);
        assert!(OutputLock::acquire(dir.path()).is_ok());
    }

    #[test]
    fn stamps_gate_freshness() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("a.txt");
        std::fs::write(&out, "x").unwrap();
        assert!(!is_fresh(dir.path(), "k", &[out.clone()]));
        write_stamp(dir.path(), "t", "k").unwrap();
        assert!(is_fresh(dir.path(), "k", &[out.clone()]));
        assert!(!is_fresh(dir.path(), "j", &[out.clone()]));
        assert!(!is_fresh(dir.path(), "k", &[dir.path().join("missing")]));
        clear_stamp(dir.path()).unwrap();
        assert!(stamp_key(dir.path()).is_none());
    }
}
