use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RevocationError {
    #[error("revocation file: {0}")]
    Io(#[from] std::io::Error),
    #[error("revocation file line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// One JSON line of the revocation file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RevocationEntry {
    pub cert_id: String,
    pub revoked_at: u64,
}

/// Process-local revocation list. Entries are only ever added; revoking an
/// id twice keeps the earliest timestamp.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RevocationRegistry {
    revoked: BTreeMap<String, u64>,
}

impl RevocationRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn revoke(&mut self, cert_id: &str, at: u64) {
        self.revoked
            .entry(cert_id.to_owned())
            .and_modify(|t| *t = (*t).min(at))
            .or_insert(at);
    }

    pub fn is_revoked(&self, cert_id: &str) -> bool {
        self.revoked.contains_key(cert_id)
    }

    pub fn revoked_at(&self, cert_id: &str) -> Option<u64> {
        self.revoked.get(cert_id).copied()
    }

    pub fn len(&self) -> usize {
        self.revoked.len()
    }

    pub fn is_empty(&self) -> bool {
        self.revoked.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = RevocationEntry> + '_ {
        self.revoked.iter().map(|(id, at)| RevocationEntry {
            cert_id: id.clone(),
            revoked_at: *at,
        })
    }

    /// Loads a JSON-lines file. A missing file is an empty registry.
    pub fn load(path: &Path) -> Result<Self, RevocationError> {
        let mut reg = Self::new();
        let file = match std::fs::File::open(path) {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(reg),
            Err(e) => return Err(e.into()),
        };
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: RevocationEntry =
                serde_json::from_str(&line).map_err(|e| RevocationError::Parse {
                    line: i + 1,
                    msg: e.to_string(),
                })?;
            reg.revoke(&entry.cert_id, entry.revoked_at);
        }
        Ok(reg)
    }

    /// Records the revocation in memory and appends it to `path`.
    pub fn revoke_persistent(&mut self, path: &Path, cert_id: &str, at: u64) -> Result<(), RevocationError> {
        let entry = RevocationEntry {
            cert_id: cert_id.to_owned(),
            revoked_at: at,
        };
        let mut f = OpenOptions::new().create(true).append(true).open(path)?;
        let line = serde_json::to_string(&entry).expect("entry serializes");
        writeln!(f, "{line}")?;
        f.sync_data()?;
        self.revoke(cert_id, at);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn persistence_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("revoked.jsonl");
        assert!(RevocationRegistry::load(&path).unwrap().is_empty());

        let mut reg = RevocationRegistry::new();
        reg.revoke_persistent(&path, "agent-a", 10).unwrap();
        reg.revoke_persistent(&path, "agent-b", 20).unwrap();
        reg.revoke_persistent(&path, "agent-a", 5).unwrap();
        let loaded = RevocationRegistry::load(&path).unwrap();
        assert_eq!(loaded, reg);
        assert_eq!(loaded.revoked_at("agent-a"), Some(5));

        std::fs::write(&path, "{not json}\n").unwrap();
        assert!(matches!(
            RevocationRegistry::load(&path),
            Err(RevocationError::Parse { line: 1, .. })
        ));
    }
}
