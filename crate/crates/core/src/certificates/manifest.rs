use serde::{Deserialize, Serialize};

use super::CertError;
use crate::cbor;
use crate::crypto::{self, Digest};

/// One tool the agent may invoke, with the permission scopes it holds.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkillEntry {
    pub sid: String,
    pub ver: String,
    pub h: Digest,
    pub scopes: Vec<String>,
}

impl SkillEntry {
    pub fn new(sid: impl Into<String>, ver: impl Into<String>, h: Digest, scopes: &[&str]) -> Self {
        let mut entry = Self {
            sid: sid.into(),
            ver: ver.into(),
            h,
            scopes: scopes.iter().map(|s| s.to_string()).collect(),
        };
        entry.normalize_scopes();
        entry
    }

    /// Entry for an open-source tool: `h` covers the source bytes.
    pub fn from_source(sid: &str, ver: &str, source: &[u8], scopes: &[&str]) -> Self {
        Self::new(sid, ver, crypto::digest(source), scopes)
    }

    /// Entry for a closed-source tool: `h` covers the public descriptor
    /// `name|version|api-schema`.
    pub fn from_descriptor(sid: &str, ver: &str, api_schema: &str, scopes: &[&str]) -> Self {
        let descriptor = format!("{sid}|{ver}|{api_schema}");
        Self::new(sid, ver, crypto::digest(descriptor.as_bytes()), scopes)
    }

    fn normalize_scopes(&mut self) {
        self.scopes.sort();
        self.scopes.dedup();
    }

    fn to_cbor(&self) -> ciborium::value::Value {
        cbor::array(vec![
            cbor::text(&self.sid),
            cbor::text(&self.ver),
            cbor::bytes(self.h.as_ref()),
            cbor::array(self.scopes.iter().map(|s| cbor::text(s)).collect()),
        ])
    }
}

/// The set of tools bound into a certificate.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkillsManifest {
    pub entries: Vec<SkillEntry>,
}

impl SkillsManifest {
    pub fn new(entries: Vec<SkillEntry>) -> Self {
        Self { entries }
    }

    /// Sorted by `(sid, ver)` with sorted, de-duplicated scopes. Rejects
    /// duplicate `(sid, ver)` pairs and empty tool identifiers.
    pub fn normalized(&self) -> Result<SkillsManifest, CertError> {
        let mut entries = self.entries.clone();
        for e in &mut entries {
            if e.sid.is_empty() {
                return Err(CertError::InvalidField("skill sid is empty".into()));
            }
            e.normalize_scopes();
        }
        entries.sort_by(|a, b| (&a.sid, &a.ver).cmp(&(&b.sid, &b.ver)));
        if let Some(w) = entries
            .windows(2)
            .find(|w| w[0].sid == w[1].sid && w[0].ver == w[1].ver)
        {
            return Err(CertError::DuplicateSkill {
                sid: w[0].sid.clone(),
                ver: w[0].ver.clone(),
            });
        }
        Ok(SkillsManifest { entries })
    }

    pub fn push(&mut self, entry: SkillEntry) {
        self.entries.push(entry);
    }
}

/// Deterministic CBOR of the normalized manifest: an array of
/// `[sid, ver, h, scopes]` entries.
pub fn canonical_encode(manifest: &SkillsManifest) -> Result<Vec<u8>, CertError> {
    let normalized = manifest.normalized()?;
    let items = normalized.entries.iter().map(SkillEntry::to_cbor).collect();
    Ok(cbor::encode(&cbor::array(items)))
}

pub fn manifest_hash(manifest: &SkillsManifest) -> Result<Digest, CertError> {
    Ok(crypto::digest(&canonical_encode(manifest)?))
}
