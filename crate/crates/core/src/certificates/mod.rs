//! Capability-bound certificates.
//!
//! A certificate binds an agent's key to its model, the hash of its skills
//! manifest, its trust constraints and its reproducibility commitment.
//! Issuance enforces the propagation rule: constraints decay strictly along
//! every issuance edge, and agents never issue to non-agent principals.

mod constraints;
mod issue;
mod manifest;
mod wire;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cbor::CborError;
use crate::crypto::{self, Digest, PublicKey, Signature};

pub use constraints::{constraint_leq, Rate, Tier, TrustConstraints};
pub use issue::{issue_certificate, issue_root, sign_unchecked, SubjectFields};
pub use manifest::{canonical_encode, manifest_hash, SkillEntry, SkillsManifest};
pub use wire::{decode_certificate, encode_certificate, from_pem, from_pem_many, to_pem, PEM_BEGIN, PEM_END};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CertError {
    #[error("duplicate skill entry ({sid}, {ver})")]
    DuplicateSkill { sid: String, ver: String },
    #[error("invalid field: {0}")]
    InvalidField(String),
    #[error("TYPE_CONSTRAINT: agent nodes cannot issue to non-agent nodes")]
    TypeConstraint,
    #[error("CONSTRAINT_VIOLATION: subject constraints are not below the issuer's")]
    ConstraintViolation,
    #[error("DEPTH_EXHAUSTED: issuer has max_depth 0")]
    DepthExhausted,
    #[error("EXPIRED_ISSUER: issuer certificate is not valid at {now}")]
    ExpiredIssuer { now: u64 },
    #[error("issuer key does not match issuer certificate")]
    IssuerKeyMismatch,
    #[error("MALFORMED: {0}")]
    Malformed(String),
}

impl From<CborError> for CertError {
    fn from(e: CborError) -> Self {
        CertError::Malformed(e.to_string())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelBinding {
    pub provider: String,
    pub model_id: String,
    pub model_ver: String,
}

impl ModelBinding {
    pub fn new(provider: &str, model_id: &str, model_ver: &str) -> Self {
        Self {
            provider: provider.into(),
            model_id: model_id.into(),
            model_ver: model_ver.into(),
        }
    }
}

impl fmt::Display for ModelBinding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}@{}", self.provider, self.model_id, self.model_ver)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReproLevel {
    Full,
    Statistical,
    None,
}

impl ReproLevel {
    pub fn as_str(self) -> &'static str {
        match self {
            ReproLevel::Full => "full",
            ReproLevel::Statistical => "statistical",
            ReproLevel::None => "none",
        }
    }
}

impl FromStr for ReproLevel {
    type Err = CertError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "full" => Ok(Self::Full),
            "statistical" => Ok(Self::Statistical),
            "none" => Ok(Self::None),
            _ => Err(CertError::InvalidField(format!("unknown repro level {s:?}"))),
        }
    }
}

/// Declared determinism class plus replay configuration (seed policy,
/// temperature, and `theta` for the statistical class).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReproCommitment {
    pub level: ReproLevel,
    #[serde(default)]
    pub config: BTreeMap<String, String>,
}

impl ReproCommitment {
    pub fn full() -> Self {
        Self {
            level: ReproLevel::Full,
            config: BTreeMap::from([("temperature".into(), "0".into())]),
        }
    }

    pub fn statistical(theta: f64) -> Self {
        Self {
            level: ReproLevel::Statistical,
            config: BTreeMap::from([
                ("temperature".into(), "0".into()),
                ("theta".into(), theta.to_string()),
            ]),
        }
    }

    pub fn none() -> Self {
        Self {
            level: ReproLevel::None,
            config: BTreeMap::new(),
        }
    }

    pub fn theta(&self) -> Option<f64> {
        self.config.get("theta")?.trim().parse().ok()
    }

    pub fn validate(&self) -> Result<(), CertError> {
        if self.level == ReproLevel::Statistical {
            match self.theta() {
                Some(t) if t > 0.0 && t <= 1.0 => {}
                _ => {
                    return Err(CertError::InvalidField(
                        "statistical commitment needs theta in (0, 1]".into(),
                    ))
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GovernanceLevel {
    #[serde(rename = "L1_posthoc")]
    L1Posthoc,
    #[serde(rename = "L2_sampled")]
    L2Sampled,
    #[serde(rename = "L3_compiletime")]
    L3Compiletime,
}

impl GovernanceLevel {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::L1Posthoc => "L1_posthoc",
            Self::L2Sampled => "L2_sampled",
            Self::L3Compiletime => "L3_compiletime",
        }
    }

    /// Compile-time safety requires bit-exact replay.
    pub fn admits(self, level: ReproLevel) -> bool {
        !matches!(self, Self::L3Compiletime) || level == ReproLevel::Full
    }
}

impl FromStr for GovernanceLevel {
    type Err = CertError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "L1_posthoc" | "L1" => Ok(Self::L1Posthoc),
            "L2_sampled" | "L2" => Ok(Self::L2Sampled),
            "L3_compiletime" | "L3" => Ok(Self::L3Compiletime),
            _ => Err(CertError::InvalidField(format!("unknown governance level {s:?}"))),
        }
    }
}

/// Non-agent (human/organisation) or agent node.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NodeType {
    NA,
    AG,
}

impl NodeType {
    pub fn as_str(self) -> &'static str {
        match self {
            NodeType::NA => "NA",
            NodeType::AG => "AG",
        }
    }
}

impl FromStr for NodeType {
    type Err = CertError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "NA" => Ok(NodeType::NA),
            "AG" => Ok(NodeType::AG),
            _ => Err(CertError::InvalidField(format!("unknown node type {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Certificate {
    pub id: String,
    pub parent_id: String,
    pub public_key: PublicKey,
    pub model: ModelBinding,
    pub manifest_hash: Digest,
    pub constraints: TrustConstraints,
    pub repro: ReproCommitment,
    pub governance_level: GovernanceLevel,
    pub node_type: NodeType,
    /// Epoch milliseconds, inclusive.
    pub not_before: u64,
    /// Epoch milliseconds, exclusive.
    pub not_after: u64,
    pub issuer_signature: Signature,
}

impl Certificate {
    pub fn is_self_signed(&self) -> bool {
        self.parent_id == self.id
    }

    pub fn valid_at(&self, now: u64) -> bool {
        self.not_before <= now && now < self.not_after
    }

    /// Bytes covered by the issuer signature.
    pub fn body_bytes(&self) -> Vec<u8> {
        wire::body_bytes(self)
    }

    pub fn signature_valid_under(&self, issuer_key: &PublicKey) -> bool {
        crypto::verify_signature(issuer_key.as_ref(), &self.body_bytes(), self.issuer_signature.as_ref())
    }

    /// Digest of the full encoded certificate; what ledger records bind to.
    pub fn fingerprint(&self) -> Digest {
        crypto::digest(&encode_certificate(self))
    }
}
