use serde::{Deserialize, Serialize};

use super::{
    constraint_leq, CertError, Certificate, GovernanceLevel, ModelBinding, NodeType,
    ReproCommitment, TrustConstraints,
};
use crate::crypto::{Digest, KeyPair, PublicKey, Signature};

/// Everything the issuer attests about the subject.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubjectFields {
    pub id: String,
    pub public_key: PublicKey,
    pub model: ModelBinding,
    pub manifest_hash: Digest,
    pub constraints: TrustConstraints,
    pub repro: ReproCommitment,
    pub governance_level: GovernanceLevel,
    pub node_type: NodeType,
    pub not_before: u64,
    pub not_after: u64,
}

impl SubjectFields {
    fn validate(&self) -> Result<(), CertError> {
        if self.id.is_empty() {
            return Err(CertError::InvalidField("id is empty".into()));
        }
        let m = &self.model;
        if m.provider.is_empty() || m.model_id.is_empty() || m.model_ver.is_empty() {
            return Err(CertError::InvalidField("model binding has an empty field".into()));
        }
        if self.not_before >= self.not_after {
            return Err(CertError::InvalidField("not_before must precede not_after".into()));
        }
        self.repro.validate()?;
        if !self.governance_level.admits(self.repro.level) {
            return Err(CertError::InvalidField(
                "L3_compiletime requires a full reproducibility commitment".into(),
            ));
        }
        Ok(())
    }
}

/// Signs the subject under `issuer_key` without any policy checks. This is
/// what an attacker holding a key can always do; verification is what
/// rejects the result.
pub fn sign_unchecked(issuer_key: &KeyPair, parent_id: &str, subject: SubjectFields) -> Certificate {
    let mut cert = Certificate {
        id: subject.id,
        parent_id: parent_id.to_owned(),
        public_key: subject.public_key,
        model: subject.model,
        manifest_hash: subject.manifest_hash,
        constraints: subject.constraints,
        repro: subject.repro,
        governance_level: subject.governance_level,
        node_type: subject.node_type,
        not_before: subject.not_before,
        not_after: subject.not_after,
        issuer_signature: Signature([0u8; 64]),
    };
    cert.issuer_signature = issuer_key.sign(&cert.body_bytes());
    cert
}

/// Self-signed trust anchor. Roots are non-agent principals.
pub fn issue_root(subject: SubjectFields, key: &KeyPair) -> Result<Certificate, CertError> {
    subject.validate()?;
    if subject.node_type != NodeType::NA {
        return Err(CertError::TypeConstraint);
    }
    if subject.public_key != key.public_key() {
        return Err(CertError::IssuerKeyMismatch);
    }
    let id = subject.id.clone();
    Ok(sign_unchecked(key, &id, subject))
}

/// Issue `subject` under `issuer`, enforcing the structural type constraint
/// and monotone constraint decay.
pub fn issue_certificate(
    issuer: &Certificate,
    issuer_key: &KeyPair,
    subject: SubjectFields,
    now: u64,
) -> Result<Certificate, CertError> {
    if !issuer.valid_at(now) {
        return Err(CertError::ExpiredIssuer { now });
    }
    if issuer_key.public_key() != issuer.public_key {
        return Err(CertError::IssuerKeyMismatch);
    }
    subject.validate()?;
    if issuer.node_type == NodeType::AG && subject.node_type == NodeType::NA {
        return Err(CertError::TypeConstraint);
    }
    if issuer.constraints.max_depth == 0 {
        return Err(CertError::DepthExhausted);
    }
    if !constraint_leq(&subject.constraints, &issuer.constraints) {
        return Err(CertError::ConstraintViolation);
    }
    Ok(sign_unchecked(issuer_key, &issuer.id, subject))
}
