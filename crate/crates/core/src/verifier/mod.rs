//! Access verification over certificate chains.
//!
//! [`verify_access`] runs four phases in order and stops at the first
//! failure: chain integrity, capability binding, trust-constraint (tier)
//! check, revocation. Every rejection carries a reason code and the phase
//! that produced it.

mod revocation;
mod tree;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::RwLock;

use serde::{Deserialize, Serialize};

use crate::certificates::{
    constraint_leq, manifest_hash, Certificate, ModelBinding, NodeType,
    ReproLevel, SkillsManifest, Tier,
};
use crate::crypto::{PublicKey, Signature};

pub use revocation::{RevocationEntry, RevocationError, RevocationRegistry};
pub use tree::{validate_tree, TreeViolation, TrustTree};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    Allow,
    Deny,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Reason {
    Ok,
    UntrustedRoot,
    BadSignature,
    ConstraintViolation,
    ManifestMismatch,
    /// The runtime model differs from the certificate's model binding.
    ModelMismatch,
    TierExceeded,
    Revoked,
    Expired,
    TypeConstraint,
    DepthExhausted,
}

impl Reason {
    pub fn as_str(self) -> &'static str {
        match self {
            Reason::Ok => "OK",
            Reason::UntrustedRoot => "UNTRUSTED_ROOT",
            Reason::BadSignature => "BAD_SIGNATURE",
            Reason::ConstraintViolation => "CONSTRAINT_VIOLATION",
            Reason::ManifestMismatch => "MANIFEST_MISMATCH",
            Reason::ModelMismatch => "MODEL_MISMATCH",
            Reason::TierExceeded => "TIER_EXCEEDED",
            Reason::Revoked => "REVOKED",
            Reason::Expired => "EXPIRED",
            Reason::TypeConstraint => "TYPE_CONSTRAINT",
            Reason::DepthExhausted => "DEPTH_EXHAUSTED",
        }
    }
}

impl fmt::Display for Reason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessDecision {
    pub verdict: Verdict,
    pub reason: Reason,
    pub phase: Option<u8>,
}

impl AccessDecision {
    pub const ALLOW: AccessDecision = AccessDecision {
        verdict: Verdict::Allow,
        reason: Reason::Ok,
        phase: None,
    };

    pub fn deny(phase: u8, reason: Reason) -> Self {
        Self {
            verdict: Verdict::Deny,
            reason,
            phase: Some(phase),
        }
    }

    pub fn is_allow(&self) -> bool {
        self.verdict == Verdict::Allow
    }
}

/// A secret an agent asks to use, classified by risk tier.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Credential {
    pub id: String,
    pub tier: Tier,
    /// Opaque handle into whatever store holds the secret.
    #[serde(default)]
    pub secret_ref: String,
}

impl Credential {
    pub fn new(id: &str, tier: Tier) -> Self {
        Self {
            id: id.into(),
            tier,
            secret_ref: String::new(),
        }
    }
}

/// Trusted root certificate identities and keys.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TrustAnchors {
    keys: BTreeMap<String, PublicKey>,
}

impl TrustAnchors {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, id: &str, key: PublicKey) {
        self.keys.insert(id.to_owned(), key);
    }

    pub fn from_certs<'a>(certs: impl IntoIterator<Item = &'a Certificate>) -> Self {
        let mut anchors = Self::new();
        for c in certs {
            anchors.add(&c.id, c.public_key);
        }
        anchors
    }

    pub fn key_for(&self, id: &str) -> Option<&PublicKey> {
        self.keys.get(id)
    }

    /// Self-signed, listed with a matching key, and carrying a valid
    /// self-signature.
    pub fn trusts(&self, cert: &Certificate) -> bool {
        cert.is_self_signed()
            && self.keys.get(&cert.id) == Some(&cert.public_key)
            && cert.signature_valid_under(&cert.public_key)
    }
}

/// The agent's configuration as observed at the time of the request.
#[derive(Clone, Debug)]
pub struct RuntimeState<'a> {
    pub manifest: &'a SkillsManifest,
    /// When present, also compared against the leaf's model binding.
    pub model: Option<&'a ModelBinding>,
}

/// Tier an agent may actually exercise: one step less privileged when it
/// makes no reproducibility commitment.
pub fn effective_tier(cert: &Certificate) -> Tier {
    if cert.repro.level == ReproLevel::None {
        cert.constraints.max_tier.downgraded()
    } else {
        cert.constraints.max_tier
    }
}

/// Caches successful issuer-signature checks. Entries are looked up by
/// signature and hit only when issuer key and certificate are identical to
/// what was verified. Only positive results are stored.
#[derive(Debug, Default)]
pub struct SignatureCache {
    verified: RwLock<HashMap<Signature, Vec<(PublicKey, Certificate)>>>,
}

impl SignatureCache {
    fn check(&self, issuer: &PublicKey, cert: &Certificate) -> bool {
        let hit = |m: &HashMap<Signature, Vec<(PublicKey, Certificate)>>| {
            m.get(&cert.issuer_signature)
                .is_some_and(|v| v.iter().any(|(k, c)| k == issuer && c == cert))
        };
        if hit(&self.verified.read().expect("cache lock")) {
            return true;
        }
        let ok = cert.signature_valid_under(issuer);
        if ok {
            let mut m = self.verified.write().expect("cache lock");
            if !hit(&m) {
                m.entry(cert.issuer_signature)
                    .or_default()
                    .push((*issuer, cert.clone()));
            }
        }
        ok
    }

    pub fn len(&self) -> usize {
        self.verified.read().expect("cache lock").values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Verifier bound to a root set and revocation registry.
pub struct Verifier<'a> {
    pub roots: &'a TrustAnchors,
    pub revocations: &'a RevocationRegistry,
    cache: Option<&'a SignatureCache>,
}

impl<'a> Verifier<'a> {
    pub fn new(roots: &'a TrustAnchors, revocations: &'a RevocationRegistry) -> Self {
        Self {
            roots,
            revocations,
            cache: None,
        }
    }

    pub fn with_cache(mut self, cache: &'a SignatureCache) -> Self {
        self.cache = Some(cache);
        self
    }

    fn link_signature_ok(&self, issuer: &PublicKey, cert: &Certificate) -> bool {
        match self.cache {
            Some(c) => c.check(issuer, cert),
            None => cert.signature_valid_under(issuer),
        }
    }

    /// Phase 1 on its own: root trust, link signatures, type constraint,
    /// depth and constraint decay, validity windows.
    pub fn check_chain(&self, chain: &[Certificate], now: u64) -> Result<(), Reason> {
        let Some(root) = chain.first() else {
            return Err(Reason::UntrustedRoot);
        };
        let anchored = root.is_self_signed() && self.roots.key_for(&root.id) == Some(&root.public_key);
        if !anchored || !self.link_signature_ok(&root.public_key, root) {
            return Err(Reason::UntrustedRoot);
        }
        if !root.valid_at(now) {
            return Err(Reason::Expired);
        }
        for pair in chain.windows(2) {
            let (parent, child) = (&pair[0], &pair[1]);
            if !child.valid_at(now) {
                return Err(Reason::Expired);
            }
            if child.parent_id != parent.id || !self.link_signature_ok(&parent.public_key, child) {
                return Err(Reason::BadSignature);
            }
            if parent.node_type == NodeType::AG && child.node_type == NodeType::NA {
                return Err(Reason::TypeConstraint);
            }
            if parent.constraints.max_depth == 0 {
                return Err(Reason::DepthExhausted);
            }
            if !constraint_leq(&child.constraints, &parent.constraints) {
                return Err(Reason::ConstraintViolation);
            }
        }
        Ok(())
    }

    pub fn verify(
        &self,
        chain: &[Certificate],
        credential: &Credential,
        runtime: &RuntimeState<'_>,
        now: u64,
    ) -> AccessDecision {
        if let Err(reason) = self.check_chain(chain, now) {
            return AccessDecision::deny(1, reason);
        }
        let leaf = chain.last().expect("non-empty after phase 1");

        match manifest_hash(runtime.manifest) {
            Ok(h) if h == leaf.manifest_hash => {}
            _ => return AccessDecision::deny(2, Reason::ManifestMismatch),
        }
        if runtime.model.is_some_and(|m| m != &leaf.model) {
            return AccessDecision::deny(2, Reason::ModelMismatch);
        }

        if !credential.tier.within(effective_tier(leaf)) {
            return AccessDecision::deny(3, Reason::TierExceeded);
        }

        if chain.iter().any(|c| self.revocations.is_revoked(&c.id)) {
            return AccessDecision::deny(4, Reason::Revoked);
        }
        AccessDecision::ALLOW
    }

    /// Each agent is evaluated in isolation; the set is allowed only if
    /// some single member is. No permissions are pooled.
    pub fn combined(
        &self,
        agents: &[(&[Certificate], RuntimeState<'_>)],
        credential: &Credential,
        now: u64,
    ) -> AccessDecision {
        let mut first_denial = None;
        for (chain, runtime) in agents {
            let d = self.verify(chain, credential, runtime, now);
            if d.is_allow() {
                return d;
            }
            first_denial.get_or_insert(d);
        }
        first_denial.unwrap_or(AccessDecision::deny(3, Reason::TierExceeded))
    }
}

/// Uncached one-shot verification.
pub fn verify_access(
    chain: &[Certificate],
    credential: &Credential,
    runtime_manifest: &SkillsManifest,
    roots: &TrustAnchors,
    revocations: &RevocationRegistry,
    now: u64,
) -> AccessDecision {
    let runtime = RuntimeState {
        manifest: runtime_manifest,
        model: None,
    };
    Verifier::new(roots, revocations).verify(chain, credential, &runtime, now)
}

/// Tier-only collusion check over agent certificates: ALLOW iff some
/// single agent's effective tier covers the credential.
pub fn combined_access(agents: &[Certificate], credential: &Credential) -> AccessDecision {
    if agents
        .iter()
        .any(|a| credential.tier.within(effective_tier(a)))
    {
        AccessDecision::ALLOW
    } else {
        AccessDecision::deny(3, Reason::TierExceeded)
    }
}
