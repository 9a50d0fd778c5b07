//! Deterministic PKI builder used by the simulation harness, the CLI
//! golden tests and unit tests. Keys derive from names, so the same
//! topology always produces byte-identical certificates.

use std::collections::{BTreeMap, BTreeSet};

use crate::certificates::{
    issue_certificate, issue_root, manifest_hash, CertError, Certificate, GovernanceLevel,
    ModelBinding, NodeType, Rate, ReproCommitment, SkillsManifest, SubjectFields, Tier,
    TrustConstraints,
};
use crate::crypto::{self, KeyPair};
use crate::verifier::{TrustAnchors, TrustTree};

/// 2026-01-01T00:00:00Z in epoch milliseconds.
pub const EPOCH_MS: u64 = 1_767_225_600_000;
pub const YEAR_MS: u64 = 365 * 86_400_000;

pub const MODEL_SONNET: &str = "claude-sonnet-4";
pub const MODEL_HAIKU: &str = "claude-haiku-4-5";

pub fn key_for(name: &str) -> KeyPair {
    let seed = crypto::digest(format!("govkit-fixture-key:{name}").as_bytes());
    crypto::generate_keypair(seed.as_ref()).expect("digest is 32 bytes")
}

pub fn sonnet() -> ModelBinding {
    ModelBinding::new("anthropic", MODEL_SONNET, "2025-05-14")
}

pub fn haiku() -> ModelBinding {
    ModelBinding::new("anthropic", MODEL_HAIKU, "2025-10-01")
}

/// Requested properties of a node to be issued.
#[derive(Clone, Debug)]
pub struct NodeSpec {
    pub id: String,
    pub node_type: NodeType,
    pub tier: Tier,
    pub depth: u32,
    pub model: ModelBinding,
    pub manifest: SkillsManifest,
    pub repro: ReproCommitment,
    pub governance: GovernanceLevel,
    pub allowed_models: BTreeSet<String>,
    pub rate: Rate,
}

impl NodeSpec {
    pub fn principal(id: &str, depth: u32) -> Self {
        Self {
            id: id.into(),
            node_type: NodeType::NA,
            tier: Tier::T0,
            depth,
            model: ModelBinding::new("none", "human", "0"),
            manifest: SkillsManifest::default(),
            repro: ReproCommitment::none(),
            governance: GovernanceLevel::L1Posthoc,
            allowed_models: [MODEL_SONNET, MODEL_HAIKU].iter().map(|s| s.to_string()).collect(),
            rate: Rate::per_second(100),
        }
    }

    pub fn agent(id: &str, tier: Tier, depth: u32) -> Self {
        Self {
            id: id.into(),
            node_type: NodeType::AG,
            tier,
            depth,
            model: sonnet(),
            manifest: SkillsManifest::default(),
            repro: ReproCommitment::full(),
            governance: GovernanceLevel::L2Sampled,
            allowed_models: [MODEL_SONNET, MODEL_HAIKU].iter().map(|s| s.to_string()).collect(),
            rate: Rate::per_second(100),
        }
    }

    pub fn manifest(mut self, manifest: SkillsManifest) -> Self {
        self.manifest = manifest;
        self
    }

    pub fn repro(mut self, repro: ReproCommitment) -> Self {
        self.repro = repro;
        self
    }

    pub fn model(mut self, model: ModelBinding) -> Self {
        self.model = model;
        self
    }

    pub fn rate(mut self, rate: Rate) -> Self {
        self.rate = rate;
        self
    }

    pub fn subject(&self, key: &KeyPair) -> Result<SubjectFields, CertError> {
        Ok(SubjectFields {
            id: self.id.clone(),
            public_key: key.public_key(),
            model: self.model.clone(),
            manifest_hash: manifest_hash(&self.manifest)?,
            constraints: TrustConstraints {
                max_tier: self.tier,
                max_depth: self.depth,
                allowed_models: self.allowed_models.clone(),
                max_rate: self.rate,
            },
            repro: self.repro.clone(),
            governance_level: self.governance,
            node_type: self.node_type,
            not_before: EPOCH_MS,
            not_after: EPOCH_MS + YEAR_MS,
        })
    }
}

/// Certificates, keys and manifests for one trust forest.
#[derive(Clone, Debug, Default)]
pub struct Pki {
    pub anchors: TrustAnchors,
    certs: BTreeMap<String, Certificate>,
    keys: BTreeMap<String, KeyPair>,
    manifests: BTreeMap<String, SkillsManifest>,
}

impl Pki {
    pub fn with_root(id: &str, depth: u32) -> Self {
        let mut pki = Self::default();
        pki.add_root(NodeSpec::principal(id, depth))
            .expect("fixture root is valid");
        pki
    }

    pub fn add_root(&mut self, spec: NodeSpec) -> Result<&Certificate, CertError> {
        let key = key_for(&spec.id);
        let cert = issue_root(spec.subject(&key)?, &key)?;
        self.anchors.add(&cert.id, cert.public_key);
        Ok(self.store(spec, key, cert))
    }

    pub fn issue(&mut self, parent: &str, spec: NodeSpec) -> Result<&Certificate, CertError> {
        let key = key_for(&spec.id);
        let issuer = self
            .certs
            .get(parent)
            .ok_or_else(|| CertError::InvalidField(format!("unknown issuer {parent}")))?;
        let cert = issue_certificate(issuer, &self.keys[parent], spec.subject(&key)?, EPOCH_MS)?;
        Ok(self.store(spec, key, cert))
    }

    /// Inserts a certificate produced outside the issuance rules.
    pub fn insert_raw(&mut self, cert: Certificate, key: KeyPair, manifest: SkillsManifest) {
        self.keys.insert(cert.id.clone(), key);
        self.manifests.insert(cert.id.clone(), manifest);
        self.certs.insert(cert.id.clone(), cert);
    }

    fn store(&mut self, spec: NodeSpec, key: KeyPair, cert: Certificate) -> &Certificate {
        let id = spec.id.clone();
        self.keys.insert(id.clone(), key);
        self.manifests.insert(id.clone(), spec.manifest);
        self.certs.insert(id.clone(), cert);
        &self.certs[&id]
    }

    pub fn cert(&self, id: &str) -> &Certificate {
        &self.certs[id]
    }

    pub fn key(&self, id: &str) -> &KeyPair {
        &self.keys[id]
    }

    pub fn manifest(&self, id: &str) -> &SkillsManifest {
        &self.manifests[id]
    }

    pub fn certs(&self) -> impl Iterator<Item = &Certificate> {
        self.certs.values()
    }

    pub fn tree(&self) -> TrustTree {
        let mut tree = TrustTree::new(self.anchors.clone());
        for c in self.certs.values() {
            tree.insert(c.clone());
        }
        tree
    }

    pub fn chain(&self, id: &str) -> Vec<Certificate> {
        self.tree().chain_to(id).expect("fixture chain is linked")
    }
}
