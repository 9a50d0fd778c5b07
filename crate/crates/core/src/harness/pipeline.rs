use std::collections::{BTreeMap, HashMap, HashSet};
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{Detection, GovernanceMode, Layer, LayerTimings, PipelineConfig};
use crate::certificates::{
    manifest_hash, CertError, Certificate, ModelBinding, ReproCommitment, SkillEntry,
    SkillsManifest, Tier,
};
use crate::crypto::{self, PublicKey};
use crate::fixtures::{NodeSpec, Pki, EPOCH_MS};
use crate::ledger::{
    audit, AuditReport, Disclosure, Ledger, Marker, RecordDraft, ReproAnchor,
};
use crate::repro::{
    chain_verifiability_depth, replay_verify, DepthReport, ModelExecutor, ReplayError, ParaphraseNoise, SeededGenerator,
    Verdict as ReplayOutcome,
};
use crate::verifier::{
    effective_tier, Credential, RevocationRegistry, RuntimeState, SignatureCache, Verifier,
};

pub const ROLES: [&str; 4] = ["research", "analysis", "writer", "review"];
pub const ROOT: &str = "root";
pub const ORG: &str = "org";
pub const COORDINATOR: &str = "coord";

/// Noise rate of the statistical-class specialists.
const PARAPHRASE_RATE: f64 = 0.02;

pub fn specialist_id(i: usize) -> String {
    let role = ROLES[i % ROLES.len()];
    if i < ROLES.len() {
        role.to_owned()
    } else {
        format!("{role}-{}", i / ROLES.len() + 1)
    }
}

fn role_of(id: &str) -> &str {
    id.split('-').next().unwrap_or(id)
}

pub fn tool_manifest(role: &str) -> SkillsManifest {
    let e = |sid: &str, src: &str, scope: &str| SkillEntry::from_source(sid, "1.0.0", src.as_bytes(), &[scope]);
    SkillsManifest::new(match role {
        "research" => vec![
            SkillEntry::from_descriptor("web_search", "2.1.0", "{q:string}", &["net:read"]),
            e("pdf_reader", "fn read_pdf(p) { parse(p) }", "fs:read"),
        ],
        "analysis" => vec![e("python_exec", "def run(code): sandbox(code)", "exec:sandbox")],
        "writer" => vec![e("doc_writer", "fn write(doc) { store(doc) }", "fs:write")],
        "review" => vec![e("fact_check", "fn check(c) { lookup(c) }", "net:read")],
        _ => vec![e("planner", "fn plan(task) { split(task) }", "plan")],
    })
}

fn repro_for(role: &str) -> ReproCommitment {
    match role {
        "analysis" | "writer" => ReproCommitment::statistical(0.85),
        _ => ReproCommitment::full(),
    }
}

fn spec_for(id: &str, depth: u32) -> NodeSpec {
    let role = role_of(id);
    let (tier, depth) = match role {
        "review" => (Tier::T3, 0),
        _ => (Tier::T2, depth),
    };
    NodeSpec::agent(id, tier, depth)
        .manifest(tool_manifest(role))
        .repro(repro_for(role))
}

/// Builds the trust forest for `config`:
/// root (NA) -> org (NA) -> coordinator (AG, T1) -> specialists.
pub fn build_pki(config: &PipelineConfig) -> Result<Pki, CertError> {
    let mut pki = Pki::with_root(ROOT, 4);
    pki.issue(ROOT, NodeSpec::principal(ORG, 3))?;
    let coord = NodeSpec::agent(COORDINATOR, Tier::T1, 2)
        .manifest(tool_manifest("coord"))
        .repro(repro_for("coord"));
    pki.issue(ORG, with_repro(coord, config))?;
    for i in 0..config.specialists() {
        let id = specialist_id(i);
        let spec = with_repro(spec_for(&id, 1), config);
        pki.issue(COORDINATOR, spec)?;
    }
    Ok(pki)
}

fn with_repro(spec: NodeSpec, config: &PipelineConfig) -> NodeSpec {
    if config.uncommitted.contains(&spec.id) {
        spec.repro(ReproCommitment::none())
    } else {
        spec
    }
}

/// Calls of one run: the org submits the task to the coordinator, the
/// coordinator dispatches every specialist, and specialists hand off
/// along the role sequence.
pub fn script(agent_count: usize) -> Vec<(String, String)> {
    let s = agent_count.saturating_sub(1);
    let mut calls = vec![(ORG.to_owned(), COORDINATOR.to_owned())];
    for i in 0..s {
        calls.push((COORDINATOR.to_owned(), specialist_id(i)));
    }
    let handoffs = ((3 * s + 2) / 4).saturating_sub(1);
    for i in 0..handoffs {
        calls.push((specialist_id(i), specialist_id(i + 1)));
    }
    calls
}

/// Plaintext trace kept by the trace-only baseline: no signatures, no
/// chaining.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub from: String,
    pub to: String,
    pub input: String,
    pub output: String,
}

/// One simulated run in progress.
pub struct Pipeline {
    pub config: PipelineConfig,
    pub pki: Pki,
    pub runtime_manifests: BTreeMap<String, SkillsManifest>,
    pub runtime_models: BTreeMap<String, ModelBinding>,
    pub executors: BTreeMap<String, Box<dyn ModelExecutor>>,
    pub ledger: Ledger,
    pub traces: Vec<TraceEntry>,
    pub disclosures: BTreeMap<u64, Disclosure>,
    pub detections: Vec<Detection>,
    pub timings: LayerTimings,
    pub governed_calls: usize,
    pub revocations: RevocationRegistry,
    chains: BTreeMap<String, Vec<Certificate>>,
    lineage: BTreeMap<String, Vec<String>>,
    outputs: BTreeMap<String, String>,
    /// Receivers recorded per sender, for auditability depth.
    hops: HashMap<String, HashSet<String>>,
    cache: Arc<SignatureCache>,
    clock: u64,
}

impl Pipeline {
    pub fn new(config: PipelineConfig) -> Result<Self, CertError> {
        let pki = build_pki(&config)?;
        let mut p = Self {
            config,
            runtime_manifests: BTreeMap::new(),
            runtime_models: BTreeMap::new(),
            executors: BTreeMap::new(),
            ledger: Ledger::in_memory(),
            traces: Vec::new(),
            disclosures: BTreeMap::new(),
            detections: Vec::new(),
            timings: LayerTimings::default(),
            governed_calls: 0,
            revocations: RevocationRegistry::new(),
            chains: BTreeMap::new(),
            lineage: BTreeMap::new(),
            outputs: BTreeMap::new(),
            hops: HashMap::new(),
            cache: Arc::default(),
            clock: EPOCH_MS + 60_000,
            pki,
        };
        let ids: Vec<String> = p.pki.certs().map(|c| c.id.clone()).collect();
        for id in ids {
            p.refresh_agent(&id);
        }
        Ok(p)
    }

    /// Resets runtime state and the executor of `id` to what its
    /// certificate declares.
    pub fn refresh_agent(&mut self, id: &str) {
        let cert = self.pki.cert(id).clone();
        self.runtime_manifests
            .insert(id.to_owned(), self.pki.manifest(id).clone());
        self.runtime_models.insert(id.to_owned(), cert.model.clone());
        let honest = SeededGenerator::new(cert.model.clone());
        let exec: Box<dyn ModelExecutor> = match cert.repro.level {
            crate::certificates::ReproLevel::Statistical => Box::new(ParaphraseNoise::new(
                honest,
                PARAPHRASE_RATE,
                self.config.seed,
            )),
            _ => Box::new(honest),
        };
        self.executors.insert(id.to_owned(), exec);
        if let Some(chain) = self.pki.tree().chain_to(id) {
            self.chains.insert(id.to_owned(), chain);
        }
    }

    /// Registers a certificate produced outside issuance rules, as an
    /// attacker would.
    pub fn inject_cert(&mut self, cert: Certificate, key: crypto::KeyPair, manifest: SkillsManifest) {
        let id = cert.id.clone();
        self.pki.insert_raw(cert, key, manifest);
        self.refresh_agent(&id);
    }

    /// Shares a verifier cache with other runs, as a long-lived gateway
    /// would.
    pub fn with_cache(mut self, cache: Arc<SignatureCache>) -> Self {
        self.cache = cache;
        self
    }

    /// Replaces the certificate chain an agent presents.
    pub fn present_chain(&mut self, id: &str, chain: Vec<Certificate>) {
        self.chains.insert(id.to_owned(), chain);
    }

    pub fn chain(&self, id: &str) -> &[Certificate] {
        &self.chains[id]
    }

    pub fn key_directory(&self) -> BTreeMap<String, PublicKey> {
        self.pki.certs().map(|c| (c.id.clone(), c.public_key)).collect()
    }

    fn tick(&mut self) -> u64 {
        self.clock += 1;
        self.clock
    }

    fn call_seed(&self, seq: u64) -> u64 {
        let d = crypto::digest(&[self.config.seed.to_le_bytes(), seq.to_le_bytes()].concat());
        u64::from_le_bytes(d.0[..8].try_into().expect("8 bytes"))
    }

    pub(super) fn auth_only_ok(&self, chain: &[Certificate]) -> bool {
        let Some(root) = chain.first() else {
            return false;
        };
        self.pki.anchors.trusts(root)
            && chain
                .windows(2)
                .all(|w| w[1].parent_id == w[0].id && w[1].signature_valid_under(&w[0].public_key))
    }

    pub(super) fn deny(&mut self, agent: &str, layer: Layer, reason: &str, phase: Option<u8>) {
        self.detections.push(Detection {
            layer,
            reason: reason.to_owned(),
            phase,
            seq: None,
            agent: Some(agent.to_owned()),
        });
    }

    /// One governed call: `to` acts on input from `from`. Returns the
    /// output, or `None` when governance denied the call or its input was
    /// never produced.
    pub fn call(&mut self, from: &str, to: &str) -> Option<String> {
        let input = if from == ORG {
            format!("task {}: prepare a research brief on governed agent pipelines", self.config.seed)
        } else if from == COORDINATOR {
            format!(
                "subtask for {to}: {}",
                self.outputs.get(COORDINATOR)?.split(' ').take(8).collect::<Vec<_>>().join(" ")
            )
        } else {
            self.outputs.get(from)?.clone()
        };
        self.governed_calls += 1;
        let now = self.tick();
        let chain = self.chains.get(to)?.clone();
        let leaf = chain.last()?.clone();
        let credential = Credential::new(&format!("tool:{to}"), effective_tier(&leaf));

        match self.config.mode {
            GovernanceMode::Full => {
                let t = Instant::now();
                let runtime = RuntimeState {
                    manifest: &self.runtime_manifests[to],
                    model: self.runtime_models.get(to),
                };
                let d = Verifier::new(&self.pki.anchors, &self.revocations)
                    .with_cache(&self.cache)
                    .verify(&chain, &credential, &runtime, now);
                self.timings.g1 += t.elapsed();
                if !d.is_allow() {
                    self.deny(to, Layer::G1, d.reason.as_str(), d.phase);
                    return None;
                }
            }
            GovernanceMode::AuthOnly => {
                if !self.auth_only_ok(&chain) {
                    self.deny(to, Layer::G1, "AUTH_FAILED", None);
                    return None;
                }
            }
            GovernanceMode::None | GovernanceMode::TraceOnly => {}
        }

        let seq = self.ledger.next_seq();
        let seed = self.call_seed(seq);
        let output = self.executors[to].execute(input.as_bytes(), seed, &leaf.repro.config);
        if self.config.tool_latency > Duration::ZERO {
            std::thread::sleep(self.config.tool_latency);
        }

        let mut path = if from == ORG {
            vec![ORG.to_owned()]
        } else {
            self.lineage.get(from).cloned().unwrap_or_else(|| vec![from.to_owned()])
        };
        path.push(to.to_owned());

        match self.config.mode {
            GovernanceMode::Full => {
                let t = Instant::now();
                let sender_cert = self.pki.cert(from);
                let skills_hash = manifest_hash(&self.runtime_manifests[to]).unwrap_or_default();
                let mut draft = RecordDraft::for_exchange(
                    now,
                    from,
                    to,
                    sender_cert.fingerprint(),
                    leaf.fingerprint(),
                    input.as_bytes(),
                    output.as_bytes(),
                    ReproAnchor {
                        seed,
                        model_ver: leaf.model.model_ver.clone(),
                        skills_hash,
                    },
                );
                if self.partial_at(&path) {
                    draft = draft.marked(Marker::PartialVerifiability);
                }
                self.timings.g2 += t.elapsed();

                let t = Instant::now();
                let appended = self
                    .ledger
                    .append(draft, self.pki.key(from), self.pki.key(to))
                    .is_ok();
                self.timings.g3 += t.elapsed();
                if !appended {
                    self.deny(to, Layer::G3, "STORAGE_FAILURE", None);
                    return None;
                }
                self.hops.entry(from.to_owned()).or_default().insert(to.to_owned());
                self.disclosures
                    .insert(seq, Disclosure::new(input.clone(), output.clone()));
            }
            GovernanceMode::TraceOnly => self.traces.push(TraceEntry {
                from: from.to_owned(),
                to: to.to_owned(),
                input,
                output: output.clone(),
            }),
            _ => {}
        }
        self.lineage.insert(to.to_owned(), path);
        self.outputs.insert(to.to_owned(), output.clone());
        Some(output)
    }

    /// Whether the hop ending `path` must carry the partial-verifiability
    /// marker, given records appended so far.
    fn partial_at(&self, path: &[String]) -> bool {
        let Some(certs) = path
            .iter()
            .map(|id| self.chains.get(id).and_then(|c| c.last().cloned()))
            .collect::<Option<Vec<_>>>()
        else {
            return false;
        };
        let Ok(cvd) = chain_verifiability_depth(&certs) else {
            return false;
        };
        let n = path.len() - 1;
        let recorded = |j: usize| self.hops.get(&path[j - 1]).is_some_and(|r| r.contains(&path[j]));
        let cad = (1..=n).find(|&j| !recorded(j)).unwrap_or(n);
        DepthReport {
            n,
            cvd,
            cad,
            effective: cvd.min(cad),
        }
        .marks_hop(n)
    }

    pub fn run_script(&mut self) {
        for (from, to) in script(self.config.agent_count) {
            self.call(&from, &to);
        }
    }

    pub fn audit(&self) -> AuditReport {
        audit(&self.ledger, &self.key_directory())
    }

    /// Re-executes every receiving agent that committed to
    /// reproducibility with its declared model, and records violations.
    pub fn replay_all(&mut self) -> Vec<(u64, ReplayOutcome, Option<f64>)> {
        let mut out = Vec::new();
        for r in self.ledger.records().to_vec() {
            let Some(cert) = self.chains.get(&r.receiver_id).and_then(|c| c.last()).cloned() else {
                continue;
            };
            let Some(d) = self.disclosures.get(&r.seq) else {
                continue;
            };
            let declared = SeededGenerator::new(cert.model.clone());
            let original = String::from_utf8_lossy(&d.output);
            match replay_verify(&cert, &r, &original, &d.input, &declared) {
                Ok(v) => {
                    let score = v.report.map(|s| s.char_match);
                    if v.verdict == ReplayOutcome::Violation {
                        self.detections.push(Detection {
                            layer: Layer::G2,
                            reason: "VIOLATION".into(),
                            phase: None,
                            seq: Some(r.seq),
                            agent: Some(r.receiver_id.clone()),
                        });
                    }
                    out.push((r.seq, v.verdict, score));
                }
                Err(e) => self.detections.push(Detection {
                    layer: Layer::G2,
                    reason: match e {
                        ReplayError::InputCommitmentMismatch => "INPUT_COMMITMENT_MISMATCH".into(),
                        other => other.to_string(),
                    },
                    phase: None,
                    seq: Some(r.seq),
                    agent: Some(r.receiver_id.clone()),
                }),
            }
        }
        out
    }
}
