//! Simulated multi-agent pipeline with attack injection and overhead
//! measurement. Executors are mocks, so runs are deterministic given a
//! seed and need no network.

mod pipeline;
mod scenarios;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::certificates::CertError;
use crate::ledger::AuditReport;
use crate::verifier::SignatureCache;

pub use pipeline::{
    build_pki, script, specialist_id, tool_manifest, Pipeline, TraceEntry, COORDINATOR, ORG,
    ROLES, ROOT,
};
pub use scenarios::{
    run_attack, run_baseline_comparison, tamper_output_commitment, BaselineMatrix, BaselineRow,
    Resign, Scenario, MIN_ATTACK_AGENTS,
};

pub const REPORT_SCHEMA: &str = "govkit.run-report/1";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("attack scenarios need at least {MIN_ATTACK_AGENTS} agents, got {0}")]
    TooFewAgents(usize),
    #[error("topology failed to issue: {0}")]
    Issuance(#[from] CertError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Layer {
    G1,
    G2,
    G3,
}

/// Which checks a run performs. Everything except `Full` is a baseline.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GovernanceMode {
    /// No checks at all.
    None,
    /// Certificate signatures up to a trusted root; nothing else.
    AuthOnly,
    /// Plaintext call traces without signatures or chaining.
    TraceOnly,
    Full,
}

impl GovernanceMode {
    pub const BASELINES: [GovernanceMode; 3] =
        [GovernanceMode::None, GovernanceMode::AuthOnly, GovernanceMode::TraceOnly];

    pub fn as_str(self) -> &'static str {
        match self {
            GovernanceMode::None => "none",
            GovernanceMode::AuthOnly => "auth-only",
            GovernanceMode::TraceOnly => "trace-only",
            GovernanceMode::Full => "full",
        }
    }
}

impl fmt::Display for GovernanceMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GovernanceMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [Self::None, Self::AuthOnly, Self::TraceOnly, Self::Full]
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown governance mode {s:?}"))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Coordinator plus specialists; 5, 10 and 20 are the reference sizes.
    pub agent_count: usize,
    pub seed: u64,
    pub mode: GovernanceMode,
    /// Agents issued without a reproducibility commitment.
    #[serde(default)]
    pub uncommitted: BTreeSet<String>,
    /// Simulated tool latency per call, excluded from governance timings.
    #[serde(default, with = "duration_micros")]
    pub tool_latency: Duration,
}

mod duration_micros {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_micros() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_micros(u64::deserialize(d)?))
    }
}

impl PipelineConfig {
    pub fn new(agent_count: usize, seed: u64) -> Self {
        Self {
            agent_count,
            seed,
            mode: GovernanceMode::Full,
            uncommitted: BTreeSet::new(),
            tool_latency: Duration::ZERO,
        }
    }

    pub fn mode(mut self, mode: GovernanceMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn specialists(&self) -> usize {
        self.agent_count.saturating_sub(1)
    }

    pub fn expected_calls(&self) -> usize {
        script(self.agent_count).len()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct LayerTimings {
    pub g1: Duration,
    pub g2: Duration,
    pub g3: Duration,
}

impl LayerTimings {
    pub fn total(&self) -> Duration {
        self.g1 + self.g2 + self.g3
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingSummary {
    pub g1_us: f64,
    pub g2_us: f64,
    pub g3_us: f64,
    pub total_us: f64,
}

impl From<LayerTimings> for TimingSummary {
    fn from(t: LayerTimings) -> Self {
        let us = |d: Duration| d.as_secs_f64() * 1e6;
        Self {
            g1_us: us(t.g1),
            g2_us: us(t.g2),
            g3_us: us(t.g3),
            total_us: us(t.total()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Detection {
    pub layer: Layer,
    /// Reason code: a verifier reason, an audit failure or a replay verdict.
    pub reason: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phase: Option<u8>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seq: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub agent: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpectedDetection {
    pub layer: Layer,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema: String,
    pub agents: usize,
    pub seed: u64,
    pub mode: GovernanceMode,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scenario: Option<Scenario>,
    pub governed_calls: usize,
    pub ledger_entries: usize,
    pub ledger_bytes: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub audit: Option<AuditReport>,
    pub timings: TimingSummary,
    pub detections: Vec<Detection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub expected: Option<ExpectedDetection>,
    /// For attack runs: whether a detection matched the expected layer and
    /// reason.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detected: Option<bool>,
    /// Detections that do not correspond to an injected attack.
    pub false_positive_count: usize,
}

impl RunReport {
    pub(crate) fn from_pipeline(p: &Pipeline, audit: Option<AuditReport>) -> Self {
        Self {
            schema: REPORT_SCHEMA.into(),
            agents: p.config.agent_count,
            seed: p.config.seed,
            mode: p.config.mode,
            scenario: None,
            governed_calls: p.governed_calls,
            ledger_entries: p.ledger.len(),
            ledger_bytes: p.ledger.to_bytes().len(),
            audit,
            timings: p.timings.into(),
            detections: p.detections.clone(),
            expected: None,
            detected: None,
            false_positive_count: p.detections.len(),
        }
    }
}

/// Runs the scripted calls with every check enabled, audits the ledger and
/// replays every committed agent. A clean run has no detections.
pub fn run_clean_pipeline(config: &PipelineConfig) -> Result<RunReport, HarnessError> {
    let mut p = Pipeline::new(config.clone())?;
    p.run_script();
    let audit = (config.mode == GovernanceMode::Full).then(|| {
        p.replay_all();
        p.audit()
    });
    if let Some(a) = &audit {
        if !a.ok {
            p.detections.push(Detection {
                layer: Layer::G3,
                reason: a.failure.map_or("AUDIT_FAILED", |f| f.as_str()).into(),
                phase: None,
                seq: a.first_bad_seq,
                agent: None,
            });
        }
    }
    Ok(RunReport::from_pipeline(&p, audit))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub agents: usize,
    pub ledger_entries: usize,
    /// Per-layer medians over repetitions.
    pub median: TimingSummary,
    pub per_agent_us: f64,
    pub storage_bytes: usize,
    pub g3_share: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OverheadReport {
    pub repetitions: usize,
    pub rows: Vec<ScalingRow>,
    /// Largest over smallest per-agent cost across rows.
    pub per_agent_spread: f64,
    pub wall_clock_ms: f64,
}

/// Median governance cost per run for each agent count, with the
/// verifier cache warm. Agent counts are interleaved within each
/// repetition so drift in machine load affects every row alike.
pub fn measure_overhead(
    agent_counts: &[usize],
    repetitions: usize,
    tool_latency: Duration,
) -> Result<OverheadReport, HarnessError> {
    let start = Instant::now();
    let reps = repetitions.max(1);
    // the topology is seed-independent, so one gateway cache per size
    // serves every repetition; the unmeasured first round warms it
    let caches: Vec<Arc<SignatureCache>> = agent_counts.iter().map(|_| Arc::default()).collect();
    let mut runs: Vec<Vec<LayerTimings>> = vec![Vec::new(); agent_counts.len()];
    let mut sizes = vec![(0, 0); agent_counts.len()];
    for rep in 0..=reps {
        for (i, &agents) in agent_counts.iter().enumerate() {
            let mut cfg = PipelineConfig::new(agents, rep as u64);
            cfg.tool_latency = tool_latency;
            let mut p = Pipeline::new(cfg)?.with_cache(Arc::clone(&caches[i]));
            p.run_script();
            if rep > 0 {
                runs[i].push(p.timings);
                sizes[i] = (p.ledger.len(), p.ledger.to_bytes().len());
            }
        }
    }
    let median = |v: &[LayerTimings], f: fn(&LayerTimings) -> Duration| {
        let mut d: Vec<Duration> = v.iter().map(f).collect();
        d.sort();
        d[d.len() / 2]
    };
    let rows: Vec<ScalingRow> = agent_counts
        .iter()
        .zip(&runs)
        .zip(&sizes)
        .map(|((&agents, v), &(entries, storage))| {
            let summary = TimingSummary::from(LayerTimings {
                g1: median(v, |t| t.g1),
                g2: median(v, |t| t.g2),
                g3: median(v, |t| t.g3),
            });
            ScalingRow {
                agents,
                ledger_entries: entries,
                per_agent_us: summary.total_us / agents as f64,
                storage_bytes: storage,
                g3_share: summary.g3_us / summary.total_us,
                median: summary,
            }
        })
        .collect();
    let per = rows.iter().map(|r| r.per_agent_us);
    let max = per.clone().fold(f64::MIN, f64::max);
    let min = per.fold(f64::MAX, f64::min);
    Ok(OverheadReport {
        repetitions: reps,
        rows,
        per_agent_spread: max / min,
        wall_clock_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}
