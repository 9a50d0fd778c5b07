//! Model executors used for replay. Only mock executors ship: a seeded
//! deterministic generator, a noisy wrapper around it, and adversaries
//! that substitute their own output.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::certificates::{ModelBinding, ReproLevel};
use crate::crypto;

pub type ExecConfig = BTreeMap<String, String>;

pub trait ModelExecutor {
    fn model(&self) -> &ModelBinding;
    /// Determinism class the executor actually delivers.
    fn class(&self) -> ReproLevel;
    fn execute(&self, input: &[u8], seed: u64, config: &ExecConfig) -> String;
}

const VOCAB: &[&str] = &[
    "agent", "audit", "budget", "chain", "claim", "data", "delegate", "digest", "evidence",
    "finding", "graph", "input", "ledger", "market", "model", "note", "output", "policy",
    "query", "record", "report", "result", "review", "risk", "sample", "source", "summary",
    "signal", "table", "task", "tool", "trace", "trend", "value", "verify", "window", "with",
    "the", "and", "for", "from", "into", "over", "under", "shows", "suggests", "indicates",
];

fn rng_for(parts: &[&[u8]]) -> ChaCha20Rng {
    let mut buf = Vec::new();
    for p in parts {
        buf.extend_from_slice(&(p.len() as u64).to_le_bytes());
        buf.extend_from_slice(p);
    }
    ChaCha20Rng::from_seed(crypto::digest(&buf).0)
}

fn config_bytes(config: &ExecConfig) -> Vec<u8> {
    let mut out = Vec::new();
    for (k, v) in config {
        if k == "theta" {
            continue;
        }
        out.extend_from_slice(k.as_bytes());
        out.push(b'=');
        out.extend_from_slice(v.as_bytes());
        out.push(b';');
    }
    out
}

/// Deterministic text model: output is a pure function of model identity,
/// input, seed and sampling configuration. Text is lowercase words.
#[derive(Clone, Debug)]
pub struct SeededGenerator {
    model: ModelBinding,
}

impl SeededGenerator {
    pub fn new(model: ModelBinding) -> Self {
        Self { model }
    }
}

impl ModelExecutor for SeededGenerator {
    fn model(&self) -> &ModelBinding {
        &self.model
    }

    fn class(&self) -> ReproLevel {
        ReproLevel::Full
    }

    fn execute(&self, input: &[u8], seed: u64, config: &ExecConfig) -> String {
        let mut rng = rng_for(&[
            self.model.model_id.as_bytes(),
            self.model.model_ver.as_bytes(),
            &seed.to_le_bytes(),
            &config_bytes(config),
            input,
        ]);
        let words = rng.gen_range(30..60);
        (0..words)
            .map(|_| VOCAB[rng.gen_range(0..VOCAB.len())])
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// Wraps an executor and substitutes a fraction `rate` of non-space
/// characters with other lowercase letters, differently on every call.
/// Length is preserved, so char match against the inner output is about
/// `1 - rate`.
#[derive(Debug)]
pub struct ParaphraseNoise<E> {
    inner: E,
    rate: f64,
    calls: AtomicU64,
    noise_seed: u64,
}

impl<E: ModelExecutor> ParaphraseNoise<E> {
    pub fn new(inner: E, rate: f64, noise_seed: u64) -> Self {
        Self {
            inner,
            rate: rate.clamp(0.0, 1.0),
            calls: AtomicU64::new(0),
            noise_seed,
        }
    }
}

impl<E: ModelExecutor> ModelExecutor for ParaphraseNoise<E> {
    fn model(&self) -> &ModelBinding {
        self.inner.model()
    }

    fn class(&self) -> ReproLevel {
        ReproLevel::Statistical
    }

    fn execute(&self, input: &[u8], seed: u64, config: &ExecConfig) -> String {
        let base = self.inner.execute(input, seed, config);
        let call = self.calls.fetch_add(1, Ordering::Relaxed);
        let mut rng = rng_for(&[&self.noise_seed.to_le_bytes(), &call.to_le_bytes(), input]);
        base.chars()
            .map(|c| {
                if c == ' ' || !rng.gen_bool(self.rate) {
                    return c;
                }
                let mut r = c;
                while r == c {
                    r = rng.gen_range(b'a'..=b'z') as char;
                }
                r
            })
            .collect()
    }
}

/// Text drawn from `[A-Z0-9-]` with no spaces. Never shares a character
/// position with output from [`SeededGenerator`].
pub fn adversarial_text(tag: &[u8], len: usize) -> String {
    const ALPHABET: &[u8] = b"ABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789-";
    let mut rng = rng_for(&[b"adversarial", tag]);
    (0..len)
        .map(|_| ALPHABET[rng.gen_range(0..ALPHABET.len())] as char)
        .collect()
}

/// Claims a model binding but answers every input with its own text.
#[derive(Clone, Debug)]
pub struct AdversarialSubstitute {
    model: ModelBinding,
}

impl AdversarialSubstitute {
    pub fn new(claimed: ModelBinding) -> Self {
        Self { model: claimed }
    }
}

impl ModelExecutor for AdversarialSubstitute {
    fn model(&self) -> &ModelBinding {
        &self.model
    }

    fn class(&self) -> ReproLevel {
        ReproLevel::Full
    }

    fn execute(&self, input: &[u8], seed: u64, _config: &ExecConfig) -> String {
        let mut tag = seed.to_le_bytes().to_vec();
        tag.extend_from_slice(input);
        adversarial_text(&tag, 200)
    }
}

/// Behaves honestly except on a fixed fraction `p` of the input space,
/// chosen by hashing the input, where it substitutes adversarial text.
#[derive(Clone, Debug)]
pub struct SelectiveAdversary<E> {
    honest: E,
    p: f64,
    key: u64,
}

impl<E: ModelExecutor> SelectiveAdversary<E> {
    pub fn new(honest: E, p: f64, key: u64) -> Self {
        Self { honest, p, key }
    }

    pub fn diverges_on(&self, input: &[u8]) -> bool {
        let d = crypto::digest(&[&self.key.to_le_bytes()[..], input].concat());
        let u = u64::from_le_bytes(d.0[..8].try_into().expect("8 bytes")) as f64 / u64::MAX as f64;
        u < self.p
    }
}

impl<E: ModelExecutor> ModelExecutor for SelectiveAdversary<E> {
    fn model(&self) -> &ModelBinding {
        self.honest.model()
    }

    fn class(&self) -> ReproLevel {
        self.honest.class()
    }

    fn execute(&self, input: &[u8], seed: u64, config: &ExecConfig) -> String {
        if self.diverges_on(input) {
            adversarial_text(input, 200)
        } else {
            self.honest.execute(input, seed, config)
        }
    }
}
