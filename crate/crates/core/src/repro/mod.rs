//! Behavioral verification by replay: similarity metrics, the replay
//! protocol, trial budgets, threshold calibration and chain depth.

mod budget;
mod calibrate;
mod depth;
mod executors;
mod metrics;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::certificates::{Certificate, ReproLevel};
use crate::crypto;
use crate::ledger::InteractionRecord;

pub use budget::{approximate_budget, epsilon_bound, required_budget, BudgetError, VerificationBudget};
pub use calibrate::{
    calibrate_thresholds, CalibrationError, CalibrationReport, LabeledScores, MetricCalibration,
    PairLabel,
};
pub use depth::{chain_verifiability_depth, effective_verification_depth, DepthError, DepthReport};
pub use executors::{
    adversarial_text, AdversarialSubstitute, ExecConfig, ModelExecutor, ParaphraseNoise,
    SeededGenerator, SelectiveAdversary,
};
pub use metrics::{
    char_match, ensemble_evaluate, jaccard, ngram_cosine, tfidf_cosine, Metric, SimilarityReport,
    Thresholds,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    Verified,
    Violation,
    Inconclusive,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Verified => "VERIFIED",
            Verdict::Violation => "VIOLATION",
            Verdict::Inconclusive => "INCONCLUSIVE",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplayVerdict {
    pub verdict: Verdict,
    pub report: Option<SimilarityReport>,
    /// The gate threshold for statistical commitments.
    pub theta: Option<f64>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ReplayError {
    #[error("INPUT_COMMITMENT_MISMATCH: disclosed input does not match the recorded commitment")]
    InputCommitmentMismatch,
    #[error("executor runs {actual}, certificate binds {expected}")]
    ExecutorMismatch { expected: String, actual: String },
    #[error("statistical commitment without a usable theta")]
    MissingTheta,
}

/// Re-executes the certified model on the sender-authenticated input and
/// compares with the original output.
///
/// Full commitments need byte equality; statistical ones need char match
/// at least `theta`. The four-metric report is attached either way for
/// audit use but does not gate the verdict.
pub fn replay_verify(
    cert: &Certificate,
    record: &InteractionRecord,
    original_output: &str,
    disclosed_input: &[u8],
    executor: &dyn ModelExecutor,
) -> Result<ReplayVerdict, ReplayError> {
    if crypto::digest(disclosed_input) != record.input_commitment {
        return Err(ReplayError::InputCommitmentMismatch);
    }
    if executor.model() != &cert.model {
        return Err(ReplayError::ExecutorMismatch {
            expected: cert.model.to_string(),
            actual: executor.model().to_string(),
        });
    }
    let level = cert.repro.level;
    if level == ReproLevel::None {
        return Ok(ReplayVerdict {
            verdict: Verdict::Inconclusive,
            report: None,
            theta: None,
        });
    }
    let replay = executor.execute(disclosed_input, record.anchor.seed, &cert.repro.config);
    let report = ensemble_evaluate(original_output, &replay, None);
    let (passed, theta) = match level {
        ReproLevel::Full => (replay == original_output, None),
        _ => {
            let theta = cert.repro.theta().ok_or(ReplayError::MissingTheta)?;
            (report.char_match >= theta, Some(theta))
        }
    };
    Ok(ReplayVerdict {
        verdict: if passed { Verdict::Verified } else { Verdict::Violation },
        report: Some(report),
        theta,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloReport {
    pub n: u64,
    pub alpha: f64,
    pub epsilon: f64,
    pub theta: f64,
    pub repetitions: u64,
    /// Adversaries with divergence rate above `epsilon`.
    pub adversaries: u64,
    /// Of those, how many passed all `n` trials.
    pub undetected: u64,
}

impl MonteCarloReport {
    pub fn undetected_rate(&self) -> f64 {
        if self.adversaries == 0 {
            0.0
        } else {
            self.undetected as f64 / self.adversaries as f64
        }
    }
}

/// Draws adversaries whose divergence rate `p` is uniform on
/// `(epsilon, 1)`, runs up to `n` replay trials on random prompts and
/// counts those that pass every trial.
pub fn monte_carlo_soundness(
    n: u64,
    alpha: f64,
    theta: f64,
    repetitions: u64,
    seed: u64,
) -> Result<MonteCarloReport, BudgetError> {
    let epsilon = epsilon_bound(n, alpha)?;
    let honest = SeededGenerator::new(crate::fixtures::sonnet());
    let config = ExecConfig::new();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut undetected = 0;
    for rep in 0..repetitions {
        let p = rng.gen_range(epsilon..1.0);
        let adv = SelectiveAdversary::new(honest.clone(), p, rep ^ seed);
        let mut passed_all = true;
        for _ in 0..n {
            let prompt: [u8; 16] = rng.gen();
            let s: u64 = rng.gen();
            let claimed = adv.execute(&prompt, s, &config);
            let replayed = honest.execute(&prompt, s, &config);
            if char_match(&claimed, &replayed) < theta {
                passed_all = false;
                break;
            }
        }
        if passed_all {
            undetected += 1;
        }
    }
    Ok(MonteCarloReport {
        n,
        alpha,
        epsilon,
        theta,
        repetitions,
        adversaries: repetitions,
        undetected,
    })
}

#[cfg(test)]
mod tests;
