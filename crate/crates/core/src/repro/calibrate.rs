//! Per-metric threshold selection by Youden's J.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::metrics::{Metric, Thresholds};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairLabel {
    SameModel,
    CrossModel,
}

/// Scores for one comparison, indexed like [`Metric::ALL`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledScores {
    pub scores: [f64; 4],
    pub label: PairLabel,
}

impl LabeledScores {
    pub fn from_texts(a: &str, b: &str, label: PairLabel) -> Self {
        Self {
            scores: Metric::ALL.map(|m| m.score(a, b)),
            label,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CalibrationError {
    #[error("calibration needs both same_model and cross_model pairs")]
    SingleClass,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricCalibration {
    pub metric: Metric,
    pub threshold: f64,
    pub youden_j: f64,
    pub tpr: f64,
    pub fpr: f64,
    pub f1: f64,
    pub same_model_mean: f64,
    pub cross_model_mean: f64,
    /// `same_model_mean / cross_model_mean`; absent when the latter is 0.
    pub separation: Option<f64>,
    /// Pooled-SD Cohen's d; absent when both classes have zero spread.
    pub cohens_d: Option<f64>,
    /// Fraction of cross-model pairs that still pass at `threshold`.
    pub cross_model_pass_rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub same_model_pairs: usize,
    pub cross_model_pairs: usize,
    pub metrics: Vec<MetricCalibration>,
}

impl CalibrationReport {
    pub fn metric(&self, m: Metric) -> &MetricCalibration {
        self.metrics.iter().find(|c| c.metric == m).expect("all metrics calibrated")
    }

    pub fn thresholds(&self) -> Thresholds {
        let mut t = Thresholds::default();
        for c in &self.metrics {
            t.set(c.metric, c.threshold);
        }
        t
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn sample_var(xs: &[f64], m: f64) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
}

fn cohens_d(same: &[f64], cross: &[f64]) -> Option<f64> {
    let (ms, mc) = (mean(same), mean(cross));
    let (n1, n2) = (same.len() as f64, cross.len() as f64);
    if n1 + n2 <= 2.0 {
        return None;
    }
    let pooled = (((n1 - 1.0) * sample_var(same, ms) + (n2 - 1.0) * sample_var(cross, mc))
        / (n1 + n2 - 2.0))
        .sqrt();
    (pooled > 0.0).then(|| (ms - mc) / pooled)
}

/// Midpoints between consecutive distinct scores; the lone value when
/// all scores coincide.
fn candidates(all: &[f64]) -> Vec<f64> {
    let mut v = all.to_vec();
    v.sort_by(f64::total_cmp);
    v.dedup();
    if v.len() == 1 {
        return v;
    }
    v.windows(2).map(|w| (w[0] + w[1]) / 2.0).collect()
}

fn calibrate_one(metric: Metric, same: &[f64], cross: &[f64]) -> MetricCalibration {
    let all: Vec<f64> = same.iter().chain(cross).copied().collect();
    let rate = |xs: &[f64], t: f64| xs.iter().filter(|&&x| x >= t).count() as f64 / xs.len() as f64;
    let mut best: Option<(f64, f64)> = None;
    for t in candidates(&all) {
        let j = rate(same, t) - rate(cross, t);
        if best.is_none_or(|(_, bj)| j > bj) {
            best = Some((t, j));
        }
    }
    let (threshold, youden_j) = best.expect("at least one candidate");
    let tpr = rate(same, threshold);
    let fpr = rate(cross, threshold);
    let tp = tpr * same.len() as f64;
    let fp = fpr * cross.len() as f64;
    let f1 = if tp == 0.0 {
        0.0
    } else {
        2.0 * tp / (2.0 * tp + fp + (same.len() as f64 - tp))
    };
    let (ms, mc) = (mean(same), mean(cross));
    MetricCalibration {
        metric,
        threshold,
        youden_j,
        tpr,
        fpr,
        f1,
        same_model_mean: ms,
        cross_model_mean: mc,
        separation: (mc != 0.0).then(|| ms / mc),
        cohens_d: cohens_d(same, cross),
        cross_model_pass_rate: fpr,
    }
}

/// Chooses, per metric, the threshold maximising `TPR - FPR` with
/// same-model pairs as positives and `score >= threshold` as a pass.
pub fn calibrate_thresholds(pairs: &[LabeledScores]) -> Result<CalibrationReport, CalibrationError> {
    let split = |i: usize, label| -> Vec<f64> {
        pairs.iter().filter(|p| p.label == label).map(|p| p.scores[i]).collect()
    };
    let n_same = pairs.iter().filter(|p| p.label == PairLabel::SameModel).count();
    let n_cross = pairs.len() - n_same;
    if n_same == 0 || n_cross == 0 {
        return Err(CalibrationError::SingleClass);
    }
    let metrics = Metric::ALL
        .iter()
        .enumerate()
        .map(|(i, &m)| calibrate_one(m, &split(i, PairLabel::SameModel), &split(i, PairLabel::CrossModel)))
        .collect();
    Ok(CalibrationReport {
        same_model_pairs: n_same,
        cross_model_pairs: n_cross,
        metrics,
    })
}
