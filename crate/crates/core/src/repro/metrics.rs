//! Output similarity metrics and the any-below ensemble rule.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    CharMatch,
    Jaccard,
    NgramCosine,
    TfidfCosine,
}

impl Metric {
    pub const ALL: [Metric; 4] = [
        Metric::CharMatch,
        Metric::Jaccard,
        Metric::NgramCosine,
        Metric::TfidfCosine,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::CharMatch => "char_match",
            Metric::Jaccard => "jaccard",
            Metric::NgramCosine => "ngram_cosine",
            Metric::TfidfCosine => "tfidf_cosine",
        }
    }

    pub fn score(self, a: &str, b: &str) -> f64 {
        match self {
            Metric::CharMatch => char_match(a, b),
            Metric::Jaccard => jaccard(a, b),
            Metric::NgramCosine => ngram_cosine(a, b, 3),
            Metric::TfidfCosine => tfidf_cosine(a, b),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Metric {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Metric::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown metric {s:?}"))
    }
}

/// Fraction of positions holding the same Unicode scalar, over the
/// longer length. Two empty strings match fully.
pub fn char_match(a: &str, b: &str) -> f64 {
    let (la, lb) = (a.chars().count(), b.chars().count());
    let longest = la.max(lb);
    if longest == 0 {
        return 1.0;
    }
    let same = a.chars().zip(b.chars()).filter(|(x, y)| x == y).count();
    same as f64 / longest as f64
}

/// Word-set Jaccard index over whitespace tokens, case-sensitive.
pub fn jaccard(a: &str, b: &str) -> f64 {
    let wa: HashSet<&str> = a.split_whitespace().collect();
    let wb: HashSet<&str> = b.split_whitespace().collect();
    if wa.is_empty() && wb.is_empty() {
        return 1.0;
    }
    let inter = wa.intersection(&wb).count();
    let union = wa.len() + wb.len() - inter;
    inter as f64 / union as f64
}

fn cosine<K: Ord>(a: &BTreeMap<K, f64>, b: &BTreeMap<K, f64>) -> f64 {
    match (a.is_empty(), b.is_empty()) {
        (true, true) => return 1.0,
        (true, false) | (false, true) => return 0.0,
        _ => {}
    }
    let dot: f64 = a.iter().filter_map(|(k, x)| b.get(k).map(|y| x * y)).sum();
    let na = a.values().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.values().map(|x| x * x).sum::<f64>().sqrt();
    (dot / (na * nb)).clamp(0.0, 1.0)
}

fn ngrams(s: &str, n: usize) -> BTreeMap<String, f64> {
    let chars: Vec<char> = s.chars().collect();
    let mut out = BTreeMap::new();
    if chars.is_empty() {
        return out;
    }
    if chars.len() < n {
        out.insert(s.to_owned(), 1.0);
        return out;
    }
    for w in chars.windows(n) {
        *out.entry(w.iter().collect()).or_insert(0.0) += 1.0;
    }
    out
}

/// Cosine similarity of character n-gram count vectors. Strings shorter
/// than `n` count as a single gram.
pub fn ngram_cosine(a: &str, b: &str, n: usize) -> f64 {
    let n = n.max(1);
    cosine(&ngrams(a, n), &ngrams(b, n))
}

/// Cosine similarity of TF-IDF vectors, with raw term counts and smoothed
/// IDF `ln((1 + N) / (1 + df)) + 1` fit on the two texts.
pub fn tfidf_cosine(a: &str, b: &str) -> f64 {
    fn tf(s: &str) -> BTreeMap<&str, f64> {
        let mut m = BTreeMap::new();
        for w in s.split_whitespace() {
            *m.entry(w).or_insert(0.0) += 1.0;
        }
        m
    }
    let (mut ta, mut tb) = (tf(a), tf(b));
    let idf = |df: f64| (3.0 / (1.0 + df)).ln() + 1.0;
    let shared: HashSet<&str> = ta.keys().filter(|k| tb.contains_key(*k)).copied().collect();
    for (k, v) in ta.iter_mut() {
        *v *= idf(if shared.contains(k) { 2.0 } else { 1.0 });
    }
    for (k, v) in tb.iter_mut() {
        *v *= idf(if shared.contains(k) { 2.0 } else { 1.0 });
    }
    cosine(&ta, &tb)
}

/// Per-metric pass thresholds. A score strictly below its threshold flags.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub char_match: f64,
    pub jaccard: f64,
    pub ngram_cosine: f64,
    pub tfidf_cosine: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            char_match: 0.146,
            jaccard: 0.408,
            ngram_cosine: 0.809,
            tfidf_cosine: 0.837,
        }
    }
}

impl Thresholds {
    pub fn get(&self, m: Metric) -> f64 {
        match m {
            Metric::CharMatch => self.char_match,
            Metric::Jaccard => self.jaccard,
            Metric::NgramCosine => self.ngram_cosine,
            Metric::TfidfCosine => self.tfidf_cosine,
        }
    }

    pub fn set(&mut self, m: Metric, v: f64) {
        match m {
            Metric::CharMatch => self.char_match = v,
            Metric::Jaccard => self.jaccard = v,
            Metric::NgramCosine => self.ngram_cosine = v,
            Metric::TfidfCosine => self.tfidf_cosine = v,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimilarityReport {
    pub char_match: f64,
    pub jaccard: f64,
    pub ngram_cosine: f64,
    pub tfidf_cosine: f64,
    pub ensemble_flagged: bool,
    pub thresholds_used: Thresholds,
}

impl SimilarityReport {
    pub fn get(&self, m: Metric) -> f64 {
        match m {
            Metric::CharMatch => self.char_match,
            Metric::Jaccard => self.jaccard,
            Metric::NgramCosine => self.ngram_cosine,
            Metric::TfidfCosine => self.tfidf_cosine,
        }
    }

    /// Metrics whose score fell below threshold.
    pub fn flagged_by(&self) -> Vec<Metric> {
        Metric::ALL
            .into_iter()
            .filter(|&m| self.get(m) < self.thresholds_used.get(m))
            .collect()
    }
}

/// Scores all four metrics; flagged iff any falls below its threshold.
pub fn ensemble_evaluate(a: &str, b: &str, thresholds: Option<Thresholds>) -> SimilarityReport {
    let t = thresholds.unwrap_or_default();
    let mut r = SimilarityReport {
        char_match: char_match(a, b),
        jaccard: jaccard(a, b),
        ngram_cosine: ngram_cosine(a, b, 3),
        tfidf_cosine: tfidf_cosine(a, b),
        ensemble_flagged: false,
        thresholds_used: t,
    };
    r.ensemble_flagged = !r.flagged_by().is_empty();
    r
}
