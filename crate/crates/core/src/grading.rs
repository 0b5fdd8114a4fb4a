//! ICDRSS grades, score decoding and agreement metrics.
//!
//! A network emits an unbounded [`Score`]; [`decode_score`] clamps it to
//! `[0, 4]` and rounds half away from zero to obtain a [`Grade`]. Agreement
//! between graders is measured with the quadratic weighted kappa
//!
//! ```text
//! qwk = 1 - Σ W∘O / Σ W∘E,   W_ij = (i - j)² / (k - 1)²
//! ```
//!
//! where `O` is the confusion matrix and `E` the outer product of its
//! marginals scaled to the same total.

use std::fmt;

use serde::{Deserialize, Serialize};

/// Number of ICDRSS severity classes.
pub const NUM_GRADES: usize = 5;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum GradingError {
    #[error("grade {0} outside 0..=4")]
    GradeOutOfRange(i64),
    #[error("score is not finite: {0}")]
    NonFiniteScore(f64),
    #[error("sequence lengths differ: {truth} truth vs {pred} predicted")]
    LengthMismatch { truth: usize, pred: usize },
    #[error("no samples to score")]
    Empty,
    #[error("class count must be >= 2, got {0}")]
    TooFewClasses(usize),
    #[error("label {label} at position {index} is not below k = {k}")]
    LabelOutOfRange { index: usize, label: usize, k: usize },
    #[error("kappa undefined: expected disagreement is zero (both raters constant and equal)")]
    DegenerateDenominator,
}

/// ICDRSS stage, 0 (no DR) through 4 (proliferative DR).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct Grade(u8);

impl Grade {
    pub const MIN: Grade = Grade(0);
    pub const MAX: Grade = Grade(4);

    pub fn new(value: u8) -> Result<Self, GradingError> {
        if value as usize >= NUM_GRADES {
            return Err(GradingError::GradeOutOfRange(value as i64));
        }
        Ok(Grade(value))
    }

    pub fn value(self) -> u8 {
        self.0
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn as_f64(self) -> f64 {
        self.0 as f64
    }

    pub fn all() -> impl Iterator<Item = Grade> {
        (0..NUM_GRADES as u8).map(Grade)
    }
}

impl TryFrom<u8> for Grade {
    type Error = GradingError;
    fn try_from(v: u8) -> Result<Self, Self::Error> {
        Grade::new(v)
    }
}

impl From<Grade> for u8 {
    fn from(g: Grade) -> u8 {
        g.0
    }
}

impl fmt::Display for Grade {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Continuous severity prediction; always finite.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize)]
pub struct Score(f64);

impl Score {
    pub fn new(value: f64) -> Result<Self, GradingError> {
        if !value.is_finite() {
            return Err(GradingError::NonFiniteScore(value));
        }
        Ok(Score(value))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Clamp to `[0, 4]`, then round half away from zero.
pub fn decode_score(s: Score) -> Grade {
    Grade(s.0.clamp(0.0, 4.0).round() as u8)
}

/// Decode a raw value, rejecting NaN and infinities.
pub fn decode_raw(value: f64) -> Result<Grade, GradingError> {
    Score::new(value).map(decode_score)
}

/// `k × k` count matrix; rows are true labels, columns predictions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConfusionMatrix {
    k: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn zeros(k: usize) -> Result<Self, GradingError> {
        if k < 2 {
            return Err(GradingError::TooFewClasses(k));
        }
        Ok(Self { k, counts: vec![0; k * k] })
    }

    /// Build from raw label indices, each `< k`.
    pub fn from_labels(truth: &[usize], pred: &[usize], k: usize) -> Result<Self, GradingError> {
        if truth.len() != pred.len() {
            return Err(GradingError::LengthMismatch { truth: truth.len(), pred: pred.len() });
        }
        if truth.is_empty() {
            return Err(GradingError::Empty);
        }
        let mut cm = Self::zeros(k)?;
        for (index, (&t, &p)) in truth.iter().zip(pred).enumerate() {
            for label in [t, p] {
                if label >= k {
                    return Err(GradingError::LabelOutOfRange { index, label, k });
                }
            }
            cm.counts[t * k + p] += 1;
        }
        Ok(cm)
    }

    /// Build from a dense row-major count table.
    pub fn from_counts(counts: Vec<Vec<u64>>) -> Result<Self, GradingError> {
        let k = counts.len();
        let mut cm = Self::zeros(k)?;
        for (i, row) in counts.iter().enumerate() {
            if row.len() != k {
                return Err(GradingError::LengthMismatch { truth: k, pred: row.len() });
            }
            cm.counts[i * k..(i + 1) * k].copy_from_slice(row);
        }
        Ok(cm)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn get(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth * self.k + pred]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.k).map(|i| self.get(i, i)).sum()
    }

    /// Row sums (true-label histogram).
    pub fn truth_marginals(&self) -> Vec<u64> {
        self.counts.chunks_exact(self.k).map(|r| r.iter().sum()).collect()
    }

    /// Column sums (predicted-label histogram).
    pub fn pred_marginals(&self) -> Vec<u64> {
        (0..self.k).map(|j| (0..self.k).map(|i| self.get(i, j)).sum()).collect()
    }

    pub fn rows(&self) -> Vec<Vec<u64>> {
        self.counts.chunks_exact(self.k).map(<[u64]>::to_vec).collect()
    }

    pub fn transpose(&self) -> Self {
        let k = self.k;
        let mut counts = vec![0; k * k];
        for i in 0..k {
            for j in 0..k {
                counts[j * k + i] = self.counts[i * k + j];
            }
        }
        Self { k, counts }
    }

    pub fn scaled(&self, factor: u64) -> Self {
        Self { k: self.k, counts: self.counts.iter().map(|c| c * factor).collect() }
    }
}

/// Confusion matrix over the five ICDRSS grades.
pub fn confusion(truth: &[Grade], pred: &[Grade]) -> Result<ConfusionMatrix, GradingError> {
    let t: Vec<usize> = truth.iter().map(|g| g.index()).collect();
    let p: Vec<usize> = pred.iter().map(|g| g.index()).collect();
    ConfusionMatrix::from_labels(&t, &p, NUM_GRADES)
}

/// Every intermediate of the kappa computation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QwkBreakdown {
    pub qwk: f64,
    /// Σ W∘O
    pub numerator: f64,
    /// Σ W∘E
    pub denominator: f64,
    pub weights: Vec<Vec<f64>>,
    pub expected: Vec<Vec<f64>>,
}

/// Quadratic weighted kappa.
pub fn qwk(cm: &ConfusionMatrix) -> Result<QwkBreakdown, GradingError> {
    weighted_kappa(cm, 2.0)
}

/// Kappa with disagreement weights `|i - j|^exponent / (k - 1)^exponent`.
///
/// `exponent = 2` is QWK. Other exponents exist for the verification
/// suite's sensitivity hook.
pub fn weighted_kappa(cm: &ConfusionMatrix, exponent: f64) -> Result<QwkBreakdown, GradingError> {
    let k = cm.k;
    let total = cm.total();
    if total == 0 {
        return Err(GradingError::Empty);
    }
    let n = total as f64;
    let rows = cm.truth_marginals();
    let cols = cm.pred_marginals();
    let power = |d: f64| if exponent == 2.0 { d * d } else { d.powf(exponent) };
    let norm = power((k - 1) as f64);

    let weights: Vec<Vec<f64>> = (0..k)
        .map(|i| (0..k).map(|j| power(i.abs_diff(j) as f64) / norm).collect())
        .collect();
    let expected: Vec<Vec<f64>> = rows
        .iter()
        .map(|&r| cols.iter().map(|&c| r as f64 * c as f64 / n).collect())
        .collect();

    let mut numerator = 0.0;
    let mut denominator = 0.0;
    for i in 0..k {
        for j in 0..k {
            numerator += weights[i][j] * cm.get(i, j) as f64;
            denominator += weights[i][j] * expected[i][j];
        }
    }
    if denominator == 0.0 {
        return Err(GradingError::DegenerateDenominator);
    }
    Ok(QwkBreakdown { qwk: 1.0 - numerator / denominator, numerator, denominator, weights, expected })
}

/// Metrics over one scored split.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluationReport {
    pub kappa: QwkBreakdown,
    pub confusion: ConfusionMatrix,
    pub accuracy: f64,
    /// Mean squared error of raw scores against integer labels.
    pub mse: f64,
    pub n: usize,
    pub class_counts: Vec<u64>,
}

impl EvaluationReport {
    pub fn qwk(&self) -> f64 {
        self.kappa.qwk
    }

    /// Flat JSON form: `{"qwk", "accuracy", "mse", "confusion", "n", "class_counts"}`.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "qwk": self.kappa.qwk,
            "accuracy": self.accuracy,
            "mse": self.mse,
            "confusion": self.confusion.rows(),
            "n": self.n,
            "class_counts": self.class_counts,
        })
    }
}

/// Decode every score and compute kappa, accuracy and raw-score MSE.
pub fn evaluate(truth: &[Grade], scores: &[Score]) -> Result<EvaluationReport, GradingError> {
    if truth.len() != scores.len() {
        return Err(GradingError::LengthMismatch { truth: truth.len(), pred: scores.len() });
    }
    if truth.is_empty() {
        return Err(GradingError::Empty);
    }
    let pred: Vec<Grade> = scores.iter().copied().map(decode_score).collect();
    let cm = confusion(truth, &pred)?;
    let kappa = qwk(&cm)?;
    let n = truth.len();
    let mse = truth
        .iter()
        .zip(scores)
        .map(|(g, s)| (s.value() - g.as_f64()).powi(2))
        .sum::<f64>()
        / n as f64;
    Ok(EvaluationReport {
        accuracy: cm.trace() as f64 / n as f64,
        class_counts: cm.truth_marginals(),
        kappa,
        confusion: cm,
        mse,
        n,
    })
}
