//! Categorical-distribution primitives and the information-theoretic
//! functions the planner is built on: normalization, tempered softmax,
//! KL divergence, and Shannon entropy, all in natural-log units.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance for "sums to one" checks on probability vectors.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;

/// Floor applied to probabilities inside `ln` when evaluating free-energy
/// terms whose reference distribution is softmax-built and therefore never
/// exactly zero.
pub const PROB_FLOOR: f64 = 1e-16;

#[derive(Debug, Error, PartialEq)]
pub enum MathError {
    #[error("cannot normalize an all-zero weight vector")]
    DegenerateDistribution,

    #[error("negative or non-finite weight at index {index}: {value}")]
    InvalidWeight { index: usize, value: f64 },

    #[error("non-finite logit at index {index}: {value}")]
    InvalidLogit { index: usize, value: f64 },

    #[error("softmax precision must be positive and finite, got {0}")]
    InvalidPrecision(f64),

    #[error("p has mass {p} at index {index} but q is zero there")]
    AbsoluteContinuityViolation { index: usize, p: f64 },

    #[error("distribution lengths differ: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("probability vector must be non-empty")]
    Empty,

    #[error("probabilities sum to {0}, expected 1")]
    NotNormalized(f64),

    #[error("negative probability at index {index}: {value}")]
    NegativeProbability { index: usize, value: f64 },
}

/// A finite probability distribution: non-negative entries summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Categorical {
    probs: Vec<f64>,
}

impl Categorical {
    /// Validates and wraps a probability vector.
    pub fn new(probs: Vec<f64>) -> Result<Self, MathError> {
        if probs.is_empty() {
            return Err(MathError::Empty);
        }
        for (index, &value) in probs.iter().enumerate() {
            if !value.is_finite() || value < 0.0 {
                return Err(MathError::NegativeProbability { index, value });
            }
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(MathError::NotNormalized(sum));
        }
        Ok(Self { probs })
    }

    /// All mass on a single outcome.
    pub fn delta(len: usize, index: usize) -> Self {
        assert!(index < len, "delta index {index} out of range {len}");
        let mut probs = vec![0.0; len];
        probs[index] = 1.0;
        Self { probs }
    }

    /// Equal mass on every outcome.
    pub fn uniform(len: usize) -> Self {
        assert!(len > 0, "uniform distribution needs at least one outcome");
        Self {
            probs: vec![1.0 / len as f64; len],
        }
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn get(&self, index: usize) -> f64 {
        self.probs[index]
    }

    /// Index of the first maximal entry.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = i;
            }
        }
        best
    }

    /// `Some(i)` when the whole mass sits exactly on outcome `i`.
    pub fn as_delta(&self) -> Option<usize> {
        let mut hit = None;
        for (i, &p) in self.probs.iter().enumerate() {
            if p == 1.0 {
                hit = Some(i);
            } else if p != 0.0 {
                return None;
            }
        }
        hit
    }
}

impl From<Categorical> for Vec<f64> {
    fn from(c: Categorical) -> Self {
        c.probs
    }
}

impl TryFrom<Vec<f64>> for Categorical {
    type Error = MathError;

    fn try_from(probs: Vec<f64>) -> Result<Self, Self::Error> {
        Categorical::new(probs)
    }
}

/// Log-scale desirability over the outcomes of one observation modality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogPreference {
    logits: Vec<f64>,
}

impl LogPreference {
    pub fn new(logits: Vec<f64>) -> Result<Self, MathError> {
        if logits.is_empty() {
            return Err(MathError::Empty);
        }
        for (index, &value) in logits.iter().enumerate() {
            if !value.is_finite() {
                return Err(MathError::InvalidLogit { index, value });
            }
        }
        Ok(Self { logits })
    }

    /// All-zero logits: no preference among outcomes.
    pub fn uniform(len: usize) -> Self {
        assert!(len > 0, "preference needs at least one outcome");
        Self {
            logits: vec![0.0; len],
        }
    }

    pub fn len(&self) -> usize {
        self.logits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.logits.is_empty()
    }

    pub fn logits(&self) -> &[f64] {
        &self.logits
    }

    /// The distribution this preference encodes: `softmax(logits, 1)`.
    pub fn to_categorical(&self) -> Categorical {
        softmax(&self.logits, 1.0).expect("finite logits always soften")
    }
}

/// Rescales non-negative weights into a distribution.
pub fn normalize(weights: &[f64]) -> Result<Categorical, MathError> {
    if weights.is_empty() {
        return Err(MathError::Empty);
    }
    for (index, &value) in weights.iter().enumerate() {
        if !value.is_finite() || value < 0.0 {
            return Err(MathError::InvalidWeight { index, value });
        }
    }
    let sum: f64 = weights.iter().sum();
    if sum <= 0.0 {
        return Err(MathError::DegenerateDistribution);
    }
    Ok(Categorical {
        probs: weights.iter().map(|w| w / sum).collect(),
    })
}

/// Tempered softmax with max-subtraction for overflow safety.
pub fn softmax(logits: &[f64], precision: f64) -> Result<Categorical, MathError> {
    if logits.is_empty() {
        return Err(MathError::Empty);
    }
    if !precision.is_finite() || precision <= 0.0 {
        return Err(MathError::InvalidPrecision(precision));
    }
    for (index, &value) in logits.iter().enumerate() {
        if !value.is_finite() {
            return Err(MathError::InvalidLogit { index, value });
        }
    }
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (precision * (l - max)).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Ok(Categorical {
        probs: exps.iter().map(|e| e / sum).collect(),
    })
}

/// `Σ p_i ln(p_i / q_i)` with the `0 ln 0 = 0` convention. Requires q to
/// carry mass wherever p does.
pub fn kl_divergence(p: &Categorical, q: &Categorical) -> Result<f64, MathError> {
    if p.len() != q.len() {
        return Err(MathError::DimensionMismatch {
            left: p.len(),
            right: q.len(),
        });
    }
    let mut sum = 0.0;
    for (index, (&pi, &qi)) in p.probs.iter().zip(&q.probs).enumerate() {
        if pi == 0.0 {
            continue;
        }
        if qi == 0.0 {
            return Err(MathError::AbsoluteContinuityViolation { index, p: pi });
        }
        sum += pi * (pi / qi).ln();
    }
    Ok(sum.max(0.0))
}

/// KL variant for free-energy terms: both arguments are floored at
/// [`PROB_FLOOR`] inside the logarithm, so a softmax-built reference can
/// never produce an infinity.
pub fn kl_divergence_clamped(p: &Categorical, q: &Categorical) -> f64 {
    debug_assert_eq!(p.len(), q.len());
    let mut sum = 0.0;
    for (&pi, &qi) in p.probs.iter().zip(&q.probs) {
        if pi == 0.0 {
            continue;
        }
        sum += pi * (pi.max(PROB_FLOOR).ln() - qi.max(PROB_FLOOR).ln());
    }
    sum
}

/// Shannon entropy `−Σ p_i ln p_i` with `0 ln 0 = 0`.
pub fn entropy(p: &Categorical) -> f64 {
    let mut sum = 0.0;
    for &pi in &p.probs {
        if pi > 0.0 {
            sum -= pi * pi.ln();
        }
    }
    sum
}
