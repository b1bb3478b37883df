use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredSample<T> {
    pub id: String,
    pub score: T,
}

/// Keeps the top `ceil(keep_fraction * n)` samples by critic score,
/// highest first. Equal scores are ordered by id.
pub fn critic_filter<T: Real>(
    samples: &[ScoredSample<T>],
    keep_fraction: f64,
) -> Result<Vec<ScoredSample<T>>, EvalError> {
    if samples.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    if !(keep_fraction > 0.0 && keep_fraction <= 1.0) {
        return Err(EvalError::InvalidFraction(keep_fraction));
    }
    if samples.iter().any(|s| !s.score.is_finite()) {
        return Err(EvalError::NonFiniteInput);
    }
    let n = samples.len();
    // guard against 0.3 * 10 = 3.0000000000000004
    let keep = ((keep_fraction * n as f64) - 1e-9).ceil().max(1.0) as usize;
    let mut ranked = samples.to_vec();
    ranked.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.id.cmp(&b.id))
    });
    ranked.truncate(keep.min(n));
    Ok(ranked)
}
