//! Leaf confidence scores from per-token probabilities.
//!
//! Three aggregations are supported: sum of log probabilities (the beam
//! search objective), geometric mean (length-normalized, the default), and
//! arithmetic mean. An evaluator hook can fold an external quality estimate
//! into the score multiplicatively.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::lm::TokenId;

/// Probabilities are floored here before taking logs, so a zero probability
/// cannot poison normalization with -inf.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScorerKind {
    SumLogprob,
    GeometricMean,
    ArithmeticMean,
}

/// A quality estimate in log domain plus its displayable linear value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfidenceScore {
    log_value: f64,
    linear: f64,
}

impl ConfidenceScore {
    /// The neutral score assigned to the root / empty sequence.
    pub const ONE: ConfidenceScore = ConfidenceScore {
        log_value: 0.0,
        linear: 1.0,
    };

    fn from_log(log_value: f64) -> Self {
        Self {
            log_value,
            linear: log_value.exp(),
        }
    }

    pub fn log_value(&self) -> f64 {
        self.log_value
    }

    pub fn linear(&self) -> f64 {
        self.linear
    }
}

fn clamp_logprob(lp: f64) -> f64 {
    lp.max(PROB_FLOOR.ln())
}

/// Aggregates a path's token log-probabilities into a confidence score.
/// The empty sequence scores 1.0 under every kind.
pub fn score(kind: ScorerKind, token_logprobs: &[f64]) -> Result<ConfidenceScore> {
    for &lp in token_logprobs {
        if lp.is_nan() || lp > 0.0 {
            return Err(Error::InvalidInput(format!(
                "token logprob must be <= 0 and not NaN, got {lp}"
            )));
        }
    }
    if token_logprobs.is_empty() {
        return Ok(ConfidenceScore::ONE);
    }
    let n = token_logprobs.len() as f64;
    let sum: f64 = token_logprobs.iter().map(|&lp| clamp_logprob(lp)).sum();
    let log_value = match kind {
        ScorerKind::SumLogprob => sum,
        ScorerKind::GeometricMean => sum / n,
        ScorerKind::ArithmeticMean => {
            let mean: f64 = token_logprobs
                .iter()
                .map(|&lp| clamp_logprob(lp).exp())
                .sum::<f64>()
                / n;
            mean.ln()
        }
    };
    Ok(ConfidenceScore::from_log(log_value))
}

/// External completion-quality function in [0, 1], combined multiplicatively
/// with the base score.
pub type EvaluatorHook = Arc<dyn Fn(&[TokenId]) -> f64 + Send + Sync>;

pub fn apply_evaluator(
    base: ConfidenceScore,
    hook: &EvaluatorHook,
    tokens: &[TokenId],
) -> Result<ConfidenceScore> {
    let value = hook(tokens);
    if value.is_nan() || !(0.0..=1.0).contains(&value) {
        return Err(Error::EvaluatorRange { value });
    }
    Ok(ConfidenceScore::from_log(
        base.log_value() + clamp_logprob(value.max(PROB_FLOOR).ln()),
    ))
}

/// Heuristic stand-in for a trained evaluator: penalizes run-away repetition.
///
/// Returns 1.0 when the longest identical-token run is at most `max_run` and
/// no n-gram of length `ngram_window` repeats three or more times
/// back-to-back; otherwise 1 / (1 + violations). A `ngram_window` of 0
/// disables the n-gram check.
pub fn repetition_penalty_hook(max_run: usize, ngram_window: usize) -> EvaluatorHook {
    assert!(max_run >= 2, "max_run must be >= 2");
    Arc::new(move |tokens: &[TokenId]| {
        let mut violations = 0usize;

        // maximal identical-token runs longer than max_run
        let mut i = 0;
        while i < tokens.len() {
            let mut j = i + 1;
            while j < tokens.len() && tokens[j] == tokens[i] {
                j += 1;
            }
            if j - i > max_run {
                violations += 1;
            }
            i = j;
        }

        // n-grams repeated >= 3 times consecutively, each maximal block once
        if ngram_window > 0 {
            let w = ngram_window;
            let mut i = 0;
            while i + w <= tokens.len() {
                let gram = &tokens[i..i + w];
                let mut repeats = 1;
                while i + (repeats + 1) * w <= tokens.len()
                    && &tokens[i + repeats * w..i + (repeats + 1) * w] == gram
                {
                    repeats += 1;
                }
                if repeats >= 3 {
                    violations += 1;
                    i += repeats * w;
                } else {
                    i += 1;
                }
            }
        }

        if violations == 0 {
            1.0
        } else {
            1.0 / (1.0 + violations as f64)
        }
    })
}
