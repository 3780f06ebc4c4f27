//! Confidence-guided tree search over token completions.
//!
//! A search tree grows from a prompt: each iteration samples open leaves by
//! confidence, extends them with their top-k next tokens, scores the new
//! leaves, and retires paths at the depth cap. Ranked completions come back
//! alongside greedy and beam-search baselines, all driven by pluggable,
//! deterministic next-token models.

pub mod engine;
pub mod error;
pub mod lm;
pub mod rng;
pub mod sampling;
pub mod scoring;
pub mod tree;

pub use engine::{beam_search, greedy_decode, run_search, CompletionResult, SearchConfig, SearchStats};
pub use error::{Error, Result};
pub use lm::{LanguageModel, NGramModel, ScriptedModel, TokenDistribution, TokenId, UniformModel, Vocabulary};
pub use rng::SplitMix64;
pub use sampling::{normalize_weights, sample_leaves, top_k_tokens, SamplerKind};
pub use scoring::{
    apply_evaluator, repetition_penalty_hook, score, ConfidenceScore, EvaluatorHook, ScorerKind,
};
pub use tree::{Node, NodeId, NodeStatus, SearchTree};

/// Formats a value with the given number of significant digits.
pub fn format_sig(value: f64, digits: usize) -> String {
    if value == 0.0 || !value.is_finite() {
        return format!("{value:.*}", digits.saturating_sub(1));
    }
    let magnitude = value.abs().log10().floor() as i32;
    let decimals = (digits as i32 - 1 - magnitude).max(0) as usize;
    format!("{value:.decimals$}")
}

#[cfg(test)]
mod tests {
    use super::format_sig;

    #[test]
    fn significant_digit_formatting() {
        assert_eq!(format_sig(0.735, 6), "0.735000");
        assert_eq!(format_sig(0.0001234567, 6), "0.000123457");
        assert_eq!(format_sig(1.0, 6), "1.00000");
        assert_eq!(format_sig(0.25, 6), "0.250000");
        assert_eq!(format_sig(0.0, 6), "0.00000");
        assert_eq!(format_sig(12.3456789, 6), "12.3457");
    }
}
