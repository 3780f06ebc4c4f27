//! Leaf selection and token top-k filtering.
//!
//! Each search iteration picks a batch of open leaves either by weighted
//! sampling over normalized confidence scores, by plain top-k on score, or
//! by a hybrid that samples within a top-scoring pool.

use crate::error::{Error, Result};
use crate::lm::{TokenDistribution, TokenId};
use crate::rng::SplitMix64;
use crate::scoring::ConfidenceScore;
use crate::tree::NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplerKind {
    NormalizedConfidence,
    TopKLeaves,
    Hybrid,
}

/// Scales non-negative weights to a probability vector. An all-zero input
/// falls back to uniform so that zeroed-out leaves stay reachable.
pub fn normalize_weights(scores: &[f64]) -> Result<Vec<f64>> {
    if scores.is_empty() {
        return Err(Error::InvalidInput("no weights to normalize".into()));
    }
    let mut total = 0.0;
    for &s in scores {
        if s.is_nan() || s < 0.0 {
            return Err(Error::InvalidInput(format!("invalid weight {s}")));
        }
        total += s;
    }
    if total == 0.0 {
        return Ok(vec![1.0 / scores.len() as f64; scores.len()]);
    }
    Ok(scores.iter().map(|s| s / total).collect())
}

/// One weighted draw over the still-alive indices.
fn weighted_draw(alive: &[usize], weights: &[f64], rng: &mut SplitMix64) -> Result<usize> {
    let w: Vec<f64> = alive.iter().map(|&i| weights[i]).collect();
    let probs = normalize_weights(&w)?;
    let u = rng.next_f64();
    let mut acc = 0.0;
    for (slot, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return Ok(slot);
        }
    }
    Ok(probs.len() - 1) // float round-off on the last bucket
}

fn top_indices_by_score(leaves: &[(NodeId, ConfidenceScore)], n: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..leaves.len()).collect();
    idx.sort_by(|&a, &b| {
        leaves[b]
            .1
            .linear()
            .total_cmp(&leaves[a].1.linear())
            .then(leaves[a].0.cmp(&leaves[b].0))
    });
    idx.truncate(n);
    idx
}

/// Selects min(batch, leaves) distinct leaves for extension.
///
/// `normalized_confidence` draws without replacement by normalized score;
/// `top_k_leaves` takes the best scorers, ties to the lower node id;
/// `hybrid` restricts to the `hybrid_pool_factor * batch` best scorers and
/// then samples within that pool.
pub fn sample_leaves(
    kind: SamplerKind,
    leaves: &[(NodeId, ConfidenceScore)],
    batch: usize,
    hybrid_pool_factor: usize,
    rng: &mut SplitMix64,
) -> Result<Vec<NodeId>> {
    if leaves.is_empty() {
        return Err(Error::InvalidInput("no leaves to sample from".into()));
    }
    if batch == 0 {
        return Err(Error::InvalidInput("batch must be >= 1".into()));
    }
    let take = batch.min(leaves.len());
    match kind {
        SamplerKind::TopKLeaves => Ok(top_indices_by_score(leaves, take)
            .into_iter()
            .map(|i| leaves[i].0)
            .collect()),
        SamplerKind::NormalizedConfidence => {
            weighted_without_replacement(leaves, (0..leaves.len()).collect(), take, rng)
        }
        SamplerKind::Hybrid => {
            if hybrid_pool_factor == 0 {
                return Err(Error::InvalidInput("hybrid pool factor must be >= 1".into()));
            }
            let pool = top_indices_by_score(leaves, (hybrid_pool_factor * batch).max(take));
            weighted_without_replacement(leaves, pool, take, rng)
        }
    }
}

fn weighted_without_replacement(
    leaves: &[(NodeId, ConfidenceScore)],
    mut alive: Vec<usize>,
    take: usize,
    rng: &mut SplitMix64,
) -> Result<Vec<NodeId>> {
    let weights: Vec<f64> = leaves.iter().map(|(_, s)| s.linear()).collect();
    let mut picked = Vec::with_capacity(take);
    while picked.len() < take && !alive.is_empty() {
        let slot = weighted_draw(&alive, &weights, rng)?;
        picked.push(leaves[alive[slot]].0);
        alive.remove(slot);
    }
    Ok(picked)
}

/// The k most probable tokens, descending, ties to the lower token id.
pub fn top_k_tokens(dist: &TokenDistribution, k: usize) -> Result<Vec<(TokenId, f64)>> {
    if k == 0 || k > dist.len() {
        return Err(Error::InvalidInput(format!(
            "k = {k} out of range for vocabulary of size {}",
            dist.len()
        )));
    }
    let mut entries: Vec<(TokenId, f64)> = dist.probs().iter().copied().enumerate().collect();
    entries.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    entries.truncate(k);
    Ok(entries)
}
