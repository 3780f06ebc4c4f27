//! Shared fixtures and independent oracles for the integration suites.
//!
//! Everything here recomputes expected values from first principles (full
//! enumeration, direct probability arithmetic) so the main implementation is
//! checked against an independent route.

use treesearch::{ScriptedModel, SplitMix64, TokenId, Vocabulary};

/// Builds a scripted model with a random full table: every prefix of
/// generated length < max_len gets a random distribution. No eos, so all
/// completions run to max_len.
pub fn random_full_model(rng: &mut SplitMix64, vocab_size: usize, max_len: usize) -> ScriptedModel {
    let vocab = Vocabulary::synthetic(vocab_size).unwrap();
    let mut model = ScriptedModel::new(vocab);
    let mut frontier: Vec<Vec<TokenId>> = vec![vec![]];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for prefix in frontier {
            model.insert(prefix.clone(), random_distribution(rng, vocab_size)).unwrap();
            for t in 0..vocab_size {
                let mut child = prefix.clone();
                child.push(t);
                next.push(child);
            }
        }
        frontier = next;
    }
    model
}

pub fn random_distribution(rng: &mut SplitMix64, size: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..size).map(|_| rng.next_f64() + 1e-3).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|p| p / total).collect()
}

/// All `vocab_size^max_len` token sequences with their log-probability sums,
/// computed by direct recursive enumeration over the model table.
pub fn enumerate_paths(
    model: &ScriptedModel,
    max_len: usize,
) -> Vec<(Vec<TokenId>, f64)> {
    use treesearch::LanguageModel;
    let vocab_size = model.vocabulary().size();
    let mut out = Vec::new();
    let mut stack: Vec<(Vec<TokenId>, f64)> = vec![(vec![], 0.0)];
    while let Some((prefix, log_sum)) = stack.pop() {
        if prefix.len() == max_len {
            out.push((prefix, log_sum));
            continue;
        }
        let dist = model.next_distribution(&prefix).unwrap();
        for t in (0..vocab_size).rev() {
            let mut seq = prefix.clone();
            seq.push(t);
            stack.push((seq, log_sum + dist.probs()[t].max(1e-12).ln()));
        }
    }
    out
}

/// The globally optimal sequence by log-probability sum, ties broken by
/// lexicographically smaller token sequence.
pub fn global_optimum(model: &ScriptedModel, max_len: usize) -> (Vec<TokenId>, f64) {
    enumerate_paths(model, max_len)
        .into_iter()
        .min_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)))
        .unwrap()
}

/// Replays the exhaustive top-k-sampler insertion discipline on plain
/// sequences: each round the current leaves are taken in score order (ties
/// to the earlier-created one) and every leaf emits all successors in
/// descending-probability order. Returns the full leaf ranking by
/// (geometric-mean score desc, creation order asc).
pub fn tree_ranking_oracle(model: &ScriptedModel, max_depth: usize) -> Vec<(Vec<TokenId>, f64)> {
    use treesearch::LanguageModel;
    let vocab_size = model.vocabulary().size();

    struct Entry {
        seq: Vec<TokenId>,
        log_sum: f64,
        score: f64,
        order: usize,
    }
    let mut counter = 0usize;
    let mut leaves = vec![Entry {
        seq: vec![],
        log_sum: 0.0,
        score: 1.0,
        order: {
            counter += 1;
            0
        },
    }];
    for _ in 0..max_depth {
        leaves.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.order.cmp(&b.order)));
        let mut next = Vec::new();
        for leaf in &leaves {
            let dist = model.next_distribution(&leaf.seq).unwrap();
            let mut ranked: Vec<(TokenId, f64)> =
                dist.probs().iter().copied().enumerate().collect();
            ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            for (t, p) in ranked.into_iter().take(vocab_size) {
                let mut seq = leaf.seq.clone();
                seq.push(t);
                let log_sum = leaf.log_sum + p.max(1e-12).ln();
                let score = (log_sum / seq.len() as f64).exp();
                next.push(Entry {
                    seq,
                    log_sum,
                    score,
                    order: counter,
                });
                counter += 1;
            }
        }
        leaves = next;
    }
    leaves.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.order.cmp(&b.order)));
    leaves.into_iter().map(|e| (e.seq, e.score)).collect()
}
