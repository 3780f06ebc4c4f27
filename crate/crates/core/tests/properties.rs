//! Property tests over randomly grown trees, scorers, and samplers.

use proptest::prelude::*;
use treesearch::{
    sample_leaves, score, NodeStatus, SamplerKind, ScorerKind, SearchTree, SplitMix64, Vocabulary,
};

/// Grows a random tree by replaying a script of (parent choice, token,
/// logprob) moves, skipping illegal ones.
fn grow_tree(moves: &[(u8, u8, f64)], vocab_size: usize) -> SearchTree {
    let vocab = Vocabulary::synthetic(vocab_size).unwrap();
    let mut tree = SearchTree::new(vec![0], vocab).unwrap();
    for &(parent_pick, token, lp) in moves {
        let ids: Vec<_> = tree
            .node_ids()
            .filter(|&id| {
                matches!(
                    tree.node(id).unwrap().status(),
                    NodeStatus::OpenLeaf | NodeStatus::Expanded
                )
            })
            .collect();
        let parent = ids[parent_pick as usize % ids.len()];
        let _ = tree.add_child(parent, token as usize % vocab_size, -(lp.abs()));
    }
    tree
}

proptest! {
    #[test]
    fn tree_audit_after_any_growth(
        moves in prop::collection::vec((any::<u8>(), any::<u8>(), 0.0..5.0f64), 0..200)
    ) {
        let tree = grow_tree(&moves, 5);
        // structural audit: single parent, consistent depths, partition
        let mut child_links = 0;
        let mut by_status = [0usize; 4];
        for id in tree.node_ids() {
            let node = tree.node(id).unwrap();
            child_links += node.children().len();
            by_status[node.status() as usize] += 1;
            let mut walked = 0;
            let mut cursor = node;
            while let Some(p) = cursor.parent() {
                walked += 1;
                cursor = tree.node(p).unwrap();
            }
            prop_assert_eq!(walked, node.depth());
            // path length = prompt length + depth (parent-walk oracle)
            prop_assert_eq!(
                tree.path_tokens(id).unwrap().len(),
                tree.prompt().len() + node.depth()
            );
            for &c in node.children() {
                prop_assert_eq!(tree.node(c).unwrap().parent(), Some(id));
            }
        }
        prop_assert_eq!(tree.len(), 1 + child_links);
        prop_assert_eq!(by_status.iter().sum::<usize>(), tree.len());
    }

    #[test]
    fn tree_json_round_trip(
        moves in prop::collection::vec((any::<u8>(), any::<u8>(), 0.0..5.0f64), 0..200)
    ) {
        let tree = grow_tree(&moves, 5);
        let json = tree.to_json().unwrap();
        let back = SearchTree::from_json(&json).unwrap();
        prop_assert_eq!(&tree, &back);
        // and the re-serialization is byte-identical
        prop_assert_eq!(json, back.to_json().unwrap());
    }

    #[test]
    fn scorers_are_permutation_invariant(
        mut probs in prop::collection::vec(1e-9..1.0f64, 1..16),
        seed in any::<u64>()
    ) {
        let lps: Vec<f64> = probs.iter().map(|p| p.ln()).collect();
        // shuffle deterministically
        let mut rng = SplitMix64::new(seed);
        for i in (1..probs.len()).rev() {
            probs.swap(i, (rng.next_u64() % (i as u64 + 1)) as usize);
        }
        let shuffled: Vec<f64> = probs.iter().map(|p| p.ln()).collect();
        for kind in [ScorerKind::SumLogprob, ScorerKind::GeometricMean, ScorerKind::ArithmeticMean] {
            let a = score(kind, &lps).unwrap().linear();
            let b = score(kind, &shuffled).unwrap().linear();
            prop_assert!((a - b).abs() <= 1e-12 * a.max(1e-300));
        }
    }

    #[test]
    fn sample_leaves_returns_distinct_listed_ids(
        weights in prop::collection::vec(0.0..1.0f64, 1..20),
        batch in 1usize..8,
        seed in any::<u64>(),
        kind_pick in 0usize..3
    ) {
        let vocab = Vocabulary::synthetic(1).unwrap();
        let mut tree = SearchTree::new(vec![], vocab).unwrap();
        let mut last = tree.root();
        let mut leaves = Vec::new();
        for &w in &weights {
            last = tree.add_child(last, 0, -0.1).unwrap();
            leaves.push((last, score(ScorerKind::GeometricMean, &[w.max(1e-12).ln()]).unwrap()));
        }
        let kind = [SamplerKind::NormalizedConfidence, SamplerKind::TopKLeaves, SamplerKind::Hybrid][kind_pick];
        let mut rng = SplitMix64::new(seed);
        let picked = sample_leaves(kind, &leaves, batch, 2, &mut rng).unwrap();
        prop_assert_eq!(picked.len(), batch.min(leaves.len()));
        let mut sorted = picked.clone();
        sorted.sort();
        sorted.dedup();
        prop_assert_eq!(sorted.len(), picked.len());
        for id in picked {
            prop_assert!(leaves.iter().any(|(n, _)| *n == id));
        }
    }

    #[test]
    fn top_k_full_is_sorted_permutation(
        raw in prop::collection::vec(1e-6..1.0f64, 2..12)
    ) {
        let total: f64 = raw.iter().sum();
        let probs: Vec<f64> = raw.iter().map(|p| p / total).collect();
        let dist = treesearch::TokenDistribution::new(probs.clone()).unwrap();
        let all = treesearch::top_k_tokens(&dist, probs.len()).unwrap();
        prop_assert_eq!(all.len(), probs.len());
        for pair in all.windows(2) {
            prop_assert!(pair[0].1 > pair[1].1 || (pair[0].1 == pair[1].1 && pair[0].0 < pair[1].0));
        }
        let mut ids: Vec<usize> = all.iter().map(|(t, _)| *t).collect();
        ids.sort();
        prop_assert_eq!(ids, (0..probs.len()).collect::<Vec<_>>());
    }
}
