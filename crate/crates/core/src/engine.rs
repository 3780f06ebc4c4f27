//! The search loop: sample open leaves by confidence, extend each with its
//! top-k next tokens, score the new leaves, retire paths at the depth cap,
//! and rank the surviving completions. Greedy and beam-search baselines live
//! here too.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::lm::{LanguageModel, TokenDistribution, TokenId};
use crate::rng::SplitMix64;
use crate::sampling::{sample_leaves, top_k_tokens, SamplerKind};
use crate::scoring::{apply_evaluator, score, ConfidenceScore, EvaluatorHook, ScorerKind};
use crate::tree::{NodeId, NodeStatus, SearchTree};

/// Every knob of a run.
#[derive(Clone)]
pub struct SearchConfig {
    pub scorer: ScorerKind,
    pub sampler: SamplerKind,
    /// Tokens added per extended leaf (clamped to the vocabulary size).
    pub k: usize,
    /// Leaves sampled and extended per iteration.
    pub batch: usize,
    /// Generated-token cap, excluding the prompt.
    pub max_depth: usize,
    /// Iteration budget.
    pub iterations: usize,
    /// Tree-size cap, counting the root.
    pub max_nodes: usize,
    pub seed: u64,
    pub evaluator: Option<EvaluatorHook>,
    /// Result count.
    pub top_n: usize,
    pub hybrid_pool_factor: usize,
    /// Model-query worker threads; does not affect results.
    pub workers: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            scorer: ScorerKind::GeometricMean,
            sampler: SamplerKind::Hybrid,
            k: 5,
            batch: 4,
            max_depth: 32,
            iterations: 100,
            max_nodes: 10_000,
            seed: 0,
            evaluator: None,
            top_n: 5,
            hybrid_pool_factor: 2,
            workers: 1,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        let checks = [
            (self.k >= 1, "k must be >= 1"),
            (self.batch >= 1, "batch must be >= 1"),
            (self.max_depth >= 1, "max_depth must be >= 1"),
            (self.iterations >= 1, "iterations must be >= 1"),
            (self.top_n >= 1, "top_n must be >= 1"),
            (self.hybrid_pool_factor >= 1, "hybrid_pool_factor must be >= 1"),
            (self.workers >= 1, "workers must be >= 1"),
        ];
        for (ok, msg) in checks {
            if !ok {
                return Err(Error::InvalidInput(msg.into()));
            }
        }
        if self.max_nodes < self.k + 1 {
            return Err(Error::InvalidInput(format!(
                "max_nodes must be >= k + 1 = {}",
                self.k + 1
            )));
        }
        Ok(())
    }
}

/// A terminal or surviving path rendered for output. The trailing eos token
/// is dropped from `tokens`, so a completion that ends immediately at eos has
/// depth 0.
#[derive(Debug, Clone, Serialize)]
pub struct CompletionResult {
    pub tokens: Vec<TokenId>,
    pub text: String,
    pub score_linear: f64,
    pub score_log: f64,
    pub terminal: bool,
    pub depth: usize,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct SearchStats {
    pub nodes_created: usize,
    pub iterations_run: usize,
    pub leaves_extended: usize,
    pub terminals_found: usize,
    #[serde(skip)]
    pub wall_time: Duration,
}

fn completion_from_node(
    tree: &SearchTree,
    id: NodeId,
    score: ConfidenceScore,
) -> Result<CompletionResult> {
    let node = tree.node(id)?;
    let terminal = node.status() == NodeStatus::Terminal;
    let mut tokens = tree.path_tokens(id)?;
    if terminal {
        tokens.pop(); // drop the eos marker from the rendered sequence
    }
    let text = tree.vocabulary().render(&tokens)?;
    let depth = tokens.len() - tree.prompt().len();
    Ok(CompletionResult {
        tokens,
        text,
        score_linear: score.linear(),
        score_log: score.log_value(),
        terminal,
        depth,
    })
}

/// Queries the model for each path, optionally on several worker threads.
/// Results come back in input order, so worker count never changes a run.
fn query_batch(
    model: &dyn LanguageModel,
    paths: &[Vec<TokenId>],
    workers: usize,
) -> Result<Vec<TokenDistribution>> {
    let attach = |path: &[TokenId], e: Error| Error::ModelQuery {
        path: path.to_vec(),
        message: e.to_string(),
    };
    if workers <= 1 || paths.len() <= 1 {
        return paths
            .iter()
            .map(|p| model.next_distribution(p).map_err(|e| attach(p, e)))
            .collect();
    }
    let slots: Vec<Mutex<Option<Result<TokenDistribution>>>> =
        paths.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..workers.min(paths.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= paths.len() {
                    break;
                }
                let result = model.next_distribution(&paths[i]);
                *slots[i].lock().unwrap() = Some(result);
            });
        }
    });
    slots
        .into_iter()
        .zip(paths)
        .map(|(slot, path)| {
            slot.into_inner()
                .unwrap()
                .expect("worker filled every slot")
                .map_err(|e| attach(path, e))
        })
        .collect()
}

/// Runs the confidence-guided tree search and returns the grown tree, the
/// ranked completions, and run statistics.
pub fn run_search(
    model: &dyn LanguageModel,
    prompt: &[TokenId],
    config: &SearchConfig,
) -> Result<(SearchTree, Vec<CompletionResult>, SearchStats)> {
    config.validate()?;
    let vocab = model.vocabulary();
    vocab.check_prefix(prompt)?;
    let start = Instant::now();

    let mut tree = SearchTree::new(prompt.to_vec(), vocab.clone())?;
    // Leaves are scored once at creation; scores are immutable thereafter.
    let mut scores: Vec<ConfidenceScore> = vec![ConfidenceScore::ONE];
    let mut rng = SplitMix64::new(config.seed);
    let mut stats = SearchStats::default();
    let k = config.k.min(vocab.size());

    'outer: for _ in 0..config.iterations {
        let leaves = tree.open_leaves();
        if leaves.is_empty() {
            break;
        }
        stats.iterations_run += 1;
        let weighted: Vec<(NodeId, ConfidenceScore)> = leaves
            .iter()
            .map(|&id| (id, scores[id.index()]))
            .collect();
        let sampled = sample_leaves(
            config.sampler,
            &weighted,
            config.batch,
            config.hybrid_pool_factor,
            &mut rng,
        )?;

        let paths: Vec<Vec<TokenId>> = sampled
            .iter()
            .map(|&id| tree.path_tokens(id))
            .collect::<Result<_>>()?;
        let dists = query_batch(model, &paths, config.workers)?;

        for (&leaf, dist) in sampled.iter().zip(&dists) {
            if tree.len() >= config.max_nodes {
                break 'outer;
            }
            stats.leaves_extended += 1;
            let mut parent_logprobs = tree.path_logprobs(leaf)?;
            for (token, prob) in top_k_tokens(dist, k)? {
                if tree.len() >= config.max_nodes {
                    break;
                }
                let lp = prob.max(crate::scoring::PROB_FLOOR).ln();
                let child = tree.add_child(leaf, token, lp)?;
                parent_logprobs.push(lp);
                let mut child_score = score(config.scorer, &parent_logprobs)?;
                if let Some(hook) = &config.evaluator {
                    let path = tree.path_tokens(child)?;
                    child_score = apply_evaluator(child_score, hook, &path)?;
                }
                parent_logprobs.pop();
                debug_assert_eq!(scores.len(), child.index());
                scores.push(child_score);
                let node = tree.node(child)?;
                if node.status() == NodeStatus::Terminal {
                    stats.terminals_found += 1;
                } else if node.depth() >= config.max_depth {
                    tree.mark_non_viable(child)?;
                }
            }
        }
    }

    stats.nodes_created = tree.len();
    let results = rank_results(&tree, &scores, config.top_n)?;
    stats.wall_time = start.elapsed();
    log::debug!(
        "search finished: {} nodes, {} iterations, {} results",
        stats.nodes_created,
        stats.iterations_run,
        results.len()
    );
    Ok((tree, results, stats))
}

/// Terminals, non-viable leaves, and still-open leaves all compete for the
/// final ranking; expanded interior nodes do not.
fn rank_results(
    tree: &SearchTree,
    scores: &[ConfidenceScore],
    top_n: usize,
) -> Result<Vec<CompletionResult>> {
    let mut candidates: Vec<NodeId> = tree
        .node_ids()
        .filter(|&id| !matches!(tree.node(id), Ok(n) if n.status() == NodeStatus::Expanded))
        .collect();
    candidates.sort_by(|&a, &b| {
        scores[b.index()]
            .linear()
            .total_cmp(&scores[a.index()].linear())
            .then(a.cmp(&b))
    });
    candidates
        .into_iter()
        .take(top_n)
        .map(|id| completion_from_node(tree, id, scores[id.index()]))
        .collect()
}

/// Repeatedly appends the argmax token (ties to the lower id) until eos or
/// `max_len` generated tokens.
pub fn greedy_decode(
    model: &dyn LanguageModel,
    prompt: &[TokenId],
    max_len: usize,
) -> Result<CompletionResult> {
    if max_len < 1 {
        return Err(Error::InvalidInput("max_len must be >= 1".into()));
    }
    let vocab = model.vocabulary();
    vocab.check_prefix(prompt)?;
    let mut tokens = prompt.to_vec();
    let mut logprobs = Vec::new();
    let mut terminal = false;
    for _ in 0..max_len {
        let dist = model.next_distribution(&tokens)?;
        let (best, prob) = top_k_tokens(&dist, 1)?[0];
        logprobs.push(prob.max(crate::scoring::PROB_FLOOR).ln());
        if vocab.eos_id() == Some(best) {
            terminal = true;
            break;
        }
        tokens.push(best);
    }
    let s = score(ScorerKind::SumLogprob, &logprobs)?;
    let text = vocab.render(&tokens)?;
    let depth = tokens.len() - prompt.len();
    Ok(CompletionResult {
        tokens,
        text,
        score_linear: s.linear(),
        score_log: s.log_value(),
        terminal,
        depth,
    })
}

#[derive(Clone)]
struct Beam {
    generated: Vec<TokenId>,
    log_sum: f64,
    terminal: bool,
}

/// Classic beam search by sum of log probabilities. Finished beams retire
/// into a pool; the final ranking mixes finished and surviving beams, ties
/// broken by token-id lexicographic order.
pub fn beam_search(
    model: &dyn LanguageModel,
    prompt: &[TokenId],
    width: usize,
    max_len: usize,
) -> Result<Vec<CompletionResult>> {
    if width < 1 || max_len < 1 {
        return Err(Error::InvalidInput(
            "beam width and max_len must be >= 1".into(),
        ));
    }
    let vocab = model.vocabulary();
    vocab.check_prefix(prompt)?;
    let mut active = vec![Beam {
        generated: Vec::new(),
        log_sum: 0.0,
        terminal: false,
    }];
    let mut pool: Vec<Beam> = Vec::new();

    for _ in 0..max_len {
        if active.is_empty() {
            break;
        }
        let mut candidates: Vec<Beam> = Vec::with_capacity(active.len() * vocab.size());
        for beam in &active {
            let mut path = prompt.to_vec();
            path.extend_from_slice(&beam.generated);
            let dist = model.next_distribution(&path)?;
            for (token, &prob) in dist.probs().iter().enumerate() {
                let mut generated = beam.generated.clone();
                let terminal = vocab.eos_id() == Some(token);
                if !terminal {
                    generated.push(token);
                }
                candidates.push(Beam {
                    generated,
                    log_sum: beam.log_sum + prob.max(crate::scoring::PROB_FLOOR).ln(),
                    terminal,
                });
            }
        }
        candidates.sort_by(|a, b| {
            b.log_sum
                .total_cmp(&a.log_sum)
                .then_with(|| a.generated.cmp(&b.generated))
        });
        candidates.truncate(width);
        active = Vec::new();
        for beam in candidates {
            if beam.terminal {
                pool.push(beam);
            } else {
                active.push(beam);
            }
        }
    }

    pool.extend(active);
    pool.sort_by(|a, b| {
        b.log_sum
            .total_cmp(&a.log_sum)
            .then_with(|| a.generated.cmp(&b.generated))
    });
    pool.truncate(width);
    pool.into_iter()
        .map(|beam| {
            let mut tokens = prompt.to_vec();
            tokens.extend_from_slice(&beam.generated);
            let text = vocab.render(&tokens)?;
            let depth = beam.generated.len();
            Ok(CompletionResult {
                tokens,
                text,
                score_linear: beam.log_sum.exp(),
                score_log: beam.log_sum,
                terminal: beam.terminal,
                depth,
            })
        })
        .collect()
}
