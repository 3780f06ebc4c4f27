//! Pluggable next-token-distribution interface plus deterministic toy models.
//!
//! Every model is a pure function from a token prefix to a probability
//! distribution over the vocabulary, so searches are reproducible and the
//! engine is testable without any external model.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type TokenId = usize;

/// Tolerance for distribution sums.
pub const SUM_TOLERANCE: f64 = 1e-9;

/// An ordered set of token strings; token id = position in the list.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
    eos_id: Option<TokenId>,
}

impl Vocabulary {
    pub fn new(tokens: Vec<String>, eos_id: Option<TokenId>) -> Result<Self> {
        if tokens.is_empty() {
            return Err(Error::InvalidInput("vocabulary must be non-empty".into()));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (id, tok) in tokens.iter().enumerate() {
            if tok.is_empty() {
                return Err(Error::InvalidInput(format!("token {id} is empty")));
            }
            if index.insert(tok.clone(), id).is_some() {
                return Err(Error::InvalidInput(format!("duplicate token {tok:?}")));
            }
        }
        if let Some(eos) = eos_id {
            if eos >= tokens.len() {
                return Err(Error::InvalidInput(format!(
                    "eos id {eos} out of range for vocabulary of size {}",
                    tokens.len()
                )));
            }
        }
        Ok(Self {
            tokens,
            index,
            eos_id,
        })
    }

    /// Synthetic vocabulary `t0, t1, ..` of the given size, no eos.
    pub fn synthetic(size: usize) -> Result<Self> {
        Self::new((0..size).map(|i| format!("t{i}")).collect(), None)
    }

    pub fn size(&self) -> usize {
        self.tokens.len()
    }

    pub fn eos_id(&self) -> Option<TokenId> {
        self.eos_id
    }

    pub fn token(&self, id: TokenId) -> Result<&str> {
        self.tokens
            .get(id)
            .map(String::as_str)
            .ok_or_else(|| Error::InvalidInput(format!("token id {id} out of range")))
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn id_of(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    /// Whitespace tokenization; unknown tokens are an error, never mapped.
    pub fn tokenize(&self, text: &str) -> Result<Vec<TokenId>> {
        text.split_whitespace()
            .map(|tok| {
                self.id_of(tok)
                    .ok_or_else(|| Error::InvalidInput(format!("unknown token {tok:?}")))
            })
            .collect()
    }

    pub fn render(&self, ids: &[TokenId]) -> Result<String> {
        let words: Result<Vec<&str>> = ids.iter().map(|&id| self.token(id)).collect();
        Ok(words?.join(" "))
    }

    pub fn check_prefix(&self, prefix: &[TokenId]) -> Result<()> {
        for &id in prefix {
            if id >= self.size() {
                return Err(Error::InvalidInput(format!(
                    "token id {id} out of range for vocabulary of size {}",
                    self.size()
                )));
            }
        }
        Ok(())
    }
}

/// Probabilities over the vocabulary for the next token.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenDistribution {
    probs: Vec<f64>,
}

impl TokenDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidInput("empty distribution".into()));
        }
        let mut sum = 0.0;
        for (i, &p) in probs.iter().enumerate() {
            if p.is_nan() || !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidInput(format!(
                    "probability {p} at index {i} outside [0, 1]"
                )));
            }
            sum += p;
        }
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::InvalidInput(format!(
                "distribution sums to {sum}, not 1"
            )));
        }
        Ok(Self { probs })
    }

    pub fn uniform(size: usize) -> Result<Self> {
        if size == 0 {
            return Err(Error::InvalidInput("empty distribution".into()));
        }
        Self::new(vec![1.0 / size as f64; size])
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }
}

/// A pure next-token model. Implementations must be immutable after
/// construction so queries are safe from multiple threads.
pub trait LanguageModel: Send + Sync {
    fn vocabulary(&self) -> &Vocabulary;

    /// Distribution over the next token given the prefix. Must be
    /// deterministic: the same prefix always yields bit-identical output.
    fn next_distribution(&self, prefix: &[TokenId]) -> Result<TokenDistribution>;
}

impl<M: LanguageModel + ?Sized> LanguageModel for Arc<M> {
    fn vocabulary(&self) -> &Vocabulary {
        (**self).vocabulary()
    }

    fn next_distribution(&self, prefix: &[TokenId]) -> Result<TokenDistribution> {
        (**self).next_distribution(prefix)
    }
}

/// Assigns equal probability to every token regardless of prefix.
#[derive(Debug, Clone)]
pub struct UniformModel {
    vocab: Vocabulary,
}

impl UniformModel {
    pub fn new(vocab: Vocabulary) -> Self {
        Self { vocab }
    }

    pub fn with_size(size: usize) -> Result<Self> {
        Ok(Self::new(Vocabulary::synthetic(size)?))
    }
}

impl LanguageModel for UniformModel {
    fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }

    fn next_distribution(&self, prefix: &[TokenId]) -> Result<TokenDistribution> {
        self.vocab.check_prefix(prefix)?;
        TokenDistribution::uniform(self.vocab.size())
    }
}

/// Add-alpha smoothed n-gram model over a whitespace-tokenized corpus.
///
/// Contexts never seen in training back off to the uniform smoothed
/// distribution rather than to shorter contexts.
#[derive(Debug, Clone)]
pub struct NGramModel {
    order: usize,
    alpha: f64,
    // context (exactly order-1 token ids) -> successor counts
    counts: BTreeMap<Vec<TokenId>, BTreeMap<TokenId, u64>>,
    vocab: Vocabulary,
}

#[derive(Serialize, Deserialize)]
struct NGramDoc {
    order: usize,
    alpha: f64,
    vocab: Vec<String>,
    counts: BTreeMap<String, BTreeMap<String, u64>>,
}

impl NGramModel {
    /// Trains on a corpus of token strings. The vocabulary is the distinct
    /// corpus tokens in first-appearance order.
    pub fn train<S: AsRef<str>>(corpus: &[S], order: usize, alpha: f64) -> Result<Self> {
        if order < 1 {
            return Err(Error::InvalidInput("order must be >= 1".into()));
        }
        if alpha.is_nan() || alpha <= 0.0 {
            return Err(Error::InvalidInput(format!("alpha must be > 0, got {alpha}")));
        }
        if corpus.len() < order {
            return Err(Error::InvalidInput(format!(
                "corpus length {} is shorter than order {order}",
                corpus.len()
            )));
        }
        let mut tokens: Vec<String> = Vec::new();
        let mut seen: HashMap<&str, TokenId> = HashMap::new();
        for tok in corpus {
            let tok = tok.as_ref();
            if !seen.contains_key(tok) {
                seen.insert(tok, tokens.len());
                tokens.push(tok.to_owned());
            }
        }
        let vocab = Vocabulary::new(tokens, None)?;
        let ids: Vec<TokenId> = corpus
            .iter()
            .map(|t| vocab.id_of(t.as_ref()).expect("token was just interned"))
            .collect();

        let mut counts: BTreeMap<Vec<TokenId>, BTreeMap<TokenId, u64>> = BTreeMap::new();
        for window in ids.windows(order) {
            let (context, successor) = window.split_at(order - 1);
            *counts
                .entry(context.to_vec())
                .or_default()
                .entry(successor[0])
                .or_insert(0) += 1;
        }
        Ok(Self {
            order,
            alpha,
            counts,
            vocab,
        })
    }

    /// Trains from raw UTF-8 text, whitespace-delimited.
    pub fn train_text(text: &str, order: usize, alpha: f64) -> Result<Self> {
        let corpus: Vec<&str> = text.split_whitespace().collect();
        Self::train(&corpus, order, alpha)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn to_json(&self) -> Result<String> {
        let counts = self
            .counts
            .iter()
            .map(|(ctx, succ)| {
                let key = self.vocab.render(ctx)?;
                let succ = succ
                    .iter()
                    .map(|(&tok, &n)| Ok((self.vocab.token(tok)?.to_owned(), n)))
                    .collect::<Result<BTreeMap<_, _>>>()?;
                Ok((key, succ))
            })
            .collect::<Result<BTreeMap<_, _>>>()?;
        let doc = NGramDoc {
            order: self.order,
            alpha: self.alpha,
            vocab: self.vocab.tokens().to_vec(),
            counts,
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let doc: NGramDoc = serde_json::from_str(json)?;
        if doc.order < 1 {
            return Err(Error::Parse {
                location: "order".into(),
                message: "order must be >= 1".into(),
            });
        }
        if doc.alpha.is_nan() || doc.alpha <= 0.0 {
            return Err(Error::Parse {
                location: "alpha".into(),
                message: "alpha must be > 0".into(),
            });
        }
        let vocab = Vocabulary::new(doc.vocab, None)?;
        let mut counts: BTreeMap<Vec<TokenId>, BTreeMap<TokenId, u64>> = BTreeMap::new();
        for (ctx_str, succ) in doc.counts {
            let ctx = vocab.tokenize(&ctx_str).map_err(|e| Error::Parse {
                location: format!("counts[{ctx_str:?}]"),
                message: e.to_string(),
            })?;
            if ctx.len() != doc.order - 1 {
                return Err(Error::Parse {
                    location: format!("counts[{ctx_str:?}]"),
                    message: format!(
                        "context has {} tokens, expected {}",
                        ctx.len(),
                        doc.order - 1
                    ),
                });
            }
            let succ = succ
                .into_iter()
                .map(|(tok, n)| {
                    let id = vocab.id_of(&tok).ok_or_else(|| Error::Parse {
                        location: format!("counts[{ctx_str:?}][{tok:?}]"),
                        message: "unknown successor token".into(),
                    })?;
                    Ok((id, n))
                })
                .collect::<Result<BTreeMap<_, _>>>()?;
            counts.insert(ctx, succ);
        }
        Ok(Self {
            order: doc.order,
            alpha: doc.alpha,
            counts,
            vocab,
        })
    }
}

impl LanguageModel for NGramModel {
    fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }

    fn next_distribution(&self, prefix: &[TokenId]) -> Result<TokenDistribution> {
        self.vocab.check_prefix(prefix)?;
        let v = self.vocab.size() as f64;
        let context_len = self.order - 1;
        let successors = if prefix.len() >= context_len {
            self.counts.get(&prefix[prefix.len() - context_len..])
        } else {
            None
        };
        let probs = match successors {
            Some(succ) => {
                let total: u64 = succ.values().sum();
                let denom = total as f64 + self.alpha * v;
                (0..self.vocab.size())
                    .map(|t| {
                        let c = succ.get(&t).copied().unwrap_or(0) as f64;
                        (c + self.alpha) / denom
                    })
                    .collect()
            }
            // Unseen context: uniform smoothed, alpha / (alpha * V) each.
            None => vec![1.0 / v; self.vocab.size()],
        };
        TokenDistribution::new(probs)
    }
}

/// Model defined by an explicit prefix -> distribution table, falling back
/// to the uniform distribution for prefixes not in the table. Enables exact
/// hand-written oracles in tests.
#[derive(Debug, Clone)]
pub struct ScriptedModel {
    vocab: Vocabulary,
    table: HashMap<Vec<TokenId>, TokenDistribution>,
}

#[derive(Serialize, Deserialize)]
struct ScriptedDoc {
    vocab: Vec<String>,
    #[serde(default)]
    eos_id: Option<TokenId>,
    table: BTreeMap<String, Vec<f64>>,
}

impl ScriptedModel {
    pub fn new(vocab: Vocabulary) -> Self {
        Self {
            vocab,
            table: HashMap::new(),
        }
    }

    /// Registers the distribution returned for an exact prefix.
    pub fn insert(&mut self, prefix: Vec<TokenId>, probs: Vec<f64>) -> Result<()> {
        self.vocab.check_prefix(&prefix)?;
        if probs.len() != self.vocab.size() {
            return Err(Error::InvalidInput(format!(
                "distribution has {} entries, vocabulary has {}",
                probs.len(),
                self.vocab.size()
            )));
        }
        self.table.insert(prefix, TokenDistribution::new(probs)?);
        Ok(())
    }

    /// Loads from a JSON document mapping prefix strings (tokens joined by
    /// single spaces, empty string = root) to probability arrays.
    /// Distribution sums are validated on load.
    pub fn from_json(json: &str) -> Result<Self> {
        let doc: ScriptedDoc = serde_json::from_str(json)?;
        let vocab = Vocabulary::new(doc.vocab, doc.eos_id)?;
        let mut model = Self::new(vocab);
        for (prefix_str, probs) in doc.table {
            let prefix = model.vocab.tokenize(&prefix_str).map_err(|e| Error::Parse {
                location: format!("table[{prefix_str:?}]"),
                message: e.to_string(),
            })?;
            model.insert(prefix, probs).map_err(|e| Error::Parse {
                location: format!("table[{prefix_str:?}]"),
                message: e.to_string(),
            })?;
        }
        Ok(model)
    }

    pub fn to_json(&self) -> Result<String> {
        let table = self
            .table
            .iter()
            .map(|(prefix, dist)| Ok((self.vocab.render(prefix)?, dist.probs().to_vec())))
            .collect::<Result<BTreeMap<_, _>>>()?;
        let doc = ScriptedDoc {
            vocab: self.vocab.tokens().to_vec(),
            eos_id: self.vocab.eos_id(),
            table,
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }
}

impl LanguageModel for ScriptedModel {
    fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }

    fn next_distribution(&self, prefix: &[TokenId]) -> Result<TokenDistribution> {
        self.vocab.check_prefix(prefix)?;
        match self.table.get(prefix) {
            Some(dist) => Ok(dist.clone()),
            None => TokenDistribution::uniform(self.vocab.size()),
        }
    }
}
