//! Arena-backed search tree of partial completions.
//!
//! Nodes hold parent links, the token that extends the parent path, the
//! natural-log probability of that token, depth, and a one-way lifecycle
//! status. The prompt is stored once on the tree, not duplicated per node.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lm::{TokenId, Vocabulary};

/// Stable dense handle into a tree's arena. Never reused.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Lifecycle of a node. Transitions are one-way: an open leaf becomes
/// expanded, terminal, or non-viable, and those three are final.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeStatus {
    #[serde(rename = "open-leaf")]
    OpenLeaf,
    #[serde(rename = "expanded")]
    Expanded,
    #[serde(rename = "terminal")]
    Terminal,
    #[serde(rename = "non-viable")]
    NonViable,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    token_id: Option<TokenId>,
    parent: Option<NodeId>,
    children: Vec<NodeId>,
    token_logprob: f64,
    depth: u32,
    status: NodeStatus,
}

impl Node {
    pub fn token_id(&self) -> Option<TokenId> {
        self.token_id
    }

    pub fn parent(&self) -> Option<NodeId> {
        self.parent
    }

    pub fn children(&self) -> &[NodeId] {
        &self.children
    }

    /// ln P(token | parent path); 0.0 for the root.
    pub fn token_logprob(&self) -> f64 {
        self.token_logprob
    }

    /// Generated-token count from the root (root = 0).
    pub fn depth(&self) -> usize {
        self.depth as usize
    }

    pub fn status(&self) -> NodeStatus {
        self.status
    }
}

#[derive(Debug, Clone)]
pub struct SearchTree {
    nodes: Vec<Node>,
    prompt: Vec<TokenId>,
    vocab: Vocabulary,
}

#[derive(Serialize, Deserialize)]
struct NodeDoc {
    id: u32,
    parent: Option<u32>,
    token: Option<TokenId>,
    logprob: f64,
    depth: u32,
    status: NodeStatus,
}

#[derive(Serialize, Deserialize)]
struct TreeDoc {
    prompt: Vec<TokenId>,
    vocab: Vec<String>,
    eos_id: Option<TokenId>,
    nodes: Vec<NodeDoc>,
}

impl SearchTree {
    /// Creates a tree whose root is an open leaf carrying no token.
    pub fn new(prompt: Vec<TokenId>, vocab: Vocabulary) -> Result<Self> {
        vocab.check_prefix(&prompt)?;
        Ok(Self {
            nodes: vec![Node {
                token_id: None,
                parent: None,
                children: Vec::new(),
                token_logprob: 0.0,
                depth: 0,
                status: NodeStatus::OpenLeaf,
            }],
            prompt,
            vocab,
        })
    }

    pub fn root(&self) -> NodeId {
        NodeId(0)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn prompt(&self) -> &[TokenId] {
        &self.prompt
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn node(&self, id: NodeId) -> Result<&Node> {
        self.nodes
            .get(id.index())
            .ok_or(Error::UnknownNode(id.index()))
    }

    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.nodes.len() as u32).map(NodeId)
    }

    /// Appends a child under `parent`. The child starts as an open leaf, or
    /// terminal immediately when the token is the eos marker. The parent
    /// becomes expanded.
    pub fn add_child(
        &mut self,
        parent: NodeId,
        token_id: TokenId,
        token_logprob: f64,
    ) -> Result<NodeId> {
        self.vocab.check_prefix(&[token_id])?;
        if token_logprob.is_nan() || token_logprob > 0.0 {
            return Err(Error::InvalidInput(format!(
                "token logprob must be <= 0, got {token_logprob}"
            )));
        }
        let parent_node = self.node(parent)?;
        match parent_node.status {
            NodeStatus::OpenLeaf | NodeStatus::Expanded => {}
            status => {
                return Err(Error::Lifecycle {
                    id: parent.index(),
                    status,
                })
            }
        }
        let depth = parent_node.depth + 1;
        let status = if self.vocab.eos_id() == Some(token_id) {
            NodeStatus::Terminal
        } else {
            NodeStatus::OpenLeaf
        };
        let id = NodeId(self.nodes.len() as u32);
        self.nodes.push(Node {
            token_id: Some(token_id),
            parent: Some(parent),
            children: Vec::new(),
            token_logprob,
            depth,
            status,
        });
        let parent_node = &mut self.nodes[parent.index()];
        parent_node.children.push(id);
        parent_node.status = NodeStatus::Expanded;
        Ok(id)
    }

    /// Retires an open leaf that hit the depth cap without eos.
    pub fn mark_non_viable(&mut self, id: NodeId) -> Result<()> {
        let node = self
            .nodes
            .get_mut(id.index())
            .ok_or(Error::UnknownNode(id.index()))?;
        match node.status {
            NodeStatus::OpenLeaf => {
                node.status = NodeStatus::NonViable;
                Ok(())
            }
            status => Err(Error::Lifecycle {
                id: id.index(),
                status,
            }),
        }
    }

    /// Prompt tokens followed by the token ids on the root -> node path.
    pub fn path_tokens(&self, id: NodeId) -> Result<Vec<TokenId>> {
        let mut rev = Vec::new();
        let mut cursor = self.node(id)?;
        loop {
            if let Some(tok) = cursor.token_id {
                rev.push(tok);
            }
            match cursor.parent {
                Some(p) => cursor = &self.nodes[p.index()],
                None => break,
            }
        }
        let mut path = self.prompt.clone();
        path.extend(rev.into_iter().rev());
        Ok(path)
    }

    /// ln-probabilities of the tokens on the root -> node path, in order.
    pub fn path_logprobs(&self, id: NodeId) -> Result<Vec<f64>> {
        let mut rev = Vec::new();
        let mut cursor = self.node(id)?;
        loop {
            if cursor.token_id.is_some() {
                rev.push(cursor.token_logprob);
            }
            match cursor.parent {
                Some(p) => cursor = &self.nodes[p.index()],
                None => break,
            }
        }
        rev.reverse();
        Ok(rev)
    }

    /// Exactly the nodes with status open-leaf, in id order.
    pub fn open_leaves(&self) -> Vec<NodeId> {
        self.nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| n.status == NodeStatus::OpenLeaf)
            .map(|(i, _)| NodeId(i as u32))
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = TreeDoc {
            prompt: self.prompt.clone(),
            vocab: self.vocab.tokens().to_vec(),
            eos_id: self.vocab.eos_id(),
            nodes: self
                .nodes
                .iter()
                .enumerate()
                .map(|(i, n)| NodeDoc {
                    id: i as u32,
                    parent: n.parent.map(|p| p.0),
                    token: n.token_id,
                    logprob: n.token_logprob,
                    depth: n.depth,
                    status: n.status,
                })
                .collect(),
        };
        Ok(serde_json::to_string(&doc)?)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let doc: TreeDoc = serde_json::from_str(json)?;
        let vocab = Vocabulary::new(doc.vocab, doc.eos_id).map_err(|e| Error::Parse {
            location: "vocab".into(),
            message: e.to_string(),
        })?;
        let mut tree = SearchTree {
            nodes: Vec::with_capacity(doc.nodes.len()),
            prompt: doc.prompt,
            vocab,
        };
        tree.vocab
            .check_prefix(&tree.prompt)
            .map_err(|e| Error::Parse {
                location: "prompt".into(),
                message: e.to_string(),
            })?;
        if doc.nodes.is_empty() {
            return Err(Error::Parse {
                location: "nodes".into(),
                message: "a tree has at least a root node".into(),
            });
        }
        for (i, nd) in doc.nodes.iter().enumerate() {
            let loc = format!("nodes[{i}]");
            if nd.id as usize != i {
                return Err(Error::Parse {
                    location: loc,
                    message: format!("ids must be dense and ascending, got {}", nd.id),
                });
            }
            match (i, nd.parent, nd.token) {
                (0, None, None) => {
                    if nd.depth != 0 {
                        return Err(Error::Parse {
                            location: loc,
                            message: "root depth must be 0".into(),
                        });
                    }
                }
                (0, _, _) => {
                    return Err(Error::Parse {
                        location: loc,
                        message: "root must have no parent and no token".into(),
                    })
                }
                (_, Some(p), Some(tok)) => {
                    // Parents precede children, which rules out cycles.
                    if p as usize >= i {
                        return Err(Error::Parse {
                            location: loc,
                            message: format!("parent {p} does not precede node {i}"),
                        });
                    }
                    if tok >= tree.vocab.size() {
                        return Err(Error::Parse {
                            location: loc,
                            message: format!("token {tok} out of vocabulary range"),
                        });
                    }
                    if nd.logprob.is_nan() || nd.logprob > 0.0 {
                        return Err(Error::Parse {
                            location: loc,
                            message: format!("logprob must be <= 0, got {}", nd.logprob),
                        });
                    }
                    let parent_depth = tree.nodes[p as usize].depth;
                    if nd.depth != parent_depth + 1 {
                        return Err(Error::Parse {
                            location: loc,
                            message: format!(
                                "depth {} does not equal parent depth {} + 1",
                                nd.depth, parent_depth
                            ),
                        });
                    }
                }
                _ => {
                    return Err(Error::Parse {
                        location: loc,
                        message: "non-root node needs both parent and token".into(),
                    })
                }
            }
            tree.nodes.push(Node {
                token_id: nd.token,
                parent: nd.parent.map(NodeId),
                children: Vec::new(),
                token_logprob: nd.logprob,
                depth: nd.depth,
                status: nd.status,
            });
            if let Some(p) = nd.parent {
                tree.nodes[p as usize].children.push(NodeId(i as u32));
            }
        }
        // Status consistency: a node with children must be expanded.
        for (i, n) in tree.nodes.iter().enumerate() {
            if !n.children.is_empty() && n.status != NodeStatus::Expanded {
                return Err(Error::Parse {
                    location: format!("nodes[{i}]"),
                    message: format!("node with children has status {:?}", n.status),
                });
            }
            if n.children.is_empty() && n.status == NodeStatus::Expanded {
                return Err(Error::Parse {
                    location: format!("nodes[{i}]"),
                    message: "expanded node has no children".into(),
                });
            }
        }
        Ok(tree)
    }

    /// Graphviz DOT rendering. `score` supplies the displayed score per
    /// node; non-viable nodes are drawn dashed.
    pub fn to_dot(&self, score: &dyn Fn(NodeId) -> f64) -> String {
        let mut out = String::from("digraph searchtree {\n  node [shape=box];\n");
        for id in self.node_ids() {
            let node = &self.nodes[id.index()];
            let label = match node.token_id {
                Some(tok) => self.vocab.token(tok).unwrap_or("?").to_owned(),
                None => "<root>".to_owned(),
            };
            let style = if node.status == NodeStatus::NonViable {
                ", style=dashed"
            } else {
                ""
            };
            out.push_str(&format!(
                "  n{} [label=\"{}\\n{}\"{}];\n",
                id.index(),
                escape_dot(&label),
                crate::format_sig(score(id), 6),
                style
            ));
        }
        for id in self.node_ids() {
            for &child in self.nodes[id.index()].children() {
                out.push_str(&format!("  n{} -> n{};\n", id.index(), child.index()));
            }
        }
        out.push_str("}\n");
        out
    }
}

fn escape_dot(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

impl PartialEq for SearchTree {
    fn eq(&self, other: &Self) -> bool {
        self.prompt == other.prompt
            && self.vocab.tokens() == other.vocab.tokens()
            && self.vocab.eos_id() == other.vocab.eos_id()
            && self.nodes == other.nodes
    }
}
