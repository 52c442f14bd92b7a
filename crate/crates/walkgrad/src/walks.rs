//! Walk generation.
//!
//! A walk of length `t` has `t` edges and `t + 1` nodes. Three walk
//! distributions are supported:
//!
//! - `Simple`: each step picks an out-neighbor proportionally to edge
//!   weight (DeepWalk).
//! - `Node2Vec { p, q }`: the first step is a simple weighted step; later
//!   steps reweight each candidate edge (v, x) by 1/p when x is the
//!   previous node, 1 when x neighbors the previous node, and 1/q
//!   otherwise.
//! - `LossGuided { power }`: each step picks an out-edge proportionally to
//!   `weight * pos_loss^power` under the current model, so high-loss edges
//!   attract the walk. Power 0 recovers the simple walk. Every step prices
//!   the loss of all outgoing edges, which is why this variant is expensive.
//!
//! Walks that reach a dead end (possible only on directed inputs) are
//! truncated and flagged; callers train on the truncated walk as-is.

use rand::Rng;

use crate::graph::{AliasSampler, Graph, NodeId};
use crate::sgns::EmbeddingModel;

/// A node sequence; `truncated` marks a walk cut short at a dead end.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Walk {
    pub nodes: Vec<NodeId>,
    pub truncated: bool,
}

impl Walk {
    pub fn single(start: NodeId) -> Walk {
        Walk {
            nodes: vec![start],
            truncated: false,
        }
    }

    pub fn start(&self) -> NodeId {
        self.nodes[0]
    }

    pub fn len_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn len_edges(&self) -> usize {
        self.nodes.len().saturating_sub(1)
    }
}

/// Which walk distribution to draw from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WalkKind {
    Simple,
    Node2Vec { p: f64, q: f64 },
    LossGuided { power: f64 },
}

impl WalkKind {
    pub fn validate(&self) -> Result<(), String> {
        match *self {
            WalkKind::Simple => Ok(()),
            WalkKind::Node2Vec { p, q } => {
                if p > 0.0 && p.is_finite() && q > 0.0 && q.is_finite() {
                    Ok(())
                } else {
                    Err(format!("node2vec parameters must be positive finite, got p={p} q={q}"))
                }
            }
            WalkKind::LossGuided { power } => {
                if power >= 0.0 && power.is_finite() {
                    Ok(())
                } else {
                    Err(format!("loss-guided power must be nonnegative finite, got {power}"))
                }
            }
        }
    }

    /// Loss-guided walks read the model at every step.
    pub fn needs_model(&self) -> bool {
        matches!(self, WalkKind::LossGuided { .. })
    }
}

/// One linear-scan draw proportional to `weights[i] * bias(i)`. Returns the
/// chosen adjacency slot, or None when all biased weights vanish.
fn biased_step<R: Rng + ?Sized>(
    weights: &[f64],
    bias: impl Fn(usize) -> f64,
    rng: &mut R,
) -> Option<usize> {
    let mut total = 0.0;
    for (i, &w) in weights.iter().enumerate() {
        let b = bias(i);
        debug_assert!(b >= 0.0);
        total += w * b;
    }
    if !(total > 0.0) || !total.is_finite() {
        return None;
    }
    let mut u = rng.gen_range(0.0..total);
    for (i, &w) in weights.iter().enumerate() {
        u -= w * bias(i);
        if u < 0.0 {
            return Some(i);
        }
    }
    Some(weights.len() - 1)
}

/// Plain weighted step (linear scan; used where no alias table applies).
fn weighted_step<R: Rng + ?Sized>(g: &Graph, u: NodeId, rng: &mut R) -> Option<NodeId> {
    let ws = g.weights_of(u);
    if ws.is_empty() {
        return None;
    }
    biased_step(ws, |_| 1.0, rng).map(|slot| g.neighbors(u)[slot])
}

/// Second-order step from `cur` given the walk arrived from `prev`.
fn node2vec_step<R: Rng + ?Sized>(
    g: &Graph,
    prev: NodeId,
    cur: NodeId,
    p: f64,
    q: f64,
    rng: &mut R,
) -> Option<NodeId> {
    let nbrs = g.neighbors(cur);
    if nbrs.is_empty() {
        return None;
    }
    let alpha = |slot: usize| {
        let x = nbrs[slot];
        if x == prev {
            1.0 / p
        } else if g.has_arc(prev, x) {
            1.0
        } else {
            1.0 / q
        }
    };
    biased_step(g.weights_of(cur), alpha, rng).map(|slot| nbrs[slot])
}

/// Loss-guided step: weight times pos_loss^power per out-edge. Falls back
/// to a weight-proportional step when every score vanishes.
fn loss_guided_step<R: Rng + ?Sized>(
    g: &Graph,
    m: &EmbeddingModel,
    cur: NodeId,
    power: f64,
    rng: &mut R,
) -> Option<NodeId> {
    let nbrs = g.neighbors(cur);
    if nbrs.is_empty() {
        return None;
    }
    let scores: Vec<f64> = nbrs
        .iter()
        .map(|&x| m.pos_loss(cur, x).powf(power))
        .collect();
    match biased_step(g.weights_of(cur), |slot| scores[slot], rng) {
        Some(slot) => Some(nbrs[slot]),
        None => weighted_step(g, cur, rng),
    }
}

/// Simple weighted walk of `t` edges from `start`.
pub fn simple_walk<R: Rng + ?Sized>(
    g: &Graph,
    alias: &AliasSampler,
    start: NodeId,
    t: usize,
    rng: &mut R,
) -> Walk {
    debug_assert!(t >= 1);
    let mut walk = Walk::single(start);
    for _ in 0..t {
        match alias.sample(g, *walk.nodes.last().unwrap(), rng) {
            Ok(next) => walk.nodes.push(next),
            Err(_) => {
                walk.truncated = true;
                break;
            }
        }
    }
    walk
}

/// (p, q)-biased walk of `t` edges; the first step is a simple weighted step.
pub fn node2vec_walk<R: Rng + ?Sized>(
    g: &Graph,
    start: NodeId,
    t: usize,
    p: f64,
    q: f64,
    rng: &mut R,
) -> Walk {
    debug_assert!(t >= 1 && p > 0.0 && q > 0.0);
    let mut walk = Walk::single(start);
    match weighted_step(g, start, rng) {
        Some(next) => walk.nodes.push(next),
        None => {
            walk.truncated = true;
            return walk;
        }
    }
    while walk.len_edges() < t {
        let n = walk.nodes.len();
        let (prev, cur) = (walk.nodes[n - 2], walk.nodes[n - 1]);
        match node2vec_step(g, prev, cur, p, q, rng) {
            Some(next) => walk.nodes.push(next),
            None => {
                walk.truncated = true;
                break;
            }
        }
    }
    walk
}

/// Walk of `t` edges where each step is drawn proportionally to
/// `w(cur, x) * pos_loss(cur, x)^power` under the current model.
pub fn loss_guided_walk<R: Rng + ?Sized>(
    g: &Graph,
    m: &EmbeddingModel,
    start: NodeId,
    t: usize,
    power: f64,
    rng: &mut R,
) -> Walk {
    debug_assert!(t >= 1 && power >= 0.0);
    let mut walk = Walk::single(start);
    for _ in 0..t {
        let cur = *walk.nodes.last().unwrap();
        match loss_guided_step(g, m, cur, power, rng) {
            Some(next) => walk.nodes.push(next),
            None => {
                walk.truncated = true;
                break;
            }
        }
    }
    walk
}

/// Draws a walk of `t` edges from the given distribution. `model` is
/// required for [`WalkKind::LossGuided`].
pub fn draw_walk<R: Rng + ?Sized>(
    g: &Graph,
    alias: &AliasSampler,
    kind: WalkKind,
    model: Option<&EmbeddingModel>,
    start: NodeId,
    t: usize,
    rng: &mut R,
) -> Walk {
    match kind {
        WalkKind::Simple => simple_walk(g, alias, start, t, rng),
        WalkKind::Node2Vec { p, q } => node2vec_walk(g, start, t, p, q, rng),
        WalkKind::LossGuided { power } => {
            let m = model.expect("loss-guided walks need a model");
            loss_guided_walk(g, m, start, t, power, rng)
        }
    }
}

/// Extends `prefix` to `t` edges by sampling the remaining steps from the
/// kind's conditional distribution. A prefix that already has `t` edges (or
/// was truncated at a dead end) is returned unchanged.
pub fn extend_walk<R: Rng + ?Sized>(
    g: &Graph,
    alias: &AliasSampler,
    kind: WalkKind,
    model: Option<&EmbeddingModel>,
    mut prefix: Walk,
    t: usize,
    rng: &mut R,
) -> Walk {
    if prefix.truncated {
        return prefix;
    }
    while prefix.len_edges() < t {
        let n = prefix.nodes.len();
        let cur = prefix.nodes[n - 1];
        let next = match kind {
            WalkKind::Simple => alias.sample(g, cur, rng).ok(),
            WalkKind::Node2Vec { p, q } => {
                if n >= 2 {
                    node2vec_step(g, prefix.nodes[n - 2], cur, p, q, rng)
                } else {
                    weighted_step(g, cur, rng)
                }
            }
            WalkKind::LossGuided { power } => {
                let m = model.expect("loss-guided walks need a model");
                loss_guided_step(g, m, cur, power, rng)
            }
        };
        match next {
            Some(x) => prefix.nodes.push(x),
            None => {
                prefix.truncated = true;
                break;
            }
        }
    }
    prefix
}
