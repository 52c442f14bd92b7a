//! Skip-gram with negative sampling over node walks.
//!
//! Each node gets a focus vector and a context vector. Walks are turned into
//! ordered positive pairs by per-position random skip windows; each positive
//! pair is accompanied by `lambda` negative pairs whose context is drawn
//! from accumulated context frequencies raised to the power 0.75. The
//! per-example losses are the standard nonnegative SGNS losses
//!
//! ```text
//! loss_pos(i, j) = ln(1 + exp(-f_i . c_j))
//! loss_neg(i, j) = ln(1 + exp(+f_i . c_j))
//! ```
//!
//! so a gradient step on a positive pair increases the inner product and a
//! step on a negative pair decreases it.

use std::io::{BufRead, Write};

use rand::Rng;
use thiserror::Error;

use crate::graph::{IdMap, NodeId};
use crate::walks::Walk;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("non-finite parameter update (learning rate too high?)")]
    NonFinite,
    #[error("invalid training input: {0}")]
    Invalid(String),
}

/// Numerically stable logistic function 1 / (1 + exp(-x)).
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// ln(1 + exp(-x)) without overflow for any finite x.
pub fn pos_loss_from_dot(x: f64) -> f64 {
    if x >= 0.0 {
        (-x).exp().ln_1p()
    } else {
        -x + x.exp().ln_1p()
    }
}

/// ln(1 + exp(x)); mirror image of [`pos_loss_from_dot`].
pub fn neg_loss_from_dot(x: f64) -> f64 {
    pos_loss_from_dot(-x)
}

/// d/dx of the positive loss: sigmoid(x) - 1.
pub fn pos_loss_grad_coeff(x: f64) -> f64 {
    sigmoid(x) - 1.0
}

/// d/dx of the negative loss: sigmoid(x).
pub fn neg_loss_grad_coeff(x: f64) -> f64 {
    sigmoid(x)
}

/// Focus and context matrices, |V| x d each, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingModel {
    node_count: usize,
    dim: usize,
    focus: Vec<f64>,
    context: Vec<f64>,
}

impl EmbeddingModel {
    /// Focus entries i.i.d. uniform in [-0.5/d, +0.5/d]; context all zero.
    pub fn init<R: Rng + ?Sized>(node_count: usize, dim: usize, rng: &mut R) -> EmbeddingModel {
        assert!(dim >= 1, "embedding dimension must be at least 1");
        let half = 0.5 / dim as f64;
        let focus = (0..node_count * dim)
            .map(|_| rng.gen_range(-half..half))
            .collect();
        EmbeddingModel {
            node_count,
            dim,
            focus,
            context: vec![0.0; node_count * dim],
        }
    }

    /// Builds a model from explicit matrices (used by tests and file import).
    pub fn from_parts(node_count: usize, dim: usize, focus: Vec<f64>, context: Vec<f64>) -> Self {
        assert_eq!(focus.len(), node_count * dim);
        assert_eq!(context.len(), node_count * dim);
        EmbeddingModel {
            node_count,
            dim,
            focus,
            context,
        }
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn focus(&self, i: NodeId) -> &[f64] {
        let i = i as usize;
        &self.focus[i * self.dim..(i + 1) * self.dim]
    }

    pub fn focus_mut(&mut self, i: NodeId) -> &mut [f64] {
        let i = i as usize;
        &mut self.focus[i * self.dim..(i + 1) * self.dim]
    }

    pub fn context(&self, j: NodeId) -> &[f64] {
        let j = j as usize;
        &self.context[j * self.dim..(j + 1) * self.dim]
    }

    pub fn context_mut(&mut self, j: NodeId) -> &mut [f64] {
        let j = j as usize;
        &mut self.context[j * self.dim..(j + 1) * self.dim]
    }

    pub(crate) fn focus_flat(&self) -> &[f64] {
        &self.focus
    }

    pub(crate) fn matrices_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        (&mut self.focus, &mut self.context)
    }

    pub fn dot(&self, i: NodeId, j: NodeId) -> f64 {
        self.focus(i)
            .iter()
            .zip(self.context(j))
            .map(|(a, b)| a * b)
            .sum()
    }

    /// Per-example positive loss ln(1 + exp(-f_i . c_j)).
    pub fn pos_loss(&self, i: NodeId, j: NodeId) -> f64 {
        pos_loss_from_dot(self.dot(i, j))
    }

    /// Per-example negative loss ln(1 + exp(f_i . c_j)).
    pub fn neg_loss(&self, i: NodeId, j: NodeId) -> f64 {
        neg_loss_from_dot(self.dot(i, j))
    }

    pub fn all_finite(&self) -> bool {
        self.focus.iter().all(|v| v.is_finite()) && self.context.iter().all(|v| v.is_finite())
    }

    /// One SGD step on pair (i, j) with the given 0/1 label. Both updates
    /// use the pre-update value of the other matrix. Returns the example's
    /// loss at the pre-update parameters.
    pub fn train_pair(
        &mut self,
        i: NodeId,
        j: NodeId,
        positive: bool,
        eta: f64,
    ) -> Result<f64, TrainError> {
        let x = self.dot(i, j);
        if !x.is_finite() {
            return Err(TrainError::NonFinite);
        }
        let label = if positive { 1.0 } else { 0.0 };
        let g = eta * (label - sigmoid(x));
        let dim = self.dim;
        let (fi, cj) = (i as usize * dim, j as usize * dim);
        for k in 0..dim {
            let c_old = self.context[cj + k];
            self.context[cj + k] += g * self.focus[fi + k];
            self.focus[fi + k] += g * c_old;
        }
        Ok(if positive {
            pos_loss_from_dot(x)
        } else {
            neg_loss_from_dot(x)
        })
    }

    /// Text export: header `node_count d`, then one line per node with its
    /// original id and the focus vector at nine significant digits.
    pub fn write_embeddings<W: Write>(&self, ids: &IdMap, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{} {}", self.node_count, self.dim)?;
        for i in 0..self.node_count {
            write!(out, "{}", ids.name(i as NodeId))?;
            for v in self.focus(i as NodeId) {
                write!(out, " {v:.8e}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// Parses the embedding export format: `(names, dim, row-major vectors)`.
pub fn read_embeddings<R: BufRead>(reader: R) -> Result<(Vec<String>, usize, Vec<f64>), TrainError> {
    let mut lines = reader.lines();
    let header = lines
        .next()
        .ok_or_else(|| TrainError::Invalid("empty embedding file".into()))?
        .map_err(|e| TrainError::Invalid(e.to_string()))?;
    let mut tok = header.split_whitespace();
    let n: usize = tok
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| TrainError::Invalid("bad header".into()))?;
    let d: usize = tok
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| TrainError::Invalid("bad header".into()))?;
    let mut names = Vec::with_capacity(n);
    let mut data = Vec::with_capacity(n * d);
    for (row, line) in lines.enumerate() {
        let line = line.map_err(|e| TrainError::Invalid(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut tok = line.split_whitespace();
        let name = tok
            .next()
            .ok_or_else(|| TrainError::Invalid(format!("row {row}: missing id")))?;
        names.push(name.to_string());
        let mut got = 0usize;
        for s in tok {
            let v: f64 = s
                .parse()
                .map_err(|_| TrainError::Invalid(format!("row {row}: bad value {s:?}")))?;
            data.push(v);
            got += 1;
        }
        if got != d {
            return Err(TrainError::Invalid(format!(
                "row {row}: expected {d} values, got {got}"
            )));
        }
    }
    if names.len() != n {
        return Err(TrainError::Invalid(format!(
            "expected {n} rows, got {}",
            names.len()
        )));
    }
    Ok((names, d, data))
}

/// Ordered (focus, context) positive pairs generated from one walk.
#[derive(Debug, Clone, Default)]
pub struct PairBatch {
    pub pairs: Vec<(NodeId, NodeId)>,
}

impl PairBatch {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Positive pairs from a walk: every position draws an independent skip
/// `D_i ~ Uniform{1..=window}` and emits ordered pairs `(v_i, v_j)` for all
/// `j != i` with `|i - j| <= D_i`.
pub fn gen_pairs<R: Rng + ?Sized>(walk: &Walk, window: usize, rng: &mut R) -> PairBatch {
    assert!(window >= 1, "window must be at least 1");
    let nodes = &walk.nodes;
    let n = nodes.len();
    let mut pairs = Vec::new();
    for i in 0..n {
        let skip = rng.gen_range(1..=window);
        let lo = i.saturating_sub(skip);
        let hi = (i + skip).min(n.saturating_sub(1));
        for j in lo..=hi {
            if j != i {
                pairs.push((nodes[i], nodes[j]));
            }
        }
    }
    PairBatch { pairs }
}

/// Closed-form E[|Pairs(S)|] for a walk of `t` edges (t+1 nodes) and skip
/// windows uniform on {1..=window}. Independent of the sampled generation
/// path; also feeds the per-epoch cost model.
pub fn expected_pair_count(t: usize, window: usize) -> f64 {
    let etw = |k: usize| -> f64 {
        (1..=window).map(|d| k.min(d) as f64).sum::<f64>() / window as f64
    };
    (0..=t).map(|i| etw(i) + etw(t - i)).sum()
}

/// Context-frequency counts accumulated since the start of training, with a
/// cached cumulative distribution of counts^0.75 for negative sampling.
///
/// The cache is rebuilt by [`NegativeTable::refresh`]; the training loops
/// call it once per round (scored mode) or once per epoch (plain mode), so
/// sampling between refreshes sees a slightly stale distribution by design.
#[derive(Debug, Clone)]
pub struct NegativeTable {
    counts: Vec<u64>,
    cdf: Vec<f64>,
    total: f64,
}

impl NegativeTable {
    pub fn new(node_count: usize) -> NegativeTable {
        NegativeTable {
            counts: vec![0; node_count],
            cdf: vec![0.0; node_count],
            total: 0.0,
        }
    }

    pub fn node_count(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    /// Adds the batch's context occurrences to the running counts.
    pub fn record(&mut self, batch: &PairBatch) {
        for &(_, ctx) in &batch.pairs {
            self.counts[ctx as usize] += 1;
        }
    }

    pub(crate) fn record_counts(&mut self, deltas: &[u64]) {
        for (c, d) in self.counts.iter_mut().zip(deltas) {
            *c += d;
        }
    }

    /// Rebuilds the cached cumulative distribution of counts^0.75.
    pub fn refresh(&mut self) {
        let mut acc = 0.0;
        for (slot, &c) in self.cdf.iter_mut().zip(&self.counts) {
            acc += (c as f64).powf(0.75);
            *slot = acc;
        }
        self.total = acc;
    }

    /// Draws one context node from the cached distribution; uniform over all
    /// nodes while the cache is empty.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> NodeId {
        if self.total <= 0.0 {
            return rng.gen_range(0..self.counts.len()) as NodeId;
        }
        let u: f64 = rng.gen_range(0.0..self.total);
        let idx = self.cdf.partition_point(|&c| c <= u);
        idx.min(self.counts.len() - 1) as NodeId
    }
}

/// Records the batch's contexts into the table, then draws `lambda`
/// negatives per positive pair: same focus, context from counts^0.75.
pub fn record_and_sample_negatives<R: Rng + ?Sized>(
    tbl: &mut NegativeTable,
    batch: &PairBatch,
    lambda: usize,
    rng: &mut R,
) -> Vec<(NodeId, NodeId)> {
    tbl.record(batch);
    if tbl.total <= 0.0 {
        tbl.refresh();
    }
    let mut negs = Vec::with_capacity(batch.len() * lambda);
    for &(focus, _) in &batch.pairs {
        for _ in 0..lambda {
            negs.push((focus, tbl.sample(rng)));
        }
    }
    negs
}

/// Statistics returned by one walk's worth of updates.
#[derive(Debug, Clone, Copy, Default)]
pub struct UpdateStats {
    /// Positive pairs generated from the walk.
    pub pairs: usize,
    /// Total examples trained (positives plus negatives).
    pub examples: usize,
    /// Mean per-example loss at pre-update parameters.
    pub mean_loss: f64,
}

/// Trains on one walk: generates pairs, records and samples negatives, and
/// applies one SGD step per example (positive first, then its negatives).
pub fn update_on_walk<R: Rng + ?Sized>(
    m: &mut EmbeddingModel,
    walk: &Walk,
    window: usize,
    lambda: usize,
    tbl: &mut NegativeTable,
    eta: f64,
    rng: &mut R,
) -> Result<UpdateStats, TrainError> {
    if eta <= 0.0 || !eta.is_finite() {
        return Err(TrainError::Invalid(format!("learning rate {eta}")));
    }
    let batch = gen_pairs(walk, window, rng);
    let negatives = record_and_sample_negatives(tbl, &batch, lambda, rng);
    let mut sum_loss = 0.0;
    let mut examples = 0usize;
    for (k, &(i, j)) in batch.pairs.iter().enumerate() {
        sum_loss += m.train_pair(i, j, true, eta)?;
        examples += 1;
        for &(ni, nj) in &negatives[k * lambda..(k + 1) * lambda] {
            sum_loss += m.train_pair(ni, nj, false, eta)?;
            examples += 1;
        }
    }
    Ok(UpdateStats {
        pairs: batch.len(),
        examples,
        mean_loss: if examples > 0 {
            sum_loss / examples as f64
        } else {
            0.0
        },
    })
}

/// Linear learning-rate decay from `initial` down to `floor`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrSchedule {
    pub initial: f64,
    pub floor: f64,
}

impl Default for LrSchedule {
    fn default() -> Self {
        LrSchedule {
            initial: 0.025,
            floor: 0.0001,
        }
    }
}

/// Learning rate at `progress` in [0, 1]: linear interpolation from the
/// initial rate to the floor, clipped at the floor.
pub fn lr_at(progress: f64, schedule: LrSchedule) -> f64 {
    let p = progress.clamp(0.0, 1.0);
    (schedule.initial + p * (schedule.floor - schedule.initial)).max(schedule.floor)
}
