//! Training loops and loss-guided walk selection.
//!
//! Two epoch drivers share the SGNS update machinery:
//!
//! - [`run_baseline_epoch`] trains on one walk per node, nodes shuffled.
//! - [`run_loss_guided_epoch`] runs `F` rounds per epoch; each round draws
//!   one candidate walk per node, scores every candidate by loss, selects
//!   `|V|/F` of them by weighted sampling without replacement, and trains
//!   on the selected walks in shuffled order.
//!
//! With prefix scoring only the first `t'` edges of each candidate are
//! drawn; the selected prefixes are extended to full length before
//! training, so scoring costs `F * |V| * t'` loss evaluations per epoch
//! instead of one evaluation per generated pair.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::graph::{AliasSampler, Graph, NodeId};
use crate::hogwild::SharedModel;
use crate::sgns::{
    gen_pairs, lr_at, update_on_walk, EmbeddingModel, LrSchedule, NegativeTable, TrainError,
};
use crate::walks::{draw_walk, extend_walk, Walk, WalkKind};

/// Walk loss score: either over all generated pairs in expectation, or over
/// the first `edges` edges only.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScoreFn {
    All { power: f64 },
    Prefix { edges: usize, power: f64 },
}

impl ScoreFn {
    pub fn power(&self) -> f64 {
        match *self {
            ScoreFn::All { power } | ScoreFn::Prefix { power, .. } => power,
        }
    }

    /// How many edges of a candidate must be drawn before scoring.
    pub fn prefix_edges(&self, walk_len: usize) -> usize {
        match *self {
            ScoreFn::All { .. } => walk_len,
            ScoreFn::Prefix { edges, .. } => edges.min(walk_len),
        }
    }

    pub fn validate(&self, walk_len: usize) -> Result<(), TrainError> {
        let power = self.power();
        if !(power >= 0.0 && power.is_finite()) {
            return Err(TrainError::Invalid(format!("score power {power}")));
        }
        if let ScoreFn::Prefix { edges, .. } = *self {
            if edges < 1 || edges > walk_len {
                return Err(TrainError::Invalid(format!(
                    "prefix length {edges} outside 1..={walk_len}"
                )));
            }
        }
        Ok(())
    }
}

/// Round accounting for one loss-guided epoch: `rounds_per_epoch` rounds,
/// each scoring one candidate per node and training on `|V| / F` of them.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RoundPlan {
    pub rounds_per_epoch: usize,
    pub candidates_per_round: usize,
    pub selected_per_round: usize,
}

impl RoundPlan {
    pub fn new(rounds_per_epoch: usize, node_count: usize) -> Result<RoundPlan, TrainError> {
        if rounds_per_epoch < 1 {
            return Err(TrainError::Invalid("rounds per epoch must be >= 1".into()));
        }
        let selected = node_count / rounds_per_epoch;
        if selected < 1 {
            return Err(TrainError::Invalid(format!(
                "{rounds_per_epoch} rounds per epoch selects zero of {node_count} walks"
            )));
        }
        Ok(RoundPlan {
            rounds_per_epoch,
            candidates_per_round: node_count,
            selected_per_round: selected,
        })
    }
}

/// Sum of pos_loss^power over the first `edges` edges of the walk (fewer if
/// the walk was truncated shorter).
pub fn lscore_prefix(m: &EmbeddingModel, walk: &Walk, edges: usize, power: f64) -> f64 {
    walk.nodes
        .windows(2)
        .take(edges)
        .map(|w| m.pos_loss(w[0], w[1]).powf(power))
        .sum()
}

/// Expected sum of pos_loss^power over the pairs a walk generates: each
/// ordered position pair at offset `d <= window` contributes with its
/// inclusion probability `(window - d + 1) / window` under uniform skips.
pub fn lscore_all(m: &EmbeddingModel, walk: &Walk, window: usize, power: f64) -> f64 {
    let nodes = &walk.nodes;
    let n = nodes.len();
    let mut score = 0.0;
    for d in 1..=window.min(n.saturating_sub(1)) {
        let inclusion = (window - d + 1) as f64 / window as f64;
        for i in 0..n - d {
            let fwd = m.pos_loss(nodes[i], nodes[i + d]).powf(power);
            let bwd = m.pos_loss(nodes[i + d], nodes[i]).powf(power);
            score += inclusion * (fwd + bwd);
        }
    }
    score
}

/// Dispatches to the configured scoring function.
pub fn score_walk(m: &EmbeddingModel, walk: &Walk, score: ScoreFn, window: usize) -> f64 {
    match score {
        ScoreFn::All { power } => lscore_all(m, walk, window, power),
        ScoreFn::Prefix { edges, power } => lscore_prefix(m, walk, edges, power),
    }
}

/// Loss evaluations consumed by scoring one candidate walk.
fn scoring_evals(len_edges: usize, score: ScoreFn, window: usize) -> usize {
    match score {
        ScoreFn::Prefix { edges, .. } => edges.min(len_edges),
        ScoreFn::All { .. } => {
            let n = len_edges + 1;
            (1..=window.min(len_edges)).map(|d| 2 * (n - d)).sum()
        }
    }
}

/// Weighted sampling without replacement via exponential race keys: item i
/// gets key `-ln(U_i) / w_i` and the k smallest keys win. Equivalent in
/// distribution to sequential weighted draws without replacement. Items
/// with zero weight only fill in (uniformly) when fewer than k items have
/// positive weight; an all-zero weight vector selects uniformly.
pub fn weighted_sample_wor<R: Rng + ?Sized>(
    weights: &[f64],
    k: usize,
    rng: &mut R,
) -> Result<Vec<usize>, TrainError> {
    if k > weights.len() {
        return Err(TrainError::Invalid(format!(
            "cannot select {k} of {} items",
            weights.len()
        )));
    }
    for &w in weights {
        if w < 0.0 || !w.is_finite() {
            return Err(TrainError::Invalid(format!("bad selection weight {w}")));
        }
    }
    let mut keyed: Vec<(f64, f64, usize)> = weights
        .iter()
        .enumerate()
        .map(|(i, &w)| {
            let u: f64 = 1.0 - rng.gen::<f64>(); // in (0, 1]
            let tie: f64 = rng.gen();
            let key = if w > 0.0 { -u.ln() / w } else { f64::INFINITY };
            (key, tie, i)
        })
        .collect();
    keyed.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    Ok(keyed[..k].iter().map(|&(_, _, i)| i).collect())
}

/// How training applies updates: a single deterministic worker, or
/// relaxed-consistency parallel workers (lost updates tolerated).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainMode {
    Deterministic,
    Parallel { workers: usize },
}

impl Default for TrainMode {
    fn default() -> Self {
        TrainMode::Deterministic
    }
}

/// Everything an epoch driver needs besides the mutable training state.
#[derive(Debug, Clone, Copy)]
pub struct EpochParams {
    pub kind: WalkKind,
    pub walk_len: usize,
    pub window: usize,
    pub negatives: usize,
    pub mode: TrainMode,
    /// Base seed for per-worker rngs in parallel mode.
    pub worker_seed: u64,
}

/// Learning-rate progress measured in walks consumed out of the planned
/// total for the whole training run.
#[derive(Debug, Clone, Copy)]
pub struct LrState {
    pub schedule: LrSchedule,
    pub walks_done: usize,
    pub planned_walks: usize,
}

impl LrState {
    pub fn new(schedule: LrSchedule, planned_walks: usize) -> LrState {
        LrState {
            schedule,
            walks_done: 0,
            planned_walks: planned_walks.max(1),
        }
    }

    fn eta_at_offset(&self, offset: usize) -> f64 {
        let progress = (self.walks_done + offset) as f64 / self.planned_walks as f64;
        lr_at(progress, self.schedule)
    }

    pub fn next_eta(&mut self) -> f64 {
        let eta = self.eta_at_offset(0);
        self.walks_done += 1;
        eta
    }
}

/// Per-epoch accounting.
#[derive(Debug, Clone, Default)]
pub struct EpochStats {
    pub walks_trained: usize,
    pub positive_pairs: usize,
    pub examples_trained: usize,
    pub sum_loss: f64,
    pub candidates_scored: usize,
    pub scoring_loss_evals: usize,
    /// Start node of every trained walk, in training order.
    pub start_nodes: Vec<NodeId>,
}

impl EpochStats {
    pub fn mean_loss(&self) -> f64 {
        if self.examples_trained == 0 {
            0.0
        } else {
            self.sum_loss / self.examples_trained as f64
        }
    }
}

/// Trains the given walks under the configured mode, accumulating stats.
fn train_walks<R: Rng + ?Sized>(
    params: &EpochParams,
    m: &mut EmbeddingModel,
    tbl: &mut NegativeTable,
    lr: &mut LrState,
    walks: Vec<Walk>,
    stats: &mut EpochStats,
    rng: &mut R,
) -> Result<(), TrainError> {
    stats.start_nodes.extend(walks.iter().map(|w| w.start()));
    match params.mode {
        TrainMode::Deterministic => {
            for walk in &walks {
                let eta = lr.next_eta();
                let s = update_on_walk(m, walk, params.window, params.negatives, tbl, eta, rng)?;
                stats.walks_trained += 1;
                stats.positive_pairs += s.pairs;
                stats.examples_trained += s.examples;
                stats.sum_loss += s.mean_loss * s.examples as f64;
            }
            Ok(())
        }
        TrainMode::Parallel { workers } => {
            train_walks_parallel(params, m, tbl, lr, walks, stats, workers, rng)
        }
    }
}

/// Relaxed-consistency training: workers update shared matrices without
/// locks, sample negatives from the frozen table cache, and buffer context
/// counts locally; counts merge after the join.
#[allow(clippy::too_many_arguments)]
fn train_walks_parallel<R: Rng + ?Sized>(
    params: &EpochParams,
    m: &mut EmbeddingModel,
    tbl: &mut NegativeTable,
    lr: &mut LrState,
    mut walks: Vec<Walk>,
    stats: &mut EpochStats,
    workers: usize,
    rng: &mut R,
) -> Result<(), TrainError> {
    // The table cache self-initializes on the first recorded batch; keep
    // that behavior by training the first walk serially while the cache is
    // still empty.
    let mut head = 0usize;
    if tbl.counts().iter().all(|&c| c == 0) && !walks.is_empty() {
        let eta = lr.next_eta();
        let s = update_on_walk(m, &walks[0], params.window, params.negatives, tbl, eta, rng)?;
        stats.walks_trained += 1;
        stats.positive_pairs += s.pairs;
        stats.examples_trained += s.examples;
        stats.sum_loss += s.mean_loss * s.examples as f64;
        tbl.refresh();
        head = 1;
    }
    let tail = walks.split_off(head);
    if tail.is_empty() {
        return Ok(());
    }
    let etas: Vec<f64> = (0..tail.len()).map(|i| lr.eta_at_offset(i)).collect();
    lr.walks_done += tail.len();

    let workers = workers.max(1);
    let chunk = tail.len().div_ceil(workers * 4).max(1);
    let node_count = tbl.node_count();
    let window = params.window;
    let lambda = params.negatives;
    let seed = params.worker_seed ^ rng.gen::<u64>();

    struct WorkerOut {
        pairs: usize,
        examples: usize,
        sum_loss: f64,
        counts: Vec<u64>,
        non_finite: bool,
    }

    let shared = SharedModel::new(m);
    let outputs: Vec<WorkerOut> = tail
        .par_chunks(chunk)
        .enumerate()
        .map(|(ci, chunk_walks)| {
            let mut wrng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(ci as u64));
            let mut out = WorkerOut {
                pairs: 0,
                examples: 0,
                sum_loss: 0.0,
                counts: vec![0u64; node_count],
                non_finite: false,
            };
            for (wi, walk) in chunk_walks.iter().enumerate() {
                let eta = etas[ci * chunk + wi];
                let batch = gen_pairs(walk, window, &mut wrng);
                for &(i, j) in &batch.pairs {
                    out.counts[j as usize] += 1;
                    let loss = shared.train_pair_relaxed(i, j, true, eta);
                    if loss.is_nan() {
                        out.non_finite = true;
                        return out;
                    }
                    out.sum_loss += loss;
                    out.examples += 1;
                    for _ in 0..lambda {
                        let neg = tbl.sample(&mut wrng);
                        let loss = shared.train_pair_relaxed(i, neg, false, eta);
                        if loss.is_nan() {
                            out.non_finite = true;
                            return out;
                        }
                        out.sum_loss += loss;
                        out.examples += 1;
                    }
                }
                out.pairs += batch.len();
            }
            out
        })
        .collect();

    let mut merged = vec![0u64; node_count];
    for out in outputs {
        if out.non_finite {
            return Err(TrainError::NonFinite);
        }
        stats.positive_pairs += out.pairs;
        stats.examples_trained += out.examples;
        stats.sum_loss += out.sum_loss;
        for (m, c) in merged.iter_mut().zip(&out.counts) {
            *m += c;
        }
    }
    stats.walks_trained += tail.len();
    tbl.record_counts(&merged);
    if !m.all_finite() {
        return Err(TrainError::NonFinite);
    }
    Ok(())
}

/// One plain epoch: every node trains exactly one walk, in shuffled order.
/// The negative-table cache refreshes once per epoch.
pub fn run_baseline_epoch<R: Rng + ?Sized>(
    g: &Graph,
    alias: &AliasSampler,
    params: &EpochParams,
    m: &mut EmbeddingModel,
    tbl: &mut NegativeTable,
    lr: &mut LrState,
    rng: &mut R,
) -> Result<EpochStats, TrainError> {
    tbl.refresh();
    let mut stats = EpochStats::default();
    let mut order: Vec<NodeId> = (0..g.node_count() as NodeId).collect();
    order.shuffle(rng);
    match params.mode {
        TrainMode::Deterministic => {
            for &v in &order {
                let walk = draw_walk(g, alias, params.kind, Some(m), v, params.walk_len, rng);
                let eta = lr.next_eta();
                let s = update_on_walk(m, &walk, params.window, params.negatives, tbl, eta, rng)?;
                stats.start_nodes.push(v);
                stats.walks_trained += 1;
                stats.positive_pairs += s.pairs;
                stats.examples_trained += s.examples;
                stats.sum_loss += s.mean_loss * s.examples as f64;
            }
        }
        TrainMode::Parallel { .. } => {
            // Walks are drawn against the epoch-start snapshot; staleness is
            // part of the parallel contract.
            let walks: Vec<Walk> = order
                .iter()
                .map(|&v| draw_walk(g, alias, params.kind, Some(m), v, params.walk_len, rng))
                .collect();
            train_walks(params, m, tbl, lr, walks, &mut stats, rng)?;
        }
    }
    Ok(stats)
}

/// One loss-guided epoch of `plan.rounds_per_epoch` rounds. Each round:
/// draw one candidate per node (prefix-only under prefix scoring), score
/// all candidates against the round-start model, select by weighted
/// sampling without replacement, extend the selected prefixes, and train
/// on them in shuffled order.
#[allow(clippy::too_many_arguments)]
pub fn run_loss_guided_epoch<R: Rng + ?Sized>(
    g: &Graph,
    alias: &AliasSampler,
    params: &EpochParams,
    score: ScoreFn,
    plan: &RoundPlan,
    m: &mut EmbeddingModel,
    tbl: &mut NegativeTable,
    lr: &mut LrState,
    rng: &mut R,
) -> Result<EpochStats, TrainError> {
    score.validate(params.walk_len)?;
    let mut stats = EpochStats::default();
    let prefix_len = score.prefix_edges(params.walk_len);
    for _ in 0..plan.rounds_per_epoch {
        tbl.refresh();
        let candidates: Vec<Walk> = (0..g.node_count() as NodeId)
            .map(|v| draw_walk(g, alias, params.kind, Some(m), v, prefix_len, rng))
            .collect();
        let scores: Vec<f64> = match params.mode {
            TrainMode::Deterministic => candidates
                .iter()
                .map(|w| score_walk(m, w, score, params.window))
                .collect(),
            TrainMode::Parallel { .. } => {
                let model: &EmbeddingModel = m;
                candidates
                    .par_iter()
                    .map(|w| score_walk(model, w, score, params.window))
                    .collect()
            }
        };
        stats.candidates_scored += candidates.len();
        stats.scoring_loss_evals += candidates
            .iter()
            .map(|w| scoring_evals(w.len_edges(), score, params.window))
            .sum::<usize>();
        let selected_idx = weighted_sample_wor(&scores, plan.selected_per_round, rng)?;
        let mut selected: Vec<Walk> = selected_idx
            .into_iter()
            .map(|i| {
                extend_walk(
                    g,
                    alias,
                    params.kind,
                    Some(m),
                    candidates[i].clone(),
                    params.walk_len,
                    rng,
                )
            })
            .collect();
        selected.shuffle(rng);
        train_walks(params, m, tbl, lr, selected, &mut stats, rng)?;
    }
    Ok(stats)
}
