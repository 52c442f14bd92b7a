//! Downstream-task evaluation and cost accounting.
//!
//! Embedding quality is measured per epoch on a frozen model snapshot:
//! clustering tasks run k-means over the focus vectors and report the
//! modularity of the clustering; classification tasks fit a one-vs-rest
//! logistic regression on a train split and report multi-class accuracy or
//! multi-label micro-F1.
//!
//! Efficiency is measured in epochs to reach 0.95 of per-run peak quality,
//! turned into a training gain (relative epoch reduction) and a computation
//! gain that also prices the walk-scoring overhead in loss evaluations.

use std::io::Write;

use rand::Rng;
use thiserror::Error;

use crate::diagnostics::LossProfile;
use crate::graph::Graph;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("invalid evaluation input: {0}")]
    Invalid(String),
    #[error("graph has zero total edge weight")]
    ZeroWeight,
    #[error("empty quality curve")]
    EmptyCurve,
}

pub const KMEANS_RESTARTS: usize = 10;
pub const KMEANS_MAX_ITER: usize = 300;
pub const KMEANS_TOL: f64 = 1e-4;

/// Clustering of `n` points into `k` clusters with its final inertia.
#[derive(Debug, Clone)]
pub struct KMeansResult {
    pub assignment: Vec<usize>,
    pub inertia: f64,
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(centroids: &[f64], dim: usize, k: usize, x: &[f64]) -> (usize, f64) {
    let mut best = 0usize;
    let mut best_d = f64::INFINITY;
    for c in 0..k {
        let d = dist2(&centroids[c * dim..(c + 1) * dim], x);
        if d < best_d {
            best_d = d;
            best = c;
        }
    }
    (best, best_d)
}

/// k-means++ seeding: first centroid uniform, later ones proportional to
/// squared distance from the nearest chosen centroid.
fn seed_plus_plus<R: Rng + ?Sized>(points: &[f64], dim: usize, k: usize, rng: &mut R) -> Vec<f64> {
    let n = points.len() / dim;
    let mut centroids = Vec::with_capacity(k * dim);
    let first = rng.gen_range(0..n);
    centroids.extend_from_slice(&points[first * dim..(first + 1) * dim]);
    let mut d2: Vec<f64> = (0..n)
        .map(|i| dist2(&points[i * dim..(i + 1) * dim], &centroids[0..dim]))
        .collect();
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.gen_range(0.0..total);
            let mut pick = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                u -= d;
                if u < 0.0 {
                    pick = i;
                    break;
                }
            }
            pick
        } else {
            rng.gen_range(0..n)
        };
        centroids.extend_from_slice(&points[pick * dim..(pick + 1) * dim]);
        for i in 0..n {
            let d = dist2(
                &points[i * dim..(i + 1) * dim],
                &centroids[c * dim..(c + 1) * dim],
            );
            if d < d2[i] {
                d2[i] = d;
            }
        }
    }
    centroids
}

struct LloydRun {
    assignment: Vec<usize>,
    inertia: f64,
    /// inertia after each assignment sweep, for the monotonicity contract
    trace: Vec<f64>,
}

fn kmeans_once<R: Rng + ?Sized>(
    points: &[f64],
    dim: usize,
    k: usize,
    max_iter: usize,
    tol: f64,
    rng: &mut R,
) -> LloydRun {
    let n = points.len() / dim;
    let mut centroids = seed_plus_plus(points, dim, k, rng);
    let mut assignment = vec![0usize; n];
    let mut trace = Vec::new();
    let mut prev_inertia = f64::INFINITY;
    let mut inertia = f64::INFINITY;
    for _ in 0..max_iter {
        inertia = 0.0;
        for i in 0..n {
            let (c, d) = nearest(&centroids, dim, k, &points[i * dim..(i + 1) * dim]);
            assignment[i] = c;
            inertia += d;
        }
        trace.push(inertia);

        let mut counts = vec![0usize; k];
        for &c in &assignment {
            counts[c] += 1;
        }
        if counts.iter().any(|&c| c == 0) {
            // re-seed each empty centroid at the point farthest from its
            // assigned centroid, then reassign on the next sweep
            for c in 0..k {
                if counts[c] > 0 {
                    continue;
                }
                let mut far = 0usize;
                let mut far_d = -1.0;
                for i in 0..n {
                    let d = dist2(
                        &points[i * dim..(i + 1) * dim],
                        &centroids[assignment[i] * dim..(assignment[i] + 1) * dim],
                    );
                    if d > far_d {
                        far_d = d;
                        far = i;
                    }
                }
                centroids[c * dim..(c + 1) * dim]
                    .copy_from_slice(&points[far * dim..(far + 1) * dim]);
                counts[c] = 1;
            }
            prev_inertia = inertia;
            continue;
        }

        if prev_inertia.is_finite() {
            let rel = (prev_inertia - inertia) / prev_inertia.abs().max(f64::MIN_POSITIVE);
            if rel < tol {
                break;
            }
        }
        prev_inertia = inertia;

        let mut sums = vec![0.0f64; k * dim];
        for i in 0..n {
            let c = assignment[i];
            for d in 0..dim {
                sums[c * dim + d] += points[i * dim + d];
            }
        }
        for c in 0..k {
            for d in 0..dim {
                centroids[c * dim + d] = sums[c * dim + d] / counts[c] as f64;
            }
        }
    }
    LloydRun {
        assignment,
        inertia,
        trace,
    }
}

/// k-means++ / Lloyd clustering: 10 restarts, 300 iterations max, relative
/// inertia tolerance 1e-4; the lowest-inertia restart wins.
pub fn kmeans<R: Rng + ?Sized>(
    points: &[f64],
    dim: usize,
    k: usize,
    rng: &mut R,
) -> Result<KMeansResult, EvalError> {
    kmeans_with(
        points,
        dim,
        k,
        KMEANS_RESTARTS,
        KMEANS_MAX_ITER,
        KMEANS_TOL,
        rng,
    )
}

pub fn kmeans_with<R: Rng + ?Sized>(
    points: &[f64],
    dim: usize,
    k: usize,
    restarts: usize,
    max_iter: usize,
    tol: f64,
    rng: &mut R,
) -> Result<KMeansResult, EvalError> {
    if dim == 0 || points.len() % dim != 0 {
        return Err(EvalError::Invalid("points not divisible by dim".into()));
    }
    let n = points.len() / dim;
    if k == 0 || k > n {
        return Err(EvalError::Invalid(format!("k={k} outside 1..={n}")));
    }
    let mut best: Option<LloydRun> = None;
    for _ in 0..restarts.max(1) {
        let run = kmeans_once(points, dim, k, max_iter, tol, rng);
        if best.as_ref().map_or(true, |b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    let best = best.unwrap();
    Ok(KMeansResult {
        assignment: best.assignment,
        inertia: best.inertia,
    })
}

/// Newman modularity of an assignment under the weighted, undirected
/// interpretation: Q = sum_c (in_c / 2m - (deg_c / 2m)^2), where in_c sums
/// the stored arc weight inside community c and deg_c the weighted degrees.
pub fn modularity(g: &Graph, assignment: &[usize]) -> Result<f64, EvalError> {
    if assignment.len() != g.node_count() {
        return Err(EvalError::Invalid(format!(
            "assignment covers {} of {} nodes",
            assignment.len(),
            g.node_count()
        )));
    }
    let two_m = g.total_arc_weight();
    if two_m <= 0.0 {
        return Err(EvalError::ZeroWeight);
    }
    let n_comm = assignment.iter().copied().max().unwrap_or(0) + 1;
    let mut internal = vec![0.0f64; n_comm];
    let mut degree = vec![0.0f64; n_comm];
    for (u, v, w) in g.arcs() {
        let cu = assignment[u as usize];
        degree[cu] += w;
        if cu == assignment[v as usize] {
            internal[cu] += w;
        }
    }
    let mut q = 0.0;
    for c in 0..n_comm {
        let frac_in = internal[c] / two_m;
        let frac_deg = degree[c] / two_m;
        q += frac_in - frac_deg * frac_deg;
    }
    Ok(q)
}

pub const LOGREG_C: f64 = 1.0;
pub const LOGREG_MAX_ITER: usize = 100;
pub const LOGREG_TOL: f64 = 1e-4;

/// One-vs-rest logistic regression. Each class holds `dim` weights plus a
/// bias; classes absent from the training split stay `None` and score
/// negative infinity (never predicted).
#[derive(Debug, Clone)]
pub struct OvrClassifier {
    pub dim: usize,
    pub weights: Vec<Option<Vec<f64>>>,
    pub missing_classes: Vec<usize>,
}

impl OvrClassifier {
    pub fn n_classes(&self) -> usize {
        self.weights.len()
    }

    pub fn score(&self, class: usize, x: &[f64]) -> f64 {
        match &self.weights[class] {
            None => f64::NEG_INFINITY,
            Some(w) => w[..self.dim].iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + w[self.dim],
        }
    }
}

fn softplus(z: f64) -> f64 {
    crate::sgns::pos_loss_from_dot(z)
}

/// L2-regularized binary logistic regression by full-batch gradient descent
/// with backtracking line search. Objective: 0.5 ||w||^2 + C sum_i
/// softplus(-y_i z_i); the bias is unregularized.
fn fit_binary(features: &[f64], dim: usize, train: &[usize], positive: &[bool]) -> Vec<f64> {
    let m = train.len();
    let mut theta = vec![0.0f64; dim + 1];
    let eval = |theta: &[f64]| -> f64 {
        let mut j = 0.5 * theta[..dim].iter().map(|w| w * w).sum::<f64>();
        for (t, &i) in train.iter().enumerate() {
            let x = &features[i * dim..(i + 1) * dim];
            let z = theta[..dim].iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + theta[dim];
            let y = if positive[t] { 1.0 } else { -1.0 };
            j += LOGREG_C * softplus(y * z);
        }
        j
    };
    let grad = |theta: &[f64]| -> Vec<f64> {
        let mut g = vec![0.0f64; dim + 1];
        g[..dim].copy_from_slice(&theta[..dim]);
        for (t, &i) in train.iter().enumerate() {
            let x = &features[i * dim..(i + 1) * dim];
            let z = theta[..dim].iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + theta[dim];
            let y01 = if positive[t] { 1.0 } else { 0.0 };
            let r = LOGREG_C * (crate::sgns::sigmoid(z) - y01);
            for d in 0..dim {
                g[d] += r * x[d];
            }
            g[dim] += r;
        }
        g
    };

    if m == 0 {
        return theta;
    }
    let mut j = eval(&theta);
    let mut alpha = 1.0f64;
    for _ in 0..LOGREG_MAX_ITER {
        let g = grad(&theta);
        let gn2: f64 = g.iter().map(|v| v * v).sum();
        if gn2 < 1e-18 {
            break;
        }
        alpha = (alpha * 2.0).min(1e3);
        let mut accepted = false;
        while alpha > 1e-14 {
            let cand: Vec<f64> = theta.iter().zip(&g).map(|(t, gi)| t - alpha * gi).collect();
            let jc = eval(&cand);
            if jc <= j - 1e-4 * alpha * gn2 {
                let rel = (j - jc) / j.abs().max(1.0);
                theta = cand;
                j = jc;
                accepted = true;
                if rel < LOGREG_TOL {
                    return theta;
                }
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    theta
}

/// Fits one binary classifier per class over the train split.
/// `is_positive(node, class)` defines the targets for both the multi-class
/// and the multi-label case.
pub fn ovr_logreg_fit(
    features: &[f64],
    dim: usize,
    n_classes: usize,
    is_positive: &dyn Fn(usize, usize) -> bool,
    train: &[usize],
) -> OvrClassifier {
    let mut weights = Vec::with_capacity(n_classes);
    let mut missing = Vec::new();
    for class in 0..n_classes {
        let positive: Vec<bool> = train.iter().map(|&i| is_positive(i, class)).collect();
        if positive.iter().any(|&p| p) {
            weights.push(Some(fit_binary(features, dim, train, &positive)));
        } else {
            weights.push(None);
            missing.push(class);
        }
    }
    OvrClassifier {
        dim,
        weights,
        missing_classes: missing,
    }
}

/// Fraction of eval nodes whose argmax class score matches the true class.
pub fn predict_multiclass(
    clf: &OvrClassifier,
    features: &[f64],
    truth: &[usize],
    eval: &[usize],
) -> f64 {
    if eval.is_empty() {
        return 0.0;
    }
    let mut correct = 0usize;
    for &i in eval {
        let x = &features[i * clf.dim..(i + 1) * clf.dim];
        let mut best = 0usize;
        let mut best_s = f64::NEG_INFINITY;
        for c in 0..clf.n_classes() {
            let s = clf.score(c, x);
            if s > best_s {
                best_s = s;
                best = c;
            }
        }
        if best == truth[i] {
            correct += 1;
        }
    }
    correct as f64 / eval.len() as f64
}

/// Micro-averaged F1 where each node predicts its top-n_i scored labels,
/// n_i being the node's true label count. Pooled over all (node, label)
/// decisions: F1 = 2 TP / (2 TP + FP + FN).
pub fn predict_multilabel(
    clf: &OvrClassifier,
    features: &[f64],
    truth: &[Vec<usize>],
    eval: &[usize],
) -> f64 {
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut fnn = 0usize;
    for &i in eval {
        let n_i = truth[i].len();
        if n_i == 0 {
            continue;
        }
        let x = &features[i * clf.dim..(i + 1) * clf.dim];
        let mut scored: Vec<(f64, usize)> =
            (0..clf.n_classes()).map(|c| (clf.score(c, x), c)).collect();
        scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let predicted: Vec<usize> = scored[..n_i.min(scored.len())]
            .iter()
            .map(|&(_, c)| c)
            .collect();
        for &p in &predicted {
            if truth[i].contains(&p) {
                tp += 1;
            } else {
                fp += 1;
            }
        }
        for t in &truth[i] {
            if !predicted.contains(t) {
                fnn += 1;
            }
        }
    }
    let denom = 2 * tp + fp + fnn;
    if denom == 0 {
        1.0
    } else {
        2.0 * tp as f64 / denom as f64
    }
}

/// Per-epoch quality values of one repetition.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct QualityCurve {
    pub values: Vec<f64>,
}

impl QualityCurve {
    pub fn new(values: Vec<f64>) -> Self {
        QualityCurve { values }
    }
}

/// First 1-based epoch whose value reaches `fraction` of the curve's own
/// peak; None for an empty curve.
pub fn epochs_to_peak_single(curve: &QualityCurve, fraction: f64) -> Option<usize> {
    let peak = curve
        .values
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    curve
        .values
        .iter()
        .position(|&v| v >= fraction * peak)
        .map(|i| i + 1)
}

/// Mean and sample standard deviation of epochs-to-peak over repetitions.
pub fn epochs_to_peak(curves: &[QualityCurve], fraction: f64) -> Result<(f64, f64), EvalError> {
    if curves.is_empty() || curves.iter().any(|c| c.values.is_empty()) {
        return Err(EvalError::EmptyCurve);
    }
    let epochs: Vec<f64> = curves
        .iter()
        .map(|c| epochs_to_peak_single(c, fraction).unwrap() as f64)
        .collect();
    let n = epochs.len() as f64;
    let mean = epochs.iter().sum::<f64>() / n;
    let sd = if epochs.len() < 2 {
        0.0
    } else {
        (epochs.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    Ok((mean, sd))
}

/// Which training method a cost model prices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MethodCost {
    /// Plain training, no scoring overhead.
    Baseline,
    /// Prefix scoring: F * t' loss evaluations per node per epoch.
    PrefixScored { prefix_edges: usize },
    /// Full-walk scoring: F * E[pairs] loss evaluations per node per epoch.
    AllScored,
}

/// Per-epoch cost accounting in units of loss/gradient evaluations per node.
#[derive(Debug, Clone, Copy)]
pub struct CostModel {
    /// Expected positive pairs per walk, E[|Pairs(S)|].
    pub expected_pairs: f64,
    /// Negative examples per positive.
    pub negatives: f64,
    /// Rounds per epoch (F); irrelevant for the baseline.
    pub rounds_per_epoch: f64,
    pub method: MethodCost,
}

impl CostModel {
    pub fn validate(&self) -> Result<(), EvalError> {
        if self.expected_pairs <= 0.0 || self.negatives < 0.0 || self.rounds_per_epoch < 1.0 {
            return Err(EvalError::Invalid(format!("cost model {self:?}")));
        }
        if let MethodCost::PrefixScored { prefix_edges } = self.method {
            if prefix_edges < 1 {
                return Err(EvalError::Invalid("prefix length must be >= 1".into()));
            }
        }
        Ok(())
    }

    /// Gradient evaluations per node per epoch spent on training proper.
    pub fn train_cost_per_node(&self) -> f64 {
        self.expected_pairs * (self.negatives + 1.0)
    }

    /// Total evaluations per node per epoch including scoring overhead.
    pub fn method_cost_per_node(&self) -> f64 {
        let train = self.train_cost_per_node();
        match self.method {
            MethodCost::Baseline => train,
            MethodCost::PrefixScored { prefix_edges } => {
                self.rounds_per_epoch * prefix_edges as f64 + train
            }
            MethodCost::AllScored => self.rounds_per_epoch * self.expected_pairs + train,
        }
    }
}

/// Relative decrease in training epochs: 1 - e_method / e_baseline.
pub fn training_gain(e_method: f64, e_baseline: f64) -> Result<f64, EvalError> {
    if e_baseline <= 0.0 {
        return Err(EvalError::Invalid(format!(
            "baseline epochs {e_baseline} must be positive"
        )));
    }
    Ok(1.0 - e_method / e_baseline)
}

/// Relative decrease in total computation:
/// 1 - (C_method * e_method) / (C_train * e_baseline).
pub fn computation_gain(
    e_method: f64,
    e_baseline: f64,
    cost: &CostModel,
) -> Result<f64, EvalError> {
    cost.validate()?;
    if e_baseline <= 0.0 {
        return Err(EvalError::Invalid(format!(
            "baseline epochs {e_baseline} must be positive"
        )));
    }
    Ok(1.0 - (cost.method_cost_per_node() * e_method) / (cost.train_cost_per_node() * e_baseline))
}

/// One per-epoch CSV row; diagnostics columns are filled when a profile was
/// taken at that epoch.
#[derive(Debug, Clone)]
pub struct CurveRow {
    pub method: String,
    pub repetition: usize,
    pub epoch: usize,
    pub quality: f64,
    pub mean_loss: f64,
    pub diagnostics: Option<LossProfile>,
}

pub fn write_curve_csv<W: Write>(rows: &[CurveRow], mut out: W) -> std::io::Result<()> {
    writeln!(
        out,
        "method,repetition,epoch,quality,mean_loss,edge_loss,bg_loss,ratio,q90_ratio"
    )?;
    for r in rows {
        write!(
            out,
            "{},{},{},{:.9e},{:.9e}",
            r.method, r.repetition, r.epoch, r.quality, r.mean_loss
        )?;
        match &r.diagnostics {
            Some(p) => writeln!(
                out,
                ",{:.9e},{:.9e},{:.9e},{:.9e}",
                p.edge_loss, p.background_loss, p.edge_background_ratio, p.spread_ratio
            )?,
            None => writeln!(out, ",,,,")?,
        }
    }
    Ok(())
}

/// One gain-table row (one method configuration against the baseline).
#[derive(Debug, Clone)]
pub struct GainRow {
    pub method: String,
    pub t_prime: Option<usize>,
    pub power: f64,
    pub rounds_per_epoch: usize,
    pub epochs_method: f64,
    pub epochs_method_sd: f64,
    pub epochs_baseline: f64,
    pub training_gain: f64,
    /// SD of the method's epochs-to-peak normalized by baseline epochs.
    pub training_sd: f64,
    /// None when no cost model applies (loss-guided walk distributions).
    pub computation_gain: Option<f64>,
}

pub fn write_gain_csv<W: Write>(rows: &[GainRow], mut out: W) -> std::io::Result<()> {
    writeln!(
        out,
        "method,t_prime,power,rounds_per_epoch,epochs_method,epochs_method_sd,epochs_baseline,training_gain_pct,training_sd_pct,computation_gain_pct"
    )?;
    for r in rows {
        let t_prime = r.t_prime.map(|t| t.to_string()).unwrap_or_default();
        let comp = r
            .computation_gain
            .map(|g| format!("{:.4}", 100.0 * g))
            .unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{},{:.4},{:.4},{:.4},{:.4},{:.4},{}",
            r.method,
            t_prime,
            r.power,
            r.rounds_per_epoch,
            r.epochs_method,
            r.epochs_method_sd,
            r.epochs_baseline,
            100.0 * r.training_gain,
            100.0 * r.training_sd,
            comp
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn two_triangles() -> Graph {
        Graph::from_arcs(
            6,
            &[
                (0, 1, 1.0),
                (1, 2, 1.0),
                (2, 0, 1.0),
                (3, 4, 1.0),
                (4, 5, 1.0),
                (5, 3, 1.0),
            ],
            false,
        )
    }

    /// Standard-normal via Box-Muller, enough for test blobs.
    fn randn<R: Rng + ?Sized>(rng: &mut R) -> f64 {
        let u1: f64 = 1.0 - rng.gen::<f64>();
        let u2: f64 = rng.gen();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    fn blobs<R: Rng + ?Sized>(
        centers: &[&[f64]],
        per: usize,
        sigma: f64,
        rng: &mut R,
    ) -> (Vec<f64>, Vec<usize>) {
        let dim = centers[0].len();
        let mut points = Vec::new();
        let mut labels = Vec::new();
        for (ci, c) in centers.iter().enumerate() {
            for _ in 0..per {
                for d in 0..dim {
                    points.push(c[d] + sigma * randn(rng));
                }
                labels.push(ci);
            }
        }
        (points, labels)
    }

    #[test]
    fn kmeans_separates_two_blobs() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (points, labels) = blobs(&[&[0.0, 0.0], &[10.0, 10.0]], 30, 0.3, &mut rng);
        let res = kmeans(&points, 2, 2, &mut rng).unwrap();
        // same-blob points always share a cluster, blobs never merge
        for i in 0..labels.len() {
            for j in 0..labels.len() {
                assert_eq!(
                    labels[i] == labels[j],
                    res.assignment[i] == res.assignment[j]
                );
            }
        }
    }

    #[test]
    fn kmeans_k1_single_cluster() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (points, _) = blobs(&[&[0.0], &[5.0]], 10, 0.5, &mut rng);
        let res = kmeans(&points, 1, 1, &mut rng).unwrap();
        assert!(res.assignment.iter().all(|&c| c == 0));
    }

    #[test]
    fn kmeans_rejects_bad_k() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!(kmeans(&[0.0, 1.0], 1, 3, &mut rng).is_err());
        assert!(kmeans(&[0.0, 1.0], 1, 0, &mut rng).is_err());
    }

    #[test]
    fn kmeans_best_restart_wins() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (points, _) = blobs(&[&[0.0, 0.0], &[4.0, 0.0], &[0.0, 4.0]], 15, 0.6, &mut rng);
        // replay the restarts by hand on an identical rng stream
        let mut rng_a = ChaCha8Rng::seed_from_u64(5);
        let singles: Vec<f64> = (0..KMEANS_RESTARTS)
            .map(|_| kmeans_once(&points, 2, 3, KMEANS_MAX_ITER, KMEANS_TOL, &mut rng_a).inertia)
            .collect();
        let mut rng_b = ChaCha8Rng::seed_from_u64(5);
        let best = kmeans(&points, 2, 3, &mut rng_b).unwrap();
        let min = singles.iter().copied().fold(f64::INFINITY, f64::min);
        assert!(best.inertia <= min + 1e-9, "{} vs {min}", best.inertia);
    }

    #[test]
    fn lloyd_inertia_never_increases() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let (points, _) = blobs(&[&[0.0, 0.0], &[2.0, 1.0], &[1.0, 3.0]], 25, 1.0, &mut rng);
        for _ in 0..5 {
            let run = kmeans_once(&points, 2, 4, KMEANS_MAX_ITER, KMEANS_TOL, &mut rng);
            for w in run.trace.windows(2) {
                assert!(w[1] <= w[0] + 1e-9, "inertia rose: {:?}", run.trace);
            }
        }
    }

    #[test]
    fn modularity_single_cluster_exactly_zero() {
        let g = two_triangles();
        let q = modularity(&g, &[0; 6]).unwrap();
        assert_eq!(q, 0.0);
    }

    #[test]
    fn modularity_two_triangles_exactly_half() {
        let g = two_triangles();
        let q = modularity(&g, &[0, 0, 0, 1, 1, 1]).unwrap();
        assert_eq!(q, 0.5);
    }

    #[test]
    fn modularity_random_assignment_near_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut arcs = Vec::new();
        for u in 0..40u32 {
            for v in (u + 1)..40 {
                if rng.gen::<f64>() < 0.2 {
                    arcs.push((u, v, 1.0));
                }
            }
        }
        let g = Graph::from_arcs(40, &arcs, false);
        let mut total = 0.0;
        let trials = 100;
        for _ in 0..trials {
            let assignment: Vec<usize> = (0..40).map(|_| rng.gen_range(0..4)).collect();
            total += modularity(&g, &assignment).unwrap();
        }
        let mean = total / trials as f64;
        assert!(mean.abs() < 0.05, "mean {mean}");
    }

    #[test]
    fn modularity_bounds_on_random_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let n = rng.gen_range(4..20usize);
            let mut arcs = Vec::new();
            for u in 0..n as u32 {
                for v in (u + 1)..n as u32 {
                    if rng.gen::<f64>() < 0.4 {
                        arcs.push((u, v, rng.gen_range(0.1..3.0)));
                    }
                }
            }
            if arcs.is_empty() {
                continue;
            }
            let g = Graph::from_arcs(n, &arcs, false);
            let assignment: Vec<usize> = (0..n).map(|_| rng.gen_range(0..3)).collect();
            let q = modularity(&g, &assignment).unwrap();
            assert!((-0.5..=1.0).contains(&q), "q {q}");
        }
    }

    #[test]
    fn modularity_zero_weight_errors() {
        let g = Graph::from_arcs(3, &[], false);
        assert!(matches!(
            modularity(&g, &[0, 0, 0]),
            Err(EvalError::ZeroWeight)
        ));
    }

    #[test]
    fn logreg_separable_perfect_train_accuracy() {
        let features = vec![
            -2.0, -2.1, -1.9, -2.2, // class 0 (dim=1, flat)
            2.0, 2.1, 1.9, 2.2, // class 1
        ];
        let truth = vec![0, 0, 0, 0, 1, 1, 1, 1];
        let train: Vec<usize> = (0..8).collect();
        let clf = ovr_logreg_fit(&features, 1, 2, &|n, c| truth[n] == c, &train);
        let acc = predict_multiclass(&clf, &features, &truth, &train);
        assert_eq!(acc, 1.0);
    }

    #[test]
    fn logreg_identical_features_predicts_majority() {
        let features = vec![1.0, 1.0, 1.0, 1.0, 1.0];
        let truth = vec![0, 0, 0, 1, 1];
        let train: Vec<usize> = (0..5).collect();
        let clf = ovr_logreg_fit(&features, 1, 2, &|n, c| truth[n] == c, &train);
        for &i in &train {
            let x = &features[i..i + 1];
            assert!(clf.score(0, x) > clf.score(1, x));
        }
    }

    #[test]
    fn logreg_three_blobs_high_accuracy() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        // 6-sigma separation between centers
        let (features, truth) = blobs(&[&[0.0, 0.0], &[6.0, 0.0], &[0.0, 6.0]], 40, 1.0, &mut rng);
        let all: Vec<usize> = (0..truth.len()).collect();
        let (train, eval): (Vec<usize>, Vec<usize>) = all.iter().partition(|&&i| i % 2 == 0);
        let clf = ovr_logreg_fit(&features, 2, 3, &|n, c| truth[n] == c, &train);
        let acc = predict_multiclass(&clf, &features, &truth, &eval);
        assert!(acc >= 0.95, "accuracy {acc}");
    }

    #[test]
    fn logreg_missing_class_reported_never_predicted() {
        let features = vec![-1.0, -1.1, 1.0, 1.1];
        let truth = vec![0, 0, 1, 1];
        let train = vec![0, 1]; // class 1 absent
        let clf = ovr_logreg_fit(&features, 1, 2, &|n, c| truth[n] == c, &train);
        assert_eq!(clf.missing_classes, vec![1]);
        assert_eq!(clf.score(1, &[5.0]), f64::NEG_INFINITY);
    }

    #[test]
    fn multiclass_accuracy_hand_count() {
        // fixed classifier: class 0 fires on x < 0, class 1 on x > 0
        let clf = OvrClassifier {
            dim: 1,
            weights: vec![Some(vec![-1.0, 0.0]), Some(vec![1.0, 0.0])],
            missing_classes: vec![],
        };
        let features = vec![-1.0, -2.0, 3.0, 0.5, -0.1];
        let truth = vec![0, 0, 1, 0, 1];
        let eval: Vec<usize> = (0..5).collect();
        // predictions: 0, 0, 1, 1, 0 -> correct on nodes 0, 1, 2 -> 3/5
        let acc = predict_multiclass(&clf, &features, &truth, &eval);
        assert!((acc - 0.6).abs() < 1e-12);
    }

    #[test]
    fn multiclass_constant_scores_tie_break_gives_third() {
        // all-equal scores: argmax resolves to class 0 everywhere
        let clf = OvrClassifier {
            dim: 1,
            weights: vec![Some(vec![0.0, 0.0]); 3],
            missing_classes: vec![],
        };
        let features = vec![0.5; 9];
        let truth = vec![0, 1, 2, 0, 1, 2, 0, 1, 2];
        let eval: Vec<usize> = (0..9).collect();
        let acc = predict_multiclass(&clf, &features, &truth, &eval);
        assert!((acc - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn multilabel_perfect_and_mixed() {
        let clf = OvrClassifier {
            dim: 2,
            weights: vec![Some(vec![1.0, 0.0, 0.0]), Some(vec![0.0, 1.0, 0.0])],
            missing_classes: vec![],
        };
        let features = vec![1.0, 0.0, 0.0, 1.0];
        let truth = vec![vec![0], vec![1]];
        assert_eq!(predict_multilabel(&clf, &features, &truth, &[0, 1]), 1.0);

        // predictions collapse to label 0 for both nodes
        let clf_bad = OvrClassifier {
            dim: 2,
            weights: vec![Some(vec![1.0, 1.0, 1.0]), Some(vec![0.0, 0.0, 0.0])],
            missing_classes: vec![],
        };
        // truth {a: {0}, b: {1}}, predicted {a: {0}, b: {0}}: TP=1 FP=1 FN=1
        let f1 = predict_multilabel(&clf_bad, &features, &truth, &[0, 1]);
        assert!((f1 - 0.5).abs() < 1e-12);
    }

    #[test]
    fn multilabel_pooled_fp_equals_fn() {
        // with n_i = true label count, every false positive displaces a true
        // label, so pooled FP == FN and F1 == TP/(TP+FP)
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let n = 30;
        let n_labels = 6;
        let dim = 3;
        let features: Vec<f64> = (0..n * dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let truth: Vec<Vec<usize>> = (0..n)
            .map(|_| {
                let k = rng.gen_range(1..4usize);
                let mut l: Vec<usize> = (0..n_labels).collect();
                for i in (1..l.len()).rev() {
                    l.swap(i, rng.gen_range(0..=i));
                }
                l.truncate(k);
                l
            })
            .collect();
        let weights: Vec<Option<Vec<f64>>> = (0..n_labels)
            .map(|_| Some((0..=dim).map(|_| rng.gen_range(-1.0..1.0)).collect()))
            .collect();
        let clf = OvrClassifier {
            dim,
            weights,
            missing_classes: vec![],
        };
        let eval: Vec<usize> = (0..n).collect();
        let mut tp = 0usize;
        let mut fp = 0usize;
        let mut fnn = 0usize;
        for &i in &eval {
            let x = &features[i * dim..(i + 1) * dim];
            let mut scored: Vec<(f64, usize)> =
                (0..n_labels).map(|c| (clf.score(c, x), c)).collect();
            scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            let pred: Vec<usize> = scored[..truth[i].len()].iter().map(|&(_, c)| c).collect();
            tp += pred.iter().filter(|p| truth[i].contains(p)).count();
            fp += pred.iter().filter(|p| !truth[i].contains(p)).count();
            fnn += truth[i].iter().filter(|t| !pred.contains(t)).count();
        }
        assert_eq!(fp, fnn);
        let f1 = predict_multilabel(&clf, &features, &truth, &eval);
        assert!((f1 - tp as f64 / (tp + fp) as f64).abs() < 1e-12);
    }

    #[test]
    fn epochs_to_peak_examples() {
        let c = QualityCurve::new(vec![0.1, 0.5, 0.9, 1.0, 1.0]);
        assert_eq!(epochs_to_peak_single(&c, 0.95), Some(4));
        let monotone = QualityCurve::new(vec![0.2, 0.4, 0.6, 0.8]);
        assert!(epochs_to_peak_single(&monotone, 0.95).unwrap() <= 4);
        let constant = QualityCurve::new(vec![0.7, 0.7, 0.7]);
        assert_eq!(epochs_to_peak_single(&constant, 0.95), Some(1));
        assert!(epochs_to_peak(&[], 0.95).is_err());
    }

    #[test]
    fn epochs_to_peak_mean_and_sd() {
        let curves = vec![
            QualityCurve::new(vec![0.1, 1.0, 1.0]),
            QualityCurve::new(vec![0.1, 0.2, 1.0]),
        ];
        let (mean, sd) = epochs_to_peak(&curves, 0.95).unwrap();
        assert!((mean - 2.5).abs() < 1e-12);
        assert!((sd - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn training_gain_examples() {
        assert!((training_gain(8.0, 10.0).unwrap() - 0.2).abs() < 1e-12);
        assert_eq!(training_gain(10.0, 10.0).unwrap(), 0.0);
        assert!(training_gain(5.0, 0.0).is_err());
    }

    #[test]
    fn computation_gain_prefix_overhead_identity() {
        // equal epochs: the gain is pure preprocessing overhead
        let cost = CostModel {
            expected_pairs: 63.0,
            negatives: 5.0,
            rounds_per_epoch: 10.0,
            method: MethodCost::PrefixScored { prefix_edges: 1 },
        };
        let g = computation_gain(7.0, 7.0, &cost).unwrap();
        let expected = -10.0 * 1.0 / (63.0 * 6.0);
        assert!((g - expected).abs() < 1e-12, "{g} vs {expected}");
    }

    #[test]
    fn computation_gain_anchor_values() {
        // constants: 380 training evaluations per walk, 390 with scoring
        let cost = CostModel {
            expected_pairs: 380.0 / 6.0,
            negatives: 5.0,
            rounds_per_epoch: 10.0,
            method: MethodCost::PrefixScored { prefix_edges: 1 },
        };
        assert!((cost.train_cost_per_node() - 380.0).abs() < 1e-9);
        assert!((cost.method_cost_per_node() - 390.0).abs() < 1e-9);
        let tg = 0.2176;
        let g = computation_gain(1.0 - tg, 1.0, &cost).unwrap();
        assert!((g - 0.1970).abs() < 5e-4, "gain {g}");
    }

    #[test]
    fn computation_gain_consistency_identity() {
        let cost = CostModel {
            expected_pairs: 77.0,
            negatives: 5.0,
            rounds_per_epoch: 10.0,
            method: MethodCost::AllScored,
        };
        let (e_m, e_b) = (6.2, 8.4);
        let tg = training_gain(e_m, e_b).unwrap();
        let cg = computation_gain(e_m, e_b, &cost).unwrap();
        let ratio = cost.method_cost_per_node() / cost.train_cost_per_node();
        assert!((cg - (1.0 - ratio * (1.0 - tg))).abs() < 1e-12);
    }

    #[test]
    fn gain_csv_layout() {
        let rows = vec![GainRow {
            method: "loss-guided".into(),
            t_prime: Some(1),
            power: 32.0,
            rounds_per_epoch: 10,
            epochs_method: 7.8,
            epochs_method_sd: 0.4,
            epochs_baseline: 10.0,
            training_gain: 0.22,
            training_sd: 0.04,
            computation_gain: Some(0.197),
        }];
        let mut buf = Vec::new();
        write_gain_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert!(lines.next().unwrap().starts_with("method,t_prime"));
        let row = lines.next().unwrap();
        assert!(row.starts_with("loss-guided,1,32,10,"));
        assert!(row.contains("22.0000"));
        assert!(row.contains("19.7000"));
    }
}
