//! Random-walk node embeddings with loss-guided walk selection.
//!
//! `walkgrad` trains skip-gram-with-negative-sampling (SGNS) node embeddings
//! from random walks, in the style of DeepWalk and node2vec, and adds
//! loss-guided training: instead of training on one walk per node per epoch,
//! candidate walks are scored by the current loss of the examples they would
//! generate and a weighted without-replacement sample of the highest-scoring
//! walks is selected for training each round.
//!
//! The crate is organized around the training pipeline:
//!
//! - [`graph`]: weighted CSR graphs, edge-list loading, alias tables for
//!   O(1) weighted neighbor sampling.
//! - [`walks`]: walk generation — simple weighted walks, second-order
//!   (p, q)-biased walks, loss-guided walks, and prefix-conditioned
//!   extension of partially drawn walks.
//! - [`sgns`]: embedding parameters, positive-pair generation from walks,
//!   the 0.75-power negative-sampling table, per-example losses, and SGD
//!   updates.
//! - [`select`]: the two training loops (plain per-node epochs and
//!   scored-round epochs), walk loss scores, and weighted sampling without
//!   replacement.
//! - [`eval`]: downstream-task evaluation (k-means + modularity,
//!   one-vs-rest logistic regression for multi-class accuracy and
//!   multi-label micro-F1), epochs-to-peak curves, and the training /
//!   computation cost accounting.
//! - [`synth`]: planted-partition benchmark graphs with ground-truth
//!   communities and per-community training-share tracking.
//! - [`diagnostics`]: edge-loss vs. background-loss profiles of a model
//!   snapshot.
//! - [`runner`]: experiment configuration, the repetition/epoch protocol,
//!   hyperparameter sweeps, and CSV / manifest / embedding-file output.
//!
//! The `examples/` directory contains one runnable example per capability;
//! start with `quick_embedding`. A thin `walkgrad` binary exposes the same
//! pipeline as `train` / `eval` / `synth` / `sweep` / `diagnose`
//! subcommands.

pub mod diagnostics;
pub mod eval;
pub mod graph;
mod hogwild;
pub mod runner;
pub mod select;
pub mod sgns;
pub mod synth;
pub mod walks;

pub use graph::{load_edge_list, AliasSampler, Graph, GraphError, IdMap, NodeId};
pub use select::{
    run_baseline_epoch, run_loss_guided_epoch, EpochStats, RoundPlan, ScoreFn, TrainMode,
};
pub use sgns::{EmbeddingModel, LrSchedule, NegativeTable, PairBatch, TrainError};
pub use walks::{Walk, WalkKind};
