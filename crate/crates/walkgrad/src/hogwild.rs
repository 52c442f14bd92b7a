//! Lock-free relaxed-consistency updates over shared embedding matrices.
//!
//! Parallel workers update the same focus/context rows without locks.
//! Individual f64 lanes are read and written atomically (no torn values),
//! but read-modify-write cycles race, so concurrent updates to the same
//! lane can be lost. That is the contract of the parallel training mode:
//! statistical convergence, not determinism.

use std::sync::atomic::{AtomicU64, Ordering};

use crate::graph::NodeId;
use crate::sgns::{neg_loss_from_dot, pos_loss_from_dot, sigmoid, EmbeddingModel};

/// Atomic view of the model matrices, borrowed for the span of one
/// parallel training phase.
pub(crate) struct SharedModel<'a> {
    focus: &'a [AtomicU64],
    context: &'a [AtomicU64],
    dim: usize,
}

fn as_atomic(xs: &mut [f64]) -> &[AtomicU64] {
    // AtomicU64 has the same size and bit validity as u64, and the exclusive
    // borrow rules out non-atomic access for the lifetime of the view.
    unsafe { std::slice::from_raw_parts(xs.as_mut_ptr() as *const AtomicU64, xs.len()) }
}

#[inline]
fn load(a: &AtomicU64) -> f64 {
    f64::from_bits(a.load(Ordering::Relaxed))
}

#[inline]
fn store(a: &AtomicU64, v: f64) {
    a.store(v.to_bits(), Ordering::Relaxed)
}

impl<'a> SharedModel<'a> {
    pub fn new(m: &'a mut EmbeddingModel) -> SharedModel<'a> {
        let dim = m.dim();
        let (focus, context) = m.matrices_mut();
        SharedModel {
            focus: as_atomic(focus),
            context: as_atomic(context),
            dim,
        }
    }

    /// One relaxed SGD step on pair (i, j); returns the example loss at the
    /// observed parameters, or NaN if a non-finite dot product was seen.
    pub fn train_pair_relaxed(&self, i: NodeId, j: NodeId, positive: bool, eta: f64) -> f64 {
        let f = &self.focus[i as usize * self.dim..(i as usize + 1) * self.dim];
        let c = &self.context[j as usize * self.dim..(j as usize + 1) * self.dim];
        let mut x = 0.0;
        for k in 0..self.dim {
            x += load(&f[k]) * load(&c[k]);
        }
        if !x.is_finite() {
            return f64::NAN;
        }
        let label = if positive { 1.0 } else { 0.0 };
        let g = eta * (label - sigmoid(x));
        for k in 0..self.dim {
            let f_old = load(&f[k]);
            let c_old = load(&c[k]);
            store(&c[k], c_old + g * f_old);
            store(&f[k], f_old + g * c_old);
        }
        if positive {
            pos_loss_from_dot(x)
        } else {
            neg_loss_from_dot(x)
        }
    }
}
