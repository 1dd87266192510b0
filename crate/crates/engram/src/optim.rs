//! First-order update rules over a [`ParamStore`]: Adam and RMSprop with
//! momentum, both behind global-norm gradient clipping.
//!
//! The optimizer owns per-parameter slot state keyed by parameter name so it
//! can be exported into checkpoints and re-imported independently of
//! [`ParamId`](crate::params::ParamId) numbering. A step consumes whatever
//! gradients the store has accumulated and zeroes them afterwards; callers
//! average minibatch gradients (`scale_grads`) before stepping.

use crate::params::ParamStore;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimKind {
    Adam,
    Rmsprop,
}

/// Two per-coordinate accumulators, enough for either rule: Adam keeps the
/// first and second moments, RMSprop the mean square and the momentum buffer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlotPair {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

/// Snapshot of everything a checkpoint needs to resume optimization exactly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub kind: OptimKind,
    pub step: u64,
    pub slots: BTreeMap<String, SlotPair>,
}

/// What one `step` call did.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepReport {
    /// False when non-finite gradients made the step a no-op.
    pub applied: bool,
    /// Global gradient norm before clipping.
    pub grad_norm: f64,
    pub clipped: bool,
}

#[derive(Clone, Debug)]
pub struct Optimizer {
    pub kind: OptimKind,
    pub lr: f64,
    /// Global-norm ceiling; `None` disables clipping.
    pub clip: Option<f64>,
    pub beta1: f64,
    pub beta2: f64,
    pub decay: f64,
    pub momentum: f64,
    pub eps: f64,
    step: u64,
    slots: BTreeMap<String, SlotPair>,
}

impl Optimizer {
    pub fn adam(lr: f64) -> Self {
        Optimizer {
            kind: OptimKind::Adam,
            lr,
            clip: None,
            beta1: 0.9,
            beta2: 0.999,
            decay: 0.9,
            momentum: 0.0,
            eps: 1e-8,
            step: 0,
            slots: BTreeMap::new(),
        }
    }

    pub fn rmsprop(lr: f64, momentum: f64) -> Self {
        Optimizer { kind: OptimKind::Rmsprop, momentum, ..Optimizer::adam(lr) }
    }

    pub fn with_clip(mut self, clip: f64) -> Self {
        assert!(clip > 0.0, "clip threshold must be positive");
        self.clip = Some(clip);
        self
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    fn clip_scale(&self, norm: f64) -> f64 {
        match self.clip {
            Some(c) if norm > c => c / norm,
            _ => 1.0,
        }
    }

    /// The gradients exactly as `step` would consume them: the store's
    /// accumulated gradients after global-norm clipping, one vector per
    /// parameter in store order.
    pub fn clipped_gradients(&self, store: &ParamStore) -> Vec<Vec<f64>> {
        let scale = self.clip_scale(store.grad_global_norm());
        store
            .iter()
            .map(|(_, p)| p.grad.iter().map(|g| g * scale).collect())
            .collect()
    }

    /// Applies one update to every parameter, then zeroes the store's
    /// gradients. Non-finite gradients skip the update (state untouched)
    /// but still zero the gradients so the next accumulation starts clean.
    pub fn step(&mut self, store: &mut ParamStore) -> StepReport {
        let norm = store.grad_global_norm();
        if !norm.is_finite() {
            store.zero_grads();
            return StepReport { applied: false, grad_norm: norm, clipped: false };
        }
        let scale = self.clip_scale(norm);
        self.step += 1;
        let t = self.step;
        for (_, p) in store.iter_mut() {
            let n = p.data.len();
            let slot = self
                .slots
                .entry(p.name.clone())
                .or_insert_with(|| SlotPair { a: vec![0.0; n], b: vec![0.0; n] });
            assert_eq!(slot.a.len(), n, "slot size mismatch for {}", p.name);
            match self.kind {
                OptimKind::Adam => {
                    let bc1 = 1.0 - self.beta1.powi(t as i32);
                    let bc2 = 1.0 - self.beta2.powi(t as i32);
                    for i in 0..n {
                        let g = p.grad[i] * scale;
                        slot.a[i] = self.beta1 * slot.a[i] + (1.0 - self.beta1) * g;
                        slot.b[i] = self.beta2 * slot.b[i] + (1.0 - self.beta2) * g * g;
                        let m_hat = slot.a[i] / bc1;
                        let v_hat = slot.b[i] / bc2;
                        p.data[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
                    }
                }
                OptimKind::Rmsprop => {
                    for i in 0..n {
                        let g = p.grad[i] * scale;
                        slot.a[i] = self.decay * slot.a[i] + (1.0 - self.decay) * g * g;
                        slot.b[i] = self.momentum * slot.b[i]
                            + self.lr * g / (slot.a[i] + self.eps).sqrt();
                        p.data[i] -= slot.b[i];
                    }
                }
            }
        }
        store.zero_grads();
        StepReport { applied: true, grad_norm: norm, clipped: scale < 1.0 }
    }

    pub fn export_state(&self) -> OptimizerState {
        OptimizerState { kind: self.kind, step: self.step, slots: self.slots.clone() }
    }

    pub fn import_state(&mut self, state: OptimizerState) {
        assert_eq!(state.kind, self.kind, "optimizer kind mismatch");
        self.step = state.step;
        self.slots = state.slots;
    }
}
