//! Adam and plain SGD over the per-layer parameter tensors.

use super::tape::{Gradients, ParamKey};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OptimizerConfig {
    Adam {
        rate: f64,
        beta1: f64,
        beta2: f64,
        eps: f64,
    },
    Sgd {
        rate: f64,
    },
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig::Adam {
            rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

struct Moments {
    m: Vec<f64>,
    v: Vec<f64>,
}

/// Optimizer state; constructed fresh at the start of every training phase.
pub struct Optimizer {
    cfg: OptimizerConfig,
    step: u64,
    moments: BTreeMap<ParamKey, Moments>,
}

impl Optimizer {
    pub fn new(cfg: OptimizerConfig) -> Self {
        Optimizer {
            cfg,
            step: 0,
            moments: BTreeMap::new(),
        }
    }

    /// Computes one update for every parameter present in `grads`, returned
    /// as per-key deltas for the caller to add onto its parameter storage.
    pub fn step(&mut self, grads: &Gradients) -> Vec<(ParamKey, Vec<f64>)> {
        self.step += 1;
        let mut out = Vec::new();
        match self.cfg {
            OptimizerConfig::Sgd { rate } => {
                for (&key, grad) in grads.iter() {
                    let delta = grad.as_slice().iter().map(|g| -rate * g).collect();
                    out.push((key, delta));
                }
            }
            OptimizerConfig::Adam {
                rate,
                beta1,
                beta2,
                eps,
            } => {
                let t = self.step as i32;
                let bc1 = 1.0 - beta1.powi(t);
                let bc2 = 1.0 - beta2.powi(t);
                for (&key, grad) in grads.iter() {
                    let g = grad.as_slice();
                    let state = self.moments.entry(key).or_insert_with(|| Moments {
                        m: vec![0.0; g.len()],
                        v: vec![0.0; g.len()],
                    });
                    let mut delta = Vec::with_capacity(g.len());
                    for i in 0..g.len() {
                        state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * g[i];
                        state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * g[i] * g[i];
                        let mhat = state.m[i] / bc1;
                        let vhat = state.v[i] / bc2;
                        delta.push(-rate * mhat / (vhat.sqrt() + eps));
                    }
                    out.push((key, delta));
                }
            }
        }
        out
    }
}
