//! Layerwise two-phase training of the unrolled network.
//!
//! Layers are trained one after another. For each new layer k the parameters
//! start from layer k-1 (layer 1 starts at the SBL embedding, so the
//! untrained network already matches the classical algorithm); phase one
//! updates only layer k for R mini-batches, phase two re-learns layers 1..k
//! for another R. The loss is the batch-mean squared error between the true
//! sparse vectors and the output of the layer currently being trained.

pub mod optim;
pub mod tape;

pub use optim::{Optimizer, OptimizerConfig};
pub use tape::{Gradients, ParamKey, ParamKind, Tape, TapeError};

use crate::data::{Dataset, Sample};
use crate::lsbl::{
    sbl_embedding_layer, LayerParams, LsblModel, ModelError, Variant,
};
use crate::mat::Mat;
use crate::rng::Rng;
use rayon::prelude::*;
use std::ops::Range;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("non-finite loss ({loss}) at layer {layer}, phase {phase}, step {step}")]
    NonFiniteLoss {
        layer: usize,
        phase: u8,
        step: usize,
        loss: f64,
    },
    #[error(transparent)]
    Tape(#[from] TapeError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("invalid training setup: {0}")]
    BadInput(String),
}

/// Architecture of the model being trained.
#[derive(Debug, Clone, Copy)]
pub struct ModelSpec {
    pub variant: Variant,
    pub depth: usize,
    pub gamma_floor: f64,
    pub gamma_cap: f64,
}

impl ModelSpec {
    pub fn new(variant: Variant, depth: usize) -> Self {
        ModelSpec {
            variant,
            depth,
            gamma_floor: crate::lsbl::DEFAULT_GAMMA_FLOOR,
            gamma_cap: crate::lsbl::DEFAULT_GAMMA_CAP,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    /// Mini-batches per phase (R).
    pub steps_per_phase: usize,
    /// Samples per mini-batch (m).
    pub batch_size: usize,
    pub optimizer: OptimizerConfig,
    /// Finish a phase early once the batch loss drops below this; 0 disables.
    pub loss_floor_stop: f64,
    pub seed: u64,
    /// Noise variance handed to the MAP stage for samples generated
    /// noiselessly.
    pub solver_noise_var: f64,
    /// Parallel and serial execution produce identical results (gradients are
    /// reduced in sample order); serial exists as the reference mode.
    pub parallel: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            steps_per_phase: 2000,
            batch_size: 128,
            optimizer: OptimizerConfig::default(),
            loss_floor_stop: 0.0,
            seed: 0,
            solver_noise_var: 1e-6,
            parallel: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    /// 1-based layer index.
    pub layer: usize,
    pub phase: u8,
    pub step: usize,
    pub loss: f64,
}

pub enum TrainEvent<'a> {
    PhaseStart {
        layer: usize,
        phase: u8,
        model: &'a LsblModel,
    },
    Step(StepRecord),
    LayerDone {
        layer: usize,
        model: &'a LsblModel,
    },
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: LsblModel,
    pub log: Vec<StepRecord>,
}

/// Batch-mean squared error: `(1/m) sum_i ||x_i - xhat_i||_F^2`.
pub fn loss_mse(truth: &[Mat], est: &[Mat]) -> f64 {
    assert_eq!(truth.len(), est.len(), "batch sizes differ");
    assert!(!truth.is_empty(), "empty batch");
    let total: f64 = truth
        .iter()
        .zip(est)
        .map(|(t, e)| {
            assert_eq!(t.shape(), e.shape(), "loss_mse shape mismatch");
            t.as_slice()
                .iter()
                .zip(e.as_slice())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
        })
        .sum();
    total / truth.len() as f64
}

pub fn weight_key(layer: usize) -> ParamKey {
    ParamKey {
        layer,
        kind: ParamKind::Weight,
    }
}

pub fn bias_key(layer: usize) -> ParamKey {
    ParamKey {
        layer,
        kind: ParamKind::Bias,
    }
}

/// Per-sample view of the (possibly lifted) linear system the graph runs on.
#[derive(Clone)]
pub struct SampleSystem {
    pub system: Arc<Mat>,
    pub system_t: Arc<Mat>,
    pub rhs: Arc<Mat>,
    pub x_true: Arc<Mat>,
    pub noise_var: f64,
}

impl SampleSystem {
    /// Builds the system for one sample. `shared` carries the pre-lifted,
    /// pre-transposed matrices when the dataset shares one `A`.
    pub fn for_sample(
        sample: &Sample,
        variant: Variant,
        solver_noise_var: f64,
        shared: Option<&SharedSystem>,
    ) -> Self {
        let noise_var = if sample.noise_var > 0.0 {
            sample.noise_var
        } else {
            solver_noise_var
        };
        let (system, system_t) = match shared {
            Some(s) => (Arc::clone(&s.system), Arc::clone(&s.system_t)),
            None => {
                let system = match variant {
                    Variant::Nw1 => Arc::clone(&sample.a),
                    Variant::Nw2 => Arc::new(crate::lsbl::lift_matrix(&sample.a, sample.l())),
                };
                let system_t = Arc::new(system.transpose());
                (system, system_t)
            }
        };
        let (rhs, x_true) = match variant {
            Variant::Nw1 => (Arc::new(sample.y.clone()), Arc::new(sample.x.clone())),
            Variant::Nw2 => (
                Arc::new(sample.y.reshape(sample.y.len(), 1).expect("relabel")),
                Arc::new(sample.x.reshape(sample.x.len(), 1).expect("relabel")),
            ),
        };
        SampleSystem {
            system,
            system_t,
            rhs,
            x_true,
            noise_var,
        }
    }
}

/// Shared-`A` matrices computed once per training run.
pub struct SharedSystem {
    pub system: Arc<Mat>,
    pub system_t: Arc<Mat>,
}

impl SharedSystem {
    pub fn new(a: &Arc<Mat>, variant: Variant, l: usize) -> Self {
        let system = match variant {
            Variant::Nw1 => Arc::clone(a),
            Variant::Nw2 => Arc::new(crate::lsbl::lift_matrix(a, l)),
        };
        let system_t = Arc::new(system.transpose());
        SharedSystem { system, system_t }
    }
}

/// Builds the unrolled forward graph for one sample and returns the scalar
/// loss node. Layers in `trainable` become parameter leaves; the rest enter
/// as constants, so their subgraphs are skipped on the backward sweep.
pub fn build_sample_loss(
    tape: &mut Tape,
    layers: &[(Arc<Mat>, Arc<Mat>)],
    trainable: &Range<usize>,
    floor: f64,
    cap: f64,
    sys: &SampleSystem,
) -> Result<tape::NodeId, TrainError> {
    let m_sys = sys.system.rows();
    let n_sys = sys.system.cols();
    let a = tape.constant(Arc::clone(&sys.system));
    let a_t = tape.constant(Arc::clone(&sys.system_t));
    let y = tape.constant(Arc::clone(&sys.rhs));
    let mut eye = Mat::zeros(m_sys, m_sys);
    eye.add_diag(sys.noise_var);
    let s2_eye = tape.constant(Arc::new(eye));
    let ones_row = tape.constant(Arc::new(Mat::from_vec(1, m_sys, vec![1.0; m_sys]).unwrap()));
    let ones_col = tape.constant(Arc::new(Mat::from_vec(m_sys, 1, vec![1.0; m_sys]).unwrap()));

    let mut x_node = tape.constant(Arc::new(Mat::zeros(n_sys, sys.rhs.cols())));
    let mut phi_node = tape.constant(Arc::new(
        Mat::from_vec(n_sys, 1, vec![1.0; n_sys]).unwrap(),
    ));

    for (idx, (w_val, b_val)) in layers.iter().enumerate() {
        let (w, b) = if trainable.contains(&idx) {
            (
                tape.param(weight_key(idx), Arc::clone(w_val)),
                tape.param(bias_key(idx), Arc::clone(b_val)),
            )
        } else {
            (
                tape.constant(Arc::clone(w_val)),
                tape.constant(Arc::clone(b_val)),
            )
        };
        // dense stage
        let sq = tape.elem_mul(x_node, x_node)?;
        let feats = tape.concat(&[sq, phi_node])?;
        let wf = tape.matmul(w, feats)?;
        let z = tape.add(wf, b)?;
        let pos = tape.relu(z);
        let gamma = tape.clamp(pos, floor, cap);
        // MAP stage
        let gamma_row = tape.matmul(gamma, ones_row)?;
        let g = tape.elem_mul(gamma_row, a_t)?; // diag(gamma) A^T
        let g_t = tape.transpose(g);
        let b_raw = tape.matmul(a, g)?;
        let b_sys = tape.add(b_raw, s2_eye)?;
        let z_sol = tape.solve_spd(b_sys, y)?;
        x_node = tape.matmul(g, z_sol)?;
        let h = tape.solve_spd(b_sys, g_t)?;
        let h_t = tape.transpose(h);
        let overlap = tape.elem_mul(g, h_t)?;
        let row_sums = tape.matmul(overlap, ones_col)?;
        phi_node = tape.sub(gamma, row_sums)?;
    }

    let x_true = tape.constant(Arc::clone(&sys.x_true));
    let diff = tape.sub(x_true, x_node)?;
    Ok(tape.sum_sq(diff))
}

fn layer_arcs(layers: &[LayerParams]) -> Vec<(Arc<Mat>, Arc<Mat>)> {
    layers
        .iter()
        .map(|p| {
            (
                Arc::new(p.w.clone()),
                Arc::new(Mat::col_vec(&p.b)),
            )
        })
        .collect()
}

/// Loss of the unrolled forward on one sample, via the same graph the
/// gradients come from. Used by finite-difference checks.
pub fn sample_loss_value(
    layers: &[LayerParams],
    floor: f64,
    cap: f64,
    sys: &SampleSystem,
) -> Result<f64, TrainError> {
    let arcs = layer_arcs(layers);
    let mut tape = Tape::new();
    let loss = build_sample_loss(&mut tape, &arcs, &(0..0), floor, cap, sys)?;
    Ok(tape.value(loss).get(0, 0))
}

/// Loss and parameter gradients for one sample.
pub fn sample_loss_grad(
    layers: &[(Arc<Mat>, Arc<Mat>)],
    trainable: &Range<usize>,
    floor: f64,
    cap: f64,
    sys: &SampleSystem,
) -> Result<(f64, Gradients), TrainError> {
    let mut tape = Tape::new();
    let loss = build_sample_loss(&mut tape, layers, trainable, floor, cap, sys)?;
    let grads = tape.backward(loss)?;
    Ok((tape.value(loss).get(0, 0), grads))
}

pub fn train_layerwise(
    dataset: &Dataset,
    spec: &ModelSpec,
    cfg: &TrainConfig,
) -> Result<TrainOutcome, TrainError> {
    train_layerwise_observed(dataset, spec, cfg, None, |_| {})
}

/// Full training entry point. `resume_from` supplies already-trained leading
/// layers (e.g. from a checkpoint); training continues at the next layer and
/// reproduces exactly what an uninterrupted run would have done, because each
/// (layer, phase) pair draws its batches from its own derived stream.
pub fn train_layerwise_observed(
    dataset: &Dataset,
    spec: &ModelSpec,
    cfg: &TrainConfig,
    resume_from: Option<&LsblModel>,
    mut observer: impl FnMut(TrainEvent<'_>),
) -> Result<TrainOutcome, TrainError> {
    if spec.depth == 0 {
        return Err(TrainError::BadInput("depth must be >= 1".into()));
    }
    if cfg.steps_per_phase == 0 || cfg.batch_size == 0 {
        return Err(TrainError::BadInput(
            "steps_per_phase and batch_size must be >= 1".into(),
        ));
    }
    let (_, n, l) = dataset.dims();
    let mut model = LsblModel {
        variant: spec.variant,
        n,
        l,
        layers: Vec::new(),
        gamma_floor: spec.gamma_floor,
        gamma_cap: spec.gamma_cap,
    };
    if let Some(prev) = resume_from {
        if prev.variant != spec.variant || prev.n != n || prev.l != l {
            return Err(TrainError::BadInput(
                "resume model does not match dataset/spec dims".into(),
            ));
        }
        if prev.depth() > spec.depth {
            return Err(TrainError::BadInput(format!(
                "resume model has {} layers, spec wants {}",
                prev.depth(),
                spec.depth
            )));
        }
        model.layers = prev.layers.clone();
        model.gamma_floor = prev.gamma_floor;
        model.gamma_cap = prev.gamma_cap;
    }

    let shared = if dataset.shared_matrix {
        Some(SharedSystem::new(
            &dataset.samples[0].a,
            spec.variant,
            l,
        ))
    } else {
        None
    };

    let root = Rng::new(cfg.seed);
    let mut log = Vec::new();
    let start_layer = model.layers.len();

    for k in start_layer..spec.depth {
        let new_layer = if k == 0 {
            sbl_embedding_layer(spec.variant, n, l)
        } else {
            model.layers[k - 1].clone()
        };
        model.layers.push(new_layer);

        for phase in [1u8, 2u8] {
            observer(TrainEvent::PhaseStart {
                layer: k + 1,
                phase,
                model: &model,
            });
            let trainable: Range<usize> = if phase == 1 { k..k + 1 } else { 0..k + 1 };
            let mut opt = Optimizer::new(cfg.optimizer);
            let mut stream = root.split((k as u64) * 2 + (phase as u64 - 1));
            for step in 0..cfg.steps_per_phase {
                let indices: Vec<usize> = (0..cfg.batch_size)
                    .map(|_| stream.next_index(dataset.len()))
                    .collect();
                let arcs = layer_arcs(&model.layers[..k + 1]);
                let per_sample: Result<Vec<(f64, Gradients)>, TrainError> = if cfg.parallel {
                    indices
                        .par_iter()
                        .map(|&i| {
                            let sys = SampleSystem::for_sample(
                                &dataset.samples[i],
                                spec.variant,
                                cfg.solver_noise_var,
                                shared.as_ref(),
                            );
                            sample_loss_grad(
                                &arcs,
                                &trainable,
                                spec.gamma_floor,
                                spec.gamma_cap,
                                &sys,
                            )
                        })
                        .collect()
                } else {
                    indices
                        .iter()
                        .map(|&i| {
                            let sys = SampleSystem::for_sample(
                                &dataset.samples[i],
                                spec.variant,
                                cfg.solver_noise_var,
                                shared.as_ref(),
                            );
                            sample_loss_grad(
                                &arcs,
                                &trainable,
                                spec.gamma_floor,
                                spec.gamma_cap,
                                &sys,
                            )
                        })
                        .collect()
                };
                let per_sample = per_sample?;
                // reduce in sample order so parallel and serial agree bitwise
                let mut loss = 0.0;
                let mut grads = Gradients::default();
                for (l_s, g_s) in &per_sample {
                    loss += l_s;
                    grads.accumulate(g_s);
                }
                loss /= cfg.batch_size as f64;
                grads.scale(1.0 / cfg.batch_size as f64);
                if !loss.is_finite() {
                    return Err(TrainError::NonFiniteLoss {
                        layer: k + 1,
                        phase,
                        step,
                        loss,
                    });
                }
                for (key, delta) in opt.step(&grads) {
                    let p = &mut model.layers[key.layer];
                    let slot = match key.kind {
                        ParamKind::Weight => p.w.as_mut_slice(),
                        ParamKind::Bias => &mut p.b[..],
                    };
                    for (pv, d) in slot.iter_mut().zip(delta) {
                        *pv += d;
                    }
                }
                let record = StepRecord {
                    layer: k + 1,
                    phase,
                    step,
                    loss,
                };
                log.push(record);
                observer(TrainEvent::Step(record));
                if cfg.loss_floor_stop > 0.0 && loss < cfg.loss_floor_stop {
                    break;
                }
            }
        }
        observer(TrainEvent::LayerDone {
            layer: k + 1,
            model: &model,
        });
    }

    model.validate()?;
    Ok(TrainOutcome { model, log })
}
