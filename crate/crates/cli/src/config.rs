//! JSON experiment configuration. Every struct rejects unknown keys, and
//! `validate`/conversion methods check the cross-field invariants before any
//! work starts.

use crate::error::CliError;
use lsbl_core::datagen::{AmplitudeSpec, GenConfig, StructureKind, StructureSpec};
use lsbl_core::lsbl::Variant;
use lsbl_core::radar::{RadarConfig, TargetSpec, Waveform};
use lsbl_core::train::{OptimizerConfig, TrainConfig};
use serde::Deserialize;
use std::path::{Path, PathBuf};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub data: DataSection,
    #[serde(default)]
    pub model: Option<ModelSection>,
    #[serde(default)]
    pub train: Option<TrainSection>,
    #[serde(default)]
    pub eval: Option<EvalSection>,
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSection {
    Synthetic(SyntheticJson),
    Radar(RadarJson),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticJson {
    pub m: usize,
    pub n: usize,
    #[serde(default = "one")]
    pub l: usize,
    pub structure: StructureJson,
    pub amplitude: AmplitudeJson,
    #[serde(default)]
    pub noise_var: f64,
    #[serde(default)]
    pub per_sample_matrix: bool,
    pub count: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StructureJson {
    /// `unstructured`, `block_sparse`, `joint_sparse`, or `arbitrary_pattern`.
    pub kind: String,
    pub k_min: usize,
    pub k_max: usize,
    #[serde(default)]
    pub blocks: Option<usize>,
    #[serde(default)]
    pub resampled_per_column: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AmplitudeJson {
    /// `uniform_shell` or `unit_gaussian`.
    pub mode: String,
    #[serde(default)]
    pub lo: Option<f64>,
    #[serde(default)]
    pub hi: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadarJson {
    pub mt: usize,
    pub mr: usize,
    pub q: usize,
    pub n_r: usize,
    #[serde(default = "one")]
    pub n_d: usize,
    pub angles: AnglesJson,
    #[serde(default = "half")]
    pub spacing: f64,
    pub sweeps: usize,
    pub target: TargetJson,
    /// SNR range (dB) for randomly drawn training samples.
    #[serde(default = "default_train_snr")]
    pub train_snr_db: [f64; 2],
    /// Sample count for `generate` with radar data.
    #[serde(default)]
    pub count: Option<usize>,
    /// Fixed SNR for `generate` with radar data; omit for noiseless.
    #[serde(default)]
    pub snr_db: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnglesJson {
    List(Vec<f64>),
    Span { lo: f64, hi: f64, count: usize },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetJson {
    pub extent_min: usize,
    pub extent_max: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    /// `nw1` or `nw2`.
    pub variant: String,
    pub layers: usize,
    #[serde(default = "default_gamma_floor")]
    pub gamma_floor: f64,
    #[serde(default = "default_gamma_cap")]
    pub gamma_cap: f64,
    /// Model file; defaults to `<out_dir>/model.lsbl`.
    #[serde(default)]
    pub path: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub steps_per_phase: usize,
    pub batch_size: usize,
    #[serde(default)]
    pub optimizer: Option<OptimizerJson>,
    #[serde(default)]
    pub loss_floor_stop: f64,
    #[serde(default = "default_solver_noise")]
    pub solver_noise_var: f64,
    /// Dataset container consumed by `train` (synthetic experiments).
    #[serde(default)]
    pub dataset: Option<PathBuf>,
    /// Training-set size synthesized in memory by `radar`.
    #[serde(default = "default_train_samples")]
    pub train_samples: usize,
    /// Write `checkpoint_layer_<k>.lsbl` every this many layers; 0 disables.
    #[serde(default = "one")]
    pub checkpoint_every_layers: usize,
    /// Continue from a checkpointed model instead of starting fresh.
    #[serde(default)]
    pub resume_from: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerJson {
    /// `adam` or `sgd`.
    pub kind: String,
    #[serde(default)]
    pub rate: Option<f64>,
    #[serde(default)]
    pub beta1: Option<f64>,
    #[serde(default)]
    pub beta2: Option<f64>,
    #[serde(default)]
    pub eps: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    pub sweep: SweepJson,
    /// Test samples per sweep point (P).
    pub samples: usize,
    pub solvers: Vec<SolverJson>,
    #[serde(default = "default_solver_noise")]
    pub solver_noise_var: f64,
    /// Threshold fraction for the alternative support rule; omit for top-K.
    #[serde(default)]
    pub support_threshold: Option<f64>,
    /// Adds a noiseless point (labelled `inf`) to an SNR sweep.
    #[serde(default)]
    pub include_noiseless: bool,
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepJson {
    Sparsity(Vec<usize>),
    SnrDb(Vec<f64>),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverJson {
    /// `lsbl`, `sbl`, `msbl`, `pcsbl`, `omp`, `cosamp`, `ista`, `mmse_oracle`.
    pub kind: String,
    #[serde(default)]
    pub iterations: Option<usize>,
    #[serde(default)]
    pub model: Option<PathBuf>,
    #[serde(default)]
    pub beta: Option<f64>,
    #[serde(default)]
    pub a: Option<f64>,
    #[serde(default)]
    pub b: Option<f64>,
    #[serde(default)]
    pub lambdas: Option<Vec<f64>>,
    #[serde(default)]
    pub max_nonzeros: Option<usize>,
    #[serde(default)]
    pub name: Option<String>,
}

fn one() -> usize {
    1
}

fn half() -> f64 {
    0.5
}

fn default_train_snr() -> [f64; 2] {
    [0.0, 30.0]
}

fn default_gamma_floor() -> f64 {
    lsbl_core::lsbl::DEFAULT_GAMMA_FLOOR
}

fn default_gamma_cap() -> f64 {
    lsbl_core::lsbl::DEFAULT_GAMMA_CAP
}

fn default_solver_noise() -> f64 {
    1e-6
}

fn default_train_samples() -> usize {
    20_000
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("cannot read config {}: {e}", path.display())))?;
        let cfg: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Schema(format!("config {}: {e}", path.display())))?;
        Ok(cfg)
    }

    pub fn model_path(&self) -> Result<PathBuf, CliError> {
        let section = self
            .model
            .as_ref()
            .ok_or_else(|| CliError::Schema("config is missing the `model` section".into()))?;
        Ok(section
            .path
            .clone()
            .unwrap_or_else(|| self.out_dir.join("model.lsbl")))
    }
}

impl SyntheticJson {
    pub fn to_gen_config(&self) -> Result<GenConfig, CliError> {
        let s = &self.structure;
        let kind = match s.kind.as_str() {
            "unstructured" => StructureKind::Unstructured,
            "joint_sparse" => StructureKind::JointSparse,
            "block_sparse" => StructureKind::BlockSparse {
                blocks: s.blocks.ok_or_else(|| {
                    CliError::Schema("block_sparse structure needs `blocks`".into())
                })?,
            },
            "arbitrary_pattern" => StructureKind::ArbitraryPattern {
                resampled_per_column: s.resampled_per_column.ok_or_else(|| {
                    CliError::Schema(
                        "arbitrary_pattern structure needs `resampled_per_column`".into(),
                    )
                })?,
            },
            other => {
                return Err(CliError::Schema(format!(
                    "unknown structure kind `{other}`"
                )))
            }
        };
        if !matches!(kind, StructureKind::BlockSparse { .. }) && s.blocks.is_some() {
            return Err(CliError::Schema(
                "`blocks` only applies to block_sparse".into(),
            ));
        }
        if !matches!(kind, StructureKind::ArbitraryPattern { .. })
            && s.resampled_per_column.is_some()
        {
            return Err(CliError::Schema(
                "`resampled_per_column` only applies to arbitrary_pattern".into(),
            ));
        }
        let amplitude = self.amplitude.to_spec()?;
        let cfg = GenConfig {
            m: self.m,
            n: self.n,
            l: self.l,
            structure: StructureSpec {
                kind,
                k_min: s.k_min,
                k_max: s.k_max,
            },
            amplitude,
            noise_var: self.noise_var,
            per_sample_matrix: self.per_sample_matrix,
            count: self.count,
        };
        cfg.validate()
            .map_err(|e| CliError::Schema(e.to_string()))?;
        Ok(cfg)
    }
}

impl AmplitudeJson {
    pub fn to_spec(&self) -> Result<AmplitudeSpec, CliError> {
        match self.mode.as_str() {
            "uniform_shell" => {
                let (lo, hi) = (
                    self.lo
                        .ok_or_else(|| CliError::Schema("uniform_shell needs `lo`".into()))?,
                    self.hi
                        .ok_or_else(|| CliError::Schema("uniform_shell needs `hi`".into()))?,
                );
                Ok(AmplitudeSpec::UniformShell { lo, hi })
            }
            "unit_gaussian" => {
                if self.lo.is_some() || self.hi.is_some() {
                    return Err(CliError::Schema(
                        "unit_gaussian takes no shell bounds".into(),
                    ));
                }
                Ok(AmplitudeSpec::UnitGaussian)
            }
            other => Err(CliError::Schema(format!("unknown amplitude mode `{other}`"))),
        }
    }
}

impl RadarJson {
    pub fn to_radar_config(&self) -> Result<RadarConfig, CliError> {
        let angles_deg = match &self.angles {
            AnglesJson::List(list) => list.clone(),
            AnglesJson::Span { lo, hi, count } => {
                if *count < 2 {
                    return Err(CliError::Schema("angle span needs count >= 2".into()));
                }
                (0..*count)
                    .map(|i| lo + (hi - lo) * i as f64 / (*count - 1) as f64)
                    .collect()
            }
        };
        let cfg = RadarConfig {
            m_t: self.mt,
            m_r: self.mr,
            q: self.q,
            n_r: self.n_r,
            n_d: self.n_d,
            angles_deg,
            spacing: self.spacing,
            sweeps: self.sweeps,
            waveform: Waveform::Hadamard,
        };
        cfg.validate()
            .map_err(|e| CliError::Schema(e.to_string()))?;
        if self.train_snr_db[0] > self.train_snr_db[1] {
            return Err(CliError::Schema("train_snr_db range reversed".into()));
        }
        Ok(cfg)
    }

    pub fn to_target_spec(&self) -> TargetSpec {
        TargetSpec {
            extent_min: self.target.extent_min,
            extent_max: self.target.extent_max,
        }
    }
}

impl ModelSection {
    pub fn variant(&self) -> Result<Variant, CliError> {
        match self.variant.as_str() {
            "nw1" => Ok(Variant::Nw1),
            "nw2" => Ok(Variant::Nw2),
            other => Err(CliError::Schema(format!("unknown variant `{other}`"))),
        }
    }
}

impl TrainSection {
    pub fn to_train_config(&self, seed: u64, parallel: bool) -> Result<TrainConfig, CliError> {
        if self.steps_per_phase == 0 || self.batch_size == 0 {
            return Err(CliError::Schema(
                "steps_per_phase and batch_size must be >= 1".into(),
            ));
        }
        let optimizer = match &self.optimizer {
            None => OptimizerConfig::default(),
            Some(o) => match o.kind.as_str() {
                "adam" => OptimizerConfig::Adam {
                    rate: o.rate.unwrap_or(1e-3),
                    beta1: o.beta1.unwrap_or(0.9),
                    beta2: o.beta2.unwrap_or(0.999),
                    eps: o.eps.unwrap_or(1e-8),
                },
                "sgd" => {
                    if o.beta1.is_some() || o.beta2.is_some() || o.eps.is_some() {
                        return Err(CliError::Schema("sgd takes only `rate`".into()));
                    }
                    OptimizerConfig::Sgd {
                        rate: o.rate.unwrap_or(1e-3),
                    }
                }
                other => {
                    return Err(CliError::Schema(format!("unknown optimizer `{other}`")))
                }
            },
        };
        Ok(TrainConfig {
            steps_per_phase: self.steps_per_phase,
            batch_size: self.batch_size,
            optimizer,
            loss_floor_stop: self.loss_floor_stop,
            seed,
            solver_noise_var: self.solver_noise_var,
            parallel,
        })
    }
}
