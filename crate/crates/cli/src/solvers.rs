//! Solver dispatch for evaluation sweeps: every solver takes a sample and
//! returns an `N x L` estimate, and a batch evaluation reduces those to
//! RMSE and failure rate under a common support rule.

use crate::config::SolverJson;
use crate::error::CliError;
use lsbl_core::baselines::{self, GreedyConfig, IstaConfig};
use lsbl_core::bayes::{self, PcSblConfig, SblConfig};
use lsbl_core::data::Sample;
use lsbl_core::lsbl::{self, LsblModel};
use lsbl_core::mat::Mat;
use lsbl_core::metrics::{self, SupportRule};
use lsbl_core::radar;
use rayon::prelude::*;

#[derive(Debug, Clone)]
pub enum SolverSpec {
    Lsbl { model: LsblModel, label: String },
    Sbl { iterations: usize, label: String },
    Msbl { iterations: usize, label: String },
    Pcsbl { cfg: PcSblConfig, label: String },
    Omp { max_nonzeros: Option<usize>, label: String },
    Cosamp { iterations: usize, label: String },
    Ista { lambdas: Vec<f64>, iterations: usize, label: String },
    MmseOracle { label: String },
}

impl SolverSpec {
    pub fn label(&self) -> &str {
        match self {
            SolverSpec::Lsbl { label, .. }
            | SolverSpec::Sbl { label, .. }
            | SolverSpec::Msbl { label, .. }
            | SolverSpec::Pcsbl { label, .. }
            | SolverSpec::Omp { label, .. }
            | SolverSpec::Cosamp { label, .. }
            | SolverSpec::Ista { label, .. }
            | SolverSpec::MmseOracle { label } => label,
        }
    }

    pub fn from_json(json: &SolverJson) -> Result<SolverSpec, CliError> {
        let named = |default: String| json.name.clone().unwrap_or(default);
        match json.kind.as_str() {
            "lsbl" => {
                let path = json.model.as_ref().ok_or_else(|| {
                    CliError::Schema("lsbl solver needs a `model` path".into())
                })?;
                let model = lsbl::load_model(path)?;
                Ok(SolverSpec::Lsbl {
                    model,
                    label: named("lsbl".into()),
                })
            }
            "sbl" => {
                let iterations = json.iterations.unwrap_or(100);
                Ok(SolverSpec::Sbl {
                    iterations,
                    label: named(format!("sbl_{iterations}")),
                })
            }
            "msbl" => {
                let iterations = json.iterations.unwrap_or(100);
                Ok(SolverSpec::Msbl {
                    iterations,
                    label: named(format!("msbl_{iterations}")),
                })
            }
            "pcsbl" => {
                let iterations = json.iterations.unwrap_or(100);
                let mut cfg = PcSblConfig::with_iterations(iterations);
                if let Some(beta) = json.beta {
                    cfg.beta = beta;
                }
                if let Some(a) = json.a {
                    cfg.a = a;
                }
                if let Some(b) = json.b {
                    cfg.b = b;
                }
                Ok(SolverSpec::Pcsbl {
                    cfg,
                    label: named(format!("pcsbl_{iterations}")),
                })
            }
            "omp" => Ok(SolverSpec::Omp {
                max_nonzeros: json.max_nonzeros,
                label: named("omp".into()),
            }),
            "cosamp" => {
                let iterations = json.iterations.unwrap_or(20);
                Ok(SolverSpec::Cosamp {
                    iterations,
                    label: named(format!("cosamp_{iterations}")),
                })
            }
            "ista" => {
                let lambdas = json
                    .lambdas
                    .clone()
                    .unwrap_or_else(|| vec![0.01, 0.05, 0.1, 0.2]);
                if lambdas.is_empty() {
                    return Err(CliError::Schema("ista needs a non-empty lambda grid".into()));
                }
                Ok(SolverSpec::Ista {
                    lambdas,
                    iterations: json.iterations.unwrap_or(200),
                    label: named("ista".into()),
                })
            }
            "mmse_oracle" => Ok(SolverSpec::MmseOracle {
                label: named("mmse_oracle".into()),
            }),
            other => Err(CliError::Schema(format!("unknown solver `{other}`"))),
        }
    }
}

fn row_support(x: &Mat) -> Vec<usize> {
    (0..x.rows())
        .filter(|&i| x.row(i).iter().any(|v| *v != 0.0))
        .collect()
}

fn effective_noise(sample: &Sample, solver_noise_var: f64) -> f64 {
    if sample.noise_var > 0.0 {
        sample.noise_var
    } else {
        solver_noise_var
    }
}

/// Runs one solver on one sample, returning an `N x L` estimate.
pub fn solve_one(
    spec: &SolverSpec,
    sample: &Sample,
    solver_noise_var: f64,
) -> Result<Mat, CliError> {
    let s2 = effective_noise(sample, solver_noise_var);
    let (n, l) = (sample.n(), sample.l());
    match spec {
        SolverSpec::Lsbl { model, .. } => {
            Ok(lsbl::forward_x(model, &sample.a, &sample.y, s2)?)
        }
        SolverSpec::Sbl { iterations, .. } => {
            let cfg = SblConfig::with_iterations(*iterations);
            per_column(sample, |yc| {
                Ok(bayes::run_sbl(&sample.a, yc, s2, &cfg)?.xhat)
            })
        }
        SolverSpec::Msbl { iterations, .. } => {
            let cfg = SblConfig::with_iterations(*iterations);
            Ok(bayes::run_msbl(&sample.a, &sample.y, s2, &cfg)?.xhat)
        }
        SolverSpec::Pcsbl { cfg, .. } => per_column(sample, |yc| {
            Ok(bayes::run_pcsbl(&sample.a, yc, s2, cfg)?.xhat)
        }),
        SolverSpec::Omp { max_nonzeros, .. } => {
            let k = max_nonzeros.unwrap_or_else(|| row_support(&sample.x).len());
            let cfg = GreedyConfig {
                max_nonzeros: k,
                residual_tol: 1e-9,
            };
            per_column(sample, |yc| {
                Ok(Mat::col_vec(&baselines::omp(&sample.a, yc, &cfg)?))
            })
        }
        SolverSpec::Cosamp { iterations, .. } => {
            let k = row_support(&sample.x).len();
            per_column(sample, |yc| {
                Ok(Mat::col_vec(&baselines::cosamp(
                    &sample.a, yc, k, *iterations,
                )?))
            })
        }
        SolverSpec::Ista {
            lambdas,
            iterations,
            ..
        } => {
            // single-lambda path; the grid is swept at batch level
            let cfg = IstaConfig::with_default_step(&sample.a, lambdas[0], *iterations);
            per_column(sample, |yc| {
                Ok(Mat::col_vec(&baselines::ista(&sample.a, yc, &cfg)?))
            })
        }
        SolverSpec::MmseOracle { .. } => {
            let support = row_support(&sample.x);
            if support.is_empty() {
                return Ok(Mat::zeros(n, l));
            }
            Ok(radar::mmse_known_support(
                &sample.a,
                &sample.y,
                &support,
                sample.noise_var,
            )?)
        }
    }
}

fn per_column(
    sample: &Sample,
    mut solve: impl FnMut(&Mat) -> Result<Mat, CliError>,
) -> Result<Mat, CliError> {
    let (n, l) = (sample.n(), sample.l());
    if l == 1 {
        return solve(&sample.y);
    }
    let mut out = Mat::zeros(n, l);
    for c in 0..l {
        let yc = Mat::col_vec(&sample.y.col(c));
        let xc = solve(&yc)?;
        for i in 0..n {
            out.set(i, c, xc.get(i, 0));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy)]
pub struct EvalPoint {
    pub rmse: f64,
    pub failure_rate: f64,
    pub samples: usize,
}

fn batch_estimates(
    spec: &SolverSpec,
    samples: &[Sample],
    solver_noise_var: f64,
    parallel: bool,
) -> Result<Vec<Mat>, CliError> {
    if parallel {
        samples
            .par_iter()
            .map(|s| solve_one(spec, s, solver_noise_var))
            .collect()
    } else {
        samples
            .iter()
            .map(|s| solve_one(spec, s, solver_noise_var))
            .collect()
    }
}

fn score(
    samples: &[Sample],
    estimates: &[Mat],
    rule: SupportRule,
) -> Result<EvalPoint, CliError> {
    let truth: Vec<Mat> = samples.iter().map(|s| s.x.clone()).collect();
    let rmse = metrics::rmse(&truth, estimates)?;
    let mut probs = Vec::with_capacity(samples.len());
    for (s, e) in samples.iter().zip(estimates) {
        let (tv, ev) = if s.l() > 1 {
            (metrics::row_magnitudes(&s.x), metrics::row_magnitudes(e))
        } else {
            (s.x.col(0), e.col(0))
        };
        probs.push(metrics::support_prob(&tv, &ev, rule)?);
    }
    Ok(EvalPoint {
        rmse: rmse.value,
        failure_rate: metrics::failure_rate(&probs)?,
        samples: samples.len(),
    })
}

/// Evaluates one solver on a batch. ISTA sweeps its lambda grid and reports
/// the grid point with the best RMSE.
pub fn evaluate_solver(
    spec: &SolverSpec,
    samples: &[Sample],
    solver_noise_var: f64,
    rule: SupportRule,
    parallel: bool,
) -> Result<EvalPoint, CliError> {
    if let SolverSpec::Ista {
        lambdas,
        iterations,
        label,
    } = spec
    {
        let mut best: Option<EvalPoint> = None;
        for &lambda in lambdas {
            let one = SolverSpec::Ista {
                lambdas: vec![lambda],
                iterations: *iterations,
                label: label.clone(),
            };
            let est = batch_estimates(&one, samples, solver_noise_var, parallel)?;
            let point = score(samples, &est, rule)?;
            if best.map_or(true, |b| point.rmse < b.rmse) {
                best = Some(point);
            }
        }
        return Ok(best.expect("non-empty lambda grid"));
    }
    let est = batch_estimates(spec, samples, solver_noise_var, parallel)?;
    score(samples, &est, rule)
}
