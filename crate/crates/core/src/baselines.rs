//! Non-Bayesian comparison solvers: OMP, CoSaMP, and basis pursuit realized
//! as iterative shrinkage-thresholding on the lasso objective.
//!
//! Columns are left unnormalized; atom selection divides correlations by the
//! column norms, nothing else touches the scaling.

use crate::mat::{self, Mat, MatError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error(transparent)]
    Mat(#[from] MatError),
    #[error("rhs has {y_rows} rows, dictionary has {a_rows}")]
    RhsRows { a_rows: usize, y_rows: usize },
}

#[derive(Debug, Clone)]
pub struct GreedyConfig {
    pub max_nonzeros: usize,
    pub residual_tol: f64,
}

#[derive(Debug, Clone)]
pub struct IstaConfig {
    pub lambda: f64,
    pub iterations: usize,
    pub step_size: f64,
}

impl IstaConfig {
    /// Picks a step below `1 / ||A||_2^2` by power iteration with a safety
    /// margin, so the objective is guaranteed non-increasing.
    pub fn with_default_step(a: &Mat, lambda: f64, iterations: usize) -> Self {
        let sq = spectral_norm_sq(a);
        IstaConfig {
            lambda,
            iterations,
            step_size: 1.0 / (1.05 * sq.max(f64::MIN_POSITIVE)),
        }
    }
}

/// Largest squared singular value, estimated by 100 power iterations on
/// `A^T A` from a fixed starting vector.
pub fn spectral_norm_sq(a: &Mat) -> f64 {
    let n = a.cols();
    let mut v = Mat::from_vec(n, 1, vec![1.0 / (n as f64).sqrt(); n]).unwrap();
    let mut lambda = 0.0;
    for _ in 0..100 {
        let av = mat::matmul(a, &v).unwrap();
        let atav = mat::matmul(&a.transpose(), &av).unwrap();
        let norm = atav.frob_norm();
        if norm == 0.0 {
            return 0.0;
        }
        lambda = norm / v.frob_norm();
        v = atav.scale(1.0 / norm);
    }
    lambda
}

fn check_rhs(a: &Mat, y: &Mat) -> Result<(), BaselineError> {
    if a.rows() != y.rows() {
        return Err(BaselineError::RhsRows {
            a_rows: a.rows(),
            y_rows: y.rows(),
        });
    }
    Ok(())
}

fn column_norms(a: &Mat) -> Vec<f64> {
    (0..a.cols())
        .map(|j| {
            (0..a.rows())
                .map(|i| a.get(i, j) * a.get(i, j))
                .sum::<f64>()
                .sqrt()
        })
        .collect()
}

/// Least-squares coefficients on the chosen columns via the normal equations,
/// solved with the jittered Cholesky path.
fn ls_on_support(a: &Mat, y: &Mat, support: &[usize]) -> Result<Vec<f64>, BaselineError> {
    let m = a.rows();
    let s = support.len();
    let mut asub = Mat::zeros(m, s);
    for (c, &j) in support.iter().enumerate() {
        for i in 0..m {
            asub.set(i, c, a.get(i, j));
        }
    }
    let gram = mat::matmul(&asub.transpose(), &asub)?;
    let rhs = mat::matmul(&asub.transpose(), y)?;
    let coef = mat::solve_spd_jittered(&gram, &rhs)?;
    Ok(coef.into_vec())
}

fn scatter(n: usize, support: &[usize], coef: &[f64]) -> Vec<f64> {
    let mut x = vec![0.0; n];
    for (&j, &c) in support.iter().zip(coef) {
        x[j] = c;
    }
    x
}

fn residual(a: &Mat, y: &Mat, x: &[f64]) -> Mat {
    let xm = Mat::col_vec(x);
    let ax = mat::matmul(a, &xm).unwrap();
    y.sub(&ax).unwrap()
}

/// Orthogonal matching pursuit with least-squares refit at every step.
pub fn omp(a: &Mat, y: &Mat, cfg: &GreedyConfig) -> Result<Vec<f64>, BaselineError> {
    check_rhs(a, y)?;
    let n = a.cols();
    let norms = column_norms(a);
    let mut support: Vec<usize> = Vec::new();
    let mut x = vec![0.0; n];
    let mut r = y.clone();
    while support.len() < cfg.max_nonzeros && r.frob_norm() > cfg.residual_tol {
        let corr = mat::matmul(&a.transpose(), &r)?;
        let mut best = None;
        let mut best_val = 0.0;
        for j in 0..n {
            if support.contains(&j) || norms[j] == 0.0 {
                continue;
            }
            let v = corr.get(j, 0).abs() / norms[j];
            if v > best_val {
                best_val = v;
                best = Some(j);
            }
        }
        let Some(j) = best else { break }; // residual orthogonal to all atoms
        if best_val == 0.0 {
            break;
        }
        support.push(j);
        let coef = ls_on_support(a, y, &support)?;
        x = scatter(n, &support, &coef);
        r = residual(a, y, &x);
    }
    Ok(x)
}

/// CoSaMP: merge the `2k` strongest proxy atoms with the current support,
/// least-squares on the merged set, prune to the `k` largest.
pub fn cosamp(a: &Mat, y: &Mat, k: usize, iterations: usize) -> Result<Vec<f64>, BaselineError> {
    check_rhs(a, y)?;
    let n = a.cols();
    if k == 0 {
        return Ok(vec![0.0; n]);
    }
    let mut x = vec![0.0; n];
    let mut support: Vec<usize> = Vec::new();
    let mut r = y.clone();
    for _ in 0..iterations {
        if r.frob_norm() <= 1e-12 * y.frob_norm().max(1.0) {
            break;
        }
        let proxy = mat::matmul(&a.transpose(), &r)?;
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| {
            proxy
                .get(j, 0)
                .abs()
                .partial_cmp(&proxy.get(i, 0).abs())
                .unwrap()
                .then(i.cmp(&j))
        });
        let mut merged = support.clone();
        for &j in order.iter().take(2 * k) {
            if !merged.contains(&j) {
                merged.push(j);
            }
        }
        merged.sort_unstable();
        let coef = ls_on_support(a, y, &merged)?;
        let mut ranked: Vec<(usize, f64)> = merged.iter().copied().zip(coef).collect();
        ranked.sort_by(|l, r| r.1.abs().partial_cmp(&l.1.abs()).unwrap().then(l.0.cmp(&r.0)));
        ranked.truncate(k);
        support = ranked.iter().map(|(j, _)| *j).collect();
        support.sort_unstable();
        x = vec![0.0; n];
        for (j, c) in ranked {
            x[j] = c;
        }
        r = residual(a, y, &x);
    }
    Ok(x)
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// `0.5 ||y - Ax||^2 + lambda ||x||_1`, the objective ISTA descends.
pub fn lasso_objective(a: &Mat, y: &Mat, x: &[f64], lambda: f64) -> f64 {
    let r = residual(a, y, x);
    0.5 * r.sum_sq() + lambda * x.iter().map(|v| v.abs()).sum::<f64>()
}

/// Iterative shrinkage-thresholding for the lasso objective.
pub fn ista(a: &Mat, y: &Mat, cfg: &IstaConfig) -> Result<Vec<f64>, BaselineError> {
    check_rhs(a, y)?;
    let n = a.cols();
    let mut x = vec![0.0; n];
    let at = a.transpose();
    for _ in 0..cfg.iterations {
        let r = residual(a, y, &x);
        let grad = mat::matmul(&at, &r)?;
        for j in 0..n {
            x[j] = soft_threshold(x[j] + cfg.step_size * grad.get(j, 0), cfg.step_size * cfg.lambda);
        }
    }
    Ok(x)
}
