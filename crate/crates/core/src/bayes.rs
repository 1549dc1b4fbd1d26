//! MAP estimation stage and the SBL / M-SBL / PC-SBL iterative solvers.
//!
//! All three solvers alternate the same parameter-free posterior computation
//! with a cheap per-coordinate variance update; they differ only in that
//! update. Variances are stored directly (gamma = 1/alpha), which is also the
//! quantity the learned network emits.

use crate::data::PosteriorEstimate;
use crate::mat::{self, Mat, MatError};
use std::ops::Deref;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BayesError {
    #[error(transparent)]
    Mat(#[from] MatError),
    #[error("gamma length {got} does not match dictionary columns {want}")]
    GammaLen { got: usize, want: usize },
    #[error("measurement rows {y_rows} do not match dictionary rows {a_rows}")]
    RhsRows { a_rows: usize, y_rows: usize },
    #[error("gamma entries must be finite and >= 0 (offender at {index}: {value})")]
    BadGamma { index: usize, value: f64 },
}

/// Per-coordinate prior variances, all finite and non-negative.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaVec(Vec<f64>);

impl GammaVec {
    pub fn new(v: Vec<f64>) -> Result<Self, BayesError> {
        for (index, &value) in v.iter().enumerate() {
            if !(value.is_finite() && value >= 0.0) {
                return Err(BayesError::BadGamma { index, value });
            }
        }
        Ok(GammaVec(v))
    }

    pub fn ones(n: usize) -> Self {
        GammaVec(vec![1.0; n])
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for GammaVec {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// EM loop control shared by the SBL-family solvers.
#[derive(Debug, Clone)]
pub struct SblConfig {
    pub iterations: usize,
    pub gamma_floor: f64,
    /// Variances below this are zeroed after each update; 0 disables.
    pub prune_threshold: f64,
    /// Stop once `max |delta gamma|` drops below this; `None` runs all
    /// iterations.
    pub early_stop_tol: Option<f64>,
}

impl Default for SblConfig {
    fn default() -> Self {
        SblConfig {
            iterations: 100,
            gamma_floor: 1e-12,
            prune_threshold: 0.0,
            early_stop_tol: None,
        }
    }
}

impl SblConfig {
    pub fn with_iterations(iterations: usize) -> Self {
        SblConfig {
            iterations,
            ..Default::default()
        }
    }
}

/// Pattern-coupled prior parameters. Defaults follow the PC-SBL convention:
/// a = 0.5, b = 1e-4, beta = 1.
#[derive(Debug, Clone)]
pub struct PcSblConfig {
    pub beta: f64,
    pub a: f64,
    pub b: f64,
    pub iterations: usize,
}

impl Default for PcSblConfig {
    fn default() -> Self {
        PcSblConfig {
            beta: 1.0,
            a: 0.5,
            b: 1e-4,
            iterations: 100,
        }
    }
}

impl PcSblConfig {
    pub fn with_iterations(iterations: usize) -> Self {
        PcSblConfig {
            iterations,
            ..Default::default()
        }
    }
}

/// Posterior mean and error-covariance diagonal for the Gaussian prior
/// `x ~ N(0, diag(gamma))`:
///
/// ```text
/// xhat = R A^T (A R A^T + s2 I)^{-1} Y          R = diag(gamma)
/// phi_i = gamma_i - [R A^T (A R A^T + s2 I)^{-1} A R]_{ii}
/// ```
///
/// The inner system is solved by Cholesky with one jittered retry.
pub fn map_estimate(
    a: &Mat,
    y: &Mat,
    gamma: &[f64],
    noise_var: f64,
) -> Result<PosteriorEstimate, BayesError> {
    let (m, n) = a.shape();
    if gamma.len() != n {
        return Err(BayesError::GammaLen {
            got: gamma.len(),
            want: n,
        });
    }
    if y.rows() != m {
        return Err(BayesError::RhsRows {
            a_rows: m,
            y_rows: y.rows(),
        });
    }
    // g = diag(gamma) A^T, so g^T = A diag(gamma)
    let mut g = Mat::zeros(n, m);
    for i in 0..n {
        let gi = gamma[i];
        for mm in 0..m {
            g.set(i, mm, gi * a.get(mm, i));
        }
    }
    let mut b = mat::matmul(a, &g)?;
    b.add_diag(noise_var);
    let factor = mat::cholesky_jittered(&b)?;
    let z = mat::solve_with_factor(&factor, y)?;
    let xhat = mat::matmul(&g, &z)?;
    let h = mat::solve_with_factor(&factor, &g.transpose())?;
    let mut phi_diag = Vec::with_capacity(n);
    for i in 0..n {
        let mut dot = 0.0;
        for mm in 0..m {
            dot += g.get(i, mm) * h.get(mm, i);
        }
        // mathematically in [0, gamma_i]; clip roundoff below zero
        phi_diag.push((gamma[i] - dot).max(0.0));
    }
    Ok(PosteriorEstimate::new(xhat, phi_diag))
}

/// SBL variance update: `gamma_i = x_i^2 + phi_ii`, floored.
pub fn sbl_update(prev: &PosteriorEstimate, gamma_floor: f64) -> GammaVec {
    assert_eq!(prev.xhat.cols(), 1, "sbl_update expects a single column");
    let v = prev
        .xhat
        .as_slice()
        .iter()
        .zip(&prev.phi_diag)
        .map(|(&x, &p)| (x * x + p).max(gamma_floor))
        .collect();
    GammaVec(v)
}

/// M-SBL row-variance update: `gamma_i = ||X_i.||^2 / L + phi_ii`, floored.
pub fn msbl_update(prev: &PosteriorEstimate, gamma_floor: f64) -> GammaVec {
    let l = prev.xhat.cols();
    let v = (0..prev.xhat.rows())
        .map(|i| {
            let row_energy: f64 = prev.xhat.row(i).iter().map(|x| x * x).sum();
            (row_energy / l as f64 + prev.phi_diag[i]).max(gamma_floor)
        })
        .collect();
    GammaVec(v)
}

/// Pattern-coupled update. Precisions come from the lower bound of the
/// feasible set, `alpha_i = a / (0.5 w_i + b)` with
/// `w_i = e_i + beta e_{i+1} + beta e_{i-1}`, `e_i = x_i^2 + phi_ii`;
/// the variance then couples neighbours again:
/// `gamma_i = (alpha_i + beta alpha_{i-1} + beta alpha_{i+1})^{-1}`,
/// with out-of-range alpha terms taken as zero.
pub fn pcsbl_update(prev: &PosteriorEstimate, cfg: &PcSblConfig) -> GammaVec {
    assert_eq!(prev.xhat.cols(), 1, "pcsbl_update expects a single column");
    let n = prev.xhat.rows();
    let x = prev.xhat.as_slice();
    let e: Vec<f64> = (0..n).map(|i| x[i] * x[i] + prev.phi_diag[i]).collect();
    let mut alpha = vec![0.0; n];
    for i in 0..n {
        let mut w = e[i];
        if i + 1 < n {
            w += cfg.beta * e[i + 1];
        }
        if i > 0 {
            w += cfg.beta * e[i - 1];
        }
        alpha[i] = cfg.a / (0.5 * w + cfg.b);
    }
    let v = (0..n)
        .map(|i| {
            let mut denom = alpha[i];
            if i > 0 {
                denom += cfg.beta * alpha[i - 1];
            }
            if i + 1 < n {
                denom += cfg.beta * alpha[i + 1];
            }
            1.0 / denom
        })
        .collect();
    GammaVec(v)
}

fn apply_prune(gamma: &mut GammaVec, threshold: f64) {
    if threshold > 0.0 {
        for g in gamma.0.iter_mut() {
            if *g < threshold {
                *g = 0.0;
            }
        }
    }
}

fn run_em(
    a: &Mat,
    y: &Mat,
    noise_var: f64,
    iterations: usize,
    early_stop_tol: Option<f64>,
    prune_threshold: f64,
    mut update: impl FnMut(&PosteriorEstimate) -> GammaVec,
) -> Result<PosteriorEstimate, BayesError> {
    assert!(iterations >= 1, "at least one EM iteration required");
    let mut gamma = GammaVec::ones(a.cols());
    let mut est = map_estimate(a, y, &gamma, noise_var)?;
    for _ in 1..iterations {
        let mut next = update(&est);
        apply_prune(&mut next, prune_threshold);
        let delta = gamma
            .iter()
            .zip(next.iter())
            .fold(0.0_f64, |m, (g0, g1)| m.max((g0 - g1).abs()));
        gamma = next;
        est = map_estimate(a, y, &gamma, noise_var)?;
        if let Some(tol) = early_stop_tol {
            if delta < tol {
                break;
            }
        }
    }
    Ok(est)
}

/// SBL: `cfg.iterations` rounds of MAP + update starting from gamma = 1.
pub fn run_sbl(
    a: &Mat,
    y: &Mat,
    noise_var: f64,
    cfg: &SblConfig,
) -> Result<PosteriorEstimate, BayesError> {
    run_em(
        a,
        y,
        noise_var,
        cfg.iterations,
        cfg.early_stop_tol,
        cfg.prune_threshold,
        |est| sbl_update(est, cfg.gamma_floor),
    )
}

/// M-SBL on an `M x L` measurement block.
pub fn run_msbl(
    a: &Mat,
    y: &Mat,
    noise_var: f64,
    cfg: &SblConfig,
) -> Result<PosteriorEstimate, BayesError> {
    run_em(
        a,
        y,
        noise_var,
        cfg.iterations,
        cfg.early_stop_tol,
        cfg.prune_threshold,
        |est| msbl_update(est, cfg.gamma_floor),
    )
}

/// PC-SBL on a single measurement vector.
pub fn run_pcsbl(
    a: &Mat,
    y: &Mat,
    noise_var: f64,
    cfg: &PcSblConfig,
) -> Result<PosteriorEstimate, BayesError> {
    run_em(a, y, noise_var, cfg.iterations, None, 0.0, |est| {
        pcsbl_update(est, cfg)
    })
}
