//! Shared domain types threaded through generation, solving, and training.

use crate::mat::Mat;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("sample dimensions inconsistent: A is {a_rows}x{a_cols}, X is {x_rows}x{x_cols}, Y is {y_rows}x{y_cols}")]
    Inconsistent {
        a_rows: usize,
        a_cols: usize,
        x_rows: usize,
        x_cols: usize,
        y_rows: usize,
        y_cols: usize,
    },
    #[error("noise variance must be finite and >= 0, got {0}")]
    BadNoiseVar(f64),
    #[error("dataset must be non-empty")]
    Empty,
    #[error("sample {index} has dims ({m}, {n}, {l}), dataset has ({m0}, {n0}, {l0})")]
    MixedDims {
        index: usize,
        m: usize,
        n: usize,
        l: usize,
        m0: usize,
        n0: usize,
        l0: usize,
    },
}

/// One measurement instance: `Y = A X + N` with known noise variance.
///
/// The measurement matrix is reference-counted so datasets sharing one `A`
/// across many samples stay cheap to hold in memory.
#[derive(Debug, Clone)]
pub struct Sample {
    pub a: Arc<Mat>,
    pub x: Mat,
    pub y: Mat,
    pub noise_var: f64,
}

impl Sample {
    pub fn new(a: Arc<Mat>, x: Mat, y: Mat, noise_var: f64) -> Result<Self, DataError> {
        if !(noise_var.is_finite() && noise_var >= 0.0) {
            return Err(DataError::BadNoiseVar(noise_var));
        }
        if a.cols() != x.rows() || a.rows() != y.rows() || x.cols() != y.cols() {
            return Err(DataError::Inconsistent {
                a_rows: a.rows(),
                a_cols: a.cols(),
                x_rows: x.rows(),
                x_cols: x.cols(),
                y_rows: y.rows(),
                y_cols: y.cols(),
            });
        }
        Ok(Sample { a, x, y, noise_var })
    }

    pub fn m(&self) -> usize {
        self.a.rows()
    }

    pub fn n(&self) -> usize {
        self.a.cols()
    }

    pub fn l(&self) -> usize {
        self.x.cols()
    }
}

/// Ordered collection of samples with common dimensions.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub shared_matrix: bool,
}

impl Dataset {
    pub fn new(samples: Vec<Sample>, shared_matrix: bool) -> Result<Self, DataError> {
        if samples.is_empty() {
            return Err(DataError::Empty);
        }
        let (m0, n0, l0) = (samples[0].m(), samples[0].n(), samples[0].l());
        for (index, s) in samples.iter().enumerate() {
            if (s.m(), s.n(), s.l()) != (m0, n0, l0) {
                return Err(DataError::MixedDims {
                    index,
                    m: s.m(),
                    n: s.n(),
                    l: s.l(),
                    m0,
                    n0,
                    l0,
                });
            }
        }
        Ok(Dataset {
            samples,
            shared_matrix,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// (M, N, L) common to every sample.
    pub fn dims(&self) -> (usize, usize, usize) {
        let s = &self.samples[0];
        (s.m(), s.n(), s.l())
    }
}

/// Posterior mean and the diagonal of the error covariance, threaded between
/// solver iterations and network layers.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorEstimate {
    pub xhat: Mat,
    pub phi_diag: Vec<f64>,
}

impl PosteriorEstimate {
    pub fn new(xhat: Mat, phi_diag: Vec<f64>) -> Self {
        debug_assert_eq!(xhat.rows(), phi_diag.len());
        debug_assert!(phi_diag.iter().all(|v| *v >= 0.0));
        PosteriorEstimate { xhat, phi_diag }
    }

    /// Zero estimate with unit variances; the conventional starting point.
    pub fn initial(rows: usize, cols: usize) -> Self {
        PosteriorEstimate {
            xhat: Mat::zeros(rows, cols),
            phi_diag: vec![1.0; rows],
        }
    }

    /// Reinterprets a stacked `NL x 1` estimate as an `N x L` matrix. The
    /// stacking is `vec(X^T)`, which is exactly row-major `X`, so this is a
    /// relabeling of dimensions.
    pub fn stacked_as_matrix(&self, n: usize, l: usize) -> Mat {
        assert_eq!(self.xhat.rows(), n * l, "stacked estimate length mismatch");
        assert_eq!(self.xhat.cols(), 1);
        self.xhat.reshape(n, l).expect("same length")
    }
}
