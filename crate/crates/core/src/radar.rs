//! Extended-target MIMO radar: dictionary construction over a
//! doppler/range/angle grid, real lifting of the complex model, sweep
//! synthesis at a target SNR, and the known-support MMSE oracle.
//!
//! The dictionary column for bin (d, r, a) is
//! `u = vec(b(theta_a) a^T(theta_a) S~_d J_r)`: transmit waveforms are
//! doppler shifted, zero-padded over the range window, delayed by the range
//! bin, and projected through both array responses. Columns are ordered with
//! the angle index fastest, then range, then doppler.

use crate::data::Sample;
use crate::datagen::GenError;
use crate::mat::{self, Mat, MatError};
use crate::rng::Rng;
use std::f64::consts::PI;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RadarError {
    #[error("invalid radar config: {0}")]
    BadConfig(String),
    #[error("Hadamard order {0} unsupported (need a power of two)")]
    BadHadamardOrder(usize),
    #[error("shift index {r} out of range 1..={dim}")]
    BadShift { r: usize, dim: usize },
    #[error("cannot place a {extent}-bin target in {bins} bins")]
    TargetTooWide { extent: usize, bins: usize },
    #[error(transparent)]
    Mat(#[from] MatError),
    #[error(transparent)]
    Gen(#[from] GenError),
}

/// Pair of equally-shaped real matrices holding a complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMat {
    pub re: Mat,
    pub im: Mat,
}

impl ComplexMat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        ComplexMat {
            re: Mat::zeros(rows, cols),
            im: Mat::zeros(rows, cols),
        }
    }

    pub fn from_real(re: Mat) -> Self {
        let im = Mat::zeros(re.rows(), re.cols());
        ComplexMat { re, im }
    }

    pub fn shape(&self) -> (usize, usize) {
        self.re.shape()
    }

    pub fn matmul(&self, other: &ComplexMat) -> Result<ComplexMat, MatError> {
        let rr = mat::matmul(&self.re, &other.re)?;
        let ii = mat::matmul(&self.im, &other.im)?;
        let ri = mat::matmul(&self.re, &other.im)?;
        let ir = mat::matmul(&self.im, &other.re)?;
        Ok(ComplexMat {
            re: rr.sub(&ii)?,
            im: ri.add(&ir)?,
        })
    }

    /// Column-stacking `vec()` of the matrix.
    pub fn vec(&self) -> ComplexMat {
        let (rows, cols) = self.shape();
        let mut re = Vec::with_capacity(rows * cols);
        let mut im = Vec::with_capacity(rows * cols);
        for c in 0..cols {
            for r in 0..rows {
                re.push(self.re.get(r, c));
                im.push(self.im.get(r, c));
            }
        }
        ComplexMat {
            re: Mat::from_vec(rows * cols, 1, re).unwrap(),
            im: Mat::from_vec(rows * cols, 1, im).unwrap(),
        }
    }

    pub fn max_abs_diff(&self, other: &ComplexMat) -> f64 {
        self.re
            .max_abs_diff(&other.re)
            .max(self.im.max_abs_diff(&other.im))
    }
}

/// Transmit waveform selection.
#[derive(Debug, Clone)]
pub enum Waveform {
    /// First `m_t` rows of the Sylvester Hadamard matrix of order `q`.
    Hadamard,
    /// Explicit `m_t x q` complex waveform matrix.
    Custom(ComplexMat),
}

#[derive(Debug, Clone)]
pub struct RadarConfig {
    pub m_t: usize,
    pub m_r: usize,
    /// Code length Q.
    pub q: usize,
    pub n_r: usize,
    pub n_d: usize,
    /// Look angles in degrees, strictly increasing; its length is N_a.
    pub angles_deg: Vec<f64>,
    /// Element spacing in wavelengths for both arrays.
    pub spacing: f64,
    /// Radar sweeps L.
    pub sweeps: usize,
    pub waveform: Waveform,
}

impl RadarConfig {
    pub fn n_a(&self) -> usize {
        self.angles_deg.len()
    }

    /// Complex dictionary rows: `M_c = M_r (Q + N_r - 1)`.
    pub fn m_c(&self) -> usize {
        self.m_r * (self.q + self.n_r - 1)
    }

    /// Complex dictionary columns: `N_c = N_a N_d N_r`.
    pub fn n_c(&self) -> usize {
        self.n_a() * self.n_d * self.n_r
    }

    pub fn validate(&self) -> Result<(), RadarError> {
        let bad = |m: String| Err(RadarError::BadConfig(m));
        if self.m_t == 0 || self.m_r == 0 || self.q == 0 || self.n_r == 0 || self.n_d == 0 {
            return bad("antenna counts, code length and bin counts must be >= 1".into());
        }
        if self.angles_deg.is_empty() {
            return bad("need at least one look angle".into());
        }
        if self.angles_deg.windows(2).any(|w| w[0] >= w[1]) {
            return bad("angles must be strictly increasing".into());
        }
        if self.sweeps == 0 {
            return bad("need at least one sweep".into());
        }
        if !(self.spacing.is_finite() && self.spacing > 0.0) {
            return bad(format!("spacing must be positive, got {}", self.spacing));
        }
        match &self.waveform {
            Waveform::Hadamard => {
                if self.q < self.m_t {
                    return bad(format!(
                        "Hadamard code length {} shorter than {} transmitters",
                        self.q, self.m_t
                    ));
                }
                hadamard(self.q)?;
            }
            Waveform::Custom(w) => {
                if w.shape() != (self.m_t, self.q) {
                    return bad(format!(
                        "custom waveform must be {}x{}, got {}x{}",
                        self.m_t,
                        self.q,
                        w.shape().0,
                        w.shape().1
                    ));
                }
            }
        }
        Ok(())
    }

    /// The paper's experiment geometry: 2 transmitters, 10 receivers, length-2
    /// Hadamard code, 10 angle bins spanning [-45, 45] degrees, 5 range bins,
    /// one doppler bin, half-wavelength spacing, 2 sweeps.
    pub fn reference() -> Self {
        let n_a = 10;
        let angles_deg = (0..n_a)
            .map(|i| -45.0 + 90.0 * i as f64 / (n_a - 1) as f64)
            .collect();
        RadarConfig {
            m_t: 2,
            m_r: 10,
            q: 2,
            n_r: 5,
            n_d: 1,
            angles_deg,
            spacing: 0.5,
            sweeps: 2,
            waveform: Waveform::Hadamard,
        }
    }
}

/// Compiled dictionary: complex and the real-lifted form
/// `[[Re, -Im], [Im, Re]]`.
#[derive(Debug, Clone)]
pub struct RadarScene {
    pub config: RadarConfig,
    pub a_complex: ComplexMat,
    pub a_real: Arc<Mat>,
}

/// Sylvester Hadamard matrix of a power-of-two order.
pub fn hadamard(order: usize) -> Result<Mat, RadarError> {
    if order == 0 || !order.is_power_of_two() {
        return Err(RadarError::BadHadamardOrder(order));
    }
    let mut h = Mat::from_vec(1, 1, vec![1.0]).unwrap();
    let mut size = 1;
    while size < order {
        let mut next = Mat::zeros(2 * size, 2 * size);
        for i in 0..size {
            for j in 0..size {
                let v = h.get(i, j);
                next.set(i, j, v);
                next.set(i, j + size, v);
                next.set(i + size, j, v);
                next.set(i + size, j + size, -v);
            }
        }
        h = next;
        size *= 2;
    }
    Ok(h)
}

/// `psi(omega) = [1, e^{j w}, ..., e^{j (q-1) w}]` as a q x 1 complex vector.
pub fn doppler_vector(q: usize, omega: f64) -> ComplexMat {
    assert!(q >= 1);
    let re = (0..q).map(|k| (k as f64 * omega).cos()).collect();
    let im = (0..q).map(|k| (k as f64 * omega).sin()).collect();
    ComplexMat {
        re: Mat::from_vec(q, 1, re).unwrap(),
        im: Mat::from_vec(q, 1, im).unwrap(),
    }
}

/// Uniform-linear-array response `e^{j 2 pi spacing k sin(theta)}`, phase
/// referenced at element 0.
pub fn steering_vector(count: usize, spacing: f64, theta_deg: f64) -> ComplexMat {
    assert!(count >= 1);
    let phase = 2.0 * PI * spacing * theta_deg.to_radians().sin();
    let re = (0..count).map(|k| (k as f64 * phase).cos()).collect();
    let im = (0..count).map(|k| (k as f64 * phase).sin()).collect();
    ComplexMat {
        re: Mat::from_vec(count, 1, re).unwrap(),
        im: Mat::from_vec(count, 1, im).unwrap(),
    }
}

/// Range-delay selection matrix: ones on the `(r-1)`-th superdiagonal, so
/// right-multiplying `S J_r` delays the waveform rows by `r - 1` samples.
/// `J_1` is the identity.
pub fn shift_matrix(dim: usize, r: usize) -> Result<Mat, RadarError> {
    if r < 1 || r > dim {
        return Err(RadarError::BadShift { r, dim });
    }
    let mut j = Mat::zeros(dim, dim);
    for i in 0..=dim - r {
        j.set(i, i + r - 1, 1.0);
    }
    Ok(j)
}

/// Builds the complex dictionary and its real lifting.
pub fn build_dictionary(cfg: &RadarConfig) -> Result<RadarScene, RadarError> {
    cfg.validate()?;
    let window = cfg.q + cfg.n_r - 1;
    let m_c = cfg.m_c();
    let n_c = cfg.n_c();

    let base_wave = match &cfg.waveform {
        Waveform::Hadamard => {
            let h = hadamard(cfg.q)?;
            let mut w = ComplexMat::zeros(cfg.m_t, cfg.q);
            for i in 0..cfg.m_t {
                for j in 0..cfg.q {
                    w.re.set(i, j, h.get(i, j));
                }
            }
            w
        }
        Waveform::Custom(w) => w.clone(),
    };

    let omegas: Vec<f64> = if cfg.n_d == 1 {
        vec![0.0]
    } else {
        (0..cfg.n_d)
            .map(|d| -PI + 2.0 * PI * d as f64 / cfg.n_d as f64)
            .collect()
    };

    // steering vectors per angle
    let rx: Vec<ComplexMat> = cfg
        .angles_deg
        .iter()
        .map(|&t| steering_vector(cfg.m_r, cfg.spacing, t))
        .collect();
    let tx: Vec<ComplexMat> = cfg
        .angles_deg
        .iter()
        .map(|&t| steering_vector(cfg.m_t, cfg.spacing, t))
        .collect();

    let mut a_complex = ComplexMat::zeros(m_c, n_c);
    let mut col = 0usize;
    for omega in &omegas {
        // S_d: per-transmitter doppler-shifted codes, then zero-padded
        let psi = doppler_vector(cfg.q, *omega);
        let mut s_tilde = ComplexMat::zeros(cfg.m_t, window);
        for i in 0..cfg.m_t {
            for k in 0..cfg.q {
                let (sr, si) = (base_wave.re.get(i, k), base_wave.im.get(i, k));
                let (pr, pi) = (psi.re.get(k, 0), psi.im.get(k, 0));
                s_tilde.re.set(i, k, sr * pr - si * pi);
                s_tilde.im.set(i, k, sr * pi + si * pr);
            }
        }
        for r in 1..=cfg.n_r {
            let j_r = ComplexMat::from_real(shift_matrix(window, r)?);
            let shifted = s_tilde.matmul(&j_r)?;
            for (a_idx, (b, a_vec)) in rx.iter().zip(&tx).enumerate() {
                // b a^T: M_r x M_t outer product
                let at = ComplexMat {
                    re: a_vec.re.transpose(),
                    im: a_vec.im.transpose(),
                };
                let outer = b.matmul(&at)?;
                let u = outer.matmul(&shifted)?.vec();
                for row in 0..m_c {
                    a_complex.re.set(row, col, u.re.get(row, 0));
                    a_complex.im.set(row, col, u.im.get(row, 0));
                }
                col += 1;
                let _ = a_idx;
            }
        }
    }
    debug_assert_eq!(col, n_c);

    let a_real = Arc::new(lift_complex(&a_complex));
    Ok(RadarScene {
        config: cfg.clone(),
        a_complex,
        a_real,
    })
}

/// Real lifting `[[Re, -Im], [Im, Re]]`.
pub fn lift_complex(c: &ComplexMat) -> Mat {
    let (rows, cols) = c.shape();
    let mut out = Mat::zeros(2 * rows, 2 * cols);
    for i in 0..rows {
        for j in 0..cols {
            let re = c.re.get(i, j);
            let im = c.im.get(i, j);
            out.set(i, j, re);
            out.set(i, j + cols, -im);
            out.set(i + rows, j, im);
            out.set(i + rows, j + cols, re);
        }
    }
    out
}

/// Stacks a complex vector/matrix as `[Re; Im]`.
pub fn stack_complex(c: &ComplexMat) -> Mat {
    let (rows, cols) = c.shape();
    let mut out = Mat::zeros(2 * rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            out.set(i, j, c.re.get(i, j));
            out.set(i + rows, j, c.im.get(i, j));
        }
    }
    out
}

/// Extent (in grid bins) of the contiguous scatterer block.
#[derive(Debug, Clone, Copy)]
pub struct TargetSpec {
    pub extent_min: usize,
    pub extent_max: usize,
}

impl TargetSpec {
    pub fn validate(&self, n_c: usize) -> Result<(), RadarError> {
        if self.extent_min == 0 || self.extent_min > self.extent_max {
            return Err(RadarError::BadConfig(format!(
                "target extent range [{}, {}] invalid",
                self.extent_min, self.extent_max
            )));
        }
        if self.extent_max > n_c {
            return Err(RadarError::TargetTooWide {
                extent: self.extent_max,
                bins: n_c,
            });
        }
        Ok(())
    }
}

/// Complex target reflectivities on a contiguous block, i.i.d. standard
/// complex Gaussian per sweep, returned as the lifted real `2 N_c x L`.
fn draw_target(scene: &RadarScene, target: &TargetSpec, rng: &mut Rng) -> Mat {
    let n_c = scene.config.n_c();
    let l = scene.config.sweeps;
    let extent = target.extent_min + rng.next_index(target.extent_max - target.extent_min + 1);
    let start = rng.next_index(n_c - extent + 1);
    let mut x = Mat::zeros(2 * n_c, l);
    for i in start..start + extent {
        for c in 0..l {
            // CN(0,1): real and imaginary parts N(0, 1/2)
            x.set(i, c, rng.standard_normal() / 2f64.sqrt());
            x.set(i + n_c, c, rng.standard_normal() / 2f64.sqrt());
        }
    }
    x
}

/// Mean of `Tr(X^T A^T A X)` over `draws` target realizations; the signal
/// power entering the SNR calibration.
pub fn estimate_signal_power(
    scene: &RadarScene,
    target: &TargetSpec,
    rng: &Rng,
    draws: usize,
) -> Result<f64, RadarError> {
    target.validate(scene.config.n_c())?;
    let mut total = 0.0;
    for i in 0..draws {
        let mut r = rng.split(i as u64);
        let x = draw_target(scene, target, &mut r);
        let ax = mat::matmul(&scene.a_real, &x)?;
        total += ax.sum_sq();
    }
    Ok(total / draws as f64)
}

/// Noise variance realizing `snr_db` under
/// `SNR = E Tr(X^T A^T A X) / E Tr(N^T N)` with `E Tr(N^T N) = M L s2`.
pub fn noise_var_for_snr(signal_power: f64, m: usize, l: usize, snr_db: f64) -> f64 {
    signal_power / ((m * l) as f64 * 10f64.powf(snr_db / 10.0))
}

/// Synthesizes one multi-sweep sample at the given SNR (`None` = noiseless).
/// `signal_power` comes from [`estimate_signal_power`] once per scene/target.
pub fn synthesize_sweeps(
    scene: &RadarScene,
    target: &TargetSpec,
    snr_db: Option<f64>,
    signal_power: f64,
    rng: &mut Rng,
) -> Result<Sample, RadarError> {
    target.validate(scene.config.n_c())?;
    let m = scene.a_real.rows();
    let l = scene.config.sweeps;
    let x = draw_target(scene, target, rng);
    let mut y = mat::matmul(&scene.a_real, &x)?;
    let noise_var = match snr_db {
        None => 0.0,
        Some(db) => {
            let s2 = noise_var_for_snr(signal_power, m, l, db);
            let noise = rng.gaussian(m, l);
            y = y.add(&noise.scale(s2.sqrt()))?;
            s2
        }
    };
    Ok(Sample::new(Arc::clone(&scene.a_real), x, y, noise_var)
        .expect("dims consistent by construction"))
}

/// Linear MMSE with known support and unit prior variance on the support:
/// solves `(A_S^T A_S + s2 I) x_S = A_S^T y` (jittered when degenerate) and
/// scatters back; the `s2 -> 0` limit is the least-squares refit.
pub fn mmse_known_support(
    a: &Mat,
    y: &Mat,
    support: &[usize],
    noise_var: f64,
) -> Result<Mat, RadarError> {
    assert!(!support.is_empty(), "support must be non-empty");
    let m = a.rows();
    let s = support.len();
    let mut asub = Mat::zeros(m, s);
    for (c, &j) in support.iter().enumerate() {
        for i in 0..m {
            asub.set(i, c, a.get(i, j));
        }
    }
    let mut gram = mat::matmul(&asub.transpose(), &asub)?;
    gram.add_diag(noise_var);
    let rhs = mat::matmul(&asub.transpose(), y)?;
    let coef = mat::solve_spd_jittered(&gram, &rhs)?;
    let mut x = Mat::zeros(a.cols(), y.cols());
    for (c, &j) in support.iter().enumerate() {
        for col in 0..y.cols() {
            x.set(j, col, coef.get(c, col));
        }
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn doppler_vector_cases() {
        let flat = doppler_vector(4, 0.0);
        assert!(flat.re.as_slice().iter().all(|&v| (v - 1.0).abs() < 1e-15));
        assert!(flat.im.as_slice().iter().all(|&v| v.abs() < 1e-15));
        let pi = doppler_vector(2, PI);
        assert!((pi.re.get(0, 0) - 1.0).abs() < 1e-12);
        assert!((pi.re.get(1, 0) + 1.0).abs() < 1e-12);
        for k in 0..4 {
            let v = doppler_vector(4, 1.3);
            let modulus = v.re.get(k, 0).hypot(v.im.get(k, 0));
            assert!((modulus - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn steering_vector_cases() {
        let broadside = steering_vector(5, 0.5, 0.0);
        assert!(broadside
            .re
            .as_slice()
            .iter()
            .all(|&v| (v - 1.0).abs() < 1e-15));
        let endfire = steering_vector(2, 0.5, 90.0);
        assert!((endfire.re.get(1, 0) + 1.0).abs() < 1e-12); // e^{j pi}
        assert!(endfire.im.get(1, 0).abs() < 1e-12);
        for k in 0..5 {
            let v = steering_vector(5, 0.5, 37.0);
            let modulus = v.re.get(k, 0).hypot(v.im.get(k, 0));
            assert!((modulus - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn shift_matrix_cases() {
        assert_eq!(shift_matrix(3, 1).unwrap(), Mat::identity(3));
        // a signal hit from the right is delayed by r-1 samples
        let j2 = shift_matrix(3, 2).unwrap();
        let v = Mat::from_vec(1, 3, vec![1.0, 2.0, 3.0]).unwrap();
        let shifted = mat::matmul(&v, &j2).unwrap();
        assert_eq!(shifted.as_slice(), &[0.0, 1.0, 2.0]);
        // each column has at most one nonzero
        for c in 0..3 {
            let nz = (0..3).filter(|&r| j2.get(r, c) != 0.0).count();
            assert!(nz <= 1);
        }
        assert!(shift_matrix(3, 4).is_err());
        assert!(shift_matrix(3, 0).is_err());
    }

    #[test]
    fn shift_matches_direct_time_shift_of_waveform() {
        // shifting the zero-padded waveform by J_r equals delaying it r-1
        // samples
        let cfg = RadarConfig::reference();
        let window = cfg.q + cfg.n_r - 1;
        let h = hadamard(cfg.q).unwrap();
        for r in 1..=cfg.n_r {
            let j_r = shift_matrix(window, r).unwrap();
            let mut s_tilde = Mat::zeros(cfg.m_t, window);
            for i in 0..cfg.m_t {
                for k in 0..cfg.q {
                    s_tilde.set(i, k, h.get(i, k));
                }
            }
            let shifted = mat::matmul(&s_tilde, &j_r).unwrap();
            for i in 0..cfg.m_t {
                for c in 0..window {
                    let expect = if c + 1 >= r && c + 1 - r < cfg.q {
                        h.get(i, c + 1 - r)
                    } else {
                        0.0
                    };
                    assert_eq!(shifted.get(i, c), expect, "tx {i} col {c} delay {r}");
                }
            }
        }
    }

    #[test]
    fn dictionary_dims_match_reference_config() {
        let scene = build_dictionary(&RadarConfig::reference()).unwrap();
        assert_eq!(scene.config.m_c(), 60);
        assert_eq!(scene.config.n_c(), 50);
        assert_eq!(scene.a_complex.shape(), (60, 50));
        assert_eq!(scene.a_real.shape(), (120, 100));
    }

    #[test]
    fn dictionary_columns_nonzero() {
        let scene = build_dictionary(&RadarConfig::reference()).unwrap();
        for c in 0..scene.config.n_c() {
            let energy: f64 = (0..scene.config.m_c())
                .map(|r| {
                    scene.a_complex.re.get(r, c).powi(2) + scene.a_complex.im.get(r, c).powi(2)
                })
                .sum();
            assert!(energy > 1e-12, "column {c} is zero");
        }
    }

    #[test]
    fn single_bin_scene_column_formula() {
        let cfg = RadarConfig {
            m_t: 2,
            m_r: 3,
            q: 2,
            n_r: 1,
            n_d: 1,
            angles_deg: vec![17.0],
            spacing: 0.5,
            sweeps: 1,
            waveform: Waveform::Hadamard,
        };
        let scene = build_dictionary(&cfg).unwrap();
        assert_eq!(scene.a_complex.shape(), (cfg.m_r * cfg.q, 1));
        // u = vec(b a^T S~ J_1); compute directly
        let b = steering_vector(cfg.m_r, cfg.spacing, 17.0);
        let a = steering_vector(cfg.m_t, cfg.spacing, 17.0);
        let at = ComplexMat {
            re: a.re.transpose(),
            im: a.im.transpose(),
        };
        let outer = b.matmul(&at).unwrap();
        let s = ComplexMat::from_real(hadamard(2).unwrap());
        let u = outer.matmul(&s).unwrap().vec();
        assert!(u.max_abs_diff(&scene.a_complex) <= 1e-12);
    }

    #[test]
    fn real_lifting_is_exact_on_products() {
        let mut rng = Rng::new(3);
        let c = ComplexMat {
            re: rng.gaussian(4, 6),
            im: rng.gaussian(4, 6),
        };
        let x = ComplexMat {
            re: rng.gaussian(6, 2),
            im: rng.gaussian(6, 2),
        };
        let complex_prod = c.matmul(&x).unwrap();
        let lifted = lift_complex(&c);
        let x_stacked = stack_complex(&x);
        let real_prod = mat::matmul(&lifted, &x_stacked).unwrap();
        assert!(real_prod.max_abs_diff(&stack_complex(&complex_prod)) <= 1e-12);
    }

    #[test]
    fn synthesized_support_is_mirrored() {
        let scene = build_dictionary(&RadarConfig::reference()).unwrap();
        let target = TargetSpec {
            extent_min: 3,
            extent_max: 3,
        };
        let mut rng = Rng::new(4);
        let sample = synthesize_sweeps(&scene, &target, None, 1.0, &mut rng).unwrap();
        let n_c = scene.config.n_c();
        for i in 0..n_c {
            let lower: f64 = sample.x.row(i).iter().map(|v| v.abs()).sum();
            let upper: f64 = sample.x.row(i + n_c).iter().map(|v| v.abs()).sum();
            assert_eq!(lower > 0.0, upper > 0.0, "row {i} not mirrored");
        }
        // noiseless: Y = A X exactly
        let ax = mat::matmul(&sample.a, &sample.x).unwrap();
        assert_eq!(ax.max_abs_diff(&sample.y), 0.0);
    }

    #[test]
    fn realized_snr_close_to_target() {
        let scene = build_dictionary(&RadarConfig::reference()).unwrap();
        let target = TargetSpec {
            extent_min: 2,
            extent_max: 6,
        };
        let root = Rng::new(5);
        let power = estimate_signal_power(&scene, &target, &root.split(0), 512).unwrap();
        let mut sig = 0.0;
        let mut noise = 0.0;
        let mut stream = root.split(1);
        for _ in 0..1000 {
            let s = synthesize_sweeps(&scene, &target, Some(20.0), power, &mut stream).unwrap();
            let ax = mat::matmul(&s.a, &s.x).unwrap();
            sig += ax.sum_sq();
            noise += s.y.sub(&ax).unwrap().sum_sq();
        }
        let snr_db = 10.0 * (sig / noise).log10();
        assert!((snr_db - 20.0).abs() <= 0.5, "realized {snr_db} dB");
    }

    #[test]
    fn doubling_noise_sd_costs_six_db() {
        // paired Monte-Carlo: same target and noise draws, noise sd doubled
        let scene = build_dictionary(&RadarConfig::reference()).unwrap();
        let target = TargetSpec {
            extent_min: 2,
            extent_max: 6,
        };
        let root = Rng::new(6);
        let power = estimate_signal_power(&scene, &target, &root.split(0), 512).unwrap();
        let measure = |scale: f64| -> f64 {
            let mut stream = root.split(1);
            let mut sig = 0.0;
            let mut noise = 0.0;
            for _ in 0..500 {
                let s = synthesize_sweeps(&scene, &target, Some(15.0), power, &mut stream)
                    .unwrap();
                let ax = mat::matmul(&s.a, &s.x).unwrap();
                let n = s.y.sub(&ax).unwrap().scale(scale);
                sig += ax.sum_sq();
                noise += n.sum_sq();
            }
            10.0 * (sig / noise).log10()
        };
        let base = measure(1.0);
        let doubled = measure(2.0);
        assert!(((base - doubled) - 6.02).abs() <= 0.3, "{base} vs {doubled}");
    }

    #[test]
    fn mmse_known_support_cases() {
        // full support, A = I: xhat = y / (1 + s2)
        let a = Mat::identity(3);
        let y = Mat::col_vec(&[2.0, -1.0, 0.5]);
        let x = mmse_known_support(&a, &y, &[0, 1, 2], 0.5).unwrap();
        for i in 0..3 {
            assert!((x.get(i, 0) - y.get(i, 0) / 1.5).abs() < 1e-12);
        }
        // noise -> 0 on a well-conditioned support: least-squares refit
        let mut rng = Rng::new(7);
        let a = rng.gaussian(8, 12);
        let mut truth = Mat::zeros(12, 1);
        truth.set(2, 0, 1.0);
        truth.set(5, 0, -2.0);
        let y = mat::matmul(&a, &truth).unwrap();
        let x = mmse_known_support(&a, &y, &[2, 5], 0.0).unwrap();
        assert!(x.max_abs_diff(&truth) <= 1e-9);
    }
}
