//! The L-SBL unrolled network: a trainable dense map producing per-coordinate
//! prior variances, followed by the parameter-free MAP stage, stacked K deep.
//!
//! Two variants exist. NW-1 keeps the original `M x N` system and emits N
//! variances shared across the L measurement columns. NW-2 lifts the system
//! with a Kronecker product `A (x) I_L` and emits NL variances, one per
//! stacked coefficient. For L = 1 the two coincide.

use crate::bayes::{self, BayesError};
use crate::data::PosteriorEstimate;
use crate::mat::{Mat, MatError};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use thiserror::Error;

const MAGIC: &[u8; 7] = b"LSBLMD1";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error at byte {offset}: {what}")]
    Parse { offset: u64, what: String },
    #[error("layer {layer}: W is {got_rows}x{got_cols}, expected {want_rows}x{want_cols}")]
    LayerShape {
        layer: usize,
        got_rows: usize,
        got_cols: usize,
        want_rows: usize,
        want_cols: usize,
    },
    #[error("model needs at least one layer")]
    NoLayers,
    #[error(transparent)]
    Bayes(#[from] BayesError),
    #[error(transparent)]
    Mat(#[from] MatError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Nw1,
    Nw2,
}

impl Variant {
    pub fn tag(self) -> u8 {
        match self {
            Variant::Nw1 => 1,
            Variant::Nw2 => 2,
        }
    }

    pub fn from_tag(t: u8) -> Option<Variant> {
        match t {
            1 => Some(Variant::Nw1),
            2 => Some(Variant::Nw2),
            _ => None,
        }
    }

    /// Length of the dense-stage input: squared estimates then error
    /// variances.
    pub fn feature_len(self, n: usize, l: usize) -> usize {
        match self {
            Variant::Nw1 => n * l + n,
            Variant::Nw2 => 2 * n * l,
        }
    }

    /// Number of variances the dense stage emits.
    pub fn gamma_len(self, n: usize, l: usize) -> usize {
        match self {
            Variant::Nw1 => n,
            Variant::Nw2 => n * l,
        }
    }
}

/// The only activation in use: relu then clamp into `[floor, cap]`, which
/// keeps the emitted prior variances positive and bounded.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    ReluClamp,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub w: Mat,
    pub b: Vec<f64>,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LsblModel {
    pub variant: Variant,
    pub n: usize,
    pub l: usize,
    pub layers: Vec<LayerParams>,
    pub gamma_floor: f64,
    pub gamma_cap: f64,
}

pub const DEFAULT_GAMMA_FLOOR: f64 = 1e-8;
pub const DEFAULT_GAMMA_CAP: f64 = 1e4;

impl LsblModel {
    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.layers.is_empty() {
            return Err(ModelError::NoLayers);
        }
        let rows = self.variant.gamma_len(self.n, self.l);
        let cols = self.variant.feature_len(self.n, self.l);
        for (layer, p) in self.layers.iter().enumerate() {
            if p.w.shape() != (rows, cols) || p.b.len() != rows {
                return Err(ModelError::LayerShape {
                    layer,
                    got_rows: p.w.rows(),
                    got_cols: p.w.cols(),
                    want_rows: rows,
                    want_cols: cols,
                });
            }
        }
        Ok(())
    }

    /// Untrained model with every layer at the SBL embedding, i.e. the point
    /// where the network reproduces the classical iteration exactly.
    pub fn sbl_initialized(variant: Variant, n: usize, l: usize, depth: usize) -> LsblModel {
        let layers = (0..depth).map(|_| sbl_embedding_layer(variant, n, l)).collect();
        LsblModel {
            variant,
            n,
            l,
            layers,
            gamma_floor: DEFAULT_GAMMA_FLOOR,
            gamma_cap: DEFAULT_GAMMA_CAP,
        }
    }
}

/// Dense-stage parameters that reproduce one classical update:
/// `gamma_i = mean_l x_il^2 + phi_i` (NW-1; for L = 1 this is the `[I | I]`
/// block matrix) or `gamma = x.^2 + phi` on the lifted system (NW-2).
pub fn sbl_embedding_layer(variant: Variant, n: usize, l: usize) -> LayerParams {
    let rows = variant.gamma_len(n, l);
    let cols = variant.feature_len(n, l);
    let mut w = Mat::zeros(rows, cols);
    match variant {
        Variant::Nw1 => {
            // squared-estimate half: average the L entries of row i
            for i in 0..n {
                for c in 0..l {
                    w.set(i, i * l + c, 1.0 / l as f64);
                }
                w.set(i, n * l + i, 1.0);
            }
        }
        Variant::Nw2 => {
            for i in 0..rows {
                w.set(i, i, 1.0);
                w.set(i, rows + i, 1.0);
            }
        }
    }
    LayerParams {
        w,
        b: vec![0.0; rows],
        activation: Activation::ReluClamp,
    }
}

/// Kronecker lift `A (x) I_l`; block (i, j) is `a_ij * I_l`.
pub fn lift_matrix(a: &Mat, l: usize) -> Mat {
    assert!(l >= 1);
    if l == 1 {
        return a.clone();
    }
    let (m, n) = a.shape();
    let mut out = Mat::zeros(m * l, n * l);
    for i in 0..m {
        for j in 0..n {
            let v = a.get(i, j);
            if v != 0.0 {
                for c in 0..l {
                    out.set(i * l + c, j * l + c, v);
                }
            }
        }
    }
    out
}

/// Dense-stage input: squared estimate entries then error variances.
pub fn layer_features(prev: &PosteriorEstimate) -> Vec<f64> {
    let mut f = Vec::with_capacity(prev.xhat.len() + prev.phi_diag.len());
    f.extend(prev.xhat.as_slice().iter().map(|x| x * x));
    f.extend_from_slice(&prev.phi_diag);
    f
}

/// Applies the dense stage: `clamp(relu(W f + b), floor, cap)`.
pub fn gamma_from_features(
    params: &LayerParams,
    features: &[f64],
    floor: f64,
    cap: f64,
) -> Vec<f64> {
    let rows = params.w.rows();
    let cols = params.w.cols();
    debug_assert_eq!(features.len(), cols);
    let mut gamma = Vec::with_capacity(rows);
    for i in 0..rows {
        let mut z = 0.0;
        let wrow = params.w.row(i);
        for c in 0..cols {
            z += wrow[c] * features[c];
        }
        z += params.b[i];
        let Activation::ReluClamp = params.activation;
        gamma.push(z.max(0.0).clamp(floor, cap));
    }
    gamma
}

/// One layer: dense stage on the previous estimate, then the MAP stage on the
/// (possibly lifted) system. `system` and `rhs` must already match the
/// variant: `(A, Y)` for NW-1, `(A (x) I_L, vec(Y^T))` for NW-2.
pub fn layer_forward(
    model: &LsblModel,
    layer: usize,
    system: &Mat,
    rhs: &Mat,
    prev: &PosteriorEstimate,
    noise_var: f64,
) -> Result<PosteriorEstimate, ModelError> {
    let params = &model.layers[layer];
    let features = layer_features(prev);
    let gamma = gamma_from_features(params, &features, model.gamma_floor, model.gamma_cap);
    Ok(bayes::map_estimate(system, rhs, &gamma, noise_var)?)
}

/// Full forward pass from the conventional start (zero estimate, unit
/// variances). Accepts the measurement matrix per call, so one trained model
/// serves arbitrarily many matrices.
pub fn forward(
    model: &LsblModel,
    a: &Mat,
    y: &Mat,
    noise_var: f64,
) -> Result<PosteriorEstimate, ModelError> {
    model.validate()?;
    let (system, rhs) = match model.variant {
        Variant::Nw1 => (a.clone(), y.clone()),
        Variant::Nw2 => (
            lift_matrix(a, model.l),
            y.reshape(y.rows() * y.cols(), 1)?, // row-major Y is vec(Y^T)
        ),
    };
    let mut est = match model.variant {
        Variant::Nw1 => PosteriorEstimate::initial(model.n, model.l),
        Variant::Nw2 => PosteriorEstimate::initial(model.n * model.l, 1),
    };
    for k in 0..model.depth() {
        est = layer_forward(model, k, &system, &rhs, &est, noise_var)?;
    }
    Ok(est)
}

/// Forward pass returning the estimate as an `N x L` matrix for either
/// variant.
pub fn forward_x(model: &LsblModel, a: &Mat, y: &Mat, noise_var: f64) -> Result<Mat, ModelError> {
    let est = forward(model, a, y, noise_var)?;
    Ok(match model.variant {
        Variant::Nw1 => est.xhat,
        Variant::Nw2 => est.stacked_as_matrix(model.n, model.l),
    })
}

// ---------------------------------------------------------------------------
// model file
// ---------------------------------------------------------------------------

fn write_f64s<W: Write>(w: &mut W, vals: &[f64]) -> std::io::Result<()> {
    let mut buf = Vec::with_capacity(vals.len() * 8);
    for v in vals {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)
}

/// Serializes the model: magic `LSBLMD1`, `version: u32`, `variant: u8`,
/// `n: u32, l: u32, k: u32`, `gamma_floor: f64, gamma_cap: f64`, then per
/// layer row-major `W` and `b`, all little-endian. See `docs/formats.md`.
pub fn save_model(model: &LsblModel, path: &Path) -> Result<(), ModelError> {
    model.validate()?;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&[model.variant.tag()])?;
    w.write_all(&(model.n as u32).to_le_bytes())?;
    w.write_all(&(model.l as u32).to_le_bytes())?;
    w.write_all(&(model.depth() as u32).to_le_bytes())?;
    w.write_all(&model.gamma_floor.to_le_bytes())?;
    w.write_all(&model.gamma_cap.to_le_bytes())?;
    for layer in &model.layers {
        write_f64s(&mut w, layer.w.as_slice())?;
        write_f64s(&mut w, &layer.b)?;
    }
    w.flush()?;
    Ok(())
}

struct Cursor<R: Read> {
    inner: R,
    offset: u64,
}

impl<R: Read> Cursor<R> {
    fn take(&mut self, buf: &mut [u8], what: &str) -> Result<(), ModelError> {
        let at = self.offset;
        self.inner.read_exact(buf).map_err(|e| {
            if e.kind() == std::io::ErrorKind::UnexpectedEof {
                ModelError::Parse {
                    offset: at,
                    what: format!("truncated while reading {what}"),
                }
            } else {
                ModelError::Io(e)
            }
        })?;
        self.offset += buf.len() as u64;
        Ok(())
    }

    fn u32(&mut self, what: &str) -> Result<u32, ModelError> {
        let mut b = [0u8; 4];
        self.take(&mut b, what)?;
        Ok(u32::from_le_bytes(b))
    }

    fn f64(&mut self, what: &str) -> Result<f64, ModelError> {
        let mut b = [0u8; 8];
        self.take(&mut b, what)?;
        Ok(f64::from_le_bytes(b))
    }

    fn f64s(&mut self, count: usize, what: &str) -> Result<Vec<f64>, ModelError> {
        let at = self.offset;
        let mut buf = vec![0u8; count * 8];
        self.take(&mut buf, what)?;
        let vals: Vec<f64> = buf
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if let Some(i) = vals.iter().position(|v| !v.is_finite()) {
            return Err(ModelError::Parse {
                offset: at + (i as u64) * 8,
                what: format!("non-finite value in {what}"),
            });
        }
        Ok(vals)
    }
}

pub fn load_model(path: &Path) -> Result<LsblModel, ModelError> {
    let mut c = Cursor {
        inner: BufReader::new(File::open(path)?),
        offset: 0,
    };
    let mut magic = [0u8; 7];
    c.take(&mut magic, "magic")?;
    if &magic != MAGIC {
        return Err(ModelError::Parse {
            offset: 0,
            what: format!("bad magic {magic:?}, expected {MAGIC:?}"),
        });
    }
    let version = c.u32("version")?;
    if version != VERSION {
        return Err(ModelError::Parse {
            offset: 7,
            what: format!("unsupported version: expected {VERSION}, found {version}"),
        });
    }
    let mut tag = [0u8; 1];
    c.take(&mut tag, "variant tag")?;
    let variant = Variant::from_tag(tag[0]).ok_or_else(|| ModelError::Parse {
        offset: 11,
        what: format!("unknown variant tag {}", tag[0]),
    })?;
    let n = c.u32("n")? as usize;
    let l = c.u32("l")? as usize;
    let depth = c.u32("k")? as usize;
    let gamma_floor = c.f64("gamma_floor")?;
    let gamma_cap = c.f64("gamma_cap")?;
    let rows = variant.gamma_len(n, l);
    let cols = variant.feature_len(n, l);
    let mut layers = Vec::with_capacity(depth);
    for k in 0..depth {
        let w = c.f64s(rows * cols, &format!("layer {k} weights"))?;
        let b = c.f64s(rows, &format!("layer {k} bias"))?;
        layers.push(LayerParams {
            w: Mat::from_vec(rows, cols, w).expect("sized above"),
            b,
            activation: Activation::ReluClamp,
        });
    }
    let mut extra = [0u8; 1];
    match c.inner.read(&mut extra) {
        Ok(0) => {}
        Ok(_) => {
            return Err(ModelError::Parse {
                offset: c.offset,
                what: "trailing bytes after final layer".into(),
            })
        }
        Err(e) => return Err(ModelError::Io(e)),
    }
    let model = LsblModel {
        variant,
        n,
        l,
        layers,
        gamma_floor,
        gamma_cap,
    };
    model.validate()?;
    Ok(model)
}
