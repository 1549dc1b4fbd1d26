//! Synthetic dataset generation for every sparsity structure under study,
//! plus the on-disk dataset container.
//!
//! Sample `i` always draws from `rng.split(i + 1)` (the shared measurement
//! matrix, when present, uses `rng.split(0)`), so generation is reproducible
//! and embarrassingly parallel without any cross-sample RNG coupling.

use crate::data::{DataError, Dataset, Sample};
use crate::mat::{self, Mat};
use crate::rng::Rng;
use rayon::prelude::*;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;
use thiserror::Error;

const MAGIC: &[u8; 7] = b"LSBLDS1";
const BLOCK_RETRIES: usize = 1000;

#[derive(Debug, Error)]
pub enum GenError {
    #[error("support size {k} exceeds vector length {n}")]
    SupportTooLarge { k: usize, n: usize },
    #[error("cannot place {j} blocks holding {k} nonzeros in length {n}")]
    BlockInfeasible { j: usize, k: usize, n: usize },
    #[error("gave up placing blocks after {0} resamples")]
    BlockRetriesExhausted(usize),
    #[error("invalid generation config: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Data(#[from] DataError),
}

#[derive(Debug, Error)]
pub enum ContainerError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error at byte {offset}: {what}")]
    Parse { offset: u64, what: String },
    #[error("container stores a single noise variance; dataset has per-sample values")]
    MixedNoise,
    #[error(transparent)]
    Data(#[from] DataError),
}

/// Amplitude law for nonzero entries.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AmplitudeSpec {
    /// Magnitude uniform in `[lo, hi]`, sign uniform.
    UniformShell { lo: f64, hi: f64 },
    /// Standard normal.
    UnitGaussian,
}

impl AmplitudeSpec {
    pub fn validate(&self) -> Result<(), GenError> {
        if let AmplitudeSpec::UniformShell { lo, hi } = *self {
            if !(0.0 < lo && lo <= hi && hi.is_finite()) {
                return Err(GenError::BadConfig(format!(
                    "uniform shell requires 0 < lo <= hi, got [{lo}, {hi}]"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StructureKind {
    /// Independent support per column.
    Unstructured,
    /// Nonzeros in at most `blocks` contiguous runs, shared across columns.
    BlockSparse { blocks: usize },
    /// One support shared by all columns.
    JointSparse,
    /// Base support, with `resampled_per_column` indices re-drawn in every
    /// column after the first.
    ArbitraryPattern { resampled_per_column: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StructureSpec {
    pub kind: StructureKind,
    pub k_min: usize,
    pub k_max: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenConfig {
    pub m: usize,
    pub n: usize,
    pub l: usize,
    pub structure: StructureSpec,
    pub amplitude: AmplitudeSpec,
    pub noise_var: f64,
    pub per_sample_matrix: bool,
    pub count: usize,
}

impl GenConfig {
    pub fn validate(&self) -> Result<(), GenError> {
        let bad = |msg: String| Err(GenError::BadConfig(msg));
        if self.m == 0 || self.n == 0 || self.l == 0 {
            return bad(format!("dims must be positive, got ({}, {}, {})", self.m, self.n, self.l));
        }
        if self.m >= self.n {
            return bad(format!("under-determined regime requires m < n, got m={} n={}", self.m, self.n));
        }
        if self.count == 0 {
            return bad("count must be >= 1".into());
        }
        let s = &self.structure;
        if !(1 <= s.k_min && s.k_min <= s.k_max && s.k_max <= self.n) {
            return bad(format!(
                "need 1 <= k_min <= k_max <= n, got k in [{}, {}], n = {}",
                s.k_min, s.k_max, self.n
            ));
        }
        match s.kind {
            StructureKind::BlockSparse { blocks } => {
                if blocks == 0 {
                    return bad("block count must be >= 1".into());
                }
                if blocks > s.k_min {
                    return bad(format!("{blocks} blocks cannot hold k_min = {} nonzeros", s.k_min));
                }
            }
            StructureKind::ArbitraryPattern { resampled_per_column } => {
                if resampled_per_column > s.k_min {
                    return bad(format!(
                        "cannot resample {resampled_per_column} of k_min = {} support indices",
                        s.k_min
                    ));
                }
            }
            _ => {}
        }
        if !(self.noise_var.is_finite() && self.noise_var >= 0.0) {
            return bad(format!("noise_var must be finite and >= 0, got {}", self.noise_var));
        }
        self.amplitude.validate()?;
        Ok(())
    }
}

/// Uniformly random `k`-subset of `{0..n-1}`.
pub fn draw_support_unstructured(rng: &mut Rng, n: usize, k: usize) -> Result<Vec<usize>, GenError> {
    if k > n {
        return Err(GenError::SupportTooLarge { k, n });
    }
    Ok(rng.subset(n, k))
}

/// Support made of `j` contiguous runs totalling exactly `k` indices.
///
/// Proportions `r` are J normalized uniforms; block `j` of size `ceil(k r_j)`
/// (the last block takes the remainder) is placed at a random offset inside
/// the `j`-th partition of size `ceil(n r_j)`. Geometrically infeasible draws
/// of `r` are resampled, with a bounded retry budget.
pub fn draw_support_block(
    rng: &mut Rng,
    n: usize,
    k: usize,
    j: usize,
) -> Result<Vec<usize>, GenError> {
    if k > n {
        return Err(GenError::SupportTooLarge { k, n });
    }
    if j == 0 || j > k {
        return Err(GenError::BlockInfeasible { j, k, n });
    }
    'retry: for _ in 0..BLOCK_RETRIES {
        let mut r: Vec<f64> = (0..j).map(|_| rng.next_f64().max(1e-12)).collect();
        let total: f64 = r.iter().sum();
        for v in &mut r {
            *v /= total;
        }
        // block sizes
        let mut sizes = Vec::with_capacity(j);
        let mut used = 0usize;
        for rj in r.iter().take(j - 1) {
            let b = (k as f64 * rj).ceil() as usize;
            if b == 0 || used + b >= k {
                continue 'retry; // leaves nothing (or less than 1) for the last block
            }
            sizes.push(b);
            used += b;
        }
        sizes.push(k - used);
        // partitions: consecutive segments of ceil(n r_j), clipped to n
        let mut support = Vec::with_capacity(k);
        let mut start = 0usize;
        for (idx, rj) in r.iter().enumerate() {
            if start >= n {
                continue 'retry;
            }
            let len = ((n as f64 * rj).ceil() as usize).min(n - start);
            let b = sizes[idx];
            if b > len {
                continue 'retry;
            }
            let offset = start + rng.next_index(len - b + 1);
            support.extend(offset..offset + b);
            start += len;
        }
        support.sort_unstable();
        debug_assert_eq!(support.len(), k);
        return Ok(support);
    }
    Err(GenError::BlockRetriesExhausted(BLOCK_RETRIES))
}

/// Length-`n` vector that is zero off `support` and drawn from `spec` on it.
pub fn fill_amplitudes(rng: &mut Rng, n: usize, support: &[usize], spec: &AmplitudeSpec) -> Vec<f64> {
    let mut x = vec![0.0; n];
    for &i in support {
        x[i] = match *spec {
            AmplitudeSpec::UniformShell { lo, hi } => {
                let mag = lo + (hi - lo) * rng.next_f64();
                if rng.next_f64() < 0.5 {
                    -mag
                } else {
                    mag
                }
            }
            AmplitudeSpec::UnitGaussian => rng.standard_normal(),
        };
    }
    x
}

fn column_supports(
    rng: &mut Rng,
    cfg: &GenConfig,
    k: usize,
) -> Result<Vec<Vec<usize>>, GenError> {
    let n = cfg.n;
    let l = cfg.l;
    match cfg.structure.kind {
        StructureKind::Unstructured => (0..l)
            .map(|_| draw_support_unstructured(rng, n, k))
            .collect(),
        StructureKind::JointSparse => {
            let s = draw_support_unstructured(rng, n, k)?;
            Ok(vec![s; l])
        }
        StructureKind::BlockSparse { blocks } => {
            let s = draw_support_block(rng, n, k, blocks.min(k))?;
            Ok(vec![s; l])
        }
        StructureKind::ArbitraryPattern { resampled_per_column } => {
            let base = draw_support_unstructured(rng, n, k)?;
            let mut cols = vec![base.clone()];
            for _ in 1..l {
                let r = resampled_per_column.min(k);
                let mut kept: Vec<usize> = base.clone();
                // drop r random members, then draw replacements outside the set
                for _ in 0..r {
                    let pos = rng.next_index(kept.len());
                    kept.swap_remove(pos);
                }
                let mut s = kept;
                while s.len() < k {
                    let cand = rng.next_index(n);
                    if !s.contains(&cand) {
                        s.push(cand);
                    }
                }
                s.sort_unstable();
                cols.push(s);
            }
            Ok(cols)
        }
    }
}

fn one_sample(cfg: &GenConfig, shared: Option<&Arc<Mat>>, mut rng: Rng) -> Result<Sample, GenError> {
    let a = match shared {
        Some(a) => Arc::clone(a),
        None => Arc::new(rng.gaussian(cfg.m, cfg.n)),
    };
    let k = cfg.structure.k_min + rng.next_index(cfg.structure.k_max - cfg.structure.k_min + 1);
    let supports = column_supports(&mut rng, cfg, k)?;
    let mut x = Mat::zeros(cfg.n, cfg.l);
    for (c, support) in supports.iter().enumerate() {
        let col = fill_amplitudes(&mut rng, cfg.n, support, &cfg.amplitude);
        for (i, v) in col.into_iter().enumerate() {
            x.set(i, c, v);
        }
    }
    let mut y = mat::matmul(&a, &x).expect("dims consistent by construction");
    if cfg.noise_var > 0.0 {
        let noise = rng.gaussian(cfg.m, cfg.l);
        y = y
            .add(&noise.scale(cfg.noise_var.sqrt()))
            .expect("same shape");
    }
    Ok(Sample::new(a, x, y, cfg.noise_var)?)
}

/// Synthesizes `cfg.count` samples. Bit-identical for a given `(cfg, rng)`
/// whether run serially or in parallel.
pub fn generate(cfg: &GenConfig, rng: &Rng) -> Result<Dataset, GenError> {
    self::generate_with(cfg, rng, true)
}

/// As [`generate`], with explicit control over parallelism.
pub fn generate_with(cfg: &GenConfig, rng: &Rng, parallel: bool) -> Result<Dataset, GenError> {
    cfg.validate()?;
    let shared = if cfg.per_sample_matrix {
        None
    } else {
        Some(Arc::new(rng.split(0).gaussian(cfg.m, cfg.n)))
    };
    let build = |i: usize| one_sample(cfg, shared.as_ref(), rng.split(i as u64 + 1));
    let samples: Result<Vec<Sample>, GenError> = if parallel {
        (0..cfg.count).into_par_iter().map(build).collect()
    } else {
        (0..cfg.count).map(build).collect()
    };
    Ok(Dataset::new(samples?, !cfg.per_sample_matrix)?)
}

// ---------------------------------------------------------------------------
// binary container
// ---------------------------------------------------------------------------

fn write_f64s<W: Write>(w: &mut W, vals: &[f64]) -> std::io::Result<()> {
    let mut buf = Vec::with_capacity(vals.len() * 8);
    for v in vals {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)
}

/// Writes the dataset container: magic `LSBLDS1`, then little-endian
/// `m: u32, n: u32, l: u32, count: u64, shared: u8, noise_var: f64`, the
/// shared `A` block when `shared = 1`, and per sample `[A,] X, Y` as
/// row-major `f64` blocks. See `docs/formats.md`.
pub fn write_dataset(ds: &Dataset, path: &Path) -> Result<(), ContainerError> {
    let noise_var = ds.samples[0].noise_var;
    if ds.samples.iter().any(|s| s.noise_var != noise_var) {
        return Err(ContainerError::MixedNoise);
    }
    let (m, n, l) = ds.dims();
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    w.write_all(MAGIC)?;
    w.write_all(&(m as u32).to_le_bytes())?;
    w.write_all(&(n as u32).to_le_bytes())?;
    w.write_all(&(l as u32).to_le_bytes())?;
    w.write_all(&(ds.len() as u64).to_le_bytes())?;
    w.write_all(&[u8::from(ds.shared_matrix)])?;
    w.write_all(&noise_var.to_le_bytes())?;
    if ds.shared_matrix {
        write_f64s(&mut w, ds.samples[0].a.as_slice())?;
    }
    for s in &ds.samples {
        if !ds.shared_matrix {
            write_f64s(&mut w, s.a.as_slice())?;
        }
        write_f64s(&mut w, s.x.as_slice())?;
        write_f64s(&mut w, s.y.as_slice())?;
    }
    w.flush()?;
    Ok(())
}

struct Cursor<R: Read> {
    inner: R,
    offset: u64,
}

impl<R: Read> Cursor<R> {
    fn take(&mut self, buf: &mut [u8], what: &str) -> Result<(), ContainerError> {
        let at = self.offset;
        self.inner.read_exact(buf).map_err(|e| {
            if e.kind() == std::io::ErrorKind::UnexpectedEof {
                ContainerError::Parse {
                    offset: at,
                    what: format!("truncated while reading {what}"),
                }
            } else {
                ContainerError::Io(e)
            }
        })?;
        self.offset += buf.len() as u64;
        Ok(())
    }

    fn u32(&mut self, what: &str) -> Result<u32, ContainerError> {
        let mut b = [0u8; 4];
        self.take(&mut b, what)?;
        Ok(u32::from_le_bytes(b))
    }

    fn u64(&mut self, what: &str) -> Result<u64, ContainerError> {
        let mut b = [0u8; 8];
        self.take(&mut b, what)?;
        Ok(u64::from_le_bytes(b))
    }

    fn f64(&mut self, what: &str) -> Result<f64, ContainerError> {
        let mut b = [0u8; 8];
        self.take(&mut b, what)?;
        Ok(f64::from_le_bytes(b))
    }

    fn mat(&mut self, rows: usize, cols: usize, what: &str) -> Result<Mat, ContainerError> {
        let at = self.offset;
        let mut buf = vec![0u8; rows * cols * 8];
        self.take(&mut buf, what)?;
        let data: Vec<f64> = buf
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Mat::from_vec_finite(rows, cols, data).map_err(|e| ContainerError::Parse {
            offset: at,
            what: format!("{what}: {e}"),
        })
    }
}

/// Reads a dataset container written by [`write_dataset`].
pub fn read_dataset(path: &Path) -> Result<Dataset, ContainerError> {
    let file = File::open(path)?;
    let mut c = Cursor {
        inner: BufReader::new(file),
        offset: 0,
    };
    let mut magic = [0u8; 7];
    c.take(&mut magic, "magic")?;
    if &magic != MAGIC {
        return Err(ContainerError::Parse {
            offset: 0,
            what: format!("bad magic {magic:?}, expected {MAGIC:?}"),
        });
    }
    let m = c.u32("m")? as usize;
    let n = c.u32("n")? as usize;
    let l = c.u32("l")? as usize;
    let count = c.u64("count")? as usize;
    let mut flag = [0u8; 1];
    c.take(&mut flag, "shared flag")?;
    let shared = match flag[0] {
        0 => false,
        1 => true,
        other => {
            return Err(ContainerError::Parse {
                offset: c.offset - 1,
                what: format!("shared flag must be 0 or 1, got {other}"),
            })
        }
    };
    let noise_var = c.f64("noise_var")?;
    if count == 0 {
        return Err(ContainerError::Parse {
            offset: 11,
            what: "container holds zero samples".into(),
        });
    }
    let shared_a = if shared {
        Some(Arc::new(c.mat(m, n, "shared A")?))
    } else {
        None
    };
    let mut samples = Vec::with_capacity(count);
    for i in 0..count {
        let a = match &shared_a {
            Some(a) => Arc::clone(a),
            None => Arc::new(c.mat(m, n, &format!("A of sample {i}"))?),
        };
        let x = c.mat(n, l, &format!("X of sample {i}"))?;
        let y = c.mat(m, l, &format!("Y of sample {i}"))?;
        samples.push(Sample::new(a, x, y, noise_var).map_err(ContainerError::Data)?);
    }
    // trailing garbage is a malformed file, not silently ignored
    let mut extra = [0u8; 1];
    match c.inner.read(&mut extra) {
        Ok(0) => {}
        Ok(_) => {
            return Err(ContainerError::Parse {
                offset: c.offset,
                what: "trailing bytes after final sample".into(),
            })
        }
        Err(e) => return Err(ContainerError::Io(e)),
    }
    Ok(Dataset::new(samples, shared)?)
}
