//! Append-only reverse-mode tape over dense matrices.
//!
//! The primitive set is exactly what the layer forward pass needs; the one
//! rule that matters is the solve adjoint. For `Z = solve_spd(S, B)`:
//!
//! ```text
//! B_adj = solve_spd(S, Z_adj)
//! S_adj = -sym(B_adj Z^T)
//! ```
//!
//! The Cholesky factor computed on the forward pass is cached on the `S`
//! node and reused by every solve against it, forward and backward.

use crate::mat::{self, Mat, MatError};
use std::collections::BTreeMap;
use std::sync::Arc;
use thiserror::Error;

pub type NodeId = usize;

#[derive(Debug, Error)]
pub enum TapeError {
    #[error(transparent)]
    Mat(#[from] MatError),
    #[error("backward root must be a 1x1 scalar, got {rows}x{cols}")]
    RootNotScalar { rows: usize, cols: usize },
    #[error("concat parts must be non-empty")]
    EmptyConcat,
    #[error("slice {start}..{end} out of bounds for node of length {len}")]
    BadSlice { start: usize, end: usize, len: usize },
}

/// Identifies one trainable tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct ParamKey {
    pub layer: usize,
    pub kind: ParamKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ParamKind {
    Weight,
    Bias,
}

#[derive(Debug, Clone)]
enum Op {
    Constant,
    Param(ParamKey),
    Matmul(NodeId, NodeId),
    SolveSpd(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    ElemMul(NodeId, NodeId),
    Relu(NodeId),
    Clamp(NodeId, f64, f64),
    Concat(Vec<NodeId>),
    Slice(NodeId, usize, usize),
    SumSq(NodeId),
    Transpose(NodeId),
    Scale(NodeId, f64),
}

struct Node {
    op: Op,
    value: Arc<Mat>,
    /// Cholesky factor, cached on the matrix that gets solved against.
    factor: Option<Arc<Mat>>,
    needs_grad: bool,
}

/// Gradients keyed by parameter, in deterministic order.
#[derive(Debug, Clone, Default)]
pub struct Gradients {
    by_param: BTreeMap<ParamKey, Mat>,
}

impl Gradients {
    pub fn get(&self, key: ParamKey) -> Option<&Mat> {
        self.by_param.get(&key)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ParamKey, &Mat)> {
        self.by_param.iter()
    }

    /// Accumulates `other` into `self`; keys must describe equal shapes.
    pub fn accumulate(&mut self, other: &Gradients) {
        for (k, g) in &other.by_param {
            match self.by_param.get_mut(k) {
                Some(acc) => {
                    for (a, b) in acc.as_mut_slice().iter_mut().zip(g.as_slice()) {
                        *a += b;
                    }
                }
                None => {
                    self.by_param.insert(*k, g.clone());
                }
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for g in self.by_param.values_mut() {
            for v in g.as_mut_slice() {
                *v *= s;
            }
        }
    }

    pub fn is_empty(&self) -> bool {
        self.by_param.is_empty()
    }
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Mat {
        &self.nodes[id].value
    }

    fn push(&mut self, op: Op, value: Mat, needs_grad: bool) -> NodeId {
        self.push_arc(op, Arc::new(value), needs_grad)
    }

    fn push_arc(&mut self, op: Op, value: Arc<Mat>, needs_grad: bool) -> NodeId {
        self.nodes.push(Node {
            op,
            value,
            factor: None,
            needs_grad,
        });
        self.nodes.len() - 1
    }

    fn ng(&self, id: NodeId) -> bool {
        self.nodes[id].needs_grad
    }

    pub fn constant(&mut self, value: Arc<Mat>) -> NodeId {
        self.push_arc(Op::Constant, value, false)
    }

    pub fn param(&mut self, key: ParamKey, value: Arc<Mat>) -> NodeId {
        self.push_arc(Op::Param(key), value, true)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TapeError> {
        let v = mat::matmul(self.value(a), self.value(b))?;
        Ok(self.push(Op::Matmul(a, b), v, self.ng(a) || self.ng(b)))
    }

    /// `Z` with `S Z = B`; factors `S` once and caches the factor on its node.
    pub fn solve_spd(&mut self, s: NodeId, b: NodeId) -> Result<NodeId, TapeError> {
        if self.nodes[s].factor.is_none() {
            let f = mat::cholesky_jittered(self.value(s))?;
            self.nodes[s].factor = Some(Arc::new(f));
        }
        let factor = Arc::clone(self.nodes[s].factor.as_ref().unwrap());
        let v = mat::solve_with_factor(&factor, self.value(b))?;
        Ok(self.push(Op::SolveSpd(s, b), v, self.ng(s) || self.ng(b)))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TapeError> {
        let v = self.value(a).add(self.value(b))?;
        Ok(self.push(Op::Add(a, b), v, self.ng(a) || self.ng(b)))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TapeError> {
        let v = self.value(a).sub(self.value(b))?;
        Ok(self.push(Op::Sub(a, b), v, self.ng(a) || self.ng(b)))
    }

    pub fn elem_mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TapeError> {
        let v = self.value(a).elem_mul(self.value(b))?;
        Ok(self.push(Op::ElemMul(a, b), v, self.ng(a) || self.ng(b)))
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(|x| x.max(0.0));
        self.push(Op::Relu(a), v, self.ng(a))
    }

    pub fn clamp(&mut self, a: NodeId, lo: f64, hi: f64) -> NodeId {
        let v = self.value(a).map(|x| x.clamp(lo, hi));
        self.push(Op::Clamp(a, lo, hi), v, self.ng(a))
    }

    /// Stacks the row-major data of `parts` into one column vector.
    pub fn concat(&mut self, parts: &[NodeId]) -> Result<NodeId, TapeError> {
        if parts.is_empty() {
            return Err(TapeError::EmptyConcat);
        }
        let mut data = Vec::new();
        let mut needs = false;
        for &p in parts {
            data.extend_from_slice(self.value(p).as_slice());
            needs |= self.ng(p);
        }
        let rows = data.len();
        let v = Mat::from_vec(rows, 1, data).expect("sized");
        Ok(self.push(Op::Concat(parts.to_vec()), v, needs))
    }

    /// Flat row-major range `[start, end)` of a node, as a column vector.
    pub fn slice(&mut self, a: NodeId, start: usize, end: usize) -> Result<NodeId, TapeError> {
        let len = self.value(a).len();
        if start > end || end > len {
            return Err(TapeError::BadSlice { start, end, len });
        }
        let data = self.value(a).as_slice()[start..end].to_vec();
        let v = Mat::from_vec(end - start, 1, data).expect("sized");
        Ok(self.push(Op::Slice(a, start, end), v, self.ng(a)))
    }

    /// Sum of squared entries, as a 1x1 node.
    pub fn sum_sq(&mut self, a: NodeId) -> NodeId {
        let v = Mat::from_vec(1, 1, vec![self.value(a).sum_sq()]).expect("sized");
        self.push(Op::SumSq(a), v, self.ng(a))
    }

    pub fn transpose(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).transpose();
        self.push(Op::Transpose(a), v, self.ng(a))
    }

    pub fn scale(&mut self, a: NodeId, s: f64) -> NodeId {
        let v = self.value(a).scale(s);
        self.push(Op::Scale(a, s), v, self.ng(a))
    }

    /// Reverse sweep from a scalar root; returns gradients for every
    /// trainable leaf reachable from it.
    pub fn backward(&mut self, root: NodeId) -> Result<Gradients, TapeError> {
        let (r, c) = self.value(root).shape();
        if (r, c) != (1, 1) {
            return Err(TapeError::RootNotScalar { rows: r, cols: c });
        }
        let mut grads = Gradients::default();
        if !self.ng(root) {
            return Ok(grads); // no trainable leaves feed the root
        }
        let mut adj: Vec<Option<Mat>> = (0..=root).map(|_| None).collect();
        adj[root] = Some(Mat::from_vec(1, 1, vec![1.0]).unwrap());

        for id in (0..=root).rev() {
            let Some(gbar) = adj[id].take() else { continue };
            if !self.ng(id) {
                continue;
            }
            macro_rules! accum {
                ($parent:expr, $delta:expr) => {{
                    let p: NodeId = $parent;
                    if self.ng(p) {
                        let delta: Mat = $delta;
                        match &mut adj[p] {
                            Some(acc) => {
                                for (a, d) in
                                    acc.as_mut_slice().iter_mut().zip(delta.as_slice())
                                {
                                    *a += d;
                                }
                            }
                            slot @ None => *slot = Some(delta),
                        }
                    }
                }};
            }
            match self.nodes[id].op.clone() {
                Op::Constant => {}
                Op::Param(key) => match grads.by_param.get_mut(&key) {
                    Some(acc) => {
                        for (a, d) in acc.as_mut_slice().iter_mut().zip(gbar.as_slice()) {
                            *a += d;
                        }
                    }
                    None => {
                        grads.by_param.insert(key, gbar);
                    }
                },
                Op::Matmul(a, b) => {
                    accum!(a, mat::matmul(&gbar, &self.value(b).transpose())?);
                    accum!(b, mat::matmul(&self.value(a).transpose(), &gbar)?);
                }
                Op::SolveSpd(s, b) => {
                    let factor = self.nodes[s].factor.as_ref().expect("factored on forward");
                    let bbar = mat::solve_with_factor(factor, &gbar)?;
                    if self.ng(s) {
                        let z = Arc::clone(&self.nodes[id].value);
                        let raw = mat::matmul(&bbar, &z.transpose())?;
                        let sym = raw.add(&raw.transpose())?.scale(-0.5);
                        accum!(s, sym);
                    }
                    accum!(b, bbar);
                }
                Op::Add(a, b) => {
                    accum!(a, gbar.clone());
                    accum!(b, gbar.clone());
                }
                Op::Sub(a, b) => {
                    accum!(a, gbar.clone());
                    accum!(b, gbar.scale(-1.0));
                }
                Op::ElemMul(a, b) => {
                    accum!(a, gbar.elem_mul(self.value(b))?);
                    accum!(b, gbar.elem_mul(self.value(a))?);
                }
                Op::Relu(a) => {
                    let mask = self.value(a).map(|x| if x > 0.0 { 1.0 } else { 0.0 });
                    accum!(a, gbar.elem_mul(&mask)?);
                }
                Op::Clamp(a, lo, hi) => {
                    // identity strictly inside the interval, zero outside
                    let mask = self
                        .value(a)
                        .map(|x| if x > lo && x < hi { 1.0 } else { 0.0 });
                    accum!(a, gbar.elem_mul(&mask)?);
                }
                Op::Concat(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let (pr, pc) = self.value(p).shape();
                        let len = pr * pc;
                        let chunk = gbar.as_slice()[offset..offset + len].to_vec();
                        accum!(p, Mat::from_vec(pr, pc, chunk).expect("sized"));
                        offset += len;
                    }
                }
                Op::Slice(a, start, _end) => {
                    let (pr, pc) = self.value(a).shape();
                    let mut scattered = Mat::zeros(pr, pc);
                    for (i, v) in gbar.as_slice().iter().enumerate() {
                        scattered.as_mut_slice()[start + i] = *v;
                    }
                    accum!(a, scattered);
                }
                Op::SumSq(a) => {
                    let s = gbar.get(0, 0);
                    accum!(a, self.value(a).scale(2.0 * s));
                }
                Op::Transpose(a) => {
                    accum!(a, gbar.transpose());
                }
                Op::Scale(a, s) => {
                    accum!(a, gbar.scale(s));
                }
            }
        }
        Ok(grads)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    const W: ParamKey = ParamKey {
        layer: 0,
        kind: ParamKind::Weight,
    };

    #[test]
    fn grad_of_norm_sq_matches_closed_form() {
        // f(W) = ||W u||^2, df/dW = 2 (W u) u^T
        let mut rng = Rng::new(1);
        let w = rng.gaussian(4, 3);
        let u = Arc::new(rng.gaussian(3, 1));
        let mut tape = Tape::new();
        let wid = tape.param(W, Arc::new(w.clone()));
        let uid = tape.constant(Arc::clone(&u));
        let wu = tape.matmul(wid, uid).unwrap();
        let loss = tape.sum_sq(wu);
        let grads = tape.backward(loss).unwrap();
        let got = grads.get(W).unwrap();
        let wu_val = mat::matmul(&w, &u).unwrap();
        let expect = mat::matmul(&wu_val.scale(2.0), &u.transpose()).unwrap();
        assert!(got.max_abs_diff(&expect) <= 1e-12);
    }

    #[test]
    fn relu_adjoint_zero_on_negative_preactivations() {
        let mut tape = Tape::new();
        let wid = tape.param(W, Arc::new(Mat::from_vec(2, 1, vec![-3.0, 2.0]).unwrap()));
        let r = tape.relu(wid);
        let loss = tape.sum_sq(r);
        let grads = tape.backward(loss).unwrap();
        let g = grads.get(W).unwrap();
        assert_eq!(g.get(0, 0), 0.0);
        assert!((g.get(1, 0) - 4.0).abs() < 1e-14);
    }

    #[test]
    fn clamp_adjoint_zero_outside_interval() {
        let mut tape = Tape::new();
        let wid = tape.param(W, Arc::new(Mat::from_vec(3, 1, vec![0.5, 5.0, -1.0]).unwrap()));
        let c = tape.clamp(wid, 0.0, 1.0);
        let loss = tape.sum_sq(c);
        let grads = tape.backward(loss).unwrap();
        let g = grads.get(W).unwrap();
        assert!((g.get(0, 0) - 1.0).abs() < 1e-14);
        assert_eq!(g.get(1, 0), 0.0);
        assert_eq!(g.get(2, 0), 0.0);
    }

    #[test]
    fn concat_slice_roundtrip_gradient() {
        let mut rng = Rng::new(2);
        let w = rng.gaussian(3, 1);
        let mut tape = Tape::new();
        let wid = tape.param(W, Arc::new(w.clone()));
        let c = Arc::new(rng.gaussian(2, 1));
        let cid = tape.constant(c);
        let cat = tape.concat(&[wid, cid]).unwrap();
        let sl = tape.slice(cat, 0, 3).unwrap(); // exactly the param block
        let loss = tape.sum_sq(sl);
        let grads = tape.backward(loss).unwrap();
        let g = grads.get(W).unwrap();
        assert!(g.max_abs_diff(&w.scale(2.0)) <= 1e-14);
    }

    /// Central finite differences on a scalar function of one coordinate.
    fn fd(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
        (f(x + h) - f(x - h)) / (2.0 * h)
    }

    #[test]
    fn solve_adjoint_matches_finite_differences() {
        // loss(S) = || S^{-1} B ||^2 with S = G + diag shift, perturbing one
        // symmetric pair of entries at a time
        let mut rng = Rng::new(3);
        let g = rng.gaussian(4, 4);
        let mut s0 = mat::matmul(&g, &g.transpose()).unwrap();
        s0.add_diag(2.0);
        let b = Arc::new(rng.gaussian(4, 2));

        let loss_of = |s: &Mat| -> f64 {
            mat::solve_spd(s, &b).unwrap().sum_sq()
        };

        let mut tape = Tape::new();
        let sid = tape.param(W, Arc::new(s0.clone()));
        let bid = tape.constant(Arc::clone(&b));
        let z = tape.solve_spd(sid, bid).unwrap();
        let loss = tape.sum_sq(z);
        let grads = tape.backward(loss).unwrap();
        let gs = grads.get(W).unwrap();

        let h = 1e-6;
        for (i, j) in [(0usize, 0usize), (1, 2), (3, 1), (2, 2)] {
            // symmetric perturbation: S += h (E_ij + E_ji) off-diagonal
            let fd_val = fd(
                |t| {
                    let mut s = s0.clone();
                    s.set(i, j, s.get(i, j) + (t - s0.get(i, j)));
                    if i != j {
                        s.set(j, i, s.get(j, i) + (t - s0.get(i, j)));
                    }
                    loss_of(&s)
                },
                s0.get(i, j),
                h,
            );
            // the symmetrized adjoint spreads a symmetric direction over both
            // entries, so compare against the sum
            let ad = if i == j {
                gs.get(i, j)
            } else {
                gs.get(i, j) + gs.get(j, i)
            };
            let rel = (ad - fd_val).abs() / fd_val.abs().max(1e-9);
            assert!(rel <= 1e-5, "({i},{j}): ad {ad} vs fd {fd_val}");
        }
    }

    #[test]
    fn frozen_branches_are_skipped() {
        let mut rng = Rng::new(4);
        let mut tape = Tape::new();
        let c1 = Arc::new(rng.gaussian(3, 3));
        let c2 = Arc::new(rng.gaussian(3, 1));
        let a = tape.constant(c1);
        let b = tape.constant(c2);
        let prod = tape.matmul(a, b).unwrap();
        let loss = tape.sum_sq(prod);
        let grads = tape.backward(loss).unwrap();
        assert!(grads.is_empty());
    }
}
