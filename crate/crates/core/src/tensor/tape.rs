//! Reverse-mode autodiff over a recorded operation tape.
//!
//! The tape covers exactly the ops the forecasting model needs: batched
//! matmul (right by a 2-D matrix, or left by a 2-D matrix onto a batched
//! operand), permute/reshape/concat/slice/repeat, layer norm over the
//! trailing axis, tanh, elementwise arithmetic, inverted dropout, and two
//! reductions (sum, mean of per-location norms).
//!
//! A tape and its node values are confined to a single worker. Tensors taken
//! off a tape are immutable values safe to share across workers.

use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::{linalg, numel_of, strides_of, Tensor};

pub const LAYER_NORM_EPS: f64 = 1e-6;

/// Whether stochastic layers (dropout) are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Handle to a node on a tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Tid(usize);

struct Node {
    shape: Vec<usize>,
    data: Arc<Vec<f64>>,
    op: Op,
    requires: bool,
}

enum Op {
    Leaf,
    Constant,
    /// a[..., p, q] . b[q, r]
    Matmul { a: Tid, b: Tid },
    /// a[p, q] . b[..., q, r], applied per batch slice of b
    MatmulLeft { a: Tid, b: Tid },
    Permute { x: Tid, order: Vec<usize> },
    Reshape { x: Tid },
    Concat { xs: Vec<Tid>, axis: usize },
    Slice { x: Tid, axis: usize, start: usize, len: usize },
    /// Insert a new axis of extent `copies` at `axis`; every slice is a copy.
    RepeatNewAxis { x: Tid, axis: usize, copies: usize },
    LayerNorm { x: Tid, scale: Tid, shift: Tid, xhat: Vec<f64>, inv_std: Vec<f64> },
    Tanh { x: Tid },
    Add { a: Tid, b: Tid },
    Sub { a: Tid, b: Tid },
    Mul { a: Tid, b: Tid },
    Scale { x: Tid, c: f64 },
    Dropout { x: Tid, mask: Vec<f64> },
    SumAll { x: Tid },
    /// Mean over locations of the (optionally squared) norm of pred - target
    /// taken along axis 0.
    JointNormMean { pred: Tid, target: Tid, eps: f64, squared: bool },
}

/// Recorded computation with reverse-mode gradients.
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
    completed: bool,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            grads: Vec::new(),
            completed: false,
        }
    }

    fn push(&mut self, shape: Vec<usize>, data: Vec<f64>, op: Op, requires: bool) -> Tid {
        assert!(
            !self.completed,
            "cannot record ops on a tape after backward"
        );
        debug_assert_eq!(numel_of(&shape), data.len());
        self.nodes.push(Node {
            shape,
            data: Arc::new(data),
            op,
            requires,
        });
        Tid(self.nodes.len() - 1)
    }

    /// Record a leaf; participates in gradients iff `t.requires_grad`.
    pub fn watch(&mut self, t: &Tensor) -> Tid {
        assert!(!self.completed, "cannot record ops on a tape after backward");
        let requires = t.requires_grad;
        self.nodes.push(Node {
            shape: t.shape().to_vec(),
            data: t.shared_data(),
            op: Op::Leaf,
            requires,
        });
        Tid(self.nodes.len() - 1)
    }

    /// Record a constant input; never receives a gradient.
    pub fn constant(&mut self, t: &Tensor) -> Tid {
        assert!(!self.completed, "cannot record ops on a tape after backward");
        self.nodes.push(Node {
            shape: t.shape().to_vec(),
            data: t.shared_data(),
            op: Op::Constant,
            requires: false,
        });
        Tid(self.nodes.len() - 1)
    }

    pub fn shape(&self, id: Tid) -> &[usize] {
        &self.nodes[id.0].shape
    }

    pub fn value(&self, id: Tid) -> &[f64] {
        &self.nodes[id.0].data
    }

    /// Value of a single-element node.
    pub fn scalar_value(&self, id: Tid) -> f64 {
        debug_assert_eq!(self.nodes[id.0].data.len(), 1);
        self.nodes[id.0].data[0]
    }

    /// Copy a node out as an immutable tensor (cheap; shares the buffer).
    pub fn tensor(&self, id: Tid) -> Tensor {
        Tensor::from_shared(self.nodes[id.0].shape.clone(), Arc::clone(&self.nodes[id.0].data))
    }

    pub fn assert_finite(&self, id: Tid, stage: &str) -> Result<()> {
        if self.nodes[id.0].data.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite {
                stage: stage.to_string(),
            })
        }
    }

    fn requires(&self, id: Tid) -> bool {
        self.nodes[id.0].requires
    }

    // ── Ops ──────────────────────────────────────────────────────────

    /// Batched matrix product over the trailing two axes of `a` by 2-D `b`.
    pub fn matmul(&mut self, a: Tid, b: Tid) -> Result<Tid> {
        let (ashape, bshape) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if ashape.len() < 2 || bshape.len() != 2 || ashape[ashape.len() - 1] != bshape[0] {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                lhs: ashape,
                rhs: bshape,
            });
        }
        let (p, q, r) = (ashape[ashape.len() - 2], bshape[0], bshape[1]);
        let batch = numel_of(&ashape) / (p * q);
        let mut out = vec![0.0; batch * p * r];
        let (adata, bdata) = (&self.nodes[a.0].data, &self.nodes[b.0].data);
        for bi in 0..batch {
            linalg::matmul_nn(
                &adata[bi * p * q..(bi + 1) * p * q],
                bdata,
                p,
                q,
                r,
                &mut out[bi * p * r..(bi + 1) * p * r],
            );
        }
        let mut shape = ashape;
        let last = shape.len() - 1;
        shape[last] = r;
        let req = self.requires(a) || self.requires(b);
        Ok(self.push(shape, out, Op::Matmul { a, b }, req))
    }

    /// 2-D `a` applied on the left of every trailing matrix slice of `b`.
    pub fn matmul_left(&mut self, a: Tid, b: Tid) -> Result<Tid> {
        let (ashape, bshape) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if ashape.len() != 2 || bshape.len() < 2 || ashape[1] != bshape[bshape.len() - 2] {
            return Err(Error::ShapeMismatch {
                op: "matmul_left",
                lhs: ashape,
                rhs: bshape,
            });
        }
        let (p, q) = (ashape[0], ashape[1]);
        let r = bshape[bshape.len() - 1];
        let batch = numel_of(&bshape) / (q * r);
        let mut out = vec![0.0; batch * p * r];
        let (adata, bdata) = (&self.nodes[a.0].data, &self.nodes[b.0].data);
        for bi in 0..batch {
            linalg::matmul_nn(
                adata,
                &bdata[bi * q * r..(bi + 1) * q * r],
                p,
                q,
                r,
                &mut out[bi * p * r..(bi + 1) * p * r],
            );
        }
        let mut shape = bshape;
        let sec = shape.len() - 2;
        shape[sec] = p;
        let req = self.requires(a) || self.requires(b);
        Ok(self.push(shape, out, Op::MatmulLeft { a, b }, req))
    }

    /// Reorder axes; `order` must be a permutation of `0..ndim`.
    pub fn permute(&mut self, x: Tid, order: &[usize]) -> Result<Tid> {
        let shape = self.shape(x).to_vec();
        let nd = shape.len();
        let mut seen = vec![false; nd];
        let valid = order.len() == nd
            && order.iter().all(|&ax| {
                if ax >= nd || seen[ax] {
                    false
                } else {
                    seen[ax] = true;
                    true
                }
            });
        if !valid {
            return Err(Error::invalid(format!(
                "permute: {order:?} is not a permutation of axes of {shape:?}"
            )));
        }
        let (out_shape, out) = permute_data(&self.nodes[x.0].data, &shape, order);
        let req = self.requires(x);
        Ok(self.push(
            out_shape,
            out,
            Op::Permute {
                x,
                order: order.to_vec(),
            },
            req,
        ))
    }

    /// Same data, new shape; element count must match.
    pub fn reshape(&mut self, x: Tid, shape: &[usize]) -> Result<Tid> {
        if numel_of(shape) != self.nodes[x.0].data.len() {
            return Err(Error::ShapeMismatch {
                op: "reshape",
                lhs: self.shape(x).to_vec(),
                rhs: shape.to_vec(),
            });
        }
        let data = self.nodes[x.0].data.to_vec();
        let req = self.requires(x);
        Ok(self.push(shape.to_vec(), data, Op::Reshape { x }, req))
    }

    /// Concatenate along `axis`; all other extents must match.
    pub fn concat(&mut self, xs: &[Tid], axis: usize) -> Result<Tid> {
        let first = xs
            .first()
            .ok_or_else(|| Error::invalid("concat: empty input list"))?;
        let base = self.shape(*first).to_vec();
        if axis >= base.len() {
            return Err(Error::invalid(format!(
                "concat: axis {axis} out of range for shape {base:?}"
            )));
        }
        let mut total = 0;
        for &x in xs {
            let s = self.shape(x);
            let compatible = s.len() == base.len()
                && s.iter()
                    .zip(&base)
                    .enumerate()
                    .all(|(i, (a, b))| i == axis || a == b);
            if !compatible {
                return Err(Error::ShapeMismatch {
                    op: "concat",
                    lhs: base,
                    rhs: s.to_vec(),
                });
            }
            total += s[axis];
        }
        let mut out_shape = base.clone();
        out_shape[axis] = total;
        let outer: usize = base[..axis].iter().product();
        let inner: usize = base[axis + 1..].iter().product();
        let mut out = vec![0.0; numel_of(&out_shape)];
        let row = total * inner;
        let mut offset = 0;
        for &x in xs {
            let extent = self.shape(x)[axis];
            let chunk = extent * inner;
            let data = &self.nodes[x.0].data;
            for o in 0..outer {
                out[o * row + offset..o * row + offset + chunk]
                    .copy_from_slice(&data[o * chunk..(o + 1) * chunk]);
            }
            offset += chunk;
        }
        let req = xs.iter().any(|&x| self.requires(x));
        Ok(self.push(
            out_shape,
            out,
            Op::Concat {
                xs: xs.to_vec(),
                axis,
            },
            req,
        ))
    }

    /// Contiguous sub-range `start..start+len` along `axis`.
    pub fn slice_axis(&mut self, x: Tid, axis: usize, start: usize, len: usize) -> Result<Tid> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() || start + len > shape[axis] || len == 0 {
            return Err(Error::invalid(format!(
                "slice_axis: range {start}..{} invalid for axis {axis} of {shape:?}",
                start + len
            )));
        }
        let outer: usize = shape[..axis].iter().product();
        let inner: usize = shape[axis + 1..].iter().product();
        let full = shape[axis] * inner;
        let chunk = len * inner;
        let data = &self.nodes[x.0].data;
        let mut out = vec![0.0; outer * chunk];
        for o in 0..outer {
            out[o * chunk..(o + 1) * chunk]
                .copy_from_slice(&data[o * full + start * inner..o * full + start * inner + chunk]);
        }
        let mut out_shape = shape;
        out_shape[axis] = len;
        let req = self.requires(x);
        Ok(self.push(
            out_shape,
            out,
            Op::Slice {
                x,
                axis,
                start,
                len,
            },
            req,
        ))
    }

    /// Insert a new axis of extent `copies` at position `axis`, each slice a
    /// copy of the input.
    pub fn repeat_new_axis(&mut self, x: Tid, axis: usize, copies: usize) -> Result<Tid> {
        let shape = self.shape(x).to_vec();
        if axis > shape.len() || copies == 0 {
            return Err(Error::invalid(format!(
                "repeat_new_axis: axis {axis} / copies {copies} invalid for {shape:?}"
            )));
        }
        let outer: usize = shape[..axis].iter().product();
        let block: usize = shape[axis..].iter().product();
        let data = &self.nodes[x.0].data;
        let mut out = vec![0.0; outer * copies * block];
        for o in 0..outer {
            let src = &data[o * block..(o + 1) * block];
            for c in 0..copies {
                out[(o * copies + c) * block..(o * copies + c + 1) * block].copy_from_slice(src);
            }
        }
        let mut out_shape = shape;
        out_shape.insert(axis, copies);
        let req = self.requires(x);
        Ok(self.push(out_shape, out, Op::RepeatNewAxis { x, axis, copies }, req))
    }

    /// Normalize over the trailing axis, then apply per-channel scale/shift.
    pub fn layer_norm(&mut self, x: Tid, scale: Tid, shift: Tid) -> Result<Tid> {
        let shape = self.shape(x).to_vec();
        let c = *shape
            .last()
            .ok_or_else(|| Error::invalid("layer_norm needs rank >= 1"))?;
        if c < 2 {
            return Err(Error::invalid(format!(
                "layer_norm: channel extent {c} < 2 leaves variance undefined"
            )));
        }
        for (name, t) in [("scale", scale), ("shift", shift)] {
            if self.shape(t) != [c] {
                return Err(Error::invalid(format!(
                    "layer_norm: {name} shape {:?} does not match channel extent {c}",
                    self.shape(t)
                )));
            }
        }
        let rows = numel_of(&shape) / c;
        let data = &self.nodes[x.0].data;
        let (gamma, beta) = (&self.nodes[scale.0].data, &self.nodes[shift.0].data);
        let mut xhat = vec![0.0; rows * c];
        let mut inv_std = vec![0.0; rows];
        let mut out = vec![0.0; rows * c];
        for r in 0..rows {
            let row = &data[r * c..(r + 1) * c];
            let mean = row.iter().sum::<f64>() / c as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / c as f64;
            let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            inv_std[r] = inv;
            for j in 0..c {
                let h = (row[j] - mean) * inv;
                xhat[r * c + j] = h;
                out[r * c + j] = h * gamma[j] + beta[j];
            }
        }
        let req = self.requires(x) || self.requires(scale) || self.requires(shift);
        Ok(self.push(
            shape,
            out,
            Op::LayerNorm {
                x,
                scale,
                shift,
                xhat,
                inv_std,
            },
            req,
        ))
    }

    pub fn tanh(&mut self, x: Tid) -> Tid {
        let out: Vec<f64> = self.nodes[x.0].data.iter().map(|v| v.tanh()).collect();
        let shape = self.shape(x).to_vec();
        let req = self.requires(x);
        self.push(shape, out, Op::Tanh { x }, req)
    }

    pub fn add(&mut self, a: Tid, b: Tid) -> Result<Tid> {
        self.zip_op("add", a, b, |x, y| x + y, |a, b| Op::Add { a, b })
    }

    pub fn sub(&mut self, a: Tid, b: Tid) -> Result<Tid> {
        self.zip_op("sub", a, b, |x, y| x - y, |a, b| Op::Sub { a, b })
    }

    pub fn mul(&mut self, a: Tid, b: Tid) -> Result<Tid> {
        self.zip_op("mul", a, b, |x, y| x * y, |a, b| Op::Mul { a, b })
    }

    fn zip_op(
        &mut self,
        name: &'static str,
        a: Tid,
        b: Tid,
        f: impl Fn(f64, f64) -> f64,
        op: impl Fn(Tid, Tid) -> Op,
    ) -> Result<Tid> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::ShapeMismatch {
                op: name,
                lhs: self.shape(a).to_vec(),
                rhs: self.shape(b).to_vec(),
            });
        }
        let out: Vec<f64> = self.nodes[a.0]
            .data
            .iter()
            .zip(self.nodes[b.0].data.iter())
            .map(|(x, y)| f(*x, *y))
            .collect();
        let shape = self.shape(a).to_vec();
        let req = self.requires(a) || self.requires(b);
        Ok(self.push(shape, out, op(a, b), req))
    }

    pub fn scale_by(&mut self, x: Tid, c: f64) -> Tid {
        let out: Vec<f64> = self.nodes[x.0].data.iter().map(|v| v * c).collect();
        let shape = self.shape(x).to_vec();
        let req = self.requires(x);
        self.push(shape, out, Op::Scale { x, c }, req)
    }

    /// Inverted dropout: in train mode each element is zeroed with probability
    /// `rate` and survivors are scaled by 1/(1-rate); eval mode is the
    /// identity (returns the input id unchanged).
    pub fn dropout(&mut self, x: Tid, rate: f64, mode: Mode, rng: &mut impl Rng) -> Result<Tid> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::invalid(format!(
                "dropout: rate {rate} outside [0, 1)"
            )));
        }
        if mode == Mode::Eval || rate == 0.0 {
            return Ok(x);
        }
        let keep = 1.0 / (1.0 - rate);
        let n = self.nodes[x.0].data.len();
        let mask: Vec<f64> = (0..n)
            .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
            .collect();
        let out: Vec<f64> = self.nodes[x.0]
            .data
            .iter()
            .zip(&mask)
            .map(|(v, m)| v * m)
            .collect();
        let shape = self.shape(x).to_vec();
        let req = self.requires(x);
        Ok(self.push(shape, out, Op::Dropout { x, mask }, req))
    }

    /// Sum of all elements, as a rank-0 scalar.
    pub fn sum_all(&mut self, x: Tid) -> Tid {
        let s: f64 = self.nodes[x.0].data.iter().sum();
        let req = self.requires(x);
        self.push(vec![], vec![s], Op::SumAll { x }, req)
    }

    /// Mean over locations of the norm (or squared norm) along axis 0 of
    /// `pred - target`. With `eps > 0` the norm is smoothed as
    /// sqrt(|d|^2 + eps); with `eps == 0` the subgradient 0 is used at zero.
    pub fn joint_norm_mean(
        &mut self,
        pred: Tid,
        target: Tid,
        eps: f64,
        squared: bool,
    ) -> Result<Tid> {
        if self.shape(pred) != self.shape(target) {
            return Err(Error::ShapeMismatch {
                op: "joint_norm_mean",
                lhs: self.shape(pred).to_vec(),
                rhs: self.shape(target).to_vec(),
            });
        }
        let shape = self.shape(pred);
        if shape.is_empty() {
            return Err(Error::invalid("joint_norm_mean needs rank >= 1"));
        }
        let c = shape[0];
        let locs = numel_of(shape) / c;
        let (p, t) = (&self.nodes[pred.0].data, &self.nodes[target.0].data);
        let mut acc = 0.0;
        for loc in 0..locs {
            let mut sq = 0.0;
            for ch in 0..c {
                let d = p[ch * locs + loc] - t[ch * locs + loc];
                sq += d * d;
            }
            acc += if squared { sq } else { (sq + eps).sqrt() };
        }
        let val = acc / locs as f64;
        let req = self.requires(pred) || self.requires(target);
        Ok(self.push(
            vec![],
            vec![val],
            Op::JointNormMean {
                pred,
                target,
                eps,
                squared,
            },
            req,
        ))
    }

    // ── Backward ─────────────────────────────────────────────────────

    /// Reverse pass from a scalar loss; populates gradients for every
    /// `requires_grad` leaf reachable from it.
    pub fn backward(&mut self, loss: Tid) -> Result<()> {
        if self.completed {
            return Err(Error::invalid(
                "backward already ran on this tape; record a fresh tape instead",
            ));
        }
        if loss.0 >= self.nodes.len() {
            return Err(Error::invalid("backward: loss is not a node of this tape"));
        }
        if self.nodes[loss.0].data.len() != 1 {
            return Err(Error::invalid(format!(
                "backward requires a scalar loss, got shape {:?}",
                self.nodes[loss.0].shape
            )));
        }
        if !self.nodes[loss.0].requires {
            return Err(Error::invalid(
                "backward: loss is detached from every requires_grad leaf",
            ));
        }

        let mut grads: Vec<Option<Vec<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires {
                continue;
            }
            if matches!(self.nodes[i].op, Op::Leaf | Op::Constant) {
                continue; // keep accumulated grad in place
            }
            let Some(g) = grads[i].take() else { continue };
            self.backward_op(i, &g, &mut grads);
        }

        self.grads = grads;
        self.completed = true;
        Ok(())
    }

    fn backward_op(&self, i: usize, g: &[f64], grads: &mut Vec<Option<Vec<f64>>>) {
        let acc = |grads: &mut Vec<Option<Vec<f64>>>, id: Tid, contrib: &[f64]| {
            let slot = &mut grads[id.0];
            match slot {
                Some(existing) => {
                    for (e, c) in existing.iter_mut().zip(contrib) {
                        *e += c;
                    }
                }
                None => *slot = Some(contrib.to_vec()),
            }
        };
        let numel = |id: Tid| self.nodes[id.0].data.len();

        match &self.nodes[i].op {
            Op::Leaf | Op::Constant => {}

            Op::Matmul { a, b } => {
                let ashape = &self.nodes[a.0].shape;
                let (p, q) = (ashape[ashape.len() - 2], ashape[ashape.len() - 1]);
                let r = self.nodes[b.0].shape[1];
                let batch = numel(*a) / (p * q);
                let (adata, bdata) = (&self.nodes[a.0].data, &self.nodes[b.0].data);
                if self.requires(*a) {
                    let mut da = vec![0.0; numel(*a)];
                    for bi in 0..batch {
                        linalg::matmul_nt(
                            &g[bi * p * r..(bi + 1) * p * r],
                            bdata,
                            p,
                            r,
                            q,
                            &mut da[bi * p * q..(bi + 1) * p * q],
                        );
                    }
                    acc(grads, *a, &da);
                }
                if self.requires(*b) {
                    let mut db = vec![0.0; numel(*b)];
                    for bi in 0..batch {
                        linalg::matmul_tn_acc(
                            &adata[bi * p * q..(bi + 1) * p * q],
                            &g[bi * p * r..(bi + 1) * p * r],
                            p,
                            q,
                            r,
                            &mut db,
                        );
                    }
                    acc(grads, *b, &db);
                }
            }

            Op::MatmulLeft { a, b } => {
                let (p, q) = (self.nodes[a.0].shape[0], self.nodes[a.0].shape[1]);
                let bshape = &self.nodes[b.0].shape;
                let r = bshape[bshape.len() - 1];
                let batch = numel(*b) / (q * r);
                let (adata, bdata) = (&self.nodes[a.0].data, &self.nodes[b.0].data);
                if self.requires(*a) {
                    let mut da = vec![0.0; p * q];
                    let mut tmp = vec![0.0; p * q];
                    for bi in 0..batch {
                        linalg::matmul_nt(
                            &g[bi * p * r..(bi + 1) * p * r],
                            &bdata[bi * q * r..(bi + 1) * q * r],
                            p,
                            r,
                            q,
                            &mut tmp,
                        );
                        for (d, t) in da.iter_mut().zip(&tmp) {
                            *d += t;
                        }
                    }
                    acc(grads, *a, &da);
                }
                if self.requires(*b) {
                    let mut db = vec![0.0; numel(*b)];
                    for bi in 0..batch {
                        linalg::matmul_tn_acc(
                            adata,
                            &g[bi * p * r..(bi + 1) * p * r],
                            p,
                            q,
                            r,
                            &mut db[bi * q * r..(bi + 1) * q * r],
                        );
                    }
                    acc(grads, *b, &db);
                }
            }

            Op::Permute { x, order } => {
                if self.requires(*x) {
                    let mut inverse = vec![0usize; order.len()];
                    for (i, &ax) in order.iter().enumerate() {
                        inverse[ax] = i;
                    }
                    let (_, gx) = permute_data(g, &self.nodes[i].shape, &inverse);
                    acc(grads, *x, &gx);
                }
            }

            Op::Reshape { x } => {
                if self.requires(*x) {
                    acc(grads, *x, g);
                }
            }

            Op::Concat { xs, axis } => {
                let out_shape = &self.nodes[i].shape;
                let outer: usize = out_shape[..*axis].iter().product();
                let inner: usize = out_shape[*axis + 1..].iter().product();
                let row = out_shape[*axis] * inner;
                let mut offset = 0;
                for &x in xs {
                    let extent = self.nodes[x.0].shape[*axis];
                    let chunk = extent * inner;
                    if self.requires(x) {
                        let mut gx = vec![0.0; numel(x)];
                        for o in 0..outer {
                            gx[o * chunk..(o + 1) * chunk]
                                .copy_from_slice(&g[o * row + offset..o * row + offset + chunk]);
                        }
                        acc(grads, x, &gx);
                    }
                    offset += chunk;
                }
            }

            Op::Slice {
                x,
                axis,
                start,
                len,
            } => {
                if self.requires(*x) {
                    let in_shape = &self.nodes[x.0].shape;
                    let outer: usize = in_shape[..*axis].iter().product();
                    let inner: usize = in_shape[*axis + 1..].iter().product();
                    let full = in_shape[*axis] * inner;
                    let chunk = len * inner;
                    let mut gx = vec![0.0; numel(*x)];
                    for o in 0..outer {
                        gx[o * full + start * inner..o * full + start * inner + chunk]
                            .copy_from_slice(&g[o * chunk..(o + 1) * chunk]);
                    }
                    acc(grads, *x, &gx);
                }
            }

            Op::RepeatNewAxis { x, axis, copies } => {
                if self.requires(*x) {
                    let in_shape = &self.nodes[x.0].shape;
                    let outer: usize = in_shape[..*axis].iter().product();
                    let block: usize = in_shape[*axis..].iter().product();
                    let mut gx = vec![0.0; numel(*x)];
                    for o in 0..outer {
                        for c in 0..*copies {
                            let src = &g[(o * copies + c) * block..(o * copies + c + 1) * block];
                            for (d, s) in gx[o * block..(o + 1) * block].iter_mut().zip(src) {
                                *d += s;
                            }
                        }
                    }
                    acc(grads, *x, &gx);
                }
            }

            Op::LayerNorm {
                x,
                scale,
                shift,
                xhat,
                inv_std,
            } => {
                let c = *self.nodes[i].shape.last().unwrap();
                let rows = numel(*x) / c;
                let gamma = &self.nodes[scale.0].data;
                if self.requires(*scale) {
                    let mut gs = vec![0.0; c];
                    for r in 0..rows {
                        for j in 0..c {
                            gs[j] += g[r * c + j] * xhat[r * c + j];
                        }
                    }
                    acc(grads, *scale, &gs);
                }
                if self.requires(*shift) {
                    let mut gb = vec![0.0; c];
                    for r in 0..rows {
                        for j in 0..c {
                            gb[j] += g[r * c + j];
                        }
                    }
                    acc(grads, *shift, &gb);
                }
                if self.requires(*x) {
                    let mut gx = vec![0.0; rows * c];
                    let cf = c as f64;
                    for r in 0..rows {
                        let mut mean_dxh = 0.0;
                        let mut mean_dxh_xhat = 0.0;
                        for j in 0..c {
                            let dxh = g[r * c + j] * gamma[j];
                            mean_dxh += dxh;
                            mean_dxh_xhat += dxh * xhat[r * c + j];
                        }
                        mean_dxh /= cf;
                        mean_dxh_xhat /= cf;
                        for j in 0..c {
                            let dxh = g[r * c + j] * gamma[j];
                            gx[r * c + j] =
                                inv_std[r] * (dxh - mean_dxh - xhat[r * c + j] * mean_dxh_xhat);
                        }
                    }
                    acc(grads, *x, &gx);
                }
            }

            Op::Tanh { x } => {
                if self.requires(*x) {
                    let y = &self.nodes[i].data;
                    let gx: Vec<f64> = g.iter().zip(y.iter()).map(|(gv, yv)| gv * (1.0 - yv * yv)).collect();
                    acc(grads, *x, &gx);
                }
            }

            Op::Add { a, b } => {
                if self.requires(*a) {
                    acc(grads, *a, g);
                }
                if self.requires(*b) {
                    acc(grads, *b, g);
                }
            }

            Op::Sub { a, b } => {
                if self.requires(*a) {
                    acc(grads, *a, g);
                }
                if self.requires(*b) {
                    let neg: Vec<f64> = g.iter().map(|v| -v).collect();
                    acc(grads, *b, &neg);
                }
            }

            Op::Mul { a, b } => {
                if self.requires(*a) {
                    let gx: Vec<f64> = g
                        .iter()
                        .zip(self.nodes[b.0].data.iter())
                        .map(|(gv, bv)| gv * bv)
                        .collect();
                    acc(grads, *a, &gx);
                }
                if self.requires(*b) {
                    let gx: Vec<f64> = g
                        .iter()
                        .zip(self.nodes[a.0].data.iter())
                        .map(|(gv, av)| gv * av)
                        .collect();
                    acc(grads, *b, &gx);
                }
            }

            Op::Scale { x, c } => {
                if self.requires(*x) {
                    let gx: Vec<f64> = g.iter().map(|v| v * c).collect();
                    acc(grads, *x, &gx);
                }
            }

            Op::Dropout { x, mask } => {
                if self.requires(*x) {
                    let gx: Vec<f64> = g.iter().zip(mask).map(|(gv, m)| gv * m).collect();
                    acc(grads, *x, &gx);
                }
            }

            Op::SumAll { x } => {
                if self.requires(*x) {
                    let gx = vec![g[0]; numel(*x)];
                    acc(grads, *x, &gx);
                }
            }

            Op::JointNormMean {
                pred,
                target,
                eps,
                squared,
            } => {
                let shape = &self.nodes[pred.0].shape;
                let c = shape[0];
                let locs = numel(*pred) / c;
                let (p, t) = (&self.nodes[pred.0].data, &self.nodes[target.0].data);
                let scale = g[0] / locs as f64;
                let mut gp = vec![0.0; numel(*pred)];
                for loc in 0..locs {
                    let mut sq = 0.0;
                    for ch in 0..c {
                        let d = p[ch * locs + loc] - t[ch * locs + loc];
                        sq += d * d;
                    }
                    if *squared {
                        for ch in 0..c {
                            let d = p[ch * locs + loc] - t[ch * locs + loc];
                            gp[ch * locs + loc] = scale * 2.0 * d;
                        }
                    } else {
                        let denom = (sq + eps).sqrt();
                        if denom > 0.0 {
                            for ch in 0..c {
                                let d = p[ch * locs + loc] - t[ch * locs + loc];
                                gp[ch * locs + loc] = scale * d / denom;
                            }
                        }
                        // denom == 0 only when eps == 0 and pred == target:
                        // subgradient 0.
                    }
                }
                if self.requires(*pred) {
                    acc(grads, *pred, &gp);
                }
                if self.requires(*target) {
                    let gt: Vec<f64> = gp.iter().map(|v| -v).collect();
                    acc(grads, *target, &gt);
                }
            }
        }
    }

    /// Gradient of a node, available after `backward`. `None` when no
    /// gradient flowed to it.
    pub fn grad(&self, id: Tid) -> Option<&[f64]> {
        self.grads.get(id.0).and_then(|g| g.as_deref())
    }

    /// Copy the accumulated gradient into the tensor's grad slot (zeros when
    /// no gradient flowed).
    pub fn write_grad(&self, id: Tid, t: &mut Tensor) {
        t.grad = Some(match self.grad(id) {
            Some(g) => g.to_vec(),
            None => vec![0.0; t.numel()],
        });
    }
}

fn permute_data(data: &[f64], shape: &[usize], order: &[usize]) -> (Vec<usize>, Vec<f64>) {
    let nd = shape.len();
    let out_shape: Vec<usize> = order.iter().map(|&ax| shape[ax]).collect();
    let in_strides = strides_of(shape);
    let step: Vec<usize> = order.iter().map(|&ax| in_strides[ax]).collect();
    let n = data.len();
    let mut out = vec![0.0; n];
    if nd == 0 {
        out.copy_from_slice(data);
        return (out_shape, out);
    }
    let mut idx = vec![0usize; nd];
    let mut in_off = 0usize;
    for slot in out.iter_mut() {
        *slot = data[in_off];
        for ax in (0..nd).rev() {
            idx[ax] += 1;
            in_off += step[ax];
            if idx[ax] < out_shape[ax] {
                break;
            }
            idx[ax] = 0;
            in_off -= step[ax] * out_shape[ax];
        }
    }
    (out_shape, out)
}
