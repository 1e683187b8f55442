//! Reverse-mode automatic differentiation on a flat tape.
//!
//! A [`Graph`] owns every tensor produced during a forward pass. Each op
//! pushes one node recording its kind and input ids, so the tape is already
//! topologically ordered and [`Graph::backward`] is a single reverse sweep.
//! Gradients accumulate (`+=`) into `Tensor::grad` across backward calls and
//! are cleared only by [`Graph::zero_grads`].
//!
//! The op set is deliberately small: dense matrix product, same-padding 2-D
//! convolution, a handful of elementwise maps, shape plumbing (reshape, pad,
//! slice, concat), softmax/mean reductions, the zero-order-hold input factor
//! used by the state-space layer, and a fused log-sum-exp classification
//! loss. Every backward rule is checked against central finite differences
//! in the test block at the bottom of this file.

use crate::error::{Error, Result};
use crate::real::{sigmoid, softplus, Real};
use crate::tensor::Tensor;

pub type NodeId = usize;

/// Smallest |delta * a| for which the closed-form zero-order-hold factor is
/// evaluated directly; below it a second-order series avoids 0/0.
pub const ZOH_SERIES_THRESHOLD: f64 = 1e-6;

#[derive(Debug, Clone)]
enum Op<T> {
    Leaf,
    Add { a: NodeId, b: NodeId },
    Sub { a: NodeId, b: NodeId },
    Mul { a: NodeId, b: NodeId },
    Scale { x: NodeId, c: T },
    AddBias { x: NodeId, b: NodeId },
    ScaleRows { x: NodeId, v: NodeId },
    MatMul { a: NodeId, b: NodeId },
    Transpose2 { x: NodeId },
    Permute3 { x: NodeId, perm: [usize; 3] },
    Reshape { x: NodeId },
    PadEnd { x: NodeId },
    TakePrefix { x: NodeId },
    TakeRow { x: NodeId, row: usize },
    ConcatRows { xs: Vec<NodeId> },
    Silu { x: NodeId },
    Softplus { x: NodeId },
    Exp { x: NodeId },
    Log { x: NodeId },
    SoftmaxAxis { x: NodeId, axis: usize },
    MeanPool { x: NodeId, axis: usize },
    SumAll { x: NodeId },
    ZohPhi { a: NodeId, delta: NodeId },
    Conv2dSame { x: NodeId, k: NodeId },
    NllLogits { logits: NodeId, target: usize },
}

struct Node<T: Real> {
    op: Op<T>,
    t: Tensor<T>,
}

pub struct Graph<T: Real> {
    nodes: Vec<Node<T>>,
}

impl<T: Real> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Graph<T> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    // ── Node access ─────────────────────────────────────────────────────

    pub fn tensor(&self, id: NodeId) -> &Tensor<T> {
        &self.nodes[id].t
    }

    pub fn data(&self, id: NodeId) -> &[T] {
        &self.nodes[id].t.data
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        &self.nodes[id].t.shape
    }

    /// Accumulated gradient of `id`, if a backward pass has reached it.
    pub fn grad(&self, id: NodeId) -> Option<&[T]> {
        self.nodes[id].t.grad.as_deref()
    }

    pub fn zero_grads(&mut self) {
        for n in &mut self.nodes {
            n.t.grad = None;
        }
    }

    fn check_id(&self, id: NodeId, what: &str) -> Result<()> {
        if id >= self.nodes.len() {
            return Err(Error::Contract(format!(
                "{what}: node id {id} not in graph of {} nodes",
                self.nodes.len()
            )));
        }
        Ok(())
    }

    fn push(&mut self, op: Op<T>, mut t: Tensor<T>, requires_grad: bool) -> NodeId {
        t.requires_grad = requires_grad;
        t.grad = None;
        self.nodes.push(Node { op, t });
        self.nodes.len() - 1
    }

    fn requires(&self, id: NodeId) -> bool {
        self.nodes[id].t.requires_grad
    }

    // ── Leaves ──────────────────────────────────────────────────────────

    /// Insert `t` as a leaf; its `requires_grad` flag is kept as-is.
    pub fn leaf(&mut self, t: Tensor<T>) -> NodeId {
        let rg = t.requires_grad;
        self.push(Op::Leaf, t, rg)
    }

    /// Leaf that does not participate in differentiation.
    pub fn constant(&mut self, data: Vec<T>, shape: &[usize]) -> Result<NodeId> {
        Ok(self.leaf(Tensor::from_vec(data, shape)?))
    }

    /// Leaf that collects gradient (a trainable parameter).
    pub fn param(&mut self, data: Vec<T>, shape: &[usize]) -> Result<NodeId> {
        Ok(self.leaf(Tensor::from_vec(data, shape)?.with_grad()))
    }

    // ── Elementwise and linear ops ──────────────────────────────────────

    fn binary_same_shape(&mut self, a: NodeId, b: NodeId, name: &str) -> Result<()> {
        self.check_id(a, name)?;
        self.check_id(b, name)?;
        if self.nodes[a].t.shape != self.nodes[b].t.shape {
            return Err(Error::Dimension(format!(
                "{name}: shape {:?} vs {:?}",
                self.nodes[a].t.shape, self.nodes[b].t.shape
            )));
        }
        Ok(())
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary_same_shape(a, b, "add")?;
        let data = self.nodes[a]
            .t
            .data
            .iter()
            .zip(&self.nodes[b].t.data)
            .map(|(x, y)| *x + *y)
            .collect();
        let t = Tensor::from_vec(data, &self.nodes[a].t.shape.clone())?;
        let rg = self.requires(a) || self.requires(b);
        Ok(self.push(Op::Add { a, b }, t, rg))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary_same_shape(a, b, "sub")?;
        let data = self.nodes[a]
            .t
            .data
            .iter()
            .zip(&self.nodes[b].t.data)
            .map(|(x, y)| *x - *y)
            .collect();
        let t = Tensor::from_vec(data, &self.nodes[a].t.shape.clone())?;
        let rg = self.requires(a) || self.requires(b);
        Ok(self.push(Op::Sub { a, b }, t, rg))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary_same_shape(a, b, "mul")?;
        let data = self.nodes[a]
            .t
            .data
            .iter()
            .zip(&self.nodes[b].t.data)
            .map(|(x, y)| *x * *y)
            .collect();
        let t = Tensor::from_vec(data, &self.nodes[a].t.shape.clone())?;
        let rg = self.requires(a) || self.requires(b);
        Ok(self.push(Op::Mul { a, b }, t, rg))
    }

    /// Multiply every element by the compile-time constant `c`.
    pub fn scale(&mut self, x: NodeId, c: T) -> Result<NodeId> {
        self.check_id(x, "scale")?;
        let data = self.nodes[x].t.data.iter().map(|v| *v * c).collect();
        let t = Tensor::from_vec(data, &self.nodes[x].t.shape.clone())?;
        let rg = self.requires(x);
        Ok(self.push(Op::Scale { x, c }, t, rg))
    }

    /// `x: [r, c] + b: [c]`, bias broadcast over rows.
    pub fn add_bias(&mut self, x: NodeId, b: NodeId) -> Result<NodeId> {
        self.check_id(x, "add_bias")?;
        self.check_id(b, "add_bias")?;
        let (xs, bs) = (&self.nodes[x].t.shape, &self.nodes[b].t.shape);
        if xs.len() != 2 || bs.len() != 1 || bs[0] != xs[1] {
            return Err(Error::Dimension(format!(
                "add_bias: x {:?} with bias {:?}",
                xs, bs
            )));
        }
        let (r, c) = (xs[0], xs[1]);
        let mut data = Vec::with_capacity(r * c);
        for i in 0..r {
            for j in 0..c {
                data.push(self.nodes[x].t.data[i * c + j] + self.nodes[b].t.data[j]);
            }
        }
        let t = Tensor::from_vec(data, &[r, c])?;
        let rg = self.requires(x) || self.requires(b);
        Ok(self.push(Op::AddBias { x, b }, t, rg))
    }

    /// `x: [r, c]` with row `i` multiplied by `v[i]`.
    pub fn scale_rows(&mut self, x: NodeId, v: NodeId) -> Result<NodeId> {
        self.check_id(x, "scale_rows")?;
        self.check_id(v, "scale_rows")?;
        let (xs, vs) = (&self.nodes[x].t.shape, &self.nodes[v].t.shape);
        if xs.len() != 2 || vs.len() != 1 || vs[0] != xs[0] {
            return Err(Error::Dimension(format!(
                "scale_rows: x {:?} with row factors {:?}",
                xs, vs
            )));
        }
        let (r, c) = (xs[0], xs[1]);
        let mut data = Vec::with_capacity(r * c);
        for i in 0..r {
            let f = self.nodes[v].t.data[i];
            for j in 0..c {
                data.push(self.nodes[x].t.data[i * c + j] * f);
            }
        }
        let t = Tensor::from_vec(data, &[r, c])?;
        let rg = self.requires(x) || self.requires(v);
        Ok(self.push(Op::ScaleRows { x, v }, t, rg))
    }

    /// Dense product `[m, k] x [k, n] -> [m, n]`.
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.check_id(a, "matmul")?;
        self.check_id(b, "matmul")?;
        let (sa, sb) = (&self.nodes[a].t.shape, &self.nodes[b].t.shape);
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::Dimension(format!(
                "matmul: lhs {:?} incompatible with rhs {:?}",
                sa, sb
            )));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let (da, db) = (&self.nodes[a].t.data, &self.nodes[b].t.data);
        let mut data = vec![T::zero(); m * n];
        for i in 0..m {
            for l in 0..k {
                let ail = da[i * k + l];
                for j in 0..n {
                    data[i * n + j] = data[i * n + j] + ail * db[l * n + j];
                }
            }
        }
        let t = Tensor::from_vec(data, &[m, n])?;
        let rg = self.requires(a) || self.requires(b);
        Ok(self.push(Op::MatMul { a, b }, t, rg))
    }

    pub fn transpose2(&mut self, x: NodeId) -> Result<NodeId> {
        self.check_id(x, "transpose2")?;
        let s = &self.nodes[x].t.shape;
        if s.len() != 2 {
            return Err(Error::Dimension(format!("transpose2: rank-2 required, got {:?}", s)));
        }
        let (r, c) = (s[0], s[1]);
        let src = &self.nodes[x].t.data;
        let mut data = vec![T::zero(); r * c];
        for i in 0..r {
            for j in 0..c {
                data[j * r + i] = src[i * c + j];
            }
        }
        let t = Tensor::from_vec(data, &[c, r])?;
        let rg = self.requires(x);
        Ok(self.push(Op::Transpose2 { x }, t, rg))
    }

    /// Axis permutation of a rank-3 tensor: output axis `i` is input axis `perm[i]`.
    pub fn permute3(&mut self, x: NodeId, perm: [usize; 3]) -> Result<NodeId> {
        self.check_id(x, "permute3")?;
        let s = self.nodes[x].t.shape.clone();
        if s.len() != 3 {
            return Err(Error::Dimension(format!("permute3: rank-3 required, got {:?}", s)));
        }
        let mut seen = [false; 3];
        for &p in &perm {
            if p > 2 || seen[p] {
                return Err(Error::Contract(format!("permute3: {:?} is not a permutation", perm)));
            }
            seen[p] = true;
        }
        let out_shape = [s[perm[0]], s[perm[1]], s[perm[2]]];
        let src = &self.nodes[x].t.data;
        let mut data = vec![T::zero(); src.len()];
        for i0 in 0..out_shape[0] {
            for i1 in 0..out_shape[1] {
                for i2 in 0..out_shape[2] {
                    let out_idx = (i0 * out_shape[1] + i1) * out_shape[2] + i2;
                    let mut in_idx3 = [0usize; 3];
                    in_idx3[perm[0]] = i0;
                    in_idx3[perm[1]] = i1;
                    in_idx3[perm[2]] = i2;
                    let in_idx = (in_idx3[0] * s[1] + in_idx3[1]) * s[2] + in_idx3[2];
                    data[out_idx] = src[in_idx];
                }
            }
        }
        let t = Tensor::from_vec(data, &out_shape)?;
        let rg = self.requires(x);
        Ok(self.push(Op::Permute3 { x, perm }, t, rg))
    }

    pub fn reshape(&mut self, x: NodeId, new_shape: &[usize]) -> Result<NodeId> {
        self.check_id(x, "reshape")?;
        let numel: usize = new_shape.iter().product();
        if numel != self.nodes[x].t.numel() {
            return Err(Error::Dimension(format!(
                "reshape: {:?} has {} elements, target {:?} has {}",
                self.nodes[x].t.shape,
                self.nodes[x].t.numel(),
                new_shape,
                numel
            )));
        }
        let t = Tensor::from_vec(self.nodes[x].t.data.clone(), new_shape)?;
        let rg = self.requires(x);
        Ok(self.push(Op::Reshape { x }, t, rg))
    }

    /// Append zeros to the flat row-major buffer until it fills `new_shape`.
    pub fn pad_end(&mut self, x: NodeId, new_shape: &[usize]) -> Result<NodeId> {
        self.check_id(x, "pad_end")?;
        let old = self.nodes[x].t.numel();
        let numel: usize = new_shape.iter().product();
        if numel < old {
            return Err(Error::Dimension(format!(
                "pad_end: target {:?} smaller than input {:?}",
                new_shape, self.nodes[x].t.shape
            )));
        }
        let mut data = self.nodes[x].t.data.clone();
        data.resize(numel, T::zero());
        let t = Tensor::from_vec(data, new_shape)?;
        let rg = self.requires(x);
        Ok(self.push(Op::PadEnd { x }, t, rg))
    }

    /// Keep the first `new_shape` elements of the flat buffer (inverse of `pad_end`).
    pub fn take_prefix(&mut self, x: NodeId, new_shape: &[usize]) -> Result<NodeId> {
        self.check_id(x, "take_prefix")?;
        let old = self.nodes[x].t.numel();
        let numel: usize = new_shape.iter().product();
        if numel > old {
            return Err(Error::Dimension(format!(
                "take_prefix: target {:?} larger than input {:?}",
                new_shape, self.nodes[x].t.shape
            )));
        }
        let data = self.nodes[x].t.data[..numel].to_vec();
        let t = Tensor::from_vec(data, new_shape)?;
        let rg = self.requires(x);
        Ok(self.push(Op::TakePrefix { x }, t, rg))
    }

    /// Row `row` of a rank-2 tensor as a `[1, c]` tensor.
    pub fn take_row(&mut self, x: NodeId, row: usize) -> Result<NodeId> {
        self.check_id(x, "take_row")?;
        let s = &self.nodes[x].t.shape;
        if s.len() != 2 {
            return Err(Error::Dimension(format!("take_row: rank-2 required, got {:?}", s)));
        }
        if row >= s[0] {
            return Err(Error::Contract(format!("take_row: row {row} out of {} rows", s[0])));
        }
        let c = s[1];
        let data = self.nodes[x].t.data[row * c..(row + 1) * c].to_vec();
        let t = Tensor::from_vec(data, &[1, c])?;
        let rg = self.requires(x);
        Ok(self.push(Op::TakeRow { x, row }, t, rg))
    }

    /// Stack rank-2 tensors with equal column counts along axis 0.
    pub fn concat_rows(&mut self, xs: &[NodeId]) -> Result<NodeId> {
        if xs.is_empty() {
            return Err(Error::Contract("concat_rows: no inputs".into()));
        }
        for &x in xs {
            self.check_id(x, "concat_rows")?;
            if self.nodes[x].t.rank() != 2 {
                return Err(Error::Dimension(format!(
                    "concat_rows: rank-2 required, got {:?}",
                    self.nodes[x].t.shape
                )));
            }
        }
        let c = self.nodes[xs[0]].t.shape[1];
        let mut rows = 0;
        for &x in xs {
            if self.nodes[x].t.shape[1] != c {
                return Err(Error::Dimension(format!(
                    "concat_rows: column mismatch {:?} vs {} columns",
                    self.nodes[x].t.shape, c
                )));
            }
            rows += self.nodes[x].t.shape[0];
        }
        let mut data = Vec::with_capacity(rows * c);
        for &x in xs {
            data.extend_from_slice(&self.nodes[x].t.data);
        }
        let t = Tensor::from_vec(data, &[rows, c])?;
        let rg = xs.iter().any(|&x| self.requires(x));
        Ok(self.push(Op::ConcatRows { xs: xs.to_vec() }, t, rg))
    }

    // ── Nonlinearities ──────────────────────────────────────────────────

    pub fn silu(&mut self, x: NodeId) -> Result<NodeId> {
        self.check_id(x, "silu")?;
        let data = self
            .nodes[x]
            .t
            .data
            .iter()
            .map(|&v| v * sigmoid(v))
            .collect();
        let t = Tensor::from_vec(data, &self.nodes[x].t.shape.clone())?;
        let rg = self.requires(x);
        Ok(self.push(Op::Silu { x }, t, rg))
    }

    pub fn softplus(&mut self, x: NodeId) -> Result<NodeId> {
        self.check_id(x, "softplus")?;
        let data = self.nodes[x].t.data.iter().map(|&v| softplus(v)).collect();
        let t = Tensor::from_vec(data, &self.nodes[x].t.shape.clone())?;
        let rg = self.requires(x);
        Ok(self.push(Op::Softplus { x }, t, rg))
    }

    pub fn exp(&mut self, x: NodeId) -> Result<NodeId> {
        self.check_id(x, "exp")?;
        let data = self.nodes[x].t.data.iter().map(|v| v.exp()).collect();
        let t = Tensor::from_vec(data, &self.nodes[x].t.shape.clone())?;
        let rg = self.requires(x);
        Ok(self.push(Op::Exp { x }, t, rg))
    }

    /// Natural log; defined only for strictly positive inputs.
    pub fn log(&mut self, x: NodeId) -> Result<NodeId> {
        self.check_id(x, "log")?;
        if self.nodes[x].t.data.iter().any(|v| *v <= T::zero()) {
            return Err(Error::Contract("log: non-positive input".into()));
        }
        let data = self.nodes[x].t.data.iter().map(|v| v.ln()).collect();
        let t = Tensor::from_vec(data, &self.nodes[x].t.shape.clone())?;
        let rg = self.requires(x);
        Ok(self.push(Op::Log { x }, t, rg))
    }

    // ── Reductions ──────────────────────────────────────────────────────

    fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
        let outer: usize = shape[..axis].iter().product();
        let alen = shape[axis];
        let inner: usize = shape[axis + 1..].iter().product();
        (outer, alen, inner)
    }

    /// Softmax along `axis`, stabilized by max subtraction per slice.
    pub fn softmax_axis(&mut self, x: NodeId, axis: usize) -> Result<NodeId> {
        self.check_id(x, "softmax_axis")?;
        let shape = self.nodes[x].t.shape.clone();
        if axis >= shape.len() {
            return Err(Error::Dimension(format!(
                "softmax_axis: axis {axis} out of range for shape {:?}",
                shape
            )));
        }
        let (outer, alen, inner) = Self::axis_split(&shape, axis);
        let src = &self.nodes[x].t.data;
        let mut data = vec![T::zero(); src.len()];
        for o in 0..outer {
            for i in 0..inner {
                let at = |a: usize| (o * alen + a) * inner + i;
                let mut m = src[at(0)];
                for a in 1..alen {
                    if src[at(a)] > m {
                        m = src[at(a)];
                    }
                }
                let mut sum = T::zero();
                for a in 0..alen {
                    let e = (src[at(a)] - m).exp();
                    data[at(a)] = e;
                    sum = sum + e;
                }
                for a in 0..alen {
                    data[at(a)] = data[at(a)] / sum;
                }
            }
        }
        let t = Tensor::from_vec(data, &shape)?;
        let rg = self.requires(x);
        Ok(self.push(Op::SoftmaxAxis { x, axis }, t, rg))
    }

    /// Arithmetic mean along `axis`; the axis is removed from the shape.
    pub fn mean_pool(&mut self, x: NodeId, axis: usize) -> Result<NodeId> {
        self.check_id(x, "mean_pool")?;
        let shape = self.nodes[x].t.shape.clone();
        if axis >= shape.len() {
            return Err(Error::Dimension(format!(
                "mean_pool: axis {axis} out of range for shape {:?}",
                shape
            )));
        }
        let (outer, alen, inner) = Self::axis_split(&shape, axis);
        if alen == 0 {
            return Err(Error::Contract("mean_pool: empty axis".into()));
        }
        let src = &self.nodes[x].t.data;
        let mut out_shape = shape.clone();
        out_shape.remove(axis);
        let mut data = vec![T::zero(); outer * inner];
        let inv = T::one() / T::from_f64(alen as f64);
        for o in 0..outer {
            for a in 0..alen {
                for i in 0..inner {
                    data[o * inner + i] = data[o * inner + i] + src[(o * alen + a) * inner + i] * inv;
                }
            }
        }
        let t = Tensor::from_vec(data, &out_shape)?;
        let rg = self.requires(x);
        Ok(self.push(Op::MeanPool { x, axis }, t, rg))
    }

    /// Sum of all elements, as a scalar node.
    pub fn sum_all(&mut self, x: NodeId) -> Result<NodeId> {
        self.check_id(x, "sum_all")?;
        let mut s = T::zero();
        for v in &self.nodes[x].t.data {
            s = s + *v;
        }
        let t = Tensor::scalar(s);
        let rg = self.requires(x);
        Ok(self.push(Op::SumAll { x }, t, rg))
    }

    // ── State-space and loss ops ────────────────────────────────────────

    /// Zero-order-hold input factor `phi(a, delta) = (exp(delta*a) - 1) / a`,
    /// elementwise. For `|delta*a|` below [`ZOH_SERIES_THRESHOLD`] the
    /// series `delta * (1 + delta*a/2)` is used so `a -> 0` stays finite.
    /// The discretized input matrix is then `b_bar = phi * b`.
    pub fn zoh_phi(&mut self, a: NodeId, delta: NodeId) -> Result<NodeId> {
        self.binary_same_shape(a, delta, "zoh_phi")?;
        let thr = T::from_f64(ZOH_SERIES_THRESHOLD);
        let half = T::from_f64(0.5);
        let data = self
            .nodes[a]
            .t
            .data
            .iter()
            .zip(&self.nodes[delta].t.data)
            .map(|(&av, &dv)| {
                let z = dv * av;
                if z.abs() < thr {
                    dv * (T::one() + z * half)
                } else {
                    z.exp_m1() / av
                }
            })
            .collect();
        let t = Tensor::from_vec(data, &self.nodes[a].t.shape.clone())?;
        let rg = self.requires(a) || self.requires(delta);
        Ok(self.push(Op::ZohPhi { a, delta }, t, rg))
    }

    /// Same-padding 2-D convolution: `x: [h, w, ci]` with kernel
    /// `k: [kh, kw, ci, co]` (odd extents) gives `[h, w, co]`; positions
    /// outside the input contribute zero.
    pub fn conv2d_same(&mut self, x: NodeId, k: NodeId) -> Result<NodeId> {
        self.check_id(x, "conv2d_same")?;
        self.check_id(k, "conv2d_same")?;
        let (xs, ks) = (
            self.nodes[x].t.shape.clone(),
            self.nodes[k].t.shape.clone(),
        );
        if xs.len() != 3 || ks.len() != 4 {
            return Err(Error::Dimension(format!(
                "conv2d_same: input {:?} kernel {:?} (want rank 3 and 4)",
                xs, ks
            )));
        }
        if ks[2] != xs[2] {
            return Err(Error::Dimension(format!(
                "conv2d_same: kernel expects {} input channels, input has {}",
                ks[2], xs[2]
            )));
        }
        if ks[0] % 2 == 0 || ks[1] % 2 == 0 {
            return Err(Error::Contract(format!(
                "conv2d_same: kernel extents must be odd, got {}x{}",
                ks[0], ks[1]
            )));
        }
        let (h, w, ci) = (xs[0], xs[1], xs[2]);
        let (kh, kw, co) = (ks[0], ks[1], ks[3]);
        let (ph, pw) = (kh / 2, kw / 2);
        let xd = &self.nodes[x].t.data;
        let kd = &self.nodes[k].t.data;
        let mut data = vec![T::zero(); h * w * co];
        for r in 0..h {
            for c in 0..w {
                for dr in 0..kh {
                    let rr = r as isize + dr as isize - ph as isize;
                    if rr < 0 || rr >= h as isize {
                        continue;
                    }
                    for dc in 0..kw {
                        let cc = c as isize + dc as isize - pw as isize;
                        if cc < 0 || cc >= w as isize {
                            continue;
                        }
                        let xbase = (rr as usize * w + cc as usize) * ci;
                        let kbase = (dr * kw + dc) * ci;
                        for i in 0..ci {
                            let xv = xd[xbase + i];
                            let krow = (kbase + i) * co;
                            let obase = (r * w + c) * co;
                            for o in 0..co {
                                data[obase + o] = data[obase + o] + xv * kd[krow + o];
                            }
                        }
                    }
                }
            }
        }
        let t = Tensor::from_vec(data, &[h, w, co])?;
        let rg = self.requires(x) || self.requires(k);
        Ok(self.push(Op::Conv2dSame { x, k }, t, rg))
    }

    /// Cross-entropy of the true class `target` given unnormalized logits,
    /// computed as `logsumexp(logits) - logits[target]` for stability.
    pub fn nll_from_logits(&mut self, logits: NodeId, target: usize) -> Result<NodeId> {
        self.check_id(logits, "nll_from_logits")?;
        let s = &self.nodes[logits].t.shape;
        let n = match s.len() {
            1 => s[0],
            2 if s[0] == 1 => s[1],
            _ => {
                return Err(Error::Dimension(format!(
                    "nll_from_logits: want [n] or [1, n] logits, got {:?}",
                    s
                )))
            }
        };
        if target >= n {
            return Err(Error::Contract(format!(
                "nll_from_logits: target {target} out of {n} classes"
            )));
        }
        let d = &self.nodes[logits].t.data;
        let mut m = d[0];
        for v in d.iter().skip(1) {
            if *v > m {
                m = *v;
            }
        }
        let mut sum = T::zero();
        for v in d {
            sum = sum + (*v - m).exp();
        }
        let loss = m + sum.ln() - d[target];
        let t = Tensor::scalar(loss);
        let rg = self.requires(logits);
        Ok(self.push(Op::NllLogits { logits, target }, t, rg))
    }

    // ── Backward ────────────────────────────────────────────────────────

    /// Reverse sweep from the scalar node `loss`. Contributions are
    /// propagated through a per-call scratch buffer and then folded into
    /// each tensor's stored `grad` with `+=`, so calling backward twice
    /// without [`Graph::zero_grads`] doubles every stored gradient.
    pub fn backward(&mut self, loss: NodeId) -> Result<()> {
        self.check_id(loss, "backward")?;
        if self.nodes[loss].t.numel() != 1 {
            return Err(Error::Contract(format!(
                "backward: loss must be scalar, got shape {:?}",
                self.nodes[loss].t.shape
            )));
        }
        let n = self.nodes.len();
        let mut g: Vec<Option<Vec<T>>> = (0..n).map(|_| None).collect();
        g[loss] = Some(vec![T::one()]);

        for id in (0..=loss).rev() {
            let Some(gout) = g[id].take() else { continue };
            self.propagate(id, &gout, &mut g);
            let node = &mut self.nodes[id];
            if node.t.requires_grad {
                let store = node
                    .t
                    .grad
                    .get_or_insert_with(|| vec![T::zero(); gout.len()]);
                for (s, v) in store.iter_mut().zip(&gout) {
                    *s = *s + *v;
                }
            }
        }
        // Gradient-bearing leaves the loss never touched have zero
        // gradient; populate them so every such leaf reads back a grad.
        for node in &mut self.nodes {
            if node.t.requires_grad && matches!(node.op, Op::Leaf) && node.t.grad.is_none() {
                node.t.grad = Some(vec![T::zero(); node.t.numel()]);
            }
        }
        Ok(())
    }

    /// Add `gout x d(node id)/d(input)` into each differentiable input's slot.
    fn propagate(&self, id: NodeId, gout: &[T], g: &mut [Option<Vec<T>>]) {
        let slot = |g: &mut [Option<Vec<T>>], id: NodeId, numel: usize| -> *mut Vec<T> {
            g[id].get_or_insert_with(|| vec![T::zero(); numel])
        };
        // Local alias: accumulate `val` at `idx` of input `id`'s slot.
        macro_rules! acc {
            ($inp:expr, $numel:expr, $body:expr) => {
                if self.requires($inp) {
                    let dst = slot(g, $inp, $numel);
                    // Safety: `slot` hands back a unique &mut; raw pointer only
                    // bridges the closure-borrow of `g` inside the macro body.
                    let dst: &mut Vec<T> = unsafe { &mut *dst };
                    #[allow(clippy::redundant_closure_call)]
                    ($body)(dst);
                }
            };
        }

        match &self.nodes[id].op {
            Op::Leaf => {}
            Op::Add { a, b } => {
                acc!(*a, gout.len(), |dst: &mut Vec<T>| {
                    for (d, v) in dst.iter_mut().zip(gout) {
                        *d = *d + *v;
                    }
                });
                acc!(*b, gout.len(), |dst: &mut Vec<T>| {
                    for (d, v) in dst.iter_mut().zip(gout) {
                        *d = *d + *v;
                    }
                });
            }
            Op::Sub { a, b } => {
                acc!(*a, gout.len(), |dst: &mut Vec<T>| {
                    for (d, v) in dst.iter_mut().zip(gout) {
                        *d = *d + *v;
                    }
                });
                acc!(*b, gout.len(), |dst: &mut Vec<T>| {
                    for (d, v) in dst.iter_mut().zip(gout) {
                        *d = *d - *v;
                    }
                });
            }
            Op::Mul { a, b } => {
                let (da, db) = (&self.nodes[*a].t.data, &self.nodes[*b].t.data);
                acc!(*a, gout.len(), |dst: &mut Vec<T>| {
                    for i in 0..gout.len() {
                        dst[i] = dst[i] + gout[i] * db[i];
                    }
                });
                acc!(*b, gout.len(), |dst: &mut Vec<T>| {
                    for i in 0..gout.len() {
                        dst[i] = dst[i] + gout[i] * da[i];
                    }
                });
            }
            Op::Scale { x, c } => {
                acc!(*x, gout.len(), |dst: &mut Vec<T>| {
                    for i in 0..gout.len() {
                        dst[i] = dst[i] + gout[i] * *c;
                    }
                });
            }
            Op::AddBias { x, b } => {
                let (r, c) = (self.nodes[*x].t.shape[0], self.nodes[*x].t.shape[1]);
                acc!(*x, r * c, |dst: &mut Vec<T>| {
                    for i in 0..r * c {
                        dst[i] = dst[i] + gout[i];
                    }
                });
                acc!(*b, c, |dst: &mut Vec<T>| {
                    for i in 0..r {
                        for j in 0..c {
                            dst[j] = dst[j] + gout[i * c + j];
                        }
                    }
                });
            }
            Op::ScaleRows { x, v } => {
                let (r, c) = (self.nodes[*x].t.shape[0], self.nodes[*x].t.shape[1]);
                let (dx, dv) = (&self.nodes[*x].t.data, &self.nodes[*v].t.data);
                acc!(*x, r * c, |dst: &mut Vec<T>| {
                    for i in 0..r {
                        for j in 0..c {
                            dst[i * c + j] = dst[i * c + j] + gout[i * c + j] * dv[i];
                        }
                    }
                });
                acc!(*v, r, |dst: &mut Vec<T>| {
                    for i in 0..r {
                        let mut s = T::zero();
                        for j in 0..c {
                            s = s + gout[i * c + j] * dx[i * c + j];
                        }
                        dst[i] = dst[i] + s;
                    }
                });
            }
            Op::MatMul { a, b } => {
                let (m, k) = (self.nodes[*a].t.shape[0], self.nodes[*a].t.shape[1]);
                let n = self.nodes[*b].t.shape[1];
                let (da, db) = (&self.nodes[*a].t.data, &self.nodes[*b].t.data);
                acc!(*a, m * k, |dst: &mut Vec<T>| {
                    for i in 0..m {
                        for l in 0..k {
                            let mut s = T::zero();
                            for j in 0..n {
                                s = s + gout[i * n + j] * db[l * n + j];
                            }
                            dst[i * k + l] = dst[i * k + l] + s;
                        }
                    }
                });
                acc!(*b, k * n, |dst: &mut Vec<T>| {
                    for l in 0..k {
                        for j in 0..n {
                            let mut s = T::zero();
                            for i in 0..m {
                                s = s + da[i * k + l] * gout[i * n + j];
                            }
                            dst[l * n + j] = dst[l * n + j] + s;
                        }
                    }
                });
            }
            Op::Transpose2 { x } => {
                let (r, c) = (self.nodes[*x].t.shape[0], self.nodes[*x].t.shape[1]);
                acc!(*x, r * c, |dst: &mut Vec<T>| {
                    // gout has shape [c, r]
                    for i in 0..r {
                        for j in 0..c {
                            dst[i * c + j] = dst[i * c + j] + gout[j * r + i];
                        }
                    }
                });
            }
            Op::Permute3 { x, perm } => {
                let s = &self.nodes[*x].t.shape;
                let out_shape = [s[perm[0]], s[perm[1]], s[perm[2]]];
                acc!(*x, s.iter().product(), |dst: &mut Vec<T>| {
                    for i0 in 0..out_shape[0] {
                        for i1 in 0..out_shape[1] {
                            for i2 in 0..out_shape[2] {
                                let out_idx = (i0 * out_shape[1] + i1) * out_shape[2] + i2;
                                let mut in_idx3 = [0usize; 3];
                                in_idx3[perm[0]] = i0;
                                in_idx3[perm[1]] = i1;
                                in_idx3[perm[2]] = i2;
                                let in_idx = (in_idx3[0] * s[1] + in_idx3[1]) * s[2] + in_idx3[2];
                                dst[in_idx] = dst[in_idx] + gout[out_idx];
                            }
                        }
                    }
                });
            }
            Op::Reshape { x } => {
                acc!(*x, gout.len(), |dst: &mut Vec<T>| {
                    for i in 0..gout.len() {
                        dst[i] = dst[i] + gout[i];
                    }
                });
            }
            Op::PadEnd { x } => {
                let old = self.nodes[*x].t.numel();
                acc!(*x, old, |dst: &mut Vec<T>| {
                    for i in 0..old {
                        dst[i] = dst[i] + gout[i];
                    }
                });
            }
            Op::TakePrefix { x } => {
                let old = self.nodes[*x].t.numel();
                let kept = self.nodes[id].t.numel();
                acc!(*x, old, |dst: &mut Vec<T>| {
                    for i in 0..kept {
                        dst[i] = dst[i] + gout[i];
                    }
                });
            }
            Op::TakeRow { x, row } => {
                let c = self.nodes[*x].t.shape[1];
                let numel = self.nodes[*x].t.numel();
                acc!(*x, numel, |dst: &mut Vec<T>| {
                    for j in 0..c {
                        dst[row * c + j] = dst[row * c + j] + gout[j];
                    }
                });
            }
            Op::ConcatRows { xs } => {
                let mut offset = 0;
                for &x in xs {
                    let numel = self.nodes[x].t.numel();
                    acc!(x, numel, |dst: &mut Vec<T>| {
                        for i in 0..numel {
                            dst[i] = dst[i] + gout[offset + i];
                        }
                    });
                    offset += numel;
                }
            }
            Op::Silu { x } => {
                let dx = &self.nodes[*x].t.data;
                acc!(*x, gout.len(), |dst: &mut Vec<T>| {
                    for i in 0..gout.len() {
                        let s = sigmoid(dx[i]);
                        let d = s * (T::one() + dx[i] * (T::one() - s));
                        dst[i] = dst[i] + gout[i] * d;
                    }
                });
            }
            Op::Softplus { x } => {
                let dx = &self.nodes[*x].t.data;
                acc!(*x, gout.len(), |dst: &mut Vec<T>| {
                    for i in 0..gout.len() {
                        dst[i] = dst[i] + gout[i] * sigmoid(dx[i]);
                    }
                });
            }
            Op::Exp { x } => {
                let out = &self.nodes[id].t.data;
                acc!(*x, gout.len(), |dst: &mut Vec<T>| {
                    for i in 0..gout.len() {
                        dst[i] = dst[i] + gout[i] * out[i];
                    }
                });
            }
            Op::Log { x } => {
                let dx = &self.nodes[*x].t.data;
                acc!(*x, gout.len(), |dst: &mut Vec<T>| {
                    for i in 0..gout.len() {
                        dst[i] = dst[i] + gout[i] / dx[i];
                    }
                });
            }
            Op::SoftmaxAxis { x, axis } => {
                let shape = &self.nodes[id].t.shape;
                let (outer, alen, inner) = Self::axis_split(shape, *axis);
                let out = &self.nodes[id].t.data;
                acc!(*x, out.len(), |dst: &mut Vec<T>| {
                    for o in 0..outer {
                        for i in 0..inner {
                            let at = |a: usize| (o * alen + a) * inner + i;
                            let mut dot = T::zero();
                            for a in 0..alen {
                                dot = dot + gout[at(a)] * out[at(a)];
                            }
                            for a in 0..alen {
                                dst[at(a)] =
                                    dst[at(a)] + out[at(a)] * (gout[at(a)] - dot);
                            }
                        }
                    }
                });
            }
            Op::MeanPool { x, axis } => {
                let shape = &self.nodes[*x].t.shape;
                let (outer, alen, inner) = Self::axis_split(shape, *axis);
                let inv = T::one() / T::from_f64(alen as f64);
                acc!(*x, outer * alen * inner, |dst: &mut Vec<T>| {
                    for o in 0..outer {
                        for a in 0..alen {
                            for i in 0..inner {
                                let src = (o * alen + a) * inner + i;
                                dst[src] = dst[src] + gout[o * inner + i] * inv;
                            }
                        }
                    }
                });
            }
            Op::SumAll { x } => {
                let numel = self.nodes[*x].t.numel();
                acc!(*x, numel, |dst: &mut Vec<T>| {
                    for d in dst.iter_mut() {
                        *d = *d + gout[0];
                    }
                });
            }
            Op::ZohPhi { a, delta } => {
                let (da, dd) = (&self.nodes[*a].t.data, &self.nodes[*delta].t.data);
                let thr = T::from_f64(ZOH_SERIES_THRESHOLD);
                let half = T::from_f64(0.5);
                acc!(*a, gout.len(), |dst: &mut Vec<T>| {
                    for i in 0..gout.len() {
                        let (av, dv) = (da[i], dd[i]);
                        let z = dv * av;
                        let d = if z.abs() < thr {
                            dv * dv * half
                        } else {
                            (dv * z.exp()) / av - z.exp_m1() / (av * av)
                        };
                        dst[i] = dst[i] + gout[i] * d;
                    }
                });
                acc!(*delta, gout.len(), |dst: &mut Vec<T>| {
                    for i in 0..gout.len() {
                        let (av, dv) = (da[i], dd[i]);
                        let z = dv * av;
                        let d = if z.abs() < thr { T::one() + z } else { z.exp() };
                        dst[i] = dst[i] + gout[i] * d;
                    }
                });
            }
            Op::Conv2dSame { x, k } => {
                let xs = &self.nodes[*x].t.shape;
                let ks = &self.nodes[*k].t.shape;
                let (h, w, ci) = (xs[0], xs[1], xs[2]);
                let (kh, kw, co) = (ks[0], ks[1], ks[3]);
                let (ph, pw) = (kh / 2, kw / 2);
                let xd = &self.nodes[*x].t.data;
                let kd = &self.nodes[*k].t.data;
                acc!(*x, h * w * ci, |dst: &mut Vec<T>| {
                    for r in 0..h {
                        for c in 0..w {
                            for dr in 0..kh {
                                let rr = r as isize + dr as isize - ph as isize;
                                if rr < 0 || rr >= h as isize {
                                    continue;
                                }
                                for dc in 0..kw {
                                    let cc = c as isize + dc as isize - pw as isize;
                                    if cc < 0 || cc >= w as isize {
                                        continue;
                                    }
                                    let xbase = (rr as usize * w + cc as usize) * ci;
                                    let kbase = (dr * kw + dc) * ci;
                                    let obase = (r * w + c) * co;
                                    for i in 0..ci {
                                        let krow = (kbase + i) * co;
                                        let mut s = T::zero();
                                        for o in 0..co {
                                            s = s + gout[obase + o] * kd[krow + o];
                                        }
                                        dst[xbase + i] = dst[xbase + i] + s;
                                    }
                                }
                            }
                        }
                    }
                });
                acc!(*k, kh * kw * ci * co, |dst: &mut Vec<T>| {
                    for r in 0..h {
                        for c in 0..w {
                            for dr in 0..kh {
                                let rr = r as isize + dr as isize - ph as isize;
                                if rr < 0 || rr >= h as isize {
                                    continue;
                                }
                                for dc in 0..kw {
                                    let cc = c as isize + dc as isize - pw as isize;
                                    if cc < 0 || cc >= w as isize {
                                        continue;
                                    }
                                    let xbase = (rr as usize * w + cc as usize) * ci;
                                    let kbase = (dr * kw + dc) * ci;
                                    let obase = (r * w + c) * co;
                                    for i in 0..ci {
                                        let xv = xd[xbase + i];
                                        let krow = (kbase + i) * co;
                                        for o in 0..co {
                                            dst[krow + o] = dst[krow + o] + xv * gout[obase + o];
                                        }
                                    }
                                }
                            }
                        }
                    }
                });
            }
            Op::NllLogits { logits, target } => {
                let d = &self.nodes[*logits].t.data;
                let n = d.len();
                acc!(*logits, n, |dst: &mut Vec<T>| {
                    let mut m = d[0];
                    for v in d.iter().skip(1) {
                        if *v > m {
                            m = *v;
                        }
                    }
                    let mut sum = T::zero();
                    for v in d {
                        sum = sum + (*v - m).exp();
                    }
                    for i in 0..n {
                        let p = (d[i] - m).exp() / sum;
                        let y = if i == *target { T::one() } else { T::zero() };
                        dst[i] = dst[i] + gout[0] * (p - y);
                    }
                });
            }
        }
    }
}

// ─────────────────────────────────────────────────────────────────────────

#[cfg(test)]
mod tests {
    use super::*;

    /// Central finite differences of `f` at `x` with step `h`.
    fn fd_grad(f: &dyn Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
        let mut g = vec![0.0; x.len()];
        let mut xp = x.to_vec();
        for i in 0..x.len() {
            xp[i] = x[i] + h;
            let fp = f(&xp);
            xp[i] = x[i] - h;
            let fm = f(&xp);
            xp[i] = x[i];
            g[i] = (fp - fm) / (2.0 * h);
        }
        g
    }

    fn max_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
        analytic
            .iter()
            .zip(numeric)
            .map(|(&a, &n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-6))
            .fold(0.0, f64::max)
    }

    /// Deterministic pseudo-random values in [-1, 1] without pulling in rng.
    fn pseudo(n: usize, seed: u64) -> Vec<f64> {
        let mut state = seed.wrapping_mul(0x9E3779B97F4A7C15).max(1);
        (0..n)
            .map(|_| {
                state ^= state << 13;
                state ^= state >> 7;
                state ^= state << 17;
                ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
            })
            .collect()
    }

    /// FD-check one op: `build` maps a param leaf (given shape/values) to a
    /// loss node; gradients must agree to 1e-6 at 64-bit.
    fn check_op(
        xshape: &[usize],
        xvals: &[f64],
        build: &dyn Fn(&mut Graph<f64>, NodeId) -> NodeId,
    ) {
        let f = |vals: &[f64]| -> f64 {
            let mut g = Graph::<f64>::new();
            let x = g.param(vals.to_vec(), xshape).unwrap();
            let loss = build(&mut g, x);
            g.data(loss)[0]
        };
        let numeric = fd_grad(&f, xvals, 1e-5);
        let mut g = Graph::<f64>::new();
        let x = g.param(xvals.to_vec(), xshape).unwrap();
        let loss = build(&mut g, x);
        g.backward(loss).unwrap();
        let analytic = g.grad(x).unwrap().to_vec();
        let err = max_rel_err(&analytic, &numeric);
        assert!(err < 1e-6, "rel err {err} too large: {analytic:?} vs {numeric:?}");
    }

    /// Weighted sum with fixed pseudo-random weights: makes any tensor a
    /// scalar loss that is sensitive to every element.
    fn weighted_loss(g: &mut Graph<f64>, x: NodeId) -> NodeId {
        let n = g.tensor(x).numel();
        let shape = g.shape(x).to_vec();
        let w = g.constant(pseudo(n, 7).iter().map(|v| v + 2.0).collect(), &shape).unwrap();
        let p = g.mul(x, w).unwrap();
        g.sum_all(p).unwrap()
    }

    // ── Forward values ──────────────────────────────────────────────────

    #[test]
    fn matmul_small_case() {
        let mut g = Graph::<f64>::new();
        let a = g.constant(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0], &[2, 3]).unwrap();
        let b = g.constant(vec![7.0, 8.0, 9.0, 10.0, 11.0, 12.0], &[3, 2]).unwrap();
        let c = g.matmul(a, b).unwrap();
        assert_eq!(g.data(c), &[58.0, 64.0, 139.0, 154.0]);
        assert_eq!(g.shape(c), &[2, 2]);
    }

    #[test]
    fn matmul_identity_returns_input() {
        let mut g = Graph::<f64>::new();
        let a = g.constant(pseudo(9, 3), &[3, 3]).unwrap();
        let mut eye = vec![0.0; 9];
        for i in 0..3 {
            eye[i * 3 + i] = 1.0;
        }
        let i3 = g.constant(eye, &[3, 3]).unwrap();
        let c = g.matmul(a, i3).unwrap();
        assert_eq!(g.data(c), g.data(a));
    }

    #[test]
    fn matmul_shape_mismatch_is_dimension_error() {
        let mut g = Graph::<f64>::new();
        let a = g.constant(vec![0.0; 6], &[2, 3]).unwrap();
        let b = g.constant(vec![0.0; 8], &[4, 2]).unwrap();
        assert!(matches!(g.matmul(a, b), Err(Error::Dimension(_))));
    }

    #[test]
    fn silu_known_values() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(vec![0.0, 1.0, -1.0], &[3]).unwrap();
        let y = g.silu(x).unwrap();
        let s1 = 1.0 / (1.0 + (-1.0_f64).exp());
        assert!((g.data(y)[0]).abs() < 1e-15);
        assert!((g.data(y)[1] - s1).abs() < 1e-15);
        assert!((g.data(y)[2] + (1.0 - s1)).abs() < 1e-15);
    }

    #[test]
    fn softmax_uniform_and_shift_invariance() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(vec![3.0, 3.0, 3.0, 3.0], &[4]).unwrap();
        let s = g.softmax_axis(x, 0).unwrap();
        for v in g.data(s) {
            assert!((v - 0.25).abs() < 1e-15);
        }
        let a = g.constant(vec![1.0, 2.0, 3.0], &[3]).unwrap();
        let b = g.constant(vec![101.0, 102.0, 103.0], &[3]).unwrap();
        let sa = g.softmax_axis(a, 0).unwrap();
        let sb = g.softmax_axis(b, 0).unwrap();
        for (x, y) in g.data(sa).iter().zip(g.data(sb)) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(pseudo(12, 11), &[3, 4]).unwrap();
        let s = g.softmax_axis(x, 1).unwrap();
        for r in 0..3 {
            let sum: f64 = g.data(s)[r * 4..(r + 1) * 4].iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn mean_pool_identical_rows_returns_that_row() {
        let mut g = Graph::<f64>::new();
        let row = [1.5, -2.0, 0.25];
        let data: Vec<f64> = row.iter().cycle().take(12).cloned().collect();
        let x = g.constant(data, &[4, 3]).unwrap();
        let m = g.mean_pool(x, 0).unwrap();
        assert_eq!(g.shape(m), &[3]);
        for (a, b) in g.data(m).iter().zip(&row) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn conv_identity_kernel_preserves_input() {
        // 3x3 kernel, delta at the center, identity across channels.
        let (h, w, c) = (4, 5, 2);
        let x = pseudo(h * w * c, 17);
        let mut k = vec![0.0; 3 * 3 * c * c];
        for i in 0..c {
            k[((3 + 1) * c + i) * c + i] = 1.0;
        }
        let mut g = Graph::<f64>::new();
        let xn = g.constant(x.clone(), &[h, w, c]).unwrap();
        let kn = g.constant(k, &[3, 3, c, c]).unwrap();
        let y = g.conv2d_same(xn, kn).unwrap();
        assert_eq!(g.data(y), &x[..]);
    }

    #[test]
    fn conv_rejects_even_kernel() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(vec![0.0; 8], &[2, 2, 2]).unwrap();
        let k = g.constant(vec![0.0; 16], &[2, 2, 2, 2]).unwrap();
        assert!(matches!(g.conv2d_same(x, k), Err(Error::Contract(_))));
    }

    #[test]
    fn zoh_phi_halving_case() {
        // a = -1, delta = ln 2: a_bar = exp(delta*a) = 0.5 and
        // phi = (0.5 - 1)/(-1) = 0.5, so b_bar = 0.5 * b.
        let mut g = Graph::<f64>::new();
        let a = g.constant(vec![-1.0], &[1]).unwrap();
        let d = g.constant(vec![std::f64::consts::LN_2], &[1]).unwrap();
        let phi = g.zoh_phi(a, d).unwrap();
        assert!((g.data(phi)[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn zoh_phi_series_matches_closed_form_near_zero() {
        // Just above the series threshold the closed form is safe; just
        // below, the series must agree to ~1e-9 relative.
        let delta = 1e-4;
        for a in [-1e-3, 1e-3] {
            let mut g = Graph::<f64>::new();
            let an = g.constant(vec![a], &[1]).unwrap();
            let dn = g.constant(vec![delta], &[1]).unwrap();
            let phi = g.zoh_phi(an, dn).unwrap();
            let exact = ((delta * a).exp() - 1.0) / a;
            let rel = (g.data(phi)[0] - exact).abs() / exact.abs();
            assert!(rel < 1e-9, "rel {rel}");
        }
    }

    #[test]
    fn nll_uniform_logits_is_ln_n() {
        let mut g = Graph::<f64>::new();
        let l = g.constant(vec![0.7, 0.7], &[2]).unwrap();
        let loss = g.nll_from_logits(l, 0).unwrap();
        assert!((g.data(loss)[0] - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn nll_is_nonnegative_and_shift_invariant() {
        let vals = pseudo(5, 23);
        let mut g = Graph::<f64>::new();
        let a = g.constant(vals.clone(), &[5]).unwrap();
        let shifted: Vec<f64> = vals.iter().map(|v| v + 250.0).collect();
        let b = g.constant(shifted, &[5]).unwrap();
        let la = g.nll_from_logits(a, 3).unwrap();
        let lb = g.nll_from_logits(b, 3).unwrap();
        assert!(g.data(la)[0] >= 0.0);
        assert!((g.data(la)[0] - g.data(lb)[0]).abs() < 1e-10);
    }

    #[test]
    fn pad_then_take_prefix_round_trips() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(pseudo(10, 5), &[5, 2]).unwrap();
        let p = g.pad_end(x, &[8, 2]).unwrap();
        assert_eq!(g.data(p)[10..], [0.0; 6]);
        let back = g.take_prefix(p, &[5, 2]).unwrap();
        assert_eq!(g.data(back), g.data(x));
    }

    #[test]
    fn log_rejects_non_positive() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(vec![1.0, 0.0], &[2]).unwrap();
        assert!(matches!(g.log(x), Err(Error::Contract(_))));
    }

    #[test]
    fn backward_requires_scalar_loss() {
        let mut g = Graph::<f64>::new();
        let x = g.param(vec![1.0, 2.0], &[2]).unwrap();
        let y = g.silu(x).unwrap();
        assert!(matches!(g.backward(y), Err(Error::Contract(_))));
    }

    #[test]
    fn repeated_backward_accumulates_exactly_twice() {
        let mut g = Graph::<f64>::new();
        let x = g.param(vec![0.5, -1.5, 2.0], &[3]).unwrap();
        let loss = weighted_loss(&mut g, x);
        g.backward(loss).unwrap();
        let once = g.grad(x).unwrap().to_vec();
        g.backward(loss).unwrap();
        let twice = g.grad(x).unwrap().to_vec();
        for (a, b) in once.iter().zip(&twice) {
            assert_eq!(*b, 2.0 * *a);
        }
        g.zero_grads();
        assert!(g.grad(x).is_none());
    }

    #[test]
    fn constants_collect_no_gradient() {
        let mut g = Graph::<f64>::new();
        let x = g.param(vec![1.0, 2.0], &[2]).unwrap();
        let c = g.constant(vec![3.0, 4.0], &[2]).unwrap();
        let p = g.mul(x, c).unwrap();
        let loss = g.sum_all(p).unwrap();
        g.backward(loss).unwrap();
        assert!(g.grad(c).is_none());
        assert_eq!(g.grad(x).unwrap(), &[3.0, 4.0]);
    }

    // ── Finite-difference checks, one per op ────────────────────────────

    #[test]
    fn fd_add_sub_mul_scale() {
        let v = pseudo(6, 31);
        check_op(&[2, 3], &v, &|g, x| {
            let o = g.constant(pseudo(6, 32), &[2, 3]).unwrap();
            let a = g.add(x, o).unwrap();
            let s = g.sub(a, x).unwrap(); // uses x twice: checks fan-out
            let m = g.mul(s, x).unwrap();
            let sc = g.scale(m, -1.75).unwrap();
            weighted_loss(g, sc)
        });
    }

    #[test]
    fn fd_add_bias_and_scale_rows() {
        let v = pseudo(8, 41);
        check_op(&[8], &v, &|g, b| {
            let x = g.constant(pseudo(24, 42), &[3, 8]).unwrap();
            let y = g.add_bias(x, b).unwrap();
            weighted_loss(g, y)
        });
        let v = pseudo(3, 43);
        check_op(&[3], &v, &|g, r| {
            let x = g.constant(pseudo(12, 44), &[3, 4]).unwrap();
            let y = g.scale_rows(x, r).unwrap();
            weighted_loss(g, y)
        });
    }

    #[test]
    fn fd_matmul_both_sides() {
        let v = pseudo(6, 51);
        check_op(&[2, 3], &v, &|g, a| {
            let b = g.constant(pseudo(12, 52), &[3, 4]).unwrap();
            let y = g.matmul(a, b).unwrap();
            weighted_loss(g, y)
        });
        let v = pseudo(12, 53);
        check_op(&[3, 4], &v, &|g, b| {
            let a = g.constant(pseudo(6, 54), &[2, 3]).unwrap();
            let y = g.matmul(a, b).unwrap();
            weighted_loss(g, y)
        });
    }

    #[test]
    fn fd_shape_ops() {
        let v = pseudo(12, 61);
        check_op(&[3, 4], &v, &|g, x| {
            let t = g.transpose2(x).unwrap();
            weighted_loss(g, t)
        });
        check_op(&[12], &pseudo(12, 62), &|g, x| {
            let r = g.reshape(x, &[2, 2, 3]).unwrap();
            let p = g.permute3(r, [2, 0, 1]).unwrap();
            weighted_loss(g, p)
        });
        check_op(&[2, 3], &pseudo(6, 63), &|g, x| {
            let p = g.pad_end(x, &[4, 3]).unwrap();
            weighted_loss(g, p)
        });
        check_op(&[4, 3], &pseudo(12, 64), &|g, x| {
            let p = g.take_prefix(x, &[2, 3]).unwrap();
            weighted_loss(g, p)
        });
        check_op(&[4, 3], &pseudo(12, 65), &|g, x| {
            let r1 = g.take_row(x, 1).unwrap();
            let r3 = g.take_row(x, 3).unwrap();
            let c = g.concat_rows(&[r3, r1, r3]).unwrap();
            weighted_loss(g, c)
        });
    }

    #[test]
    fn fd_nonlinearities() {
        let v = pseudo(7, 71);
        check_op(&[7], &v, &|g, x| {
            let y = g.silu(x).unwrap();
            weighted_loss(g, y)
        });
        check_op(&[7], &pseudo(7, 72), &|g, x| {
            let y = g.softplus(x).unwrap();
            weighted_loss(g, y)
        });
        check_op(&[7], &pseudo(7, 73), &|g, x| {
            let y = g.exp(x).unwrap();
            weighted_loss(g, y)
        });
        let pos: Vec<f64> = pseudo(7, 74).iter().map(|v| v.abs() + 0.5).collect();
        check_op(&[7], &pos, &|g, x| {
            let y = g.log(x).unwrap();
            weighted_loss(g, y)
        });
    }

    #[test]
    fn fd_reductions() {
        check_op(&[3, 4], &pseudo(12, 81), &|g, x| {
            let s = g.softmax_axis(x, 1).unwrap();
            weighted_loss(g, s)
        });
        check_op(&[2, 3, 2], &pseudo(12, 82), &|g, x| {
            let s = g.softmax_axis(x, 1).unwrap();
            weighted_loss(g, s)
        });
        check_op(&[4, 3], &pseudo(12, 83), &|g, x| {
            let m = g.mean_pool(x, 0).unwrap();
            weighted_loss(g, m)
        });
        check_op(&[2, 3, 2], &pseudo(12, 84), &|g, x| {
            let m = g.mean_pool(x, 2).unwrap();
            weighted_loss(g, m)
        });
    }

    #[test]
    fn fd_zoh_phi_both_branches() {
        // Closed-form branch: |delta*a| well above the threshold.
        let a: Vec<f64> = (0..4).map(|j| -(j as f64) - 1.0).collect();
        check_op(&[4], &a, &|g, a| {
            let d = g.constant(vec![0.3, 0.2, 0.15, 0.4], &[4]).unwrap();
            let phi = g.zoh_phi(a, d).unwrap();
            weighted_loss(g, phi)
        });
        let d = vec![0.3, 0.2, 0.15, 0.4];
        check_op(&[4], &d, &|g, d| {
            let a = g.constant((0..4).map(|j| -(j as f64) - 1.0).collect(), &[4]).unwrap();
            let phi = g.zoh_phi(a, d).unwrap();
            weighted_loss(g, phi)
        });
        // Series branch: |delta*a| ~ 1e-8. FD on `a` is uninformative at
        // that scale, so check the delta gradient only.
        let d = vec![1e-4, 2e-4];
        check_op(&[2], &d, &|g, d| {
            let a = g.constant(vec![1e-4, -1e-4], &[2]).unwrap();
            let phi = g.zoh_phi(a, d).unwrap();
            weighted_loss(g, phi)
        });
    }

    #[test]
    fn fd_conv2d_same() {
        let (h, w, ci, co) = (4, 3, 2, 2);
        let x = pseudo(h * w * ci, 91);
        check_op(&[h, w, ci], &x, &|g, x| {
            let k = g.constant(pseudo(3 * 3 * ci * co, 92), &[3, 3, ci, co]).unwrap();
            let y = g.conv2d_same(x, k).unwrap();
            weighted_loss(g, y)
        });
        let k = pseudo(3 * 3 * ci * co, 93);
        check_op(&[3, 3, ci, co], &k, &|g, k| {
            let x = g.constant(pseudo(h * w * ci, 94), &[h, w, ci]).unwrap();
            let y = g.conv2d_same(x, k).unwrap();
            weighted_loss(g, y)
        });
        // 1x5 and 5x1 exercise asymmetric padding arms.
        let k = pseudo(5 * ci * co, 95);
        check_op(&[1, 5, ci, co], &k, &|g, k| {
            let x = g.constant(pseudo(h * w * ci, 96), &[h, w, ci]).unwrap();
            let y = g.conv2d_same(x, k).unwrap();
            weighted_loss(g, y)
        });
    }

    #[test]
    fn fd_nll_from_logits() {
        check_op(&[5], &pseudo(5, 101), &|g, x| {
            g.nll_from_logits(x, 2).unwrap()
        });
        check_op(&[1, 3], &pseudo(3, 102), &|g, x| {
            g.nll_from_logits(x, 0).unwrap()
        });
    }

    #[test]
    fn fd_composite_chain() {
        // A chain resembling one model block: linear -> silu gate -> product
        // -> projection -> loss, all parameters in one leaf via reshape.
        let v = pseudo(4 * 4, 111);
        check_op(&[4, 4], &v, &|g, w| {
            let x = g.constant(pseudo(3 * 4, 112), &[3, 4]).unwrap();
            let lin = g.matmul(x, w).unwrap();
            let gate = g.silu(lin).unwrap();
            let prod = g.mul(gate, lin).unwrap();
            let pooled = g.mean_pool(prod, 0).unwrap();
            let r = g.reshape(pooled, &[1, 4]).unwrap();
            g.nll_from_logits(r, 1).unwrap()
        });
    }

    #[test]
    fn forward_outputs_stay_finite() {
        // Random chains over finite inputs must produce finite tensors.
        let mut g = Graph::<f64>::new();
        let x = g.param(pseudo(24, 121), &[4, 6]).unwrap();
        let s = g.softmax_axis(x, 1).unwrap();
        let sp = g.softplus(s).unwrap();
        let e = g.exp(sp).unwrap();
        let m = g.mean_pool(e, 0).unwrap();
        let l = g.sum_all(m).unwrap();
        assert!(g.tensor(l).is_finite());
        g.backward(l).unwrap();
        assert!(g.grad(x).unwrap().iter().all(|v| v.is_finite()));
    }
}
