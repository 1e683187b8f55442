//! The full classifier: optional multi-scale temporal block, channel-token
//! (or conventional time-step) embedding, a stack of gated diagonal
//! state-space layers, and a mean-pool + linear + softmax head.
//!
//! Everything trainable lives in [`ModelParams`]; a forward pass inserts
//! those tensors into a fresh [`Graph`] as differentiable leaves
//! ([`insert_params`]) and composes the whole pipeline from the tape's
//! verified ops, so backpropagation needs no model-specific code.
//!
//! Layer semantics: tokens `[S, d]` pass through `v = silu(gate(tokens))`
//! and `s = scan(tokens)`, and the layer emits `out_proj(s ∘ v)`. The scan
//! treats each of the `d` model dimensions as an independent scalar-in /
//! scalar-out state-space system with a shared `d`-dimensional diagonal
//! state, discretized by zero-order hold. In the default time-invariant
//! mode this scan has an equivalent convolution-kernel form (see
//! [`crate::ssm`]); in `selective` mode the step size depends on the
//! current token, so only the scan is valid and the kernel shortcut is
//! never used.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::mstb::{mstb_forward, MstbParams, MSP_EXTENTS};
use crate::real::Real;
use crate::spectral::plan_segment;

/// Raw step-size parameter whose softplus is 0.1: `ln(e^0.1 - 1)`.
pub const DELTA_RAW_INIT: f64 = -2.25216846104409;

/// Relative magnitude of the noise added to the identity convolution
/// kernels at initialization.
const KERNEL_NOISE: f64 = 0.05;

// ── Configuration ───────────────────────────────────────────────────────

/// Architecture switches and extents. `use_mstb` / `use_inverted` /
/// `use_mamba` select the ablation variants: with `use_inverted` off the
/// embedding maps each time step (a length-`channels` row) to a token, so
/// the state-space scan runs over `seg_len` tokens instead of `channels`.
/// With `use_mamba` off the gated state-space stack is skipped entirely
/// and the pooled embedding feeds the head directly.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub seg_len: usize,
    pub channels: usize,
    pub n_classes: usize,
    pub d_model: usize,
    pub num_layers: usize,
    pub top_k: usize,
    pub use_mstb: bool,
    pub use_inverted: bool,
    pub use_mamba: bool,
    pub selective: bool,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.seg_len < 2 || self.channels == 0 || self.d_model == 0 {
            return Err(Error::Config(format!(
                "degenerate extents: seg_len {}, channels {}, d_model {}",
                self.seg_len, self.channels, self.d_model
            )));
        }
        if self.n_classes < 2 {
            return Err(Error::Config(format!(
                "need at least 2 classes, got {}",
                self.n_classes
            )));
        }
        if self.use_mamba && self.num_layers == 0 {
            return Err(Error::Config("num_layers must be positive".into()));
        }
        if self.use_mstb && (self.top_k == 0 || self.top_k > self.seg_len / 2) {
            return Err(Error::Config(format!(
                "top_k {} outside 1..={} for seg_len {}",
                self.top_k,
                self.seg_len / 2,
                self.seg_len
            )));
        }
        Ok(())
    }

    /// Number of tokens the state-space layers see.
    pub fn n_tokens(&self) -> usize {
        if self.use_inverted {
            self.channels
        } else {
            self.seg_len
        }
    }

    /// Input width of the embedding (what one token is computed from).
    pub fn embed_in(&self) -> usize {
        if self.use_inverted {
            self.seg_len
        } else {
            self.channels
        }
    }
}

// ── Parameters ──────────────────────────────────────────────────────────

/// A dense affine map `in_dim -> out_dim`: weights `[in_dim, out_dim]`
/// row-major plus a bias of length `out_dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearParams<T> {
    pub w: Vec<T>,
    pub b: Vec<T>,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl<T: Real> LinearParams<T> {
    fn uniform(rng: &mut ChaCha20Rng, in_dim: usize, out_dim: usize) -> Self {
        let bound = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let w = (0..in_dim * out_dim)
            .map(|_| T::from_f64(rng.gen_range(-bound..bound)))
            .collect();
        LinearParams {
            w,
            b: vec![T::zero(); out_dim],
            in_dim,
            out_dim,
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut w = vec![T::zero(); dim * dim];
        for i in 0..dim {
            w[i * dim + i] = T::one();
        }
        LinearParams {
            w,
            b: vec![T::zero(); dim],
            in_dim: dim,
            out_dim: dim,
        }
    }
}

/// One diagonal state-space system of state size `d`. `a` is the diagonal
/// of the state matrix (negative at init for stability), `delta_raw` is
/// the pre-softplus step size, and `w_dt` shifts the raw step size by the
/// token mean in selective mode (zero-initialized, so selective models
/// start exactly time-invariant).
#[derive(Debug, Clone, PartialEq)]
pub struct SsmParams<T> {
    pub a: Vec<T>,
    pub b_in: Vec<T>,
    pub c_out: Vec<T>,
    pub delta_raw: Vec<T>,
    pub w_dt: Vec<T>,
    pub d: usize,
}

impl<T: Real> SsmParams<T> {
    fn init(rng: &mut ChaCha20Rng, d: usize) -> Self {
        let c_bound = 1.0 / (d as f64).sqrt();
        SsmParams {
            a: (0..d).map(|j| T::from_f64(-((j + 1) as f64))).collect(),
            b_in: vec![T::one(); d],
            c_out: (0..d)
                .map(|_| T::from_f64(rng.gen_range(-c_bound..c_bound)))
                .collect(),
            delta_raw: vec![T::from_f64(DELTA_RAW_INIT); d],
            w_dt: vec![T::zero(); d],
            d,
        }
    }
}

/// One gated state-space layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams<T> {
    pub gate: LinearParams<T>,
    pub out_proj: LinearParams<T>,
    pub ssm: SsmParams<T>,
}

/// Every trainable tensor of one model instance, in a fixed canonical
/// order (see [`ModelParams::named_tensors`]) shared by checkpointing,
/// gradient accumulation, and the optimizer.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    pub config: ModelConfig,
    pub mstb: Option<MstbParams<T>>,
    pub embed: LinearParams<T>,
    pub layers: Vec<LayerParams<T>>,
    pub head: LinearParams<T>,
}

impl<T: Real> ModelParams<T> {
    /// Seeded initialization. Draw order is fixed (multi-scale kernels,
    /// embedding, layers in order, head) so a given seed always produces
    /// the same parameters.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mstb = if config.use_mstb {
            let mut p = MstbParams::identity(config.channels, config.top_k);
            for branch in &mut p.branches {
                for kernel in branch.iter_mut() {
                    for v in kernel.iter_mut() {
                        *v = *v + T::from_f64(rng.gen_range(-KERNEL_NOISE..KERNEL_NOISE));
                    }
                }
            }
            Some(p)
        } else {
            None
        };
        let embed = LinearParams::uniform(&mut rng, config.embed_in(), config.d_model);
        let layers = if config.use_mamba {
            (0..config.num_layers)
                .map(|_| LayerParams {
                    gate: LinearParams::uniform(&mut rng, config.d_model, config.d_model),
                    out_proj: LinearParams::uniform(&mut rng, config.d_model, config.d_model),
                    ssm: SsmParams::init(&mut rng, config.d_model),
                })
                .collect()
        } else {
            Vec::new()
        };
        let head = LinearParams::uniform(&mut rng, config.d_model, config.n_classes);
        Ok(ModelParams {
            config: config.clone(),
            mstb,
            embed,
            layers,
            head,
        })
    }

    /// All-zero tensors in the canonical layout for this config; the
    /// checkpoint reader fills these in.
    pub fn zeros(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let zl = |i: usize, o: usize| LinearParams {
            w: vec![T::zero(); i * o],
            b: vec![T::zero(); o],
            in_dim: i,
            out_dim: o,
        };
        let c = config.channels;
        let mstb = config.use_mstb.then(|| MstbParams {
            channels: c,
            branches: (0..config.top_k)
                .map(|_| {
                    [
                        vec![T::zero(); c * c],
                        vec![T::zero(); 9 * c * c],
                        vec![T::zero(); 25 * c * c],
                    ]
                })
                .collect(),
        });
        let d = config.d_model;
        let layers = if config.use_mamba {
            (0..config.num_layers)
                .map(|_| LayerParams {
                    gate: zl(d, d),
                    out_proj: zl(d, d),
                    ssm: SsmParams {
                        a: vec![T::zero(); d],
                        b_in: vec![T::zero(); d],
                        c_out: vec![T::zero(); d],
                        delta_raw: vec![T::zero(); d],
                        w_dt: vec![T::zero(); d],
                        d,
                    },
                })
                .collect()
        } else {
            Vec::new()
        };
        Ok(ModelParams {
            config: config.clone(),
            mstb,
            embed: zl(config.embed_in(), d),
            layers,
            head: zl(d, config.n_classes),
        })
    }

    /// Canonical `(name, values, extents)` listing of every trainable
    /// tensor. [`insert_params`] inserts leaves in exactly this order.
    pub fn named_tensors(&self) -> Vec<(String, &Vec<T>, Vec<usize>)> {
        let c = self.config.channels;
        let mut out: Vec<(String, &Vec<T>, Vec<usize>)> = Vec::new();
        if let Some(mstb) = &self.mstb {
            for (i, branch) in mstb.branches.iter().enumerate() {
                for (k, e) in branch.iter().zip(MSP_EXTENTS) {
                    out.push((format!("mstb.branch{i}.k{e}"), k, vec![e, e, c, c]));
                }
            }
        }
        out.push((
            "embed.w".into(),
            &self.embed.w,
            vec![self.embed.in_dim, self.embed.out_dim],
        ));
        out.push(("embed.b".into(), &self.embed.b, vec![self.embed.out_dim]));
        for (i, layer) in self.layers.iter().enumerate() {
            let d = layer.ssm.d;
            out.push((format!("layer{i}.gate.w"), &layer.gate.w, vec![d, d]));
            out.push((format!("layer{i}.gate.b"), &layer.gate.b, vec![d]));
            out.push((format!("layer{i}.ssm.a"), &layer.ssm.a, vec![d]));
            out.push((format!("layer{i}.ssm.b_in"), &layer.ssm.b_in, vec![d]));
            out.push((format!("layer{i}.ssm.c_out"), &layer.ssm.c_out, vec![d]));
            out.push((format!("layer{i}.ssm.delta_raw"), &layer.ssm.delta_raw, vec![d]));
            out.push((format!("layer{i}.ssm.w_dt"), &layer.ssm.w_dt, vec![d]));
            out.push((format!("layer{i}.out.w"), &layer.out_proj.w, vec![d, d]));
            out.push((format!("layer{i}.out.b"), &layer.out_proj.b, vec![d]));
        }
        out.push((
            "head.w".into(),
            &self.head.w,
            vec![self.head.in_dim, self.head.out_dim],
        ));
        out.push(("head.b".into(), &self.head.b, vec![self.head.out_dim]));
        out
    }

    /// Mutable view of the same tensors, in the same canonical order.
    pub fn named_tensors_mut(&mut self) -> Vec<(String, &mut Vec<T>)> {
        let mut out: Vec<(String, &mut Vec<T>)> = Vec::new();
        if let Some(mstb) = &mut self.mstb {
            for (i, branch) in mstb.branches.iter_mut().enumerate() {
                for (k, e) in branch.iter_mut().zip(MSP_EXTENTS) {
                    out.push((format!("mstb.branch{i}.k{e}"), k));
                }
            }
        }
        out.push(("embed.w".into(), &mut self.embed.w));
        out.push(("embed.b".into(), &mut self.embed.b));
        for (i, layer) in self.layers.iter_mut().enumerate() {
            out.push((format!("layer{i}.gate.w"), &mut layer.gate.w));
            out.push((format!("layer{i}.gate.b"), &mut layer.gate.b));
            out.push((format!("layer{i}.ssm.a"), &mut layer.ssm.a));
            out.push((format!("layer{i}.ssm.b_in"), &mut layer.ssm.b_in));
            out.push((format!("layer{i}.ssm.c_out"), &mut layer.ssm.c_out));
            out.push((format!("layer{i}.ssm.delta_raw"), &mut layer.ssm.delta_raw));
            out.push((format!("layer{i}.ssm.w_dt"), &mut layer.ssm.w_dt));
            out.push((format!("layer{i}.out.w"), &mut layer.out_proj.w));
            out.push((format!("layer{i}.out.b"), &mut layer.out_proj.b));
        }
        out.push(("head.w".into(), &mut self.head.w));
        out.push(("head.b".into(), &mut self.head.b));
        out
    }

    pub fn n_params(&self) -> usize {
        self.named_tensors().iter().map(|(_, v, _)| v.len()).sum()
    }
}

// ── Graph insertion ─────────────────────────────────────────────────────

/// Node ids of one layer's leaves.
#[derive(Debug, Clone)]
pub struct LayerNodes {
    pub gate_w: NodeId,
    pub gate_b: NodeId,
    pub a: NodeId,
    pub b_in: NodeId,
    pub c_out: NodeId,
    pub delta_raw: NodeId,
    pub w_dt: NodeId,
    pub out_w: NodeId,
    pub out_b: NodeId,
}

/// Node ids of every parameter leaf, mirroring [`ModelParams`].
#[derive(Debug, Clone)]
pub struct ParamNodes {
    pub mstb: Vec<[NodeId; 3]>,
    pub embed_w: NodeId,
    pub embed_b: NodeId,
    pub layers: Vec<LayerNodes>,
    pub head_w: NodeId,
    pub head_b: NodeId,
}

impl ParamNodes {
    /// Leaf ids in the canonical tensor order of
    /// [`ModelParams::named_tensors`].
    pub fn in_order(&self) -> Vec<NodeId> {
        let mut out = Vec::new();
        for branch in &self.mstb {
            out.extend_from_slice(branch);
        }
        out.push(self.embed_w);
        out.push(self.embed_b);
        for l in &self.layers {
            out.extend_from_slice(&[
                l.gate_w,
                l.gate_b,
                l.a,
                l.b_in,
                l.c_out,
                l.delta_raw,
                l.w_dt,
                l.out_w,
                l.out_b,
            ]);
        }
        out.push(self.head_w);
        out.push(self.head_b);
        out
    }
}

/// Insert every trainable tensor into `g` as a gradient-bearing leaf.
pub fn insert_params<T: Real>(g: &mut Graph<T>, p: &ModelParams<T>) -> Result<ParamNodes> {
    let mut mstb = Vec::new();
    if let Some(m) = &p.mstb {
        mstb = crate::mstb::insert_mstb_params(g, m)?;
    }
    let embed_w = g.param(p.embed.w.clone(), &[p.embed.in_dim, p.embed.out_dim])?;
    let embed_b = g.param(p.embed.b.clone(), &[p.embed.out_dim])?;
    let mut layers = Vec::with_capacity(p.layers.len());
    for layer in &p.layers {
        let d = layer.ssm.d;
        layers.push(LayerNodes {
            gate_w: g.param(layer.gate.w.clone(), &[d, d])?,
            gate_b: g.param(layer.gate.b.clone(), &[d])?,
            a: g.param(layer.ssm.a.clone(), &[d])?,
            b_in: g.param(layer.ssm.b_in.clone(), &[d])?,
            c_out: g.param(layer.ssm.c_out.clone(), &[d])?,
            delta_raw: g.param(layer.ssm.delta_raw.clone(), &[d])?,
            w_dt: g.param(layer.ssm.w_dt.clone(), &[d])?,
            out_w: g.param(layer.out_proj.w.clone(), &[d, d])?,
            out_b: g.param(layer.out_proj.b.clone(), &[d])?,
        });
    }
    let head_w = g.param(p.head.w.clone(), &[p.head.in_dim, p.head.out_dim])?;
    let head_b = g.param(p.head.b.clone(), &[p.head.out_dim])?;
    Ok(ParamNodes {
        mstb,
        embed_w,
        embed_b,
        layers,
        head_w,
        head_b,
    })
}

// ── Forward pieces ──────────────────────────────────────────────────────

fn linear<T: Real>(g: &mut Graph<T>, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId> {
    let y = g.matmul(x, w)?;
    g.add_bias(y, b)
}

/// Channel-token embedding: transpose `[L, C]` to `[C, L]` and map each
/// channel's full time course to one `d`-dimensional token. Row `j` of the
/// result depends only on channel `j`.
pub fn invert_embed<T: Real>(
    g: &mut Graph<T>,
    x: NodeId,
    embed_w: NodeId,
    embed_b: NodeId,
) -> Result<NodeId> {
    let xt = g.transpose2(x)?;
    linear(g, xt, embed_w, embed_b)
}

/// Run the per-model-dimension state-space scan over `tokens: [S, d]`.
///
/// All `d` scalar systems share the diagonal state `(a, b_in, c_out)` and
/// step size; the recurrence is vectorized as a `d x d` state matrix
/// (state index x model dimension): `H_t = H_{t-1} scaled by ā per row +
/// b̄ ⊗ u_t`, `y_t = c · H_t`. With `w_dt` absent the step size is
/// `softplus(delta_raw)` (time-invariant); with it each token shifts the
/// raw step by its mean feature times `w_dt` before the softplus.
pub fn ssm_tokens_scan<T: Real>(
    g: &mut Graph<T>,
    tokens: NodeId,
    a: NodeId,
    b_in: NodeId,
    c_out: NodeId,
    delta_raw: NodeId,
    w_dt: Option<NodeId>,
) -> Result<NodeId> {
    let shape = g.shape(tokens).to_vec();
    if shape.len() != 2 {
        return Err(Error::Dimension(format!(
            "ssm_tokens_scan: rank-2 tokens required, got {shape:?}"
        )));
    }
    let (s_len, d) = (shape[0], shape[1]);
    if g.shape(a) != [d] {
        return Err(Error::Dimension(format!(
            "ssm_tokens_scan: state size {:?} vs model dim {d}",
            g.shape(a)
        )));
    }
    let c_row = g.reshape(c_out, &[1, d])?;

    // Per-step decay/injection vectors: one shared pair in the
    // time-invariant case, one row per token in the selective case.
    enum Steps {
        Shared { a_bar: NodeId, b_col: NodeId },
        PerToken { a_bar: NodeId, b_bar: NodeId },
    }
    let steps = match w_dt {
        None => {
            let delta = g.softplus(delta_raw)?;
            let da = g.mul(delta, a)?;
            let a_bar = g.exp(da)?;
            let phi = g.zoh_phi(a, delta)?;
            let b_bar = g.mul(phi, b_in)?;
            let b_col = g.reshape(b_bar, &[d, 1])?;
            Steps::Shared { a_bar, b_col }
        }
        Some(w_dt) => {
            let mu = g.mean_pool(tokens, 1)?;
            let mu_col = g.reshape(mu, &[s_len, 1])?;
            let w_row = g.reshape(w_dt, &[1, d])?;
            let shift = g.matmul(mu_col, w_row)?;
            let raw = g.add_bias(shift, delta_raw)?;
            let delta = g.softplus(raw)?;
            let ones = g.constant(vec![T::one(); s_len], &[s_len, 1])?;
            let a_row = g.reshape(a, &[1, d])?;
            let a_mat = g.matmul(ones, a_row)?;
            let da = g.mul(delta, a_mat)?;
            let a_bar = g.exp(da)?;
            let phi = g.zoh_phi(a_mat, delta)?;
            let b_row = g.reshape(b_in, &[1, d])?;
            let b_mat = g.matmul(ones, b_row)?;
            let b_bar = g.mul(phi, b_mat)?;
            Steps::PerToken { a_bar, b_bar }
        }
    };

    let mut h: Option<NodeId> = None;
    let mut ys = Vec::with_capacity(s_len);
    for t in 0..s_len {
        let u_t = g.take_row(tokens, t)?;
        let inject = match &steps {
            Steps::Shared { b_col, .. } => g.matmul(*b_col, u_t)?,
            Steps::PerToken { b_bar, .. } => {
                let row = g.take_row(*b_bar, t)?;
                let col = g.transpose2(row)?;
                g.matmul(col, u_t)?
            }
        };
        let h_t = match h {
            None => inject,
            Some(prev) => {
                let decayed = match &steps {
                    Steps::Shared { a_bar, .. } => g.scale_rows(prev, *a_bar)?,
                    Steps::PerToken { a_bar, .. } => {
                        let row = g.take_row(*a_bar, t)?;
                        let vec = g.reshape(row, &[d])?;
                        g.scale_rows(prev, vec)?
                    }
                };
                g.add(decayed, inject)?
            }
        };
        h = Some(h_t);
        ys.push(g.matmul(c_row, h_t)?);
    }
    g.concat_rows(&ys)
}

/// One gated layer: `out_proj(scan(tokens) ∘ silu(gate(tokens)))`.
pub fn layer_forward<T: Real>(
    g: &mut Graph<T>,
    tokens: NodeId,
    layer: &LayerNodes,
    selective: bool,
) -> Result<NodeId> {
    let gated = linear(g, tokens, layer.gate_w, layer.gate_b)?;
    let v = g.silu(gated)?;
    let w_dt = if selective { Some(layer.w_dt) } else { None };
    let s = ssm_tokens_scan(g, tokens, layer.a, layer.b_in, layer.c_out, layer.delta_raw, w_dt)?;
    let mixed = g.mul(s, v)?;
    linear(g, mixed, layer.out_w, layer.out_b)
}

/// Full forward pass for one segment (`seg_len * channels` samples,
/// row-major time x channel). Returns the `[1, n_classes]` logits node.
/// The spectral plan, when the multi-scale block is enabled, is computed
/// from this segment (always in 64-bit, whatever `T` is).
pub fn forward<T: Real>(
    g: &mut Graph<T>,
    cfg: &ModelConfig,
    nodes: &ParamNodes,
    x: &[T],
) -> Result<NodeId> {
    let (l, c) = (cfg.seg_len, cfg.channels);
    if x.len() != l * c {
        return Err(Error::Dimension(format!(
            "forward: {} samples, expected {l} x {c}",
            x.len()
        )));
    }
    let mut cur = g.constant(x.to_vec(), &[l, c])?;
    if cfg.use_mstb {
        let plan = plan_segment(x, l, c, cfg.top_k)?;
        cur = mstb_forward(g, cur, &plan, &nodes.mstb)?;
    }
    let mut tokens = if cfg.use_inverted {
        invert_embed(g, cur, nodes.embed_w, nodes.embed_b)?
    } else {
        linear(g, cur, nodes.embed_w, nodes.embed_b)?
    };
    for layer in &nodes.layers {
        tokens = layer_forward(g, tokens, layer, cfg.selective)?;
    }
    let pooled = g.mean_pool(tokens, 0)?;
    let pooled = g.reshape(pooled, &[1, cfg.d_model])?;
    linear(g, pooled, nodes.head_w, nodes.head_b)
}

/// Forward plus the scalar cross-entropy against `target`. Returns
/// `(loss, logits)`.
pub fn sample_loss<T: Real>(
    g: &mut Graph<T>,
    cfg: &ModelConfig,
    nodes: &ParamNodes,
    x: &[T],
    target: u32,
) -> Result<(NodeId, NodeId)> {
    if target as usize >= cfg.n_classes {
        return Err(Error::Contract(format!(
            "sample_loss: label {target} outside 0..{}",
            cfg.n_classes
        )));
    }
    let logits = forward(g, cfg, nodes, x)?;
    let loss = g.nll_from_logits(logits, target as usize)?;
    Ok((loss, logits))
}

/// Class probabilities for one segment: a softmax simplex point.
pub fn predict_probs<T: Real>(params: &ModelParams<T>, x: &[T]) -> Result<Vec<T>> {
    let mut g = Graph::new();
    let nodes = insert_params(&mut g, params)?;
    let logits = forward(&mut g, &params.config, &nodes, x)?;
    let probs = g.softmax_axis(logits, 1)?;
    Ok(g.data(probs).to_vec())
}

/// Index of the most probable class for one segment.
pub fn predict_class<T: Real>(params: &ModelParams<T>, x: &[T]) -> Result<u32> {
    let probs = predict_probs(params, x)?;
    let mut best = 0;
    for (i, p) in probs.iter().enumerate() {
        if *p > probs[best] {
            best = i;
        }
    }
    Ok(best as u32)
}
