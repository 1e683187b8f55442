//! Multi-scale temporal block: fold a segment into period-aligned 2-D patch
//! grids, convolve each grid at several kernel extents, unfold, and blend
//! the per-period results with the plan's softmax weights.
//!
//! Folding is column-contiguous: column `c` of the grid is the `c`-th
//! length-`p` patch of the (zero-padded) signal, so element `(r, c, ch)`
//! equals `padded[c*p + r, ch]`. The column count is always `ceil(L/p)`,
//! which keeps the padding strictly shorter than one patch.
//!
//! The blend is computed as `b_0 + Σ_{i>0} w_i * (b_i - b_0)`. For
//! normalized weights this is the ordinary convex combination, but it makes
//! two contracts exact in floating point: identical branches reproduce that
//! branch bit-for-bit, and a single branch passes through untouched. With
//! identity-configured convolutions the whole block is therefore exactly
//! the identity map.

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::real::Real;
use crate::spectral::SpectralPlan;

/// Kernel extents of the multi-scale perception stage.
pub const MSP_EXTENTS: [usize; 3] = [1, 3, 5];

/// Number of grid columns for a length-`l` signal folded at period `p`:
/// just enough whole patches to cover the signal.
pub fn grid_cols(l: usize, p: usize) -> usize {
    l.div_ceil(p)
}

// ── Plain patch grid (non-autodiff twin) ────────────────────────────────

/// A segment folded at one period: `period x cols x channels`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchGrid<T> {
    pub data: Vec<T>,
    pub period: usize,
    pub cols: usize,
    pub channels: usize,
    /// Zeros appended to complete the last patch; always `< period`.
    pub pad_len: usize,
}

impl<T: Real> PatchGrid<T> {
    /// Fold `segment` (`l x channels`, row-major) at `period`.
    pub fn from_segment(segment: &[T], l: usize, channels: usize, period: usize) -> Result<Self> {
        if segment.len() != l * channels {
            return Err(Error::Dimension(format!(
                "patch grid: {} samples, expected {l} x {channels}",
                segment.len()
            )));
        }
        if period == 0 || period > l {
            return Err(Error::Contract(format!(
                "patch grid: period {period} outside 1..={l}"
            )));
        }
        let cols = grid_cols(l, period);
        let padded = period * cols;
        let mut data = vec![T::zero(); padded * channels];
        for r in 0..period {
            for c in 0..cols {
                let t = c * period + r;
                if t < l {
                    for ch in 0..channels {
                        data[(r * cols + c) * channels + ch] = segment[t * channels + ch];
                    }
                }
            }
        }
        Ok(PatchGrid {
            data,
            period,
            cols,
            channels,
            pad_len: padded - l,
        })
    }

    /// Unfold back to the first `l` time steps (inverse of `from_segment`).
    pub fn to_segment(&self, l: usize) -> Result<Vec<T>> {
        if self.period * self.cols < l {
            return Err(Error::Contract(format!(
                "patch grid holds {} steps, cannot unfold {l}",
                self.period * self.cols
            )));
        }
        let mut out = vec![T::zero(); l * self.channels];
        for t in 0..l {
            let (c, r) = (t / self.period, t % self.period);
            for ch in 0..self.channels {
                out[t * self.channels + ch] = self.data[(r * self.cols + c) * self.channels + ch];
            }
        }
        Ok(out)
    }
}

// ── Graph-side fold / unfold ────────────────────────────────────────────

/// Fold a `[l, channels]` node into a `[p, f, channels]` grid node by
/// zero-padding to `p*f` steps and taking column-contiguous patches.
/// Requires `p * f >= l`.
pub fn pad_and_reshape<T: Real>(
    g: &mut Graph<T>,
    x: NodeId,
    p: usize,
    f: usize,
) -> Result<NodeId> {
    let shape = g.shape(x).to_vec();
    if shape.len() != 2 {
        return Err(Error::Dimension(format!(
            "pad_and_reshape: rank-2 input required, got {shape:?}"
        )));
    }
    let (l, ch) = (shape[0], shape[1]);
    if p == 0 || f == 0 || p * f < l {
        return Err(Error::Contract(format!(
            "pad_and_reshape: {p} x {f} patches cannot hold {l} steps"
        )));
    }
    // Row-major [p*f, ch] buffer reshaped to [f, p, ch] puts patch c at
    // slab c; swapping the first two axes yields the [p, f, ch] grid.
    let padded = g.pad_end(x, &[p * f, ch])?;
    let stacked = g.reshape(padded, &[f, p, ch])?;
    g.permute3(stacked, [1, 0, 2])
}

/// Unfold a `[p, f, channels]` grid node back to its first `l` steps.
pub fn flatten_truncate<T: Real>(g: &mut Graph<T>, grid: NodeId, l: usize) -> Result<NodeId> {
    let shape = g.shape(grid).to_vec();
    if shape.len() != 3 {
        return Err(Error::Dimension(format!(
            "flatten_truncate: rank-3 grid required, got {shape:?}"
        )));
    }
    let (p, f, ch) = (shape[0], shape[1], shape[2]);
    if p * f < l {
        return Err(Error::Contract(format!(
            "flatten_truncate: grid holds {} steps, cannot unfold {l}",
            p * f
        )));
    }
    let stacked = g.permute3(grid, [1, 0, 2])?;
    let flat = g.reshape(stacked, &[p * f, ch])?;
    g.take_prefix(flat, &[l, ch])
}

// ── Parameters ──────────────────────────────────────────────────────────

/// Convolution kernels of the block: one set of `{1, 3, 5}` square kernels
/// per scale branch, each mapping `channels -> channels`.
#[derive(Debug, Clone, PartialEq)]
pub struct MstbParams<T> {
    pub channels: usize,
    pub branches: Vec<[Vec<T>; 3]>,
}

impl<T: Real> MstbParams<T> {
    /// All kernels set to the channel-identity delta at the center tap, so
    /// every convolution (and the whole block) is the identity map.
    pub fn identity(channels: usize, n_branches: usize) -> Self {
        let branch = || {
            let mut kernels: Vec<Vec<T>> = Vec::with_capacity(3);
            for e in MSP_EXTENTS {
                kernels.push(identity_kernel(e, channels));
            }
            [kernels[0].clone(), kernels[1].clone(), kernels[2].clone()]
        };
        MstbParams {
            channels,
            branches: (0..n_branches).map(|_| branch()).collect(),
        }
    }

    pub fn n_params(&self) -> usize {
        self.branches
            .iter()
            .flat_map(|b| b.iter().map(|k| k.len()))
            .sum()
    }
}

/// Channel-identity kernel of the given odd extent: delta at the center
/// tap, identity across channels.
pub fn identity_kernel<T: Real>(extent: usize, channels: usize) -> Vec<T> {
    let mut k = vec![T::zero(); extent * extent * channels * channels];
    let center = extent / 2;
    for i in 0..channels {
        k[(((center * extent) + center) * channels + i) * channels + i] = T::one();
    }
    k
}

/// Insert the block's kernels into a graph as trainable leaves.
pub fn insert_mstb_params<T: Real>(
    g: &mut Graph<T>,
    params: &MstbParams<T>,
) -> Result<Vec<[NodeId; 3]>> {
    let c = params.channels;
    params
        .branches
        .iter()
        .map(|kernels| {
            let mut ids = [0; 3];
            for (slot, (k, e)) in kernels.iter().zip(MSP_EXTENTS).enumerate() {
                ids[slot] = g.param(k.clone(), &[e, e, c, c])?;
            }
            Ok(ids)
        })
        .collect()
}

// ── Forward pieces ──────────────────────────────────────────────────────

/// Multi-scale perception: same-padding convolutions at extents `{1, 3, 5}`
/// over one grid, averaged. Shape-preserving. The mean is taken relative to
/// the first convolution (`c0 + ((c1-c0) + (c2-c0))/3`) so that coinciding
/// outputs — e.g. identity kernels — average to themselves bit-for-bit.
pub fn msp_forward<T: Real>(
    g: &mut Graph<T>,
    grid: NodeId,
    kernels: &[NodeId; 3],
) -> Result<NodeId> {
    let c0 = g.conv2d_same(grid, kernels[0])?;
    let c1 = g.conv2d_same(grid, kernels[1])?;
    let c2 = g.conv2d_same(grid, kernels[2])?;
    let d1 = g.sub(c1, c0)?;
    let d2 = g.sub(c2, c0)?;
    let s = g.add(d1, d2)?;
    let s = g.scale(s, T::from_f64(1.0 / 3.0))?;
    g.add(c0, s)
}

/// Convex blend of same-shaped branches with normalized weights, computed
/// relative to the first branch so identical branches blend exactly.
pub fn aggregate_scales<T: Real>(
    g: &mut Graph<T>,
    branches: &[NodeId],
    weights: &[f64],
) -> Result<NodeId> {
    if branches.is_empty() || branches.len() != weights.len() {
        return Err(Error::Contract(format!(
            "aggregate_scales: {} branches with {} weights",
            branches.len(),
            weights.len()
        )));
    }
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > 1e-6 || weights.iter().any(|w| *w < 0.0) {
        return Err(Error::Contract(format!(
            "aggregate_scales: weights {weights:?} are not normalized"
        )));
    }
    let first_shape = g.shape(branches[0]).to_vec();
    for &b in &branches[1..] {
        if g.shape(b) != first_shape {
            return Err(Error::Dimension(format!(
                "aggregate_scales: branch shape {:?} vs {:?}",
                g.shape(b),
                first_shape
            )));
        }
    }
    let mut out = branches[0];
    for (i, &b) in branches.iter().enumerate().skip(1) {
        let diff = g.sub(b, branches[0])?;
        let scaled = g.scale(diff, T::from_f64(weights[i]))?;
        out = g.add(out, scaled)?;
    }
    Ok(out)
}

/// The whole block for one segment node `x: [l, channels]` under `plan`:
/// one fold/convolve/unfold branch per selected period, blended by the
/// plan's weights. Output shape equals the input shape.
pub fn mstb_forward<T: Real>(
    g: &mut Graph<T>,
    x: NodeId,
    plan: &SpectralPlan,
    branch_kernels: &[[NodeId; 3]],
) -> Result<NodeId> {
    let shape = g.shape(x).to_vec();
    if shape.len() != 2 {
        return Err(Error::Dimension(format!(
            "mstb_forward: rank-2 input required, got {shape:?}"
        )));
    }
    let l = shape[0];
    if plan.k() != branch_kernels.len() {
        return Err(Error::Contract(format!(
            "mstb_forward: plan selects {} periods but block has {} branches",
            plan.k(),
            branch_kernels.len()
        )));
    }
    let mut branches = Vec::with_capacity(plan.k());
    for (i, &p) in plan.periods.iter().enumerate() {
        let f = grid_cols(l, p);
        let grid = pad_and_reshape(g, x, p, f)?;
        let conv = msp_forward(g, grid, &branch_kernels[i])?;
        branches.push(flatten_truncate(g, conv, l)?);
    }
    aggregate_scales(g, &branches, &plan.weights)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::plan_segment;

    fn pseudo(n: usize, seed: u64) -> Vec<f64> {
        let mut state = seed.wrapping_mul(0x9E3779B97F4A7C15).max(1);
        (0..n)
            .map(|_| {
                state ^= state << 13;
                state ^= state >> 7;
                state ^= state << 17;
                (state >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
            })
            .collect()
    }

    #[test]
    fn fold_layout_is_column_contiguous() {
        // [1..6] at period 3: column 0 is the first patch, column 1 the second.
        let x: Vec<f64> = (1..=6).map(|v| v as f64).collect();
        let grid = PatchGrid::from_segment(&x, 6, 1, 3).unwrap();
        assert_eq!(grid.cols, 2);
        assert_eq!(grid.pad_len, 0);
        assert_eq!(grid.data, vec![1.0, 4.0, 2.0, 5.0, 3.0, 6.0]);
    }

    #[test]
    fn fold_pads_only_the_last_patch() {
        let x: Vec<f64> = (1..=5).map(|v| v as f64).collect();
        let grid = PatchGrid::from_segment(&x, 5, 1, 3).unwrap();
        assert_eq!(grid.pad_len, 1);
        assert!(grid.pad_len < grid.period);
        // Element (2, 1) is the padding cell.
        assert_eq!(grid.data[(2 * grid.cols + 1) * grid.channels], 0.0);
        assert_eq!(grid.to_segment(5).unwrap(), x);
    }

    #[test]
    fn plain_and_graph_folds_agree_bitwise() {
        let (l, ch) = (37, 3);
        let x = pseudo(l * ch, 5);
        for p in [1, 4, 7, 19, 37] {
            let f = grid_cols(l, p);
            let plain = PatchGrid::from_segment(&x, l, ch, p).unwrap();
            let mut g = Graph::<f64>::new();
            let xn = g.constant(x.clone(), &[l, ch]).unwrap();
            let gn = pad_and_reshape(&mut g, xn, p, f).unwrap();
            assert_eq!(g.shape(gn), &[p, f, ch]);
            assert_eq!(g.data(gn), &plain.data[..]);
            let back = flatten_truncate(&mut g, gn, l).unwrap();
            assert_eq!(g.data(back), &x[..]);
        }
    }

    #[test]
    fn round_trip_for_every_period_of_a_plan() {
        let (l, ch) = (64, 2);
        let x = pseudo(l * ch, 9);
        let plan = plan_segment(&x, l, ch, 3).unwrap();
        for &p in &plan.periods {
            let grid = PatchGrid::from_segment(&x, l, ch, p).unwrap();
            assert_eq!(grid.to_segment(l).unwrap(), x);
            assert!(grid.pad_len < p || p == 0);
        }
    }

    #[test]
    fn msp_identity_kernels_preserve_grid() {
        let mut g = Graph::<f64>::new();
        let data = pseudo(4 * 3 * 2, 13);
        let grid = g.constant(data.clone(), &[4, 3, 2]).unwrap();
        let params = MstbParams::<f64>::identity(2, 1);
        let ids = insert_mstb_params(&mut g, &params).unwrap();
        let out = msp_forward(&mut g, grid, &ids[0]).unwrap();
        for (a, b) in g.data(out).iter().zip(&data) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn aggregate_matches_hand_blend() {
        let mut g = Graph::<f64>::new();
        let a = g.constant(vec![1.0; 6], &[2, 3]).unwrap();
        let b = g.constant(vec![3.0; 6], &[2, 3]).unwrap();
        let out = aggregate_scales(&mut g, &[a, b], &[0.25, 0.75]).unwrap();
        for v in g.data(out) {
            assert_eq!(*v, 2.5);
        }
    }

    #[test]
    fn aggregate_of_identical_branches_is_exact() {
        let mut g = Graph::<f64>::new();
        let vals = pseudo(12, 21);
        let a = g.constant(vals.clone(), &[4, 3]).unwrap();
        let b = g.constant(vals.clone(), &[4, 3]).unwrap();
        let c = g.constant(vals.clone(), &[4, 3]).unwrap();
        let out = aggregate_scales(&mut g, &[a, b, c], &[0.37, 0.21, 0.42]).unwrap();
        assert_eq!(g.data(out), &vals[..]);
    }

    #[test]
    fn aggregate_single_branch_is_identity() {
        let mut g = Graph::<f64>::new();
        let vals = pseudo(6, 22);
        let a = g.constant(vals.clone(), &[2, 3]).unwrap();
        let out = aggregate_scales(&mut g, &[a], &[1.0]).unwrap();
        assert_eq!(g.data(out), &vals[..]);
    }

    #[test]
    fn aggregate_stays_in_the_elementwise_hull() {
        for trial in 0..20 {
            let mut g = Graph::<f64>::new();
            let b0 = pseudo(8, 100 + trial);
            let b1 = pseudo(8, 200 + trial);
            let b2 = pseudo(8, 300 + trial);
            let raw: Vec<f64> = pseudo(3, 400 + trial).iter().map(|v| v.abs() + 0.1).collect();
            let s: f64 = raw.iter().sum();
            let w: Vec<f64> = raw.iter().map(|v| v / s).collect();
            let n0 = g.constant(b0.clone(), &[8]).unwrap();
            let n0 = g.reshape(n0, &[2, 4]).unwrap();
            let n1 = g.constant(b1.clone(), &[8]).unwrap();
            let n1 = g.reshape(n1, &[2, 4]).unwrap();
            let n2 = g.constant(b2.clone(), &[8]).unwrap();
            let n2 = g.reshape(n2, &[2, 4]).unwrap();
            let out = aggregate_scales(&mut g, &[n0, n1, n2], &w).unwrap();
            for i in 0..8 {
                let lo = b0[i].min(b1[i]).min(b2[i]) - 1e-12;
                let hi = b0[i].max(b1[i]).max(b2[i]) + 1e-12;
                let v = g.data(out)[i];
                assert!(v >= lo && v <= hi, "trial {trial}: {v} outside [{lo}, {hi}]");
            }
        }
    }

    #[test]
    fn aggregate_rejects_unnormalized_weights() {
        let mut g = Graph::<f64>::new();
        let a = g.constant(vec![0.0; 4], &[2, 2]).unwrap();
        let b = g.constant(vec![1.0; 4], &[2, 2]).unwrap();
        assert!(aggregate_scales(&mut g, &[a, b], &[0.7, 0.7]).is_err());
    }

    #[test]
    fn identity_configured_block_is_exactly_identity() {
        let (l, ch) = (48, 4);
        let x = pseudo(l * ch, 31);
        let plan = plan_segment(&x, l, ch, 2).unwrap();
        let params = MstbParams::<f64>::identity(ch, 2);
        let mut g = Graph::<f64>::new();
        let xn = g.constant(x.clone(), &[l, ch]).unwrap();
        let ids = insert_mstb_params(&mut g, &params).unwrap();
        let out = mstb_forward(&mut g, xn, &plan, &ids).unwrap();
        assert_eq!(g.data(out), &x[..], "identity block must be bit-exact");
    }

    #[test]
    fn block_gradients_match_finite_differences() {
        // FD over every kernel entry of a small two-branch block.
        let (l, ch) = (10, 2);
        let x = pseudo(l * ch, 41);
        let plan = plan_segment(&x, l, ch, 2).unwrap();
        let loss_weights: Vec<f64> = pseudo(l * ch, 42).iter().map(|v| v + 2.0).collect();

        let run = |kvals: &[Vec<Vec<f64>>]| -> (f64, Vec<Vec<Vec<f64>>>) {
            let mut g = Graph::<f64>::new();
            let xn = g.constant(x.clone(), &[l, ch]).unwrap();
            let mut ids = Vec::new();
            for branch in kvals {
                let mut slot = [0; 3];
                for (s, (k, e)) in branch.iter().zip(MSP_EXTENTS).enumerate() {
                    slot[s] = g.param(k.clone(), &[e, e, ch, ch]).unwrap();
                }
                ids.push(slot);
            }
            let out = mstb_forward(&mut g, xn, &plan, &ids).unwrap();
            let w = g.constant(loss_weights.clone(), &[l, ch]).unwrap();
            let prod = g.mul(out, w).unwrap();
            let loss = g.sum_all(prod).unwrap();
            g.backward(loss).unwrap();
            let grads = ids
                .iter()
                .map(|slot| slot.iter().map(|&id| g.grad(id).unwrap().to_vec()).collect())
                .collect();
            (g.data(loss)[0], grads)
        };

        let mut kvals: Vec<Vec<Vec<f64>>> = Vec::new();
        for b in 0..2 {
            kvals.push(
                MSP_EXTENTS
                    .iter()
                    .enumerate()
                    .map(|(s, &e)| {
                        pseudo(e * e * ch * ch, 50 + (b * 3 + s) as u64)
                            .iter()
                            .map(|v| v * 0.3)
                            .collect()
                    })
                    .collect(),
            );
        }
        let (_, analytic) = run(&kvals);
        let h = 1e-5;
        for b in 0..2 {
            for s in 0..3 {
                for i in 0..kvals[b][s].len() {
                    let orig = kvals[b][s][i];
                    kvals[b][s][i] = orig + h;
                    let (fp, _) = run(&kvals);
                    kvals[b][s][i] = orig - h;
                    let (fm, _) = run(&kvals);
                    kvals[b][s][i] = orig;
                    let num = (fp - fm) / (2.0 * h);
                    let ana = analytic[b][s][i];
                    let rel = (ana - num).abs() / ana.abs().max(num.abs()).max(1e-6);
                    assert!(rel < 1e-6, "branch {b} kernel {s} entry {i}: rel {rel}");
                }
            }
        }
    }
}
