#!/usr/bin/env python3
"""Regenerate the checked-in verification corpus under corpus/.

Every expected.json here is produced by an *independent* implementation
(plain Python loops or numpy), never by the Rust code under test. Exact
cases (round trips, forced layouts, closed forms that are exact in binary
floating point) carry tolerance 0 and "exact": true; numeric cases carry
the tolerance their oracle justifies.

Layout per case:
    corpus/<module>/<case>/case.json      op name, tolerance, oracle note
    corpus/<module>/<case>/input.json     operation input
    corpus/<module>/<case>/expected.json  oracle output ({} for error cases)

Run from anywhere: paths are resolved relative to this file.
"""

import json
import math
import os
import shutil

import numpy as np

HERE = os.path.dirname(os.path.abspath(__file__))
ROOT = os.path.normpath(os.path.join(HERE, "..", "corpus"))

CASES = []


def _plain(v):
    """Recursively convert numpy scalars/arrays to plain Python types."""
    if isinstance(v, np.ndarray):
        return [_plain(x) for x in v.tolist()] if v.ndim else _plain(v.item())
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, dict):
        return {k: _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    return v


def emit(module, case, op, inp, expected, tolerance, oracle,
         exact=False, expect_error=False, error_offset=None):
    d = os.path.join(ROOT, module, case)
    os.makedirs(d, exist_ok=True)
    meta = {"op": op, "tolerance": tolerance, "oracle": oracle, "exact": exact}
    if expect_error:
        meta["expect_error"] = True
    if error_offset is not None:
        meta["error_offset"] = error_offset
    for name, obj in [("case.json", meta), ("input.json", _plain(inp)),
                      ("expected.json", _plain(expected))]:
        with open(os.path.join(d, name), "w") as f:
            json.dump(obj, f, indent=1, sort_keys=True)
            f.write("\n")
    CASES.append(f"{module}/{case}")


# ── Independent oracle implementations ──────────────────────────────────

def softmax(v):
    v = np.asarray(v, dtype=float)
    e = np.exp(v - v.max())
    return e / e.sum()


def softplus(x):
    x = np.asarray(x, dtype=float)
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def silu(x):
    x = np.asarray(x, dtype=float)
    return x / (1.0 + np.exp(-x))


def conv2d_same(x, k):
    """x: [h, w, ci]; k: [kh, kw, ci, co]; zero padding outside."""
    h, w, ci = x.shape
    kh, kw, _, co = k.shape
    ph, pw = kh // 2, kw // 2
    out = np.zeros((h, w, co))
    for r in range(h):
        for c in range(w):
            for dr in range(kh):
                rr = r + dr - ph
                if rr < 0 or rr >= h:
                    continue
                for dc in range(kw):
                    cc = c + dc - pw
                    if cc < 0 or cc >= w:
                        continue
                    out[r, c, :] += x[rr, cc, :] @ k[dr, dc, :, :]
    return out


def amp_spectrum(x):
    """Brute-force DFT magnitudes of the channel-mean of x [L, C],
    bins 1..=L//2, unnormalized."""
    L = x.shape[0]
    mean = [sum(x[t, :]) / x.shape[1] for t in range(L)]
    amps = []
    for f in range(1, L // 2 + 1):
        re = sum(mean[t] * math.cos(2.0 * math.pi / L * (f * t)) for t in range(L))
        im = -sum(mean[t] * math.sin(2.0 * math.pi / L * (f * t)) for t in range(L))
        amps.append(math.sqrt(re * re + im * im))
    return amps


def topk_bins(amps, k, L):
    """Exhaustive sort: descending amplitude, lower bin on ties."""
    order = sorted(range(len(amps)), key=lambda i: (-amps[i], i))
    return [(i + 1, -(-L // (i + 1))) for i in order[:k]]


def zoh(a, b, delta):
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    delta = np.asarray(delta, float)
    z = delta * a
    a_bar = np.exp(z)
    safe_a = np.where(a == 0.0, 1.0, a)
    phi = np.where(np.abs(z) < 1e-6, delta * (1.0 + z / 2.0), np.expm1(z) / safe_a)
    return a_bar, phi * b


def ssm_scan(a_bar, b_bar, c, x):
    d = len(a_bar)
    h = np.zeros(d)
    y = []
    for xt in x:
        h = np.asarray(a_bar) * h + np.asarray(b_bar) * xt
        y.append(float(np.dot(c, h)))
    return y


def ssm_kernel(a_bar, b_bar, c, s):
    return [float(sum(c[j] * a_bar[j] ** t * b_bar[j] for j in range(len(a_bar))))
            for t in range(s)]


def fold(x, p):
    """x: [L, C] -> grid [p, f, C] of column-contiguous patches + pad_len."""
    L, C = x.shape
    f = -(-L // p)
    g = np.zeros((p, f, C))
    for r in range(p):
        for c in range(f):
            t = c * p + r
            if t < L:
                g[r, c, :] = x[t]
    return g, p * f - L


def unfold(g, L):
    p, f, C = g.shape
    out = np.zeros((L, C))
    for t in range(L):
        out[t] = g[t % p, t // p, :]
    return out


def adam_ref(param, grad, lr, steps, b1=0.9, b2=0.999, eps=1e-8):
    p = np.asarray(param, float).copy()
    g = np.asarray(grad, float)
    m = np.zeros_like(p)
    v = np.zeros_like(p)
    for t in range(1, steps + 1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        mh = m / (1 - b1 ** t)
        vh = v / (1 - b2 ** t)
        p = p - lr * mh / (np.sqrt(vh) + eps)
    return p


def plateau_ref(losses, lr0, factor, min_delta, floor):
    lr = lr0
    prev = None
    out = []
    for loss in losses:
        if prev is not None and not (prev - loss >= min_delta):
            lr = max(lr * factor, floor)
        prev = loss
        out.append(lr)
    return out


def model_forward_ref(x, cfg, tensors):
    """Full pipeline at 64-bit: spectral plan, multi-scale block, inverted
    embedding, gated time-invariant state-space layers, mean pool, head."""
    L, C = cfg["seg_len"], cfg["channels"]
    d, k, n = cfg["d_model"], cfg["top_k"], cfg["n_classes"]
    cur = x
    if cfg["use_mstb"]:
        amps = amp_spectrum(cur)
        picks = topk_bins(amps, k, L)
        weights = softmax([amps[f - 1] for f, _ in picks])
        branches = []
        for i, (_, p) in enumerate(picks):
            g, _ = fold(cur, p)
            c0 = conv2d_same(g, tensors[f"mstb.branch{i}.k1"].reshape(1, 1, C, C))
            c1 = conv2d_same(g, tensors[f"mstb.branch{i}.k3"].reshape(3, 3, C, C))
            c2 = conv2d_same(g, tensors[f"mstb.branch{i}.k5"].reshape(5, 5, C, C))
            branches.append(unfold((c0 + c1 + c2) / 3.0, L))
        cur = sum(w * b for w, b in zip(weights, branches))
    if cfg["use_inverted"]:
        tokens = cur.T @ tensors["embed.w"].reshape(L, d) + tensors["embed.b"]
    else:
        tokens = cur @ tensors["embed.w"].reshape(C, d) + tensors["embed.b"]
    if cfg["use_mamba"]:
        for i in range(cfg["num_layers"]):
            gate = tokens @ tensors[f"layer{i}.gate.w"].reshape(d, d) + tensors[f"layer{i}.gate.b"]
            v = silu(gate)
            a_bar, b_bar = zoh(tensors[f"layer{i}.ssm.a"],
                               tensors[f"layer{i}.ssm.b_in"],
                               softplus(tensors[f"layer{i}.ssm.delta_raw"]))
            c_out = tensors[f"layer{i}.ssm.c_out"]
            h = np.zeros((d, d))
            ys = []
            for t in range(tokens.shape[0]):
                h = a_bar[:, None] * h + np.outer(b_bar, tokens[t])
                ys.append(c_out @ h)
            s = np.stack(ys)
            tokens = (s * v) @ tensors[f"layer{i}.out.w"].reshape(d, d) + tensors[f"layer{i}.out.b"]
    pooled = tokens.mean(axis=0)
    logits = pooled @ tensors["head.w"].reshape(d, n) + tensors["head.b"]
    return logits, softmax(logits)


# ── graph module ────────────────────────────────────────────────────────

def gen_graph():
    m = "graph"
    a = [1.0, 2.0, 3.0, 4.0]
    emit(m, "matmul_identity", "matmul",
         {"a": a, "a_shape": [2, 2], "b": [1.0, 0.0, 0.0, 1.0], "b_shape": [2, 2]},
         {"out": a}, 0.0, "multiplying by the identity returns the input", exact=True)
    emit(m, "matmul_annihilator", "matmul",
         {"a": a, "a_shape": [2, 2], "b": [0.0] * 4, "b_shape": [2, 2]},
         {"out": [0.0] * 4}, 0.0, "multiplying by the zero matrix gives zeros", exact=True)

    rng = np.random.RandomState(101)
    ma = rng.uniform(-2, 2, (3, 4))
    mb = rng.uniform(-2, 2, (4, 2))
    emit(m, "matmul_random_3x4_4x2", "matmul",
         {"a": ma.ravel(), "a_shape": [3, 4], "b": mb.ravel(), "b_shape": [4, 2]},
         {"out": (ma @ mb).ravel()}, 1e-12,
         "numpy matmul of the same operands")

    x = rng.uniform(-1, 1, (4, 3, 2))
    ident = np.zeros((1, 1, 2, 2))
    ident[0, 0, 0, 0] = 1.0
    ident[0, 0, 1, 1] = 1.0
    emit(m, "conv_identity_1x1", "conv2d_same",
         {"x": x.ravel(), "x_shape": [4, 3, 2], "k": ident.ravel(), "k_shape": [1, 1, 2, 2]},
         {"out": x.ravel()}, 0.0,
         "a 1x1 channel-identity kernel is the identity map", exact=True)
    emit(m, "conv_zero_kernel", "conv2d_same",
         {"x": x.ravel(), "x_shape": [4, 3, 2], "k": [0.0] * (9 * 4), "k_shape": [3, 3, 2, 2]},
         {"out": [0.0] * x.size}, 0.0, "an all-zero kernel annihilates any input", exact=True)

    x5 = rng.uniform(-1, 1, (5, 4, 2))
    k33 = rng.uniform(-1, 1, (3, 3, 2, 2))
    emit(m, "conv_random_3x3", "conv2d_same",
         {"x": x5.ravel(), "x_shape": [5, 4, 2], "k": k33.ravel(), "k_shape": [3, 3, 2, 2]},
         {"out": conv2d_same(x5, k33).ravel()}, 1e-12,
         "direct quadruple-loop same-padding convolution")

    emit(m, "softmax_symmetry", "softmax",
         {"x": [2.5, 2.5, 2.5]}, {"out": softmax([2.5, 2.5, 2.5])}, 1e-15,
         "equal inputs share mass equally: shifted exponentials are all 1")
    emit(m, "softmax_closed_form", "softmax",
         {"x": [0.0, math.log(3.0)]}, {"out": [0.25, 0.75]}, 1e-12,
         "exp(0) : exp(ln 3) = 1 : 3, normalized by hand")
    emit(m, "softmax_shift_invariance", "softmax",
         {"x": [1000.0, 1000.0]}, {"out": [0.5, 0.5]}, 1e-15,
         "max-shifted evaluation cannot overflow; symmetry forces halves")

    sv = [0.0, -6.0, -1.0, 0.5, 2.5, 6.0]
    emit(m, "silu_values", "silu",
         {"x": sv}, {"out": silu(sv)}, 1e-12,
         "x * logistic(x) evaluated by numpy; includes silu(0) = 0")

    row = [0.125, -2.5, 7.0]
    emit(m, "mean_pool_identical_rows", "mean_pool_axis0",
         {"x": row * 4, "shape": [4, 3]}, {"out": row}, 0.0,
         "the mean of four identical rows is that row (sum and division by 4 are exact)",
         exact=True)

    w = rng.uniform(-3, 3, 6)
    emit(m, "backward_sum_ones", "backward_sum",
         {"w": w, "shape": [2, 3]}, {"grad": [1.0] * 6}, 0.0,
         "d(sum w)/dw_i = 1 for every element", exact=True)
    emit(m, "backward_sum_square", "backward_sum_square",
         {"w": [1.0, 2.0, 3.0], "shape": [3]}, {"grad": [2.0, 4.0, 6.0]}, 0.0,
         "d(sum w^2)/dw = 2w, evaluated by hand", exact=True)


# ── signal module ───────────────────────────────────────────────────────

def gen_signal():
    m = "signal"
    for name, t in [("window_384_to_3", 384), ("window_130_to_1", 130)]:
        c = 2
        samples = [float(i) for i in range(t * c)]
        count = t // 128
        windows = [samples[w * 128 * c:(w + 1) * 128 * c] for w in range(count)]
        emit(m, name, "window",
             {"samples": samples, "t": t, "c": c, "l": 128},
             {"count": count, "windows": windows}, 0.0,
             "python list slicing into non-overlapping 128-step chunks", exact=True)
    emit(m, "window_too_short_errors", "window",
         {"samples": [0.0] * 200, "t": 100, "c": 2, "l": 128},
         {}, 0.0, "a 100-step trial cannot fill a 128-step window",
         exact=True, expect_error=True)

    x = np.array([1.0, 2.0, 3.0])
    std = math.sqrt(2.0 / 3.0)
    emit(m, "zscore_1_2_3", "zscore",
         {"x": x, "l": 3, "c": 1},
         {"out": [(v - 2.0) / std for v in x]}, 1e-12,
         "closed form: mean 2, population std sqrt(2/3)")
    emit(m, "zscore_constant_channel", "zscore",
         {"x": [4.25] * 10, "l": 5, "c": 2},
         {"out": [0.0] * 10}, 0.0,
         "zero deviations stay zero whatever the guarded denominator", exact=True)

    emit(m, "label_threshold_cases", "label_threshold",
         {"ratings": [7.0, 3.0, 5.0], "threshold": 5.0},
         {"labels": [1, 0, 0]}, 0.0,
         "strictly-greater decision rule applied by hand", exact=True)

    names = ["AF3", "F7", "AF4", "T8"]
    t = 3
    samples = [float(10 * step + ch) for step in range(t) for ch in range(4)]
    want = ["AF4", "AF3"]
    idx = [names.index(w) for w in want]
    out = [samples[step * 4 + i] for step in range(t) for i in idx]
    emit(m, "select_channels_reorder", "select_channels",
         {"samples": samples, "t": t, "names": names, "want": want},
         {"samples": out, "names": want}, 0.0,
         "column gather in the requested order, computed by hand", exact=True)
    emit(m, "select_channels_missing", "select_channels",
         {"samples": samples, "t": t, "names": names, "want": ["XX"]},
         {}, 0.0, "requesting an absent channel name must fail naming it",
         exact=True, expect_error=True)

    rng = np.random.RandomState(7)
    segs = rng.uniform(-1, 1, (3, 8)).round(6)
    emit(m, "eegs_round_trip", "eegs_round_trip",
         {"segments": segs, "labels": [0, 1, 0], "n_classes": 2, "seg_len": 4, "channels": 2},
         {"identical": 1}, 0.0,
         "encode-decode-reencode must reproduce the dataset and the bytes", exact=True)
    emit(m, "eegs_bad_magic", "eegs_decode",
         {"bytes": [ord(ch) for ch in "XXXX"] + [0] * 12},
         {}, 0.0, "a file that does not start with the format magic is rejected at offset 0",
         exact=True, expect_error=True, error_offset=0)

    header = "AF3,AF4,F3,F4"
    rows = [",".join(f"{0.01 * (r + 1) * (c + 1):.6f}" for c in range(4)) for r in range(256)]
    csv_text = header + "\n" + "\n".join(rows) + "\n"
    first = [0.01 * 1 * (c + 1) for c in range(4)]
    emit(m, "csv_4_channels_256_rows", "csv_parse",
         {"csv": csv_text},
         {"t": 256, "c": 4, "names": ["AF3", "AF4", "F3", "F4"],
          "row0": [round(v, 6) for v in first]}, 1e-12,
         "the header names 4 channels; 256 data rows follow")


# ── spectral module ─────────────────────────────────────────────────────

def gen_spectral():
    m = "spectral"
    x = np.array([[math.cos(2.0 * math.pi * 2 * t / 8)] for t in range(8)])
    amps = amp_spectrum(x)
    emit(m, "spectrum_pure_tone", "amplitude_spectrum",
         {"x": x.ravel(), "l": 8, "c": 1},
         {"spectrum": amps, "argmax_bin": 2}, 1e-9,
         "brute-force DFT loop; a bin-2 cosine peaks at bin 2 with magnitude L/2")
    xc = np.full((64, 1), 3.5)
    emit(m, "spectrum_constant_is_silent", "amplitude_spectrum",
         {"x": xc.ravel(), "l": 64, "c": 1},
         {"spectrum": amp_spectrum(xc)}, 1e-9,
         "a constant signal has no energy outside the excluded DC bin")
    t64 = np.arange(64)
    two = 2.0 * np.cos(2 * math.pi * 3 * t64 / 64 + 0.4) + np.cos(2 * math.pi * 7 * t64 / 64 - 1.1)
    x2 = two.reshape(64, 1)
    emit(m, "spectrum_two_tones_2_to_1", "amplitude_spectrum",
         {"x": x2.ravel(), "l": 64, "c": 1},
         {"spectrum": amp_spectrum(x2)}, 1e-9,
         "brute-force DFT; bins 3 and 7 carry a 2:1 amplitude ratio")

    emit(m, "topk_tie_goes_lower", "top_k_bins",
         {"amps": [5.0, 5.0, 1.0], "k": 1, "seg_len": 8},
         {"freqs": [1], "periods": [8]}, 0.0,
         "bins 1 and 2 tie at 5.0; the tie rule keeps the lower bin", exact=True)
    emit(m, "period_is_ceiling_division", "top_k_bins",
         {"amps": [0.0, 0.0, 9.0], "k": 1, "seg_len": 100},
         {"freqs": [3], "periods": [34]}, 0.0,
         "period = ceil(100/3) = 34 by integer arithmetic", exact=True)
    rng = np.random.RandomState(11)
    amps = rng.uniform(0, 10, 16)
    picks = topk_bins(list(amps), 2, 32)
    emit(m, "topk_random_vs_sort", "top_k_bins",
         {"amps": amps, "k": 2, "seg_len": 32},
         {"freqs": [f for f, _ in picks], "periods": [p for _, p in picks]}, 0.0,
         "exhaustive sort by (descending amplitude, ascending bin)", exact=True)

    emit(m, "weights_equal_amplitudes", "frequency_weights",
         {"amps": [4.2, 4.2]}, {"weights": [0.5, 0.5]}, 1e-15,
         "softmax symmetry: equal inputs give equal halves")
    emit(m, "weights_closed_form", "frequency_weights",
         {"amps": [0.0, math.log(3.0)]}, {"weights": [0.25, 0.75]}, 1e-12,
         "exp(0) : exp(ln 3) normalized by hand")
    emit(m, "weights_k1_is_total", "frequency_weights",
         {"amps": [13.7]}, {"weights": [1.0]}, 0.0,
         "a single branch takes all the mass", exact=True)


# ── mstb module ─────────────────────────────────────────────────────────

def gen_mstb():
    m = "mstb"
    x6 = np.array([[1.0], [2.0], [3.0], [4.0], [5.0], [6.0]])
    g6, pad6 = fold(x6, 3)
    emit(m, "fold_6_by_3", "fold",
         {"x": x6.ravel(), "l": 6, "c": 1, "p": 3},
         {"grid": g6.ravel(), "cols": 2, "pad_len": pad6}, 0.0,
         "column-contiguous patches: row r, column c holds sample c*p + r", exact=True)
    x5 = np.array([[1.0], [2.0], [3.0], [4.0], [5.0]])
    g5, pad5 = fold(x5, 3)
    emit(m, "fold_5_by_3_pads_one", "fold",
         {"x": x5.ravel(), "l": 5, "c": 1, "p": 3},
         {"grid": g5.ravel(), "cols": 2, "pad_len": pad5}, 0.0,
         "5 steps at period 3 leave one zero cell in the last patch", exact=True)

    rng = np.random.RandomState(23)
    xr = rng.uniform(-1, 1, (20, 3))
    periods = [1, 3, 5, 7, 20]
    emit(m, "fold_round_trip_many_periods", "fold_round_trip",
         {"x": xr.ravel(), "l": 20, "c": 3, "periods": periods},
         {"outs": [xr.ravel()] * len(periods)}, 0.0,
         "unfolding a fold reproduces the sequence for every period", exact=True)

    grid = rng.uniform(-1, 1, (4, 5, 2))
    def identity_k(e, c):
        k = np.zeros((e, e, c, c))
        for ch in range(c):
            k[e // 2, e // 2, ch, ch] = 1.0
        return k
    ks_id = {f"k{e}": identity_k(e, 2).ravel() for e in (1, 3, 5)}
    emit(m, "msp_identity_kernels", "msp",
         {"grid": grid.ravel(), "shape": [4, 5, 2], **ks_id},
         {"out": grid.ravel()}, 0.0,
         "center-tap identity kernels leave the grid unchanged at every scale", exact=True)
    emit(m, "msp_zero_kernels", "msp",
         {"grid": grid.ravel(), "shape": [4, 5, 2],
          **{f"k{e}": [0.0] * (e * e * 4) for e in (1, 3, 5)}},
         {"out": [0.0] * grid.size}, 0.0,
         "zero kernels at every scale give the zero grid", exact=True)
    ks = {e: rng.uniform(-0.5, 0.5, (e, e, 2, 2)) for e in (1, 3, 5)}
    msp_out = (conv2d_same(grid, ks[1]) + conv2d_same(grid, ks[3]) + conv2d_same(grid, ks[5])) / 3.0
    emit(m, "msp_random_vs_naive", "msp",
         {"grid": grid.ravel(), "shape": [4, 5, 2],
          **{f"k{e}": ks[e].ravel() for e in (1, 3, 5)}},
         {"out": msp_out.ravel()}, 1e-10,
         "naive loop convolution at each scale, then the plain three-way mean")

    b0 = rng.uniform(-1, 1, 12)
    emit(m, "blend_single_branch", "blend",
         {"branches": [b0], "weights": [1.0]},
         {"out": b0}, 0.0, "one branch with weight 1 is the identity", exact=True)
    emit(m, "blend_identical_branches", "blend",
         {"branches": [b0, b0, b0], "weights": [0.2, 0.3, 0.5]},
         {"out": b0}, 0.0,
         "a convex combination of copies of one value is that value", exact=True)
    emit(m, "blend_quarter_three_quarters", "blend",
         {"branches": [[1.0] * 6, [3.0] * 6], "weights": [0.25, 0.75]},
         {"out": [2.5] * 6}, 0.0,
         "0.25*1 + 0.75*3 = 2.5 elementwise, exact in binary", exact=True)

    xi = rng.uniform(-1, 1, (48, 4))
    emit(m, "identity_block_is_identity", "mstb_identity",
         {"x": xi.ravel(), "l": 48, "c": 4, "k": 2},
         {"out": xi.ravel()}, 0.0,
         "identity kernels and normalized weights make the whole block the identity map",
         exact=True)


# ── ssm module ──────────────────────────────────────────────────────────

def gen_ssm():
    m = "ssm"
    a_bar, b_bar = zoh([-1.0], [1.0], [math.log(2.0)])
    emit(m, "zoh_log2_halves", "zoh",
         {"a": [-1.0], "b": [1.0], "delta": [math.log(2.0)]},
         {"a_bar": a_bar, "b_bar": b_bar}, 1e-12,
         "exp(-ln 2) = 1/2 and (exp(-ln 2) - 1)/(-1) = 1/2, closed form")
    a_bar, b_bar = zoh([-1.0], [1.0], [1e-12])
    emit(m, "zoh_vanishing_step", "zoh",
         {"a": [-1.0], "b": [1.0], "delta": [1e-12]},
         {"a_bar": a_bar, "b_bar": b_bar}, 1e-15,
         "as the step vanishes, decay tends to 1 and injection to delta*b; expm1 reference")
    a_bar, b_bar = zoh([-1e-8], [1.0], [1.0])
    emit(m, "zoh_series_regime", "zoh",
         {"a": [-1e-8], "b": [1.0], "delta": [1.0]},
         {"a_bar": a_bar, "b_bar": b_bar}, 1e-9,
         "|delta*a| = 1e-8 exercises the small-argument branch; expm1 gives the exact value")
    a3 = [-0.5, -1.0, -2.0]
    d3 = [0.3, 0.7, 1.1]
    a_bar, b_bar = zoh(a3, [1.0, 2.0, 0.5], d3)
    emit(m, "zoh_vector_closed_form", "zoh",
         {"a": a3, "b": [1.0, 2.0, 0.5], "delta": d3},
         {"a_bar": a_bar, "b_bar": b_bar}, 1e-12,
         "independent elementwise evaluation via numpy exp/expm1")

    emit(m, "scan_geometric_impulse", "ssm_scan",
         {"a_bar": [0.5], "b_bar": [1.0], "c": [1.0], "x": [1.0, 0.0, 0.0]},
         {"y": [1.0, 0.5, 0.25]}, 0.0,
         "hand recurrence: powers of 1/2 are exact in binary", exact=True)
    emit(m, "scan_memoryless", "ssm_scan",
         {"a_bar": [0.0, 0.0], "b_bar": [1.0, 0.5], "c": [2.0, 2.0],
          "x": [1.0, -2.0, 3.0]},
         {"y": [3.0, -6.0, 9.0]}, 0.0,
         "zero decay keeps no state: y_t = (c . b_bar) x_t, by hand", exact=True)
    emit(m, "scan_zero_input", "ssm_scan",
         {"a_bar": [0.9, 0.8], "b_bar": [1.0, 1.0], "c": [1.0, -1.0],
          "x": [0.0, 0.0, 0.0, 0.0]},
         {"y": [0.0] * 4}, 0.0, "zero input drives nothing", exact=True)

    emit(m, "kernel_geometric", "ssm_kernel",
         {"a_bar": [0.5], "b_bar": [1.0], "c": [1.0], "s": 3},
         {"kernel": [1.0, 0.5, 0.25]}, 0.0,
         "k[t] = c a^t b = 2^-t, by hand", exact=True)

    rng = np.random.RandomState(31)
    d = 6
    a_bar = rng.uniform(0.1, 0.95, d)
    b_bar = rng.uniform(-1, 1, d)
    c = rng.uniform(-1, 1, d)
    x = rng.uniform(-1, 1, 24)
    y = ssm_scan(a_bar, b_bar, c, x)
    emit(m, "scan_random_reference", "ssm_scan",
         {"a_bar": a_bar, "b_bar": b_bar, "c": c, "x": x},
         {"y": y}, 1e-12, "stepwise python recurrence over the same parameters")
    emit(m, "scan_kernel_agreement", "ssm_agreement",
         {"a_bar": a_bar, "b_bar": b_bar, "c": c, "x": x},
         {"max_abs_diff": 0.0}, 1e-10,
         "the recurrence and its convolution-kernel form are the same linear map")
    emit(m, "kernel_impulse_response", "kernel_impulse",
         {"a_bar": a_bar, "b_bar": b_bar, "c": c, "s": 24},
         {"max_abs_diff": 0.0}, 1e-12,
         "feeding a unit impulse through the kernel path must return the kernel itself")

    L, C, dm = 5, 3, 5
    xe = rng.uniform(-1, 1, (L, C))
    emit(m, "embed_identity_transposes", "invert_embed",
         {"x": xe.ravel(), "l": L, "c": C,
          "w": np.eye(L).ravel(), "b": [0.0] * L, "d": L},
         {"tokens": xe.T.ravel()}, 0.0,
         "an identity map over time steps makes each token the raw channel course",
         exact=True)
    we = rng.uniform(-1, 1, (L, dm))
    be = rng.uniform(-1, 1, dm)
    emit(m, "embed_random_reference", "invert_embed",
         {"x": xe.ravel(), "l": L, "c": C, "w": we.ravel(), "b": be, "d": dm},
         {"tokens": (xe.T @ we + be).ravel()}, 1e-12,
         "numpy transpose-then-affine over the same operands")


# ── model module ────────────────────────────────────────────────────────

def gen_model():
    m = "model"
    cfg = {"seg_len": 16, "channels": 3, "n_classes": 3, "d_model": 4,
           "num_layers": 2, "top_k": 2, "use_mstb": True, "use_inverted": True,
           "use_mamba": True, "selective": False}
    L, C, d, n = cfg["seg_len"], cfg["channels"], cfg["d_model"], cfg["n_classes"]
    rng = np.random.RandomState(77)
    shapes = {}
    for i in range(cfg["top_k"]):
        for e in (1, 3, 5):
            shapes[f"mstb.branch{i}.k{e}"] = (e * e * C * C,)
    shapes["embed.w"] = (L * d,)
    shapes["embed.b"] = (d,)
    for i in range(cfg["num_layers"]):
        shapes[f"layer{i}.gate.w"] = (d * d,)
        shapes[f"layer{i}.gate.b"] = (d,)
        shapes[f"layer{i}.ssm.a"] = (d,)
        shapes[f"layer{i}.ssm.b_in"] = (d,)
        shapes[f"layer{i}.ssm.c_out"] = (d,)
        shapes[f"layer{i}.ssm.delta_raw"] = (d,)
        shapes[f"layer{i}.ssm.w_dt"] = (d,)
        shapes[f"layer{i}.out.w"] = (d * d,)
        shapes[f"layer{i}.out.b"] = (d,)
    shapes["head.w"] = (d * n,)
    shapes["head.b"] = (n,)
    tensors = {}
    for name, shape in shapes.items():
        if name.endswith("ssm.a"):
            tensors[name] = rng.uniform(-2.0, -0.5, shape)
        elif name.endswith("w_dt"):
            tensors[name] = np.zeros(shape)
        else:
            tensors[name] = rng.uniform(-0.6, 0.6, shape)
    t16 = np.arange(L)
    base = (1.1 * np.cos(2 * math.pi * 3 * t16 / L + 0.2)
            + 0.4 * np.cos(2 * math.pi * 5 * t16 / L - 0.9))
    x = np.stack([base * (1.0 + 0.2 * ch) + rng.uniform(-0.3, 0.3, L)
                  for ch in range(C)], axis=1)
    logits, probs = model_forward_ref(x, cfg, tensors)
    emit(m, "full_forward_reference", "model_forward",
         {"config": cfg, "tensors": {k: v for k, v in tensors.items()}, "x": x.ravel()},
         {"logits": logits, "probs": probs}, 1e-9,
         "complete 64-bit numpy reimplementation of the pipeline: brute DFT plan, "
         "loop convolutions, fold/unfold, inverted embedding, discretized scans, "
         "gated layers, mean pool, affine head")


# ── train module ────────────────────────────────────────────────────────

def gen_train():
    m = "train"
    emit(m, "nll_confident_correct", "nll_from_logits",
         {"logits": [40.0, -40.0], "target": 0},
         {"loss": math.log1p(math.exp(-80.0))}, 1e-12,
         "log-sum-exp minus the true logit; a confident correct prediction costs ~0")
    emit(m, "nll_even_pair_is_ln2", "nll_from_logits",
         {"logits": [1.75, 1.75], "target": 1},
         {"loss": math.log(2.0)}, 1e-12,
         "equal logits over 2 classes cost ln 2")
    emit(m, "nll_uniform_three_is_ln3", "nll_from_logits",
         {"logits": [0.3, 0.3, 0.3], "target": 2},
         {"loss": math.log(3.0)}, 1e-12,
         "equal logits over 3 classes cost ln 3")

    p0 = [1.0, -2.0, 0.5]
    emit(m, "adam_zero_grad_is_inert", "adam_steps",
         {"param": p0, "grad": [0.0] * 3, "lr": 1e-3, "steps": 1},
         {"param": p0}, 0.0,
         "zero gradient leaves zero moments, so the update is exactly zero", exact=True)
    g1 = [0.3, -1.2, 4.0]
    emit(m, "adam_first_step_magnitude", "adam_steps",
         {"param": p0, "grad": g1, "lr": 1e-3, "steps": 1},
         {"param": adam_ref(p0, g1, 1e-3, 1)}, 1e-15,
         "independent python Adam: the bias-corrected first step moves each "
         "element by almost exactly the rate against the gradient sign")
    emit(m, "adam_two_steps_reference", "adam_steps",
         {"param": p0, "grad": g1, "lr": 1e-3, "steps": 2},
         {"param": adam_ref(p0, g1, 1e-3, 2)}, 1e-12,
         "independent python Adam trace, two constant-gradient steps")

    emit(m, "plateau_improving_keeps_rate", "plateau",
         {"losses": [1.0, 0.8, 0.6, 0.4], "lr0": 1e-3, "factor": 0.5,
          "min_delta": 1e-4, "floor": 1e-5},
         {"lrs": plateau_ref([1.0, 0.8, 0.6, 0.4], 1e-3, 0.5, 1e-4, 1e-5)}, 0.0,
         "strict improvement above min_delta never triggers a cut", exact=True)
    emit(m, "plateau_flat_halves", "plateau",
         {"losses": [1.0, 1.0], "lr0": 1e-3, "factor": 0.5,
          "min_delta": 1e-4, "floor": 1e-5},
         {"lrs": [1e-3, 5e-4]}, 0.0,
         "a flat epoch halves the rate: 1e-3 -> 5e-4, exact in binary", exact=True)
    losses = [1.0] * 12
    emit(m, "plateau_clamps_at_floor", "plateau",
         {"losses": losses, "lr0": 1e-3, "factor": 0.5,
          "min_delta": 1e-4, "floor": 1e-5},
         {"lrs": plateau_ref(losses, 1e-3, 0.5, 1e-4, 1e-5)}, 0.0,
         "repeated plateaus halve until the floor clamps the rate", exact=True)

    emit(m, "split_80_20_sizes", "split_sizes",
         {"n": 100, "seed": 3, "seg_len": 2, "channels": 1, "n_classes": 2},
         {"n_train": 80, "n_test": 20, "disjoint": 1, "union_complete": 1}, 0.0,
         "4/5 of 100 is 80; a permutation split is disjoint and exhaustive", exact=True)

    cfg = {"seg_len": 12, "channels": 2, "n_classes": 2, "d_model": 4,
           "num_layers": 1, "top_k": 2, "use_mstb": True, "use_inverted": True,
           "use_mamba": True, "selective": False}
    emit(m, "checkpoint_round_trip", "checkpoint_round_trip",
         {"config": cfg, "seed": 9},
         {"identical": 1}, 0.0,
         "decode(encode(params)) then re-encode must reproduce the bytes", exact=True)


def main():
    if os.path.isdir(ROOT):
        shutil.rmtree(ROOT)
    gen_graph()
    gen_signal()
    gen_spectral()
    gen_mstb()
    gen_ssm()
    gen_model()
    gen_train()
    print(f"wrote {len(CASES)} cases under {ROOT}")
    for c in CASES:
        print(" ", c)


if __name__ == "__main__":
    main()
