//! Runner for the checked-in verification corpus under `corpus/`.
//!
//! Each case directory holds `case.json` (operation name, tolerance, a
//! note on the oracle that produced the expectation), `input.json`, and
//! `expected.json`, whose values were generated by independent
//! reimplementations (see `scripts/gen_corpus.py`). The runner evaluates
//! the named operation on the input and compares the result against the
//! expectation: numbers within the case tolerance (absolute), everything
//! else exactly. Cases marked `expect_error` pass when the operation
//! fails; with `error_offset` present the failure must be a format error
//! at that byte.
//!
//! Every number runs at 64-bit here regardless of the training precision.

use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use serde_json::{json, Map, Value};

use crate::checkpoint::{decode_params, encode_params};
use crate::eegs::{decode_segments, encode_segments};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::model::{forward, insert_params, ModelConfig, ModelParams};
use crate::mstb::{
    aggregate_scales, insert_mstb_params, msp_forward, mstb_forward, MstbParams, PatchGrid,
};
use crate::optim::{Adam, PlateauSchedule};
use crate::signal::{
    binarize_label, read_csv_trial, select_channels, window_segments, zscore_channel,
    SegmentDataset, TrialRecording,
};
use crate::spectral::{amplitude_spectrum, frequency_weights, plan_segment, select_topk};
use crate::ssm::{apply_kernel, ssm_kernel, ssm_scan, zoh_discretize};
use crate::train::split_intra;

/// Outcome of one corpus case.
#[derive(Debug, Clone)]
pub struct CaseResult {
    /// `module/case` relative to the corpus root.
    pub name: String,
    pub op: String,
    pub passed: bool,
    /// Worst absolute deviation, first mismatch, or error text.
    pub detail: String,
}

/// Run every case under `root` at its stored tolerance.
pub fn run_corpus(root: &Path) -> Result<Vec<CaseResult>> {
    run_corpus_scaled(root, 1.0)
}

/// Run every case, scaling the tolerance of cases marked `exact` by
/// `exact_tol_scale` (used to verify that exact cases stay exact well
/// below their stated tolerance).
pub fn run_corpus_scaled(root: &Path, exact_tol_scale: f64) -> Result<Vec<CaseResult>> {
    if !root.is_dir() {
        return Err(Error::Corpus(format!(
            "corpus root {} is not a directory",
            root.display()
        )));
    }
    let mut results = Vec::new();
    for module in sorted_dirs(root)? {
        for case in sorted_dirs(&module)? {
            let name = format!(
                "{}/{}",
                module.file_name().unwrap_or_default().to_string_lossy(),
                case.file_name().unwrap_or_default().to_string_lossy()
            );
            results.push(run_case(&case, &name, exact_tol_scale)?);
        }
    }
    if results.is_empty() {
        return Err(Error::Corpus(format!(
            "no cases found under {}",
            root.display()
        )));
    }
    Ok(results)
}

fn sorted_dirs(root: &Path) -> Result<Vec<std::path::PathBuf>> {
    let mut dirs: Vec<_> = std::fs::read_dir(root)
        .map_err(|e| Error::Corpus(format!("{}: {e}", root.display())))?
        .filter_map(|r| r.ok().map(|d| d.path()))
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    Ok(dirs)
}

fn read_json(path: &Path) -> Result<Value> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Corpus(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Corpus(format!("{}: {e}", path.display())))
}

fn run_case(dir: &Path, name: &str, exact_tol_scale: f64) -> Result<CaseResult> {
    let meta = read_json(&dir.join("case.json"))?;
    let input = read_json(&dir.join("input.json"))?;
    let expected = read_json(&dir.join("expected.json"))?;
    let op = meta["op"]
        .as_str()
        .ok_or_else(|| Error::Corpus(format!("{name}: case.json lacks an op")))?
        .to_string();
    let mut tol = meta["tolerance"]
        .as_f64()
        .ok_or_else(|| Error::Corpus(format!("{name}: case.json lacks a tolerance")))?;
    if meta["exact"].as_bool().unwrap_or(false) {
        tol *= exact_tol_scale;
    }
    let expect_error = meta["expect_error"].as_bool().unwrap_or(false);

    let outcome = eval_op(&op, &input);
    let (passed, detail) = match (expect_error, outcome) {
        (true, Err(e)) => match meta["error_offset"].as_u64() {
            Some(want) => match &e {
                Error::Format { offset, .. } if *offset == want => {
                    (true, format!("failed as required: {e}"))
                }
                _ => (false, format!("expected a format error at byte {want}, got: {e}")),
            },
            None => (true, format!("failed as required: {e}")),
        },
        (true, Ok(_)) => (false, "operation succeeded but an error was expected".into()),
        (false, Err(e)) => (false, format!("operation failed: {e}")),
        (false, Ok(actual)) => match value_diff(&actual, &expected, tol, "$") {
            Ok(worst) => (true, format!("worst abs diff {worst:.3e}")),
            Err(msg) => (false, msg),
        },
    };
    Ok(CaseResult {
        name: name.to_string(),
        op,
        passed,
        detail,
    })
}

// ── Expected-vs-actual comparison ───────────────────────────────────────

/// Compare `actual` against `expected`: numbers within `tol` (absolute),
/// strings/bools exactly, arrays elementwise, objects on the expected
/// keys (extra actual keys are allowed). Returns the worst numeric
/// deviation, or a message locating the first mismatch.
fn value_diff(
    actual: &Value,
    expected: &Value,
    tol: f64,
    path: &str,
) -> std::result::Result<f64, String> {
    match (actual, expected) {
        (Value::Number(a), Value::Number(e)) => {
            let (a, e) = (a.as_f64().unwrap_or(f64::NAN), e.as_f64().unwrap_or(f64::NAN));
            let diff = (a - e).abs();
            if diff <= tol && a.is_finite() == e.is_finite() {
                Ok(diff)
            } else {
                Err(format!("{path}: {a} vs expected {e} (diff {diff:.3e} > tol {tol:.3e})"))
            }
        }
        (Value::Array(a), Value::Array(e)) => {
            if a.len() != e.len() {
                return Err(format!("{path}: length {} vs expected {}", a.len(), e.len()));
            }
            let mut worst = 0.0f64;
            for (i, (av, ev)) in a.iter().zip(e).enumerate() {
                worst = worst.max(value_diff(av, ev, tol, &format!("{path}[{i}]"))?);
            }
            Ok(worst)
        }
        (Value::Object(a), Value::Object(e)) => {
            let mut worst = 0.0f64;
            for (k, ev) in e {
                let av = a
                    .get(k)
                    .ok_or_else(|| format!("{path}.{k}: missing from the computed output"))?;
                worst = worst.max(value_diff(av, ev, tol, &format!("{path}.{k}"))?);
            }
            Ok(worst)
        }
        (a, e) if a == e => Ok(0.0),
        (a, e) => Err(format!("{path}: {a} vs expected {e}")),
    }
}

// ── Input extraction ────────────────────────────────────────────────────

fn bad(msg: String) -> Error {
    Error::Corpus(msg)
}

fn f64s(v: &Value, key: &str) -> Result<Vec<f64>> {
    v[key]
        .as_array()
        .ok_or_else(|| bad(format!("input lacks array {key}")))?
        .iter()
        .map(|x| x.as_f64().ok_or_else(|| bad(format!("{key} holds a non-number"))))
        .collect()
}

fn usizes(v: &Value, key: &str) -> Result<Vec<usize>> {
    v[key]
        .as_array()
        .ok_or_else(|| bad(format!("input lacks array {key}")))?
        .iter()
        .map(|x| {
            x.as_u64()
                .map(|u| u as usize)
                .ok_or_else(|| bad(format!("{key} holds a non-integer")))
        })
        .collect()
}

fn uint(v: &Value, key: &str) -> Result<usize> {
    v[key]
        .as_u64()
        .map(|u| u as usize)
        .ok_or_else(|| bad(format!("input lacks integer {key}")))
}

fn float(v: &Value, key: &str) -> Result<f64> {
    v[key]
        .as_f64()
        .ok_or_else(|| bad(format!("input lacks number {key}")))
}

fn arr(values: &[f64]) -> Value {
    Value::Array(values.iter().map(|v| json!(v)).collect())
}

fn trial_from(input: &Value, names: Vec<String>) -> Result<TrialRecording<f64>> {
    let samples = f64s(input, "samples")?;
    Ok(TrialRecording {
        samples,
        n_steps: uint(input, "t")?,
        channel_names: names,
        rate_hz: 0.0,
        ratings: Default::default(),
    })
}

// ── Operation dispatch ──────────────────────────────────────────────────

fn eval_op(op: &str, input: &Value) -> Result<Value> {
    match op {
        "matmul" => {
            let mut g = Graph::<f64>::new();
            let a = g.constant(f64s(input, "a")?, &usizes(input, "a_shape")?)?;
            let b = g.constant(f64s(input, "b")?, &usizes(input, "b_shape")?)?;
            let out = g.matmul(a, b)?;
            Ok(json!({ "out": arr(g.data(out)) }))
        }
        "conv2d_same" => {
            let mut g = Graph::<f64>::new();
            let x = g.constant(f64s(input, "x")?, &usizes(input, "x_shape")?)?;
            let k = g.constant(f64s(input, "k")?, &usizes(input, "k_shape")?)?;
            let out = g.conv2d_same(x, k)?;
            Ok(json!({ "out": arr(g.data(out)) }))
        }
        "softmax" => {
            let mut g = Graph::<f64>::new();
            let xs = f64s(input, "x")?;
            let n = xs.len();
            let x = g.constant(xs, &[1, n])?;
            let out = g.softmax_axis(x, 1)?;
            Ok(json!({ "out": arr(g.data(out)) }))
        }
        "silu" => {
            let mut g = Graph::<f64>::new();
            let xs = f64s(input, "x")?;
            let n = xs.len();
            let x = g.constant(xs, &[n])?;
            let out = g.silu(x)?;
            Ok(json!({ "out": arr(g.data(out)) }))
        }
        "mean_pool_axis0" => {
            let mut g = Graph::<f64>::new();
            let x = g.constant(f64s(input, "x")?, &usizes(input, "shape")?)?;
            let out = g.mean_pool(x, 0)?;
            Ok(json!({ "out": arr(g.data(out)) }))
        }
        "backward_sum" | "backward_sum_square" => {
            let mut g = Graph::<f64>::new();
            let w = g.param(f64s(input, "w")?, &usizes(input, "shape")?)?;
            let loss = if op == "backward_sum" {
                g.sum_all(w)?
            } else {
                let sq = g.mul(w, w)?;
                g.sum_all(sq)?
            };
            g.backward(loss)?;
            let grad = g
                .grad(w)
                .ok_or_else(|| bad("gradient missing after backward".into()))?;
            Ok(json!({ "grad": arr(grad) }))
        }
        "window" => {
            let c = uint(input, "c")?;
            let names = (0..c).map(|i| format!("ch{i}")).collect();
            let trial = trial_from(input, names)?;
            let windows = window_segments(&trial, uint(input, "l")?)?;
            Ok(json!({
                "count": windows.len(),
                "windows": windows.iter().map(|w| arr(w)).collect::<Vec<_>>(),
            }))
        }
        "zscore" => {
            let out = zscore_channel(&f64s(input, "x")?, uint(input, "l")?, uint(input, "c")?)?;
            Ok(json!({ "out": arr(&out) }))
        }
        "label_threshold" => {
            let threshold = float(input, "threshold")?;
            let labels: Vec<u32> = f64s(input, "ratings")?
                .iter()
                .map(|r| binarize_label(*r, threshold))
                .collect();
            Ok(json!({ "labels": labels }))
        }
        "select_channels" => {
            let names: Vec<String> = input["names"]
                .as_array()
                .ok_or_else(|| bad("input lacks names".into()))?
                .iter()
                .filter_map(|v| v.as_str().map(String::from))
                .collect();
            let want: Vec<String> = input["want"]
                .as_array()
                .ok_or_else(|| bad("input lacks want".into()))?
                .iter()
                .filter_map(|v| v.as_str().map(String::from))
                .collect();
            let trial = trial_from(input, names)?;
            let want_refs: Vec<&str> = want.iter().map(String::as_str).collect();
            let picked = select_channels(&trial, &want_refs)?;
            Ok(json!({ "samples": arr(&picked.samples), "names": picked.channel_names }))
        }
        "eegs_round_trip" => {
            let segments: Vec<Vec<f64>> = input["segments"]
                .as_array()
                .ok_or_else(|| bad("input lacks segments".into()))?
                .iter()
                .map(|s| {
                    s.as_array()
                        .ok_or_else(|| bad("segment is not an array".into()))
                        .map(|a| a.iter().filter_map(|v| v.as_f64()).collect())
                })
                .collect::<Result<_>>()?;
            let ds = SegmentDataset {
                segments,
                labels: usizes(input, "labels")?.iter().map(|&l| l as u32).collect(),
                n_classes: uint(input, "n_classes")? as u32,
                seg_len: uint(input, "seg_len")?,
                channels: uint(input, "channels")?,
            };
            let bytes = encode_segments(&ds)?;
            let back = decode_segments::<f64>(&bytes)?;
            let identical = back == ds && encode_segments(&back)? == bytes;
            Ok(json!({ "identical": identical as u32 }))
        }
        "eegs_decode" => {
            let bytes: Vec<u8> = usizes(input, "bytes")?.iter().map(|&b| b as u8).collect();
            decode_segments::<f64>(&bytes)?;
            Ok(json!({ "decoded": true }))
        }
        "csv_parse" => {
            let text = input["csv"]
                .as_str()
                .ok_or_else(|| bad("input lacks csv text".into()))?;
            static COUNTER: AtomicUsize = AtomicUsize::new(0);
            let path = std::env::temp_dir().join(format!(
                "msim-corpus-{}-{}.csv",
                std::process::id(),
                COUNTER.fetch_add(1, Ordering::Relaxed)
            ));
            std::fs::write(&path, text)?;
            let trial = read_csv_trial::<f64>(&path);
            let _ = std::fs::remove_file(&path);
            let trial = trial?;
            let c = trial.channels();
            Ok(json!({
                "t": trial.n_steps,
                "c": c,
                "names": trial.channel_names,
                "row0": arr(&trial.samples[..c]),
            }))
        }
        "amplitude_spectrum" => {
            let spectrum =
                amplitude_spectrum(&f64s(input, "x")?, uint(input, "l")?, uint(input, "c")?)?;
            let argmax = spectrum
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .map(|(i, _)| i + 1)
                .unwrap_or(0);
            Ok(json!({ "spectrum": arr(&spectrum), "argmax_bin": argmax }))
        }
        "top_k_bins" => {
            let picks = select_topk(&f64s(input, "amps")?, uint(input, "k")?, uint(input, "seg_len")?)?;
            Ok(json!({
                "freqs": picks.iter().map(|&(f, _)| f).collect::<Vec<_>>(),
                "periods": picks.iter().map(|&(_, p)| p).collect::<Vec<_>>(),
            }))
        }
        "frequency_weights" => {
            let weights = frequency_weights(&f64s(input, "amps")?)?;
            Ok(json!({ "weights": arr(&weights) }))
        }
        "fold" => {
            let grid = PatchGrid::from_segment(
                &f64s(input, "x")?,
                uint(input, "l")?,
                uint(input, "c")?,
                uint(input, "p")?,
            )?;
            Ok(json!({ "grid": arr(&grid.data), "cols": grid.cols, "pad_len": grid.pad_len }))
        }
        "fold_round_trip" => {
            let x = f64s(input, "x")?;
            let (l, c) = (uint(input, "l")?, uint(input, "c")?);
            let mut outs = Vec::new();
            for p in usizes(input, "periods")? {
                let grid = PatchGrid::from_segment(&x, l, c, p)?;
                outs.push(arr(&grid.to_segment(l)?));
            }
            Ok(json!({ "outs": outs }))
        }
        "msp" => {
            let shape = usizes(input, "shape")?;
            let c = *shape
                .last()
                .ok_or_else(|| bad("msp shape is empty".into()))?;
            let mut g = Graph::<f64>::new();
            let grid = g.constant(f64s(input, "grid")?, &shape)?;
            let mut kernels = [grid; 3];
            for (slot, e) in kernels.iter_mut().zip([1usize, 3, 5]) {
                *slot = g.constant(f64s(input, &format!("k{e}"))?, &[e, e, c, c])?;
            }
            let out = msp_forward(&mut g, grid, &kernels)?;
            Ok(json!({ "out": arr(g.data(out)) }))
        }
        "blend" => {
            let mut g = Graph::<f64>::new();
            let mut nodes = Vec::new();
            for b in input["branches"]
                .as_array()
                .ok_or_else(|| bad("input lacks branches".into()))?
            {
                let vals: Vec<f64> = b
                    .as_array()
                    .ok_or_else(|| bad("branch is not an array".into()))?
                    .iter()
                    .filter_map(|v| v.as_f64())
                    .collect();
                let n = vals.len();
                nodes.push(g.constant(vals, &[n])?);
            }
            let out = aggregate_scales(&mut g, &nodes, &f64s(input, "weights")?)?;
            Ok(json!({ "out": arr(g.data(out)) }))
        }
        "mstb_identity" => {
            let x = f64s(input, "x")?;
            let (l, c, k) = (uint(input, "l")?, uint(input, "c")?, uint(input, "k")?);
            let plan = plan_segment(&x, l, c, k)?;
            let params = MstbParams::<f64>::identity(c, k);
            let mut g = Graph::<f64>::new();
            let kernels = insert_mstb_params(&mut g, &params)?;
            let xn = g.constant(x, &[l, c])?;
            let out = mstb_forward(&mut g, xn, &plan, &kernels)?;
            Ok(json!({ "out": arr(g.data(out)) }))
        }
        "zoh" => {
            let (a_bar, b_bar) =
                zoh_discretize(&f64s(input, "a")?, &f64s(input, "b")?, &f64s(input, "delta")?)?;
            Ok(json!({ "a_bar": arr(&a_bar), "b_bar": arr(&b_bar) }))
        }
        "ssm_scan" => {
            let y = ssm_scan(
                &f64s(input, "a_bar")?,
                &f64s(input, "b_bar")?,
                &f64s(input, "c")?,
                &f64s(input, "x")?,
            )?;
            Ok(json!({ "y": arr(&y) }))
        }
        "ssm_kernel" => {
            let k = ssm_kernel(
                &f64s(input, "a_bar")?,
                &f64s(input, "b_bar")?,
                &f64s(input, "c")?,
                uint(input, "s")?,
            )?;
            Ok(json!({ "kernel": arr(&k) }))
        }
        "ssm_agreement" => {
            let (a_bar, b_bar, c) = (
                f64s(input, "a_bar")?,
                f64s(input, "b_bar")?,
                f64s(input, "c")?,
            );
            let x = f64s(input, "x")?;
            let y_scan = ssm_scan(&a_bar, &b_bar, &c, &x)?;
            let kernel = ssm_kernel(&a_bar, &b_bar, &c, x.len())?;
            let y_kernel = apply_kernel(&x, &kernel)?;
            let diff = y_scan
                .iter()
                .zip(&y_kernel)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max);
            Ok(json!({ "max_abs_diff": diff }))
        }
        "kernel_impulse" => {
            let s = uint(input, "s")?;
            let kernel = ssm_kernel(
                &f64s(input, "a_bar")?,
                &f64s(input, "b_bar")?,
                &f64s(input, "c")?,
                s,
            )?;
            let mut impulse = vec![0.0f64; s];
            impulse[0] = 1.0;
            let y = apply_kernel(&impulse, &kernel)?;
            let diff = y
                .iter()
                .zip(&kernel)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max);
            Ok(json!({ "max_abs_diff": diff }))
        }
        "invert_embed" => {
            let (l, c, d) = (uint(input, "l")?, uint(input, "c")?, uint(input, "d")?);
            let mut g = Graph::<f64>::new();
            let x = g.constant(f64s(input, "x")?, &[l, c])?;
            let w = g.constant(f64s(input, "w")?, &[l, d])?;
            let b = g.constant(f64s(input, "b")?, &[d])?;
            let tokens = crate::model::invert_embed(&mut g, x, w, b)?;
            Ok(json!({ "tokens": arr(g.data(tokens)) }))
        }
        "model_forward" => {
            let cfg: ModelConfig = serde_json::from_value(input["config"].clone())
                .map_err(|e| bad(format!("bad model config: {e}")))?;
            let mut params = ModelParams::<f64>::zeros(&cfg)?;
            let tensors = input["tensors"]
                .as_object()
                .ok_or_else(|| bad("input lacks tensors".into()))?;
            fill_params(&mut params, tensors)?;
            let x = f64s(input, "x")?;
            let mut g = Graph::<f64>::new();
            let nodes = insert_params(&mut g, &params)?;
            let logits = forward(&mut g, &cfg, &nodes, &x)?;
            let probs = g.softmax_axis(logits, 1)?;
            Ok(json!({ "logits": arr(g.data(logits)), "probs": arr(g.data(probs)) }))
        }
        "nll_from_logits" => {
            let mut g = Graph::<f64>::new();
            let ls = f64s(input, "logits")?;
            let n = ls.len();
            let logits = g.constant(ls, &[1, n])?;
            let loss = g.nll_from_logits(logits, uint(input, "target")?)?;
            Ok(json!({ "loss": g.data(loss)[0] }))
        }
        "adam_steps" => {
            let mut param = f64s(input, "param")?;
            let grad = f64s(input, "grad")?;
            let lr = float(input, "lr")?;
            let mut adam = Adam::<f64>::new(&[param.len()]);
            for _ in 0..uint(input, "steps")? {
                adam.step(std::iter::once(&mut param), std::slice::from_ref(&grad), lr)?;
            }
            Ok(json!({ "param": arr(&param) }))
        }
        "plateau" => {
            let mut schedule = PlateauSchedule::new(
                float(input, "lr0")?,
                float(input, "factor")?,
                float(input, "min_delta")?,
                float(input, "floor")?,
            );
            let lrs: Vec<f64> = f64s(input, "losses")?
                .iter()
                .map(|&l| schedule.observe(l))
                .collect();
            Ok(json!({ "lrs": arr(&lrs) }))
        }
        "split_sizes" => {
            let n = uint(input, "n")?;
            let (seg_len, channels) = (uint(input, "seg_len")?, uint(input, "channels")?);
            let n_classes = uint(input, "n_classes")? as u32;
            let ds = SegmentDataset {
                segments: (0..n)
                    .map(|i| vec![i as f64; seg_len * channels])
                    .collect(),
                labels: (0..n).map(|i| i as u32 % n_classes).collect(),
                n_classes,
                seg_len,
                channels,
            };
            let (train, test) = split_intra(&ds, uint(input, "seed")? as u64, false)?;
            let mut seen: Vec<f64> = train
                .segments
                .iter()
                .chain(&test.segments)
                .map(|s| s[0])
                .collect();
            seen.sort_by(f64::total_cmp);
            seen.dedup();
            let disjoint_and_complete = seen.len() == n;
            Ok(json!({
                "n_train": train.len(),
                "n_test": test.len(),
                "disjoint": disjoint_and_complete as u32,
                "union_complete": disjoint_and_complete as u32,
            }))
        }
        "checkpoint_round_trip" => {
            let cfg: ModelConfig = serde_json::from_value(input["config"].clone())
                .map_err(|e| bad(format!("bad model config: {e}")))?;
            let params = ModelParams::<f64>::init(&cfg, uint(input, "seed")? as u64)?;
            let bytes = encode_params(&params)?;
            let back = decode_params::<f64>(&bytes)?;
            let identical = back == params && encode_params(&back)? == bytes;
            Ok(json!({ "identical": identical as u32 }))
        }
        other => Err(bad(format!("unknown corpus op {other}"))),
    }
}

fn fill_params(params: &mut ModelParams<f64>, tensors: &Map<String, Value>) -> Result<()> {
    for (name, slot) in params.named_tensors_mut() {
        let vals = tensors
            .get(&name)
            .ok_or_else(|| bad(format!("tensors lacks {name}")))?
            .as_array()
            .ok_or_else(|| bad(format!("tensor {name} is not an array")))?;
        if vals.len() != slot.len() {
            return Err(bad(format!(
                "tensor {name}: {} values, expected {}",
                vals.len(),
                slot.len()
            )));
        }
        for (dst, v) in slot.iter_mut().zip(vals) {
            *dst = v
                .as_f64()
                .ok_or_else(|| bad(format!("tensor {name} holds a non-number")))?;
        }
    }
    Ok(())
}
