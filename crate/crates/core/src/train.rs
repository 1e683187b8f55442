//! End-to-end training: dataset splits, per-segment z-scoring, batched
//! gradient accumulation, Adam with a plateau schedule, and metrics.
//!
//! Every sample in a batch builds its own private tape, so samples are
//! independent and (with the `parallel` feature) evaluated by rayon.
//! Per-sample gradients are always reduced in sample order afterwards,
//! which makes the accumulated batch gradient — and therefore the whole
//! metric stream — bit-identical between the parallel and sequential
//! builds and across thread counts.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
#[cfg(feature = "parallel")]
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::model::{insert_params, sample_loss, ModelConfig, ModelParams};
use crate::optim::{Adam, PlateauSchedule};
use crate::real::Real;
use crate::signal::{zscore_channel, SegmentDataset};

// ── Configuration ───────────────────────────────────────────────────────

/// Training protocol knobs with the standard defaults: batch 32, Adam at
/// 1e-3, 10 epochs, one state-space layer of width 64, top-2 periods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub lr: f64,
    pub epochs: usize,
    pub top_k: usize,
    pub num_layers: usize,
    pub d_model: usize,
    pub seed: u64,
    /// Working precision in bits: 32 for training, 64 for verification.
    pub precision: u8,
    pub use_mstb: bool,
    pub use_inverted: bool,
    pub use_mamba: bool,
    pub selective: bool,
    pub lr_factor: f64,
    pub lr_min_delta: f64,
    pub lr_floor: f64,
    pub stratified: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 32,
            lr: 1e-3,
            epochs: 10,
            top_k: 2,
            num_layers: 1,
            d_model: 64,
            seed: 0,
            precision: 32,
            use_mstb: true,
            use_inverted: true,
            use_mamba: true,
            selective: false,
            lr_factor: 0.5,
            lr_min_delta: 1e-4,
            lr_floor: 1e-5,
            stratified: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.lr <= 0.0 || self.top_k == 0 || self.d_model == 0 {
            return Err(Error::Config(format!(
                "non-positive training knob: batch {}, lr {}, top_k {}, d_model {}",
                self.batch_size, self.lr, self.top_k, self.d_model
            )));
        }
        if self.use_mamba && self.num_layers == 0 {
            return Err(Error::Config("num_layers must be positive".into()));
        }
        if self.precision != 32 && self.precision != 64 {
            return Err(Error::Config(format!(
                "precision must be 32 or 64, got {}",
                self.precision
            )));
        }
        if self.lr_factor <= 0.0 || self.lr_factor >= 1.0 || self.lr_floor <= 0.0 {
            return Err(Error::Config(format!(
                "lr schedule: factor {} (want (0,1)), floor {}",
                self.lr_factor, self.lr_floor
            )));
        }
        Ok(())
    }

    /// Architecture config for a dataset of the given extents.
    pub fn model_config(&self, seg_len: usize, channels: usize, n_classes: usize) -> ModelConfig {
        ModelConfig {
            seg_len,
            channels,
            n_classes,
            d_model: self.d_model,
            num_layers: self.num_layers,
            top_k: self.top_k,
            use_mstb: self.use_mstb,
            use_inverted: self.use_inverted,
            use_mamba: self.use_mamba,
            selective: self.selective,
        }
    }
}

// ── Metrics ─────────────────────────────────────────────────────────────

/// One epoch's record, emitted as one JSON line by the CLI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub test_acc: f64,
    pub lr: f64,
}

/// Whole-run record: per-epoch rows plus the final confusion matrix
/// (`confusion[truth][prediction]` counts on the test split).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub epochs: Vec<EpochMetrics>,
    pub confusion: Vec<Vec<u64>>,
    pub final_test_acc: f64,
}

/// `trace / total` of a confusion matrix; 0 when empty.
pub fn accuracy_of(confusion: &[Vec<u64>]) -> f64 {
    let total: u64 = confusion.iter().flatten().sum();
    if total == 0 {
        return 0.0;
    }
    let trace: u64 = confusion.iter().enumerate().map(|(i, row)| row[i]).sum();
    trace as f64 / total as f64
}

// ── Splits ──────────────────────────────────────────────────────────────

fn subset<T: Real>(ds: &SegmentDataset<T>, idx: &[usize]) -> SegmentDataset<T> {
    SegmentDataset {
        segments: idx.iter().map(|i| ds.segments[*i].clone()).collect(),
        labels: idx.iter().map(|i| ds.labels[*i]).collect(),
        n_classes: ds.n_classes,
        seg_len: ds.seg_len,
        channels: ds.channels,
    }
}

/// Seeded 80/20 split of one recording session's segments. With
/// `stratified`, the 80/20 cut is applied per class, keeping class
/// proportions within one sample of the unsplit ratio.
pub fn split_intra<T: Real>(
    ds: &SegmentDataset<T>,
    seed: u64,
    stratified: bool,
) -> Result<(SegmentDataset<T>, SegmentDataset<T>)> {
    ds.validate()?;
    if ds.len() < 5 {
        return Err(Error::Split(format!(
            "cannot 80/20-split {} segments (need at least 5)",
            ds.len()
        )));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut train_idx = Vec::new();
    let mut test_idx = Vec::new();
    if stratified {
        for class in 0..ds.n_classes {
            let mut idx: Vec<usize> = (0..ds.len())
                .filter(|i| ds.labels[*i] == class)
                .collect();
            idx.shuffle(&mut rng);
            let n_train = idx.len() * 4 / 5;
            train_idx.extend_from_slice(&idx[..n_train]);
            test_idx.extend_from_slice(&idx[n_train..]);
        }
        train_idx.sort_unstable();
        test_idx.sort_unstable();
    } else {
        let mut idx: Vec<usize> = (0..ds.len()).collect();
        idx.shuffle(&mut rng);
        let n_train = idx.len() * 4 / 5;
        train_idx = idx[..n_train].to_vec();
        test_idx = idx[n_train..].to_vec();
    }
    Ok((subset(ds, &train_idx), subset(ds, &test_idx)))
}

/// Seeded 4:1 split across subjects: all subjects' segments are pooled
/// and shuffled together first, so train and test mix subjects freely.
pub fn split_inter<T: Real>(
    subjects: &[SegmentDataset<T>],
    seed: u64,
) -> Result<(SegmentDataset<T>, SegmentDataset<T>)> {
    if subjects.is_empty() {
        return Err(Error::Split("no subjects to split".into()));
    }
    let first = &subjects[0];
    let mut pooled = SegmentDataset {
        segments: Vec::new(),
        labels: Vec::new(),
        n_classes: first.n_classes,
        seg_len: first.seg_len,
        channels: first.channels,
    };
    for (si, s) in subjects.iter().enumerate() {
        s.validate()?;
        if s.seg_len != first.seg_len
            || s.channels != first.channels
            || s.n_classes != first.n_classes
        {
            return Err(Error::Dimension(format!(
                "subject {si}: {}x{} segments with {} classes vs {}x{}/{}",
                s.seg_len, s.channels, s.n_classes, first.seg_len, first.channels, first.n_classes
            )));
        }
        pooled.segments.extend(s.segments.iter().cloned());
        pooled.labels.extend_from_slice(&s.labels);
    }
    split_intra(&pooled, seed, false)
}

// ── Gradient batching ───────────────────────────────────────────────────

type SampleResult<T> = Result<(Vec<Vec<T>>, f64)>;

fn one_sample_grads<T: Real>(
    params: &ModelParams<T>,
    x: &[T],
    y: u32,
) -> SampleResult<T> {
    let mut g = Graph::new();
    let nodes = insert_params(&mut g, params)?;
    let (loss, _) = sample_loss(&mut g, &params.config, &nodes, x, y)?;
    let loss_val = g.data(loss)[0].to_f64();
    g.backward(loss)?;
    let grads = nodes
        .in_order()
        .iter()
        .map(|id| {
            g.grad(*id)
                .map(|s| s.to_vec())
                .ok_or_else(|| Error::Contract("parameter leaf missing gradient".into()))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((grads, loss_val))
}

/// Mean gradient and mean loss over a batch. Each sample runs on its own
/// tape (in parallel under the `parallel` feature); the reduction is in
/// sample order either way, so results are bit-identical across builds.
pub fn batch_grads<T: Real>(
    params: &ModelParams<T>,
    batch: &[(&[T], u32)],
) -> Result<(Vec<Vec<T>>, f64)> {
    if batch.is_empty() {
        return Err(Error::Contract("batch_grads: empty batch".into()));
    }
    #[cfg(feature = "parallel")]
    let per_sample: Vec<SampleResult<T>> = batch
        .par_iter()
        .map(|(x, y)| one_sample_grads(params, x, *y))
        .collect();
    #[cfg(not(feature = "parallel"))]
    let per_sample: Vec<SampleResult<T>> = batch
        .iter()
        .map(|(x, y)| one_sample_grads(params, x, *y))
        .collect();

    let inv = T::from_f64(1.0 / batch.len() as f64);
    let mut acc: Option<Vec<Vec<T>>> = None;
    let mut loss_sum = 0.0;
    for res in per_sample {
        let (grads, loss) = res?;
        loss_sum += loss;
        match &mut acc {
            None => acc = Some(grads),
            Some(acc) => {
                for (a, g) in acc.iter_mut().zip(&grads) {
                    for (av, gv) in a.iter_mut().zip(g) {
                        *av = *av + *gv;
                    }
                }
            }
        }
    }
    let mut grads = acc.expect("batch checked non-empty");
    for g in &mut grads {
        for v in g.iter_mut() {
            *v = *v * inv;
        }
    }
    Ok((grads, loss_sum / batch.len() as f64))
}

// ── Evaluation ──────────────────────────────────────────────────────────

/// Accuracy and confusion matrix (`[truth][prediction]`) on a z-scored
/// dataset. Parameters are read-only, so samples fan out in parallel.
pub fn evaluate<T: Real>(
    params: &ModelParams<T>,
    ds: &SegmentDataset<T>,
) -> Result<(f64, Vec<Vec<u64>>)> {
    ds.validate()?;
    if ds.is_empty() {
        return Err(Error::Contract("evaluate: empty dataset".into()));
    }
    check_extents(&params.config, ds)?;
    let items: Vec<(usize, u32)> = ds.labels.iter().copied().enumerate().collect();
    #[cfg(feature = "parallel")]
    let preds: Vec<Result<u32>> = items
        .par_iter()
        .map(|(i, _)| crate::model::predict_class(params, &ds.segments[*i]))
        .collect();
    #[cfg(not(feature = "parallel"))]
    let preds: Vec<Result<u32>> = items
        .iter()
        .map(|(i, _)| crate::model::predict_class(params, &ds.segments[*i]))
        .collect();

    let n = ds.n_classes as usize;
    let mut confusion = vec![vec![0u64; n]; n];
    for ((_, truth), pred) in items.iter().zip(preds) {
        confusion[*truth as usize][pred? as usize] += 1;
    }
    Ok((accuracy_of(&confusion), confusion))
}

fn check_extents<T: Real>(cfg: &ModelConfig, ds: &SegmentDataset<T>) -> Result<()> {
    if cfg.seg_len != ds.seg_len {
        return Err(Error::Dimension(format!(
            "segment length mismatch: model {} vs data {}",
            cfg.seg_len, ds.seg_len
        )));
    }
    if cfg.channels != ds.channels {
        return Err(Error::Dimension(format!(
            "channel count mismatch: model {} vs data {}",
            cfg.channels, ds.channels
        )));
    }
    if cfg.n_classes != ds.n_classes as usize {
        return Err(Error::Dimension(format!(
            "class count mismatch: model {} vs data {}",
            cfg.n_classes, ds.n_classes
        )));
    }
    Ok(())
}

/// Per-segment, per-channel z-scoring of a whole dataset (the standard
/// preprocessing before the model sees anything).
pub fn zscore_dataset<T: Real>(ds: &SegmentDataset<T>) -> Result<SegmentDataset<T>> {
    let mut out = ds.clone();
    for seg in &mut out.segments {
        *seg = zscore_channel(seg, ds.seg_len, ds.channels)?;
    }
    Ok(out)
}

// ── Training loop ───────────────────────────────────────────────────────

/// Train on `train`, reporting test accuracy each epoch; returns the final
/// parameters and the metric stream. Fully deterministic for a fixed
/// seed/config: data order, initialization, and gradient reduction are all
/// seeded or order-fixed. Inputs are z-scored here, once.
pub fn train_loop<T: Real>(
    train: &SegmentDataset<T>,
    test: &SegmentDataset<T>,
    cfg: &TrainConfig,
) -> Result<(ModelParams<T>, Metrics)> {
    cfg.validate()?;
    train.validate()?;
    test.validate()?;
    if train.seg_len != test.seg_len
        || train.channels != test.channels
        || train.n_classes != test.n_classes
    {
        return Err(Error::Dimension(format!(
            "train {}x{}/{} vs test {}x{}/{}",
            train.seg_len, train.channels, train.n_classes, test.seg_len, test.channels,
            test.n_classes
        )));
    }
    if cfg.batch_size > train.len() {
        return Err(Error::Config(format!(
            "batch size {} exceeds the {}-segment training set",
            cfg.batch_size,
            train.len()
        )));
    }

    let model_cfg = cfg.model_config(train.seg_len, train.channels, train.n_classes as usize);
    let mut params = ModelParams::<T>::init(&model_cfg, cfg.seed)?;

    if cfg.epochs == 0 {
        let n = train.n_classes as usize;
        return Ok((
            params,
            Metrics {
                epochs: Vec::new(),
                confusion: vec![vec![0; n]; n],
                final_test_acc: 0.0,
            },
        ));
    }

    let train = zscore_dataset(train)?;
    let test = zscore_dataset(test)?;

    let group_sizes: Vec<usize> = params.named_tensors().iter().map(|(_, v, _)| v.len()).collect();
    let mut adam = Adam::<T>::new(&group_sizes);
    let mut schedule = PlateauSchedule::new(cfg.lr, cfg.lr_factor, cfg.lr_min_delta, cfg.lr_floor);
    let mut shuffle_rng = ChaCha20Rng::seed_from_u64(cfg.seed ^ 0x5555_5555_5555_5555);

    let mut epochs = Vec::with_capacity(cfg.epochs);
    let mut confusion = Vec::new();
    let mut final_acc = 0.0;
    for epoch in 0..cfg.epochs {
        let lr = schedule.lr;
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut shuffle_rng);

        let mut loss_sum = 0.0;
        let mut n_seen = 0usize;
        for (bi, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<(&[T], u32)> = chunk
                .iter()
                .map(|i| (train.segments[*i].as_slice(), train.labels[*i]))
                .collect();
            let (grads, loss) = batch_grads(&params, &batch)?;
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch, batch: bi });
            }
            loss_sum += loss * chunk.len() as f64;
            n_seen += chunk.len();
            adam.step(
                params.named_tensors_mut().into_iter().map(|(_, v)| v),
                &grads,
                lr,
            )?;
        }
        let train_loss = loss_sum / n_seen as f64;
        let (acc, conf) = evaluate(&params, &test)?;
        epochs.push(EpochMetrics {
            epoch,
            train_loss,
            test_acc: acc,
            lr,
        });
        confusion = conf;
        final_acc = acc;
        schedule.observe(train_loss);
    }

    Ok((
        params,
        Metrics {
            epochs,
            confusion,
            final_test_acc: final_acc,
        },
    ))
}
