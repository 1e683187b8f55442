//! Self-contained gradient verification: central finite differences
//! against the analytic backward pass, over every parameter tensor of a
//! tiny full-pipeline model.
//!
//! The probe model enables every feature at once (multi-scale block,
//! channel-token embedding, selective state-space layer), so a defect in
//! any backward rule surfaces here. Everything runs in 64-bit; the
//! comparison loss sums two samples with different labels so both logit
//! columns carry gradient.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::model::{insert_params, sample_loss, ModelConfig, ModelParams};

/// Largest relative error the analytic gradient may show against central
/// differences before the check fails.
pub const GRAD_TOL: f64 = 1e-4;

const FD_STEP: f64 = 1e-5;

/// The tiny model the verification pass differentiates. Every pipeline
/// stage is enabled.
pub fn probe_config() -> ModelConfig {
    ModelConfig {
        seg_len: 16,
        channels: 4,
        n_classes: 2,
        d_model: 8,
        num_layers: 1,
        top_k: 2,
        use_mstb: true,
        use_inverted: true,
        use_mamba: true,
        selective: true,
    }
}

/// Worst finite-difference disagreement within one parameter tensor.
#[derive(Debug, Clone, Serialize)]
pub struct GroupReport {
    pub name: String,
    pub entries: usize,
    pub worst_rel: f64,
    pub worst_index: usize,
    /// Analytic gradient at the worst entry.
    pub analytic: f64,
    /// Central-difference gradient at the worst entry.
    pub numeric: f64,
}

/// Outcome of one verification pass: every parameter tensor exactly once.
#[derive(Debug, Clone, Serialize)]
pub struct GradReport {
    pub tolerance: f64,
    pub groups: Vec<GroupReport>,
}

impl GradReport {
    pub fn passed(&self) -> bool {
        self.groups.iter().all(|g| g.worst_rel <= self.tolerance)
    }

    /// The group with the largest relative error.
    pub fn worst(&self) -> &GroupReport {
        self.groups
            .iter()
            .max_by(|a, b| a.worst_rel.total_cmp(&b.worst_rel))
            .expect("report is never empty")
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Run the verification pass.
///
/// `corrupt`, when set, deliberately damages the analytic gradient of the
/// named parameter tensor before comparing — a negative control proving
/// the check can actually catch a broken backward rule. Unknown names are
/// rejected.
pub fn check_model_gradients(seed: u64, corrupt: Option<&str>) -> Result<GradReport> {
    let cfg = probe_config();
    let params = ModelParams::<f64>::init(&cfg, seed)?;

    let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0x00C0_FFEE);
    let n = cfg.seg_len * cfg.channels;
    let samples: Vec<(Vec<f64>, u32)> = (0..2)
        .map(|i| {
            let x = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            (x, i as u32 % cfg.n_classes as u32)
        })
        .collect();

    // Total loss over both samples, on one graph, as a single scalar.
    let total_loss = |p: &ModelParams<f64>| -> Result<f64> {
        let mut g = Graph::new();
        let nodes = insert_params(&mut g, p)?;
        let mut acc = None;
        for (x, target) in &samples {
            let (loss, _) = sample_loss(&mut g, &cfg, &nodes, x, *target)?;
            acc = Some(match acc {
                None => loss,
                Some(prev) => g.add(prev, loss)?,
            });
        }
        Ok(g.data(acc.expect("two samples"))[0])
    };

    // Analytic gradients of the same scalar.
    let mut g = Graph::new();
    let nodes = insert_params(&mut g, &params)?;
    let mut acc = None;
    for (x, target) in &samples {
        let (loss, _) = sample_loss(&mut g, &cfg, &nodes, x, *target)?;
        acc = Some(match acc {
            None => loss,
            Some(prev) => g.add(prev, loss)?,
        });
    }
    g.backward(acc.expect("two samples"))?;
    let names: Vec<String> = params
        .named_tensors()
        .into_iter()
        .map(|(n, _, _)| n)
        .collect();
    let mut analytic: Vec<Vec<f64>> = nodes
        .in_order()
        .iter()
        .map(|id| {
            g.grad(*id)
                .map(|s| s.to_vec())
                .ok_or_else(|| Error::Contract("parameter leaf missing gradient".into()))
        })
        .collect::<Result<_>>()?;

    if let Some(target) = corrupt {
        let gi = names
            .iter()
            .position(|n| n == target)
            .ok_or_else(|| Error::Contract(format!("no parameter tensor named {target}")))?;
        analytic[gi][0] += analytic[gi][0].abs() + 1.0;
    }

    let mut probe = params.clone();
    let mut groups = Vec::with_capacity(names.len());
    for (gi, name) in names.iter().enumerate() {
        let mut worst = GroupReport {
            name: name.clone(),
            entries: analytic[gi].len(),
            worst_rel: 0.0,
            worst_index: 0,
            analytic: analytic[gi].first().copied().unwrap_or(0.0),
            numeric: analytic[gi].first().copied().unwrap_or(0.0),
        };
        for (i, ana) in analytic[gi].iter().enumerate() {
            let orig = probe.named_tensors_mut()[gi].1[i];
            probe.named_tensors_mut()[gi].1[i] = orig + FD_STEP;
            let fp = total_loss(&probe)?;
            probe.named_tensors_mut()[gi].1[i] = orig - FD_STEP;
            let fm = total_loss(&probe)?;
            probe.named_tensors_mut()[gi].1[i] = orig;
            let num = (fp - fm) / (2.0 * FD_STEP);
            let rel = rel_err(*ana, num);
            if rel > worst.worst_rel {
                worst.worst_rel = rel;
                worst.worst_index = i;
                worst.analytic = *ana;
                worst.numeric = num;
            }
        }
        groups.push(worst);
    }

    Ok(GradReport {
        tolerance: GRAD_TOL,
        groups,
    })
}
