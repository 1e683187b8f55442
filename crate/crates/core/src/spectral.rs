//! Spectral planning: which periodicities should the patching front end use
//! for a given segment, and how much should each contribute?
//!
//! The plan is recomputed per segment from the data alone (no trainable
//! state), so everything here runs at 64-bit regardless of the model
//! precision and is treated as a constant by the autodiff graph.
//!
//! The spectrum is a direct O(L^2) real DFT of the channel-mean signal: at
//! desk scale (L <= 256) that costs microseconds and keeps the code
//! oracle-simple. Bin 0 (DC) and bins above L/2 are excluded.

use crate::error::{Error, Result};
use crate::real::Real;

/// Per-segment patching plan: `k` frequencies with their fold periods and
/// softmax blend weights, sorted by descending spectral amplitude.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralPlan {
    /// Selected frequency bins (cycles per window), each in `1..=L/2`.
    pub freqs: Vec<usize>,
    /// Fold period for each frequency: `ceil(L / freq)`.
    pub periods: Vec<usize>,
    /// Spectral amplitude of each selected bin.
    pub amplitudes: Vec<f64>,
    /// Softmax of the selected amplitudes; sums to 1 within 1e-12.
    pub weights: Vec<f64>,
}

impl SpectralPlan {
    pub fn k(&self) -> usize {
        self.freqs.len()
    }
}

/// Amplitude spectrum of the channel-mean signal of one `seg_len x channels`
/// segment. Entry `i` is the magnitude at frequency bin `i + 1`; the vector
/// covers bins `1..=seg_len/2`.
pub fn amplitude_spectrum<T: Real>(
    segment: &[T],
    seg_len: usize,
    channels: usize,
) -> Result<Vec<f64>> {
    if segment.len() != seg_len * channels {
        return Err(Error::Dimension(format!(
            "amplitude_spectrum: {} samples, expected {} x {}",
            segment.len(),
            seg_len,
            channels
        )));
    }
    if channels == 0 || seg_len < 2 {
        return Err(Error::Contract(
            "amplitude_spectrum: need at least one channel and two steps".into(),
        ));
    }
    let mut mean = vec![0.0f64; seg_len];
    for t in 0..seg_len {
        let mut s = 0.0;
        for ch in 0..channels {
            s += segment[t * channels + ch].to_f64();
        }
        mean[t] = s / channels as f64;
    }
    let n_bins = seg_len / 2;
    let mut amps = Vec::with_capacity(n_bins);
    let w = 2.0 * std::f64::consts::PI / seg_len as f64;
    for f in 1..=n_bins {
        let mut re = 0.0;
        let mut im = 0.0;
        for (t, &m) in mean.iter().enumerate() {
            let phase = w * (f * t) as f64;
            re += m * phase.cos();
            im -= m * phase.sin();
        }
        amps.push((re * re + im * im).sqrt());
    }
    Ok(amps)
}

/// Pick the `k` largest-amplitude bins. Ties go to the lower bin; the
/// result is sorted by descending amplitude. Returns `(freq, period)`
/// pairs with `period = ceil(seg_len / freq)`.
pub fn select_topk(amps: &[f64], k: usize, seg_len: usize) -> Result<Vec<(usize, usize)>> {
    if k == 0 || k > amps.len() {
        return Err(Error::Contract(format!(
            "select_topk: k = {k} with {} candidate bins",
            amps.len()
        )));
    }
    let mut order: Vec<usize> = (0..amps.len()).collect();
    // Descending amplitude, ascending bin on exact ties.
    order.sort_by(|&a, &b| {
        amps[b]
            .total_cmp(&amps[a])
            .then_with(|| a.cmp(&b))
    });
    Ok(order[..k]
        .iter()
        .map(|&i| {
            let freq = i + 1;
            (freq, seg_len.div_ceil(freq))
        })
        .collect())
}

/// Softmax blend weights over the selected amplitudes (max-shifted for
/// stability). Monotone: larger amplitude never gets a smaller weight.
pub fn frequency_weights(amps: &[f64]) -> Result<Vec<f64>> {
    if amps.is_empty() {
        return Err(Error::Contract("frequency_weights: no amplitudes".into()));
    }
    let m = amps.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = amps.iter().map(|a| (a - m).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Ok(exps.iter().map(|e| e / sum).collect())
}

/// Full plan for one segment: spectrum, top-k selection, weights.
pub fn plan_segment<T: Real>(
    segment: &[T],
    seg_len: usize,
    channels: usize,
    k: usize,
) -> Result<SpectralPlan> {
    let amps = amplitude_spectrum(segment, seg_len, channels)?;
    let picks = select_topk(&amps, k, seg_len)?;
    let selected: Vec<f64> = picks.iter().map(|&(f, _)| amps[f - 1]).collect();
    let weights = frequency_weights(&selected)?;
    Ok(SpectralPlan {
        freqs: picks.iter().map(|&(f, _)| f).collect(),
        periods: picks.iter().map(|&(_, p)| p).collect(),
        amplitudes: selected,
        weights,
    })
}
