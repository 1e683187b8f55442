//! Seeded synthetic datasets: classes are separated by the dominant
//! frequency bin of their segments, which is exactly the structure the
//! spectral front end keys on.
//!
//! Each segment of class `j` carries a unit-amplitude tone at that class's
//! bin (4, 12, or 20 cycles per segment), a weaker tone at its second
//! harmonic, and Gaussian noise of σ = 0.3, per channel. The class tone's
//! phase is drawn once per segment and jittered slightly per channel so
//! the channel-mean spectrum stays dominated by the class bin; the
//! harmonic's phase is fully random per channel. Labels are assigned
//! round-robin, so counts are balanced within one.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::real::Real;
use crate::signal::SegmentDataset;

/// Dominant bin (cycles per segment) for each class.
pub const CLASS_BINS: [usize; 3] = [4, 12, 20];
/// Amplitude of the second-harmonic tone.
const HARMONIC_AMP: f64 = 0.4;
/// Standard deviation of the additive Gaussian noise.
const NOISE_SIGMA: f64 = 0.3;
/// Half-width of the per-channel phase jitter on the class tone.
const PHASE_JITTER: f64 = 0.5;

/// Generate `segments` labeled segments of `seg_len x channels` samples.
/// `classes` must be 2 or 3, and the segment must be long enough to hold
/// the highest class harmonic below the Nyquist bin.
pub fn gen_synthetic<T: Real>(
    classes: u32,
    segments: usize,
    channels: usize,
    seg_len: usize,
    seed: u64,
) -> Result<SegmentDataset<T>> {
    if !(2..=3).contains(&classes) {
        return Err(Error::Contract(format!(
            "gen_synthetic: {classes} classes requested, supported range is 2..=3"
        )));
    }
    if channels == 0 || segments == 0 {
        return Err(Error::Contract(
            "gen_synthetic: need at least one segment and one channel".into(),
        ));
    }
    let max_bin = 2 * CLASS_BINS[classes as usize - 1];
    if seg_len / 2 <= max_bin {
        return Err(Error::Contract(format!(
            "gen_synthetic: seg_len {seg_len} cannot hold bin {max_bin} below Nyquist"
        )));
    }

    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, NOISE_SIGMA).expect("sigma is a positive constant");
    let tau = std::f64::consts::TAU;

    let mut data = Vec::with_capacity(segments);
    let mut labels = Vec::with_capacity(segments);
    for i in 0..segments {
        let label = (i as u32) % classes;
        let bin = CLASS_BINS[label as usize] as f64;
        let base_phase = rng.gen_range(0.0..tau);
        let mut seg = vec![T::zero(); seg_len * channels];
        for ch in 0..channels {
            let phase = base_phase + rng.gen_range(-PHASE_JITTER..PHASE_JITTER);
            let phase2 = rng.gen_range(0.0..tau);
            for t in 0..seg_len {
                let arg = tau * bin * t as f64 / seg_len as f64;
                let v = (arg + phase).sin()
                    + HARMONIC_AMP * (2.0 * arg + phase2).sin()
                    + noise.sample(&mut rng);
                seg[t * channels + ch] = T::from_f64(v);
            }
        }
        data.push(seg);
        labels.push(label);
    }

    let ds = SegmentDataset {
        segments: data,
        labels,
        n_classes: classes,
        seg_len,
        channels,
    };
    ds.validate()?;
    Ok(ds)
}
