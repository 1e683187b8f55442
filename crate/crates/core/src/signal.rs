//! Signal types and preprocessing.
//!
//! A [`TrialRecording`] is one continuous multichannel recording with
//! optional self-report ratings; a [`SegmentDataset`] is the training-ready
//! product: fixed-length windows, one integer label each. Preprocessing
//! order is fixed: cut windows first, then normalize each window per
//! channel, so no statistics leak across segment boundaries.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::real::Real;

/// One continuous recording: `n_steps x channels` samples, row-major
/// (sample `t` of channel `c` at `t * channels + c`).
#[derive(Debug, Clone)]
pub struct TrialRecording<T> {
    pub samples: Vec<T>,
    pub n_steps: usize,
    pub channel_names: Vec<String>,
    /// Sampling rate; 0.0 when the source format does not carry one.
    pub rate_hz: f64,
    /// Self-report metrics (e.g. "valence" -> 6.0), empty if none.
    pub ratings: BTreeMap<String, f64>,
}

impl<T: Real> TrialRecording<T> {
    pub fn channels(&self) -> usize {
        self.channel_names.len()
    }

    pub fn validate(&self) -> Result<()> {
        let want = self.n_steps * self.channels();
        if self.samples.len() != want {
            return Err(Error::Dimension(format!(
                "trial holds {} samples, expected {} ({} steps x {} channels)",
                self.samples.len(),
                want,
                self.n_steps,
                self.channels()
            )));
        }
        Ok(())
    }
}

/// Labeled fixed-length segments: each entry is `seg_len x channels`
/// row-major, with a class label in `0..n_classes`.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentDataset<T> {
    pub segments: Vec<Vec<T>>,
    pub labels: Vec<u32>,
    pub n_classes: u32,
    pub seg_len: usize,
    pub channels: usize,
}

impl<T: Real> SegmentDataset<T> {
    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.labels.len() != self.segments.len() {
            return Err(Error::Dimension(format!(
                "{} segments but {} labels",
                self.segments.len(),
                self.labels.len()
            )));
        }
        let want = self.seg_len * self.channels;
        for (i, s) in self.segments.iter().enumerate() {
            if s.len() != want {
                return Err(Error::Dimension(format!(
                    "segment {i} holds {} samples, expected {want}",
                    s.len()
                )));
            }
        }
        for (i, &l) in self.labels.iter().enumerate() {
            if l >= self.n_classes {
                return Err(Error::Contract(format!(
                    "segment {i} labeled {l}, but dataset has {} classes",
                    self.n_classes
                )));
            }
        }
        Ok(())
    }
}

// ── Preprocessing ───────────────────────────────────────────────────────

/// Cut a trial into non-overlapping windows of `win_len` steps. A trailing
/// partial window is dropped, so the count is exactly `n_steps / win_len`;
/// a trial shorter than one window is an error rather than an empty result.
pub fn window_segments<T: Real>(trial: &TrialRecording<T>, win_len: usize) -> Result<Vec<Vec<T>>> {
    if win_len == 0 {
        return Err(Error::Contract("window_segments: zero window length".into()));
    }
    trial.validate()?;
    if trial.n_steps < win_len {
        return Err(Error::Contract(format!(
            "window_segments: trial has {} steps, shorter than one window of {win_len}",
            trial.n_steps
        )));
    }
    let c = trial.channels();
    let count = trial.n_steps / win_len;
    let mut out = Vec::with_capacity(count);
    for w in 0..count {
        let start = w * win_len * c;
        out.push(trial.samples[start..start + win_len * c].to_vec());
    }
    Ok(out)
}

/// Floor applied to the population standard deviation so constant channels
/// normalize to zero instead of dividing by zero.
pub const ZSCORE_EPS: f64 = 1e-8;

/// Per-channel z-score of one `seg_len x channels` window:
/// `(x - mean) / max(population_std, eps)`, statistics taken over the
/// window only. Constant channels come out as all zeros.
pub fn zscore_channel<T: Real>(segment: &[T], seg_len: usize, channels: usize) -> Result<Vec<T>> {
    if segment.len() != seg_len * channels {
        return Err(Error::Dimension(format!(
            "zscore_channel: {} samples, expected {} x {}",
            segment.len(),
            seg_len,
            channels
        )));
    }
    if seg_len == 0 {
        return Err(Error::Contract("zscore_channel: empty segment".into()));
    }
    let n = T::from_f64(seg_len as f64);
    let eps = T::from_f64(ZSCORE_EPS);
    let mut out = vec![T::zero(); segment.len()];
    for ch in 0..channels {
        let mut mean = T::zero();
        for t in 0..seg_len {
            mean = mean + segment[t * channels + ch];
        }
        mean = mean / n;
        let mut var = T::zero();
        for t in 0..seg_len {
            let d = segment[t * channels + ch] - mean;
            var = var + d * d;
        }
        var = var / n; // population variance
        let denom = var.sqrt().max(eps);
        for t in 0..seg_len {
            out[t * channels + ch] = (segment[t * channels + ch] - mean) / denom;
        }
    }
    Ok(out)
}

/// Threshold a continuous rating into a binary class: strictly greater than
/// `threshold` is class 1, everything else (including equality) class 0.
pub fn binarize_label(rating: f64, threshold: f64) -> u32 {
    if rating > threshold {
        1
    } else {
        0
    }
}

/// Keep only the named channels, in exactly the requested order. A name
/// absent from the recording is an error naming the absentee.
pub fn select_channels<T: Real>(
    trial: &TrialRecording<T>,
    names: &[&str],
) -> Result<TrialRecording<T>> {
    trial.validate()?;
    let mut picks = Vec::with_capacity(names.len());
    for name in names {
        match trial.channel_names.iter().position(|n| n == name) {
            Some(i) => picks.push(i),
            None => return Err(Error::MissingChannel((*name).to_string())),
        }
    }
    let c_in = trial.channels();
    let c_out = picks.len();
    let mut samples = Vec::with_capacity(trial.n_steps * c_out);
    for t in 0..trial.n_steps {
        for &i in &picks {
            samples.push(trial.samples[t * c_in + i]);
        }
    }
    Ok(TrialRecording {
        samples,
        n_steps: trial.n_steps,
        channel_names: names.iter().map(|n| n.to_string()).collect(),
        rate_hz: trial.rate_hz,
        ratings: trial.ratings.clone(),
    })
}

// ── CSV ingestion ───────────────────────────────────────────────────────

/// Read one trial from CSV: the header row names the channels, every other
/// row is one time step. Ragged rows and non-numeric cells are format
/// errors carrying the byte offset of the offending record.
pub fn read_csv_trial<T: Real>(path: &Path) -> Result<TrialRecording<T>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(csv_error)?;
    let channel_names: Vec<String> = rdr
        .headers()
        .map_err(csv_error)?
        .iter()
        .map(|s| s.to_string())
        .collect();
    if channel_names.is_empty() {
        return Err(Error::Format {
            offset: 0,
            msg: "csv has no header row".into(),
        });
    }
    let mut samples = Vec::new();
    let mut n_steps = 0;
    for rec in rdr.records() {
        let rec = rec.map_err(csv_error)?;
        let offset = rec.position().map(|p| p.byte()).unwrap_or(0);
        if rec.len() != channel_names.len() {
            return Err(Error::Format {
                offset,
                msg: format!(
                    "row has {} cells, header names {} channels",
                    rec.len(),
                    channel_names.len()
                ),
            });
        }
        for cell in rec.iter() {
            let v: f64 = cell.parse().map_err(|_| Error::Format {
                offset,
                msg: format!("cell {cell:?} is not a number"),
            })?;
            samples.push(T::from_f64(v));
        }
        n_steps += 1;
    }
    Ok(TrialRecording {
        samples,
        n_steps,
        channel_names,
        rate_hz: 0.0,
        ratings: BTreeMap::new(),
    })
}

fn csv_error(e: csv::Error) -> Error {
    let offset = e.position().map(|p| p.byte()).unwrap_or(0);
    match e.kind() {
        csv::ErrorKind::Io(_) => {
            Error::Format {
                offset,
                msg: format!("csv read failed: {e}"),
            }
        }
        _ => Error::Format {
            offset,
            msg: e.to_string(),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn trial(n_steps: usize, channels: &[&str]) -> TrialRecording<f64> {
        let c = channels.len();
        TrialRecording {
            samples: (0..n_steps * c).map(|i| i as f64).collect(),
            n_steps,
            channel_names: channels.iter().map(|s| s.to_string()).collect(),
            rate_hz: 128.0,
            ratings: BTreeMap::new(),
        }
    }

    #[test]
    fn window_count_is_floor_of_ratio() {
        let t = trial(384, &["a", "b"]);
        assert_eq!(window_segments(&t, 128).unwrap().len(), 3);
        let t = trial(300, &["a"]);
        assert_eq!(window_segments(&t, 128).unwrap().len(), 2);
    }

    #[test]
    fn trial_shorter_than_one_window_is_an_error() {
        let t = trial(100, &["a", "b"]);
        match window_segments(&t, 128) {
            Err(Error::Contract(msg)) => assert!(msg.contains("100"), "{msg}"),
            other => panic!("expected contract error, got {other:?}"),
        }
    }

    #[test]
    fn windows_are_contiguous_and_disjoint() {
        let t = trial(8, &["a", "b"]);
        let w = window_segments(&t, 3).unwrap();
        assert_eq!(w.len(), 2);
        assert_eq!(w[0], (0..6).map(|i| i as f64).collect::<Vec<_>>());
        assert_eq!(w[1], (6..12).map(|i| i as f64).collect::<Vec<_>>());
    }

    #[test]
    fn zscore_gives_zero_mean_unit_variance() {
        let seg: Vec<f64> = (0..32).map(|i| (i as f64 * 0.7).sin() * 3.0 + 5.0).collect();
        let z = zscore_channel(&seg, 16, 2).unwrap();
        for ch in 0..2 {
            let vals: Vec<f64> = (0..16).map(|t| z[t * 2 + ch]).collect();
            let mean: f64 = vals.iter().sum::<f64>() / 16.0;
            let var: f64 = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 16.0;
            assert!(mean.abs() < 1e-12, "mean {mean}");
            assert!((var - 1.0).abs() < 1e-6, "var {var}");
        }
    }

    #[test]
    fn zscore_constant_channel_is_all_zeros() {
        let seg = vec![4.25_f64; 24];
        let z = zscore_channel(&seg, 12, 2).unwrap();
        assert!(z.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn binarize_is_strictly_greater() {
        assert_eq!(binarize_label(7.0, 5.0), 1);
        assert_eq!(binarize_label(3.0, 5.0), 0);
        assert_eq!(binarize_label(5.0, 5.0), 0); // boundary: not greater
        assert_eq!(binarize_label(3.0, 3.0), 0);
        assert_eq!(binarize_label(3.5, 3.0), 1);
    }

    #[test]
    fn select_channels_reorders() {
        let t = trial(2, &["fp1", "fp2", "af3", "af4"]);
        let s = select_channels(&t, &["af4", "fp1"]).unwrap();
        assert_eq!(s.channel_names, vec!["af4", "fp1"]);
        // step 0: af4 was column 3, fp1 column 0
        assert_eq!(s.samples, vec![3.0, 0.0, 7.0, 4.0]);
    }

    #[test]
    fn select_channels_names_the_missing_one() {
        let t = trial(2, &["fp1", "fp2"]);
        match select_channels(&t, &["fp1", "cz"]) {
            Err(Error::MissingChannel(name)) => assert_eq!(name, "cz"),
            other => panic!("expected missing-channel error, got {other:?}"),
        }
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trial.csv");
        let mut f = std::fs::File::create(&path).unwrap();
        writeln!(f, "fp1,fp2").unwrap();
        writeln!(f, "0.5,-1.25").unwrap();
        writeln!(f, "1.5,2.75").unwrap();
        drop(f);
        let t: TrialRecording<f64> = read_csv_trial(&path).unwrap();
        assert_eq!(t.channel_names, vec!["fp1", "fp2"]);
        assert_eq!(t.n_steps, 2);
        assert_eq!(t.samples, vec![0.5, -1.25, 1.5, 2.75]);
    }

    #[test]
    fn csv_ragged_row_is_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "a,b\n1.0,2.0\n3.0\n").unwrap();
        match read_csv_trial::<f64>(&path) {
            Err(Error::Format { .. }) => {}
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn csv_non_numeric_cell_is_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "a,b\n1.0,oops\n").unwrap();
        match read_csv_trial::<f64>(&path) {
            Err(Error::Format { offset, msg }) => {
                assert!(msg.contains("oops"));
                assert!(offset > 0);
            }
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn dataset_validate_catches_bad_label() {
        let ds = SegmentDataset {
            segments: vec![vec![0.0_f64; 6]],
            labels: vec![2],
            n_classes: 2,
            seg_len: 3,
            channels: 2,
        };
        assert!(ds.validate().is_err());
    }
}
