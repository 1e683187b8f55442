//! Scalar precision abstraction.
//!
//! All numeric code is generic over [`Real`] so the same path can run at
//! 32-bit (training default) and 64-bit (verification and gradient checks).
//! The trait also fixes the on-disk encoding: little-endian IEEE-754 at the
//! scalar's native width.

use num_traits::Float;

pub trait Real:
    Float + std::fmt::Debug + std::fmt::Display + std::iter::Sum + Send + Sync + 'static
{
    /// Scalar width in bytes as stored on disk (4 or 8).
    const BYTES: u8;

    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;

    /// Append this scalar to `out` as little-endian bytes.
    fn write_le(self, out: &mut Vec<u8>);

    /// Decode one scalar from exactly `BYTES` little-endian bytes.
    fn read_le(bytes: &[u8]) -> Self;
}

impl Real for f32 {
    const BYTES: u8 = 4;

    fn from_f64(v: f64) -> Self {
        v as f32
    }

    fn to_f64(self) -> f64 {
        self as f64
    }

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes([bytes[0], bytes[1], bytes[2], bytes[3]])
    }
}

impl Real for f64 {
    const BYTES: u8 = 8;

    fn from_f64(v: f64) -> Self {
        v
    }

    fn to_f64(self) -> f64 {
        self
    }

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes([
            bytes[0], bytes[1], bytes[2], bytes[3], bytes[4], bytes[5], bytes[6], bytes[7],
        ])
    }
}

/// Numerically stable logistic function, valid over the whole real line.
pub fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Numerically stable `ln(1 + e^x)`.
pub fn softplus<T: Real>(x: T) -> T {
    // max(x, 0) + ln(1 + e^-|x|) never overflows and never loses the tail.
    let zero = T::zero();
    let m = if x > zero { x } else { zero };
    m + (-x.abs()).exp().ln_1p()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_matches_naive_in_safe_range() {
        for i in -40..=40 {
            let x = i as f64 * 0.5;
            let naive = 1.0 / (1.0 + (-x).exp());
            assert!((sigmoid(x) - naive).abs() < 1e-15);
        }
    }

    #[test]
    fn sigmoid_extremes_are_finite() {
        assert!(sigmoid(800.0_f64) <= 1.0);
        assert!(sigmoid(-800.0_f64) >= 0.0);
        assert!(sigmoid(-800.0_f64).is_finite());
    }

    #[test]
    fn softplus_is_stable_and_positive() {
        assert!((softplus(0.0_f64) - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((softplus(100.0_f64) - 100.0).abs() < 1e-12);
        assert!(softplus(-100.0_f64) > 0.0);
        assert!(softplus(-100.0_f64) < 1e-40);
    }

    #[test]
    fn le_round_trip_is_bit_exact() {
        let vals = [0.0_f64, -1.5, std::f64::consts::PI, f64::MIN_POSITIVE];
        for v in vals {
            let mut buf = Vec::new();
            v.write_le(&mut buf);
            assert_eq!(f64::read_le(&buf), v);
        }
        let mut buf = Vec::new();
        1.25_f32.write_le(&mut buf);
        assert_eq!(f32::read_le(&buf), 1.25);
    }
}
