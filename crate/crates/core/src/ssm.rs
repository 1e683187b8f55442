//! Diagonal linear state-space primitives on plain arrays.
//!
//! These are the non-autodiff twins of the state-space pieces inside the
//! model: a zero-order-hold discretization, the stepwise recurrence
//! ("scan"), and the equivalent convolution-kernel form, which coincide
//! exactly for time-invariant parameters. The model's training path builds
//! the same recurrence out of graph ops; these functions exist so the two
//! routes can be compared, benchmarked, and used for inference-style
//! workloads without a tape.
//!
//! Conventions: state dimension `d`, sequence length `s`. The input here is
//! a scalar sequence broadcast into the state through `b_bar`
//! (`h_t = a_bar ∘ h_{t-1} + b_bar * x_t`), and the output is read out as
//! `y_t = Σ_j c[j] * h_t[j]`.

use crate::error::{Error, Result};
use crate::graph::ZOH_SERIES_THRESHOLD;
use crate::real::Real;

/// Zero-order-hold discretization of a diagonal continuous system:
/// `a_bar = exp(delta ∘ a)` and `b_bar = ((exp(delta ∘ a) - 1) / a) ∘ b`,
/// with a series fallback `b_bar = delta ∘ b ∘ (1 + delta ∘ a / 2)` where
/// `|delta * a|` is below the closed form's safe range.
pub fn zoh_discretize<T: Real>(a: &[T], b: &[T], delta: &[T]) -> Result<(Vec<T>, Vec<T>)> {
    if a.len() != b.len() || a.len() != delta.len() {
        return Err(Error::Dimension(format!(
            "zoh_discretize: lengths a={} b={} delta={}",
            a.len(),
            b.len(),
            delta.len()
        )));
    }
    if delta.iter().any(|d| *d <= T::zero()) {
        return Err(Error::Contract("zoh_discretize: delta must be positive".into()));
    }
    let thr = T::from_f64(ZOH_SERIES_THRESHOLD);
    let half = T::from_f64(0.5);
    let mut a_bar = Vec::with_capacity(a.len());
    let mut b_bar = Vec::with_capacity(a.len());
    for j in 0..a.len() {
        let z = delta[j] * a[j];
        a_bar.push(z.exp());
        let phi = if z.abs() < thr {
            delta[j] * (T::one() + z * half)
        } else {
            z.exp_m1() / a[j]
        };
        b_bar.push(phi * b[j]);
    }
    Ok((a_bar, b_bar))
}

/// Stepwise recurrence over a scalar input sequence:
/// `h_t = a_bar ∘ h_{t-1} + b_bar * x_t`, `y_t = Σ_j c[j] h_t[j]`,
/// with `h_0 = 0`.
pub fn ssm_scan<T: Real>(a_bar: &[T], b_bar: &[T], c: &[T], x: &[T]) -> Result<Vec<T>> {
    let d = a_bar.len();
    if b_bar.len() != d || c.len() != d {
        return Err(Error::Dimension(format!(
            "ssm_scan: lengths a_bar={} b_bar={} c={}",
            d,
            b_bar.len(),
            c.len()
        )));
    }
    let mut h = vec![T::zero(); d];
    let mut y = Vec::with_capacity(x.len());
    for &xt in x {
        let mut out = T::zero();
        for j in 0..d {
            h[j] = a_bar[j] * h[j] + b_bar[j] * xt;
            out = out + c[j] * h[j];
        }
        y.push(out);
    }
    Ok(y)
}

/// Convolution kernel of the time-invariant system:
/// `k[t] = Σ_j c[j] * a_bar[j]^t * b_bar[j]` for `t = 0..s`.
pub fn ssm_kernel<T: Real>(a_bar: &[T], b_bar: &[T], c: &[T], s: usize) -> Result<Vec<T>> {
    let d = a_bar.len();
    if b_bar.len() != d || c.len() != d {
        return Err(Error::Dimension(format!(
            "ssm_kernel: lengths a_bar={} b_bar={} c={}",
            d,
            b_bar.len(),
            c.len()
        )));
    }
    let mut pow = vec![T::one(); d]; // a_bar^t, starting at t = 0
    let mut k = Vec::with_capacity(s);
    for _ in 0..s {
        let mut kt = T::zero();
        for j in 0..d {
            kt = kt + c[j] * pow[j] * b_bar[j];
            pow[j] = pow[j] * a_bar[j];
        }
        k.push(kt);
    }
    Ok(k)
}

/// Causal convolution `y[t] = Σ_{tau <= t} k[tau] * x[t - tau]`; the kernel
/// must cover the whole sequence.
pub fn apply_kernel<T: Real>(x: &[T], k: &[T]) -> Result<Vec<T>> {
    if k.len() < x.len() {
        return Err(Error::Dimension(format!(
            "apply_kernel: kernel length {} shorter than sequence {}",
            k.len(),
            x.len()
        )));
    }
    let mut y = Vec::with_capacity(x.len());
    for t in 0..x.len() {
        let mut s = T::zero();
        for tau in 0..=t {
            s = s + k[tau] * x[t - tau];
        }
        y.push(s);
    }
    Ok(y)
}
