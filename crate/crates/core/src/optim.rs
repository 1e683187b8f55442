//! Optimization: bias-corrected Adam over the model's canonical tensor
//! groups, and a reduce-on-plateau learning-rate schedule.

use crate::error::{Error, Result};
use crate::real::Real;

// ── Adam ────────────────────────────────────────────────────────────────

/// Adam state: first/second moment estimates per parameter group plus the
/// step counter. Moments are kept in the working precision.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Real> Adam<T> {
    /// Fresh state for groups of the given sizes, with the standard
    /// defaults (0.9, 0.999, 1e-8).
    pub fn new(group_sizes: &[usize]) -> Self {
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: group_sizes.iter().map(|n| vec![T::zero(); *n]).collect(),
            v: group_sizes.iter().map(|n| vec![T::zero(); *n]).collect(),
        }
    }

    /// One update: `p -= lr * m̂ / (sqrt(v̂) + eps)` with bias-corrected
    /// moment estimates. `params` and `grads` must match the group layout
    /// the state was built with.
    pub fn step<'a, I>(&mut self, params: I, grads: &[Vec<T>], lr: f64) -> Result<()>
    where
        I: IntoIterator<Item = &'a mut Vec<T>>,
    {
        let params: Vec<&'a mut Vec<T>> = params.into_iter().collect();
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Contract(format!(
                "adam: {} params / {} grads vs {} state groups",
                params.len(),
                grads.len(),
                self.m.len()
            )));
        }
        self.t += 1;
        let b1 = T::from_f64(self.beta1);
        let b2 = T::from_f64(self.beta2);
        let one_m_b1 = T::from_f64(1.0 - self.beta1);
        let one_m_b2 = T::from_f64(1.0 - self.beta2);
        let corr1 = T::from_f64(1.0 - self.beta1.powi(self.t as i32));
        let corr2 = T::from_f64(1.0 - self.beta2.powi(self.t as i32));
        let lr_t = T::from_f64(lr);
        let eps = T::from_f64(self.eps);

        for (gi, (p, g)) in params.into_iter().zip(grads).enumerate() {
            if p.len() != self.m[gi].len() || g.len() != self.m[gi].len() {
                return Err(Error::Contract(format!(
                    "adam: group {gi} has {} params, {} grads, {} moments",
                    p.len(),
                    g.len(),
                    self.m[gi].len()
                )));
            }
            let (m, v) = (&mut self.m[gi], &mut self.v[gi]);
            for i in 0..p.len() {
                m[i] = b1 * m[i] + one_m_b1 * g[i];
                v[i] = b2 * v[i] + one_m_b2 * g[i] * g[i];
                let m_hat = m[i] / corr1;
                let v_hat = v[i] / corr2;
                p[i] = p[i] - lr_t * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

// ── Learning-rate schedule ──────────────────────────────────────────────

/// Reduce-on-plateau: halve the rate whenever the epoch train loss fails
/// to improve on the previous epoch's by at least `min_delta`, never below
/// `floor`.
#[derive(Debug, Clone)]
pub struct PlateauSchedule {
    pub lr: f64,
    pub factor: f64,
    pub min_delta: f64,
    pub floor: f64,
    prev_loss: Option<f64>,
}

impl PlateauSchedule {
    pub fn new(initial_lr: f64, factor: f64, min_delta: f64, floor: f64) -> Self {
        PlateauSchedule {
            lr: initial_lr,
            factor,
            min_delta,
            floor,
            prev_loss: None,
        }
    }

    /// Record one epoch's train loss; returns the rate for the next epoch.
    pub fn observe(&mut self, epoch_loss: f64) -> f64 {
        if let Some(prev) = self.prev_loss {
            let improved = prev - epoch_loss >= self.min_delta;
            if !improved {
                self.lr = (self.lr * self.factor).max(self.floor);
            }
        }
        self.prev_loss = Some(epoch_loss);
        self.lr
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_changes_nothing_but_the_counter() {
        let mut p1 = vec![1.0_f64, -2.0];
        let mut p2 = vec![0.5_f64];
        let grads = vec![vec![0.0, 0.0], vec![0.0]];
        let mut adam = Adam::new(&[2, 1]);
        adam.step(vec![&mut p1, &mut p2], &grads, 1e-3).unwrap();
        assert_eq!(p1, vec![1.0, -2.0]);
        assert_eq!(p2, vec![0.5]);
        assert_eq!(adam.t, 1);
    }

    #[test]
    fn first_step_moves_by_about_lr() {
        let mut p = vec![0.0_f64, 10.0];
        let grads = vec![vec![3.0, -0.004]];
        let mut adam = Adam::new(&[2]);
        adam.step(vec![&mut p], &grads, 1e-3).unwrap();
        // m̂ = g, v̂ = g² after one step, so the move is lr·g/(|g|+ε) ≈ ±lr.
        assert!((p[0] - (-1e-3)).abs() < 1e-8, "{}", p[0]);
        assert!((p[1] - (10.0 + 1e-3)).abs() < 1e-8, "{}", p[1]);
    }

    #[test]
    fn two_steps_match_a_hand_rolled_trace() {
        let (b1, b2, eps, lr) = (0.9_f64, 0.999_f64, 1e-8_f64, 1e-3_f64);
        let g = [0.7_f64, -1.3];
        let mut expect = vec![0.2_f64, -0.4];
        let mut m = [0.0_f64; 2];
        let mut v = [0.0_f64; 2];
        for t in 1..=2 {
            for i in 0..2 {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                let mh = m[i] / (1.0 - b1.powi(t));
                let vh = v[i] / (1.0 - b2.powi(t));
                expect[i] -= lr * mh / (vh.sqrt() + eps);
            }
        }

        let mut p = vec![0.2_f64, -0.4];
        let grads = vec![g.to_vec()];
        let mut adam = Adam::new(&[2]);
        adam.step(vec![&mut p], &grads, lr).unwrap();
        adam.step(vec![&mut p], &grads, lr).unwrap();
        for (a, e) in p.iter().zip(&expect) {
            assert!((a - e).abs() < 1e-12, "{a} vs {e}");
        }
    }

    #[test]
    fn shape_mismatch_is_a_contract_error() {
        let mut p = vec![0.0_f64; 3];
        let grads = vec![vec![0.0; 2]];
        let mut adam = Adam::new(&[3]);
        assert!(adam.step(vec![&mut p], &grads, 1e-3).is_err());
        let grads3 = vec![vec![0.0; 3], vec![0.0; 1]];
        let mut q = vec![0.0_f64; 3];
        assert!(adam.step(vec![&mut q], &grads3, 1e-3).is_err());
    }

    #[test]
    fn decreasing_losses_keep_the_rate() {
        let mut s = PlateauSchedule::new(1e-3, 0.5, 1e-4, 1e-5);
        for loss in [1.0, 0.8, 0.5, 0.2] {
            assert_eq!(s.observe(loss), 1e-3);
        }
    }

    #[test]
    fn a_plateau_halves_the_rate() {
        let mut s = PlateauSchedule::new(1e-3, 0.5, 1e-4, 1e-5);
        s.observe(1.0);
        assert_eq!(s.observe(1.0), 5e-4);
    }

    #[test]
    fn sub_min_delta_improvement_counts_as_plateau() {
        let mut s = PlateauSchedule::new(1e-3, 0.5, 1e-4, 1e-5);
        s.observe(1.0);
        assert_eq!(s.observe(1.0 - 5e-5), 5e-4);
    }

    #[test]
    fn repeated_plateaus_clamp_at_the_floor() {
        let mut s = PlateauSchedule::new(1e-3, 0.5, 1e-4, 1e-5);
        for _ in 0..40 {
            s.observe(2.0);
        }
        assert_eq!(s.lr, 1e-5);
    }
}
