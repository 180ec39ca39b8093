//! The variance schedule of the forward noising process and its closed forms.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;

pub const DEFAULT_STEPS: usize = 1000;
pub const DEFAULT_BETA_START: f64 = 1e-4;
pub const DEFAULT_BETA_END: f64 = 0.02;

/// `β`, `α = 1 − β`, `ᾱ_t = Π_{i≤t} α_i` and the posterior variance
/// `β̃_t = (1 − ᾱ_{t−1}) / (1 − ᾱ_t) · β_t` for `t = 1..=T`.
///
/// Vectors are stored zero-based (`beta[0]` is `β_1`); the accessors take
/// one-based timesteps. `ᾱ_0` is defined as 1.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSchedule {
    beta_start: f64,
    beta_end: f64,
    beta: Vec<f64>,
    alpha: Vec<f64>,
    alpha_bar: Vec<f64>,
    beta_tilde: Vec<f64>,
}

impl NoiseSchedule {
    /// Linearly spaced `β` from `beta_start` to `beta_end`, both included.
    pub fn linear(steps: usize, beta_start: f64, beta_end: f64) -> Result<Self> {
        if steps == 0 {
            return Err(Error::InvalidSteps { n_steps: 0, max: usize::MAX });
        }
        let ordered = if steps == 1 {
            beta_start > 0.0 && beta_start < 1.0 && beta_start <= beta_end
        } else {
            beta_start > 0.0 && beta_start < beta_end && beta_end < 1.0
        };
        if !ordered {
            return Err(Error::InvalidRange {
                beta_start,
                beta_end,
            });
        }
        let beta: Vec<f64> = if steps == 1 {
            alloc::vec![beta_start]
        } else {
            let span = beta_end - beta_start;
            (0..steps)
                .map(|i| beta_start + span * i as f64 / (steps - 1) as f64)
                .collect()
        };
        let alpha: Vec<f64> = beta.iter().map(|b| 1.0 - b).collect();
        let mut alpha_bar = Vec::with_capacity(steps);
        let mut prod = 1.0;
        for &a in &alpha {
            prod *= a;
            alpha_bar.push(prod);
        }
        let beta_tilde = (0..steps)
            .map(|i| {
                let prev = if i == 0 { 1.0 } else { alpha_bar[i - 1] };
                (1.0 - prev) / (1.0 - alpha_bar[i]) * beta[i]
            })
            .collect();
        Ok(NoiseSchedule {
            beta_start,
            beta_end,
            beta,
            alpha,
            alpha_bar,
            beta_tilde,
        })
    }

    /// `T = 1000`, `β` from `1e-4` to `0.02`.
    pub fn default_linear() -> Self {
        Self::linear(DEFAULT_STEPS, DEFAULT_BETA_START, DEFAULT_BETA_END)
            .expect("default schedule is valid")
    }

    pub fn steps(&self) -> usize {
        self.beta.len()
    }

    pub fn beta_start(&self) -> f64 {
        self.beta_start
    }

    pub fn beta_end(&self) -> f64 {
        self.beta_end
    }

    pub fn betas(&self) -> &[f64] {
        &self.beta
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alpha
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bar
    }

    pub fn beta_tildes(&self) -> &[f64] {
        &self.beta_tilde
    }

    pub fn check_step(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.steps() {
            Err(Error::StepOutOfRange {
                t,
                max: self.steps(),
            })
        } else {
            Ok(())
        }
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.beta[t - 1]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.alpha[t - 1]
    }

    /// `ᾱ_t` for `t` in `0..=T`, with `ᾱ_0 = 1`.
    pub fn alpha_bar(&self, t: usize) -> f64 {
        if t == 0 {
            1.0
        } else {
            self.alpha_bar[t - 1]
        }
    }

    pub fn beta_tilde(&self, t: usize) -> f64 {
        self.beta_tilde[t - 1]
    }

    /// `x_t = √ᾱ_t x₀ + √(1 − ᾱ_t) ε`.
    pub fn q_sample(&self, x0: &[f64], t: usize, eps: &[f64]) -> Result<Vec<f64>> {
        self.check_step(t)?;
        if x0.len() != eps.len() {
            return Err(Error::DimensionMismatch {
                left: x0.len(),
                right: eps.len(),
            });
        }
        let ab = self.alpha_bar(t);
        let (sa, sb) = (math::sqrt(ab), math::sqrt(1.0 - ab));
        Ok(x0.iter().zip(eps).map(|(x, e)| sa * x + sb * e).collect())
    }

    /// Mean of `q(x_{t−1} | x_t, x₀)`:
    /// `√ᾱ_{t−1} β_t / (1 − ᾱ_t) · x₀ + √α_t (1 − ᾱ_{t−1}) / (1 − ᾱ_t) · x_t`.
    pub fn posterior_mean(&self, x0: &[f64], xt: &[f64], t: usize) -> Result<Vec<f64>> {
        self.check_step(t)?;
        if x0.len() != xt.len() {
            return Err(Error::DimensionMismatch {
                left: x0.len(),
                right: xt.len(),
            });
        }
        let (c0, ct) = self.posterior_coefficients(t);
        Ok(x0.iter().zip(xt).map(|(a, b)| c0 * a + ct * b).collect())
    }

    /// Weights of `x₀` and `x_t` in [`NoiseSchedule::posterior_mean`].
    pub fn posterior_coefficients(&self, t: usize) -> (f64, f64) {
        let ab = self.alpha_bar(t);
        let ab_prev = self.alpha_bar(t - 1);
        let c0 = math::sqrt(ab_prev) * self.beta(t) / (1.0 - ab);
        let ct = math::sqrt(self.alpha(t)) * (1.0 - ab_prev) / (1.0 - ab);
        (c0, ct)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn two_step_hand_product() {
        let s = NoiseSchedule::linear(2, 0.1, 0.2).unwrap();
        assert_eq!(s.betas(), &[0.1, 0.2]);
        assert!((s.alpha(1) - 0.9).abs() < 1e-15 && (s.alpha(2) - 0.8).abs() < 1e-15);
        assert!((s.alpha_bar(1) - 0.9).abs() < 1e-15);
        assert!((s.alpha_bar(2) - 0.72).abs() < 1e-15);
    }

    #[test]
    fn single_step() {
        let s = NoiseSchedule::linear(1, 0.3, 0.3).unwrap();
        assert_eq!(s.alpha_bar(1), 1.0 - 0.3);
        assert!((s.beta_tilde(1) - 0.0).abs() < 1e-15);
    }

    #[test]
    fn invalid_ranges() {
        assert!(matches!(
            NoiseSchedule::linear(10, 0.2, 0.1),
            Err(Error::InvalidRange { .. })
        ));
        assert!(matches!(
            NoiseSchedule::linear(10, 0.1, 0.1),
            Err(Error::InvalidRange { .. })
        ));
        assert!(NoiseSchedule::linear(10, 0.0, 0.1).is_err());
        assert!(NoiseSchedule::linear(10, 0.1, 1.0).is_err());
        assert!(NoiseSchedule::linear(0, 0.1, 0.2).is_err());
    }

    #[test]
    fn q_sample_substitution() {
        // ᾱ_1 = 0.25 when β_1 = 0.75.
        let s = NoiseSchedule::linear(2, 0.75, 0.8).unwrap();
        let x = s.q_sample(&[2.0], 1, &[1.0]).unwrap();
        assert!((x[0] - (1.0 + 0.75f64.sqrt())).abs() < 1e-12);
        assert!((x[0] - 1.86603).abs() < 1e-5);
        let quiet = s.q_sample(&[2.0], 1, &[0.0]).unwrap();
        assert_eq!(quiet[0], 0.5 * 2.0);
    }

    #[test]
    fn step_bounds() {
        let s = NoiseSchedule::linear(5, 0.1, 0.2).unwrap();
        assert_eq!(
            s.q_sample(&[1.0], 0, &[0.0]),
            Err(Error::StepOutOfRange { t: 0, max: 5 })
        );
        assert!(s.q_sample(&[1.0], 6, &[0.0]).is_err());
        assert!(s.posterior_mean(&[1.0], &[1.0], 6).is_err());
    }

    #[test]
    fn posterior_mean_of_zero_is_zero() {
        let s = NoiseSchedule::default_linear();
        assert_eq!(s.posterior_mean(&[0.0], &[0.0], 500).unwrap(), vec![0.0]);
    }

    #[test]
    fn posterior_mean_early_step_is_x0_weighted() {
        let s = NoiseSchedule::linear(1000, 1e-6, 0.02).unwrap();
        // ᾱ_0 = 1 makes the t = 1 mean x₀, up to rounding in 1 − ᾱ_1.
        let m = s.posterior_mean(&[3.0], &[-5.0], 1).unwrap();
        assert!((m[0] - 3.0).abs() < 1e-9);
        let (c0, ct) = s.posterior_coefficients(2);
        assert!(c0 > 0.4 && ct < 0.6, "c0={c0} ct={ct}");
    }

    #[test]
    fn beta_tilde_bounded_by_beta() {
        let s = NoiseSchedule::default_linear();
        for t in 1..=s.steps() {
            assert!(s.beta_tilde(t) <= s.beta(t));
        }
    }

    #[test]
    fn alpha_bar_matches_log_sum() {
        let s = NoiseSchedule::default_linear();
        let mut log_sum = 0.0;
        for t in 1..=s.steps() {
            log_sum += math::ln(s.alpha(t));
            let via_exp = math::exp(log_sum);
            assert!((s.alpha_bar(t) - via_exp).abs() / via_exp < 1e-12);
            assert!(
                (s.alpha_bar(t) - s.alpha_bar(t - 1) * s.alpha(t)).abs()
                    <= 1e-15 * s.alpha_bar(t)
            );
        }
    }

    #[test]
    fn monotone_default() {
        let s = NoiseSchedule::default_linear();
        assert!(s.betas().windows(2).all(|w| w[0] < w[1]));
        assert!(s.alpha_bars().windows(2).all(|w| w[0] > w[1]));
        assert!(s.alpha_bars().iter().all(|&a| a > 0.0 && a < 1.0));
    }
}
