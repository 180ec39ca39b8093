//! Reverse-process samplers: ancestral DDPM over every step and DDIM over a
//! sub-sequence `τ` of steps.
//!
//! Both start from `x_T ~ N(0, I)`. Samples are produced in batches; batch `b`
//! draws all of its randomness from `Rng::stream(seed, b)` in the order: the
//! `x_T` values (row-major), then for each executed step the `z` values, only
//! when that step's noise scale is nonzero.

use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::dataset::{truncate_in_place, ExpressionMatrix};
use crate::denoiser::DenoiserModel;
use crate::error::{Error, Result};
use crate::math;
use crate::rng::Rng;
use crate::schedule::NoiseSchedule;
use crate::tensor::Tensor;

/// Radicands above this negative value are treated as rounding noise and
/// clamped to zero.
const RADICAND_SLACK: f64 = -1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Method {
    Ddpm,
    Ddim,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum TauMode {
    Equidistant,
    Quadratic,
}

/// Strictly increasing timesteps ending at `T`, plus the stochasticity `η`.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct TauSchedule {
    tau: Vec<usize>,
    eta: f64,
}

impl TauSchedule {
    pub fn new(tau: Vec<usize>, eta: f64, steps: usize) -> Result<Self> {
        check_eta(eta)?;
        let valid = !tau.is_empty()
            && tau[0] >= 1
            && tau.windows(2).all(|w| w[0] < w[1])
            && *tau.last().unwrap() == steps;
        if !valid {
            return Err(Error::InvalidConfig(
                "tau must be strictly increasing within 1..=T and end at T".into(),
            ));
        }
        Ok(TauSchedule { tau, eta })
    }

    pub fn tau(&self) -> &[usize] {
        &self.tau
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn len(&self) -> usize {
        self.tau.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tau.is_empty()
    }

    /// `T / |τ|`.
    pub fn acceleration_rate(&self) -> f64 {
        *self.tau.last().unwrap() as f64 / self.tau.len() as f64
    }
}

fn check_eta(eta: f64) -> Result<()> {
    if (0.0..=1.0).contains(&eta) {
        Ok(())
    } else {
        Err(Error::InvalidEta(eta))
    }
}

/// Builds `τ` with `n_steps` entries (fewer if rounding produces duplicates).
///
/// Equidistant: `round(k·T/n)`; quadratic: `max(1, round(T·(k/n)²))`, for
/// `k = 1..=n`. Rounding is half away from zero.
pub fn make_tau(steps: usize, n_steps: usize, mode: TauMode, eta: f64) -> Result<TauSchedule> {
    if n_steps == 0 || n_steps > steps {
        return Err(Error::InvalidSteps { n_steps, max: steps });
    }
    let (t, n) = (steps as f64, n_steps as f64);
    let mut tau: Vec<usize> = (1..=n_steps)
        .map(|k| {
            let k = k as f64;
            let v = match mode {
                TauMode::Equidistant => math::round(k * t / n),
                TauMode::Quadratic => math::round(t * (k / n) * (k / n)),
            };
            (v as usize).max(1)
        })
        .collect();
    tau.dedup();
    *tau.last_mut().unwrap() = steps;
    tau.dedup();
    TauSchedule::new(tau, eta, steps)
}

/// One ancestral step:
/// `(x_t − (1 − α_t)/√(1 − ᾱ_t) · ε̂) / √α_t + √β_t · z`, with `z` ignored at
/// `t = 1`.
pub fn ddpm_step(
    x_t: &[f64],
    t: usize,
    eps_hat: &[f64],
    z: &[f64],
    s: &NoiseSchedule,
) -> Result<Vec<f64>> {
    s.check_step(t)?;
    same_len(x_t, eps_hat)?;
    let a = s.alpha(t);
    let coef = (1.0 - a) / math::sqrt(1.0 - s.alpha_bar(t));
    let inv = 1.0 / math::sqrt(a);
    let sigma = if t > 1 { math::sqrt(s.beta(t)) } else { 0.0 };
    if sigma > 0.0 {
        same_len(x_t, z)?;
    }
    Ok(x_t
        .iter()
        .zip(eps_hat)
        .enumerate()
        .map(|(i, (x, e))| {
            let mean = inv * (x - coef * e);
            if sigma > 0.0 {
                mean + sigma * z[i]
            } else {
                mean
            }
        })
        .collect())
}

/// `η √((1 − ᾱ_prev)/(1 − ᾱ_t)) √(1 − ᾱ_t/ᾱ_prev)`.
pub fn ddim_sigma(alpha_bar_prev: f64, alpha_bar_t: f64, eta: f64) -> Result<f64> {
    check_eta(eta)?;
    if eta == 0.0 {
        return Ok(0.0);
    }
    let r = radicand(1.0 - alpha_bar_t / alpha_bar_prev)?;
    Ok(eta * math::sqrt((1.0 - alpha_bar_prev) / (1.0 - alpha_bar_t)) * math::sqrt(r))
}

fn radicand(v: f64) -> Result<f64> {
    if v >= 0.0 {
        Ok(v)
    } else if v >= RADICAND_SLACK {
        Ok(0.0)
    } else {
        Err(Error::NegativeRadicand { value: v })
    }
}

/// `x̂₀ = (x_t − √(1 − ᾱ_t) ε̂) / √ᾱ_t`.
pub fn predict_x0(x_t: &[f64], t: usize, eps_hat: &[f64], s: &NoiseSchedule) -> Result<Vec<f64>> {
    s.check_step(t)?;
    same_len(x_t, eps_hat)?;
    let ab = s.alpha_bar(t);
    let (sa, sb) = (math::sqrt(ab), math::sqrt(1.0 - ab));
    Ok(x_t.iter().zip(eps_hat).map(|(x, e)| (x - sb * e) / sa).collect())
}

/// One jump from `t` down to `t_prev < t` (`t_prev = 0` lands in data
/// space, where `ᾱ_0 = 1`):
/// `√ᾱ_prev x̂₀ + √(1 − ᾱ_prev − σ²) ε̂ + σ z`.
pub fn ddim_step(
    x_t: &[f64],
    t: usize,
    t_prev: usize,
    eps_hat: &[f64],
    z: &[f64],
    eta: f64,
    s: &NoiseSchedule,
) -> Result<Vec<f64>> {
    s.check_step(t)?;
    if t_prev >= t {
        return Err(Error::StepOutOfRange { t: t_prev, max: t - 1 });
    }
    let ab_prev = s.alpha_bar(t_prev);
    let sigma = ddim_sigma(ab_prev, s.alpha_bar(t), eta)?;
    let x0 = predict_x0(x_t, t, eps_hat, s)?;
    let dir = math::sqrt(radicand(1.0 - ab_prev - sigma * sigma)?);
    let sp = math::sqrt(ab_prev);
    if sigma > 0.0 {
        same_len(x_t, z)?;
    }
    Ok(x0
        .iter()
        .zip(eps_hat)
        .enumerate()
        .map(|(i, (x, e))| {
            let det = sp * x + dir * e;
            if sigma > 0.0 {
                det + sigma * z[i]
            } else {
                det
            }
        })
        .collect())
}

fn same_len(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() == b.len() {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            left: a.len(),
            right: b.len(),
        })
    }
}

/// Anything that predicts the noise in a batch of noised rows.
pub trait NoisePredictor {
    fn n_genes(&self) -> usize;
    fn timesteps(&self) -> usize;
    /// `x_t` has shape `[batch, n_genes]`; every row is at step `t`.
    fn predict_noise(&self, x_t: &Tensor, t: usize) -> Result<Tensor>;
}

impl NoisePredictor for DenoiserModel {
    fn n_genes(&self) -> usize {
        self.config().n_genes
    }

    fn timesteps(&self) -> usize {
        DenoiserModel::timesteps(self)
    }

    fn predict_noise(&self, x_t: &Tensor, t: usize) -> Result<Tensor> {
        self.predict(x_t, &vec![t; x_t.rows()])
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampleRequest {
    pub n_samples: usize,
    pub method: Method,
    /// Required for DDIM, ignored by DDPM.
    pub tau: Option<TauSchedule>,
    pub seed: u64,
    /// Truncate negatives to zero after the last step.
    pub postprocess: bool,
    /// Rows per batch; `None` runs all samples as one batch.
    pub batch_size: Option<usize>,
}

impl SampleRequest {
    pub fn ddpm(n_samples: usize, seed: u64) -> Self {
        SampleRequest {
            n_samples,
            method: Method::Ddpm,
            tau: None,
            seed,
            postprocess: true,
            batch_size: None,
        }
    }

    pub fn ddim(n_samples: usize, tau: TauSchedule, seed: u64) -> Self {
        SampleRequest {
            n_samples,
            method: Method::Ddim,
            tau: Some(tau),
            seed,
            postprocess: true,
            batch_size: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampleOutput {
    pub matrix: ExpressionMatrix,
    /// Forward passes of the noise predictor, summed over batches.
    pub denoiser_calls: usize,
}

/// Runs the reverse process and labels the columns with `gene_names`.
pub fn sample<P: NoisePredictor + ?Sized>(
    model: &P,
    s: &NoiseSchedule,
    req: &SampleRequest,
    gene_names: &[String],
) -> Result<SampleOutput> {
    let n = model.n_genes();
    if req.n_samples == 0 {
        return Err(Error::InvalidConfig("n_samples must be at least 1".into()));
    }
    if model.timesteps() != s.steps() {
        return Err(Error::InvalidConfig(alloc::format!(
            "model was built for {} steps but the schedule has {}",
            model.timesteps(),
            s.steps()
        )));
    }
    if gene_names.len() != n {
        return Err(Error::DimensionMismatch {
            left: gene_names.len(),
            right: n,
        });
    }
    let full: Vec<usize>;
    let (tau, eta) = match req.method {
        Method::Ddpm => {
            full = (1..=s.steps()).collect();
            (&full[..], None)
        }
        Method::Ddim => {
            let ts = req
                .tau
                .as_ref()
                .ok_or_else(|| Error::InvalidConfig("ddim needs a tau schedule".into()))?;
            if *ts.tau().last().unwrap() != s.steps() {
                return Err(Error::InvalidConfig("tau must end at T".into()));
            }
            (ts.tau(), Some(ts.eta()))
        }
    };
    let batch = req.batch_size.unwrap_or(req.n_samples).max(1);
    let mut values = Vec::with_capacity(req.n_samples * n);
    let mut calls = 0;
    let mut start = 0;
    let mut index = 0u64;
    while start < req.n_samples {
        let rows = batch.min(req.n_samples - start);
        let mut rng = Rng::stream(req.seed, index);
        let (x, c) = run_chain(model, s, tau, eta, rows, n, &mut rng)?;
        values.extend(x);
        calls += c;
        start += rows;
        index += 1;
    }
    if req.postprocess {
        truncate_in_place(&mut values);
    }
    let matrix = ExpressionMatrix::new(req.n_samples, values, gene_names.to_vec(), None)?;
    Ok(SampleOutput {
        matrix,
        denoiser_calls: calls,
    })
}

/// One batch of the chain; `eta = None` means DDPM over `tau = 1..=T`.
fn run_chain<P: NoisePredictor + ?Sized>(
    model: &P,
    s: &NoiseSchedule,
    tau: &[usize],
    eta: Option<f64>,
    rows: usize,
    n: usize,
    rng: &mut Rng,
) -> Result<(Vec<f64>, usize)> {
    let mut x = vec![0.0; rows * n];
    rng.fill_normal(&mut x);
    let mut z = vec![0.0; rows * n];
    let mut calls = 0;
    for i in (0..tau.len()).rev() {
        let t = tau[i];
        let wrap = |e: Error| Error::Sampling {
            t,
            source: Box::new(e),
        };
        let xt = Tensor::new(vec![rows, n], x).map_err(wrap)?;
        let eps = model.predict_noise(&xt, t).map_err(wrap)?;
        calls += 1;
        let (xt, eps) = (xt.into_data(), eps.into_data());
        let mut next = Vec::with_capacity(rows * n);
        match eta {
            None => {
                if t > 1 {
                    rng.fill_normal(&mut z);
                }
                for r in 0..rows {
                    let sl = r * n..(r + 1) * n;
                    next.extend(
                        ddpm_step(&xt[sl.clone()], t, &eps[sl.clone()], &z[sl], s).map_err(wrap)?,
                    );
                }
            }
            Some(eta) => {
                let t_prev = if i == 0 { 0 } else { tau[i - 1] };
                let sigma = ddim_sigma(s.alpha_bar(t_prev), s.alpha_bar(t), eta).map_err(wrap)?;
                if sigma > 0.0 {
                    rng.fill_normal(&mut z);
                }
                for r in 0..rows {
                    let sl = r * n..(r + 1) * n;
                    next.extend(
                        ddim_step(&xt[sl.clone()], t, t_prev, &eps[sl.clone()], &z[sl], eta, s)
                            .map_err(wrap)?,
                    );
                }
            }
        }
        if next.iter().any(|v| !v.is_finite()) {
            return Err(wrap(Error::NonFinite { op: "sampler" }));
        }
        x = next;
    }
    Ok((x, calls))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::format;
    use core::cell::Cell;

    /// Predicts a fixed multiple of its input and counts calls.
    struct Linear {
        n: usize,
        steps: usize,
        k: f64,
        calls: Cell<usize>,
    }

    impl NoisePredictor for Linear {
        fn n_genes(&self) -> usize {
            self.n
        }
        fn timesteps(&self) -> usize {
            self.steps
        }
        fn predict_noise(&self, x: &Tensor, _t: usize) -> Result<Tensor> {
            self.calls.set(self.calls.get() + 1);
            Ok(x.map(|v| self.k * v))
        }
    }

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("g{i}")).collect()
    }

    fn two_step() -> NoiseSchedule {
        // β = (0.1, 0.2): ᾱ = (0.9, 0.72), α_2 = 0.8.
        NoiseSchedule::linear(2, 0.1, 0.2).unwrap()
    }

    #[test]
    fn ddpm_step_substitution() {
        let s = two_step();
        let x = ddpm_step(&[1.0], 2, &[0.0], &[0.0], &s).unwrap();
        assert!((x[0] - 1.0 / 0.8f64.sqrt()).abs() < 1e-12);
        assert!((x[0] - 1.11803).abs() < 1e-5);
    }

    #[test]
    fn ddpm_step_cancels() {
        let s = two_step();
        let e = 0.7;
        let xt = e * (1.0 - s.alpha(2)) / (1.0 - s.alpha_bar(2)).sqrt();
        let x = ddpm_step(&[xt], 2, &[e], &[0.0], &s).unwrap();
        assert!(x[0].abs() < 1e-15);
    }

    #[test]
    fn ddpm_last_step_ignores_noise() {
        let s = two_step();
        let a = ddpm_step(&[0.3], 1, &[0.1], &[5.0], &s).unwrap();
        let b = ddpm_step(&[0.3], 1, &[0.1], &[0.0], &s).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn ddpm_noise_scales_with_sqrt_beta() {
        let s = two_step();
        let mut rng = Rng::seed_from_u64(9);
        let n = 20000;
        let mut sum = 0.0;
        let mut sq = 0.0;
        for _ in 0..n {
            let z = rng.normal();
            let v = ddpm_step(&[0.0], 2, &[0.0], &[z], &s).unwrap()[0];
            sum += v;
            sq += v * v;
        }
        let mean = sum / n as f64;
        let var = sq / n as f64 - mean * mean;
        // Var of a sample variance of N(0, β) is about 2β²/n.
        let se = (2.0f64 / n as f64).sqrt() * 0.2;
        assert!((var - 0.2).abs() < 4.0 * se, "var={var}");
    }

    #[test]
    fn ddim_sigma_values() {
        assert_eq!(ddim_sigma(0.9, 0.72, 0.0).unwrap(), 0.0);
        let s1 = ddim_sigma(0.9, 0.72, 1.0).unwrap();
        assert!((s1 - 0.26726).abs() < 1e-5);
        assert!((s1 - (0.1f64 / 0.28 * 0.2).sqrt()).abs() < 1e-12);
        assert!((ddim_sigma(0.9, 0.72, 0.5).unwrap() - 0.5 * s1).abs() < 1e-15);
        assert!(matches!(ddim_sigma(0.9, 0.72, 1.5), Err(Error::InvalidEta(_))));
        assert!(matches!(ddim_sigma(0.9, 0.72, -0.1), Err(Error::InvalidEta(_))));
    }

    #[test]
    fn ddim_eta_one_matches_posterior_mean() {
        let s = NoiseSchedule::default_linear();
        let mut rng = Rng::seed_from_u64(2);
        for _ in 0..200 {
            let t = rng.below(1000) as usize + 1;
            let (x, e) = ([rng.normal() * 2.0], [rng.normal()]);
            let det = ddim_step(&x, t, t - 1, &e, &[0.0], 1.0, &s).unwrap();
            let x0 = predict_x0(&x, t, &e, &s).unwrap();
            let mu = s.posterior_mean(&x0, &x, t).unwrap();
            assert!((det[0] - mu[0]).abs() < 1e-10, "t={t}");
        }
    }

    #[test]
    fn predicted_x0_inverts_q_sample() {
        let s = NoiseSchedule::default_linear();
        let x0 = [1.5, -2.0, 0.25];
        let eps = [0.3, 1.1, -0.7];
        for t in [1, 10, 500, 1000] {
            let xt = s.q_sample(&x0, t, &eps).unwrap();
            let back = predict_x0(&xt, t, &eps, &s).unwrap();
            for (a, b) in back.iter().zip(&x0) {
                assert!((a - b).abs() < 1e-10);
            }
            let last = ddim_step(&xt, t, 0, &eps, &[], 0.0, &s).unwrap();
            assert_eq!(last, back);
        }
    }

    #[test]
    fn ddim_eta_zero_is_deterministic() {
        let s = NoiseSchedule::default_linear();
        let a = ddim_step(&[0.4], 500, 400, &[0.2], &[1.0], 0.0, &s).unwrap();
        let b = ddim_step(&[0.4], 500, 400, &[0.2], &[-3.0], 0.0, &s).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn tau_examples() {
        let t = make_tau(1000, 100, TauMode::Equidistant, 0.0).unwrap();
        assert_eq!(t.len(), 100);
        assert_eq!(t.tau()[0], 10);
        assert_eq!(t.tau()[98], 990);
        assert!(t.tau().iter().enumerate().all(|(i, &v)| v == 10 * (i + 1)));
        assert_eq!(t.acceleration_rate(), 10.0);

        let full = make_tau(1000, 1000, TauMode::Equidistant, 0.0).unwrap();
        assert_eq!(full.tau(), (1..=1000).collect::<Vec<_>>().as_slice());

        let q = make_tau(100, 4, TauMode::Quadratic, 0.0).unwrap();
        assert_eq!(q.tau(), &[6, 25, 56, 100]);

        assert!(matches!(
            make_tau(10, 11, TauMode::Equidistant, 0.0),
            Err(Error::InvalidSteps { .. })
        ));
        assert!(make_tau(10, 0, TauMode::Quadratic, 0.0).is_err());
        assert!(matches!(
            make_tau(10, 5, TauMode::Equidistant, 1.5),
            Err(Error::InvalidEta(_))
        ));
    }

    #[test]
    fn quadratic_tau_is_valid_for_many_sizes() {
        for t in [1, 2, 7, 100, 1000] {
            for n in 1..=t.min(60) {
                let q = make_tau(t, n, TauMode::Quadratic, 0.0).unwrap();
                assert!(q.tau()[0] >= 1 && *q.tau().last().unwrap() == t);
                let e = make_tau(t, n, TauMode::Equidistant, 0.0).unwrap();
                assert_eq!(e.len(), n);
            }
        }
    }

    #[test]
    fn tau_schedule_validation() {
        assert!(TauSchedule::new(vec![1, 3, 2], 0.0, 3).is_err());
        assert!(TauSchedule::new(vec![1, 2], 0.0, 3).is_err());
        assert!(TauSchedule::new(vec![0, 3], 0.0, 3).is_err());
        assert!(TauSchedule::new(vec![], 0.0, 3).is_err());
        assert!(TauSchedule::new(vec![2, 3], 0.0, 3).is_ok());
    }

    #[test]
    fn sample_shape_and_call_count() {
        let s = NoiseSchedule::linear(1000, 1e-4, 0.02).unwrap();
        let m = Linear { n: 16, steps: 1000, k: 0.1, calls: Cell::new(0) };
        let tau = make_tau(1000, 100, TauMode::Equidistant, 0.0).unwrap();
        let out = sample(&m, &s, &SampleRequest::ddim(3, tau, 1), &names(16)).unwrap();
        assert_eq!((out.matrix.n_cells(), out.matrix.n_genes()), (3, 16));
        assert_eq!(out.denoiser_calls, 100);
        assert_eq!(m.calls.get(), 100);
        assert!(out.matrix.values().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn postprocess_only_touches_negatives() {
        let s = NoiseSchedule::linear(20, 1e-3, 0.2).unwrap();
        let m = Linear { n: 6, steps: 20, k: 0.0, calls: Cell::new(0) };
        let mut req = SampleRequest::ddpm(10, 3);
        req.postprocess = false;
        let raw = sample(&m, &s, &req, &names(6)).unwrap().matrix;
        req.postprocess = true;
        let cut = sample(&m, &s, &req, &names(6)).unwrap().matrix;
        assert!(raw.values().iter().any(|&v| v < 0.0));
        for (r, c) in raw.values().iter().zip(cut.values()) {
            if *r < 0.0 {
                assert_eq!(*c, 0.0);
            } else {
                assert_eq!(r, c);
            }
        }
    }

    #[test]
    fn seeds_reproduce_and_differ() {
        let s = NoiseSchedule::linear(50, 1e-3, 0.05).unwrap();
        let m = Linear { n: 4, steps: 50, k: 0.2, calls: Cell::new(0) };
        let tau = make_tau(50, 10, TauMode::Equidistant, 0.0).unwrap();
        let run = |seed| sample(&m, &s, &SampleRequest::ddim(5, tau.clone(), seed), &names(4)).unwrap();
        assert_eq!(run(7), run(7));
        assert_ne!(run(7).matrix, run(8).matrix);
    }

    #[test]
    fn batching_splits_streams() {
        let s = NoiseSchedule::linear(30, 1e-3, 0.05).unwrap();
        let m = Linear { n: 4, steps: 30, k: 0.2, calls: Cell::new(0) };
        let mut req = SampleRequest::ddpm(5, 11);
        req.batch_size = Some(2);
        let out = sample(&m, &s, &req, &names(4)).unwrap();
        assert_eq!(out.denoiser_calls, 3 * 30);
        assert_eq!(out.matrix.n_cells(), 5);
    }

    #[test]
    fn request_errors() {
        let s = NoiseSchedule::linear(30, 1e-3, 0.05).unwrap();
        let m = Linear { n: 4, steps: 30, k: 0.2, calls: Cell::new(0) };
        assert!(sample(&m, &s, &SampleRequest::ddpm(0, 1), &names(4)).is_err());
        let mut req = SampleRequest::ddpm(2, 1);
        req.method = Method::Ddim;
        assert!(sample(&m, &s, &req, &names(4)).is_err());
        assert!(sample(&m, &s, &SampleRequest::ddpm(2, 1), &names(3)).is_err());
        let other = NoiseSchedule::linear(40, 1e-3, 0.05).unwrap();
        assert!(sample(&m, &other, &SampleRequest::ddpm(2, 1), &names(4)).is_err());
    }

    #[test]
    fn non_finite_reports_step() {
        let s = NoiseSchedule::linear(30, 1e-3, 0.05).unwrap();
        let m = Linear { n: 2, steps: 30, k: f64::INFINITY, calls: Cell::new(0) };
        let err = sample(&m, &s, &SampleRequest::ddpm(1, 1), &names(2)).unwrap_err();
        assert!(matches!(err, Error::Sampling { t: 30, .. }), "{err:?}");
        assert!(err.is_numeric());
    }
}
