//! The noise-prediction training loop.
//!
//! One epoch is a pass over all cells in a freshly shuffled order, cut into
//! mini-batches. For every cell in a batch a timestep `t ~ U{1..T}` and a noise
//! vector `ε ~ N(0, I)` are drawn, `x_t = √ᾱ_t x₀ + √(1 − ᾱ_t) ε` is formed,
//! and the loss is the mean squared error between `ε` and `ε_θ(x_t, t)`. Each
//! batch ends with one Adam step.
//!
//! All draws come from one generator, in this order per epoch: the shuffle,
//! then for each batch its timesteps followed by its noise values (row-major).

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::dataset::ExpressionMatrix;
use crate::denoiser::DenoiserModel;
use crate::error::{Error, Result};
use crate::optim::Adam;
use crate::rng::Rng;
use crate::schedule::NoiseSchedule;
use crate::tensor::{Graph, Tensor, Var};

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
    /// Write a checkpoint every this many epochs; 0 disables periodic
    /// checkpoints.
    pub checkpoint_every: usize,
    /// Report progress every this many epochs; 0 disables reporting.
    pub log_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: 64,
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
            checkpoint_every: 0,
            log_every: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return bad("learning_rate must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("beta1 and beta2 must lie in [0, 1)");
        }
        if !(self.epsilon > 0.0) {
            return bad("epsilon must be positive");
        }
        Ok(())
    }
}

/// Everything needed to continue a run exactly where it stopped.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    /// Completed epochs.
    pub epoch: usize,
    /// Mean loss of the last completed epoch.
    pub running_loss: f64,
    pub optimizer: Adam,
    pub rng: Rng,
    pub loss_history: Vec<f64>,
}

/// `batch` i.i.d. timesteps uniform on `1..=steps`.
pub fn draw_timesteps(batch: usize, steps: usize, rng: &mut Rng) -> Vec<usize> {
    (0..batch)
        .map(|_| rng.below(steps as u64) as usize + 1)
        .collect()
}

/// Noises a batch of clean rows: row `i` becomes `√ᾱ_{t_i} x₀ᵢ + √(1 − ᾱ_{t_i}) εᵢ`.
pub fn noise_batch(
    x0: &Tensor,
    t: &[usize],
    eps: &Tensor,
    schedule: &NoiseSchedule,
) -> Result<Tensor> {
    if x0.shape() != eps.shape() || x0.rows() != t.len() {
        return Err(Error::ShapeMismatch {
            op: "noise_batch",
            left: x0.shape().to_vec(),
            right: eps.shape().to_vec(),
        });
    }
    let mut out = Vec::with_capacity(x0.numel());
    for (i, &ti) in t.iter().enumerate() {
        out.extend(schedule.q_sample(x0.row(i), ti, eps.row(i))?);
    }
    Tensor::new(x0.shape().to_vec(), out)
}

/// Mean squared error between a prediction node and a fixed target.
pub fn mse(g: &mut Graph, pred: Var, target: &Tensor) -> Result<Var> {
    let tgt = g.constant(target.clone());
    let diff = g.sub(pred, tgt)?;
    let sq = g.mul(diff, diff)?;
    g.mean(sq)
}

/// The noise-prediction loss `mean ‖ε − ε_θ(x_t, t)‖²` over the batch (and
/// over genes), for any predictor that builds its output into `g`.
pub fn diffusion_loss<P>(
    g: &mut Graph,
    predict: P,
    x0: &Tensor,
    t: &[usize],
    eps: &Tensor,
    schedule: &NoiseSchedule,
) -> Result<Var>
where
    P: FnOnce(&mut Graph, &Tensor, &[usize]) -> Result<Var>,
{
    let xt = noise_batch(x0, t, eps, schedule)?;
    let pred = predict(g, &xt, t)?;
    let loss = mse(g, pred, eps)?;
    g.value(loss).ensure_finite("loss")?;
    Ok(loss)
}

/// Drives training one epoch at a time so callers can checkpoint between
/// epochs.
pub struct Trainer<'a> {
    data: &'a ExpressionMatrix,
    schedule: &'a NoiseSchedule,
    cfg: TrainConfig,
    state: TrainState,
}

impl<'a> Trainer<'a> {
    pub fn new(
        model: &DenoiserModel,
        data: &'a ExpressionMatrix,
        schedule: &'a NoiseSchedule,
        cfg: TrainConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        let state = TrainState {
            epoch: 0,
            running_loss: f64::NAN,
            optimizer: Adam::new(
                model.parameters(),
                cfg.learning_rate,
                cfg.beta1,
                cfg.beta2,
                cfg.epsilon,
            ),
            rng: Rng::seed_from_u64(cfg.seed),
            loss_history: Vec::new(),
        };
        Self::resume(model, data, schedule, cfg, state)
    }

    /// Continues from a saved state. The configuration may raise `epochs`.
    pub fn resume(
        model: &DenoiserModel,
        data: &'a ExpressionMatrix,
        schedule: &'a NoiseSchedule,
        cfg: TrainConfig,
        state: TrainState,
    ) -> Result<Self> {
        cfg.validate()?;
        if data.n_genes() != model.config().n_genes {
            return Err(Error::DimensionMismatch {
                left: data.n_genes(),
                right: model.config().n_genes,
            });
        }
        if schedule.steps() != model.timesteps() {
            return Err(Error::InvalidConfig(format!(
                "schedule has {} steps but the model was built for {}",
                schedule.steps(),
                model.timesteps()
            )));
        }
        if !state.optimizer.matches(model.parameters()) {
            return Err(Error::InvalidConfig(
                "optimizer state does not match the model".into(),
            ));
        }
        Ok(Trainer {
            data,
            schedule,
            cfg,
            state,
        })
    }

    pub fn state(&self) -> &TrainState {
        &self.state
    }

    pub fn into_state(self) -> TrainState {
        self.state
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn is_finished(&self) -> bool {
        self.state.epoch >= self.cfg.epochs
    }

    /// Runs one epoch and returns its mean loss.
    pub fn run_epoch(&mut self, model: &mut DenoiserModel) -> Result<f64> {
        let epoch = self.state.epoch + 1;
        let (n_cells, n_genes) = (self.data.n_cells(), self.data.n_genes());
        let steps = self.schedule.steps();
        let opt = &mut self.state.optimizer;
        opt.lr = self.cfg.learning_rate;
        opt.beta1 = self.cfg.beta1;
        opt.beta2 = self.cfg.beta2;
        opt.eps = self.cfg.epsilon;

        let rng = &mut self.state.rng;
        let mut order: Vec<usize> = (0..n_cells).collect();
        rng.shuffle(&mut order);

        let mut total = 0.0;
        for (step, cells) in order.chunks(self.cfg.batch_size).enumerate() {
            let wrap = |e: Error| Error::Training {
                epoch,
                step,
                source: alloc::boxed::Box::new(e),
            };
            let b = cells.len();
            let t = draw_timesteps(b, steps, rng);
            let mut eps = vec![0.0; b * n_genes];
            rng.fill_normal(&mut eps);
            let eps = Tensor::new(vec![b, n_genes], eps).map_err(wrap)?;
            let mut x0 = Vec::with_capacity(b * n_genes);
            for &c in cells {
                x0.extend_from_slice(self.data.row(c));
            }
            let x0 = Tensor::new(vec![b, n_genes], x0).map_err(wrap)?;

            let mut g = Graph::new();
            let vars = model.bind(&mut g);
            let loss = diffusion_loss(
                &mut g,
                |g, xt, t| model.forward(g, &vars, xt, t),
                &x0,
                &t,
                &eps,
                self.schedule,
            )
            .map_err(wrap)?;
            let grads = g.backward(loss).map_err(wrap)?;
            model.zero_grad();
            for (p, &v) in model.parameters_mut().iter_mut().zip(&vars) {
                if let Some(gr) = grads.get(v) {
                    p.accumulate_grad(gr);
                }
            }
            self.state
                .optimizer
                .step(model.parameters_mut())
                .map_err(wrap)?;
            total += g.value(loss).item() * b as f64;
        }
        // Gradients are transient; a trained model compares equal to its reload.
        model.zero_grad();
        let mean = total / n_cells as f64;
        self.state.epoch = epoch;
        self.state.running_loss = mean;
        self.state.loss_history.push(mean);
        Ok(mean)
    }
}

/// Trains for `cfg.epochs` epochs and returns the per-epoch mean losses.
pub fn train(
    model: &mut DenoiserModel,
    data: &ExpressionMatrix,
    schedule: &NoiseSchedule,
    cfg: TrainConfig,
) -> Result<Vec<f64>> {
    let mut trainer = Trainer::new(model, data, schedule, cfg)?;
    while !trainer.is_finished() {
        trainer.run_epoch(model)?;
    }
    Ok(trainer.into_state().loss_history)
}
