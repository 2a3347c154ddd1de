//! Supervised fitting: batch sampling, the optimizer/schedule pair, and
//! accuracy evaluation. Co-training retraining, the MCT warmup and the
//! diagnostic probes all go through [`Trainer`].

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::math::{AdamConfig, AdamState, LossEma, Matrix, PlateauSchedule, Targets};
use crate::models::{predict_hard, Network, ParamSet};
use crate::rng::{seeded, SeededRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateRule {
    #[default]
    Adam,
    /// Plain `theta -= lr * g`.
    Sgd,
}

/// Optimizer and learning-rate schedule settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimConfig {
    pub rule: UpdateRule,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub plateau_patience: u32,
    pub plateau_factor: f64,
    /// Decay of the loss moving average the plateau schedule monitors.
    pub loss_ema_decay: f64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self {
            rule: UpdateRule::Adam,
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            plateau_patience: 10,
            plateau_factor: 0.5,
            loss_ema_decay: 0.9,
        }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("beta1 and beta2 must lie in [0, 1)");
        }
        if !(self.epsilon > 0.0) {
            return bad("epsilon must be positive");
        }
        if !(self.plateau_factor > 0.0 && self.plateau_factor < 1.0) {
            return bad("plateau_factor must lie in (0, 1)");
        }
        if self.plateau_patience == 0 {
            return bad("plateau_patience must be positive");
        }
        if !(0.0..1.0).contains(&self.loss_ema_decay) {
            return bad("loss_ema_decay must lie in [0, 1)");
        }
        Ok(())
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub optim: OptimConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 1000,
            batch_size: 4096,
            optim: OptimConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".to_string()));
        }
        self.optim.validate()
    }
}

/// Parameter update rule with its state.
#[derive(Debug, Clone, PartialEq)]
pub enum Optimizer {
    Sgd,
    Adam(AdamState),
}

impl Optimizer {
    pub fn new(cfg: &OptimConfig, len: usize) -> Self {
        match cfg.rule {
            UpdateRule::Sgd => Optimizer::Sgd,
            UpdateRule::Adam => Optimizer::Adam(AdamState::new(len, cfg.adam())),
        }
    }

    /// Apply one descent step along `grads` with learning rate `lr`.
    pub fn apply(&mut self, params: &mut ParamSet, grads: &[f64], lr: f64) -> Result<()> {
        match self {
            Optimizer::Sgd => {
                if grads.len() != params.len() {
                    return Err(dim_err(format!(
                        "sgd: {} grads for {} params",
                        grads.len(),
                        params.len()
                    )));
                }
                for (p, g) in params.values_mut().iter_mut().zip(grads) {
                    *p -= lr * g;
                }
                Ok(())
            }
            Optimizer::Adam(state) => {
                state.lr = lr;
                state.step(params.values_mut(), grads)
            }
        }
    }
}

/// Epoch-style sampling without replacement; reshuffles once the remaining
/// indices cannot fill a batch. Batches hold `min(batch_size, n)` indices.
#[derive(Debug, Clone)]
pub struct BatchSampler {
    n: usize,
    batch_size: usize,
    order: Vec<usize>,
    cursor: usize,
    rng: SeededRng,
}

impl BatchSampler {
    pub fn new(n: usize, batch_size: usize, seed: u64) -> Self {
        Self {
            n,
            batch_size: batch_size.min(n),
            order: Vec::new(),
            cursor: 0,
            rng: seeded(seed),
        }
    }

    pub fn next_batch(&mut self) -> Vec<usize> {
        if self.n == 0 {
            return Vec::new();
        }
        if self.order.is_empty() || self.cursor + self.batch_size > self.n {
            self.order = (0..self.n).collect();
            self.order.shuffle(&mut self.rng);
            self.cursor = 0;
        }
        let batch = self.order[self.cursor..self.cursor + self.batch_size].to_vec();
        self.cursor += self.batch_size;
        batch
    }
}

/// Targets gathered for one batch.
#[derive(Debug, Clone)]
pub enum BatchTargets {
    Hard(Vec<usize>),
    Soft(Matrix),
}

impl BatchTargets {
    pub fn gather(targets: Targets<'_>, indices: &[usize]) -> Self {
        match targets {
            Targets::Hard(y) => BatchTargets::Hard(indices.iter().map(|&i| y[i]).collect()),
            Targets::Soft(m) => BatchTargets::Soft(m.gather_rows(indices)),
        }
    }

    pub fn as_targets(&self) -> Targets<'_> {
        match self {
            BatchTargets::Hard(y) => Targets::Hard(y),
            BatchTargets::Soft(m) => Targets::Soft(m),
        }
    }
}

/// Optimizer, plateau schedule (on a moving average of the training loss) and
/// batch sampler for one model.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub optimizer: Optimizer,
    pub schedule: PlateauSchedule,
    pub ema: LossEma,
    pub sampler: BatchSampler,
}

impl Trainer {
    pub fn new(net: &Network, n: usize, cfg: &TrainConfig, seed: u64) -> Self {
        Self {
            optimizer: Optimizer::new(&cfg.optim, net.params().len()),
            schedule: PlateauSchedule::new(
                cfg.optim.learning_rate,
                cfg.optim.plateau_patience,
                cfg.optim.plateau_factor,
            ),
            ema: LossEma::new(cfg.optim.loss_ema_decay),
            sampler: BatchSampler::new(n, cfg.batch_size, seed),
        }
    }

    pub fn lr(&self) -> f64 {
        self.schedule.current_lr
    }

    /// Feed a training loss to the moving average and the schedule.
    pub fn observe_loss(&mut self, loss: f64) {
        let smoothed = self.ema.update(loss);
        self.schedule.update(smoothed);
    }

    /// One supervised step on a freshly sampled batch; returns the batch loss.
    pub fn step(&mut self, net: &mut Network, x: &Matrix, targets: Targets<'_>) -> Result<f64> {
        let idx = self.sampler.next_batch();
        let xb = x.gather_rows(&idx);
        let tb = BatchTargets::gather(targets, &idx);
        let (out, trace) = net.forward(&xb)?;
        let loss = net.loss(&out, tb.as_targets())?;
        let grads = net.backward(&trace, tb.as_targets(), 1.0)?;
        let lr = self.lr();
        self.optimizer.apply(net.params_mut(), &grads, lr)?;
        self.observe_loss(loss);
        Ok(loss)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitReport {
    pub steps: usize,
    pub last_loss: f64,
    pub final_lr: f64,
}

/// Train `net` on all rows of `x` for `cfg.steps` steps.
pub fn fit(net: &mut Network, x: &Matrix, targets: Targets<'_>, cfg: &TrainConfig, seed: u64) -> Result<FitReport> {
    cfg.validate()?;
    if targets.len() != x.rows() {
        return Err(dim_err(format!("{} targets for {} rows", targets.len(), x.rows())));
    }
    if x.rows() == 0 && cfg.steps > 0 {
        return Err(Error::Config("cannot fit on an empty training set".to_string()));
    }
    let mut trainer = Trainer::new(net, x.rows(), cfg, seed);
    let mut last_loss = f64::NAN;
    for _ in 0..cfg.steps {
        last_loss = trainer.step(net, x, targets)?;
    }
    Ok(FitReport {
        steps: cfg.steps,
        last_loss,
        final_lr: trainer.lr(),
    })
}

/// Top-1 accuracy in percent.
pub fn accuracy_percent(predicted: &[usize], truth: &[usize]) -> f64 {
    assert_eq!(predicted.len(), truth.len(), "prediction/label count mismatch");
    if truth.is_empty() {
        return 0.0;
    }
    let correct = predicted.iter().zip(truth).filter(|(p, t)| p == t).count();
    100.0 * correct as f64 / truth.len() as f64
}

/// Top-1 accuracy of a classifier in percent.
pub fn evaluate(net: &Network, x: &Matrix, labels: &[usize]) -> Result<f64> {
    let probs = net.predict(x)?;
    Ok(accuracy_percent(&predict_hard(&probs), labels))
}
