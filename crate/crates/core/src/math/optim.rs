use crate::error::{dim_err, Result};

/// Adam hyperparameters. Defaults: lr 1e-4, betas (0.9, 0.999), eps 1e-8.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Learning rate applied by the next step; schedules overwrite it.
    pub lr: f64,
}

impl AdamState {
    pub fn new(len: usize, config: AdamConfig) -> Self {
        assert!(
            (0.0..1.0).contains(&config.beta1) && (0.0..1.0).contains(&config.beta2),
            "Adam betas must lie in [0, 1)"
        );
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
            beta1: config.beta1,
            beta2: config.beta2,
            epsilon: config.epsilon,
            lr: config.lr,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != grads.len() || params.len() != self.m.len() {
            return Err(dim_err(format!(
                "adam: {} params, {} grads, {} moments",
                params.len(),
                grads.len(),
                self.m.len()
            )));
        }
        self.t += 1;
        let t = self.t as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.epsilon);
        }
        Ok(())
    }
}

/// Reduce-on-plateau learning-rate schedule over a loss (lower is better).
#[derive(Debug, Clone, PartialEq)]
pub struct PlateauSchedule {
    pub patience: u32,
    pub factor: f64,
    pub best_metric: f64,
    pub stale_steps: u32,
    pub current_lr: f64,
}

impl PlateauSchedule {
    pub fn new(lr: f64, patience: u32, factor: f64) -> Self {
        assert!(lr > 0.0, "learning rate must be positive");
        assert!(factor > 0.0 && factor < 1.0, "decay factor must lie in (0, 1)");
        Self {
            patience,
            factor,
            best_metric: f64::INFINITY,
            stale_steps: 0,
            current_lr: lr,
        }
    }

    pub fn update(&mut self, metric: f64) -> f64 {
        if metric < self.best_metric {
            self.best_metric = metric;
            self.stale_steps = 0;
        } else {
            self.stale_steps += 1;
            if self.stale_steps >= self.patience {
                self.current_lr *= self.factor;
                self.stale_steps = 0;
            }
        }
        self.current_lr
    }
}

/// Exponential moving average; the first observation seeds it.
#[derive(Debug, Clone, PartialEq)]
pub struct LossEma {
    pub decay: f64,
    value: Option<f64>,
}

impl LossEma {
    pub fn new(decay: f64) -> Self {
        Self { decay, value: None }
    }

    pub fn update(&mut self, x: f64) -> f64 {
        let next = match self.value {
            None => x,
            Some(prev) => self.decay * prev + (1.0 - self.decay) * x,
        };
        self.value = Some(next);
        next
    }

    pub fn value(&self) -> Option<f64> {
        self.value
    }
}
