//! Meta co-training: two view-models that act as teacher and student for
//! each other.
//!
//! Each post-warmup step every model
//! 1. predicts its unlabeled view and samples pseudo-labels from it,
//! 2. takes a student step towards the *other* model's pseudo-labels,
//! 3. measures its labeled loss gradient after that step,
//! 4. takes a teacher step on its own pseudo-labels, scaled by how well the
//!    other model's student step aligned with that model's labeled gradient,
//! 5. takes a plain supervised step on its labeled batch.
//!
//! The labeled and unlabeled pools never change.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cotrain::{evaluate_pair, Evaluation, VIEW_IDS};
use crate::data::SslData;
use crate::error::{dim_err, Error, Result};
use crate::math::{grad_dot, mean_cross_entropy, Matrix, Targets};
use crate::metrics::MetricsLog;
use crate::models::{sample_pseudo_labels, ForwardTrace, ModelSpec, Network};
use crate::rng::{derive_seed, seeded, DEFAULT_SEED};
use crate::train::{BatchSampler, OptimConfig, Optimizer, TrainConfig, Trainer};

pub const METHOD: &str = "mct";

/// Parameters at which the labeled-batch gradient is taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabeledEval {
    /// After the student step.
    #[default]
    Updated,
    /// Start-of-step parameters.
    Start,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MctConfig {
    pub model: ModelSpec,
    pub total_steps: usize,
    pub warmup_steps: usize,
    /// Labeled batch size per view.
    pub batch_size: usize,
    pub unlabeled_batch_size: usize,
    pub optim: OptimConfig,
    pub supervised_weight: f64,
    pub labeled_eval: LabeledEval,
    /// Test evaluation cadence in steps; the end of warmup and the last step
    /// are always evaluated.
    pub eval_every: usize,
    pub init_seed: u64,
    pub sample_seed: u64,
}

impl Default for MctConfig {
    fn default() -> Self {
        Self {
            model: ModelSpec::SkipMlp {
                hidden_width: crate::models::DEFAULT_HIDDEN_WIDTH,
            },
            total_steps: 1000,
            warmup_steps: 200,
            batch_size: 4096,
            unlabeled_batch_size: 4096,
            optim: OptimConfig::default(),
            supervised_weight: 1.0,
            labeled_eval: LabeledEval::Updated,
            eval_every: 10,
            init_seed: DEFAULT_SEED,
            sample_seed: DEFAULT_SEED,
        }
    }
}

impl MctConfig {
    pub fn validate(&self) -> Result<()> {
        if self.warmup_steps > self.total_steps {
            return Err(Error::Config(format!(
                "warmup_steps {} exceeds total_steps {}",
                self.warmup_steps, self.total_steps
            )));
        }
        if self.unlabeled_batch_size == 0 {
            return Err(Error::Config("unlabeled_batch_size must be positive".to_string()));
        }
        if self.eval_every == 0 {
            return Err(Error::Config("eval_every must be positive".to_string()));
        }
        if !(self.supervised_weight >= 0.0 && self.supervised_weight.is_finite()) {
            return Err(Error::Config("supervised_weight must be non-negative".to_string()));
        }
        if let ModelSpec::SkipMlp { hidden_width: 0 } = self.model {
            return Err(Error::Config("hidden_width must be positive".to_string()));
        }
        self.train_config().validate()
    }

    fn train_config(&self) -> TrainConfig {
        TrainConfig {
            steps: self.total_steps,
            batch_size: self.batch_size,
            optim: self.optim,
        }
    }

    /// Initialization seed of view `v`'s model.
    pub fn init_seed_for(&self, v: usize) -> u64 {
        derive_seed(self.init_seed, &[v as u64])
    }

    /// Seed of view `v`'s labeled batch sampler.
    pub fn labeled_seed_for(&self, v: usize) -> u64 {
        derive_seed(self.sample_seed, &[1, v as u64])
    }

    fn unlabeled_seed(&self) -> u64 {
        derive_seed(self.sample_seed, &[2])
    }

    fn pseudo_label_seed(&self) -> u64 {
        derive_seed(self.sample_seed, &[3])
    }
}

/// Settings of a single step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepConfig {
    /// Learning rate of each model for this step.
    pub lr: [f64; 2],
    pub supervised_weight: f64,
    pub labeled_eval: LabeledEval,
}

/// Batches for one step; index 0 is view 1.
#[derive(Debug, Clone)]
pub struct StepBatch {
    pub labeled_x: [Matrix; 2],
    pub labeled_y: [Vec<usize>; 2],
    /// Row `i` of both matrices is the same instance.
    pub unlabeled: [Matrix; 2],
}

impl StepBatch {
    fn validate(&self, models: &[Network; 2]) -> Result<()> {
        if self.unlabeled[0].rows() != self.unlabeled[1].rows() {
            return Err(Error::Alignment(format!(
                "unlabeled views have {} and {} rows",
                self.unlabeled[0].rows(),
                self.unlabeled[1].rows()
            )));
        }
        for v in 0..2 {
            if self.labeled_x[v].rows() != self.labeled_y[v].len() {
                return Err(dim_err(format!(
                    "view {}: {} labeled rows, {} labels",
                    v + 1,
                    self.labeled_x[v].rows(),
                    self.labeled_y[v].len()
                )));
            }
            if models[v].input_dim() != self.unlabeled[v].cols() {
                return Err(dim_err(format!("view {} width does not match its model", v + 1)));
            }
        }
        Ok(())
    }
}

/// Per-step record; index 0 is view 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepTrace {
    pub h: [f64; 2],
    /// Cross-entropy of each model's unlabeled predictions against the other
    /// model's pseudo-labels.
    pub student_loss: [f64; 2],
    /// Cross-entropy of each model's unlabeled predictions against its own
    /// pseudo-labels.
    pub teacher_loss: [f64; 2],
    /// Labeled-batch cross-entropy at the labeled evaluation point.
    pub supervised_loss: [f64; 2],
}

/// Gradient of the cross-entropy between `labels` and `net`'s predictions on
/// `x`, with the loss itself.
pub fn label_gradient(net: &Network, x: &Matrix, labels: &[usize]) -> Result<(Vec<f64>, f64)> {
    let (out, trace) = net.forward(x)?;
    let loss = mean_cross_entropy(&out, Targets::Hard(labels))?;
    Ok((net.backward(&trace, Targets::Hard(labels), 1.0)?, loss))
}

/// One full step with freshly sampled pseudo-labels: all of view 1's labels
/// are drawn before view 2's, from `rng`.
///
/// On success both models and optimizers are updated. A non-finite `h`
/// leaves them untouched and returns [`Error::NonFiniteH`].
pub fn mct_step<R: Rng + ?Sized>(
    models: &mut [Network; 2],
    optimizers: &mut [Optimizer; 2],
    batch: &StepBatch,
    cfg: &StepConfig,
    rng: &mut R,
) -> Result<StepTrace> {
    batch.validate(models)?;
    let fwd0 = models[0].forward(&batch.unlabeled[0])?;
    let fwd1 = models[1].forward(&batch.unlabeled[1])?;
    let pl0 = sample_pseudo_labels(&fwd0.0, rng);
    let pl1 = sample_pseudo_labels(&fwd1.0, rng);
    step_inner(models, optimizers, batch, [fwd0, fwd1], [&pl0, &pl1], cfg)
}

/// [`mct_step`] with the pseudo-labels supplied by the caller.
pub fn mct_step_with_labels(
    models: &mut [Network; 2],
    optimizers: &mut [Optimizer; 2],
    batch: &StepBatch,
    pseudo_labels: [&[usize]; 2],
    cfg: &StepConfig,
) -> Result<StepTrace> {
    batch.validate(models)?;
    let fwd0 = models[0].forward(&batch.unlabeled[0])?;
    let fwd1 = models[1].forward(&batch.unlabeled[1])?;
    step_inner(models, optimizers, batch, [fwd0, fwd1], pseudo_labels, cfg)
}

struct Phase {
    student_grad: Vec<f64>,
    teacher_grad: Vec<f64>,
    labeled_grad: Vec<f64>,
    student_loss: f64,
    teacher_loss: f64,
    supervised_loss: f64,
    model: Network,
    optimizer: Optimizer,
}

/// Everything up to the teacher barrier for view `v`, on working copies.
fn phase(
    net: &Network,
    optimizer: &Optimizer,
    fwd: &(Matrix, ForwardTrace),
    own_pl: &[usize],
    other_pl: &[usize],
    labeled_x: &Matrix,
    labeled_y: &[usize],
    lr: f64,
    eval: LabeledEval,
) -> Result<Phase> {
    let (probs, trace) = fwd;
    if own_pl.len() != probs.rows() || other_pl.len() != probs.rows() {
        return Err(dim_err("one pseudo-label per unlabeled row is required"));
    }
    let student_grad = net.backward(trace, Targets::Hard(other_pl), 1.0)?;
    let teacher_grad = net.backward(trace, Targets::Hard(own_pl), 1.0)?;
    let student_loss = mean_cross_entropy(probs, Targets::Hard(other_pl))?;
    let teacher_loss = mean_cross_entropy(probs, Targets::Hard(own_pl))?;
    let mut model = net.clone();
    let mut optimizer = optimizer.clone();
    optimizer.apply(model.params_mut(), &student_grad, lr)?;
    let at = match eval {
        LabeledEval::Updated => &model,
        LabeledEval::Start => net,
    };
    let (labeled_grad, supervised_loss) = label_gradient(at, labeled_x, labeled_y)?;
    Ok(Phase {
        student_grad,
        teacher_grad,
        labeled_grad,
        student_loss,
        teacher_loss,
        supervised_loss,
        model,
        optimizer,
    })
}

fn step_inner(
    models: &mut [Network; 2],
    optimizers: &mut [Optimizer; 2],
    batch: &StepBatch,
    fwd: [(Matrix, ForwardTrace); 2],
    pl: [&[usize]; 2],
    cfg: &StepConfig,
) -> Result<StepTrace> {
    let run = |v: usize| {
        phase(
            &models[v],
            &optimizers[v],
            &fwd[v],
            pl[v],
            pl[1 - v],
            &batch.labeled_x[v],
            &batch.labeled_y[v],
            cfg.lr[v],
            cfg.labeled_eval,
        )
    };
    let (a, b) = rayon::join(|| run(0), || run(1));
    let mut phases = [a?, b?];

    // Model v's teacher signal: the other model's labeled gradient after
    // its student step on v's pseudo-labels, against that student gradient.
    let h = [
        grad_dot(&phases[1].labeled_grad, &phases[1].student_grad)?,
        grad_dot(&phases[0].labeled_grad, &phases[0].student_grad)?,
    ];
    if !h.iter().all(|x| x.is_finite()) {
        return Err(Error::NonFiniteH { h1: h[0], h2: h[1] });
    }

    for (v, p) in phases.iter_mut().enumerate() {
        let scaled: Vec<f64> = p.teacher_grad.iter().map(|g| h[v] * g).collect();
        p.optimizer.apply(p.model.params_mut(), &scaled, cfg.lr[v])?;
        if cfg.supervised_weight != 0.0 {
            let sup: Vec<f64> = p.labeled_grad.iter().map(|g| cfg.supervised_weight * g).collect();
            p.optimizer.apply(p.model.params_mut(), &sup, cfg.lr[v])?;
        }
    }

    let trace = StepTrace {
        h,
        student_loss: [phases[0].student_loss, phases[1].student_loss],
        teacher_loss: [phases[0].teacher_loss, phases[1].teacher_loss],
        supervised_loss: [phases[0].supervised_loss, phases[1].supervised_loss],
    };
    let [p0, p1] = phases;
    models[0] = p0.model;
    models[1] = p1.model;
    optimizers[0] = p0.optimizer;
    optimizers[1] = p1.optimizer;
    Ok(trace)
}

#[derive(Debug, Clone)]
pub struct MctOutcome {
    pub log: MetricsLog,
    pub models: [Network; 2],
    /// One entry per completed post-warmup step.
    pub traces: Vec<StepTrace>,
    /// `(step, evaluation)` in step order.
    pub evaluations: Vec<(usize, Evaluation)>,
    pub warmup_joint_accuracy: f64,
    pub final_joint_accuracy: f64,
    pub best_joint_accuracy: f64,
    /// Steps skipped because `h` was not finite.
    pub nonfinite_steps: usize,
}

fn log_evaluation(log: &mut MetricsLog, step: u64, eval: &Evaluation) {
    log.push(step, 0, METHOD, "view1", "test", "accuracy", eval.accuracy[0]);
    log.push(step, 0, METHOD, "view2", "test", "accuracy", eval.accuracy[1]);
    log.push(step, 0, METHOD, "joint", "test", "accuracy", eval.joint_accuracy);
    if eval.degenerate_rows > 0 {
        log.push(step, 0, METHOD, "joint", "test", "degenerate_rows", eval.degenerate_rows as f64);
    }
}

/// Supervised warmup for `warmup_steps`, then meta co-training steps until
/// `total_steps`. The plateau schedule runs from the first step on a moving
/// average of each model's labeled loss.
pub fn run_mct(data: &SslData, cfg: &MctConfig) -> Result<MctOutcome> {
    cfg.validate()?;
    let k = data.class_count();
    let labels = data.labeled.labels().expect("SslData guarantees labels");
    if labels.is_empty() || data.unlabeled.is_empty() {
        return Err(Error::Config("labeled and unlabeled pools must be non-empty".to_string()));
    }
    let lx = [data.labeled.view1().embeddings(), data.labeled.view2().embeddings()];
    let ux = [data.unlabeled.view1().embeddings(), data.unlabeled.view2().embeddings()];
    let mut models = [0, 1].map(|v| Network::classifier(cfg.model, lx[v].cols(), k, cfg.init_seed_for(v)));
    let train_cfg = cfg.train_config();
    let mut trainers = [0, 1].map(|v| Trainer::new(&models[v], labels.len(), &train_cfg, cfg.labeled_seed_for(v)));
    let mut unlabeled_sampler = BatchSampler::new(data.unlabeled.len(), cfg.unlabeled_batch_size, cfg.unlabeled_seed());
    let mut pl_rng = seeded(cfg.pseudo_label_seed());

    let mut log = MetricsLog::new();
    let mut traces = Vec::new();
    let mut evaluations = Vec::new();
    let mut nonfinite_steps = 0;
    let mut warmup_joint = None;

    if cfg.warmup_steps == 0 {
        let eval = evaluate_pair(&models, &data.test)?;
        log_evaluation(&mut log, 0, &eval);
        warmup_joint = Some(eval.joint_accuracy);
        evaluations.push((0, eval));
    }

    for t in 1..=cfg.total_steps {
        let step = t as u64;
        if t <= cfg.warmup_steps {
            let [m0, m1] = &mut models;
            let [t0, t1] = &mut trainers;
            let (a, b) = rayon::join(
                || t0.step(m0, lx[0], Targets::Hard(labels)),
                || t1.step(m1, lx[1], Targets::Hard(labels)),
            );
            let losses = [a?, b?];
            for v in 0..2 {
                log.push(step, 0, METHOD, VIEW_IDS[v], "labeled", "loss", losses[v]);
            }
        } else {
            let lidx = [trainers[0].sampler.next_batch(), trainers[1].sampler.next_batch()];
            let uidx = unlabeled_sampler.next_batch();
            let batch = StepBatch {
                labeled_x: [lx[0].gather_rows(&lidx[0]), lx[1].gather_rows(&lidx[1])],
                labeled_y: [0, 1].map(|v| lidx[v].iter().map(|&i| labels[i]).collect()),
                unlabeled: [ux[0].gather_rows(&uidx), ux[1].gather_rows(&uidx)],
            };
            let step_cfg = StepConfig {
                lr: [trainers[0].lr(), trainers[1].lr()],
                supervised_weight: cfg.supervised_weight,
                labeled_eval: cfg.labeled_eval,
            };
            let mut optimizers = [trainers[0].optimizer.clone(), trainers[1].optimizer.clone()];
            match mct_step(&mut models, &mut optimizers, &batch, &step_cfg, &mut pl_rng) {
                Ok(trace) => {
                    let [o0, o1] = optimizers;
                    trainers[0].optimizer = o0;
                    trainers[1].optimizer = o1;
                    for v in 0..2 {
                        trainers[v].observe_loss(trace.supervised_loss[v]);
                        log.push(step, 0, METHOD, VIEW_IDS[v], "labeled", "loss", trace.supervised_loss[v]);
                        log.push(step, 0, METHOD, VIEW_IDS[v], "unlabeled", "h", trace.h[v]);
                    }
                    traces.push(trace);
                }
                Err(Error::NonFiniteH { .. }) => {
                    nonfinite_steps += 1;
                    log.push(step, 0, METHOD, "both", "unlabeled", "nonfinite_h", 1.0);
                }
                Err(e) => return Err(e),
            }
        }
        if t % cfg.eval_every == 0 || t == cfg.warmup_steps || t == cfg.total_steps {
            let eval = evaluate_pair(&models, &data.test)?;
            log_evaluation(&mut log, step, &eval);
            if t == cfg.warmup_steps {
                warmup_joint = Some(eval.joint_accuracy);
            }
            evaluations.push((t, eval));
        }
    }

    let final_joint = evaluations.last().map_or(0.0, |(_, e)| e.joint_accuracy);
    let best_joint = evaluations
        .iter()
        .map(|(_, e)| e.joint_accuracy)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(MctOutcome {
        log,
        models,
        traces,
        evaluations,
        warmup_joint_accuracy: warmup_joint.unwrap_or(final_joint),
        final_joint_accuracy: final_joint,
        best_joint_accuracy: best_joint,
        nonfinite_steps,
    })
}
