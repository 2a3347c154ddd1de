//! Classic two-view co-training with confident pseudo-labeling.
//!
//! Instances are addressed by a global index: the labeled pool occupies
//! `0..n_labeled` and the unlabeled pool `n_labeled..n_labeled + u0`. Each
//! iteration both models score the remaining unlabeled instances, each picks
//! its `floor(k_fraction * u0)` most confident ones, conflicting picks go back
//! to the unlabeled pool, and every other pick joins the *complementary*
//! view's labeled pool with the picking model's label. Both models are then
//! retrained from scratch on their grown pools.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::data::SslData;
use crate::error::{dim_err, Error, Result};
use crate::math::{hadamard_normalize, Matrix, ProbVector, Targets};
use crate::metrics::MetricsLog;
use crate::models::{predict_hard, ModelSpec, Network};
use crate::rng::{derive_seed, DEFAULT_SEED};
use crate::train::{accuracy_percent, fit, OptimConfig, TrainConfig};

pub const METHOD: &str = "cotrain";
pub const SUPERVISED_METHOD: &str = "supervised";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoTrainConfig {
    pub model: ModelSpec,
    /// Training steps for each from-scratch fit.
    pub steps_per_iteration: usize,
    /// Per-model selection quota as a fraction of the original unlabeled count.
    pub k_fraction: f64,
    pub max_iterations: usize,
    pub batch_size: usize,
    pub optim: OptimConfig,
    pub init_seed: u64,
    pub sample_seed: u64,
}

impl Default for CoTrainConfig {
    fn default() -> Self {
        Self {
            model: ModelSpec::SkipMlp {
                hidden_width: crate::models::DEFAULT_HIDDEN_WIDTH,
            },
            steps_per_iteration: 200,
            k_fraction: 0.1,
            max_iterations: 10,
            batch_size: 4096,
            optim: OptimConfig::default(),
            init_seed: DEFAULT_SEED,
            sample_seed: DEFAULT_SEED,
        }
    }
}

impl CoTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.k_fraction) {
            return Err(Error::Config(format!(
                "k_fraction {} must lie in [0, 1]",
                self.k_fraction
            )));
        }
        if self.steps_per_iteration == 0 {
            return Err(Error::Config("steps_per_iteration must be positive".to_string()));
        }
        if let ModelSpec::SkipMlp { hidden_width: 0 } = self.model {
            return Err(Error::Config("hidden_width must be positive".to_string()));
        }
        self.train_config().validate()
    }

    fn train_config(&self) -> TrainConfig {
        TrainConfig {
            steps: self.steps_per_iteration,
            batch_size: self.batch_size,
            optim: self.optim,
        }
    }
}

/// A labeled-pool member: global instance index and its (pseudo-)label.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PoolEntry {
    pub index: usize,
    pub label: usize,
}

/// One model's confident picks from the unlabeled pool.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoLabelBatch {
    /// View index (0 or 1) of the model that produced the labels.
    pub source: usize,
    pub indices: Vec<usize>,
    pub labels: Vec<usize>,
    /// Maximum softmax probability of the source model.
    pub confidences: Vec<f64>,
}

impl PseudoLabelBatch {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// The `quota` most confident candidates, by maximum class probability.
/// Equal confidences resolve to the lower global index.
pub fn select_confident(source: usize, probs: &Matrix, candidates: &[usize], quota: usize) -> PseudoLabelBatch {
    assert_eq!(probs.rows(), candidates.len(), "one probability row per candidate");
    let labels = predict_hard(probs);
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    let conf = |i: usize| probs.row(i)[labels[i]];
    order.sort_by(|&a, &b| conf(b).total_cmp(&conf(a)).then(candidates[a].cmp(&candidates[b])));
    order.truncate(quota);
    PseudoLabelBatch {
        source,
        indices: order.iter().map(|&i| candidates[i]).collect(),
        labels: order.iter().map(|&i| labels[i]).collect(),
        confidences: order.iter().map(|&i| conf(i)).collect(),
    }
}

/// Outcome of reconciling both models' picks.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Transfer {
    /// `to_pool[v]`: entries joining view `v`'s labeled pool.
    pub to_pool: [Vec<PoolEntry>; 2],
    /// Picked by both models with different labels; these stay unlabeled.
    pub conflicts: Vec<usize>,
    /// Every instance leaving the unlabeled pool, sorted.
    pub consumed: Vec<usize>,
}

pub fn resolve_selections(picks: [&PseudoLabelBatch; 2]) -> Transfer {
    let maps: [BTreeMap<usize, usize>; 2] = [0, 1].map(|v| {
        picks[v].indices.iter().copied().zip(picks[v].labels.iter().copied()).collect()
    });
    let conflicts: BTreeSet<usize> = maps[0]
        .iter()
        .filter(|(i, l)| maps[1].get(i).is_some_and(|other| other != *l))
        .map(|(i, _)| *i)
        .collect();
    let mut transfer = Transfer::default();
    let mut consumed = BTreeSet::new();
    for (v, pick) in picks.iter().enumerate() {
        for (&index, &label) in pick.indices.iter().zip(&pick.labels) {
            if conflicts.contains(&index) {
                continue;
            }
            transfer.to_pool[1 - v].push(PoolEntry { index, label });
            consumed.insert(index);
        }
    }
    transfer.conflicts = conflicts.into_iter().collect();
    transfer.consumed = consumed.into_iter().collect();
    transfer
}

/// Row-wise joint prediction of two models.
#[derive(Debug, Clone)]
pub struct JointPrediction {
    pub probs: Matrix,
    /// Rows whose element-wise product vanished and fell back to uniform.
    pub degenerate_rows: usize,
}

/// Re-normalized element-wise product of the two models' predictions on
/// aligned inputs.
pub fn joint_predict(f1: &Network, f2: &Network, x1: &Matrix, x2: &Matrix) -> Result<JointPrediction> {
    let p1 = f1.predict(x1)?;
    let p2 = f2.predict(x2)?;
    joint_from_probs(&p1, &p2)
}

pub fn joint_from_probs(p1: &Matrix, p2: &Matrix) -> Result<JointPrediction> {
    if p1.rows() != p2.rows() || p1.cols() != p2.cols() {
        return Err(dim_err(format!(
            "joint prediction of {}x{} and {}x{}",
            p1.rows(),
            p1.cols(),
            p2.rows(),
            p2.cols()
        )));
    }
    let mut out = Matrix::zeros(p1.rows(), p1.cols());
    let mut degenerate = 0;
    for r in 0..p1.rows() {
        let joint = match hadamard_normalize(p1.row(r), p2.row(r)) {
            Ok(p) => p,
            Err(Error::DegenerateProduct) => {
                degenerate += 1;
                ProbVector::uniform(p1.cols())
            }
            Err(e) => return Err(e),
        };
        out.row_mut(r).copy_from_slice(joint.as_slice());
    }
    Ok(JointPrediction {
        probs: out,
        degenerate_rows: degenerate,
    })
}

/// Per-model and joint test accuracy, in percent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub accuracy: [f64; 2],
    pub joint_accuracy: f64,
    pub degenerate_rows: usize,
}

/// Evaluate a model pair on a labeled paired set.
pub fn evaluate_pair(models: &[Network; 2], test: &crate::data::PairedViews) -> Result<Evaluation> {
    let labels = test.labels().ok_or_else(|| Error::Config("test set has no labels".to_string()))?;
    let p1 = models[0].predict(test.view1().embeddings())?;
    let p2 = models[1].predict(test.view2().embeddings())?;
    let joint = joint_from_probs(&p1, &p2)?;
    Ok(Evaluation {
        accuracy: [
            accuracy_percent(&predict_hard(&p1), labels),
            accuracy_percent(&predict_hard(&p2), labels),
        ],
        joint_accuracy: accuracy_percent(&predict_hard(&joint.probs), labels),
        degenerate_rows: joint.degenerate_rows,
    })
}

/// Pools, unlabeled set and model pair between iterations.
#[derive(Debug, Clone)]
pub struct CoTrainState {
    pub pools: [Vec<PoolEntry>; 2],
    /// Global indices still unlabeled.
    pub unlabeled: BTreeSet<usize>,
    pub original_unlabeled: usize,
    pub initial_labeled: usize,
    pub models: [Network; 2],
    pub iteration: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationReport {
    pub iteration: usize,
    /// Picks per model before conflict removal.
    pub picked: [usize; 2],
    pub conflicts: usize,
    /// Instances each model labeled for the other view.
    pub transferred: [usize; 2],
    pub unlabeled_remaining: usize,
    pub pool_sizes: [usize; 2],
}

/// Co-training driver over one dataset.
#[derive(Debug)]
pub struct CoTraining<'a> {
    data: &'a SslData,
    cfg: CoTrainConfig,
    /// Labeled rows followed by unlabeled rows, per view.
    train_views: [Matrix; 2],
    pub state: CoTrainState,
}

impl<'a> CoTraining<'a> {
    /// Build the pools and fit the iteration-0 models on the labeled set.
    pub fn new(data: &'a SslData, cfg: CoTrainConfig) -> Result<Self> {
        cfg.validate()?;
        let labels = data.labeled.labels().expect("SslData guarantees labels");
        if labels.is_empty() {
            return Err(Error::Config("labeled pool is empty".to_string()));
        }
        let n_l = data.labeled.len();
        let u0 = data.unlabeled.len();
        let train_views = [0, 1].map(|v| {
            data.labeled
                .view(v)
                .embeddings()
                .vcat(data.unlabeled.view(v).embeddings())
        });
        let [a, b] = train_views;
        let train_views = [a?, b?];
        let pool: Vec<PoolEntry> = labels
            .iter()
            .enumerate()
            .map(|(index, &label)| PoolEntry { index, label })
            .collect();
        let k = data.class_count();
        let models = [0, 1].map(|v| Network::classifier(cfg.model, data.labeled.view(v).dim(), k, 0));
        let mut engine = Self {
            data,
            cfg,
            train_views,
            state: CoTrainState {
                pools: [pool.clone(), pool],
                unlabeled: (n_l..n_l + u0).collect(),
                original_unlabeled: u0,
                initial_labeled: n_l,
                models,
                iteration: 0,
            },
        };
        engine.retrain()?;
        Ok(engine)
    }

    pub fn config(&self) -> &CoTrainConfig {
        &self.cfg
    }

    /// Per-model selection quota.
    pub fn quota(&self) -> usize {
        (self.cfg.k_fraction * self.state.original_unlabeled as f64).floor() as usize
    }

    fn fit_view(&self, v: usize) -> Result<Network> {
        let it = self.state.iteration as u64;
        let k = self.data.class_count();
        let pool = &self.state.pools[v];
        let idx: Vec<usize> = pool.iter().map(|e| e.index).collect();
        let y: Vec<usize> = pool.iter().map(|e| e.label).collect();
        let x = self.train_views[v].gather_rows(&idx);
        let mut net = Network::classifier(
            self.cfg.model,
            x.cols(),
            k,
            derive_seed(self.cfg.init_seed, &[it, v as u64]),
        );
        fit(
            &mut net,
            &x,
            Targets::Hard(&y),
            &self.cfg.train_config(),
            derive_seed(self.cfg.sample_seed, &[it, v as u64]),
        )?;
        Ok(net)
    }

    fn retrain(&mut self) -> Result<()> {
        let (a, b) = rayon::join(|| self.fit_view(0), || self.fit_view(1));
        self.state.models = [a?, b?];
        Ok(())
    }

    /// Score the unlabeled pool with both current models and pick each one's
    /// most confident instances.
    pub fn select(&self) -> Result<[PseudoLabelBatch; 2]> {
        let candidates: Vec<usize> = self.state.unlabeled.iter().copied().collect();
        let quota = self.quota();
        let mut picks = Vec::with_capacity(2);
        for v in 0..2 {
            let probs = self.state.models[v].predict(&self.train_views[v].gather_rows(&candidates))?;
            picks.push(select_confident(v, &probs, &candidates, quota));
        }
        let b = picks.pop().expect("two picks");
        let a = picks.pop().expect("two picks");
        Ok([a, b])
    }

    /// One round: select, resolve conflicts, grow the complementary pools,
    /// drop consumed instances from the unlabeled set, retrain both models.
    pub fn cotrain_iteration(&mut self) -> Result<IterationReport> {
        if self.state.unlabeled.is_empty() {
            return Err(Error::UnlabeledExhausted);
        }
        let picks = self.select()?;
        let transfer = resolve_selections([&picks[0], &picks[1]]);
        for v in 0..2 {
            self.state.pools[v].extend_from_slice(&transfer.to_pool[v]);
        }
        for i in &transfer.consumed {
            self.state.unlabeled.remove(i);
        }
        self.state.iteration += 1;
        self.retrain()?;
        Ok(IterationReport {
            iteration: self.state.iteration,
            picked: [picks[0].len(), picks[1].len()],
            conflicts: transfer.conflicts.len(),
            transferred: [transfer.to_pool[1].len(), transfer.to_pool[0].len()],
            unlabeled_remaining: self.state.unlabeled.len(),
            pool_sizes: [self.state.pools[0].len(), self.state.pools[1].len()],
        })
    }

    pub fn evaluate(&self) -> Result<Evaluation> {
        evaluate_pair(&self.state.models, &self.data.test)
    }

    pub fn into_models(self) -> [Network; 2] {
        self.state.models
    }
}

#[derive(Debug, Clone)]
pub struct CoTrainOutcome {
    pub log: MetricsLog,
    pub models: [Network; 2],
    pub reports: Vec<IterationReport>,
    /// Test evaluation after every iteration, starting with iteration 0.
    pub evaluations: Vec<Evaluation>,
}

impl CoTrainOutcome {
    pub fn final_joint_accuracy(&self) -> f64 {
        self.evaluations.last().map_or(0.0, |e| e.joint_accuracy)
    }

    pub fn best_joint_accuracy(&self) -> f64 {
        self.evaluations.iter().map(|e| e.joint_accuracy).fold(f64::NEG_INFINITY, f64::max)
    }
}

fn log_evaluation(log: &mut MetricsLog, method: &str, step: u64, it: u64, eval: &Evaluation) {
    log.push(step, it, method, "view1", "test", "accuracy", eval.accuracy[0]);
    log.push(step, it, method, "view2", "test", "accuracy", eval.accuracy[1]);
    log.push(step, it, method, "joint", "test", "accuracy", eval.joint_accuracy);
    if eval.degenerate_rows > 0 {
        log.push(step, it, method, "joint", "test", "degenerate_rows", eval.degenerate_rows as f64);
    }
}

/// Both view models trained on the labeled set only, with joint evaluation.
/// Identical to iteration 0 of [`run_cotraining`].
pub fn run_supervised(data: &SslData, cfg: &CoTrainConfig) -> Result<CoTrainOutcome> {
    let cfg = CoTrainConfig {
        max_iterations: 0,
        ..*cfg
    };
    run_with_method(data, &cfg, SUPERVISED_METHOD)
}

/// Fit on the labeled set, then co-train until the unlabeled pool is
/// exhausted or `max_iterations` rounds have run. Every iteration (including
/// the supervised iteration 0) is evaluated and logged.
pub fn run_cotraining(data: &SslData, cfg: &CoTrainConfig) -> Result<CoTrainOutcome> {
    run_with_method(data, cfg, METHOD)
}

fn run_with_method(data: &SslData, cfg: &CoTrainConfig, method: &str) -> Result<CoTrainOutcome> {
    cfg.validate()?;
    let mut engine = CoTraining::new(data, *cfg)?;
    let mut log = MetricsLog::new();
    let steps = cfg.steps_per_iteration as u64;
    let first = engine.evaluate()?;
    log_evaluation(&mut log, method, steps, 0, &first);
    for v in 0..2 {
        log.push(steps, 0, method, VIEW_IDS[v], "labeled", "pool_size", engine.state.pools[v].len() as f64);
    }
    log.push(steps, 0, method, "both", "unlabeled", "remaining", engine.state.unlabeled.len() as f64);
    let mut evaluations = vec![first];
    let mut reports = Vec::new();
    for _ in 0..cfg.max_iterations {
        if engine.state.unlabeled.is_empty() {
            break;
        }
        let report = engine.cotrain_iteration()?;
        let it = report.iteration as u64;
        let step = (it + 1) * steps;
        let eval = engine.evaluate()?;
        log_evaluation(&mut log, method, step, it, &eval);
        for v in 0..2 {
            log.push(step, it, method, VIEW_IDS[v], "unlabeled", "selected", (report.picked[v] - report.conflicts) as f64);
            log.push(step, it, method, VIEW_IDS[v], "labeled", "pool_size", report.pool_sizes[v] as f64);
        }
        log.push(step, it, method, "both", "unlabeled", "conflicts", report.conflicts as f64);
        log.push(step, it, method, "both", "unlabeled", "remaining", report.unlabeled_remaining as f64);
        evaluations.push(eval);
        reports.push(report);
    }
    Ok(CoTrainOutcome {
        log,
        models: engine.into_models(),
        reports,
        evaluations,
    })
}

pub(crate) const VIEW_IDS: [&str; 2] = ["view1", "view2"];
