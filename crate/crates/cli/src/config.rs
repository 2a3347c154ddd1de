//! Experiment configuration: a flat JSON object. Every key is optional
//! except `method`; defaults follow the reference hyperparameter table.

use std::path::{Path, PathBuf};

use mct_core::cotrain::CoTrainConfig;
use mct_core::data::{SplitSpec, SyntheticSpec, ViewSignal};
use mct_core::diagnostics::{IndependenceConfig, ProbeConfig, ProbeKind};
use mct_core::mct::{LabeledEval, MctConfig};
use mct_core::models::ModelSpec;
use mct_core::rng::{derive_seed, DEFAULT_SEED};
use mct_core::train::{OptimConfig, TrainConfig, UpdateRule};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Supervised,
    Cotrain,
    Mct,
    Sufficiency,
    Independence,
    SynthGen,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Supervised => "supervised",
            Method::Cotrain => "cotrain",
            Method::Mct => "mct",
            Method::Sufficiency => "sufficiency",
            Method::Independence => "independence",
            Method::SynthGen => "synth-gen",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Linear,
    Mlp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub method: Option<Method>,
    pub output_dir: Option<PathBuf>,

    /// Fully labeled training views, split into labeled and unlabeled pools
    /// by `label_fraction`.
    pub train_view1: Option<PathBuf>,
    pub train_view2: Option<PathBuf>,
    /// Pre-split pools, used instead of `train_view*`.
    pub labeled_view1: Option<PathBuf>,
    pub labeled_view2: Option<PathBuf>,
    pub unlabeled_view1: Option<PathBuf>,
    pub unlabeled_view2: Option<PathBuf>,
    pub test_view1: Option<PathBuf>,
    pub test_view2: Option<PathBuf>,
    pub label_fraction: f64,
    pub split_seed: u64,

    /// Used when no view files are given.
    pub synth_classes: usize,
    pub synth_dim1: usize,
    pub synth_dim2: usize,
    pub synth_separation: f64,
    pub synth_noise: f64,
    pub synth_labeled: usize,
    pub synth_unlabeled: usize,
    pub synth_test: usize,
    pub synth_view2: ViewSignal,
    pub data_seed: u64,

    pub model: ModelKind,
    pub hidden_width: usize,

    pub update_rule: UpdateRule,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub plateau_patience: u32,
    pub plateau_factor: f64,
    pub loss_ema_decay: f64,

    pub batch_size: usize,
    pub unlabeled_batch_size: usize,
    /// Supervised training steps, and the total MCT step count.
    pub steps: usize,
    pub warmup_steps: usize,
    pub steps_per_iteration: usize,
    pub k_fraction: f64,
    pub max_iterations: usize,
    pub supervised_weight: f64,
    pub labeled_eval: LabeledEval,
    pub eval_every: usize,

    pub probe_kind: ProbeKind,
    pub probe_hidden_width: usize,
    pub probe_learning_rate: f64,
    pub probe_steps: usize,
    pub sufficiency_threshold: f64,
    pub translator_steps: usize,

    pub init_seed: u64,
    pub sample_seed: u64,
    pub save_checkpoints: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let optim = OptimConfig::default();
        let synth = SyntheticSpec::default();
        let mct = MctConfig::default();
        let cotrain = CoTrainConfig::default();
        Self {
            method: None,
            output_dir: None,
            train_view1: None,
            train_view2: None,
            labeled_view1: None,
            labeled_view2: None,
            unlabeled_view1: None,
            unlabeled_view2: None,
            test_view1: None,
            test_view2: None,
            label_fraction: 0.1,
            split_seed: DEFAULT_SEED,
            synth_classes: synth.classes,
            synth_dim1: synth.dim1,
            synth_dim2: synth.dim2,
            synth_separation: synth.separation,
            synth_noise: synth.noise,
            synth_labeled: synth.n_labeled,
            synth_unlabeled: synth.n_unlabeled,
            synth_test: synth.n_test,
            synth_view2: synth.view2,
            data_seed: DEFAULT_SEED,
            model: ModelKind::Mlp,
            hidden_width: mct_core::models::DEFAULT_HIDDEN_WIDTH,
            update_rule: optim.rule,
            learning_rate: optim.learning_rate,
            beta1: optim.beta1,
            beta2: optim.beta2,
            epsilon: optim.epsilon,
            plateau_patience: optim.plateau_patience,
            plateau_factor: optim.plateau_factor,
            loss_ema_decay: optim.loss_ema_decay,
            batch_size: mct.batch_size,
            unlabeled_batch_size: mct.unlabeled_batch_size,
            steps: mct.total_steps,
            warmup_steps: mct.warmup_steps,
            steps_per_iteration: cotrain.steps_per_iteration,
            k_fraction: cotrain.k_fraction,
            max_iterations: cotrain.max_iterations,
            supervised_weight: mct.supervised_weight,
            labeled_eval: mct.labeled_eval,
            eval_every: mct.eval_every,
            probe_kind: ProbeKind::Linear,
            probe_hidden_width: mct_core::models::DEFAULT_HIDDEN_WIDTH,
            probe_learning_rate: optim.learning_rate,
            probe_steps: 1000,
            sufficiency_threshold: 75.0,
            translator_steps: 1000,
            init_seed: DEFAULT_SEED,
            sample_seed: DEFAULT_SEED,
            save_checkpoints: true,
        }
    }
}

/// Where the views come from.
#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Synthetic(SyntheticSpec),
    TrainFiles { train: [PathBuf; 2], test: [PathBuf; 2], split: SplitSpec },
    PoolFiles { labeled: [PathBuf; 2], unlabeled: [PathBuf; 2], test: [PathBuf; 2] },
}

/// A parsed config, its source text (for line lookups) and its directory.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    pub path: PathBuf,
    text: String,
}

impl LoadedConfig {
    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: cannot read config: {e}", path.display())))?;
        let config: ExperimentConfig = serde_json::from_str(&text).map_err(|e| {
            CliError::Config(format!("{}:{}:{}: {e}", path.display(), e.line(), e.column()))
        })?;
        let mut loaded = Self {
            config,
            path: path.to_path_buf(),
            text,
        };
        loaded.resolve_paths();
        Ok(loaded)
    }

    fn resolve_paths(&mut self) {
        let base = self.path.parent().map(Path::to_path_buf).unwrap_or_default();
        let c = &mut self.config;
        for p in [
            &mut c.output_dir,
            &mut c.train_view1,
            &mut c.train_view2,
            &mut c.labeled_view1,
            &mut c.labeled_view2,
            &mut c.unlabeled_view1,
            &mut c.unlabeled_view2,
            &mut c.test_view1,
            &mut c.test_view2,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }

    /// Replace every seed, as the `MCT_SEED` variable requests.
    pub fn override_seeds(&mut self, seed: u64) {
        let c = &mut self.config;
        c.split_seed = seed;
        c.data_seed = seed;
        c.init_seed = seed;
        c.sample_seed = seed;
    }

    fn line_of(&self, key: &str) -> Option<usize> {
        let quoted = format!("\"{key}\"");
        self.text.lines().position(|l| l.contains(&quoted)).map(|i| i + 1)
    }

    fn error(&self, key: &str, message: impl std::fmt::Display) -> CliError {
        match self.line_of(key) {
            Some(line) => CliError::Config(format!("{}:{line}: {key}: {message}", self.path.display())),
            None => CliError::Config(format!("{}: {key}: {message}", self.path.display())),
        }
    }

    /// Check everything a run needs before any data is touched.
    pub fn validate(&self) -> Result<Resolved, CliError> {
        let c = &self.config;
        let method = c.method.ok_or_else(|| self.error("method", "required"))?;
        let output_dir = c.output_dir.clone().ok_or_else(|| self.error("output_dir", "required"))?;
        let positive = [
            ("hidden_width", c.hidden_width),
            ("batch_size", c.batch_size),
            ("unlabeled_batch_size", c.unlabeled_batch_size),
            ("eval_every", c.eval_every),
            ("probe_hidden_width", c.probe_hidden_width),
        ];
        for (key, v) in positive {
            if v == 0 {
                return Err(self.error(key, "must be positive"));
            }
        }
        if !(c.label_fraction > 0.0 && c.label_fraction <= 1.0) {
            return Err(self.error("label_fraction", "must lie in (0, 1]"));
        }
        if !(0.0..=1.0).contains(&c.k_fraction) {
            return Err(self.error("k_fraction", "must lie in [0, 1]"));
        }
        if !(c.supervised_weight >= 0.0 && c.supervised_weight.is_finite()) {
            return Err(self.error("supervised_weight", "must be finite and non-negative"));
        }
        if !(0.0..=100.0).contains(&c.sufficiency_threshold) {
            return Err(self.error("sufficiency_threshold", "must lie in [0, 100]"));
        }
        if !(c.probe_learning_rate > 0.0 && c.probe_learning_rate.is_finite()) {
            return Err(self.error("probe_learning_rate", "must be positive"));
        }
        if method == Method::Mct && c.warmup_steps > c.steps {
            return Err(self.error("warmup_steps", format!("exceeds steps ({})", c.steps)));
        }
        let optim = self.optim();
        optim.validate().map_err(|e| self.error(optim_key(&e.to_string()), e))?;

        let data = self.data_source(method)?;
        if let DataSource::Synthetic(spec) = &data {
            spec.validate().map_err(|e| self.error("synth_classes", e))?;
        }
        let resolved = Resolved {
            method,
            output_dir,
            data,
            config: c.clone(),
        };
        resolved.cotrain().validate().map_err(|e| CliError::Config(format!("{}: {e}", self.path.display())))?;
        if method == Method::Mct {
            resolved.mct().validate().map_err(|e| CliError::Config(format!("{}: {e}", self.path.display())))?;
        }
        Ok(resolved)
    }

    fn optim(&self) -> OptimConfig {
        let c = &self.config;
        OptimConfig {
            rule: c.update_rule,
            learning_rate: c.learning_rate,
            beta1: c.beta1,
            beta2: c.beta2,
            epsilon: c.epsilon,
            plateau_patience: c.plateau_patience,
            plateau_factor: c.plateau_factor,
            loss_ema_decay: c.loss_ema_decay,
        }
    }

    fn data_source(&self, method: Method) -> Result<DataSource, CliError> {
        let c = &self.config;
        let pair = |a: &Option<PathBuf>, b: &Option<PathBuf>, key: &str| -> Result<Option<[PathBuf; 2]>, CliError> {
            match (a, b) {
                (Some(a), Some(b)) => Ok(Some([a.clone(), b.clone()])),
                (None, None) => Ok(None),
                _ => Err(self.error(&format!("{key}1"), format!("{key}1 and {key}2 must be given together"))),
            }
        };
        let train = pair(&c.train_view1, &c.train_view2, "train_view")?;
        let labeled = pair(&c.labeled_view1, &c.labeled_view2, "labeled_view")?;
        let unlabeled = pair(&c.unlabeled_view1, &c.unlabeled_view2, "unlabeled_view")?;
        let test = pair(&c.test_view1, &c.test_view2, "test_view")?;
        let any_files = train.is_some() || labeled.is_some() || unlabeled.is_some() || test.is_some();
        if !any_files {
            return Ok(DataSource::Synthetic(SyntheticSpec {
                classes: c.synth_classes,
                dim1: c.synth_dim1,
                dim2: c.synth_dim2,
                separation: c.synth_separation,
                noise: c.synth_noise,
                n_labeled: c.synth_labeled,
                n_unlabeled: c.synth_unlabeled,
                n_test: c.synth_test,
                seed: c.data_seed,
                view2: c.synth_view2,
            }));
        }
        if method == Method::SynthGen {
            return Err(self.error("method", "synth-gen takes no view files"));
        }
        let test = test.ok_or_else(|| self.error("test_view1", "test views are required with view files"))?;
        match (train, labeled, unlabeled) {
            (Some(train), None, None) => Ok(DataSource::TrainFiles {
                train,
                test,
                split: SplitSpec {
                    seed: c.split_seed,
                    ..SplitSpec::new(c.label_fraction)
                },
            }),
            (None, Some(labeled), Some(unlabeled)) => Ok(DataSource::PoolFiles { labeled, unlabeled, test }),
            (Some(_), _, _) => Err(self.error("train_view1", "give either train_view* or labeled_view*/unlabeled_view*")),
            _ => Err(self.error("labeled_view1", "labeled_view* and unlabeled_view* must be given together")),
        }
    }
}

fn optim_key(message: &str) -> &'static str {
    [
        "learning_rate",
        "beta1",
        "epsilon",
        "plateau_factor",
        "plateau_patience",
        "loss_ema_decay",
    ]
    .into_iter()
    .find(|k| message.contains(k))
    .unwrap_or("learning_rate")
}

/// A validated config with its engine settings.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub method: Method,
    pub output_dir: PathBuf,
    pub data: DataSource,
    pub config: ExperimentConfig,
}

impl Resolved {
    pub fn model(&self) -> ModelSpec {
        match self.config.model {
            ModelKind::Linear => ModelSpec::Linear,
            ModelKind::Mlp => ModelSpec::SkipMlp {
                hidden_width: self.config.hidden_width,
            },
        }
    }

    pub fn optim(&self) -> OptimConfig {
        let c = &self.config;
        OptimConfig {
            rule: c.update_rule,
            learning_rate: c.learning_rate,
            beta1: c.beta1,
            beta2: c.beta2,
            epsilon: c.epsilon,
            plateau_patience: c.plateau_patience,
            plateau_factor: c.plateau_factor,
            loss_ema_decay: c.loss_ema_decay,
        }
    }

    pub fn cotrain(&self) -> CoTrainConfig {
        let c = &self.config;
        CoTrainConfig {
            model: self.model(),
            steps_per_iteration: if self.method == Method::Supervised {
                c.steps
            } else {
                c.steps_per_iteration
            },
            k_fraction: c.k_fraction,
            max_iterations: c.max_iterations,
            batch_size: c.batch_size,
            optim: self.optim(),
            init_seed: c.init_seed,
            sample_seed: c.sample_seed,
        }
    }

    pub fn mct(&self) -> MctConfig {
        let c = &self.config;
        MctConfig {
            model: self.model(),
            total_steps: c.steps,
            warmup_steps: c.warmup_steps,
            batch_size: c.batch_size,
            unlabeled_batch_size: c.unlabeled_batch_size,
            optim: self.optim(),
            supervised_weight: c.supervised_weight,
            labeled_eval: c.labeled_eval,
            eval_every: c.eval_every,
            init_seed: c.init_seed,
            sample_seed: c.sample_seed,
        }
    }

    pub fn probe(&self) -> ProbeConfig {
        let c = &self.config;
        ProbeConfig {
            kind: c.probe_kind,
            hidden_width: c.probe_hidden_width,
            train: TrainConfig {
                steps: c.probe_steps,
                batch_size: c.batch_size,
                optim: OptimConfig {
                    learning_rate: c.probe_learning_rate,
                    ..self.optim()
                },
            },
            seed: derive_seed(c.init_seed, &[1]),
        }
    }

    pub fn independence(&self) -> IndependenceConfig {
        let c = &self.config;
        IndependenceConfig {
            hidden_width: c.hidden_width,
            translator: TrainConfig {
                steps: c.translator_steps,
                batch_size: c.batch_size,
                optim: self.optim(),
            },
            probe: ProbeConfig {
                kind: ProbeKind::Linear,
                ..self.probe()
            },
            seed: derive_seed(c.init_seed, &[2]),
        }
    }

    pub fn split(&self) -> SplitSpec {
        SplitSpec {
            seed: self.config.split_seed,
            ..SplitSpec::new(self.config.label_fraction)
        }
    }
}
