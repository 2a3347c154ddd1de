//! View-quality diagnostics.
//!
//! A *sufficiency* probe trains a classifier on a labeled fraction of one
//! view and reports test accuracy against a threshold. An *independence*
//! probe trains a regressor to translate one view into another, then trains a
//! linear classifier on the translations: near-chance accuracy means the
//! target view cannot be recovered from the source.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::data::{stratified_split, SplitSpec};
use crate::data::ViewDataset;
use crate::error::{dim_err, Error, Result};
use crate::math::Targets;
use crate::metrics::MetricsLog;
use crate::models::{ModelSpec, Network, DEFAULT_HIDDEN_WIDTH};
use crate::rng::{derive_seed, DEFAULT_SEED};
use crate::train::{evaluate, fit, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeKind {
    Linear,
    Mlp,
}

impl ProbeKind {
    pub fn name(&self) -> &'static str {
        match self {
            ProbeKind::Linear => "linear",
            ProbeKind::Mlp => "mlp",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub kind: ProbeKind,
    /// Hidden width of MLP probes.
    pub hidden_width: usize,
    pub train: TrainConfig,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            kind: ProbeKind::Linear,
            hidden_width: DEFAULT_HIDDEN_WIDTH,
            train: TrainConfig::default(),
            seed: DEFAULT_SEED,
        }
    }
}

impl ProbeConfig {
    fn spec(&self) -> ModelSpec {
        match self.kind {
            ProbeKind::Linear => ModelSpec::Linear,
            ProbeKind::Mlp => ModelSpec::SkipMlp {
                hidden_width: self.hidden_width,
            },
        }
    }

    /// Train a fresh probe on `train` and return its top-1 accuracy on `test`.
    pub fn train_and_score(&self, train: &ViewDataset, test: &ViewDataset) -> Result<f64> {
        if train.dim() != test.dim() {
            return Err(dim_err(format!(
                "probe train width {} differs from test width {}",
                train.dim(),
                test.dim()
            )));
        }
        let y = train.require_labels()?;
        let mut net = Network::classifier(self.spec(), train.dim(), train.class_count(), derive_seed(self.seed, &[0]));
        fit(&mut net, train.embeddings(), Targets::Hard(y), &self.train, derive_seed(self.seed, &[1]))?;
        evaluate(&net, test.embeddings(), test.require_labels()?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SufficiencyReport {
    pub view_name: String,
    pub probe_kind: ProbeKind,
    pub label_fraction: f64,
    /// Top-1 test accuracy in percent.
    pub accuracy: f64,
    pub threshold: f64,
    pub pass: bool,
}

/// Train a probe on the `split` fraction of `view` and score it on `test`.
pub fn sufficiency_probe(
    view: &ViewDataset,
    test: &ViewDataset,
    split: &SplitSpec,
    probe: &ProbeConfig,
    threshold: f64,
) -> Result<SufficiencyReport> {
    let labeled = stratified_split(view, split)?.apply(view).0;
    let accuracy = probe.train_and_score(&labeled, test)?;
    Ok(SufficiencyReport {
        view_name: view.name.clone(),
        probe_kind: probe.kind,
        label_fraction: split.fraction,
        accuracy,
        threshold,
        pass: accuracy >= threshold,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IndependenceConfig {
    /// Hidden width of the translation regressor.
    pub hidden_width: usize,
    pub translator: TrainConfig,
    /// The downstream classifier on translated embeddings.
    pub probe: ProbeConfig,
    pub seed: u64,
}

impl Default for IndependenceConfig {
    fn default() -> Self {
        Self {
            hidden_width: DEFAULT_HIDDEN_WIDTH,
            translator: TrainConfig::default(),
            probe: ProbeConfig::default(),
            seed: DEFAULT_SEED,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranslationReport {
    pub source: String,
    pub target: String,
    /// Mean squared error of the regressor on its training set.
    pub translator_mse: f64,
    /// Top-1 test accuracy of the downstream probe, in percent.
    pub accuracy: f64,
}

/// A train/test pair of aligned, labeled views.
#[derive(Debug, Clone, Copy)]
pub struct ViewSplit<'a> {
    pub train: &'a ViewDataset,
    pub test: &'a ViewDataset,
}

/// Translate `source` into `target` with an MSE regressor, then probe the
/// translations for labels.
pub fn independence_probe(source: ViewSplit<'_>, target: ViewSplit<'_>, cfg: &IndependenceConfig) -> Result<TranslationReport> {
    if source.train.len() != target.train.len() || source.test.len() != target.test.len() {
        return Err(Error::Alignment(format!(
            "source and target instance counts differ ({}/{} vs {}/{})",
            source.train.len(),
            source.test.len(),
            target.train.len(),
            target.test.len()
        )));
    }
    if source.train.dim() != source.test.dim() || target.train.dim() != target.test.dim() {
        return Err(dim_err("train and test widths differ within a view"));
    }
    source.train.require_labels()?;
    source.test.require_labels()?;

    let mut regressor = Network::skip_regressor(source.train.dim(), target.train.dim(), cfg.hidden_width);
    regressor.init_uniform(&mut crate::rng::seeded(derive_seed(cfg.seed, &[0])));
    // An untrained translator is constant.
    for name in ["head.weight", "head.bias"] {
        regressor.params_mut().block_mut(name).expect("regressor head").fill(0.0);
    }
    let y = target.train.embeddings();
    fit(
        &mut regressor,
        source.train.embeddings(),
        Targets::Soft(y),
        &cfg.translator,
        derive_seed(cfg.seed, &[1]),
    )?;
    let (train_out, _) = regressor.forward(source.train.embeddings())?;
    let translator_mse = regressor.loss(&train_out, Targets::Soft(y))?;
    let test_out = regressor.predict(source.test.embeddings())?;

    let translated_train = source.train.with_embeddings(format!("{}->{}", source.train.name, target.train.name), train_out)?;
    let translated_test = source.test.with_embeddings(format!("{}->{}", source.test.name, target.test.name), test_out)?;
    let accuracy = cfg.probe.train_and_score(&translated_train, &translated_test)?;
    Ok(TranslationReport {
        source: source.train.name.clone(),
        target: target.train.name.clone(),
        translator_mse,
        accuracy,
    })
}

/// Independence probes for every ordered pair of distinct views.
pub fn probe_translations(views: &[ViewSplit<'_>], cfg: &IndependenceConfig) -> Result<Vec<TranslationReport>> {
    let mut out = Vec::new();
    for (i, s) in views.iter().enumerate() {
        for (j, t) in views.iter().enumerate() {
            if i != j {
                out.push(independence_probe(*s, *t, cfg)?);
            }
        }
    }
    Ok(out)
}

pub fn sufficiency_rows(reports: &[SufficiencyReport]) -> MetricsLog {
    let mut log = MetricsLog::new();
    for r in reports {
        log.push(0, 0, "sufficiency", &r.view_name, "test", &format!("{}_accuracy", r.probe_kind.name()), r.accuracy);
        log.push(0, 0, "sufficiency", &r.view_name, "test", "pass", if r.pass { 1.0 } else { 0.0 });
    }
    log
}

pub fn translation_rows(reports: &[TranslationReport]) -> MetricsLog {
    let mut log = MetricsLog::new();
    for r in reports {
        let id = format!("{}->{}", r.source, r.target);
        log.push(0, 0, "independence", &id, "train", "translator_mse", r.translator_mse);
        log.push(0, 0, "independence", &id, "test", "probe_accuracy", r.accuracy);
    }
    log
}

pub fn sufficiency_table(reports: &[SufficiencyReport]) -> String {
    let mut s = format!("{:<24} {:<7} {:>9} {:>9} {:>10} {:<4}\n", "view", "probe", "labels", "top-1", "threshold", "pass");
    for r in reports {
        let _ = writeln!(
            s,
            "{:<24} {:<7} {:>8.2}% {:>8.2}% {:>9.2}% {:<4}",
            r.view_name,
            r.probe_kind.name(),
            100.0 * r.label_fraction,
            r.accuracy,
            r.threshold,
            if r.pass { "yes" } else { "no" }
        );
    }
    s
}

pub fn translation_table(reports: &[TranslationReport]) -> String {
    let mut s = format!("{:<24} {:<24} {:>12} {:>9}\n", "source", "target", "mse", "top-1");
    for r in reports {
        let _ = writeln!(s, "{:<24} {:<24} {:>12.6} {:>8.2}%", r.source, r.target, r.translator_mse, r.accuracy);
    }
    s
}
