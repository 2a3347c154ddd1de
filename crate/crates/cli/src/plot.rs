//! Curve extraction from metrics files: one columnar CSV per requested curve.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use mct_core::{MetricRow, MetricsLog};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Axis {
    Step,
    Iteration,
}

/// `model:metric` or `model:metric:split`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CurveSpec {
    pub model: String,
    pub metric: String,
    pub split: Option<String>,
}

impl std::str::FromStr for CurveSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        let ok = |p: &str| !p.is_empty();
        match parts.as_slice() {
            [m, k] if ok(m) && ok(k) => Ok(Self {
                model: m.to_string(),
                metric: k.to_string(),
                split: None,
            }),
            [m, k, sp] if ok(m) && ok(k) && ok(sp) => Ok(Self {
                model: m.to_string(),
                metric: k.to_string(),
                split: Some(sp.to_string()),
            }),
            _ => Err(format!("curve `{s}` is not model:metric or model:metric:split")),
        }
    }
}

impl CurveSpec {
    fn matches(&self, r: &MetricRow) -> bool {
        r.model_id == self.model && r.metric == self.metric && self.split.as_ref().is_none_or(|s| &r.split == s)
    }

    pub fn file_name(&self) -> String {
        let mut name = format!("{}_{}", self.model, self.metric);
        if let Some(s) = &self.split {
            name = format!("{name}_{s}");
        }
        let clean: String = name
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() || c == '_' || c == '-' { c } else { '_' })
            .collect();
        format!("{clean}.csv")
    }
}

fn available(logs: &[MetricsLog]) -> String {
    let set: BTreeSet<String> = logs
        .iter()
        .flat_map(|l| l.rows().iter().map(|r| format!("{}:{}:{}", r.model_id, r.metric, r.split)))
        .collect();
    set.into_iter().collect::<Vec<_>>().join(", ")
}

/// One `x -> y` series from one run.
fn series(log: &MetricsLog, curve: &CurveSpec, axis: Axis, source: &Path) -> Result<BTreeMap<u64, f64>, CliError> {
    let rows: Vec<&MetricRow> = log.rows().iter().filter(|r| curve.matches(r)).collect();
    let splits: BTreeSet<&str> = rows.iter().map(|r| r.split.as_str()).collect();
    if splits.len() > 1 {
        return Err(CliError::Data(format!(
            "{}: curve {}:{} spans splits {splits:?}; add :split",
            source.display(),
            curve.model,
            curve.metric
        )));
    }
    let mut out = BTreeMap::new();
    for r in rows {
        let x = match axis {
            Axis::Step => r.step,
            Axis::Iteration => r.iteration,
        };
        if out.insert(x, r.value).is_some() {
            return Err(CliError::Data(format!(
                "{}: repeated x = {x} for {}:{}; try the other --x axis",
                source.display(),
                curve.model,
                curve.metric
            )));
        }
    }
    Ok(out)
}

/// Render one curve. A single run gives `x,y`; several runs give
/// `x,min,mean,max` over the x values every run shares.
pub fn render(logs: &[(PathBuf, MetricsLog)], curve: &CurveSpec, axis: Axis) -> Result<String, CliError> {
    let all: Vec<MetricsLog> = logs.iter().map(|(_, l)| l.clone()).collect();
    let per_run = logs
        .iter()
        .map(|(p, l)| series(l, curve, axis, p))
        .collect::<Result<Vec<_>, _>>()?;
    if per_run.iter().any(BTreeMap::is_empty) {
        return Err(CliError::Data(format!(
            "no rows for curve {}:{}; available: {}",
            curve.model,
            curve.metric,
            available(&all)
        )));
    }
    let x_name = match axis {
        Axis::Step => "step",
        Axis::Iteration => "iteration",
    };
    let mut out = String::new();
    if let [only] = per_run.as_slice() {
        writeln!(out, "{x_name},{}", curve.metric).unwrap();
        for (x, y) in only {
            writeln!(out, "{x},{y}").unwrap();
        }
        return Ok(out);
    }
    let shared: Vec<u64> = per_run[0]
        .keys()
        .filter(|x| per_run.iter().all(|s| s.contains_key(x)))
        .copied()
        .collect();
    if shared.is_empty() {
        return Err(CliError::Data("the runs share no x values for this curve".to_string()));
    }
    writeln!(out, "{x_name},min,mean,max").unwrap();
    for x in shared {
        let ys: Vec<f64> = per_run.iter().map(|s| s[&x]).collect();
        let min = ys.iter().copied().fold(f64::INFINITY, f64::min);
        let max = ys.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mean = ys.iter().sum::<f64>() / ys.len() as f64;
        writeln!(out, "{x},{min},{mean},{max}").unwrap();
    }
    Ok(out)
}

/// Write every curve into `out_dir`, returning the written paths.
pub fn emit(files: &[PathBuf], curves: &[CurveSpec], axis: Axis, out_dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    if curves.is_empty() {
        return Err(CliError::Config("no curves requested; pass --curve model:metric".to_string()));
    }
    let logs = files
        .iter()
        .map(|p| {
            MetricsLog::load(p)
                .map(|l| (p.clone(), l))
                .map_err(|e| CliError::Data(format!("{}: {e}", p.display())))
        })
        .collect::<Result<Vec<_>, _>>()?;
    fs::create_dir_all(out_dir).map_err(|e| CliError::Data(format!("{}: {e}", out_dir.display())))?;
    let mut written = Vec::new();
    for curve in curves {
        let text = render(&logs, curve, axis)?;
        let path = out_dir.join(curve.file_name());
        fs::write(&path, text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        written.push(path);
    }
    Ok(written)
}
