//! One experiment per invocation: load or generate views, dispatch to the
//! engine, and write metrics, summary, manifest and checkpoints.

use std::fs;
use std::path::{Path, PathBuf};

use mct_core::cotrain::{run_cotraining, run_supervised, CoTrainOutcome, Evaluation};
use mct_core::data::{generate_synthetic, load_view, save_view, stratified_split, PairedViews, ViewDataset};
use mct_core::diagnostics::{
    probe_translations, sufficiency_probe, sufficiency_rows, sufficiency_table, translation_rows, translation_table,
    ViewSplit,
};
use mct_core::mct::run_mct;
use mct_core::models::{save_checkpoint, Network};
use mct_core::{MetricsLog, SslData};
use serde_json::{json, Value};

use crate::config::{DataSource, Method, Resolved};
use crate::CliError;

pub const METRICS_FILE: &str = "metrics.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const CHECKPOINT_DIR: &str = "checkpoints";
const SPLITS: [&str; 3] = ["labeled", "unlabeled", "test"];

/// Loaded views plus, when known, the fully labeled training set of each
/// view (for the diagnostics).
struct Views {
    data: SslData,
    train: Option<[ViewDataset; 2]>,
}

fn load(path: &Path, name: &str) -> Result<ViewDataset, CliError> {
    load_view(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display()))).map(|mut v| {
        v.name = name.to_string();
        v
    })
}

fn pair(paths: &[PathBuf; 2], split: &str) -> Result<PairedViews, CliError> {
    let v1 = load(&paths[0], &format!("view1_{split}"))?;
    let v2 = load(&paths[1], &format!("view2_{split}"))?;
    PairedViews::new(v1, v2).map_err(|e| CliError::Data(format!("{split} views: {e}")))
}

/// Rows of `a` followed by rows of `b`, both labeled.
fn stack(a: &ViewDataset, b: &ViewDataset) -> mct_core::Result<ViewDataset> {
    let x = a.embeddings().vcat(b.embeddings())?;
    let y = [a.require_labels()?, b.require_labels()?].concat();
    ViewDataset::new(a.name.replace("labeled", "train"), x, Some(y), a.class_count().max(b.class_count()))
}

fn data_err(e: mct_core::Error) -> CliError {
    CliError::Data(e.to_string())
}

fn load_views(source: &DataSource) -> Result<Views, CliError> {
    match source {
        DataSource::Synthetic(spec) => {
            let s = generate_synthetic(spec).map_err(|e| CliError::Config(e.to_string()))?;
            let train = [0, 1].map(|v| {
                let l = s.data.labeled.view(v);
                let u = s.data.unlabeled.view(v);
                let truth = ViewDataset::new(u.name.clone(), u.embeddings().clone(), Some(s.unlabeled_truth.clone()), l.class_count());
                truth.and_then(|u| stack(l, &u))
            });
            let [a, b] = train;
            Ok(Views {
                train: Some([a.map_err(data_err)?, b.map_err(data_err)?]),
                data: s.data,
            })
        }
        DataSource::TrainFiles { train, test, split } => {
            let full = pair(train, "train")?;
            let test = pair(test, "test")?;
            let s = stratified_split(full.view1(), split).map_err(data_err)?;
            let labeled = full.subset(&s.labeled);
            let unlabeled = full.subset(&s.remainder).without_labels();
            let data = SslData::new(labeled, unlabeled, test).map_err(data_err)?;
            let (a, b) = full.into_views();
            Ok(Views {
                data,
                train: Some([a, b]),
            })
        }
        DataSource::PoolFiles { labeled, unlabeled, test } => {
            let labeled = pair(labeled, "labeled")?;
            let unlabeled = pair(unlabeled, "unlabeled")?;
            let test = pair(test, "test")?;
            let train = if unlabeled.labels().is_some() {
                let [a, b] = [0, 1].map(|v| stack(labeled.view(v), unlabeled.view(v)));
                Some([a.map_err(data_err)?, b.map_err(data_err)?])
            } else {
                Some([labeled.view1().clone(), labeled.view2().clone()])
            };
            let data = SslData::new(labeled, unlabeled.without_labels(), test).map_err(data_err)?;
            Ok(Views { data, train })
        }
    }
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Data(e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn io_err(path: &Path) -> impl Fn(mct_core::Error) -> CliError + '_ {
    move |e| CliError::Data(format!("{}: {e}", path.display()))
}

fn evaluation_json(e: &Evaluation) -> Value {
    json!({
        "view1_accuracy": e.accuracy[0],
        "view2_accuracy": e.accuracy[1],
        "joint_accuracy": e.joint_accuracy,
        "degenerate_rows": e.degenerate_rows,
    })
}

fn cotrain_summary(out: &CoTrainOutcome) -> Value {
    let last = out.evaluations.last().expect("iteration 0 is always evaluated");
    let best = out.evaluations.iter().map(|e| e.joint_accuracy).fold(f64::NEG_INFINITY, f64::max);
    json!({
        "iterations": out.reports.len(),
        "final": evaluation_json(last),
        "best_joint_accuracy": best,
        "joint_accuracy_by_iteration": out.evaluations.iter().map(|e| e.joint_accuracy).collect::<Vec<_>>(),
        "transferred": out.reports.iter().map(|r| r.transferred[0] + r.transferred[1]).sum::<usize>(),
        "conflicts": out.reports.iter().map(|r| r.conflicts).sum::<usize>(),
    })
}

/// Method output before anything is written.
struct Output {
    log: Option<MetricsLog>,
    summary: Value,
    models: Option<[Network; 2]>,
}

fn execute(r: &Resolved, views: &Views) -> Result<Output, CliError> {
    let data = &views.data;
    let needs_train = || {
        views
            .train
            .as_ref()
            .ok_or_else(|| CliError::Data("diagnostics need fully labeled training views".to_string()))
    };
    Ok(match r.method {
        Method::Supervised => {
            let out = run_supervised(data, &r.cotrain()).map_err(CliError::from)?;
            let summary = json!({ "final": evaluation_json(&out.evaluations[0]) });
            Output {
                log: Some(out.log),
                summary,
                models: Some(out.models),
            }
        }
        Method::Cotrain => {
            let out = run_cotraining(data, &r.cotrain()).map_err(CliError::from)?;
            let summary = cotrain_summary(&out);
            Output {
                log: Some(out.log),
                summary,
                models: Some(out.models),
            }
        }
        Method::Mct => {
            let out = run_mct(data, &r.mct()).map_err(CliError::from)?;
            let (_, last) = out.evaluations.last().expect("the final step is always evaluated");
            let summary = json!({
                "warmup_joint_accuracy": out.warmup_joint_accuracy,
                "final_joint_accuracy": out.final_joint_accuracy,
                "best_joint_accuracy": out.best_joint_accuracy,
                "final": evaluation_json(last),
                "nonfinite_steps": out.nonfinite_steps,
            });
            Output {
                log: Some(out.log),
                summary,
                models: Some(out.models),
            }
        }
        Method::Sufficiency => {
            let train = needs_train()?;
            let probe = r.probe();
            let split = r.split();
            let reports = [0, 1]
                .iter()
                .map(|&v| {
                    sufficiency_probe(&train[v], data.test.view(v), &split, &probe, r.config.sufficiency_threshold)
                })
                .collect::<Result<Vec<_>, _>>()
                .map_err(CliError::from)?;
            print!("{}", sufficiency_table(&reports));
            Output {
                log: Some(sufficiency_rows(&reports)),
                summary: json!({ "reports": reports }),
                models: None,
            }
        }
        Method::Independence => {
            let train = needs_train()?;
            let splits = [0, 1].map(|v| ViewSplit {
                train: &train[v],
                test: data.test.view(v),
            });
            let reports = probe_translations(&splits, &r.independence()).map_err(CliError::from)?;
            print!("{}", translation_table(&reports));
            Output {
                log: Some(translation_rows(&reports)),
                summary: json!({ "reports": reports }),
                models: None,
            }
        }
        Method::SynthGen => {
            let mut files = Vec::new();
            for (split, views) in SPLITS.iter().zip([&data.labeled, &data.unlabeled, &data.test]) {
                for v in 0..2 {
                    let name = format!("{split}_view{}.embv", v + 1);
                    let path = r.output_dir.join(&name);
                    save_view(views.view(v), &path).map_err(io_err(&path))?;
                    files.push(json!({ "file": name, "rows": views.len(), "dim": views.view(v).dim() }));
                }
            }
            Output {
                log: None,
                summary: json!({ "files": files, "classes": data.class_count() }),
                models: None,
            }
        }
    })
}

/// Run a validated experiment and write its artifacts. Returns the output
/// directory.
pub fn run(r: &Resolved) -> Result<PathBuf, CliError> {
    let dir = &r.output_dir;
    fs::create_dir_all(dir).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))?;
    write_json(&dir.join(MANIFEST_FILE), &r.config)?;
    let views = load_views(&r.data)?;
    let out = execute(r, &views)?;

    if let Some(log) = &out.log {
        let path = dir.join(METRICS_FILE);
        log.save(&path).map_err(io_err(&path))?;
    }
    if let (Some(models), true) = (&out.models, r.config.save_checkpoints) {
        let ckpt = dir.join(CHECKPOINT_DIR);
        fs::create_dir_all(&ckpt).map_err(|e| CliError::Data(format!("{}: {e}", ckpt.display())))?;
        for (v, net) in models.iter().enumerate() {
            let path = ckpt.join(format!("view{}.ckpt", v + 1));
            save_checkpoint(net, &path).map_err(io_err(&path))?;
        }
    }
    let summary = json!({
        "method": r.method.name(),
        "classes": views.data.class_count(),
        "labeled": views.data.labeled.len(),
        "unlabeled": views.data.unlabeled.len(),
        "test": views.data.test.len(),
        "result": out.summary,
    });
    write_json(&dir.join(SUMMARY_FILE), &summary)?;
    Ok(dir.clone())
}
