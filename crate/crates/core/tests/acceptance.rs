//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit on any
//! failure. Tolerances and budgets are pinned below.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::bookkeeping::check_cotrain_trace;
use common::suites::*;
use common::*;
use mct_core::cotrain::{joint_from_probs, run_cotraining, run_supervised, CoTrainConfig};
use mct_core::data::{generate_synthetic, stratified_split, write_view, SplitSpec, SyntheticSpec, ViewSignal};
use mct_core::diagnostics::{
    independence_probe, sufficiency_probe, sufficiency_rows, translation_rows, IndependenceConfig, ProbeConfig,
    ProbeKind, ViewSplit,
};
use mct_core::math::Matrix;
use mct_core::mct::{run_mct, LabeledEval, MctConfig};
use mct_core::models::{predict_hard, ModelSpec};
use mct_core::train::{OptimConfig, TrainConfig};
use mct_core::MetricsLog;
use rand::Rng;

const GRADIENT_CASES: usize = 80;
const GRADIENT_BUDGET: Duration = Duration::from_secs(30);
const ORACLE_INSTANCES: u64 = 20;
const JOINT_CASES: u64 = 1000;
const JOINT_SUM_TOL: f64 = 1e-6;
const JOINT_UNIFORM_TOL: f64 = 1e-12;

const BENCH_SEEDS: u64 = 5;
const BENCH_BUDGET: Duration = Duration::from_secs(600);
const JOINT_SLACK: f64 = 0.5;
const MCT_MIN_GAIN: f64 = 1.0;

const SPLIT_SIZES: [usize; 10] = [1000, 523, 347, 91, 55, 250, 999, 120, 64, 402];

const INDEPENDENCE_SEEDS: u64 = 3;
const INDEPENDENCE_SEPARATION: f64 = 8.0;
const IDENTITY_MIN: f64 = 90.0;

struct Check {
    pass: bool,
    detail: String,
}

fn check(pass: bool, detail: impl Into<String>) -> Check {
    Check {
        pass,
        detail: detail.into(),
    }
}

fn gradient_suite() -> Check {
    let start = Instant::now();
    let worst = FAMILIES
        .iter()
        .cycle()
        .take(GRADIENT_CASES)
        .enumerate()
        .map(|(i, f)| fd_case(1000 + i as u64, *f))
        .fold(0.0f64, f64::max);
    let elapsed = start.elapsed();
    check(
        worst < FD_TOL && elapsed < GRADIENT_BUDGET,
        format!("{GRADIENT_CASES} cases, worst relative error {worst:.2e} (< {FD_TOL:e}), {elapsed:.2?}"),
    )
}

fn step_oracle() -> Check {
    let mut worst = 0.0f64;
    for seed in 0..ORACLE_INSTANCES {
        for eval in [LabeledEval::Updated, LabeledEval::Start] {
            worst = worst.max(oracle_deviation(seed, eval));
        }
    }
    check(
        worst <= ORACLE_TOL,
        format!("{ORACLE_INSTANCES} instances x 2 labeled-eval modes, worst deviation {worst:.2e}"),
    )
}

fn joint_properties() -> Check {
    let mut r = rng(44);
    let mut failures = Vec::new();
    for case in 0..JOINT_CASES {
        let k = r.random_range(2..=10);
        let mut row = || {
            let v: Vec<f64> = (0..k).map(|_| r.random_range(1e-6..1.0)).collect();
            let s: f64 = v.iter().sum();
            v.into_iter().map(|x| x / s).collect::<Vec<f64>>()
        };
        let (p, q) = (row(), row());
        let c = r.random_range(0.01..100.0);
        let pm = Matrix::from_rows(&[p.clone()]).unwrap();
        let qm = Matrix::from_rows(&[q.clone()]).unwrap();
        let j = joint_from_probs(&pm, &qm).unwrap();
        if (j.probs.row(0).iter().sum::<f64>() - 1.0).abs() > JOINT_SUM_TOL {
            failures.push(format!("case {case}: sum"));
        }
        let u = Matrix::from_rows(&[vec![1.0 / k as f64; k]]).unwrap();
        let ju = joint_from_probs(&u, &qm).unwrap();
        if ju.probs.row(0).iter().zip(&q).any(|(a, b)| (a - b).abs() > JOINT_UNIFORM_TOL) {
            failures.push(format!("case {case}: uniform"));
        }
        let scaled = Matrix::from_rows(&[p.iter().map(|x| x * c).collect::<Vec<f64>>()]).unwrap();
        let js = joint_from_probs(&scaled, &qm).unwrap();
        if predict_hard(&js.probs) != predict_hard(&j.probs) {
            failures.push(format!("case {case}: rescaling"));
        }
    }
    check(
        failures.is_empty(),
        format!("{JOINT_CASES} cases, {} failures {:?}", failures.len(), failures.iter().take(3).collect::<Vec<_>>()),
    )
}

fn bookkeeping() -> Check {
    let mut notes = Vec::new();
    let mut ok = true;
    let (mut iterations, mut transferred, mut conflicts) = (0, 0, 0);
    for seed in 0..3 {
        match check_cotrain_trace(&toy_pool(seed, ViewSignal::ClassConditional), toy_config(0.1, 20)) {
            Ok(s) => {
                iterations += s.iterations;
                transferred += s.transferred;
            }
            Err(e) => {
                ok = false;
                notes.push(e);
            }
        }
    }
    for seed in 0..4 {
        match check_cotrain_trace(&toy_pool(seed, ViewSignal::NoiseOnly), toy_config(0.3, 6)) {
            Ok(s) => conflicts += s.conflicts,
            Err(e) => {
                ok = false;
                notes.push(e);
            }
        }
    }
    ok &= conflicts > 0 && transferred > 0;
    check(
        ok,
        format!("50-instance pool, {iterations} traced iterations, {transferred} transfers, {conflicts} conflicts {notes:?}"),
    )
}

fn cotrain_bench_config(seed: u64, max_iterations: usize) -> CoTrainConfig {
    CoTrainConfig {
        model: ModelSpec::SkipMlp { hidden_width: 64 },
        steps_per_iteration: 200,
        k_fraction: 0.1,
        max_iterations,
        batch_size: 512,
        optim: OptimConfig {
            learning_rate: 1e-3,
            ..Default::default()
        },
        init_seed: seed,
        sample_seed: seed,
    }
}

fn mct_bench_config(seed: u64) -> MctConfig {
    MctConfig {
        model: ModelSpec::SkipMlp { hidden_width: 64 },
        total_steps: 1000,
        warmup_steps: 200,
        batch_size: 4096,
        unlabeled_batch_size: 512,
        eval_every: 50,
        init_seed: seed,
        sample_seed: seed,
        ..Default::default()
    }
}

fn synthetic_benchmark() -> [Check; 3] {
    let start = Instant::now();
    let mut a_ok = true;
    let (mut a_notes, mut b_gain, mut b_notes) = (Vec::new(), 0.0, Vec::new());
    let (mut c_first, mut c_third, mut c_notes) = (0.0, 0.0, Vec::new());
    for seed in 0..BENCH_SEEDS {
        let spec = SyntheticSpec {
            seed,
            ..Default::default()
        };
        let data = generate_synthetic(&spec).unwrap().data;
        let base = run_supervised(&data, &cotrain_bench_config(seed, 0)).unwrap();
        let e = &base.evaluations[0];
        let best = e.accuracy[0].max(e.accuracy[1]);
        a_ok &= e.joint_accuracy >= best - JOINT_SLACK;
        a_notes.push(format!("{:.1}/{:.1}", e.joint_accuracy, best));

        let m = run_mct(&data, &mct_bench_config(seed)).unwrap();
        b_gain += m.final_joint_accuracy - m.warmup_joint_accuracy;
        b_notes.push(format!("{:.1}->{:.1}", m.warmup_joint_accuracy, m.final_joint_accuracy));

        let noisy = generate_synthetic(&SyntheticSpec {
            view2: ViewSignal::NoiseOnly,
            ..spec
        })
        .unwrap()
        .data;
        let co = run_cotraining(&noisy, &cotrain_bench_config(seed, 3)).unwrap();
        let (first, third) = (co.evaluations[1].joint_accuracy, co.evaluations[3].joint_accuracy);
        c_first += first;
        c_third += third;
        c_notes.push(format!("{first:.1}->{third:.1}"));
        println!("  seed {seed} done at {:.1?}", start.elapsed());
    }
    let n = BENCH_SEEDS as f64;
    let in_budget = start.elapsed() < BENCH_BUDGET;
    let time = format!("{:.1?} total", start.elapsed());
    [
        check(
            a_ok && in_budget,
            format!("iteration-0 joint/best single view per seed {a_notes:?}, slack {JOINT_SLACK}, {time}"),
        ),
        check(
            b_gain / n >= MCT_MIN_GAIN && in_budget,
            format!("mean gain {:.2} pt (>= {MCT_MIN_GAIN}), warmup->final {b_notes:?}", b_gain / n),
        ),
        check(
            c_third < c_first && in_budget,
            format!("mean joint iteration 1 {:.2} -> iteration 3 {:.2}, per seed {c_notes:?}", c_first / n, c_third / n),
        ),
    ]
}

fn csv_bytes(log: &MetricsLog) -> Vec<u8> {
    let mut out = Vec::new();
    log.write_csv(&mut out).unwrap();
    out
}

fn determinism() -> Check {
    let spec = SyntheticSpec {
        n_unlabeled: 1800,
        n_test: 400,
        seed: 21,
        ..Default::default()
    };
    let data = || generate_synthetic(&spec).unwrap();
    let views = |s: &mct_core::data::SyntheticData| {
        let mut out = Vec::new();
        for v in 0..2 {
            write_view(s.data.labeled.view(v), &mut out).unwrap();
            write_view(s.data.unlabeled.view(v), &mut out).unwrap();
            write_view(s.data.test.view(v), &mut out).unwrap();
        }
        out
    };
    let cotrain = CoTrainConfig {
        model: ModelSpec::SkipMlp { hidden_width: 16 },
        steps_per_iteration: 40,
        max_iterations: 2,
        batch_size: 128,
        ..cotrain_bench_config(3, 2)
    };
    let mct = MctConfig {
        model: ModelSpec::SkipMlp { hidden_width: 16 },
        total_steps: 60,
        warmup_steps: 20,
        unlabeled_batch_size: 128,
        eval_every: 10,
        ..mct_bench_config(3)
    };
    let probe = ProbeConfig {
        kind: ProbeKind::Mlp,
        hidden_width: 16,
        train: TrainConfig {
            steps: 100,
            batch_size: 128,
            ..Default::default()
        },
        seed: 5,
    };
    let independence = IndependenceConfig {
        hidden_width: 16,
        translator: TrainConfig {
            steps: 100,
            batch_size: 128,
            ..Default::default()
        },
        probe: probe.clone(),
        seed: 6,
    };

    let methods: Vec<(&str, Box<dyn Fn() -> Vec<u8>>)> = vec![
        ("synth-gen", Box::new(|| views(&data()))),
        (
            "supervised",
            Box::new(|| csv_bytes(&run_supervised(&data().data, &cotrain).unwrap().log)),
        ),
        ("cotrain", Box::new(|| csv_bytes(&run_cotraining(&data().data, &cotrain).unwrap().log))),
        ("mct", Box::new(|| csv_bytes(&run_mct(&data().data, &mct).unwrap().log))),
        (
            "sufficiency",
            Box::new(|| {
                let s = data();
                let reports: Vec<_> = (0..2)
                    .map(|v| {
                        let train = full_training_view(&s, v);
                        sufficiency_probe(&train, s.data.test.view(v), &SplitSpec::new(0.1), &probe, 50.0).unwrap()
                    })
                    .collect();
                csv_bytes(&sufficiency_rows(&reports))
            }),
        ),
        (
            "independence",
            Box::new(|| {
                let s = data();
                let (v1, v2) = (full_training_view(&s, 0), full_training_view(&s, 1));
                let r = independence_probe(
                    ViewSplit {
                        train: &v1,
                        test: s.data.test.view1(),
                    },
                    ViewSplit {
                        train: &v2,
                        test: s.data.test.view2(),
                    },
                    &independence,
                )
                .unwrap();
                csv_bytes(&translation_rows(&[r]))
            }),
        ),
    ];
    let mut differing = Vec::new();
    for (name, run) in &methods {
        let (a, b) = (run(), run());
        if a.is_empty() || a != b {
            differing.push(*name);
        }
    }
    let names: Vec<&str> = methods.iter().map(|(n, _)| *n).collect();
    check(
        differing.is_empty(),
        format!("bit-identical reruns for {names:?}, differing {differing:?}"),
    )
}

fn splits() -> Check {
    let view = uneven_view(&SPLIT_SIZES, 1);
    let y = view.labels().unwrap();
    let mut worst = 0.0f64;
    let mut reproducible = true;
    for fraction in [0.1, 0.01] {
        let spec = SplitSpec::new(fraction);
        reproducible &= spec.seed == 13;
        let a = stratified_split(&view, &spec).unwrap();
        let b = stratified_split(&view, &spec).unwrap();
        reproducible &= a == b;
        for (c, &n) in SPLIT_SIZES.iter().enumerate() {
            let got = a.labeled.iter().filter(|&&i| y[i] == c).count() as f64;
            worst = worst.max((got - (fraction * n as f64).max(1.0)).abs());
        }
    }
    let shot = uneven_view(&[10; 102], 2);
    let sy = shot.labels().unwrap();
    let mut floor_ok = true;
    for fraction in [0.1, 0.01] {
        let split = stratified_split(&shot, &SplitSpec::new(fraction)).unwrap();
        let mut counts = [0usize; 102];
        for &i in &split.labeled {
            counts[sy[i]] += 1;
        }
        floor_ok &= counts.iter().all(|&c| c >= 1);
    }
    check(
        worst <= 1.0 && reproducible && floor_ok,
        format!("seed 13, worst per-class deviation {worst}, reproducible {reproducible}, 102-class one-shot floor {floor_ok}"),
    )
}

fn independence() -> Check {
    let cfg = IndependenceConfig {
        hidden_width: 64,
        translator: TrainConfig {
            steps: 1000,
            batch_size: 512,
            optim: OptimConfig::default(),
        },
        probe: ProbeConfig {
            kind: ProbeKind::Linear,
            hidden_width: 64,
            train: TrainConfig {
                steps: 1000,
                batch_size: 512,
                optim: OptimConfig {
                    learning_rate: 1e-3,
                    ..Default::default()
                },
            },
            seed: 1,
        },
        seed: 2,
    };
    let mut ok = true;
    let mut notes = Vec::new();
    let mut ceiling = 0.0;
    for seed in 0..INDEPENDENCE_SEEDS {
        let s = generate_synthetic(&SyntheticSpec {
            seed,
            separation: INDEPENDENCE_SEPARATION,
            view2: ViewSignal::NoiseOnly,
            ..Default::default()
        })
        .unwrap();
        ceiling = 2.0 * 100.0 / s.data.class_count() as f64;
        let (v1, v2) = (full_training_view(&s, 0), full_training_view(&s, 1));
        let source = ViewSplit {
            train: &v1,
            test: s.data.test.view1(),
        };
        let identity = independence_probe(source, source, &cfg).unwrap();
        let noise = independence_probe(
            source,
            ViewSplit {
                train: &v2,
                test: s.data.test.view2(),
            },
            &cfg,
        )
        .unwrap();
        ok &= identity.accuracy >= IDENTITY_MIN && noise.accuracy <= ceiling;
        notes.push(format!("{:.1}/{:.1}", identity.accuracy, noise.accuracy));
    }
    check(
        ok,
        format!("identity/noise-target probe accuracy per seed {notes:?}, need >= {IDENTITY_MIN} and <= {ceiling}"),
    )
}

fn main() -> ExitCode {
    let start = Instant::now();
    let mut failed = 0;
    let mut emit = |name: &str, c: Check| {
        if !c.pass {
            failed += 1;
        }
        println!("{} {name}: {}", if c.pass { "PASS" } else { "FAIL" }, c.detail);
    };
    emit("gradient suite", gradient_suite());
    emit("mct step oracle", step_oracle());
    emit("joint prediction properties", joint_properties());
    emit("co-training bookkeeping", bookkeeping());
    let [a, b, c] = synthetic_benchmark();
    emit("synthetic benchmark (a) joint beats single views", a);
    emit("synthetic benchmark (b) mct improves on warmup", b);
    emit("synthetic benchmark (c) noise view degrades co-training", c);
    emit("determinism", determinism());
    emit("split correctness", splits());
    emit("independence discrimination", independence());
    println!("acceptance: {failed} failed, {:.1?}", start.elapsed());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
