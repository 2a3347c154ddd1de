//! Fixtures shared between the unit-level suites and the acceptance run.

use mct_core::cotrain::CoTrainConfig;
use mct_core::data::{generate_synthetic, SyntheticSpec, ViewDataset, ViewSignal};
use mct_core::math::{Matrix, Targets};
use mct_core::mct::{mct_step, LabeledEval, StepBatch, StepConfig};
use mct_core::models::{ModelSpec, Network, OutputKind};
use mct_core::train::{OptimConfig, Optimizer};
use rand::seq::SliceRandom;
use rand::Rng;

use super::*;

pub const FD_STEP: f64 = 1e-5;
pub const FD_TOL: f64 = 1e-4;
pub const FD_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy)]
pub enum Family {
    Linear,
    SkipSoftmaxHard,
    SkipSoftmaxSoft,
    SkipRegression,
}

/// Instances with a hidden unit this close to its kink are redrawn.
pub const KINK_MARGIN: f64 = 1e-3;

pub fn fd_case(seed: u64, family: Family) -> f64 {
    let mut r = rng(seed);
    let (net, x, n, k) = loop {
        let d = r.random_range(1..=8);
        let k = r.random_range(2..=4);
        let n = r.random_range(1..=6);
        let hidden = match family {
            Family::Linear => Vec::new(),
            _ => (0..3).map(|_| r.random_range(1..=8)).collect(),
        };
        let output = match family {
            Family::SkipRegression => OutputKind::Identity,
            _ => OutputKind::Softmax,
        };
        let net = random_network(&mut r, d, hidden, k, output);
        let x = normal_matrix(&mut r, n, d, 1.0);
        if RefNet::from_network(&net).min_abs_preactivation(&x) > KINK_MARGIN {
            break (net, x, n, k);
        }
    };
    let (_, trace) = net.forward(&x).unwrap();
    let (analytic, numeric) = match family {
        Family::Linear | Family::SkipSoftmaxHard => {
            let y = labels(&mut r, n, k);
            (
                net.backward(&trace, Targets::Hard(&y), 1.0).unwrap(),
                fd_gradient(&net, &x, Targets::Hard(&y), FD_STEP),
            )
        }
        Family::SkipSoftmaxSoft => {
            let t = prob_matrix(&mut r, n, k);
            (
                net.backward(&trace, Targets::Soft(&t), 1.0).unwrap(),
                fd_gradient(&net, &x, Targets::Soft(&t), FD_STEP),
            )
        }
        Family::SkipRegression => {
            let t = normal_matrix(&mut r, n, k, 1.0);
            (
                net.backward(&trace, Targets::Soft(&t), 1.0).unwrap(),
                fd_gradient(&net, &x, Targets::Soft(&t), FD_STEP),
            )
        }
    };
    max_relative_error(&analytic, &numeric, FD_FLOOR)
}

pub const FAMILIES: [Family; 4] = [Family::Linear, Family::SkipSoftmaxHard, Family::SkipSoftmaxSoft, Family::SkipRegression];

pub struct Instance {
    pub models: [Network; 2],
    pub batch: StepBatch,
}

pub fn tiny_instance(seed: u64, unlabeled_rows: usize) -> Instance {
    let mut r = rng(seed);
    let (d, k, w, b) = (3, 2, 4, 4);
    let models = [
        random_network(&mut r, d, vec![w; 3], k, OutputKind::Softmax),
        random_network(&mut r, d, vec![w; 3], k, OutputKind::Softmax),
    ];
    let batch = StepBatch {
        labeled_x: [normal_matrix(&mut r, b, d, 1.0), normal_matrix(&mut r, b, d, 1.0)],
        labeled_y: [labels(&mut r, b, k), labels(&mut r, b, k)],
        unlabeled: [normal_matrix(&mut r, unlabeled_rows, d, 1.0), normal_matrix(&mut r, unlabeled_rows, d, 1.0)],
    };
    Instance { models, batch }
}

pub const ORACLE_TOL: f64 = 1e-10;

/// Largest relative deviation between `mct_step` under raw SGD and the
/// reference step, over both parameter vectors and both `h` values.
pub fn oracle_deviation(seed: u64, eval: LabeledEval) -> f64 {
    let inst = tiny_instance(seed, 4);
    let mut r = rng(seed);
    let eta = [r.random_range(0.01..0.5), r.random_range(0.01..0.5)];
    let cfg = StepConfig {
        lr: eta,
        supervised_weight: 1.0,
        labeled_eval: eval,
    };
    let refs = [RefNet::from_network(&inst.models[0]), RefNet::from_network(&inst.models[1])];
    let input = RefStepInput {
        labeled_x: [&inst.batch.labeled_x[0], &inst.batch.labeled_x[1]],
        labeled_y: [&inst.batch.labeled_y[0], &inst.batch.labeled_y[1]],
        unlabeled: [&inst.batch.unlabeled[0], &inst.batch.unlabeled[1]],
        eta,
        supervised_weight: 1.0,
        updated_eval: eval == LabeledEval::Updated,
    };
    let (want, want_h) = ref_mct_step([&refs[0], &refs[1]], &input, &mut rng(seed + 100));

    let mut models = inst.models.clone();
    let mut optims = [Optimizer::Sgd, Optimizer::Sgd];
    let trace = mct_step(&mut models, &mut optims, &inst.batch, &cfg, &mut rng(seed + 100)).unwrap();
    let mut dev = 0.0f64;
    for v in 0..2 {
        let got = models[v].params().values();
        let scale = want[v].iter().fold(1.0f64, |m, x| m.max(x.abs()));
        dev = dev.max(max_abs_diff(got, &want[v]) / scale);
        dev = dev.max((trace.h[v] - want_h[v]).abs() / want_h[v].abs().max(1.0));
    }
    dev
}

pub fn toy_pool(seed: u64, view2: ViewSignal) -> mct_core::SslData {
    generate_synthetic(&SyntheticSpec {
        classes: 3,
        dim1: 4,
        dim2: 4,
        separation: 3.0,
        n_labeled: 9,
        n_unlabeled: 50,
        n_test: 30,
        seed,
        view2,
        ..Default::default()
    })
    .unwrap()
    .data
}

pub fn toy_config(k_fraction: f64, max_iterations: usize) -> CoTrainConfig {
    CoTrainConfig {
        model: ModelSpec::Linear,
        steps_per_iteration: 30,
        k_fraction,
        max_iterations,
        batch_size: 16,
        optim: OptimConfig {
            learning_rate: 0.05,
            ..Default::default()
        },
        ..Default::default()
    }
}

/// Labeled view with the given per-class sizes, instances shuffled.
pub fn uneven_view(sizes: &[usize], seed: u64) -> ViewDataset {
    let mut y: Vec<usize> = sizes.iter().enumerate().flat_map(|(c, &n)| std::iter::repeat_n(c, n)).collect();
    y.shuffle(&mut rng(seed));
    let x = Matrix::zeros(y.len(), 1);
    ViewDataset::new("uneven", x, Some(y), sizes.len()).unwrap()
}

