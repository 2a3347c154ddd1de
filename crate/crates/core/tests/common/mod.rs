//! Test support: random tiny instances and a straight-line reference
//! implementation of the networks and of one meta co-training step that
//! shares no code with the library kernels.
#![allow(dead_code)]

pub mod bookkeeping;
pub mod suites;

use mct_core::math::{Matrix, Targets};
use mct_core::models::{Network, OutputKind};
use mct_core::rng::{seeded, SeededRng};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> SeededRng {
    seeded(seed)
}

pub fn normal_matrix(rng: &mut SeededRng, rows: usize, cols: usize, scale: f64) -> Matrix {
    let data = (0..rows * cols)
        .map(|_| { let z: f64 = StandardNormal.sample(rng); scale * z })
        .collect::<Vec<f64>>();
    Matrix::from_vec(rows, cols, data).unwrap()
}

pub fn labels(rng: &mut SeededRng, n: usize, k: usize) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(0..k)).collect()
}

pub fn prob_matrix(rng: &mut SeededRng, rows: usize, k: usize) -> Matrix {
    let mut data = Vec::with_capacity(rows * k);
    for _ in 0..rows {
        let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
        let s: f64 = raw.iter().sum();
        data.extend(raw.iter().map(|v| v / s));
    }
    Matrix::from_vec(rows, k, data).unwrap()
}

pub fn random_network(rng: &mut SeededRng, d: usize, hidden: Vec<usize>, k: usize, output: OutputKind) -> Network {
    let mut net = Network::new(d, hidden, k, output);
    net.init_uniform(rng);
    net
}

/// Central finite-difference gradient of the network's mean training loss.
pub fn fd_gradient(net: &Network, x: &Matrix, targets: Targets<'_>, h: f64) -> Vec<f64> {
    let mut probe = net.clone();
    let base = net.params().values().to_vec();
    let mut out = vec![0.0; base.len()];
    for i in 0..base.len() {
        let mut loss_at = |delta: f64| {
            let mut vals = base.clone();
            vals[i] += delta;
            probe.params_mut().values_mut().copy_from_slice(&vals);
            let (o, _) = probe.forward(x).unwrap();
            probe.loss(&o, targets).unwrap()
        };
        out[i] = (loss_at(h) - loss_at(-h)) / (2.0 * h);
    }
    out
}

/// Elementwise relative error with a floor on the denominator.
pub fn max_relative_error(a: &[f64], b: &[f64], floor: f64) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
        .fold(0.0, f64::max)
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Dense-skip network written out with explicit loops.
#[derive(Clone, Debug)]
pub struct RefNet {
    /// Per layer (hidden layers then head): weights `[out][in]`, bias `[out]`.
    pub w: Vec<Vec<Vec<f64>>>,
    pub b: Vec<Vec<f64>>,
    pub softmax: bool,
}

impl RefNet {
    pub fn from_network(net: &Network) -> Self {
        let mut w = Vec::new();
        let mut b = Vec::new();
        let hidden = net.hidden_widths().len();
        let names: Vec<String> = (0..hidden).map(|l| format!("hidden{l}")).chain(["head".to_string()]).collect();
        for name in names {
            let wb = net.params().block(&format!("{name}.weight")).unwrap();
            let bb = net.params().block(&format!("{name}.bias")).unwrap().to_vec();
            let out = bb.len();
            let inp = wb.len() / out;
            w.push((0..out).map(|o| wb[o * inp..(o + 1) * inp].to_vec()).collect());
            b.push(bb);
        }
        Self {
            w,
            b,
            softmax: net.output_kind() == OutputKind::Softmax,
        }
    }

    /// Parameters in the library's block order.
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.w.iter().zip(&self.b) {
            for row in w {
                out.extend_from_slice(row);
            }
            out.extend_from_slice(b);
        }
        out
    }

    pub fn with_flat(&self, flat: &[f64]) -> Self {
        let mut next = self.clone();
        let mut i = 0;
        for (w, b) in next.w.iter_mut().zip(next.b.iter_mut()) {
            for row in w.iter_mut() {
                for v in row.iter_mut() {
                    *v = flat[i];
                    i += 1;
                }
            }
            for v in b.iter_mut() {
                *v = flat[i];
                i += 1;
            }
        }
        assert_eq!(i, flat.len());
        next
    }

    /// Concatenated features `[x, h1, h2, ...]` and the head output.
    fn forward_row(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let layers = self.w.len();
        let mut feats = x.to_vec();
        for l in 0..layers - 1 {
            let mut h = Vec::new();
            for (wrow, bias) in self.w[l].iter().zip(&self.b[l]) {
                let mut z = *bias;
                for (wv, f) in wrow.iter().zip(&feats) {
                    z += wv * f;
                }
                h.push(if z > 0.0 { z } else { 0.0 });
            }
            feats.extend(h);
        }
        let mut out = Vec::new();
        for (wrow, bias) in self.w[layers - 1].iter().zip(&self.b[layers - 1]) {
            let mut z = *bias;
            for (wv, f) in wrow.iter().zip(&feats) {
                z += wv * f;
            }
            out.push(z);
        }
        if self.softmax {
            let m = out.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = out.iter().map(|z| (z - m).exp()).collect();
            let s: f64 = e.iter().sum();
            out = e.iter().map(|v| v / s).collect();
        }
        (feats, out)
    }

    /// Smallest |pre-activation| over all hidden units and rows; finite
    /// differences are unreliable when this is near zero.
    pub fn min_abs_preactivation(&self, x: &Matrix) -> f64 {
        let layers = self.w.len();
        let mut best = f64::INFINITY;
        for r in 0..x.rows() {
            let mut feats = x.row(r).to_vec();
            for l in 0..layers - 1 {
                let mut h = Vec::new();
                for (wrow, bias) in self.w[l].iter().zip(&self.b[l]) {
                    let z = bias + wrow.iter().zip(&feats).map(|(a, b)| a * b).sum::<f64>();
                    best = best.min(z.abs());
                    h.push(z.max(0.0));
                }
                feats.extend(h);
            }
        }
        best
    }

    pub fn predict(&self, x: &Matrix) -> Vec<Vec<f64>> {
        (0..x.rows()).map(|r| self.forward_row(x.row(r)).1).collect()
    }

    /// Gradient of mean cross-entropy against target distributions (softmax)
    /// or of mean squared error against target values (identity head).
    pub fn gradient(&self, x: &Matrix, targets: &[Vec<f64>]) -> Vec<f64> {
        let layers = self.w.len();
        let n = x.rows();
        let mut gw: Vec<Vec<Vec<f64>>> = self.w.iter().map(|w| w.iter().map(|r| vec![0.0; r.len()]).collect()).collect();
        let mut gb: Vec<Vec<f64>> = self.b.iter().map(|b| vec![0.0; b.len()]).collect();
        for r in 0..n {
            let (feats, out) = self.forward_row(x.row(r));
            let k = out.len();
            let dz: Vec<f64> = if self.softmax {
                (0..k).map(|j| (out[j] - targets[r][j]) / n as f64).collect()
            } else {
                (0..k).map(|j| 2.0 * (out[j] - targets[r][j]) / (n * k) as f64).collect()
            };
            let mut dfeat = vec![0.0; feats.len()];
            let head = layers - 1;
            for o in 0..k {
                gb[head][o] += dz[o];
                for j in 0..feats.len() {
                    gw[head][o][j] += dz[o] * feats[j];
                    dfeat[j] += self.w[head][o][j] * dz[o];
                }
            }
            for l in (0..layers - 1).rev() {
                let inp = self.w[l][0].len();
                for o in 0..self.w[l].len() {
                    let act = feats[inp + o];
                    if act <= 0.0 {
                        continue;
                    }
                    let d = dfeat[inp + o];
                    gb[l][o] += d;
                    for j in 0..inp {
                        gw[l][o][j] += d * feats[j];
                        dfeat[j] += self.w[l][o][j] * d;
                    }
                }
            }
        }
        let mut flat = Vec::new();
        for (w, b) in gw.iter().zip(&gb) {
            for row in w {
                flat.extend_from_slice(row);
            }
            flat.extend_from_slice(b);
        }
        flat
    }

    pub fn gradient_hard(&self, x: &Matrix, y: &[usize]) -> Vec<f64> {
        let k = self.b.last().unwrap().len();
        let t: Vec<Vec<f64>> = y
            .iter()
            .map(|&c| (0..k).map(|j| if j == c { 1.0 } else { 0.0 }).collect())
            .collect();
        self.gradient(x, &t)
    }
}

/// Inverse-CDF categorical draw, one uniform per row.
pub fn ref_sample(probs: &[Vec<f64>], rng: &mut SeededRng) -> Vec<usize> {
    probs
        .iter()
        .map(|p| {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut last = 0;
            for (k, &v) in p.iter().enumerate() {
                if v > 0.0 {
                    last = k;
                }
                acc += v;
                if u < acc {
                    return k;
                }
            }
            last
        })
        .collect()
}

pub struct RefStepInput<'a> {
    pub labeled_x: [&'a Matrix; 2],
    pub labeled_y: [&'a [usize]; 2],
    pub unlabeled: [&'a Matrix; 2],
    pub eta: [f64; 2],
    pub supervised_weight: f64,
    /// Evaluate the labeled gradient after the student step.
    pub updated_eval: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// One plain-gradient meta co-training step, written out in order. Returns
/// the new flat parameters of both models and the two `h` values.
pub fn ref_mct_step(nets: [&RefNet; 2], input: &RefStepInput<'_>, rng: &mut SeededRng) -> ([Vec<f64>; 2], [f64; 2]) {
    let y1 = nets[0].predict(input.unlabeled[0]);
    let y2 = nets[1].predict(input.unlabeled[1]);
    let pl1 = ref_sample(&y1, rng);
    let pl2 = ref_sample(&y2, rng);
    ref_mct_step_with_labels(nets, input, [&pl1, &pl2])
}

pub fn ref_mct_step_with_labels(nets: [&RefNet; 2], input: &RefStepInput<'_>, pl: [&[usize]; 2]) -> ([Vec<f64>; 2], [f64; 2]) {
    let theta1 = nets[0].flat();
    let theta2 = nets[1].flat();

    // Student steps: each model fits the other's pseudo-labels.
    let gs1 = nets[0].gradient_hard(input.unlabeled[0], pl[1]);
    let gs2 = nets[1].gradient_hard(input.unlabeled[1], pl[0]);
    let theta1p: Vec<f64> = theta1.iter().zip(&gs1).map(|(t, g)| t - input.eta[0] * g).collect();
    let theta2p: Vec<f64> = theta2.iter().zip(&gs2).map(|(t, g)| t - input.eta[1] * g).collect();

    let (e1, e2) = if input.updated_eval {
        (nets[0].with_flat(&theta1p), nets[1].with_flat(&theta2p))
    } else {
        (nets[0].clone(), nets[1].clone())
    };
    let gl1 = e1.gradient_hard(input.labeled_x[0], input.labeled_y[0]);
    let gl2 = e2.gradient_hard(input.labeled_x[1], input.labeled_y[1]);

    let h1 = dot(&gl2, &gs2);
    let h2 = dot(&gl1, &gs1);

    // Teacher steps on each model's own pseudo-labels at start-of-step params.
    let gt1 = nets[0].gradient_hard(input.unlabeled[0], pl[0]);
    let gt2 = nets[1].gradient_hard(input.unlabeled[1], pl[1]);
    let mut out1 = theta1p;
    let mut out2 = theta2p;
    for i in 0..out1.len() {
        out1[i] -= input.eta[0] * h1 * gt1[i];
    }
    for i in 0..out2.len() {
        out2[i] -= input.eta[1] * h2 * gt2[i];
    }
    if input.supervised_weight != 0.0 {
        for i in 0..out1.len() {
            out1[i] -= input.eta[0] * input.supervised_weight * gl1[i];
        }
        for i in 0..out2.len() {
            out2[i] -= input.eta[1] * input.supervised_weight * gl2[i];
        }
    }
    ([out1, out2], [h1, h2])
}

/// Labeled and unlabeled training rows of one view, with true labels.
pub fn full_training_view(s: &mct_core::data::SyntheticData, v: usize) -> mct_core::ViewDataset {
    let l = s.data.labeled.view(v);
    let u = s.data.unlabeled.view(v);
    let x = l.embeddings().vcat(u.embeddings()).unwrap();
    let y = [l.labels().unwrap(), &s.unlabeled_truth[..]].concat();
    mct_core::ViewDataset::new(l.name.replace("_labeled", "_train"), x, Some(y), l.class_count()).unwrap()
}
