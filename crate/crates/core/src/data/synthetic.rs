//! Synthetic two-view data with class-conditionally independent views.
//!
//! For every class `y` and view `v`, a class mean `mu_y^(v)` is drawn once per
//! seed with i.i.d. `N(0, separation^2 / (2 d_v))` coordinates, so the expected
//! distance between two class means is `separation`. An instance of class `y`
//! has views `mu_y^(v) + noise * z^(v)` with independent standard normal `z^(v)`:
//! given the label, the two views share nothing.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{PairedViews, SslData, ViewDataset};
use crate::error::{Error, Result};
use crate::math::Matrix;
use crate::rng::{seeded, DEFAULT_SEED};

/// What the second view carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViewSignal {
    /// Class mean plus noise.
    #[default]
    ClassConditional,
    /// Noise only: the same draws as `ClassConditional` with the means removed,
    /// so the view is independent of the label.
    NoiseOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub dim1: usize,
    pub dim2: usize,
    pub separation: f64,
    pub noise: f64,
    pub n_labeled: usize,
    pub n_unlabeled: usize,
    pub n_test: usize,
    pub seed: u64,
    pub view2: ViewSignal,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            classes: 10,
            dim1: 16,
            dim2: 16,
            separation: 4.0,
            noise: 1.0,
            n_labeled: 200,
            n_unlabeled: 19_800,
            n_test: 2_000,
            seed: DEFAULT_SEED,
            view2: ViewSignal::ClassConditional,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("synthetic spec: {m}")));
        if self.classes < 2 {
            return bad("need at least two classes");
        }
        if self.dim1 == 0 || self.dim2 == 0 {
            return bad("view dimensions must be positive");
        }
        if self.n_labeled == 0 || self.n_unlabeled == 0 || self.n_test == 0 {
            return bad("instance counts must be positive");
        }
        if !(self.separation > 0.0 && self.separation.is_finite()) {
            return bad("separation must be positive");
        }
        // Zero noise is allowed: it yields the degenerate, perfectly separable case.
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return bad("noise must be non-negative");
        }
        Ok(())
    }
}

/// Generated splits plus the ground truth hidden from the learners.
#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub data: SslData,
    /// True labels of the unlabeled pool, for diagnostics only.
    pub unlabeled_truth: Vec<usize>,
    /// `K x d1` class means of view 1.
    pub means1: Matrix,
    /// `K x d2` class means of view 2 (drawn even when view 2 is noise only).
    pub means2: Matrix,
}

fn draw_means<R: Rng>(rng: &mut R, classes: usize, dim: usize, separation: f64) -> Matrix {
    let scale = separation / (2.0 * dim as f64).sqrt();
    let data = (0..classes * dim)
        .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
        .collect();
    Matrix::from_vec(classes, dim, data).expect("finite means")
}

fn draw_split<R: Rng>(
    rng: &mut R,
    spec: &SyntheticSpec,
    means: [&Matrix; 2],
    n: usize,
    split: &str,
) -> Result<PairedViews> {
    let k = spec.classes;
    let mut labels: Vec<usize> = (0..n).map(|i| i % k).collect();
    labels.shuffle(rng);
    let dims = [spec.dim1, spec.dim2];
    let mut data = [Vec::with_capacity(n * dims[0]), Vec::with_capacity(n * dims[1])];
    for &y in &labels {
        for v in 0..2 {
            let with_mean = v == 0 || spec.view2 == ViewSignal::ClassConditional;
            for j in 0..dims[v] {
                let z: f64 = rng.sample(StandardNormal);
                let mu = if with_mean { means[v].row(y)[j] } else { 0.0 };
                // Stored at f32 precision so files and memory agree bit for bit.
                data[v].push(f64::from((mu + spec.noise * z) as f32));
            }
        }
    }
    let [d1, d2] = data;
    let v1 = ViewDataset::new(format!("view1_{split}"), Matrix::from_vec(n, dims[0], d1)?, Some(labels.clone()), k)?;
    let v2 = ViewDataset::new(format!("view2_{split}"), Matrix::from_vec(n, dims[1], d2)?, Some(labels), k)?;
    PairedViews::new(v1, v2)
}

/// Deterministic under `spec.seed`. Each split is exactly class balanced up to
/// `n mod K`, with instance order shuffled.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let mut rng = seeded(spec.seed);
    let means1 = draw_means(&mut rng, spec.classes, spec.dim1, spec.separation);
    let means2 = draw_means(&mut rng, spec.classes, spec.dim2, spec.separation);
    let means = [&means1, &means2];
    let labeled = draw_split(&mut rng, spec, means, spec.n_labeled, "labeled")?;
    let unlabeled_full = draw_split(&mut rng, spec, means, spec.n_unlabeled, "unlabeled")?;
    let test = draw_split(&mut rng, spec, means, spec.n_test, "test")?;
    let unlabeled_truth = unlabeled_full.labels().expect("generated with labels").to_vec();
    let data = SslData::new(labeled, unlabeled_full.without_labels(), test)?;
    Ok(SyntheticData {
        data,
        unlabeled_truth,
        means1,
        means2,
    })
}
