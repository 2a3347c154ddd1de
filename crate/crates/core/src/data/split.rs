use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::ViewDataset;
use crate::error::{Error, Result};
use crate::rng::{seeded, DEFAULT_SEED};

/// How to draw a labeled subset from a labeled pool.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    /// Fraction in (0, 1] of each class (or of the whole pool) to keep labeled.
    pub fraction: f64,
    pub seed: u64,
    pub stratified: bool,
}

impl SplitSpec {
    pub fn new(fraction: f64) -> Self {
        Self {
            fraction,
            seed: DEFAULT_SEED,
            stratified: true,
        }
    }
}

/// Index sets produced by [`stratified_split`]. Both lists are sorted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub labeled: Vec<usize>,
    pub remainder: Vec<usize>,
    /// Classes whose rounded share was zero and were given one sample anyway.
    pub floored_classes: Vec<usize>,
}

impl Split {
    pub fn apply(&self, view: &ViewDataset) -> (ViewDataset, ViewDataset) {
        (view.subset(&self.labeled), view.subset(&self.remainder))
    }
}

/// Seeded subset selection. In stratified mode each class keeps
/// `round(fraction * class_size)` instances, never fewer than one for a
/// non-empty class.
pub fn stratified_split(view: &ViewDataset, spec: &SplitSpec) -> Result<Split> {
    if !(spec.fraction > 0.0 && spec.fraction <= 1.0) {
        return Err(Error::Config(format!(
            "split fraction {} must lie in (0, 1]",
            spec.fraction
        )));
    }
    let labels = view.require_labels()?;
    let mut rng = seeded(spec.seed);
    let mut labeled = Vec::new();
    let mut floored = Vec::new();

    if spec.stratified {
        let mut by_class = vec![Vec::new(); view.class_count()];
        for (i, &y) in labels.iter().enumerate() {
            by_class[y].push(i);
        }
        for (class, mut members) in by_class.into_iter().enumerate() {
            if members.is_empty() {
                continue;
            }
            members.shuffle(&mut rng);
            let mut take = (spec.fraction * members.len() as f64).round() as usize;
            if take == 0 {
                take = 1;
                floored.push(class);
            }
            labeled.extend_from_slice(&members[..take.min(members.len())]);
        }
    } else {
        let mut all: Vec<usize> = (0..labels.len()).collect();
        all.shuffle(&mut rng);
        let take = (spec.fraction * all.len() as f64).round() as usize;
        labeled.extend_from_slice(&all[..take]);
    }

    labeled.sort_unstable();
    let mut in_labeled = vec![false; labels.len()];
    for &i in &labeled {
        in_labeled[i] = true;
    }
    let remainder = (0..labels.len()).filter(|&i| !in_labeled[i]).collect();
    Ok(Split {
        labeled,
        remainder,
        floored_classes: floored,
    })
}
