//! Embedding views: datasets, the `EMBVIEW1` file format, stratified
//! subsetting and a synthetic two-view generator.

mod format;
mod split;
mod synthetic;

pub use format::{load_view, read_view, save_view, write_view, VIEW_MAGIC, VIEW_VERSION};
pub use split::{stratified_split, Split, SplitSpec};
pub use synthetic::{generate_synthetic, SyntheticData, SyntheticSpec, ViewSignal};

use crate::error::{dim_err, Error, Result};
use crate::math::Matrix;

/// One view's embedding matrix plus optional labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewDataset {
    pub name: String,
    embeddings: Matrix,
    labels: Option<Vec<usize>>,
    class_count: usize,
}

impl ViewDataset {
    /// `class_count` must be zero exactly when `labels` is `None`.
    pub fn new(
        name: impl Into<String>,
        embeddings: Matrix,
        labels: Option<Vec<usize>>,
        class_count: usize,
    ) -> Result<Self> {
        if embeddings.cols() == 0 {
            return Err(dim_err("a view needs at least one embedding dimension"));
        }
        match &labels {
            Some(y) => {
                if class_count == 0 {
                    return Err(dim_err("labeled view needs a positive class count"));
                }
                if y.len() != embeddings.rows() {
                    return Err(dim_err(format!(
                        "{} labels for {} embeddings",
                        y.len(),
                        embeddings.rows()
                    )));
                }
                if let Some(bad) = y.iter().find(|&&l| l >= class_count) {
                    return Err(dim_err(format!(
                        "label {bad} out of range for {class_count} classes"
                    )));
                }
            }
            None if class_count != 0 => {
                return Err(dim_err("unlabeled view must have class count 0"));
            }
            None => {}
        }
        Ok(Self {
            name: name.into(),
            embeddings,
            labels,
            class_count,
        })
    }

    pub fn len(&self) -> usize {
        self.embeddings.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.embeddings.cols()
    }

    pub fn embeddings(&self) -> &Matrix {
        &self.embeddings
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    /// Labels, or an error naming the view when it is unlabeled.
    pub fn require_labels(&self) -> Result<&[usize]> {
        self.labels
            .as_deref()
            .ok_or_else(|| Error::Config(format!("view {} has no labels", self.name)))
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn subset(&self, indices: &[usize]) -> ViewDataset {
        ViewDataset {
            name: self.name.clone(),
            embeddings: self.embeddings.gather_rows(indices),
            labels: self
                .labels
                .as_ref()
                .map(|y| indices.iter().map(|&i| y[i]).collect()),
            class_count: self.class_count,
        }
    }

    pub fn without_labels(&self) -> ViewDataset {
        ViewDataset {
            name: self.name.clone(),
            embeddings: self.embeddings.clone(),
            labels: None,
            class_count: 0,
        }
    }

    /// Same instances and labels with different embeddings.
    pub fn with_embeddings(&self, name: impl Into<String>, embeddings: Matrix) -> Result<ViewDataset> {
        if embeddings.rows() != self.len() {
            return Err(Error::Alignment(format!(
                "{} rows replacing {}",
                embeddings.rows(),
                self.len()
            )));
        }
        ViewDataset::new(name, embeddings, self.labels.clone(), self.class_count)
    }
}

/// Concatenate two aligned views instance by instance: row `i` becomes
/// `[a_i | b_i]`.
pub fn concat_views(a: &ViewDataset, b: &ViewDataset) -> Result<ViewDataset> {
    if a.len() != b.len() {
        return Err(Error::Alignment(format!(
            "views {} and {} have {} and {} instances",
            a.name,
            b.name,
            a.len(),
            b.len()
        )));
    }
    if a.labels != b.labels || a.class_count != b.class_count {
        return Err(Error::Alignment(format!(
            "views {} and {} carry different labels",
            a.name, b.name
        )));
    }
    ViewDataset::new(
        format!("{}+{}", a.name, b.name),
        a.embeddings.hcat(&b.embeddings)?,
        a.labels.clone(),
        a.class_count,
    )
}

/// Two complementary views of the same instances.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedViews {
    view1: ViewDataset,
    view2: ViewDataset,
}

impl PairedViews {
    pub fn new(view1: ViewDataset, view2: ViewDataset) -> Result<Self> {
        if view1.len() != view2.len() {
            return Err(Error::Alignment(format!(
                "view {} has {} instances, view {} has {}",
                view1.name,
                view1.len(),
                view2.name,
                view2.len()
            )));
        }
        if view1.labels != view2.labels || view1.class_count != view2.class_count {
            return Err(Error::Alignment(format!(
                "views {} and {} disagree on labels",
                view1.name, view2.name
            )));
        }
        Ok(Self { view1, view2 })
    }

    pub fn view1(&self) -> &ViewDataset {
        &self.view1
    }

    pub fn view2(&self) -> &ViewDataset {
        &self.view2
    }

    /// View `v` (0 or 1).
    pub fn view(&self, v: usize) -> &ViewDataset {
        match v {
            0 => &self.view1,
            1 => &self.view2,
            _ => panic!("view index {v} out of range"),
        }
    }

    /// The complementary view of the one at index `v`.
    pub fn other_view(&self, v: usize) -> &ViewDataset {
        self.view(1 - v)
    }

    pub fn len(&self) -> usize {
        self.view1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.view1.labels()
    }

    pub fn class_count(&self) -> usize {
        self.view1.class_count()
    }

    pub fn subset(&self, indices: &[usize]) -> PairedViews {
        PairedViews {
            view1: self.view1.subset(indices),
            view2: self.view2.subset(indices),
        }
    }

    pub fn without_labels(&self) -> PairedViews {
        PairedViews {
            view1: self.view1.without_labels(),
            view2: self.view2.without_labels(),
        }
    }

    pub fn into_views(self) -> (ViewDataset, ViewDataset) {
        (self.view1, self.view2)
    }
}

/// Labeled pool, unlabeled pool and test set, each with both views.
#[derive(Debug, Clone, PartialEq)]
pub struct SslData {
    pub labeled: PairedViews,
    pub unlabeled: PairedViews,
    pub test: PairedViews,
}

impl SslData {
    pub fn new(labeled: PairedViews, unlabeled: PairedViews, test: PairedViews) -> Result<Self> {
        let k = labeled.class_count();
        if labeled.labels().is_none() || test.labels().is_none() {
            return Err(Error::Config(
                "labeled and test sets must carry labels".to_string(),
            ));
        }
        if test.class_count() != k {
            return Err(Error::Alignment(format!(
                "labeled set has {k} classes, test set has {}",
                test.class_count()
            )));
        }
        for v in 0..2 {
            let d = labeled.view(v).dim();
            if unlabeled.view(v).dim() != d || test.view(v).dim() != d {
                return Err(dim_err(format!(
                    "view {} dimension differs across labeled/unlabeled/test",
                    v + 1
                )));
            }
        }
        Ok(Self {
            labeled,
            unlabeled,
            test,
        })
    }

    pub fn class_count(&self) -> usize {
        self.labeled.class_count()
    }
}
