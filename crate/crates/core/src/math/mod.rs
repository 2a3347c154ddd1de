//! Dense numerical kernels, losses and the optimizer/schedule pair shared by
//! every training loop.
//!
//! All arithmetic is carried out in `f64`. Embeddings are stored as `f32` on
//! disk and widened on load, so the in-memory path is exact with respect to
//! the files.

pub mod kernels;
mod optim;

pub use optim::{AdamConfig, AdamState, LossEma, PlateauSchedule};

use crate::error::{dim_err, Error, Result};

/// Lower bound applied to probabilities before taking a logarithm.
pub const LOG_CLAMP: f64 = 1e-12;

/// Tolerance on the unit-sum constraint of a [`ProbVector`].
pub const SIMPLEX_TOL: f64 = 1e-6;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Build a matrix from row-major data, rejecting a length mismatch or any
    /// non-finite entry.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(dim_err(format!(
                "matrix data has {} entries, expected {rows}x{cols}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NumericDomain(format!(
                "non-finite matrix entry at row {}, col {}",
                pos / cols.max(1),
                pos % cols.max(1)
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(dim_err("ragged rows"));
        }
        Self::from_vec(rows.len(), cols, rows.concat())
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        // chunks_exact(0) panics; a zero-width matrix still has `rows` empty rows.
        (0..self.rows).map(move |i| self.row(i))
    }

    /// New matrix made of the given rows, in the given order.
    pub fn gather_rows(&self, indices: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: indices.len(),
            cols: self.cols,
            data,
        }
    }

    /// Horizontal concatenation `[self | other]`.
    pub fn hcat(&self, other: &Matrix) -> Result<Matrix> {
        if self.rows != other.rows {
            return Err(dim_err(format!(
                "cannot concatenate {} rows with {} rows",
                self.rows, other.rows
            )));
        }
        let cols = self.cols + other.cols;
        let mut data = Vec::with_capacity(self.rows * cols);
        for i in 0..self.rows {
            data.extend_from_slice(self.row(i));
            data.extend_from_slice(other.row(i));
        }
        Ok(Matrix {
            rows: self.rows,
            cols,
            data,
        })
    }

    /// Vertical concatenation.
    pub fn vcat(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.cols {
            return Err(dim_err(format!(
                "cannot stack {} columns on {} columns",
                other.cols, self.cols
            )));
        }
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Ok(Matrix {
            rows: self.rows + other.rows,
            cols: self.cols,
            data,
        })
    }
}

/// A point on the probability simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbVector(Vec<f64>);

impl ProbVector {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(dim_err("probability vector needs at least one class"));
        }
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::NumericDomain(
                "probability outside [0, 1]".to_string(),
            ));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::NumericDomain(format!(
                "probabilities sum to {sum}"
            )));
        }
        Ok(Self(probs))
    }

    pub fn uniform(k: usize) -> Self {
        Self(vec![1.0 / k as f64; k])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

/// Index of the largest entry; the lowest index wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Numerically stable softmax, in place. Shared by [`softmax`] and the batched
/// network forward so both take the same floating-point path.
pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

pub fn softmax(logits: &[f64]) -> Result<ProbVector> {
    if logits.is_empty() {
        return Err(dim_err("softmax of an empty vector"));
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericDomain("non-finite logit".to_string()));
    }
    let mut out = logits.to_vec();
    softmax_in_place(&mut out);
    Ok(ProbVector(out))
}

/// Training target for a single prediction.
#[derive(Debug, Clone, Copy)]
pub enum Target<'a> {
    Class(usize),
    Soft(&'a [f64]),
}

/// Cross-entropy `-sum_i t_i ln p_i`, with `p` clamped at [`LOG_CLAMP`].
pub fn cross_entropy(target: Target<'_>, prediction: &[f64]) -> Result<f64> {
    match target {
        Target::Class(y) => {
            let p = prediction.get(y).ok_or_else(|| {
                dim_err(format!(
                    "class index {y} out of range for {} classes",
                    prediction.len()
                ))
            })?;
            Ok(-p.max(LOG_CLAMP).ln())
        }
        Target::Soft(t) => {
            if t.len() != prediction.len() {
                return Err(dim_err(format!(
                    "soft target has {} classes, prediction has {}",
                    t.len(),
                    prediction.len()
                )));
            }
            Ok(-t
                .iter()
                .zip(prediction)
                .map(|(ti, pi)| ti * pi.max(LOG_CLAMP).ln())
                .sum::<f64>())
        }
    }
}

/// Batch of training targets, one per row of a prediction matrix.
#[derive(Debug, Clone, Copy)]
pub enum Targets<'a> {
    Hard(&'a [usize]),
    /// Probability rows for classification, raw values for regression.
    Soft(&'a Matrix),
}

impl Targets<'_> {
    pub fn len(&self) -> usize {
        match self {
            Targets::Hard(y) => y.len(),
            Targets::Soft(m) => m.rows(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn row(&self, i: usize) -> Target<'_> {
        match self {
            Targets::Hard(y) => Target::Class(y[i]),
            Targets::Soft(m) => Target::Soft(m.row(i)),
        }
    }
}

/// Empirical risk: mean cross-entropy over the rows of `probs`.
pub fn mean_cross_entropy(probs: &Matrix, targets: Targets<'_>) -> Result<f64> {
    if targets.len() != probs.rows() {
        return Err(dim_err(format!(
            "{} targets for {} predictions",
            targets.len(),
            probs.rows()
        )));
    }
    if probs.rows() == 0 {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for (i, row) in probs.iter_rows().enumerate() {
        total += cross_entropy(targets.row(i), row)?;
    }
    Ok(total / probs.rows() as f64)
}

/// Mean squared error over every entry.
pub fn mean_squared_error(outputs: &Matrix, targets: &Matrix) -> Result<f64> {
    if outputs.rows() != targets.rows() || outputs.cols() != targets.cols() {
        return Err(dim_err(format!(
            "outputs {}x{} vs targets {}x{}",
            outputs.rows(),
            outputs.cols(),
            targets.rows(),
            targets.cols()
        )));
    }
    let n = outputs.data().len();
    if n == 0 {
        return Ok(0.0);
    }
    let sum: f64 = outputs
        .data()
        .iter()
        .zip(targets.data())
        .map(|(o, t)| (o - t) * (o - t))
        .sum();
    Ok(sum / n as f64)
}

/// Element-wise product of two non-negative vectors, renormalized to unit L1
/// norm. The inputs need not be normalized themselves.
pub fn hadamard_normalize(p: &[f64], q: &[f64]) -> Result<ProbVector> {
    if p.len() != q.len() {
        return Err(dim_err(format!(
            "hadamard of lengths {} and {}",
            p.len(),
            q.len()
        )));
    }
    if p.iter().chain(q).any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::NumericDomain(
            "hadamard inputs must be finite and non-negative".to_string(),
        ));
    }
    let mut prod: Vec<f64> = p.iter().zip(q).map(|(a, b)| a * b).collect();
    let norm: f64 = prod.iter().sum();
    if norm <= 0.0 {
        return Err(Error::DegenerateProduct);
    }
    for v in &mut prod {
        *v /= norm;
    }
    Ok(ProbVector(prod))
}

/// Inner product of two flattened gradients over the same parameter set.
pub fn grad_dot(g1: &[f64], g2: &[f64]) -> Result<f64> {
    if g1.len() != g2.len() {
        return Err(dim_err(format!(
            "gradient lengths {} and {} differ",
            g1.len(),
            g2.len()
        )));
    }
    Ok(kernels::dot(g1, g2))
}
