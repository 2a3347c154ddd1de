use rand::Rng;

use crate::math::{argmax, Matrix};

/// Draw one class per row from the categorical distribution in that row, by
/// inverting the cumulative distribution at a single uniform draw.
pub fn sample_pseudo_labels<R: Rng + ?Sized>(probs: &Matrix, rng: &mut R) -> Vec<usize> {
    probs
        .iter_rows()
        .map(|row| {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            for (k, &p) in row.iter().enumerate() {
                acc += p;
                if u < acc {
                    return k;
                }
            }
            // Rounding left the cumulative sum just below `u`.
            row.iter().rposition(|&p| p > 0.0).unwrap_or(0)
        })
        .collect()
}

/// Row-wise arg max; ties resolve to the lowest class index.
pub fn predict_hard(probs: &Matrix) -> Vec<usize> {
    probs.iter_rows().map(argmax).collect()
}
