//! Row-parallel affine kernels over strided row-major buffers.
//!
//! Each output element is accumulated by exactly one task in a fixed order,
//! so results are bit-identical regardless of the thread count.

use rayon::prelude::*;

const MIN_ROWS_PER_TASK: usize = 32;

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// For each row `r` of `features` (row stride `stride`), writes
/// `bias + W · features[r, ..in_cols]` into `features[r, in_cols..in_cols + out_dim]`,
/// optionally rectified. `weight` is `out_dim x in_cols`.
pub fn affine_append(
    features: &mut [f64],
    stride: usize,
    in_cols: usize,
    weight: &[f64],
    bias: &[f64],
    relu: bool,
) {
    let out_dim = bias.len();
    debug_assert!(in_cols + out_dim <= stride);
    debug_assert_eq!(weight.len(), out_dim * in_cols);
    features
        .par_chunks_mut(stride)
        .with_min_len(MIN_ROWS_PER_TASK)
        .for_each(|row| {
            let (input, rest) = row.split_at_mut(in_cols);
            for (o, slot) in rest[..out_dim].iter_mut().enumerate() {
                let z = bias[o] + dot(input, &weight[o * in_cols..(o + 1) * in_cols]);
                *slot = if relu { z.max(0.0) } else { z };
            }
        });
}

/// `out[r, o] = bias[o] + W[o] · input[r, ..in_cols]`, with `out` dense `n x out_dim`.
pub fn affine(
    input: &[f64],
    stride: usize,
    in_cols: usize,
    weight: &[f64],
    bias: &[f64],
    out: &mut [f64],
) {
    let out_dim = bias.len();
    if out_dim == 0 {
        return;
    }
    out.par_chunks_mut(out_dim)
        .zip(input.par_chunks(stride))
        .with_min_len(MIN_ROWS_PER_TASK)
        .for_each(|(o_row, i_row)| {
            let x = &i_row[..in_cols];
            for (o, slot) in o_row.iter_mut().enumerate() {
                *slot = bias[o] + dot(x, &weight[o * in_cols..(o + 1) * in_cols]);
            }
        });
}

/// Accumulates `grad_w[o, i] += sum_r dz[r, o] * features[r, i]` for `i < in_cols`
/// and `grad_b[o] += sum_r dz[r, o]`. `dz` is dense `n x out_dim`.
pub fn weight_grad(
    dz: &[f64],
    out_dim: usize,
    features: &[f64],
    stride: usize,
    in_cols: usize,
    grad_w: &mut [f64],
    grad_b: &mut [f64],
) {
    if out_dim == 0 {
        return;
    }
    let n = dz.len() / out_dim;
    grad_w
        .par_chunks_mut(in_cols.max(1))
        .zip(grad_b.par_iter_mut())
        .enumerate()
        .for_each(|(o, (gw, gb))| {
            for r in 0..n {
                let coef = dz[r * out_dim + o];
                if coef != 0.0 {
                    *gb += coef;
                    if in_cols > 0 {
                        axpy(coef, &features[r * stride..r * stride + in_cols], gw);
                    }
                }
            }
        });
}

/// Accumulates `d_features[r, from..to] += sum_o dz[r, o] * W[o, from..to]`,
/// where `W` is `out_dim x in_cols` and `to <= in_cols`.
pub fn input_grad(
    dz: &[f64],
    out_dim: usize,
    weight: &[f64],
    in_cols: usize,
    from: usize,
    to: usize,
    d_features: &mut [f64],
    stride: usize,
) {
    if out_dim == 0 || from >= to {
        return;
    }
    d_features
        .par_chunks_mut(stride)
        .zip(dz.par_chunks(out_dim))
        .with_min_len(MIN_ROWS_PER_TASK)
        .for_each(|(d_row, dz_row)| {
            let target = &mut d_row[from..to];
            for (o, &coef) in dz_row.iter().enumerate() {
                if coef != 0.0 {
                    axpy(coef, &weight[o * in_cols + from..o * in_cols + to], target);
                }
            }
        });
}
