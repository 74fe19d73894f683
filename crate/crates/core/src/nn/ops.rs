//! Batched layer kernels. Activations are flat `(batch, features...)` buffers.

use rand::Rng;

use super::layer::{Activation, ConvGeometry};
use super::scalar::{gemm, View};
use super::{EngineRng, Scalar};

fn apply_activation<S: Scalar>(act: Activation, v: &mut [S]) {
    if act == Activation::Relu {
        relu_in_place(v);
    }
}

pub(crate) fn relu_in_place<S: Scalar>(v: &mut [S]) {
    for x in v {
        if *x < S::zero() {
            *x = S::zero();
        }
    }
}

/// Multiplies `grad` by the activation derivative, read off the layer output.
pub(crate) fn activation_backward<S: Scalar>(act: Activation, out: &[S], grad: &mut [S]) {
    if act == Activation::Relu {
        relu_backward(out, grad);
    }
}

pub(crate) fn relu_backward<S: Scalar>(out: &[S], grad: &mut [S]) {
    for (g, &y) in grad.iter_mut().zip(out) {
        if y <= S::zero() {
            *g = S::zero();
        }
    }
}

fn column_sums<S: Scalar>(rows: usize, cols: usize, m: &[S]) -> Vec<S> {
    let mut acc = vec![0.0f64; cols];
    for r in 0..rows {
        for (a, v) in acc.iter_mut().zip(&m[r * cols..(r + 1) * cols]) {
            *a += v.as_f64();
        }
    }
    acc.into_iter().map(S::of).collect()
}

pub(crate) fn dense_forward<S: Scalar>(x: &[S], batch: usize, weight: &[S], bias: &[S], act: Activation) -> Vec<S> {
    let units = bias.len();
    let inputs = weight.len() / units;
    let mut y = Vec::with_capacity(batch * units);
    for _ in 0..batch {
        y.extend_from_slice(bias);
    }
    gemm(
        S::one(),
        x,
        View::row_major(batch, inputs),
        weight,
        View::transposed(inputs, units),
        S::one(),
        &mut y,
        View::row_major(batch, units),
    );
    apply_activation(act, &mut y);
    y
}

/// Returns `(dx, dweight, dbias)`; `dx` is skipped when `need_dx` is false.
pub(crate) fn dense_backward<S: Scalar>(
    x: &[S],
    out: &[S],
    mut dy: Vec<S>,
    batch: usize,
    weight: &[S],
    act: Activation,
    need_dx: bool,
) -> (Option<Vec<S>>, Vec<S>, Vec<S>) {
    let units = out.len() / batch;
    let inputs = weight.len() / units;
    activation_backward(act, out, &mut dy);
    let mut dw = vec![S::zero(); weight.len()];
    gemm(
        S::one(),
        &dy,
        View::transposed(units, batch),
        x,
        View::row_major(batch, inputs),
        S::zero(),
        &mut dw,
        View::row_major(units, inputs),
    );
    let db = column_sums(batch, units, &dy);
    let dx = need_dx.then(|| {
        let mut dx = vec![S::zero(); batch * inputs];
        gemm(
            S::one(),
            &dy,
            View::row_major(batch, units),
            weight,
            View::row_major(units, inputs),
            S::zero(),
            &mut dx,
            View::row_major(batch, inputs),
        );
        dx
    });
    (dx, dw, db)
}

/// Unfolds one `(c, h, w)` example into a `(c * kh * kw, out_h * out_w)` matrix.
fn im2col<S: Scalar>(x: &[S], g: &ConvGeometry, cols: &mut [S]) {
    let positions = g.out_positions();
    let mut row = 0;
    for c in 0..g.in_c {
        let plane = &x[c * g.in_h * g.in_w..(c + 1) * g.in_h * g.in_w];
        for ki in 0..g.k_h {
            for kj in 0..g.k_w {
                let dst = &mut cols[row * positions..(row + 1) * positions];
                for oy in 0..g.out_h {
                    let iy = (oy * g.stride + ki) as isize - g.pad_top as isize;
                    let line = &mut dst[oy * g.out_w..(oy + 1) * g.out_w];
                    if iy < 0 || iy as usize >= g.in_h {
                        line.fill(S::zero());
                        continue;
                    }
                    let src = &plane[iy as usize * g.in_w..(iy as usize + 1) * g.in_w];
                    for (ox, v) in line.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kj) as isize - g.pad_left as isize;
                        *v = if ix < 0 || ix as usize >= g.in_w { S::zero() } else { src[ix as usize] };
                    }
                }
                row += 1;
            }
        }
    }
}

/// Folds column gradients back onto a `(c, h, w)` input gradient (accumulating).
fn col2im<S: Scalar>(cols: &[S], g: &ConvGeometry, dx: &mut [S]) {
    let positions = g.out_positions();
    let mut row = 0;
    for c in 0..g.in_c {
        let plane = &mut dx[c * g.in_h * g.in_w..(c + 1) * g.in_h * g.in_w];
        for ki in 0..g.k_h {
            for kj in 0..g.k_w {
                let src = &cols[row * positions..(row + 1) * positions];
                for oy in 0..g.out_h {
                    let iy = (oy * g.stride + ki) as isize - g.pad_top as isize;
                    if iy < 0 || iy as usize >= g.in_h {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * g.in_w..(iy as usize + 1) * g.in_w];
                    for ox in 0..g.out_w {
                        let ix = (ox * g.stride + kj) as isize - g.pad_left as isize;
                        if ix >= 0 && (ix as usize) < g.in_w {
                            dst[ix as usize] = dst[ix as usize] + src[oy * g.out_w + ox];
                        }
                    }
                }
                row += 1;
            }
        }
    }
}

/// Returns the output and, when `keep_cols` is set, the unfolded inputs.
pub(crate) fn conv_forward<S: Scalar>(
    x: &[S],
    batch: usize,
    g: &ConvGeometry,
    weight: &[S],
    bias: &[S],
    act: Activation,
    keep_cols: bool,
) -> (Vec<S>, Option<Vec<S>>) {
    let channels = bias.len();
    let patch = g.patch_len();
    let positions = g.out_positions();
    let in_len = g.in_c * g.in_h * g.in_w;
    let out_len = channels * positions;
    let mut y = vec![S::zero(); batch * out_len];
    let mut all_cols = keep_cols.then(|| vec![S::zero(); batch * patch * positions]);
    let mut scratch = if keep_cols { Vec::new() } else { vec![S::zero(); patch * positions] };
    for b in 0..batch {
        let cols: &mut [S] = match all_cols.as_mut() {
            Some(all) => &mut all[b * patch * positions..(b + 1) * patch * positions],
            None => &mut scratch,
        };
        im2col(&x[b * in_len..(b + 1) * in_len], g, cols);
        let yb = &mut y[b * out_len..(b + 1) * out_len];
        for (o, &bv) in bias.iter().enumerate() {
            yb[o * positions..(o + 1) * positions].fill(bv);
        }
        gemm(
            S::one(),
            weight,
            View::row_major(channels, patch),
            cols,
            View::row_major(patch, positions),
            S::one(),
            yb,
            View::row_major(channels, positions),
        );
    }
    apply_activation(act, &mut y);
    (y, all_cols)
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn conv_backward<S: Scalar>(
    cols: &[S],
    out: &[S],
    mut dy: Vec<S>,
    batch: usize,
    g: &ConvGeometry,
    weight: &[S],
    act: Activation,
    need_dx: bool,
) -> (Option<Vec<S>>, Vec<S>, Vec<S>) {
    let patch = g.patch_len();
    let positions = g.out_positions();
    let channels = weight.len() / patch;
    let out_len = channels * positions;
    let in_len = g.in_c * g.in_h * g.in_w;
    activation_backward(act, out, &mut dy);

    let mut dw = vec![S::zero(); weight.len()];
    let mut db = vec![0.0f64; channels];
    let mut dx = need_dx.then(|| vec![S::zero(); batch * in_len]);
    let mut dcols = vec![S::zero(); if need_dx { patch * positions } else { 0 }];
    for b in 0..batch {
        let colsb = &cols[b * patch * positions..(b + 1) * patch * positions];
        let dyb = &dy[b * out_len..(b + 1) * out_len];
        gemm(
            S::one(),
            dyb,
            View::row_major(channels, positions),
            colsb,
            View::transposed(positions, patch),
            S::one(),
            &mut dw,
            View::row_major(channels, patch),
        );
        for (o, acc) in db.iter_mut().enumerate() {
            *acc += dyb[o * positions..(o + 1) * positions].iter().map(|v| v.as_f64()).sum::<f64>();
        }
        if let Some(dx) = dx.as_mut() {
            gemm(
                S::one(),
                weight,
                View::transposed(patch, channels),
                dyb,
                View::row_major(channels, positions),
                S::zero(),
                &mut dcols,
                View::row_major(patch, positions),
            );
            col2im(&dcols, g, &mut dx[b * in_len..(b + 1) * in_len]);
        }
    }
    (dx, dw, db.into_iter().map(S::of).collect())
}

/// Non-overlapping max pooling; records the flat input index of each maximum
/// (first occurrence on ties).
pub(crate) fn maxpool_forward<S: Scalar>(
    x: &[S],
    batch: usize,
    input: &[usize],
    window: [usize; 2],
) -> (Vec<S>, Vec<u32>) {
    let (c, h, w) = (input[0], input[1], input[2]);
    let (oh, ow) = (h / window[0], w / window[1]);
    let in_len = c * h * w;
    let mut y = Vec::with_capacity(batch * c * oh * ow);
    let mut argmax = Vec::with_capacity(batch * c * oh * ow);
    for b in 0..batch {
        let xb = &x[b * in_len..(b + 1) * in_len];
        for ch in 0..c {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = usize::MAX;
                    let mut best_val = S::neg_infinity();
                    for i in 0..window[0] {
                        let row = ch * h * w + (oy * window[0] + i) * w + ox * window[1];
                        for j in 0..window[1] {
                            if xb[row + j] > best_val || best == usize::MAX {
                                best_val = xb[row + j];
                                best = row + j;
                            }
                        }
                    }
                    y.push(best_val);
                    argmax.push(best as u32);
                }
            }
        }
    }
    (y, argmax)
}

pub(crate) fn maxpool_backward<S: Scalar>(argmax: &[u32], dy: &[S], batch: usize, in_len: usize) -> Vec<S> {
    let out_len = dy.len() / batch;
    let mut dx = vec![S::zero(); batch * in_len];
    for b in 0..batch {
        let dxb = &mut dx[b * in_len..(b + 1) * in_len];
        for (&idx, &g) in argmax[b * out_len..(b + 1) * out_len].iter().zip(&dy[b * out_len..(b + 1) * out_len]) {
            dxb[idx as usize] = dxb[idx as usize] + g;
        }
    }
    dx
}

/// Inverted dropout mask: each entry is `0` or `1 / (1 - rate)`.
pub(crate) fn dropout_mask<S: Scalar>(len: usize, rate: f64, rng: &mut EngineRng) -> Vec<S> {
    let keep = S::of(1.0 / (1.0 - rate));
    (0..len).map(|_| if rng.random::<f64>() < rate { S::zero() } else { keep }).collect()
}

/// Row-wise softmax with 64-bit accumulation.
pub(crate) fn softmax_rows<S: Scalar>(x: &[S], classes: usize) -> Vec<S> {
    let mut out = Vec::with_capacity(x.len());
    for row in x.chunks_exact(classes) {
        let max = row.iter().fold(f64::NEG_INFINITY, |m, v| m.max(v.as_f64()));
        let exps: Vec<f64> = row.iter().map(|v| (v.as_f64() - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        out.extend(exps.iter().map(|e| S::of(e / total)));
    }
    out
}

/// Mean cross-entropy of softmax(logits) and its gradient w.r.t. the logits.
pub(crate) fn softmax_cross_entropy<S: Scalar>(logits: &[S], labels: &[usize], classes: usize) -> (f64, Vec<S>) {
    let batch = labels.len();
    let scale = 1.0 / batch as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(logits.len());
    for (row, &label) in logits.chunks_exact(classes).zip(labels) {
        let max = row.iter().fold(f64::NEG_INFINITY, |m, v| m.max(v.as_f64()));
        let total: f64 = row.iter().map(|v| (v.as_f64() - max).exp()).sum();
        let log_total = total.ln() + max;
        loss += log_total - row[label].as_f64();
        for (k, v) in row.iter().enumerate() {
            let p = (v.as_f64() - log_total).exp();
            let target = if k == label { 1.0 } else { 0.0 };
            grad.push(S::of((p - target) * scale));
        }
    }
    (loss * scale, grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::layer::Padding;

    #[test]
    fn im2col_col2im_are_adjoint() {
        // <im2col(x), c> == <x, col2im(c)> for any x, c.
        let g = ConvGeometry::new(&[2, 5, 4], [3, 2], 2, Padding::Same).unwrap();
        let x: Vec<f64> = (0..40).map(|i| (i as f64 * 0.37).sin()).collect();
        let c: Vec<f64> = (0..g.patch_len() * g.out_positions()).map(|i| (i as f64 * 0.11).cos()).collect();
        let mut cols = vec![0.0; c.len()];
        im2col(&x, &g, &mut cols);
        let mut back = vec![0.0; x.len()];
        col2im(&c, &g, &mut back);
        let lhs: f64 = cols.iter().zip(&c).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&back).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn conv_matches_direct_sum() {
        let g = ConvGeometry::new(&[2, 4, 5], [2, 3], 1, Padding::Valid).unwrap();
        let x: Vec<f64> = (0..40).map(|i| i as f64 * 0.1 - 1.0).collect();
        let w: Vec<f64> = (0..3 * 12).map(|i| ((i * 7 % 5) as f64) - 2.0).collect();
        let bias = vec![0.5, -0.5, 1.0];
        let (y, _) = conv_forward(&x, 1, &g, &w, &bias, Activation::Identity, false);
        for o in 0..3 {
            for oy in 0..g.out_h {
                for ox in 0..g.out_w {
                    let mut s = bias[o];
                    for c in 0..2 {
                        for i in 0..2 {
                            for j in 0..3 {
                                s += w[o * 12 + c * 6 + i * 3 + j] * x[c * 20 + (oy + i) * 5 + ox + j];
                            }
                        }
                    }
                    let got = y[o * g.out_positions() + oy * g.out_w + ox];
                    assert!((got - s).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn maxpool_picks_window_maximum() {
        let x = vec![1.0f32, 5.0, 2.0, 0.0, 3.0, 4.0, -1.0, 7.0];
        let (y, idx) = maxpool_forward(&x, 1, &[1, 2, 4], [2, 2]);
        assert_eq!(y, vec![5.0, 7.0]);
        assert_eq!(idx, vec![1, 7]);
    }

    #[test]
    fn softmax_rows_normalize() {
        let p = softmax_rows(&[1000.0f32, 0.0, -1000.0, 1.0, 2.0, 3.0], 3);
        for row in p.chunks(3) {
            let s: f64 = row.iter().map(|v| *v as f64).sum();
            assert!((s - 1.0).abs() < 1e-6);
            assert!(row.iter().all(|v| v.is_finite() && *v >= 0.0));
        }
    }
}
