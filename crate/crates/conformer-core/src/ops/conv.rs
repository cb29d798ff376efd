//! Convolutions over `[T, C]` sequences and `[T, F, C]` spectrogram grids.

use crate::error::{Error, Result};
use crate::ops::elementwise::add_row;
use crate::ops::linalg::{matmul, mm_nn, mm_nt, mm_tn};
use crate::scalar::Scalar;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConvKind {
    /// Kernel `[k, C]`, one filter per channel.
    Depthwise,
    /// Kernel `[C_in, C_out]`, a 1x1 convolution (per-frame linear map).
    Pointwise,
}

/// Zero-pad a `[T, C]` sequence along the time axis.
pub fn pad_time<S: Scalar>(tape: &mut Tape<S>, x: Var, left: usize, right: usize) -> Result<Var> {
    let xv = tape.value(x).clone();
    if xv.rank() != 2 {
        return Err(Error::dimension("pad_time", "input must have rank 2"));
    }
    if left == 0 && right == 0 {
        return Ok(x);
    }
    let (t, c) = (xv.dim(0), xv.dim(1));
    let tp = left + t + right;
    let mut out = vec![S::zero(); tp * c];
    out[left * c..(left + t) * c].copy_from_slice(xv.data());
    let out = Tensor::new(vec![tp, c], out)?;
    Ok(tape.push(out, &[x], move |g, store| {
        let dx = g.data()[left * c..(left + t) * c].to_vec();
        store.accumulate(x.index(), Tensor::new(vec![t, c], dx).unwrap());
    }))
}

/// Valid (no padding) depthwise convolution: `y[t][c] = sum_j x[t+j][c] * k[j][c]`.
fn depthwise_valid<S: Scalar>(tape: &mut Tape<S>, x: Var, kernel: Var) -> Result<Var> {
    let xv = tape.value(x).clone();
    let kv = tape.value(kernel).clone();
    if xv.rank() != 2 || kv.rank() != 2 || xv.dim(1) != kv.dim(1) {
        return Err(Error::ShapeMismatch {
            op: "conv1d.depthwise",
            lhs: xv.shape().to_vec(),
            rhs: kv.shape().to_vec(),
        });
    }
    let (t, c) = (xv.dim(0), xv.dim(1));
    let k = kv.dim(0);
    if t < k {
        return Err(Error::dimension(
            "conv1d.depthwise",
            format!("kernel width {k} exceeds padded input length {t}"),
        ));
    }
    let to = t - k + 1;
    let mut out = vec![S::zero(); to * c];
    for ti in 0..to {
        for j in 0..k {
            let xrow = &xv.data()[(ti + j) * c..(ti + j + 1) * c];
            let krow = &kv.data()[j * c..(j + 1) * c];
            let orow = &mut out[ti * c..(ti + 1) * c];
            for ci in 0..c {
                orow[ci] = orow[ci] + xrow[ci] * krow[ci];
            }
        }
    }
    let out = Tensor::new(vec![to, c], out)?;
    Ok(tape.push(out, &[x, kernel], move |g, store| {
        let mut dx = vec![S::zero(); t * c];
        let mut dk = vec![S::zero(); k * c];
        for ti in 0..to {
            let grow = &g.data()[ti * c..(ti + 1) * c];
            for j in 0..k {
                let xoff = (ti + j) * c;
                for ci in 0..c {
                    dx[xoff + ci] = dx[xoff + ci] + grow[ci] * kv.data()[j * c + ci];
                    dk[j * c + ci] = dk[j * c + ci] + grow[ci] * xv.data()[xoff + ci];
                }
            }
        }
        store.accumulate(x.index(), Tensor::new(vec![t, c], dx).unwrap());
        store.accumulate(kernel.index(), Tensor::new(vec![k, c], dk).unwrap());
    }))
}

/// 1-D convolution over time with explicit zero padding `(left, right)`.
///
/// Depthwise kernels have shape `[k, C]`; pointwise kernels `[C_in, C_out]`
/// act per frame. Output length is `T + left + right - k + 1` (with `k = 1`
/// for pointwise).
pub fn conv1d<S: Scalar>(
    tape: &mut Tape<S>,
    x: Var,
    kernel: Var,
    bias: Option<Var>,
    kind: ConvKind,
    padding: (usize, usize),
) -> Result<Var> {
    let padded = pad_time(tape, x, padding.0, padding.1)?;
    let y = match kind {
        ConvKind::Depthwise => depthwise_valid(tape, padded, kernel)?,
        ConvKind::Pointwise => matmul(tape, padded, kernel)?,
    };
    match bias {
        Some(b) => add_row(tape, y, b),
        None => Ok(y),
    }
}

/// Valid 2-D convolution with equal stride on both spatial axes.
///
/// `x` is `[T, F, C]`, `kernel` is `[kt, kf, C, O]`, output is `[T', F', O]`
/// with `T' = floor((T-kt)/s)+1` and likewise for `F'`.
pub fn conv2d<S: Scalar>(tape: &mut Tape<S>, x: Var, kernel: Var, stride: usize) -> Result<Var> {
    let xv = tape.value(x).clone();
    let kv = tape.value(kernel).clone();
    if xv.rank() != 3 || kv.rank() != 4 || xv.dim(2) != kv.dim(2) {
        return Err(Error::ShapeMismatch {
            op: "conv2d",
            lhs: xv.shape().to_vec(),
            rhs: kv.shape().to_vec(),
        });
    }
    if stride == 0 {
        return Err(Error::dimension("conv2d", "stride must be >= 1"));
    }
    let (t, f, c) = (xv.dim(0), xv.dim(1), xv.dim(2));
    let (kt, kf, o) = (kv.dim(0), kv.dim(1), kv.dim(3));
    if t < kt || f < kf {
        return Err(Error::dimension(
            "conv2d",
            format!("kernel {kt}x{kf} exceeds input {t}x{f}"),
        ));
    }
    let to = (t - kt) / stride + 1;
    let fo = (f - kf) / stride + 1;
    // Gather each receptive field into a row, then one matmul against the
    // kernel viewed as [kt*kf*c, o].
    let cols = kt * kf * c;
    let gather = move |xd: &[S]| -> Vec<S> {
        let mut patches = vec![S::zero(); to * fo * cols];
        for ti in 0..to {
            for fi in 0..fo {
                let dst = (ti * fo + fi) * cols;
                for a in 0..kt {
                    let srow = (ti * stride + a) * f * c + fi * stride * c;
                    let drow = dst + a * kf * c;
                    patches[drow..drow + kf * c].copy_from_slice(&xd[srow..srow + kf * c]);
                }
            }
        }
        patches
    };
    let patches = gather(xv.data());
    let out = Tensor::new(vec![to, fo, o], mm_nn(&patches, kv.data(), to * fo, cols, o))?;
    Ok(tape.push(out, &[x, kernel], move |g, store| {
        let patches = gather(xv.data());
        let dk = mm_tn(&patches, g.data(), cols, to * fo, o);
        store.accumulate(kernel.index(), Tensor::new(vec![kt, kf, c, o], dk).unwrap());
        // Scatter dpatches = g * K^T back to input positions.
        let dp = mm_nt(g.data(), kv.data(), to * fo, o, cols);
        let mut dx = vec![S::zero(); t * f * c];
        for ti in 0..to {
            for fi in 0..fo {
                let src = (ti * fo + fi) * cols;
                for a in 0..kt {
                    let drow = (ti * stride + a) * f * c + fi * stride * c;
                    let srow = src + a * kf * c;
                    for z in 0..kf * c {
                        dx[drow + z] = dx[drow + z] + dp[srow + z];
                    }
                }
            }
        }
        store.accumulate(x.index(), Tensor::new(vec![t, f, c], dx).unwrap());
    }))
}

/// Keep every `stride`-th time step: `y[t'] = x[t' * stride]`.
/// Output length is `ceil(T / stride)`.
pub fn stride_time<S: Scalar>(tape: &mut Tape<S>, x: Var, stride: usize) -> Result<Var> {
    if stride == 0 {
        return Err(Error::dimension("stride_time", "stride must be >= 1"));
    }
    if stride == 1 {
        return Ok(x);
    }
    let xv = tape.value(x).clone();
    if xv.rank() != 2 {
        return Err(Error::dimension("stride_time", "input must have rank 2"));
    }
    let (t, c) = (xv.dim(0), xv.dim(1));
    let to = t.div_ceil(stride);
    let mut out = vec![S::zero(); to * c];
    for ti in 0..to {
        out[ti * c..(ti + 1) * c]
            .copy_from_slice(&xv.data()[ti * stride * c..(ti * stride + 1) * c]);
    }
    let out = Tensor::new(vec![to, c], out)?;
    Ok(tape.push(out, &[x], move |g, store| {
        let mut dx = vec![S::zero(); t * c];
        for ti in 0..to {
            dx[ti * stride * c..(ti * stride + 1) * c]
                .copy_from_slice(&g.data()[ti * c..(ti + 1) * c]);
        }
        store.accumulate(x.index(), Tensor::new(vec![t, c], dx).unwrap());
    }))
}

/// Broadcast a grouped kernel `[k, g]` to a full depthwise kernel `[k, d]`
/// by repeating each group column `d/g` times.
pub fn expand_groups<S: Scalar>(tape: &mut Tape<S>, kernel: Var, d: usize) -> Result<Var> {
    let kv = tape.value(kernel).clone();
    if kv.rank() != 2 {
        return Err(Error::dimension("expand_groups", "kernel must have rank 2"));
    }
    let (k, groups) = (kv.dim(0), kv.dim(1));
    if groups == 0 || d % groups != 0 {
        return Err(Error::dimension(
            "expand_groups",
            format!("channel count {d} not divisible by group count {groups}"),
        ));
    }
    let gsize = d / groups;
    let out = Tensor::from_fn(&[k, d], |i| kv.data()[(i / d) * groups + (i % d) / gsize]);
    Ok(tape.push(out, &[kernel], move |g, store| {
        let mut dk = vec![S::zero(); k * groups];
        for j in 0..k {
            for c in 0..d {
                dk[j * groups + c / gsize] = dk[j * groups + c / gsize] + g.data()[j * d + c];
            }
        }
        store.accumulate(kernel.index(), Tensor::new(vec![k, groups], dk).unwrap());
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ops::sum_all;

    #[test]
    fn depthwise_same_padding_keeps_length() {
        let mut tape: Tape<f64> = Tape::new();
        let x = tape.leaf(Tensor::new(vec![4, 1], vec![1., 2., 3., 4.]).unwrap(), true);
        let k = tape.leaf(Tensor::new(vec![3, 1], vec![1., 10., 100.]).unwrap(), true);
        let y = conv1d(&mut tape, x, k, None, ConvKind::Depthwise, (1, 1)).unwrap();
        // y[t] = x[t-1] + 10 x[t] + 100 x[t+1], zeros outside
        assert_eq!(tape.value(y).data(), &[210., 321., 432., 43.]);
    }

    #[test]
    fn even_kernel_asymmetric_padding() {
        let mut tape: Tape<f64> = Tape::new();
        let x = tape.leaf(Tensor::new(vec![3, 1], vec![1., 2., 3.]).unwrap(), true);
        let k = tape.leaf(Tensor::filled(&[4, 1], 1.0), true);
        // k = 4: pad (1, 2) keeps T' = 3 + 3 - 4 + 1 = 3
        let y = conv1d(&mut tape, x, k, None, ConvKind::Depthwise, (1, 2)).unwrap();
        assert_eq!(tape.value(y).shape(), &[3, 1]);
        assert_eq!(tape.value(y).data(), &[6., 6., 5.]);
    }

    #[test]
    fn depthwise_kernel_wider_than_input_errors() {
        let mut tape: Tape<f64> = Tape::new();
        let x = tape.leaf(Tensor::filled(&[2, 1], 1.0), true);
        let k = tape.leaf(Tensor::filled(&[5, 1], 1.0), true);
        assert!(conv1d(&mut tape, x, k, None, ConvKind::Depthwise, (0, 0)).is_err());
    }

    #[test]
    fn pointwise_is_per_frame_linear() {
        let mut tape: Tape<f64> = Tape::new();
        let x = tape.leaf(Tensor::new(vec![2, 2], vec![1., 2., 3., 4.]).unwrap(), true);
        let w = tape.leaf(
            Tensor::new(vec![2, 3], vec![1., 0., 1., 0., 1., 1.]).unwrap(),
            true,
        );
        let b = tape.leaf(Tensor::filled(&[3], 0.5), true);
        let y = conv1d(&mut tape, x, w, Some(b), ConvKind::Pointwise, (0, 0)).unwrap();
        assert_eq!(tape.value(y).data(), &[1.5, 2.5, 3.5, 3.5, 4.5, 7.5]);
    }

    #[test]
    fn conv2d_stride_two_shapes_and_values() {
        let mut tape: Tape<f64> = Tape::new();
        // 5x5 grid, 1 channel, ones kernel 3x3 -> windows sum 9 entries
        let x = tape.leaf(Tensor::from_fn(&[5, 5, 1], |i| i as f64), true);
        let k = tape.leaf(Tensor::filled(&[3, 3, 1, 1], 1.0), true);
        let y = conv2d(&mut tape, x, k, 2).unwrap();
        assert_eq!(tape.value(y).shape(), &[2, 2, 1]);
        // window at (0,0): mean 6 * 9 = 54; at (0,2): 54 + 18; rows shift by 90
        assert_eq!(tape.value(y).data(), &[54., 72., 144., 162.]);
    }

    #[test]
    fn conv2d_gradient_scatters_overlaps() {
        let mut tape: Tape<f64> = Tape::new();
        let x = tape.leaf(Tensor::filled(&[3, 3, 1], 1.0), true);
        let k = tape.leaf(Tensor::filled(&[2, 2, 1, 1], 1.0), true);
        let y = conv2d(&mut tape, x, k, 1).unwrap();
        let loss = sum_all(&mut tape, y);
        let grads = tape.backward(loss).unwrap();
        // center cell participates in all four 2x2 windows
        let dx = grads.get(x).unwrap();
        assert_eq!(dx.data()[4], 4.0);
        assert_eq!(dx.data()[0], 1.0);
        let dk = grads.get(k).unwrap();
        assert_eq!(dk.data(), &[4., 4., 4., 4.]);
    }

    #[test]
    fn stride_time_ceil_length() {
        let mut tape: Tape<f64> = Tape::new();
        let x = tape.leaf(
            Tensor::new(vec![5, 1], vec![0., 1., 2., 3., 4.]).unwrap(),
            true,
        );
        let y = stride_time(&mut tape, x, 2).unwrap();
        assert_eq!(tape.value(y).data(), &[0., 2., 4.]);
    }

    #[test]
    fn expand_groups_repeats_columns() {
        let mut tape: Tape<f64> = Tape::new();
        let k = tape.leaf(Tensor::new(vec![1, 2], vec![3., 7.]).unwrap(), true);
        let y = expand_groups(&mut tape, k, 4).unwrap();
        assert_eq!(tape.value(y).data(), &[3., 3., 7., 7.]);
        let loss = sum_all(&mut tape, y);
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get(k).unwrap().data(), &[2., 2.]);
    }
}
