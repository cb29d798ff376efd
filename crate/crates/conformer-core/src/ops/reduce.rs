//! Reductions and softmax.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Sum of all elements, returned as a scalar (rank-0) tensor.
pub fn sum_all<S: Scalar>(tape: &mut Tape<S>, x: Var) -> Var {
    let xv = tape.value(x).clone();
    let mut acc = S::zero();
    for &v in xv.data() {
        acc = acc + v;
    }
    let shape = xv.shape().to_vec();
    let n = xv.len();
    tape.push(Tensor::scalar(acc), &[x], move |g, store| {
        let gv = g.item();
        store.accumulate(x.index(), Tensor::new(shape.clone(), vec![gv; n]).unwrap());
    })
}

/// Mean over the time axis of a `[T, d]` input, producing `[d]`.
pub fn mean_time<S: Scalar>(tape: &mut Tape<S>, x: Var) -> Result<Var> {
    let xv = tape.value(x).clone();
    if xv.rank() != 2 {
        return Err(Error::dimension("mean_time", "input must have rank 2"));
    }
    let (t, d) = (xv.dim(0), xv.dim(1));
    let tn = S::from_f64(t as f64);
    let mut out = vec![S::zero(); d];
    for ti in 0..t {
        for j in 0..d {
            out[j] = out[j] + xv.data()[ti * d + j];
        }
    }
    for o in &mut out {
        *o = *o / tn;
    }
    let out = Tensor::new(vec![d], out)?;
    Ok(tape.push(out, &[x], move |g, store| {
        let dx = Tensor::from_fn(&[t, d], |i| g.data()[i % d] / tn);
        store.accumulate(x.index(), dx);
    }))
}

/// The half-open index range of the length-`w` window centered at `t`,
/// truncated to `[0, len)`. Even windows extend one step further right.
pub(crate) fn window_bounds(t: usize, w: usize, len: usize) -> (usize, usize) {
    let lo = t.saturating_sub((w - 1) / 2);
    let hi = (t + w / 2 + 1).min(len);
    (lo, hi)
}

/// Per-step mean over a centered window of `w` time steps (truncated at the
/// sequence edges), `[T, d] -> [T, d]`.
pub fn windowed_mean<S: Scalar>(tape: &mut Tape<S>, x: Var, w: usize) -> Result<Var> {
    let xv = tape.value(x).clone();
    if xv.rank() != 2 {
        return Err(Error::dimension("windowed_mean", "input must have rank 2"));
    }
    if w == 0 {
        return Err(Error::dimension("windowed_mean", "window must be >= 1"));
    }
    let (t, d) = (xv.dim(0), xv.dim(1));
    let mut out = vec![S::zero(); t * d];
    for ti in 0..t {
        let (lo, hi) = window_bounds(ti, w, t);
        let count = S::from_f64((hi - lo) as f64);
        for j in 0..d {
            let mut acc = S::zero();
            for s in lo..hi {
                acc = acc + xv.data()[s * d + j];
            }
            out[ti * d + j] = acc / count;
        }
    }
    let out = Tensor::new(vec![t, d], out)?;
    Ok(tape.push(out, &[x], move |g, store| {
        let mut dx = vec![S::zero(); t * d];
        for ti in 0..t {
            let (lo, hi) = window_bounds(ti, w, t);
            let count = S::from_f64((hi - lo) as f64);
            for j in 0..d {
                let gi = g.data()[ti * d + j] / count;
                for s in lo..hi {
                    dx[s * d + j] = dx[s * d + j] + gi;
                }
            }
        }
        store.accumulate(x.index(), Tensor::new(vec![t, d], dx).unwrap());
    }))
}

/// Numerically stable softmax along `axis`.
pub fn softmax<S: Scalar>(tape: &mut Tape<S>, x: Var, axis: usize) -> Result<Var> {
    let xv = tape.value(x).clone();
    if axis >= xv.rank() {
        return Err(Error::dimension(
            "softmax",
            format!("axis {axis} out of range for rank {}", xv.rank()),
        ));
    }
    let len = xv.dim(axis);
    let inner: usize = xv.shape()[axis + 1..].iter().product();
    let outer: usize = xv.shape()[..axis].iter().product();
    let mut out = vec![S::zero(); xv.len()];
    for o in 0..outer {
        for i in 0..inner {
            let base = o * len * inner + i;
            let mut maxv = xv.data()[base];
            for a in 1..len {
                let v = xv.data()[base + a * inner];
                if v > maxv {
                    maxv = v;
                }
            }
            let mut denom = S::zero();
            for a in 0..len {
                let e = (xv.data()[base + a * inner] - maxv).exp();
                out[base + a * inner] = e;
                denom = denom + e;
            }
            for a in 0..len {
                out[base + a * inner] = out[base + a * inner] / denom;
            }
        }
    }
    let out = Tensor::new(xv.shape().to_vec(), out)?;
    let yv = out.clone();
    Ok(tape.push(out, &[x], move |g, store| {
        let mut dx = vec![S::zero(); yv.len()];
        for o in 0..outer {
            for i in 0..inner {
                let base = o * len * inner + i;
                let mut dot = S::zero();
                for a in 0..len {
                    let idx = base + a * inner;
                    dot = dot + g.data()[idx] * yv.data()[idx];
                }
                for a in 0..len {
                    let idx = base + a * inner;
                    dx[idx] = yv.data()[idx] * (g.data()[idx] - dot);
                }
            }
        }
        store.accumulate(x.index(), Tensor::new(yv.shape().to_vec(), dx).unwrap());
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_time_averages_rows() {
        let mut tape: Tape<f64> = Tape::new();
        let x = tape.leaf(Tensor::new(vec![2, 2], vec![1., 10., 3., 30.]).unwrap(), true);
        let y = mean_time(&mut tape, x).unwrap();
        assert_eq!(tape.value(y).data(), &[2., 20.]);
    }

    #[test]
    fn window_bounds_truncate_at_edges() {
        // w = 3 at t = 0 of length 5: [0, 2)
        assert_eq!(window_bounds(0, 3, 5), (0, 2));
        assert_eq!(window_bounds(2, 3, 5), (1, 4));
        assert_eq!(window_bounds(4, 3, 5), (3, 5));
        // even window reaches one further right
        assert_eq!(window_bounds(2, 4, 10), (1, 5));
        // window covering everything
        assert_eq!(window_bounds(1, 99, 4), (0, 4));
    }

    #[test]
    fn windowed_mean_matches_manual() {
        let mut tape: Tape<f64> = Tape::new();
        let x = tape.leaf(Tensor::new(vec![4, 1], vec![1., 2., 3., 4.]).unwrap(), true);
        let y = windowed_mean(&mut tape, x, 3).unwrap();
        let yv = tape.value(y);
        assert!((yv.data()[0] - 1.5).abs() < 1e-12);
        assert!((yv.data()[1] - 2.0).abs() < 1e-12);
        assert!((yv.data()[2] - 3.0).abs() < 1e-12);
        assert!((yv.data()[3] - 3.5).abs() < 1e-12);
    }

    #[test]
    fn windowed_mean_wide_window_equals_global_mean() {
        let mut tape: Tape<f64> = Tape::new();
        let x = tape.leaf(
            Tensor::new(vec![3, 2], vec![1., 4., 2., 5., 3., 6.]).unwrap(),
            true,
        );
        let y = windowed_mean(&mut tape, x, 101).unwrap();
        for ti in 0..3 {
            assert!((tape.value(y).at2(ti, 0) - 2.0).abs() < 1e-12);
            assert!((tape.value(y).at2(ti, 1) - 5.0).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut tape: Tape<f64> = Tape::new();
        let x = tape.leaf(
            Tensor::new(vec![2, 3], vec![1., 2., 3., -1., 0., 1.]).unwrap(),
            true,
        );
        let y = softmax(&mut tape, x, 1).unwrap();
        let yv = tape.value(y);
        for r in 0..2 {
            let s: f64 = yv.data()[r * 3..(r + 1) * 3].iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_is_shift_invariant() {
        let mut t1: Tape<f64> = Tape::new();
        let a = t1.leaf(Tensor::new(vec![1, 3], vec![1., 2., 3.]).unwrap(), true);
        let ya = softmax(&mut t1, a, 1).unwrap();
        let mut t2: Tape<f64> = Tape::new();
        let b = t2.leaf(Tensor::new(vec![1, 3], vec![101., 102., 103.]).unwrap(), true);
        let yb = softmax(&mut t2, b, 1).unwrap();
        let (va, vb) = (t1.value(ya).clone(), t2.value(yb).clone());
        assert!(va.max_abs_diff(&vb).unwrap() < 1e-12);
    }

    #[test]
    fn softmax_gradient_orthogonal_to_ones() {
        // Rows of the softmax Jacobian sum to zero, so a gradient that is a
        // multiple of ones maps to (numerically) zero.
        let mut tape: Tape<f64> = Tape::new();
        let x = tape.leaf(Tensor::new(vec![1, 3], vec![0.3, -1.2, 2.0]).unwrap(), true);
        let y = softmax(&mut tape, x, 1).unwrap();
        let s = sum_all(&mut tape, y);
        let grads = tape.backward(s).unwrap();
        for &v in grads.get(x).unwrap().data() {
            assert!(v.abs() < 1e-14);
        }
    }
}
