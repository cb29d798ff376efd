//! Shape manipulation: views, column slicing, and the relative-position shift.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Reinterpret `x` with a new shape of the same element count.
pub fn reshape<S: Scalar>(tape: &mut Tape<S>, x: Var, shape: Vec<usize>) -> Result<Var> {
    let xv = tape.value(x).clone();
    let out = xv.reshaped(shape)?;
    let old = xv.shape().to_vec();
    Ok(tape.push(out, &[x], move |g, store| {
        store.accumulate(x.index(), g.reshaped(old.clone()).unwrap());
    }))
}

/// Take columns `[start, start+len)` of a `[T, d]` matrix.
pub fn slice_cols<S: Scalar>(tape: &mut Tape<S>, x: Var, start: usize, len: usize) -> Result<Var> {
    let xv = tape.value(x).clone();
    if xv.rank() != 2 {
        return Err(Error::dimension("slice_cols", "input must have rank 2"));
    }
    let (t, d) = (xv.dim(0), xv.dim(1));
    if len == 0 || start + len > d {
        return Err(Error::dimension(
            "slice_cols",
            format!("columns [{start}, {}) out of range for width {d}", start + len),
        ));
    }
    let out = Tensor::from_fn(&[t, len], |i| xv.data()[(i / len) * d + start + i % len]);
    Ok(tape.push(out, &[x], move |g, store| {
        let mut dx = vec![S::zero(); t * d];
        for ti in 0..t {
            for j in 0..len {
                dx[ti * d + start + j] = g.data()[ti * len + j];
            }
        }
        store.accumulate(x.index(), Tensor::new(vec![t, d], dx).unwrap());
    }))
}

/// Concatenate `[T, d_i]` matrices along the column axis.
pub fn concat_cols<S: Scalar>(tape: &mut Tape<S>, parts: &[Var]) -> Result<Var> {
    if parts.is_empty() {
        return Err(Error::dimension("concat_cols", "need at least one input"));
    }
    let shapes: Vec<Vec<usize>> = parts
        .iter()
        .map(|&p| tape.value(p).shape().to_vec())
        .collect();
    let t = shapes[0][0];
    for s in &shapes {
        if s.len() != 2 || s[0] != t {
            return Err(Error::ShapeMismatch {
                op: "concat_cols",
                lhs: shapes[0].clone(),
                rhs: s.clone(),
            });
        }
    }
    let widths: Vec<usize> = shapes.iter().map(|s| s[1]).collect();
    let d: usize = widths.iter().sum();
    let values: Vec<Tensor<S>> = parts.iter().map(|&p| tape.value(p).clone()).collect();
    let mut out = vec![S::zero(); t * d];
    for ti in 0..t {
        let mut off = 0;
        for (v, &w) in values.iter().zip(&widths) {
            out[ti * d + off..ti * d + off + w].copy_from_slice(&v.data()[ti * w..(ti + 1) * w]);
            off += w;
        }
    }
    let out = Tensor::new(vec![t, d], out)?;
    let parents: Vec<Var> = parts.to_vec();
    let parent_list = parents.clone();
    Ok(tape.push(out, &parents, move |g, store| {
        let mut off = 0;
        for (&p, &w) in parent_list.iter().zip(&widths) {
            let mut dp = vec![S::zero(); t * w];
            for ti in 0..t {
                dp[ti * w..(ti + 1) * w]
                    .copy_from_slice(&g.data()[ti * d + off..ti * d + off + w]);
            }
            store.accumulate(p.index(), Tensor::new(vec![t, w], dp).unwrap());
            off += w;
        }
    }))
}

/// Relative-position shift: map scores indexed by (query, offset) to
/// (query, key). Input is `[T, 2T-1]` with offset columns ordered from
/// `T-1` down to `-(T-1)`; output is `[T, T]` with
/// `out[i][j] = in[i][T-1-i+j]`, i.e. the entry for offset `i - j`.
pub fn rel_shift<S: Scalar>(tape: &mut Tape<S>, x: Var) -> Result<Var> {
    let xv = tape.value(x).clone();
    if xv.rank() != 2 {
        return Err(Error::dimension("rel_shift", "input must have rank 2"));
    }
    let t = xv.dim(0);
    let cols = xv.dim(1);
    if cols != 2 * t - 1 {
        return Err(Error::dimension(
            "rel_shift",
            format!(
                "offset range too small: need {} columns for {t} rows, got {cols}",
                2 * t - 1
            ),
        ));
    }
    let out = Tensor::from_fn(&[t, t], |i| {
        let (r, c) = (i / t, i % t);
        xv.data()[r * cols + (t - 1 - r + c)]
    });
    Ok(tape.push(out, &[x], move |g, store| {
        let mut dx = vec![S::zero(); t * cols];
        for i in 0..t {
            for j in 0..t {
                dx[i * cols + (t - 1 - i + j)] = g.data()[i * t + j];
            }
        }
        store.accumulate(x.index(), Tensor::new(vec![t, cols], dx).unwrap());
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ops::sum_all;

    #[test]
    fn slice_and_concat_round_trip() {
        let mut tape: Tape<f64> = Tape::new();
        let x = tape.leaf(
            Tensor::new(vec![2, 4], vec![1., 2., 3., 4., 5., 6., 7., 8.]).unwrap(),
            true,
        );
        let a = slice_cols(&mut tape, x, 0, 1).unwrap();
        let b = slice_cols(&mut tape, x, 1, 3).unwrap();
        let y = concat_cols(&mut tape, &[a, b]).unwrap();
        assert_eq!(tape.value(y).data(), tape.value(x).data());
    }

    #[test]
    fn slice_cols_gradient_is_zero_padded() {
        let mut tape: Tape<f64> = Tape::new();
        let x = tape.leaf(Tensor::new(vec![1, 3], vec![1., 2., 3.]).unwrap(), true);
        let y = slice_cols(&mut tape, x, 1, 1).unwrap();
        let loss = sum_all(&mut tape, y);
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[0., 1., 0.]);
    }

    #[test]
    fn rel_shift_maps_offsets_to_keys() {
        // T = 2: columns are offsets [1, 0, -1]
        let mut tape: Tape<f64> = Tape::new();
        let x = tape.leaf(
            Tensor::new(vec![2, 3], vec![10., 20., 30., 40., 50., 60.]).unwrap(),
            true,
        );
        let y = rel_shift(&mut tape, x).unwrap();
        // row 0: out[0][j] = in[0][1 + j] -> offsets 0, -1
        // row 1: out[1][j] = in[1][j]     -> offsets 1, 0
        assert_eq!(tape.value(y).data(), &[20., 30., 40., 50.]);
    }

    #[test]
    fn rel_shift_diagonal_is_offset_zero() {
        let t = 5;
        let mut tape: Tape<f64> = Tape::new();
        // encode the offset value itself: column c holds offset t-1-c
        let x = tape.leaf(
            Tensor::from_fn(&[t, 2 * t - 1], |i| {
                (t as f64 - 1.0) - (i % (2 * t - 1)) as f64
            }),
            true,
        );
        let y = rel_shift(&mut tape, x).unwrap();
        for i in 0..t {
            for j in 0..t {
                assert_eq!(tape.value(y).at2(i, j), i as f64 - j as f64);
            }
        }
    }

    #[test]
    fn rel_shift_rejects_short_offset_axis() {
        let mut tape: Tape<f64> = Tape::new();
        let x = tape.leaf(Tensor::filled(&[3, 4], 1.0), true);
        assert!(rel_shift(&mut tape, x).is_err());
    }

    #[test]
    fn reshape_preserves_data_and_grad_shape() {
        let mut tape: Tape<f64> = Tape::new();
        let x = tape.leaf(
            Tensor::new(vec![2, 3], vec![1., 2., 3., 4., 5., 6.]).unwrap(),
            true,
        );
        let y = reshape(&mut tape, x, vec![3, 2]).unwrap();
        assert_eq!(tape.value(y).shape(), &[3, 2]);
        let loss = sum_all(&mut tape, y);
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get(x).unwrap().shape(), &[2, 3]);
    }
}
