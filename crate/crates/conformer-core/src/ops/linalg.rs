//! Dense matrix ops.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// C[m,n] = A[m,k] * B[k,n]
pub(crate) fn mm_nn<S: Scalar>(a: &[S], b: &[S], m: usize, k: usize, n: usize) -> Vec<S> {
    let mut c = vec![S::zero(); m * n];
    for i in 0..m {
        for p in 0..k {
            let av = a[i * k + p];
            let (brow, crow) = (&b[p * n..p * n + n], &mut c[i * n..i * n + n]);
            for j in 0..n {
                crow[j] = crow[j] + av * brow[j];
            }
        }
    }
    c
}

/// C[m,n] = A[m,k] * B[n,k]^T
pub(crate) fn mm_nt<S: Scalar>(a: &[S], b: &[S], m: usize, k: usize, n: usize) -> Vec<S> {
    let mut c = vec![S::zero(); m * n];
    for i in 0..m {
        let arow = &a[i * k..i * k + k];
        for j in 0..n {
            let brow = &b[j * k..j * k + k];
            let mut acc = S::zero();
            for p in 0..k {
                acc = acc + arow[p] * brow[p];
            }
            c[i * n + j] = acc;
        }
    }
    c
}

/// C[m,n] = A[k,m]^T * B[k,n]
pub(crate) fn mm_tn<S: Scalar>(a: &[S], b: &[S], m: usize, k: usize, n: usize) -> Vec<S> {
    let mut c = vec![S::zero(); m * n];
    for p in 0..k {
        let (arow, brow) = (&a[p * m..p * m + m], &b[p * n..p * n + n]);
        for i in 0..m {
            let av = arow[i];
            let crow = &mut c[i * n..i * n + n];
            for j in 0..n {
                crow[j] = crow[j] + av * brow[j];
            }
        }
    }
    c
}

/// Matrix product of two rank-2 tensors.
pub fn matmul<S: Scalar>(tape: &mut Tape<S>, a: Var, b: Var) -> Result<Var> {
    let av = tape.value(a).clone();
    let bv = tape.value(b).clone();
    if av.rank() != 2 || bv.rank() != 2 || av.dim(1) != bv.dim(0) {
        return Err(Error::ShapeMismatch {
            op: "matmul",
            lhs: av.shape().to_vec(),
            rhs: bv.shape().to_vec(),
        });
    }
    let (m, k, n) = (av.dim(0), av.dim(1), bv.dim(1));
    let out = Tensor::new(vec![m, n], mm_nn(av.data(), bv.data(), m, k, n))?;
    Ok(tape.push(out, &[a, b], move |g, store| {
        // dA = g * B^T, dB = A^T * g
        let da = mm_nt(g.data(), bv.data(), m, n, k);
        let db = mm_tn(av.data(), g.data(), k, m, n);
        store.accumulate(a.index(), Tensor::new(vec![m, k], da).unwrap());
        store.accumulate(b.index(), Tensor::new(vec![k, n], db).unwrap());
    }))
}

/// Transpose a rank-2 tensor.
pub fn transpose<S: Scalar>(tape: &mut Tape<S>, x: Var) -> Result<Var> {
    let xv = tape.value(x).clone();
    if xv.rank() != 2 {
        return Err(Error::dimension("transpose", "input must have rank 2"));
    }
    let (m, n) = (xv.dim(0), xv.dim(1));
    let out = Tensor::from_fn(&[n, m], |i| xv.data()[(i % m) * n + i / m]);
    Ok(tape.push(out, &[x], move |g, store| {
        let dx = Tensor::from_fn(&[m, n], |i| g.data()[(i % n) * m + i / n]);
        store.accumulate(x.index(), dx);
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ops::sum_all;

    #[test]
    fn matmul_small_known_values() {
        let mut tape: Tape<f64> = Tape::new();
        let a = tape.leaf(
            Tensor::new(vec![2, 3], vec![1., 2., 3., 4., 5., 6.]).unwrap(),
            true,
        );
        let b = tape.leaf(
            Tensor::new(vec![3, 2], vec![7., 8., 9., 10., 11., 12.]).unwrap(),
            true,
        );
        let c = matmul(&mut tape, a, b).unwrap();
        assert_eq!(tape.value(c).data(), &[58., 64., 139., 154.]);
    }

    #[test]
    fn matmul_gradients_are_transposed_products() {
        let mut tape: Tape<f64> = Tape::new();
        let a = tape.leaf(Tensor::new(vec![2, 2], vec![1., 2., 3., 4.]).unwrap(), true);
        let b = tape.leaf(Tensor::new(vec![2, 2], vec![5., 6., 7., 8.]).unwrap(), true);
        let c = matmul(&mut tape, a, b).unwrap();
        let loss = sum_all(&mut tape, c);
        let grads = tape.backward(loss).unwrap();
        // dL/dA = ones * B^T: rows are [5+6, 7+8]
        assert_eq!(grads.get(a).unwrap().data(), &[11., 15., 11., 15.]);
        // dL/dB = A^T * ones: rows are [1+3, 2+4] broadcast over columns
        assert_eq!(grads.get(b).unwrap().data(), &[4., 4., 6., 6.]);
    }

    #[test]
    fn matmul_rejects_inner_mismatch() {
        let mut tape: Tape<f64> = Tape::new();
        let a = tape.leaf(Tensor::filled(&[2, 3], 1.0), true);
        let b = tape.leaf(Tensor::filled(&[2, 2], 1.0), true);
        assert!(matmul(&mut tape, a, b).is_err());
    }

    #[test]
    fn transpose_round_trip() {
        let mut tape: Tape<f64> = Tape::new();
        let x = tape.leaf(
            Tensor::new(vec![2, 3], vec![1., 2., 3., 4., 5., 6.]).unwrap(),
            true,
        );
        let t = transpose(&mut tape, x).unwrap();
        let tt = transpose(&mut tape, t).unwrap();
        assert_eq!(tape.value(tt).data(), tape.value(x).data());
        assert_eq!(tape.value(t).shape(), &[3, 2]);
        assert_eq!(tape.value(t).data(), &[1., 4., 2., 5., 3., 6.]);
    }
}
