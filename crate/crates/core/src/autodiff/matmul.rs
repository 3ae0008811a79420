//! Small GEMM kernels shared by matmul and conv2d.
//!
//! All kernels accumulate into `out` (callers zero-fill when needed), which
//! lets backward rules reuse them for `+=` gradient accumulation.

use super::Real;

/// out[m x n] += a[m x k] * b[k x n]
pub fn gemm_ab<T: Real>(a: &[T], b: &[T], out: &mut [T], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let orow = &mut out[i * n..(i + 1) * n];
        for (kk, &av) in arow.iter().enumerate() {
            if av == T::zero() {
                continue;
            }
            let brow = &b[kk * n..(kk + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow.iter()) {
                *o = *o + av * bv;
            }
        }
    }
}

/// out[m x n] += a[m x k] * b[n x k]^T  (rows of both operands contiguous)
pub fn gemm_abt<T: Real>(a: &[T], b: &[T], out: &mut [T], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    debug_assert_eq!(out.len(), m * n);
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let orow = &mut out[i * n..(i + 1) * n];
        for j in 0..n {
            let brow = &b[j * k..(j + 1) * k];
            let mut acc = T::zero();
            for (&av, &bv) in arow.iter().zip(brow.iter()) {
                acc = acc + av * bv;
            }
            orow[j] = orow[j] + acc;
        }
    }
}

/// out[k x n] += a[m x k]^T * b[m x n]
pub fn gemm_atb<T: Real>(a: &[T], b: &[T], out: &mut [T], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), m * n);
    debug_assert_eq!(out.len(), k * n);
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let brow = &b[i * n..(i + 1) * n];
        for (kk, &av) in arow.iter().enumerate() {
            if av == T::zero() {
                continue;
            }
            let orow = &mut out[kk * n..(kk + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow.iter()) {
                *o = *o + av * bv;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                for kk in 0..k {
                    out[i * n + j] += a[i * k + kk] * b[kk * n + j];
                }
            }
        }
        out
    }

    #[test]
    fn kernels_agree_with_naive_product() {
        let (m, k, n) = (4, 5, 3);
        let a: Vec<f64> = (0..m * k).map(|i| (i as f64) * 0.3 - 2.0).collect();
        let b: Vec<f64> = (0..k * n).map(|i| (i as f64) * 0.7 - 5.0).collect();
        let want = naive(&a, &b, m, k, n);

        let mut ab = vec![0.0; m * n];
        gemm_ab(&a, &b, &mut ab, m, k, n);
        assert_eq!(ab, want);

        // b transposed to [n x k] then multiplied back
        let mut bt = vec![0.0; n * k];
        for i in 0..k {
            for j in 0..n {
                bt[j * k + i] = b[i * n + j];
            }
        }
        let mut abt = vec![0.0; m * n];
        gemm_abt(&a, &bt, &mut abt, m, k, n);
        assert_eq!(abt, want);

        // a transposed to [k x m]
        let mut at = vec![0.0; k * m];
        for i in 0..m {
            for j in 0..k {
                at[j * m + i] = a[i * k + j];
            }
        }
        let mut atb = vec![0.0; m * n];
        gemm_atb(&at, &b, &mut atb, k, m, n);
        assert_eq!(atb, want);
    }
}
