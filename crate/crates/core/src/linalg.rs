//! Small dense kernels: complex determinant by partial pivoting and a real
//! nullspace by complete pivoting. Matrices are row-major slices.

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;

/// Determinant by Gaussian elimination with partial pivoting; row swaps flip the sign.
/// The empty matrix has determinant one.
pub(crate) fn determinant(n: usize, data: &[Complex64]) -> Complex64 {
    debug_assert_eq!(data.len(), n * n);
    let mut a = data.to_vec();
    let mut det = Complex64::new(1.0, 0.0);
    for k in 0..n {
        let mut p = k;
        let mut best = a[k * n + k].norm();
        for r in k + 1..n {
            let v = a[r * n + k].norm();
            if v > best {
                best = v;
                p = r;
            }
        }
        if best == 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        if p != k {
            for c in 0..n {
                a.swap(k * n + c, p * n + c);
            }
            det = -det;
        }
        let pivot = a[k * n + k];
        det *= pivot;
        for r in k + 1..n {
            let f = a[r * n + k] / pivot;
            if f == Complex64::new(0.0, 0.0) {
                continue;
            }
            for c in k + 1..n {
                let t = a[k * n + c];
                a[r * n + c] -= f * t;
            }
        }
    }
    det
}

/// Result of a complete-pivoting elimination used to extract one null vector.
pub(crate) struct NullVector {
    pub vector: Vec<f64>,
    /// Largest pivot magnitude, the scale for the two below.
    pub scale: f64,
    pub smallest_pivot: f64,
    pub second_smallest_pivot: f64,
}

/// Eliminates with complete pivoting, sets the last (smallest-pivot) unknown to one and
/// back-substitutes. The caller judges from the pivots whether the matrix is singular.
pub(crate) fn null_vector(n: usize, data: &[f64]) -> NullVector {
    debug_assert!(n > 0);
    let mut a = data.to_vec();
    let mut cols: Vec<usize> = (0..n).collect();
    let mut pivots = vec![0.0; n];
    for k in 0..n {
        let (mut pr, mut pc, mut best) = (k, k, -1.0);
        for r in k..n {
            for c in k..n {
                let v = a[r * n + c].abs();
                if v > best {
                    best = v;
                    pr = r;
                    pc = c;
                }
            }
        }
        if pr != k {
            for c in 0..n {
                a.swap(k * n + c, pr * n + c);
            }
        }
        if pc != k {
            for r in 0..n {
                a.swap(r * n + k, r * n + pc);
            }
            cols.swap(k, pc);
        }
        pivots[k] = best;
        let pivot = a[k * n + k];
        if pivot == 0.0 {
            continue;
        }
        for r in k + 1..n {
            let f = a[r * n + k] / pivot;
            for c in k..n {
                let t = a[k * n + c];
                a[r * n + c] -= f * t;
            }
        }
    }
    // Upper-triangular in permuted unknowns; the last row is the (near) zero one.
    let mut y = vec![0.0; n];
    y[n - 1] = 1.0;
    for k in (0..n - 1).rev() {
        let mut s = 0.0;
        for c in k + 1..n {
            s += a[k * n + c] * y[c];
        }
        let pivot = a[k * n + k];
        y[k] = if pivot == 0.0 { 0.0 } else { -s / pivot };
    }
    let mut vector = vec![0.0; n];
    for (k, &col) in cols.iter().enumerate() {
        vector[col] = y[k];
    }
    NullVector {
        vector,
        scale: pivots[0],
        smallest_pivot: pivots[n - 1],
        second_smallest_pivot: if n >= 2 { pivots[n - 2] } else { pivots[0] },
    }
}
