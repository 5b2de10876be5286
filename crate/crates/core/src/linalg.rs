//! Small dense solvers used by leaf-model fitting.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::scalar::Scalar;

/// In-place lower Cholesky factor of a symmetric positive-definite matrix.
/// Returns `None` when a pivot is not strictly positive.
pub fn cholesky<T: Scalar>(a: ArrayView2<'_, T>) -> Option<Array2<T>> {
    let n = a.nrows();
    debug_assert_eq!(n, a.ncols());
    let mut l = Array2::<T>::zeros((n, n));
    for j in 0..n {
        let mut d = a[[j, j]];
        for k in 0..j {
            d -= l[[j, k]] * l[[j, k]];
        }
        if d <= T::zero() || !d.is_finite() {
            return None;
        }
        let d = d.sqrt();
        l[[j, j]] = d;
        for i in (j + 1)..n {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = s / d;
        }
    }
    Some(l)
}

/// Solves `L Lᵀ x = b` given the lower factor.
pub fn cholesky_solve<T: Scalar>(l: &Array2<T>, b: ArrayView1<'_, T>) -> Array1<T> {
    let n = l.nrows();
    let mut y = Array1::<T>::zeros(n);
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[[i, k]] * y[k];
        }
        y[i] = s / l[[i, i]];
    }
    let mut x = Array1::<T>::zeros(n);
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in (i + 1)..n {
            s -= l[[k, i]] * x[k];
        }
        x[i] = s / l[[i, i]];
    }
    x
}

/// Solves a symmetric positive-definite system, `None` if it is not numerically SPD.
pub fn solve_spd<T: Scalar>(a: ArrayView2<'_, T>, b: ArrayView1<'_, T>) -> Option<Array1<T>> {
    cholesky(a).map(|l| cholesky_solve(&l, b))
}

/// Gaussian elimination with partial pivoting. Used by tests as an
/// independent route and as a fallback for indefinite systems.
pub fn solve_general<T: Scalar>(a: ArrayView2<'_, T>, b: ArrayView1<'_, T>) -> Option<Array1<T>> {
    let n = a.nrows();
    let mut m = a.to_owned();
    let mut rhs = b.to_owned();
    for col in 0..n {
        let (piv, best) = (col..n)
            .map(|r| (r, m[[r, col]].abs()))
            .fold((col, T::zero()), |acc, cur| if cur.1 > acc.1 { cur } else { acc });
        if best <= T::epsilon() * T::c(1e-3) {
            return None;
        }
        if piv != col {
            for k in 0..n {
                m.swap([col, k], [piv, k]);
            }
            rhs.swap(col, piv);
        }
        for r in (col + 1)..n {
            let f = m[[r, col]] / m[[col, col]];
            if f == T::zero() {
                continue;
            }
            for k in col..n {
                let v = m[[col, k]];
                m[[r, k]] -= f * v;
            }
            let v = rhs[col];
            rhs[r] -= f * v;
        }
    }
    let mut x = Array1::<T>::zeros(n);
    for i in (0..n).rev() {
        let mut s = rhs[i];
        for k in (i + 1)..n {
            s -= m[[i, k]] * x[k];
        }
        x[i] = s / m[[i, i]];
    }
    Some(x)
}

pub fn column_means<T: Scalar>(x: ArrayView2<'_, T>) -> Array1<T> {
    let n = T::from_usize_lossy(x.nrows().max(1));
    x.sum_axis(ndarray::Axis(0)) / n
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn cholesky_matches_elimination() {
        let a: Array2<f64> = array![[4.0, 2.0, 0.6], [2.0, 5.0, 1.0], [0.6, 1.0, 3.0]];
        let b: Array1<f64> = array![1.0, -2.0, 0.5];
        let x1 = solve_spd(a.view(), b.view()).unwrap();
        let x2 = solve_general(a.view(), b.view()).unwrap();
        for (p, q) in x1.iter().zip(x2.iter()) {
            assert!((p - q).abs() < 1e-12);
        }
        let r = a.dot(&x1) - &b;
        assert!(r.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn indefinite_rejected() {
        let a = array![[1.0, 2.0], [2.0, 1.0]];
        assert!(cholesky(a.view()).is_none());
        let z = array![[0.0f32, 0.0], [0.0, 0.0]];
        assert!(solve_general(z.view(), array![1.0f32, 1.0].view()).is_none());
    }
}
