//! Small dense linear-algebra helpers shared across the crate.

use crate::{CoreError, Result};
use ndarray::{Array1, Array2};

/// Symmetric eigendecomposition, eigenvalues sorted in non-increasing order.
///
/// Returns `(eigenvalues, eigenvectors)` with eigenvectors stored as columns,
/// column `j` paired with `eigenvalues[j]`. The input must be symmetric to
/// within `1e-9` (relative to its largest entry).
pub fn symmetric_eigen(a: &Array2<f64>) -> Result<(Array1<f64>, Array2<f64>)> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(CoreError::dims(format!(
            "symmetric_eigen expects a square matrix, got {}x{}",
            n,
            a.ncols()
        )));
    }
    check_symmetric(a, 1e-9)?;

    let m = nalgebra::DMatrix::from_fn(n, n, |i, j| a[[i, j]]);
    let eig = m.symmetric_eigen();

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[j]
            .partial_cmp(&eig.eigenvalues[i])
            .expect("non-finite eigenvalue")
    });

    let values = Array1::from_iter(order.iter().map(|&k| eig.eigenvalues[k]));
    let mut vectors = Array2::zeros((n, n));
    for (dst, &src) in order.iter().enumerate() {
        for i in 0..n {
            vectors[[i, dst]] = eig.eigenvectors[(i, src)];
        }
    }
    Ok((values, vectors))
}

/// Fails when `max_ij |A_ij - A_ji|` exceeds `tol * max(1, max |A_ij|)`.
pub fn check_symmetric(a: &Array2<f64>, tol: f64) -> Result<()> {
    let scale = a.iter().fold(1.0f64, |acc, v| acc.max(v.abs()));
    for i in 0..a.nrows() {
        for j in (i + 1)..a.ncols() {
            if (a[[i, j]] - a[[j, i]]).abs() > tol * scale {
                return Err(CoreError::invalid(format!(
                    "matrix not symmetric at ({i},{j}): {} vs {}",
                    a[[i, j]],
                    a[[j, i]]
                )));
            }
        }
    }
    Ok(())
}

/// Frobenius norm.
pub fn frobenius_norm(a: &Array2<f64>) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Frobenius inner product `<A, B>_F = sum_ij A_ij B_ij`.
pub fn frobenius_dot(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Solve `A x = b` by Gaussian elimination with partial pivoting.
///
/// Returns `None` when the system is numerically singular.
pub fn solve_linear(a: &Array2<f64>, b: &Array1<f64>) -> Option<Array1<f64>> {
    let n = a.nrows();
    assert_eq!(a.ncols(), n);
    assert_eq!(b.len(), n);
    let mut m = a.clone();
    let mut rhs = b.clone();
    for col in 0..n {
        let mut pivot = col;
        for row in (col + 1)..n {
            if m[[row, col]].abs() > m[[pivot, col]].abs() {
                pivot = row;
            }
        }
        if m[[pivot, col]].abs() < 1e-12 {
            return None;
        }
        if pivot != col {
            for k in 0..n {
                m.swap([col, k], [pivot, k]);
            }
            rhs.swap(col, pivot);
        }
        for row in (col + 1)..n {
            let factor = m[[row, col]] / m[[col, col]];
            for k in col..n {
                m[[row, k]] -= factor * m[[col, k]];
            }
            rhs[row] -= factor * rhs[col];
        }
    }
    let mut x = Array1::zeros(n);
    for row in (0..n).rev() {
        let mut acc = rhs[row];
        for k in (row + 1)..n {
            acc -= m[[row, k]] * x[k];
        }
        x[row] = acc / m[[row, row]];
    }
    Some(x)
}
