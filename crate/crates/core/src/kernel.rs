//! Gram and cross-Gram computation, centering, normalization, and PSD checks.
//!
//! RBF convention: `k(x, y) = exp(-sigma * ||x - y||^2)` with `sigma` the
//! inverse kernel width (no factor of 2 in a denominator).

use crate::linalg::{check_symmetric, frobenius_dot, frobenius_norm, symmetric_eigen};
use crate::{CoreError, Result};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

/// Which kernel function to apply.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelSpec {
    Rbf { sigma: f64 },
    Linear,
    Polynomial { degree: u32, offset: f64 },
}

impl KernelSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            KernelSpec::Rbf { sigma } => {
                if !(*sigma > 0.0) || !sigma.is_finite() {
                    return Err(CoreError::invalid(format!("rbf sigma must be > 0, got {sigma}")));
                }
            }
            KernelSpec::Linear => {}
            KernelSpec::Polynomial { degree, offset } => {
                if *degree < 1 {
                    return Err(CoreError::invalid("polynomial degree must be >= 1"));
                }
                if !(*offset >= 0.0) || !offset.is_finite() {
                    return Err(CoreError::invalid("polynomial offset must be >= 0"));
                }
            }
        }
        Ok(())
    }

    /// Evaluate k(x, y) for two feature rows.
    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        match self {
            KernelSpec::Rbf { sigma } => {
                let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
                (-sigma * d2).exp()
            }
            KernelSpec::Linear => x.iter().zip(y).map(|(a, b)| a * b).sum(),
            KernelSpec::Polynomial { degree, offset } => {
                let dot: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
                (dot + offset).powi(*degree as i32)
            }
        }
    }
}

/// An n x n Gram matrix tagged with the spec that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelMatrix {
    pub values: Array2<f64>,
    pub spec: KernelSpec,
    pub view_name: String,
    pub centered: bool,
    pub normalized: bool,
}

impl KernelMatrix {
    pub fn n(&self) -> usize {
        self.values.nrows()
    }
}

/// A t x n matrix of kernel values between test rows and training columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossKernelMatrix {
    pub values: Array2<f64>,
    pub spec: KernelSpec,
    pub centered: bool,
}

/// Pairwise Gram matrix; the upper triangle is computed and mirrored so the
/// result is exactly symmetric.
pub fn compute_gram(view_values: &Array2<f64>, spec: KernelSpec, view_name: &str) -> Result<KernelMatrix> {
    spec.validate()?;
    if let Some(v) = view_values.iter().find(|v| !v.is_finite()) {
        return Err(CoreError::invalid(format!("non-finite input value {v}")));
    }
    let n = view_values.nrows();
    let mut values = Array2::zeros((n, n));
    for i in 0..n {
        let xi = view_values.row(i);
        for j in i..n {
            let k = spec.eval(xi.as_slice().unwrap(), view_values.row(j).as_slice().unwrap());
            values[[i, j]] = k;
            values[[j, i]] = k;
        }
    }
    Ok(KernelMatrix {
        values,
        spec,
        view_name: view_name.to_string(),
        centered: false,
        normalized: false,
    })
}

/// Kernel values of every test row against every training row.
pub fn compute_cross_gram(
    test_values: &Array2<f64>,
    train_values: &Array2<f64>,
    spec: KernelSpec,
) -> Result<CrossKernelMatrix> {
    spec.validate()?;
    if test_values.ncols() != train_values.ncols() {
        return Err(CoreError::dims(format!(
            "feature dimension mismatch: test {} vs train {}",
            test_values.ncols(),
            train_values.ncols()
        )));
    }
    let t = test_values.nrows();
    let n = train_values.nrows();
    let mut values = Array2::zeros((t, n));
    for i in 0..t {
        let xi = test_values.row(i);
        for j in 0..n {
            values[[i, j]] = spec.eval(
                xi.as_slice().unwrap(),
                train_values.row(j).as_slice().unwrap(),
            );
        }
    }
    Ok(CrossKernelMatrix {
        values,
        spec,
        centered: false,
    })
}

/// Double-centering `(I - J) K (I - J)` with `J = ones(n,n)/n`.
pub fn center_gram(k: &KernelMatrix) -> Result<KernelMatrix> {
    if k.centered {
        return Err(CoreError::invalid("Gram matrix already centered"));
    }
    let n = k.n();
    let nf = n as f64;
    let row_means: Vec<f64> = (0..n).map(|i| k.values.row(i).sum() / nf).collect();
    let grand = row_means.iter().sum::<f64>() / nf;
    let mut values = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            values[[i, j]] = k.values[[i, j]] - row_means[i] - row_means[j] + grand;
        }
    }
    Ok(KernelMatrix {
        values,
        spec: k.spec,
        view_name: k.view_name.clone(),
        centered: true,
        normalized: k.normalized,
    })
}

/// Center a cross-Gram consistently with a training Gram:
/// `(K_cross - ones(t,n) K_train / n)(I - J)`.
pub fn center_cross_gram(k_cross: &CrossKernelMatrix, k_train: &KernelMatrix) -> Result<CrossKernelMatrix> {
    if k_cross.centered {
        return Err(CoreError::invalid("cross Gram already centered"));
    }
    if k_train.centered {
        return Err(CoreError::invalid("training Gram must be uncentered"));
    }
    let n = k_train.n();
    if k_cross.values.ncols() != n {
        return Err(CoreError::dims(format!(
            "cross Gram has {} columns, training Gram is {n}x{n}",
            k_cross.values.ncols()
        )));
    }
    let nf = n as f64;
    let t = k_cross.values.nrows();
    let train_col_means: Vec<f64> = (0..n).map(|j| k_train.values.column(j).sum() / nf).collect();
    let train_grand = train_col_means.iter().sum::<f64>() / nf;
    let cross_row_means: Vec<f64> = (0..t).map(|i| k_cross.values.row(i).sum() / nf).collect();
    let mut values = Array2::zeros((t, n));
    for i in 0..t {
        for j in 0..n {
            values[[i, j]] =
                k_cross.values[[i, j]] - train_col_means[j] - cross_row_means[i] + train_grand;
        }
    }
    Ok(CrossKernelMatrix {
        values,
        spec: k_cross.spec,
        centered: true,
    })
}

/// Cosine of two kernel matrices under the Frobenius inner product.
pub fn frobenius_cosine(a: &KernelMatrix, b: &KernelMatrix) -> Result<f64> {
    if a.n() != b.n() {
        return Err(CoreError::dims("kernel size mismatch"));
    }
    let na = frobenius_norm(&a.values);
    let nb = frobenius_norm(&b.values);
    if na == 0.0 || nb == 0.0 {
        return Err(CoreError::invalid("zero-norm kernel in frobenius_cosine"));
    }
    Ok((frobenius_dot(&a.values, &b.values) / (na * nb)).clamp(-1.0, 1.0))
}

/// Outcome of a PSD check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsdReport {
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
    pub is_psd: bool,
}

/// Smallest eigenvalue via symmetric eigensolve; flags failure when
/// `lambda_min < -tolerance * max(1, lambda_max)`.
pub fn validate_psd(k: &KernelMatrix, tolerance: f64) -> Result<PsdReport> {
    check_symmetric(&k.values, 1e-9)?;
    let (vals, _) = symmetric_eigen(&k.values)?;
    let max_eigenvalue = vals[0];
    let min_eigenvalue = vals[vals.len() - 1];
    Ok(PsdReport {
        min_eigenvalue,
        max_eigenvalue,
        is_psd: min_eigenvalue >= -tolerance * max_eigenvalue.max(1.0),
    })
}

/// Scale a Gram matrix to unit Frobenius norm.
pub fn frobenius_normalize(k: &KernelMatrix) -> Result<KernelMatrix> {
    let norm = frobenius_norm(&k.values);
    if norm == 0.0 {
        return Err(CoreError::invalid("cannot normalize a zero kernel matrix"));
    }
    Ok(KernelMatrix {
        values: &k.values / norm,
        spec: k.spec,
        view_name: k.view_name.clone(),
        centered: k.centered,
        normalized: true,
    })
}
