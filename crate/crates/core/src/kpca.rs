//! Kernel PCA on a training Gram matrix and projection of held-out samples.
//!
//! Scores follow the sqrt-lambda convention: training score column `j` carries
//! variance `lambda_j`. Eigenvector signs are fixed so the largest-magnitude
//! entry of each dual coefficient column is positive.

use crate::kernel::{center_cross_gram, center_gram, CrossKernelMatrix, KernelMatrix, KernelSpec};
use crate::linalg::symmetric_eigen;
use crate::{CoreError, Result};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

/// A fitted kernel PCA basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KpcaFit {
    /// n x d matrix whose column j is `v_j / sqrt(lambda_j)`.
    pub dual_coeffs: Array2<f64>,
    /// Strictly positive, non-increasing.
    pub eigenvalues: Vec<f64>,
    /// Uncentered training Gram, needed to center cross-kernels at projection.
    pub train_gram_uncentered: Array2<f64>,
    pub spec: KernelSpec,
    pub view_name: String,
    pub d: usize,
}

/// Sample scores over retained components (1-based component ids).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub scores: Array2<f64>,
    pub component_ids: Vec<usize>,
    pub view_name: String,
}

/// Default relative eigenvalue floor: numerically null components are dropped.
pub const DEFAULT_EIG_FLOOR: f64 = 1e-12;

/// Fit kernel PCA on an uncentered training Gram, retaining at most `d`
/// components with `lambda_j > eig_floor * lambda_1`.
pub fn kpca_fit(k_train: &KernelMatrix, d: usize, eig_floor: f64) -> Result<KpcaFit> {
    if d == 0 {
        return Err(CoreError::invalid("d must be >= 1"));
    }
    if k_train.centered {
        return Err(CoreError::invalid("kpca_fit expects an uncentered Gram"));
    }
    let n = k_train.n();
    if n < 2 {
        return Err(CoreError::invalid("need at least two samples"));
    }
    let centered = center_gram(k_train)?;
    let (values, vectors) = symmetric_eigen(&centered.values)?;
    let lambda1 = values[0];
    if lambda1 <= 0.0 {
        return Err(CoreError::numerical("all eigenvalues below the floor"));
    }
    let retained = values
        .iter()
        .take(d)
        .filter(|&&v| v > eig_floor * lambda1)
        .count();
    if retained == 0 {
        return Err(CoreError::numerical("all eigenvalues below the floor"));
    }
    let mut dual_coeffs = Array2::zeros((n, retained));
    let mut eigenvalues = Vec::with_capacity(retained);
    for j in 0..retained {
        let lambda = values[j];
        eigenvalues.push(lambda);
        let column = vectors.column(j);
        // Sign convention: largest-magnitude entry positive.
        let dominant = column
            .iter()
            .cloned()
            .fold(0.0f64, |acc, v| if v.abs() > acc.abs() { v } else { acc });
        let sign = if dominant < 0.0 { -1.0 } else { 1.0 };
        let scale = sign / lambda.sqrt();
        for i in 0..n {
            dual_coeffs[[i, j]] = column[i] * scale;
        }
    }
    Ok(KpcaFit {
        dual_coeffs,
        eigenvalues,
        train_gram_uncentered: k_train.values.clone(),
        spec: k_train.spec,
        view_name: k_train.view_name.clone(),
        d: retained,
    })
}

impl KpcaFit {
    /// Training scores `K_c . dual_coeffs` (column j equals `sqrt(lambda_j) v_j`).
    pub fn train_scores(&self) -> Result<Embedding> {
        let gram = KernelMatrix {
            values: self.train_gram_uncentered.clone(),
            spec: self.spec,
            view_name: self.view_name.clone(),
            centered: false,
            normalized: false,
        };
        let centered = center_gram(&gram)?;
        Ok(Embedding {
            scores: centered.values.dot(&self.dual_coeffs),
            component_ids: (1..=self.d).collect(),
            view_name: self.view_name.clone(),
        })
    }
}

/// Project held-out samples: center the cross-Gram against the training Gram
/// and multiply by the dual coefficients.
pub fn kpca_project(fit: &KpcaFit, k_cross: &CrossKernelMatrix) -> Result<Embedding> {
    if k_cross.spec != fit.spec {
        return Err(CoreError::invalid(format!(
            "cross kernel spec {:?} differs from fit spec {:?}",
            k_cross.spec, fit.spec
        )));
    }
    if k_cross.values.ncols() != fit.train_gram_uncentered.nrows() {
        return Err(CoreError::dims("cross kernel columns != training samples"));
    }
    let train = KernelMatrix {
        values: fit.train_gram_uncentered.clone(),
        spec: fit.spec,
        view_name: fit.view_name.clone(),
        centered: false,
        normalized: false,
    };
    let centered = center_cross_gram(k_cross, &train)?;
    Ok(Embedding {
        scores: centered.values.dot(&fit.dual_coeffs),
        component_ids: (1..=fit.d).collect(),
        view_name: fit.view_name.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{compute_cross_gram, compute_gram};
    use approx::assert_abs_diff_eq;
    use ndarray::{Array1, Array2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn centered_data(seed: u64, n: usize, p: usize) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut data = Array2::from_shape_fn((n, p), |_| rng.gen_range(-1.0..1.0f64));
        let means: Vec<f64> = (0..p).map(|j| data.column(j).sum() / n as f64).collect();
        for i in 0..n {
            for j in 0..p {
                data[[i, j]] -= means[j];
            }
        }
        data
    }

    /// Classical PCA oracle: eigendecompose X'X and project.
    fn pca_scores(data: &Array2<f64>, d: usize) -> Array2<f64> {
        let cov = data.t().dot(data);
        let (_, vectors) = symmetric_eigen(&cov).unwrap();
        let mut out = Array2::zeros((data.nrows(), d));
        for j in 0..d {
            let v = vectors.column(j);
            let col = data.dot(&v.to_owned());
            out.column_mut(j).assign(&col);
        }
        out
    }

    #[test]
    fn linear_kernel_kpca_equals_classical_pca() {
        let data = centered_data(1, 12, 4);
        let gram = compute_gram(&data, KernelSpec::Linear, "v").unwrap();
        let fit = kpca_fit(&gram, 3, DEFAULT_EIG_FLOOR).unwrap();
        let scores = fit.train_scores().unwrap();
        let oracle = pca_scores(&data, 3);
        for j in 0..3 {
            // Match up to per-column sign.
            let direct: f64 = (0..12).map(|i| (scores.scores[[i, j]] - oracle[[i, j]]).abs()).sum();
            let flipped: f64 = (0..12).map(|i| (scores.scores[[i, j]] + oracle[[i, j]]).abs()).sum();
            assert!(direct.min(flipped) < 1e-8, "column {j} mismatch");
        }
    }

    #[test]
    fn rank_one_data_retains_single_component() {
        let direction = [1.0, 2.0, -0.5];
        let data = Array2::from_shape_fn((6, 3), |(i, j)| (i as f64 - 2.5) * direction[j]);
        let gram = compute_gram(&data, KernelSpec::Linear, "v").unwrap();
        let fit = kpca_fit(&gram, 3, DEFAULT_EIG_FLOOR).unwrap();
        assert_eq!(fit.d, 1);
    }

    #[test]
    fn duplicate_rows_give_duplicate_scores() {
        let mut data = centered_data(2, 6, 3);
        for j in 0..3 {
            let v = data[[0, j]];
            data[[5, j]] = v;
        }
        let gram = compute_gram(&data, KernelSpec::Rbf { sigma: 0.6 }, "v").unwrap();
        let fit = kpca_fit(&gram, 3, DEFAULT_EIG_FLOOR).unwrap();
        let scores = fit.train_scores().unwrap();
        for j in 0..fit.d {
            assert_abs_diff_eq!(scores.scores[[0, j]], scores.scores[[5, j]], epsilon = 1e-9);
        }
    }

    #[test]
    fn projecting_training_set_reproduces_training_scores() {
        let data = centered_data(3, 8, 3);
        let spec = KernelSpec::Rbf { sigma: 0.9 };
        let gram = compute_gram(&data, spec, "v").unwrap();
        let fit = kpca_fit(&gram, 4, DEFAULT_EIG_FLOOR).unwrap();
        let train_scores = fit.train_scores().unwrap();
        let cross = compute_cross_gram(&data, &data, spec).unwrap();
        let projected = kpca_project(&fit, &cross).unwrap();
        for (a, b) in projected.scores.iter().zip(train_scores.scores.iter()) {
            assert_abs_diff_eq!(*a, *b, epsilon = 1e-9);
        }
    }

    #[test]
    fn single_test_point_equal_to_train_point() {
        let data = centered_data(4, 7, 2);
        let spec = KernelSpec::Rbf { sigma: 0.5 };
        let gram = compute_gram(&data, spec, "v").unwrap();
        let fit = kpca_fit(&gram, 3, DEFAULT_EIG_FLOOR).unwrap();
        let train_scores = fit.train_scores().unwrap();
        let point = data.row(2).to_owned().insert_axis(ndarray::Axis(0));
        let cross = compute_cross_gram(&point, &data, spec).unwrap();
        let projected = kpca_project(&fit, &cross).unwrap();
        for j in 0..fit.d {
            assert_abs_diff_eq!(projected.scores[[0, j]], train_scores.scores[[2, j]], epsilon = 1e-9);
        }
    }

    #[test]
    fn score_columns_orthogonal_with_variance_lambda() {
        let data = centered_data(5, 10, 4);
        let gram = compute_gram(&data, KernelSpec::Rbf { sigma: 0.8 }, "v").unwrap();
        let fit = kpca_fit(&gram, 5, DEFAULT_EIG_FLOOR).unwrap();
        let scores = fit.train_scores().unwrap().scores;
        let gramian = scores.t().dot(&scores);
        let lambda1 = fit.eigenvalues[0];
        for i in 0..fit.d {
            for j in 0..fit.d {
                let expected = if i == j { fit.eigenvalues[i] } else { 0.0 };
                assert!((gramian[[i, j]] - expected).abs() < 1e-7 * lambda1);
            }
        }
    }

    #[test]
    fn projection_linear_in_cross_kernel() {
        let data = centered_data(6, 8, 3);
        let spec = KernelSpec::Linear;
        let gram = compute_gram(&data, spec, "v").unwrap();
        let fit = kpca_fit(&gram, 2, DEFAULT_EIG_FLOOR).unwrap();
        let test_a = centered_data(7, 3, 3);
        let test_b = centered_data(8, 3, 3);
        let cross_a = compute_cross_gram(&test_a, &data, spec).unwrap();
        let cross_b = compute_cross_gram(&test_b, &data, spec).unwrap();
        let mut averaged = cross_a.clone();
        averaged.values = (&cross_a.values + &cross_b.values) / 2.0;
        let pa = kpca_project(&fit, &cross_a).unwrap();
        let pb = kpca_project(&fit, &cross_b).unwrap();
        let pavg = kpca_project(&fit, &averaged).unwrap();
        for (avg, (a, b)) in pavg.scores.iter().zip(pa.scores.iter().zip(pb.scores.iter())) {
            assert_abs_diff_eq!(*avg, (a + b) / 2.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn retained_variance_bounded_by_trace() {
        let data = centered_data(9, 9, 3);
        let gram = compute_gram(&data, KernelSpec::Rbf { sigma: 1.1 }, "v").unwrap();
        let fit = kpca_fit(&gram, 9, DEFAULT_EIG_FLOOR).unwrap();
        let centered = crate::kernel::center_gram(&gram).unwrap();
        let trace: f64 = (0..9).map(|i| centered.values[[i, i]]).sum();
        let retained: f64 = fit.eigenvalues.iter().sum();
        assert!(retained <= trace + 1e-8);
    }

    #[test]
    fn dual_coeff_columns_normalized_against_centered_gram() {
        let data = centered_data(10, 8, 3);
        let gram = compute_gram(&data, KernelSpec::Rbf { sigma: 0.7 }, "v").unwrap();
        let fit = kpca_fit(&gram, 4, DEFAULT_EIG_FLOOR).unwrap();
        let centered = crate::kernel::center_gram(&gram).unwrap();
        for j in 0..fit.d {
            let alpha: Array1<f64> = fit.dual_coeffs.column(j).to_owned();
            let quad = alpha.dot(&centered.values.dot(&alpha));
            assert_abs_diff_eq!(quad, 1.0, epsilon = 1e-8);
        }
    }

    #[test]
    fn train_mean_of_scores_is_zero() {
        let data = centered_data(11, 10, 3);
        let gram = compute_gram(&data, KernelSpec::Rbf { sigma: 0.4 }, "v").unwrap();
        let fit = kpca_fit(&gram, 3, DEFAULT_EIG_FLOOR).unwrap();
        let scores = fit.train_scores().unwrap().scores;
        for j in 0..fit.d {
            assert_abs_diff_eq!(scores.column(j).sum() / 10.0, 0.0, epsilon = 1e-9);
        }
    }
}
