//! C-SVM on precomputed kernels: SMO dual solver, binary and one-vs-rest
//! multiclass classifiers, decision values for AUC.

use crate::kernel::KernelMatrix;
use crate::linalg::check_symmetric;
use crate::{CoreError, Result};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

/// Raw output of the SMO solver.
#[derive(Debug, Clone)]
pub struct SmoSolution {
    pub alphas: Vec<f64>,
    pub bias: f64,
    pub pair_updates: usize,
    /// Set when a working pair had nonpositive curvature, which only happens
    /// on indefinite kernels; the solution may then be suboptimal.
    pub indefinite_warning: bool,
}

/// Maximal-violating-pair SMO for the C-SVM dual
/// `max W(alpha) = sum alpha_i - 1/2 sum_ij alpha_i alpha_j y_i y_j K_ij`
/// subject to `0 <= alpha_i <= C` and `sum alpha_i y_i = 0`.
///
/// Terminates when the maximal KKT violation drops below `tol`. The bias is
/// averaged over free support vectors, falling back to the midpoint of the
/// bound-derived interval when none are free.
pub fn smo_solve(k: &Array2<f64>, y: &[f64], cost: f64, tol: f64) -> Result<SmoSolution> {
    let n = y.len();
    if k.nrows() != n || k.ncols() != n {
        return Err(CoreError::dims(format!(
            "kernel is {}x{}, labels have length {n}",
            k.nrows(),
            k.ncols()
        )));
    }
    if !(cost > 0.0) {
        return Err(CoreError::invalid("cost must be positive"));
    }
    if y.iter().any(|&v| v != 1.0 && v != -1.0) {
        return Err(CoreError::invalid("labels must be +1 or -1"));
    }
    check_symmetric(k, 1e-9)?;

    let mut alphas = vec![0.0f64; n];
    // Gradient of the minimization objective 1/2 a'Qa - e'a, Q_ij = y_i y_j K_ij.
    let mut grad = vec![-1.0f64; n];
    let cap = 100 * n * n;
    let mut updates = 0usize;
    let mut indefinite_warning = false;

    loop {
        // Maximal violating pair.
        let mut m_up = f64::NEG_INFINITY;
        let mut i_up = usize::MAX;
        let mut m_low = f64::INFINITY;
        let mut i_low = usize::MAX;
        for t in 0..n {
            let v = -y[t] * grad[t];
            let in_up = (y[t] > 0.0 && alphas[t] < cost) || (y[t] < 0.0 && alphas[t] > 0.0);
            let in_low = (y[t] > 0.0 && alphas[t] > 0.0) || (y[t] < 0.0 && alphas[t] < cost);
            if in_up && v > m_up {
                m_up = v;
                i_up = t;
            }
            if in_low && v < m_low {
                m_low = v;
                i_low = t;
            }
        }
        if i_up == usize::MAX || i_low == usize::MAX || m_up - m_low < tol {
            break;
        }
        if updates >= cap {
            return Err(CoreError::numerical(format!(
                "SMO hit the iteration cap of {cap} pair updates"
            )));
        }
        let (i, j) = (i_up, i_low);
        let mut curvature = k[[i, i]] + k[[j, j]] - 2.0 * k[[i, j]];
        if curvature <= 0.0 {
            indefinite_warning = true;
            curvature = 1e-12;
        }
        // Direction alpha_i += y_i t, alpha_j -= y_j t preserves the equality
        // constraint; the unconstrained optimum is t* = (m_up - m_low)/curvature.
        let mut step = (m_up - m_low) / curvature;
        let (lo_i, hi_i) = if y[i] > 0.0 {
            (-alphas[i], cost - alphas[i])
        } else {
            (alphas[i] - cost, alphas[i])
        };
        let (lo_j, hi_j) = if y[j] > 0.0 {
            (alphas[j] - cost, alphas[j])
        } else {
            (-alphas[j], cost - alphas[j])
        };
        step = step.clamp(lo_i.max(lo_j), hi_i.min(hi_j));
        if step == 0.0 {
            break;
        }
        alphas[i] += y[i] * step;
        alphas[j] -= y[j] * step;
        alphas[i] = alphas[i].clamp(0.0, cost);
        alphas[j] = alphas[j].clamp(0.0, cost);
        for t in 0..n {
            grad[t] += y[t] * step * (k[[t, i]] - k[[t, j]]);
        }
        updates += 1;
    }

    // Bias from free support vectors, else the midpoint of the KKT interval.
    let free: Vec<usize> = (0..n)
        .filter(|&i| alphas[i] > 1e-12 && alphas[i] < cost - 1e-12)
        .collect();
    let bias = if !free.is_empty() {
        free.iter().map(|&i| -y[i] * grad[i]).sum::<f64>() / free.len() as f64
    } else {
        let mut hi = f64::NEG_INFINITY;
        let mut lo = f64::INFINITY;
        for t in 0..n {
            let v = -y[t] * grad[t];
            let in_up = (y[t] > 0.0 && alphas[t] < cost) || (y[t] < 0.0 && alphas[t] > 0.0);
            let in_low = (y[t] > 0.0 && alphas[t] > 0.0) || (y[t] < 0.0 && alphas[t] < cost);
            if in_up && v > hi {
                hi = v;
            }
            if in_low && v < lo {
                lo = v;
            }
        }
        (hi + lo) / 2.0
    };

    Ok(SmoSolution {
        alphas,
        bias,
        pair_updates: updates,
        indefinite_warning,
    })
}

/// Dual objective `W(alpha)` for a candidate point.
pub fn dual_objective(k: &Array2<f64>, y: &[f64], alphas: &[f64]) -> f64 {
    let n = y.len();
    let mut quad = 0.0;
    for i in 0..n {
        if alphas[i] == 0.0 {
            continue;
        }
        for j in 0..n {
            quad += alphas[i] * alphas[j] * y[i] * y[j] * k[[i, j]];
        }
    }
    alphas.iter().sum::<f64>() - 0.5 * quad
}

/// A fitted binary C-SVM over a precomputed training kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub alphas: Vec<f64>,
    pub labels: Vec<f64>,
    pub bias: f64,
    pub support_indices: Vec<usize>,
    pub cost: f64,
    pub kernel_ref: String,
    pub indefinite_warning: bool,
}

/// Default KKT tolerance for training.
pub const DEFAULT_SMO_TOL: f64 = 1e-3;

pub fn fit_binary(k_train: &KernelMatrix, y: &[f64], cost: f64) -> Result<SvmModel> {
    fit_binary_values(&k_train.values, y, cost, &format!("{:?}", k_train.spec))
}

pub fn fit_binary_values(k: &Array2<f64>, y: &[f64], cost: f64, kernel_ref: &str) -> Result<SvmModel> {
    if y.iter().all(|&v| v == y[0]) {
        return Err(CoreError::invalid("training labels contain a single class"));
    }
    let sol = smo_solve(k, y, cost, DEFAULT_SMO_TOL)?;
    let support_indices = (0..y.len()).filter(|&i| sol.alphas[i] > 0.0).collect();
    Ok(SvmModel {
        alphas: sol.alphas,
        labels: y.to_vec(),
        bias: sol.bias,
        support_indices,
        cost,
        kernel_ref: kernel_ref.to_string(),
        indefinite_warning: sol.indefinite_warning,
    })
}

/// `f(x_t) = sum_i alpha_i y_i K_cross[t, i] + b`.
pub fn decision_values(model: &SvmModel, k_cross: &Array2<f64>) -> Result<Vec<f64>> {
    if k_cross.ncols() != model.alphas.len() {
        return Err(CoreError::dims(format!(
            "cross kernel has {} columns, model was trained on {} samples",
            k_cross.ncols(),
            model.alphas.len()
        )));
    }
    Ok((0..k_cross.nrows())
        .map(|t| {
            model
                .support_indices
                .iter()
                .map(|&i| model.alphas[i] * model.labels[i] * k_cross[[t, i]])
                .sum::<f64>()
                + model.bias
        })
        .collect())
}

/// One-vs-rest multiclass SVM sharing a single training kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MulticlassSvm {
    pub models: Vec<SvmModel>,
    pub n_classes: usize,
}

pub fn fit_multiclass(k_train: &KernelMatrix, labels: &[usize], n_classes: usize, cost: f64) -> Result<MulticlassSvm> {
    fit_multiclass_values(&k_train.values, labels, n_classes, cost, &format!("{:?}", k_train.spec))
}

pub fn fit_multiclass_values(
    k: &Array2<f64>,
    labels: &[usize],
    n_classes: usize,
    cost: f64,
    kernel_ref: &str,
) -> Result<MulticlassSvm> {
    if n_classes < 2 {
        return Err(CoreError::invalid("need at least two classes"));
    }
    for c in 0..n_classes {
        if !labels.contains(&c) {
            return Err(CoreError::invalid(format!("class {c} absent from training labels")));
        }
    }
    let mut models = Vec::with_capacity(n_classes);
    for c in 0..n_classes {
        let y: Vec<f64> = labels.iter().map(|&l| if l == c { 1.0 } else { -1.0 }).collect();
        models.push(fit_binary_values(k, &y, cost, kernel_ref)?);
    }
    Ok(MulticlassSvm { models, n_classes })
}

impl MulticlassSvm {
    /// Per-class decision values, one row per test sample.
    pub fn decision_matrix(&self, k_cross: &Array2<f64>) -> Result<Array2<f64>> {
        let t = k_cross.nrows();
        let mut out = Array2::zeros((t, self.n_classes));
        for (c, model) in self.models.iter().enumerate() {
            let f = decision_values(model, k_cross)?;
            for (i, v) in f.into_iter().enumerate() {
                out[[i, c]] = v;
            }
        }
        Ok(out)
    }

    /// Argmax of per-class decision values, ties broken by lowest class index.
    pub fn predict(&self, k_cross: &Array2<f64>) -> Result<Vec<usize>> {
        let scores = self.decision_matrix(k_cross)?;
        Ok((0..scores.nrows())
            .map(|i| {
                let row = scores.row(i);
                let mut best = 0;
                for c in 1..self.n_classes {
                    if row[c] > row[best] {
                        best = c;
                    }
                }
                best
            })
            .collect())
    }
}
