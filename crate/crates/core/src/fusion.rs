//! Kernel fusion: the convex combination `K* = sum_m beta_m K^m` with weights
//! chosen uniformly (naive), by consensus similarity (STATIS), or by the
//! supervised SimpleMKL / SEMKL optimizers.

use crate::kernel::{frobenius_cosine, KernelMatrix};
use crate::linalg::{frobenius_norm, symmetric_eigen};
use crate::svm::{dual_objective, smo_solve};
use crate::{CoreError, Result};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionMethod {
    Naive,
    Fixed,
    Statis,
    SimpleMkl,
    Semkl,
}

/// One optimizer iteration: objective value and the weight vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionTrace {
    pub objective: f64,
    pub weights: Vec<f64>,
}

/// Simplex weights over the input kernels plus the assembled meta-kernel.
///
/// `scales` records any per-kernel rescaling applied before weighting (1 for
/// plain fusion, `1/||K^m||_F` when STATIS normalization is on); predictions
/// must apply the same scales to cross-kernels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusedKernel {
    pub weights: Vec<f64>,
    pub scales: Vec<f64>,
    pub meta: Array2<f64>,
    pub method: FusionMethod,
    pub input_refs: Vec<String>,
    pub trace: Vec<FusionTrace>,
    pub converged: bool,
}

impl FusedKernel {
    /// Fuse per-view cross-kernels with this record's weights and scales.
    pub fn fuse_cross(&self, crosses: &[Array2<f64>]) -> Result<Array2<f64>> {
        if crosses.len() != self.weights.len() {
            return Err(CoreError::dims("cross kernel count != weight count"));
        }
        let mut out = Array2::zeros(crosses[0].raw_dim());
        for ((cross, &w), &s) in crosses.iter().zip(&self.weights).zip(&self.scales) {
            if cross.raw_dim() != out.raw_dim() {
                return Err(CoreError::dims("cross kernel size mismatch"));
            }
            out += &(cross * (w * s));
        }
        Ok(out)
    }
}

fn check_same_size(kernels: &[KernelMatrix]) -> Result<usize> {
    if kernels.is_empty() {
        return Err(CoreError::invalid("no kernels to fuse"));
    }
    let n = kernels[0].n();
    for k in kernels {
        if k.n() != n || k.values.ncols() != n {
            return Err(CoreError::dims("kernel size mismatch"));
        }
    }
    Ok(n)
}

fn assemble(kernels: &[KernelMatrix], weights: &[f64], scales: &[f64]) -> Array2<f64> {
    let n = kernels[0].n();
    let mut meta = Array2::zeros((n, n));
    for ((k, &w), &s) in kernels.iter().zip(weights).zip(scales) {
        meta += &(&k.values * (w * s));
    }
    meta
}

/// Clamp weights below 1e-8 to zero and renormalize to the simplex.
fn clamp_and_renormalize(weights: &mut [f64]) {
    for w in weights.iter_mut() {
        if *w < 1e-8 {
            *w = 0.0;
        }
    }
    let total: f64 = weights.iter().sum();
    if total > 0.0 {
        for w in weights.iter_mut() {
            *w /= total;
        }
    }
}

/// Fixed-weight fusion; omitted weights mean the uniform 1/M combination.
pub fn fuse_fixed(kernels: &[KernelMatrix], weights: Option<&[f64]>) -> Result<FusedKernel> {
    check_same_size(kernels)?;
    let m = kernels.len();
    let (weights, method) = match weights {
        None => (vec![1.0 / m as f64; m], FusionMethod::Naive),
        Some(w) => {
            if w.len() != m {
                return Err(CoreError::dims("weight count != kernel count"));
            }
            if let Some(neg) = w.iter().find(|&&v| v < 0.0) {
                return Err(CoreError::invalid(format!("negative weight {neg}")));
            }
            if (w.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return Err(CoreError::invalid("weights must sum to 1"));
            }
            (w.to_vec(), FusionMethod::Fixed)
        }
    };
    let scales = vec![1.0; m];
    let meta = assemble(kernels, &weights, &scales);
    Ok(FusedKernel {
        weights,
        scales,
        meta,
        method,
        input_refs: kernels.iter().map(|k| k.view_name.clone()).collect(),
        trace: Vec::new(),
        converged: true,
    })
}

/// STATIS consensus weights: the sign-fixed, sum-one leading eigenvector of
/// the kernels' Frobenius-cosine similarity matrix.
pub fn statis_weights(kernels: &[KernelMatrix]) -> Result<Vec<f64>> {
    check_same_size(kernels)?;
    let m = kernels.len();
    if m < 2 {
        return Err(CoreError::invalid("STATIS needs at least two kernels"));
    }
    let mut c = Array2::zeros((m, m));
    for i in 0..m {
        for j in i..m {
            let cos = frobenius_cosine(&kernels[i], &kernels[j])?;
            c[[i, j]] = cos;
            c[[j, i]] = cos;
        }
    }
    let (_, vectors) = symmetric_eigen(&c)?;
    let mut leading: Vec<f64> = vectors.column(0).to_vec();
    // Eigenvector sign is arbitrary; flip so the dominant entry is positive.
    let dominant = leading
        .iter()
        .cloned()
        .fold(0.0f64, |acc, v| if v.abs() > acc.abs() { v } else { acc });
    if dominant < 0.0 {
        for v in leading.iter_mut() {
            *v = -*v;
        }
    }
    if leading.iter().any(|&v| v < -1e-9) {
        return Err(CoreError::numerical(
            "STATIS leading eigenvector has mixed signs; inputs are not valid PSD kernels",
        ));
    }
    let total: f64 = leading.iter().map(|v| v.max(0.0)).sum();
    if total <= 0.0 {
        return Err(CoreError::numerical("degenerate STATIS eigenvector"));
    }
    Ok(leading.iter().map(|v| v.max(0.0) / total).collect())
}

/// STATIS-UMKL fusion. With `normalize` on, kernels are Frobenius-normalized
/// before weighting so no view dominates by magnitude alone.
pub fn statis_fuse(kernels: &[KernelMatrix], normalize: bool) -> Result<FusedKernel> {
    let weights = statis_weights(kernels)?;
    let scales: Vec<f64> = if normalize {
        kernels
            .iter()
            .map(|k| {
                let norm = frobenius_norm(&k.values);
                if norm == 0.0 {
                    Err(CoreError::invalid("zero kernel in STATIS fusion"))
                } else {
                    Ok(1.0 / norm)
                }
            })
            .collect::<Result<_>>()?
    } else {
        vec![1.0; kernels.len()]
    };
    let meta = assemble(kernels, &weights, &scales);
    Ok(FusedKernel {
        weights,
        scales,
        meta,
        method: FusionMethod::Statis,
        input_refs: kernels.iter().map(|k| k.view_name.clone()).collect(),
        trace: Vec::new(),
        converged: true,
    })
}

/// Euclidean projection onto the probability simplex (sorted-threshold rule).
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (i, &u) in sorted.iter().enumerate() {
        cumsum += u;
        let candidate = (cumsum - 1.0) / (i + 1) as f64;
        if u - candidate > 0.0 {
            theta = candidate;
        }
    }
    v.iter().map(|&u| (u - theta).max(0.0)).collect()
}

/// Convergence settings shared by the iterative optimizers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MklConfig {
    pub tol: f64,
    pub max_iters: usize,
    pub backtrack: f64,
    pub initial_step: f64,
    pub svm_tol: f64,
}

impl Default for MklConfig {
    fn default() -> Self {
        MklConfig {
            tol: 1e-4,
            max_iters: 200,
            backtrack: 0.5,
            initial_step: 1.0,
            svm_tol: 1e-4,
        }
    }
}

fn check_binary_labels(y: &[f64], n: usize) -> Result<()> {
    if y.len() != n {
        return Err(CoreError::dims("label length != kernel size"));
    }
    if y.iter().any(|&v| v != 1.0 && v != -1.0) {
        return Err(CoreError::invalid("labels must be +1 or -1"));
    }
    if y.iter().all(|&v| v == y[0]) {
        return Err(CoreError::invalid("labels contain a single class"));
    }
    Ok(())
}

/// SVM objective `J(beta)` and the optimal dual point for a weight vector.
fn solve_j(
    kernels: &[KernelMatrix],
    weights: &[f64],
    y: &[f64],
    cost: f64,
    svm_tol: f64,
) -> Result<(f64, Vec<f64>)> {
    let scales = vec![1.0; kernels.len()];
    let meta = assemble(kernels, weights, &scales);
    let sol = smo_solve(&meta, y, cost, svm_tol)?;
    let obj = dual_objective(&meta, y, &sol.alphas);
    Ok((obj, sol.alphas))
}

/// Per-kernel quadratic forms `q_m = (alpha . y)' K^m (alpha . y)`.
fn kernel_quadratic_forms(kernels: &[KernelMatrix], y: &[f64], alphas: &[f64]) -> Vec<f64> {
    let ay: Vec<f64> = alphas.iter().zip(y).map(|(a, yi)| a * yi).collect();
    kernels
        .iter()
        .map(|k| {
            let mut q = 0.0;
            for (i, &ai) in ay.iter().enumerate() {
                if ai == 0.0 {
                    continue;
                }
                for (j, &aj) in ay.iter().enumerate() {
                    q += ai * aj * k.values[[i, j]];
                }
            }
            q
        })
        .collect()
}

/// Gradient of `J(beta)` at the optimal dual point: `g_m = -q_m / 2`.
pub fn simplemkl_gradient(kernels: &[KernelMatrix], y: &[f64], alphas: &[f64]) -> Vec<f64> {
    kernel_quadratic_forms(kernels, y, alphas)
        .into_iter()
        .map(|q| -0.5 * q)
        .collect()
}

/// SimpleMKL: projected reduced-gradient descent of the SVM objective over
/// the simplex, with backtracking line search. The returned trace records the
/// objective after every accepted step.
pub fn simplemkl_optimize(
    kernels: &[KernelMatrix],
    y: &[f64],
    cost: f64,
    config: &MklConfig,
) -> Result<FusedKernel> {
    let n = check_same_size(kernels)?;
    check_binary_labels(y, n)?;
    if !(cost > 0.0) {
        return Err(CoreError::invalid("cost must be positive"));
    }
    let m = kernels.len();
    let mut weights = vec![1.0 / m as f64; m];
    let (mut objective, mut alphas) = solve_j(kernels, &weights, y, cost, config.svm_tol)?;
    let mut trace = vec![FusionTrace {
        objective,
        weights: weights.clone(),
    }];
    let mut converged = false;

    for _ in 0..config.max_iters {
        let grad = simplemkl_gradient(kernels, y, &alphas);
        let mut step = config.initial_step;
        let mut accepted = false;
        while step > 1e-12 {
            let candidate: Vec<f64> = weights
                .iter()
                .zip(&grad)
                .map(|(w, g)| w - step * g)
                .collect();
            let candidate = project_simplex(&candidate);
            let moved = candidate
                .iter()
                .zip(&weights)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max);
            if moved == 0.0 {
                break;
            }
            let (cand_obj, cand_alphas) = solve_j(kernels, &candidate, y, cost, config.svm_tol)?;
            if cand_obj <= objective {
                let delta = moved;
                weights = candidate;
                objective = cand_obj;
                alphas = cand_alphas;
                trace.push(FusionTrace {
                    objective,
                    weights: weights.clone(),
                });
                accepted = true;
                if delta < config.tol {
                    converged = true;
                }
                break;
            }
            step *= config.backtrack;
        }
        if !accepted {
            converged = true;
        }
        if converged {
            break;
        }
    }

    clamp_and_renormalize(&mut weights);
    let scales = vec![1.0; m];
    let meta = assemble(kernels, &weights, &scales);
    Ok(FusedKernel {
        weights,
        scales,
        meta,
        method: FusionMethod::SimpleMkl,
        input_refs: kernels.iter().map(|k| k.view_name.clone()).collect(),
        trace,
        converged,
    })
}

/// SEMKL: closed-form group-lasso weight updates
/// `beta_m <- beta_m sqrt(gamma_m) / sum_k beta_k sqrt(gamma_k)`.
pub fn semkl_optimize(
    kernels: &[KernelMatrix],
    y: &[f64],
    cost: f64,
    config: &MklConfig,
) -> Result<FusedKernel> {
    let n = check_same_size(kernels)?;
    check_binary_labels(y, n)?;
    if !(cost > 0.0) {
        return Err(CoreError::invalid("cost must be positive"));
    }
    let m = kernels.len();
    let mut weights = vec![1.0 / m as f64; m];
    let mut trace = Vec::new();
    let mut converged = false;

    for _ in 0..config.max_iters {
        let (objective, alphas) = solve_j(kernels, &weights, y, cost, config.svm_tol)?;
        trace.push(FusionTrace {
            objective,
            weights: weights.clone(),
        });
        let gammas = kernel_quadratic_forms(kernels, y, &alphas);
        let scaled: Vec<f64> = weights
            .iter()
            .zip(&gammas)
            .map(|(w, g)| w * g.max(0.0).sqrt())
            .collect();
        let total: f64 = scaled.iter().sum();
        if total <= 0.0 {
            return Err(CoreError::numerical(
                "SEMKL degenerate: all kernel quadratic forms are zero (no support vectors)",
            ));
        }
        let updated: Vec<f64> = scaled.iter().map(|s| s / total).collect();
        let delta = updated
            .iter()
            .zip(&weights)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        weights = updated;
        if delta < config.tol {
            converged = true;
            break;
        }
    }

    clamp_and_renormalize(&mut weights);
    let scales = vec![1.0; m];
    let meta = assemble(kernels, &weights, &scales);
    Ok(FusedKernel {
        weights,
        scales,
        meta,
        method: FusionMethod::Semkl,
        input_refs: kernels.iter().map(|k| k.view_name.clone()).collect(),
        trace,
        converged,
    })
}
