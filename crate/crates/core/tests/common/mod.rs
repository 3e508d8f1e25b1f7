//! Shared oracles for the acceptance suite.

use ndarray::{Array1, Array2};
use omkl_core::linalg::solve_linear;
use omkl_core::svm::dual_objective;

/// Brute-force C-SVM dual solver for tiny problems (n <= 8).
///
/// At the optimum of the box-and-equality constrained concave QP every
/// variable is either at 0, at C, or strictly inside the box ("free"). This
/// enumerates all 3^n such configurations, solves the equality-constrained
/// stationarity system on each face, keeps the feasible candidates, and
/// returns the one with the largest dual objective. Exponential, but exact up
/// to linear-solve rounding, and independent of the SMO code under test.
pub struct QpSolution {
    pub alphas: Vec<f64>,
    pub bias: f64,
    pub objective: f64,
}

pub fn qp_oracle(k: &Array2<f64>, y: &[f64], cost: f64) -> QpSolution {
    let n = y.len();
    assert!(n <= 8, "oracle is exponential in n");
    let q = Array2::from_shape_fn((n, n), |(i, j)| y[i] * y[j] * k[[i, j]]);
    let feas = 1e-9;

    let mut best: Option<(Vec<f64>, f64)> = None;
    // state per variable: 0 -> alpha = 0, 1 -> alpha = C, 2 -> free
    let mut state = vec![0u8; n];
    let total = 3usize.pow(n as u32);
    for code in 0..total {
        let mut c = code;
        for s in state.iter_mut() {
            *s = (c % 3) as u8;
            c /= 3;
        }
        let free: Vec<usize> = (0..n).filter(|&i| state[i] == 2).collect();
        let at_c: Vec<usize> = (0..n).filter(|&i| state[i] == 1).collect();

        let mut alphas = vec![0.0; n];
        for &i in &at_c {
            alphas[i] = cost;
        }
        if free.is_empty() {
            let eq: f64 = at_c.iter().map(|&i| y[i] * cost).sum();
            if eq.abs() > feas {
                continue;
            }
        } else {
            // Unknowns: alpha over the free set, plus the equality multiplier.
            // Stationarity on free i:  sum_{j free} Q_ij a_j - lambda y_i
            //                          = 1 - C * sum_{j at C} Q_ij
            // Constraint row:          sum_{i free} y_i a_i = -C sum_{j at C} y_j
            let f = free.len();
            let mut a = Array2::zeros((f + 1, f + 1));
            let mut b = Array1::zeros(f + 1);
            for (r, &i) in free.iter().enumerate() {
                for (cidx, &j) in free.iter().enumerate() {
                    a[[r, cidx]] = q[[i, j]];
                }
                a[[r, f]] = -y[i];
                b[r] = 1.0 - cost * at_c.iter().map(|&j| q[[i, j]]).sum::<f64>();
                a[[f, r]] = y[i];
            }
            b[f] = -cost * at_c.iter().map(|&j| y[j]).sum::<f64>();
            let Some(sol) = solve_linear(&a, &b) else {
                continue;
            };
            if free
                .iter()
                .enumerate()
                .any(|(r, _)| sol[r] < -feas || sol[r] > cost + feas)
            {
                continue;
            }
            for (r, &i) in free.iter().enumerate() {
                alphas[i] = sol[r].clamp(0.0, cost);
            }
        }
        let obj = dual_objective(k, y, &alphas);
        if best.as_ref().map_or(true, |(_, o)| obj > *o) {
            best = Some((alphas, obj));
        }
    }

    let (alphas, objective) = best.expect("at least the all-zero face is feasible");
    QpSolution { bias: bias_from_kkt(k, y, cost, &alphas), alphas, objective }
}

/// Bias recovery identical in spirit to the solver under test: average over
/// free support vectors, midpoint of the KKT-derived interval otherwise.
fn bias_from_kkt(k: &Array2<f64>, y: &[f64], cost: f64, alphas: &[f64]) -> f64 {
    let n = y.len();
    let e = |i: usize| -> f64 { (0..n).map(|j| alphas[j] * y[j] * k[[i, j]]).sum() };
    let margin = 1e-9 * cost;
    let free: Vec<usize> = (0..n)
        .filter(|&i| alphas[i] > margin && alphas[i] < cost - margin)
        .collect();
    if !free.is_empty() {
        return free.iter().map(|&i| y[i] - e(i)).sum::<f64>() / free.len() as f64;
    }
    let mut lo = f64::NEG_INFINITY;
    let mut hi = f64::INFINITY;
    for i in 0..n {
        let v = y[i] - e(i);
        let at_zero = alphas[i] <= margin;
        // alpha = 0 requires y_i f(x_i) >= 1, alpha = C requires <= 1.
        if (at_zero && y[i] > 0.0) || (!at_zero && y[i] < 0.0) {
            lo = lo.max(v);
        } else {
            hi = hi.min(v);
        }
    }
    if lo.is_finite() && hi.is_finite() {
        0.5 * (lo + hi)
    } else if lo.is_finite() {
        lo
    } else {
        hi
    }
}
