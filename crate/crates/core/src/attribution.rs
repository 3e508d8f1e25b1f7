//! Two-step biomarker ranking: Integrated Gradients over the kernel-PC
//! embedding of a trained deep model selects the most influential components,
//! then kernel-gradient importance maps those components back to the original
//! features.

use crate::deep::DeepMklModel;
use crate::kernel::KernelSpec;
use crate::kpca::KpcaFit;
use crate::{CoreError, Result};
use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

pub const DEFAULT_IG_STEPS: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionConfig {
    pub steps: usize,
    pub top_k_components: usize,
    /// Per-view feature report lengths.
    pub top_k_features: Vec<usize>,
    /// Attribute toward true labels instead of the model's predictions.
    pub use_true_labels: bool,
}

impl AttributionConfig {
    pub fn new(top_k_components: usize, top_k_features: Vec<usize>) -> Self {
        AttributionConfig {
            steps: DEFAULT_IG_STEPS,
            top_k_components,
            top_k_features,
            use_true_labels: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentScore {
    /// 1-based component id within the view's embedding.
    pub component_id: usize,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureScore {
    pub feature: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewAttribution {
    pub view_name: String,
    pub components: Vec<ComponentScore>,
    pub features: Vec<FeatureScore>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionReport {
    pub views: Vec<ViewAttribution>,
    pub config: AttributionConfig,
}

/// Integrated Gradients of the target class's pre-softmax logit along the
/// straight path from `baseline` to `x`, midpoint Riemann rule.
pub fn integrated_gradients(
    model: &DeepMklModel,
    x: &[Array1<f64>],
    baseline: &[Array1<f64>],
    target: usize,
    steps: usize,
) -> Result<Vec<Array1<f64>>> {
    if steps == 0 {
        return Err(CoreError::invalid("steps must be >= 1"));
    }
    if x.len() != baseline.len() {
        return Err(CoreError::dims("baseline view count != input view count"));
    }
    for (xv, bv) in x.iter().zip(baseline) {
        if xv.len() != bv.len() {
            return Err(CoreError::dims("baseline width != input width"));
        }
    }
    // Evaluate all path points as one batch; eval-mode rows are independent.
    let path_views: Vec<Array2<f64>> = x
        .iter()
        .zip(baseline)
        .map(|(xv, bv)| {
            Array2::from_shape_fn((steps, xv.len()), |(t, i)| {
                let frac = (t as f64 + 0.5) / steps as f64;
                bv[i] + frac * (xv[i] - bv[i])
            })
        })
        .collect();
    let grads = model.logit_input_gradients(&path_views, target)?;
    Ok(grads
        .iter()
        .zip(x.iter().zip(baseline))
        .map(|(g, (xv, bv))| {
            Array1::from_shape_fn(xv.len(), |i| {
                let avg = g.column(i).sum() / steps as f64;
                (xv[i] - bv[i]) * avg
            })
        })
        .collect())
}

/// Rank embedding components per view by mean |IG| over the given samples,
/// attributing toward the predicted class (or `labels` when provided) against
/// the all-zeros baseline. Returns 1-based ids with scores, descending,
/// ties broken by the lower id.
pub fn rank_components(
    model: &DeepMklModel,
    embeddings: &[Array2<f64>],
    labels: Option<&[usize]>,
    steps: usize,
    top_k: usize,
) -> Result<Vec<Vec<ComponentScore>>> {
    if embeddings.is_empty() || embeddings[0].nrows() == 0 {
        return Err(CoreError::invalid("no samples to attribute"));
    }
    let n = embeddings[0].nrows();
    if let Some(l) = labels {
        if l.len() != n {
            return Err(CoreError::dims("label count != sample count"));
        }
    }
    for e in embeddings {
        if top_k > e.ncols() {
            return Err(CoreError::invalid(format!(
                "top_k {top_k} exceeds embedding width {}",
                e.ncols()
            )));
        }
    }
    let targets: Vec<usize> = match labels {
        Some(l) => l.to_vec(),
        None => model.predict(embeddings)?,
    };
    let baselines: Vec<Array1<f64>> =
        embeddings.iter().map(|e| Array1::zeros(e.ncols())).collect();
    let mut totals: Vec<Array1<f64>> =
        embeddings.iter().map(|e| Array1::zeros(e.ncols())).collect();
    for s in 0..n {
        let row: Vec<Array1<f64>> = embeddings.iter().map(|e| e.row(s).to_owned()).collect();
        let ig = integrated_gradients(model, &row, &baselines, targets[s], steps)?;
        for (tot, g) in totals.iter_mut().zip(&ig) {
            for (t, v) in tot.iter_mut().zip(g.iter()) {
                *t += v.abs();
            }
        }
    }
    Ok(totals
        .into_iter()
        .map(|tot| {
            let mut scored: Vec<ComponentScore> = tot
                .iter()
                .enumerate()
                .map(|(j, &s)| ComponentScore { component_id: j + 1, score: s / n as f64 })
                .collect();
            scored.sort_by(|a, b| {
                b.score
                    .partial_cmp(&a.score)
                    .unwrap()
                    .then(a.component_id.cmp(&b.component_id))
            });
            scored.truncate(top_k);
            scored
        })
        .collect())
}

/// Gradient of k(x_i, .) evaluated at `x`, for each training row x_i.
/// Returns an n x p matrix of per-sample kernel gradients.
fn kernel_gradients(spec: KernelSpec, train: &Array2<f64>, x: &[f64]) -> Result<Array2<f64>> {
    let (n, p) = (train.nrows(), train.ncols());
    if x.len() != p {
        return Err(CoreError::dims("query width != training width"));
    }
    let mut out = Array2::zeros((n, p));
    match spec {
        KernelSpec::Rbf { sigma } => {
            for i in 0..n {
                let row = train.row(i);
                let k = spec.eval(row.as_slice().unwrap(), x);
                for l in 0..p {
                    out[[i, l]] = 2.0 * sigma * (row[l] - x[l]) * k;
                }
            }
        }
        KernelSpec::Linear => {
            for i in 0..n {
                out.row_mut(i).assign(&train.row(i));
            }
        }
        KernelSpec::Polynomial { degree, offset } => {
            for i in 0..n {
                let row = train.row(i);
                let dot: f64 = row.iter().zip(x).map(|(a, b)| a * b).sum();
                let factor = degree as f64 * (dot + offset).powi(degree as i32 - 1);
                for l in 0..p {
                    out[[i, l]] = factor * row[l];
                }
            }
        }
    }
    Ok(out)
}

/// Gradient of the centered kernel-PC projection h_j at `x` with respect to
/// the original features. Component ids are 1-based.
pub fn projection_gradient(
    fit: &KpcaFit,
    train_values: &Array2<f64>,
    x: &[f64],
    component: usize,
) -> Result<Array1<f64>> {
    if component == 0 || component > fit.d {
        return Err(CoreError::invalid(format!("component {component} out of range")));
    }
    if train_values.nrows() != fit.dual_coeffs.nrows() {
        return Err(CoreError::dims("training rows != dual coefficient rows"));
    }
    let n = train_values.nrows();
    let alpha = fit.dual_coeffs.column(component - 1);
    // Centering only shifts each dual coefficient by the column mean: the
    // x-dependent part of h_j is sum_i (alpha_i - mean(alpha)) k(x_i, x).
    let mean = alpha.sum() / n as f64;
    let kgrads = kernel_gradients(fit.spec, train_values, x)?;
    let mut out = Array1::zeros(train_values.ncols());
    for i in 0..n {
        let w = alpha[i] - mean;
        for l in 0..out.len() {
            out[l] += w * kgrads[[i, l]];
        }
    }
    Ok(out)
}

/// Rank original features by the mean (over training samples) Euclidean norm
/// of the selected components' projection gradients. Returns (column index,
/// score) pairs sorted descending, ties by column index.
pub fn kpcaig_importance(
    fit: &KpcaFit,
    train_values: &Array2<f64>,
    selected_components: &[usize],
) -> Result<Vec<(usize, f64)>> {
    if selected_components.is_empty() {
        return Err(CoreError::invalid("no components selected"));
    }
    let (n, p) = (train_values.nrows(), train_values.ncols());
    let mut importance = vec![0.0f64; p];
    for s in 0..n {
        let x = train_values.row(s);
        let x = x.as_slice().unwrap();
        let grads: Vec<Array1<f64>> = selected_components
            .iter()
            .map(|&j| projection_gradient(fit, train_values, x, j))
            .collect::<Result<_>>()?;
        for l in 0..p {
            let sq: f64 = grads.iter().map(|g| g[l] * g[l]).sum();
            importance[l] += sq.sqrt();
        }
    }
    let mut ranked: Vec<(usize, f64)> = importance
        .into_iter()
        .enumerate()
        .map(|(l, v)| (l, v / n as f64))
        .collect();
    ranked.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    Ok(ranked)
}

/// Full two-step report: component ranking on the test embeddings, then
/// feature ranking for the top components of each view.
pub fn biomarker_report(
    model: &DeepMklModel,
    fits: &[KpcaFit],
    train_views: &[crate::data::OmicsView],
    test_embeddings: &[Array2<f64>],
    test_labels: Option<&[usize]>,
    config: &AttributionConfig,
) -> Result<AttributionReport> {
    let m = fits.len();
    if train_views.len() != m || test_embeddings.len() != m {
        return Err(CoreError::dims("view count mismatch across inputs"));
    }
    if config.top_k_features.len() != m {
        return Err(CoreError::dims("top_k_features length != view count"));
    }
    let labels = if config.use_true_labels { test_labels } else { None };
    let components =
        rank_components(model, test_embeddings, labels, config.steps, config.top_k_components)?;
    let mut views = Vec::with_capacity(m);
    for v in 0..m {
        let selected: Vec<usize> = components[v].iter().map(|c| c.component_id).collect();
        let ranked = kpcaig_importance(&fits[v], &train_views[v].values, &selected)?;
        let features = ranked
            .into_iter()
            .take(config.top_k_features[v])
            .map(|(l, score)| FeatureScore { feature: train_views[v].features[l].clone(), score })
            .collect();
        views.push(ViewAttribution {
            view_name: fits[v].view_name.clone(),
            components: components[v].clone(),
            features,
        });
    }
    Ok(AttributionReport { views, config: config.clone() })
}

impl AttributionReport {
    /// Write the report as two CSVs: components (view,component_id,score)
    /// and features (view,feature,score).
    pub fn write_csvs(&self, components_path: &Path, features_path: &Path) -> Result<()> {
        let mut cf = std::fs::File::create(components_path)?;
        writeln!(cf, "view,component_id,score")?;
        for view in &self.views {
            for c in &view.components {
                writeln!(cf, "{},{},{}", view.view_name, c.component_id, c.score)?;
            }
        }
        let mut ff = std::fs::File::create(features_path)?;
        writeln!(ff, "view,feature,score")?;
        for view in &self.views {
            for f in &view.features {
                writeln!(ff, "{},{},{}", view.view_name, f.feature, f.score)?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::deep::{build, DeepMklConfig, FusionMode};
    use crate::kernel::compute_gram;
    use crate::kpca::{kpca_fit, DEFAULT_EIG_FLOOR};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn toy_model(dims: &[usize], seed: u64) -> DeepMklModel {
        let cfg = DeepMklConfig {
            branch_sizes: vec![4, 3],
            cross_modal: false,
            fusion: FusionMode::Concat,
            head_sizes: [4, 2],
            leaky_slope: 0.01,
            dropout_rate: 0.0,
            learning_rate: 1e-2,
            batch_size: 8,
            epochs: 0,
            seed,
            adam: (0.9, 0.999, 1e-8),
            norm_first: false,
        };
        build(cfg, dims, 2).unwrap()
    }

    fn random_rows(dims: &[usize], seed: u64) -> Vec<Array1<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        dims.iter()
            .map(|&d| Array1::from_shape_fn(d, |_| rng.gen_range(-1.0..1.0)))
            .collect()
    }

    #[test]
    fn zero_path_gives_zero_attributions() {
        let model = toy_model(&[3, 2], 1);
        let x = random_rows(&[3, 2], 2);
        let ig = integrated_gradients(&model, &x, &x, 0, 50).unwrap();
        for g in &ig {
            assert!(g.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn completeness_at_200_steps() {
        let model = toy_model(&[3, 2], 3);
        let x = random_rows(&[3, 2], 4);
        let baseline: Vec<Array1<f64>> = vec![Array1::zeros(3), Array1::zeros(2)];
        for target in 0..2 {
            let ig = integrated_gradients(&model, &x, &baseline, target, 200).unwrap();
            let total: f64 = ig.iter().map(|g| g.sum()).sum();
            let as_batch = |rows: &[Array1<f64>]| -> Vec<Array2<f64>> {
                rows.iter()
                    .map(|r| r.clone().insert_axis(ndarray::Axis(0)))
                    .collect()
            };
            let fx = model.logits(&as_batch(&x)).unwrap()[[0, target]];
            let fb = model.logits(&as_batch(&baseline)).unwrap()[[0, target]];
            assert!(
                (total - (fx - fb)).abs() < 1e-3,
                "completeness gap {}",
                (total - (fx - fb)).abs()
            );
        }
    }

    #[test]
    fn linear_model_ig_is_exact_at_any_steps() {
        // Collapse the network to a linear map: identity-ish weights, zero
        // biases, BN frozen at identity-scale running stats.
        let mut model = toy_model(&[2], 5);
        // Make every activation stay positive so LeakyReLU is the identity.
        for layer in model.branches[0].iter_mut() {
            layer.w.mapv_inplace(f64::abs);
            layer.b.fill(1.0);
        }
        model.head_block.w.mapv_inplace(f64::abs);
        model.head_block.b.fill(1.0);
        let x = vec![ndarray::array![0.4, 0.7]];
        let baseline = vec![ndarray::array![0.1, 0.2]];
        let ig1 = integrated_gradients(&model, &x, &baseline, 0, 1).unwrap();
        let ig9 = integrated_gradients(&model, &x, &baseline, 0, 9).unwrap();
        for (a, b) in ig1[0].iter().zip(ig9[0].iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-10);
        }
        // Exact completeness for a linear function.
        let as_batch = |rows: &[Array1<f64>]| -> Vec<Array2<f64>> {
            rows.iter().map(|r| r.clone().insert_axis(ndarray::Axis(0))).collect()
        };
        let fx = model.logits(&as_batch(&x)).unwrap()[[0, 0]];
        let fb = model.logits(&as_batch(&baseline)).unwrap()[[0, 0]];
        assert_abs_diff_eq!(ig1[0].sum(), fx - fb, epsilon = 1e-10);
    }

    #[test]
    fn ig_linearity_in_the_model() {
        // IG of a sum of heads equals the sum of IGs along the same path;
        // realized here by doubling the head weights.
        let model = toy_model(&[3], 6);
        let mut doubled = model.clone();
        doubled.head_w *= 2.0;
        doubled.head_b *= 2.0;
        let x = random_rows(&[3], 7);
        let baseline = vec![Array1::zeros(3)];
        let a = integrated_gradients(&model, &x, &baseline, 1, 64).unwrap();
        let b = integrated_gradients(&doubled, &x, &baseline, 1, 64).unwrap();
        for (u, v) in a[0].iter().zip(b[0].iter()) {
            assert_abs_diff_eq!(2.0 * u, *v, epsilon = 1e-8);
        }
    }

    #[test]
    fn rank_components_isolates_the_single_wired_input() {
        // A model whose first branch layer reads only view-1 component 1.
        let mut model = toy_model(&[3, 2], 8);
        for branch in model.branches.iter_mut() {
            for layer in branch.iter_mut() {
                layer.w.fill(0.0);
            }
        }
        model.branches[0][0].w[[0, 0]] = 1.0;
        model.branches[0][1].w[[0, 0]] = 1.0;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let embeddings = vec![
            Array2::from_shape_fn((6, 3), |_| rng.gen_range(-1.0..1.0)),
            Array2::from_shape_fn((6, 2), |_| rng.gen_range(-1.0..1.0)),
        ];
        let ranked = rank_components(&model, &embeddings, None, 32, 2).unwrap();
        assert_eq!(ranked[0][0].component_id, 1);
        assert!(ranked[0][0].score > 0.0);
        for c in &ranked[0][1..] {
            assert_abs_diff_eq!(c.score, 0.0, epsilon = 1e-12);
        }
        for c in &ranked[1] {
            assert_abs_diff_eq!(c.score, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn rank_components_stable_under_duplication() {
        let model = toy_model(&[3, 2], 10);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let embeddings = vec![
            Array2::from_shape_fn((5, 3), |_| rng.gen_range(-1.0..1.0)),
            Array2::from_shape_fn((5, 2), |_| rng.gen_range(-1.0..1.0)),
        ];
        let doubled: Vec<Array2<f64>> = embeddings
            .iter()
            .map(|e| {
                let mut out = Array2::zeros((10, e.ncols()));
                for i in 0..5 {
                    out.row_mut(i).assign(&e.row(i));
                    out.row_mut(i + 5).assign(&e.row(i));
                }
                out
            })
            .collect();
        let a = rank_components(&model, &embeddings, None, 16, 2).unwrap();
        let b = rank_components(&model, &doubled, None, 16, 2).unwrap();
        for (va, vb) in a.iter().zip(&b) {
            for (ca, cb) in va.iter().zip(vb) {
                assert_eq!(ca.component_id, cb.component_id);
                assert_abs_diff_eq!(ca.score, cb.score, epsilon = 1e-10);
            }
        }
    }

    fn random_data(seed: u64, n: usize, p: usize) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((n, p), |_| rng.gen_range(-1.0..1.0))
    }

    /// Evaluate h_j at an arbitrary point via the projection path.
    fn projection_value(fit: &KpcaFit, train: &Array2<f64>, x: &[f64], j: usize) -> f64 {
        let query = Array2::from_shape_vec((1, x.len()), x.to_vec()).unwrap();
        let cross = crate::kernel::compute_cross_gram(&query, train, fit.spec).unwrap();
        let emb = crate::kpca::kpca_project(fit, &cross).unwrap();
        emb.scores[[0, j - 1]]
    }

    #[test]
    fn projection_gradient_matches_finite_differences() {
        for (seed, spec) in [
            (20u64, KernelSpec::Rbf { sigma: 0.8 }),
            (21, KernelSpec::Linear),
            (22, KernelSpec::Polynomial { degree: 2, offset: 1.0 }),
        ] {
            let train = random_data(seed, 5, 3);
            let gram = compute_gram(&train, spec, "v").unwrap();
            let fit = kpca_fit(&gram, 3, DEFAULT_EIG_FLOOR).unwrap();
            let x = [0.3, -0.2, 0.5];
            for j in 1..=fit.d {
                let grad = projection_gradient(&fit, &train, &x, j).unwrap();
                let h = 1e-6;
                for l in 0..3 {
                    let mut xp = x;
                    xp[l] += h;
                    let mut xm = x;
                    xm[l] -= h;
                    let fd = (projection_value(&fit, &train, &xp, j)
                        - projection_value(&fit, &train, &xm, j))
                        / (2.0 * h);
                    let denom = fd.abs().max(grad[l].abs()).max(1e-8);
                    assert!(
                        (fd - grad[l]).abs() / denom < 1e-5,
                        "component {j} feature {l}: fd {fd} vs analytic {}",
                        grad[l]
                    );
                }
            }
        }
    }

    #[test]
    fn constant_feature_has_zero_rbf_importance() {
        let mut train = random_data(23, 6, 3);
        train.column_mut(1).fill(0.7);
        let gram = compute_gram(&train, KernelSpec::Rbf { sigma: 0.5 }, "v").unwrap();
        let fit = kpca_fit(&gram, 3, DEFAULT_EIG_FLOOR).unwrap();
        let ranked = kpcaig_importance(&fit, &train, &[1, 2]).unwrap();
        let score_of_1 = ranked.iter().find(|(l, _)| *l == 1).unwrap().1;
        assert_abs_diff_eq!(score_of_1, 0.0, epsilon = 1e-12);
        assert_eq!(ranked.last().unwrap().0, 1);
    }

    #[test]
    fn linear_kernel_importance_is_a_constant_gradient() {
        // For a linear kernel, dh_j/dx_l = sum_i (alpha_i - mean) x_il is the
        // same at every sample, so the importance equals that |constant|.
        let train = ndarray::array![[1.0, 0.0], [0.0, 2.0], [-1.0, -2.0]];
        let gram = compute_gram(&train, KernelSpec::Linear, "v").unwrap();
        let fit = kpca_fit(&gram, 1, DEFAULT_EIG_FLOOR).unwrap();
        let alpha = fit.dual_coeffs.column(0);
        let mean = alpha.sum() / 3.0;
        let mut expect = [0.0f64; 2];
        for l in 0..2 {
            expect[l] = (0..3).map(|i| (alpha[i] - mean) * train[[i, l]]).sum::<f64>().abs();
        }
        let ranked = kpcaig_importance(&fit, &train, &[1]).unwrap();
        for &(l, score) in &ranked {
            assert_abs_diff_eq!(score, expect[l], epsilon = 1e-10);
        }
    }

    #[test]
    fn importance_invariant_under_sample_reordering() {
        let train = random_data(25, 6, 4);
        let spec = KernelSpec::Rbf { sigma: 0.6 };
        let gram = compute_gram(&train, spec, "v").unwrap();
        let fit = kpca_fit(&gram, 2, DEFAULT_EIG_FLOOR).unwrap();
        let a = kpcaig_importance(&fit, &train, &[1, 2]).unwrap();
        // Reverse the sample order and refit; scores must agree.
        let mut rev = train.clone();
        for i in 0..6 {
            rev.row_mut(i).assign(&train.row(5 - i));
        }
        let gram2 = compute_gram(&rev, spec, "v").unwrap();
        let fit2 = kpca_fit(&gram2, 2, DEFAULT_EIG_FLOOR).unwrap();
        let b = kpcaig_importance(&fit2, &rev, &[1, 2]).unwrap();
        for ((la, sa), (lb, sb)) in a.iter().zip(&b) {
            assert_eq!(la, lb);
            assert_abs_diff_eq!(sa, sb, epsilon = 1e-8);
        }
    }

    #[test]
    fn report_shapes_and_feature_permutation_equivariance() {
        use crate::data::OmicsView;
        let train = random_data(30, 8, 4);
        let spec = KernelSpec::Rbf { sigma: 0.7 };
        let gram = compute_gram(&train, spec, "omics").unwrap();
        let fit = kpca_fit(&gram, 3, DEFAULT_EIG_FLOOR).unwrap();
        let emb = fit.train_scores().unwrap().scores;
        let model = toy_model(&[fit.d], 31);
        let samples: Vec<String> = (0..8).map(|i| format!("s{i}")).collect();
        let features: Vec<String> = (0..4).map(|i| format!("f{i}")).collect();
        let view =
            OmicsView::new("omics", samples.clone(), features, train.clone(), None).unwrap();
        let config = AttributionConfig::new(2, vec![3]);
        let report = biomarker_report(&model, &[fit.clone()], &[view], &[emb.clone()], None, &config)
            .unwrap();
        assert_eq!(report.views[0].components.len(), 2);
        assert_eq!(report.views[0].features.len(), 3);
        for pair in report.views[0].components.windows(2) {
            assert!(pair[0].score >= pair[1].score);
        }
        for pair in report.views[0].features.windows(2) {
            assert!(pair[0].score >= pair[1].score);
        }

        // Permute feature columns: names permute, scores do not change.
        let perm = [2usize, 0, 3, 1];
        let mut permuted = train.clone();
        for (newcol, &old) in perm.iter().enumerate() {
            permuted.column_mut(newcol).assign(&train.column(old));
        }
        let gram2 = compute_gram(&permuted, spec, "omics").unwrap();
        let fit2 = kpca_fit(&gram2, 3, DEFAULT_EIG_FLOOR).unwrap();
        let emb2 = fit2.train_scores().unwrap().scores;
        let names2: Vec<String> = perm.iter().map(|&old| format!("f{old}")).collect();
        let view2 =
            OmicsView::new("omics", samples, names2, permuted, None).unwrap();
        let report2 =
            biomarker_report(&model, &[fit2], &[view2], &[emb2], None, &config).unwrap();
        for (a, b) in report.views[0].features.iter().zip(&report2.views[0].features) {
            assert_eq!(a.feature, b.feature);
            assert_abs_diff_eq!(a.score, b.score, epsilon = 1e-8);
        }
    }

    #[test]
    fn csv_export_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let report = AttributionReport {
            views: vec![ViewAttribution {
                view_name: "v".into(),
                components: vec![ComponentScore { component_id: 1, score: 0.5 }],
                features: vec![FeatureScore { feature: "g1".into(), score: 0.25 }],
            }],
            config: AttributionConfig::new(1, vec![1]),
        };
        let cpath = dir.path().join("components.csv");
        let fpath = dir.path().join("features.csv");
        report.write_csvs(&cpath, &fpath).unwrap();
        let c = std::fs::read_to_string(&cpath).unwrap();
        assert_eq!(c, "view,component_id,score\nv,1,0.5\n");
        let f = std::fs::read_to_string(&fpath).unwrap();
        assert_eq!(f, "view,feature,score\nv,g1,0.25\n");
    }
}
