//! Trained-model persistence: a versioned JSON file embedding everything
//! needed to predict new samples, including the training feature values each
//! cross-kernel must be rebuilt against.

use crate::data::MultiViewDataset;
use crate::deep::{self, DeepMklConfig, DeepMklModel};
use crate::eval::{ExperimentOptions, Method, ParamPoint};
use crate::fusion::{fuse_fixed, semkl_optimize, simplemkl_optimize, statis_fuse, FusedKernel};
use crate::kernel::{compute_cross_gram, compute_gram, KernelMatrix, KernelSpec};
use crate::kpca::{kpca_fit, kpca_project, KpcaFit, DEFAULT_EIG_FLOOR};
use crate::svm::{decision_values, fit_binary_values, fit_multiclass_values, MulticlassSvm, SvmModel};
use crate::{CoreError, Result};
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ModelKind {
    BinarySvm {
        model: SvmModel,
        fusion: Option<FusedKernel>,
    },
    MulticlassSvm {
        model: MulticlassSvm,
        fusion: Option<FusedKernel>,
    },
    Deep {
        model: DeepMklModel,
        fits: Vec<KpcaFit>,
    },
}

/// A trained classifier plus the training-side context required to rebuild
/// cross-kernels at prediction time. Serialized as versioned JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub format_version: u32,
    pub method: Method,
    pub point: ParamPoint,
    pub class_names: Vec<String>,
    pub view_names: Vec<String>,
    pub feature_names: Vec<Vec<String>>,
    pub train_sample_ids: Vec<String>,
    /// Per-view training feature matrices.
    pub train_values: Vec<Array2<f64>>,
    pub kind: ModelKind,
}

fn hconcat(values: &[Array2<f64>]) -> Array2<f64> {
    let n = values[0].nrows();
    let total: usize = values.iter().map(|v| v.ncols()).sum();
    let mut out = Array2::zeros((n, total));
    let mut offset = 0;
    for v in values {
        out.slice_mut(ndarray::s![.., offset..offset + v.ncols()]).assign(v);
        offset += v.ncols();
    }
    out
}

fn binary_y(labels: &[usize]) -> Vec<f64> {
    labels.iter().map(|&l| if l == 1 { 1.0 } else { -1.0 }).collect()
}

fn point_sigma(point: &ParamPoint) -> f64 {
    match point {
        ParamPoint::Svm { sigma, .. } => *sigma,
        ParamPoint::Deep { sigma, .. } => *sigma,
    }
}

/// Train one method at one parameter point on the full training set.
pub fn train_model(
    train: &MultiViewDataset,
    method: Method,
    point: &ParamPoint,
    opts: &ExperimentOptions,
    seed: u64,
) -> Result<TrainedModel> {
    let n_classes = train.class_names.len();
    let binary = n_classes == 2;
    if method.binary_only() && !binary {
        return Err(CoreError::invalid(format!(
            "{method:?} supports binary classification only"
        )));
    }
    let spec = KernelSpec::Rbf { sigma: point_sigma(point) };
    let train_values: Vec<Array2<f64>> =
        train.views.iter().map(|v| v.values.clone()).collect();

    let kind = match (method.is_deep(), point) {
        (false, ParamPoint::Svm { cost, sigma: _ }) => {
            let (k_train, fusion, kernel_ref) = if method == Method::SvmConcat {
                let gram = compute_gram(&hconcat(&train_values), spec, "concat")?;
                (gram.values, None, "rbf over concatenated views".to_string())
            } else {
                let kernels: Vec<KernelMatrix> = train
                    .views
                    .iter()
                    .map(|v| compute_gram(&v.values, spec, &v.name))
                    .collect::<Result<_>>()?;
                let fused = match method {
                    Method::SvmNaive => fuse_fixed(&kernels, None)?,
                    Method::StatisUmklSvm => statis_fuse(&kernels, opts.statis_normalize)?,
                    Method::SimplemklSvm => {
                        simplemkl_optimize(&kernels, &binary_y(&train.labels), *cost, &opts.mkl)?
                    }
                    Method::SemklSvm => {
                        semkl_optimize(&kernels, &binary_y(&train.labels), *cost, &opts.mkl)?
                    }
                    _ => unreachable!(),
                };
                let kernel_ref = format!("{:?} fused rbf", fused.method);
                (fused.meta.clone(), Some(fused), kernel_ref)
            };
            if binary {
                let model = fit_binary_values(&k_train, &binary_y(&train.labels), *cost, &kernel_ref)?;
                ModelKind::BinarySvm { model, fusion }
            } else {
                let model =
                    fit_multiclass_values(&k_train, &train.labels, n_classes, *cost, &kernel_ref)?;
                ModelKind::MulticlassSvm { model, fusion }
            }
        }
        (true, ParamPoint::Deep { sigma: _, components, epochs, dropout }) => {
            let mut fits = Vec::new();
            let mut embeddings = Vec::new();
            for v in &train.views {
                let gram = compute_gram(&v.values, spec, &v.name)?;
                let fit = kpca_fit(&gram, *components, DEFAULT_EIG_FLOOR)?;
                embeddings.push(fit.train_scores()?.scores);
                fits.push(fit);
            }
            let mut branch_sizes = opts.deep_branch_sizes.clone();
            if method == Method::CrossModalDeepMkl {
                while branch_sizes.len() < 4 {
                    branch_sizes.push(*branch_sizes.last().unwrap());
                }
            }
            let config = DeepMklConfig {
                branch_sizes,
                cross_modal: method == Method::CrossModalDeepMkl,
                fusion: opts.deep_fusion,
                head_sizes: [opts.deep_head_hidden, n_classes],
                leaky_slope: 0.01,
                dropout_rate: *dropout,
                learning_rate: opts.deep_learning_rate,
                batch_size: opts.deep_batch_size,
                epochs: *epochs,
                seed,
                adam: (0.9, 0.999, 1e-8),
                norm_first: false,
            };
            let dims: Vec<usize> = embeddings.iter().map(|e| e.ncols()).collect();
            let mut model = deep::build(config, &dims, n_classes)?;
            model.train(&embeddings, &train.labels)?;
            ModelKind::Deep { model, fits }
        }
        _ => return Err(CoreError::invalid("parameter point kind does not match method")),
    };

    Ok(TrainedModel {
        format_version: MODEL_FORMAT_VERSION,
        method,
        point: *point,
        class_names: train.class_names.clone(),
        view_names: train.views.iter().map(|v| v.name.clone()).collect(),
        feature_names: train.views.iter().map(|v| v.features.clone()).collect(),
        train_sample_ids: train.views[0].samples.clone(),
        train_values,
        kind,
    })
}

impl TrainedModel {
    fn check_views(&self, views: &[Array2<f64>]) -> Result<usize> {
        if views.len() != self.train_values.len() {
            return Err(CoreError::dims(format!(
                "model expects {} views, got {}",
                self.train_values.len(),
                views.len()
            )));
        }
        let n = views[0].nrows();
        for ((v, t), name) in views.iter().zip(&self.train_values).zip(&self.view_names) {
            if v.ncols() != t.ncols() {
                return Err(CoreError::dims(format!(
                    "view '{name}': width {} != trained width {}",
                    v.ncols(),
                    t.ncols()
                )));
            }
            if v.nrows() != n {
                return Err(CoreError::dims("views disagree on sample count"));
            }
        }
        Ok(n)
    }

    /// Predict class ids and a per-class score matrix (decision values for
    /// SVMs, probabilities for deep models) for new samples.
    pub fn predict(&self, views: &[Array2<f64>]) -> Result<(Vec<usize>, Array2<f64>)> {
        let n = self.check_views(views)?;
        let spec = KernelSpec::Rbf { sigma: point_sigma(&self.point) };
        let cross_for_svm = |fusion: &Option<FusedKernel>| -> Result<Array2<f64>> {
            match fusion {
                None => {
                    let test = hconcat(views);
                    let train = hconcat(&self.train_values);
                    Ok(compute_cross_gram(&test, &train, spec)?.values)
                }
                Some(fused) => {
                    let crosses: Vec<Array2<f64>> = views
                        .iter()
                        .zip(&self.train_values)
                        .map(|(te, tr)| compute_cross_gram(te, tr, spec).map(|c| c.values))
                        .collect::<Result<_>>()?;
                    fused.fuse_cross(&crosses)
                }
            }
        };
        match &self.kind {
            ModelKind::BinarySvm { model, fusion } => {
                let cross = cross_for_svm(fusion)?;
                let d = decision_values(model, &cross)?;
                let preds = d.iter().map(|&s| (s > 0.0) as usize).collect();
                let mut scores = Array2::zeros((n, 2));
                for (i, &s) in d.iter().enumerate() {
                    scores[[i, 0]] = -s;
                    scores[[i, 1]] = s;
                }
                Ok((preds, scores))
            }
            ModelKind::MulticlassSvm { model, fusion } => {
                let cross = cross_for_svm(fusion)?;
                let scores = model.decision_matrix(&cross)?;
                Ok((model.predict(&cross)?, scores))
            }
            ModelKind::Deep { model, fits } => {
                let mut embeddings = Vec::new();
                for ((v, tr), fit) in views.iter().zip(&self.train_values).zip(fits) {
                    let cross = compute_cross_gram(v, tr, spec)?;
                    embeddings.push(kpca_project(fit, &cross)?.scores);
                }
                let probs = model.predict_proba(&embeddings)?;
                Ok((model.predict(&embeddings)?, probs))
            }
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(json: &str) -> Result<TrainedModel> {
        let value: serde_json::Value = serde_json::from_str(json)?;
        match value.get("format_version").and_then(|v| v.as_u64()) {
            Some(v) if v == MODEL_FORMAT_VERSION as u64 => {}
            Some(v) => {
                return Err(CoreError::data(format!(
                    "unsupported model format version {v}, expected {MODEL_FORMAT_VERSION}"
                )))
            }
            None => return Err(CoreError::data("model file missing format_version")),
        }
        Ok(serde_json::from_value(value)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        // Write-temp-then-rename so a crash never leaves a half-written file.
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, self.to_json()?)?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<TrainedModel> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }
}
