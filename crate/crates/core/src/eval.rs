//! Metrics, cross-validated hyperparameter search, and the multi-seed
//! experiment protocol producing mean +/- sd reports.

use crate::data::{stratified_split, MultiViewDataset};
use crate::deep::FusionMode;
use crate::fusion::MklConfig;
use crate::{CoreError, Result};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

// ---------------------------------------------------------------------------
// Metrics

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    pub fn_: usize,
}

pub fn confusion_counts(truth: &[usize], preds: &[usize]) -> Result<ConfusionCounts> {
    if truth.len() != preds.len() {
        return Err(CoreError::dims("truth and prediction lengths differ"));
    }
    let mut c = ConfusionCounts { tp: 0, tn: 0, fp: 0, fn_: 0 };
    for (&t, &p) in truth.iter().zip(preds) {
        match (t, p) {
            (1, 1) => c.tp += 1,
            (0, 0) => c.tn += 1,
            (0, 1) => c.fp += 1,
            (1, 0) => c.fn_ += 1,
            _ => return Err(CoreError::invalid("binary labels must be 0 or 1")),
        }
    }
    Ok(c)
}

/// F1 from confusion counts; 0 when precision or recall is undefined.
pub fn f1_from_counts(c: &ConfusionCounts) -> f64 {
    if c.tp == 0 {
        return 0.0;
    }
    let precision = c.tp as f64 / (c.tp + c.fp) as f64;
    let recall = c.tp as f64 / (c.tp + c.fn_) as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Area under the ROC curve by the Mann-Whitney rank statistic with midranks
/// for ties (equivalent to trapezoidal ROC area).
pub fn auc(truth: &[usize], scores: &[f64]) -> Result<f64> {
    if truth.len() != scores.len() {
        return Err(CoreError::dims("truth and score lengths differ"));
    }
    let n_pos = truth.iter().filter(|&&t| t == 1).count();
    let n_neg = truth.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(CoreError::invalid("AUC undefined: only one class present"));
    }
    let mut order: Vec<usize> = (0..truth.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap());
    let mut ranks = vec![0.0; truth.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // Midrank over the tie group [i, j], 1-based ranks.
        let midrank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = midrank;
        }
        i = j + 1;
    }
    let rank_sum: f64 = truth
        .iter()
        .zip(&ranks)
        .filter(|(&t, _)| t == 1)
        .map(|(_, &r)| r)
        .sum();
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos * n_neg) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinaryMetrics {
    pub acc: f64,
    pub f1: f64,
    pub auc: f64,
}

/// Accuracy, F1 of the positive class, and ROC AUC. Labels are 0/1 with 1
/// the positive class; higher scores mean more positive.
pub fn binary_metrics(truth: &[usize], preds: &[usize], scores: &[f64]) -> Result<BinaryMetrics> {
    let c = confusion_counts(truth, preds)?;
    let total = (c.tp + c.tn + c.fp + c.fn_) as f64;
    if total == 0.0 {
        return Err(CoreError::invalid("empty input"));
    }
    Ok(BinaryMetrics {
        acc: (c.tp + c.tn) as f64 / total,
        f1: f1_from_counts(&c),
        auc: auc(truth, scores)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MulticlassMetrics {
    pub acc: f64,
    pub f1_weighted: f64,
    pub f1_macro: f64,
}

/// Accuracy plus one-vs-all F1 averaged uniformly (macro) and by class
/// support (weighted). Classes absent from the truth contribute F1 = 0 to
/// the macro average and weight 0 to the weighted one.
pub fn multiclass_metrics(
    truth: &[usize],
    preds: &[usize],
    n_classes: usize,
) -> Result<MulticlassMetrics> {
    if truth.len() != preds.len() {
        return Err(CoreError::dims("truth and prediction lengths differ"));
    }
    if truth.is_empty() {
        return Err(CoreError::invalid("empty input"));
    }
    if n_classes < 2 {
        return Err(CoreError::invalid("need at least two classes"));
    }
    if truth.iter().chain(preds).any(|&l| l >= n_classes) {
        return Err(CoreError::invalid("label out of range"));
    }
    let n = truth.len() as f64;
    let correct = truth.iter().zip(preds).filter(|(t, p)| t == p).count() as f64;
    let mut f1_macro = 0.0;
    let mut f1_weighted = 0.0;
    for c in 0..n_classes {
        let t: Vec<usize> = truth.iter().map(|&l| (l == c) as usize).collect();
        let p: Vec<usize> = preds.iter().map(|&l| (l == c) as usize).collect();
        let counts = confusion_counts(&t, &p)?;
        let f1 = f1_from_counts(&counts);
        let support = (counts.tp + counts.fn_) as f64;
        f1_macro += f1 / n_classes as f64;
        f1_weighted += f1 * support / n;
    }
    Ok(MulticlassMetrics { acc: correct / n, f1_weighted, f1_macro })
}

// ---------------------------------------------------------------------------
// Methods and search spaces

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    SvmConcat,
    SvmNaive,
    SimplemklSvm,
    SemklSvm,
    StatisUmklSvm,
    DeepMkl,
    CrossModalDeepMkl,
}

impl Method {
    pub fn is_deep(&self) -> bool {
        matches!(self, Method::DeepMkl | Method::CrossModalDeepMkl)
    }

    pub fn binary_only(&self) -> bool {
        matches!(self, Method::SimplemklSvm | Method::SemklSvm)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchKind {
    Grid,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub svm_costs: Vec<f64>,
    pub svm_sigmas: Vec<f64>,
    pub deep_sigmas: Vec<f64>,
    pub deep_components: Vec<usize>,
    pub deep_epochs: Vec<usize>,
    pub deep_dropouts: Vec<f64>,
    pub kind: SearchKind,
    pub random_draws: usize,
    pub folds: usize,
    pub seed: u64,
}

/// 5 log-spaced points over [5e-5, 5e-3].
pub fn default_sigma_grid() -> Vec<f64> {
    let lo = 5e-5f64.ln();
    let hi = 5e-3f64.ln();
    (0..5).map(|i| (lo + (hi - lo) * i as f64 / 4.0).exp()).collect()
}

impl Default for SearchSpace {
    fn default() -> Self {
        SearchSpace {
            svm_costs: vec![1.0, 5.0, 10.0, 15.0, 20.0, 25.0],
            svm_sigmas: default_sigma_grid(),
            deep_sigmas: default_sigma_grid(),
            deep_components: vec![5, 10],
            deep_epochs: vec![50, 100],
            deep_dropouts: vec![0.3, 0.5],
            kind: SearchKind::Grid,
            random_draws: 20,
            folds: 5,
            seed: 0,
        }
    }
}

impl SearchSpace {
    fn validate(&self, method: Method) -> Result<()> {
        if self.folds < 2 {
            return Err(CoreError::invalid("folds must be >= 2"));
        }
        let empty = if method.is_deep() {
            self.deep_sigmas.is_empty()
                || self.deep_components.is_empty()
                || self.deep_epochs.is_empty()
                || self.deep_dropouts.is_empty()
        } else {
            self.svm_costs.is_empty() || self.svm_sigmas.is_empty()
        };
        if empty {
            return Err(CoreError::invalid("search space has an empty grid"));
        }
        if self.kind == SearchKind::Random && self.random_draws == 0 {
            return Err(CoreError::invalid("random search needs at least one draw"));
        }
        Ok(())
    }

    /// Candidate parameter points: the full grid, or deterministic uniform
    /// draws from the grids for random search.
    pub fn candidates(&self, method: Method) -> Result<Vec<ParamPoint>> {
        self.validate(method)?;
        match self.kind {
            SearchKind::Grid => Ok(if method.is_deep() {
                let mut out = Vec::new();
                for &sigma in &self.deep_sigmas {
                    for &components in &self.deep_components {
                        for &epochs in &self.deep_epochs {
                            for &dropout in &self.deep_dropouts {
                                out.push(ParamPoint::Deep { sigma, components, epochs, dropout });
                            }
                        }
                    }
                }
                out
            } else {
                let mut out = Vec::new();
                for &cost in &self.svm_costs {
                    for &sigma in &self.svm_sigmas {
                        out.push(ParamPoint::Svm { cost, sigma });
                    }
                }
                out
            }),
            SearchKind::Random => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                let pick = |rng: &mut ChaCha8Rng, len: usize| rng.gen_range(0..len);
                Ok((0..self.random_draws)
                    .map(|_| {
                        if method.is_deep() {
                            ParamPoint::Deep {
                                sigma: self.deep_sigmas[pick(&mut rng, self.deep_sigmas.len())],
                                components: self.deep_components
                                    [pick(&mut rng, self.deep_components.len())],
                                epochs: self.deep_epochs[pick(&mut rng, self.deep_epochs.len())],
                                dropout: self.deep_dropouts
                                    [pick(&mut rng, self.deep_dropouts.len())],
                            }
                        } else {
                            ParamPoint::Svm {
                                cost: self.svm_costs[pick(&mut rng, self.svm_costs.len())],
                                sigma: self.svm_sigmas[pick(&mut rng, self.svm_sigmas.len())],
                            }
                        }
                    })
                    .collect())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ParamPoint {
    Svm { cost: f64, sigma: f64 },
    Deep { sigma: f64, components: usize, epochs: usize, dropout: f64 },
}

// ---------------------------------------------------------------------------
// Model fitting for one parameter point

/// Non-search knobs for the experiment protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOptions {
    /// Frobenius-normalize kernels inside STATIS fusion.
    pub statis_normalize: bool,
    pub mkl: MklConfig,
    pub deep_branch_sizes: Vec<usize>,
    pub deep_head_hidden: usize,
    pub deep_fusion: FusionMode,
    pub deep_learning_rate: f64,
    pub deep_batch_size: usize,
}

impl Default for ExperimentOptions {
    fn default() -> Self {
        ExperimentOptions {
            statis_normalize: true,
            mkl: MklConfig::default(),
            deep_branch_sizes: vec![32, 16],
            deep_head_hidden: 16,
            deep_fusion: FusionMode::WeightedSum,
            deep_learning_rate: 1e-3,
            deep_batch_size: 32,
        }
    }
}

/// Fit the given method on `train` at one parameter point and predict `test`.
/// Returns predicted class ids and, for binary tasks, a positive-class score
/// per test sample.
pub fn fit_predict(
    train: &MultiViewDataset,
    test: &MultiViewDataset,
    method: Method,
    point: &ParamPoint,
    opts: &ExperimentOptions,
    seed: u64,
) -> Result<(Vec<usize>, Option<Vec<f64>>)> {
    let model = crate::model_file::train_model(train, method, point, opts, seed)?;
    let views: Vec<Array2<f64>> = test.views.iter().map(|v| v.values.clone()).collect();
    let (preds, scores) = model.predict(&views)?;
    let binary_scores = if train.class_names.len() == 2 {
        Some(scores.column(1).to_vec())
    } else {
        None
    };
    Ok((preds, binary_scores))
}

// ---------------------------------------------------------------------------
// Cross-validation

/// Stratified fold assignment: per-class shuffle, then round-robin over folds.
/// Uses the same PRNG construction as the train/test splitter.
pub fn stratified_folds(labels: &[usize], folds: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if folds < 2 {
        return Err(CoreError::invalid("folds must be >= 2"));
    }
    let n_classes = labels.iter().max().map(|m| m + 1).unwrap_or(0);
    let mut per_class: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, &l) in labels.iter().enumerate() {
        per_class[l].push(i);
    }
    if let Some((c, members)) = per_class.iter().enumerate().find(|(_, m)| m.len() < folds) {
        return Err(CoreError::invalid(format!(
            "class {c} has {} member(s), fewer than {folds} folds",
            members.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignments: Vec<Vec<usize>> = vec![Vec::new(); folds];
    for members in per_class.iter_mut() {
        for i in (1..members.len()).rev() {
            let j = rng.gen_range(0..=i);
            members.swap(i, j);
        }
        for (pos, &idx) in members.iter().enumerate() {
            assignments[pos % folds].push(idx);
        }
    }
    for fold in assignments.iter_mut() {
        fold.sort_unstable();
    }
    Ok(assignments)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvOutcome {
    pub best: ParamPoint,
    /// Per-fold validation accuracy of the winning point.
    pub fold_scores: Vec<f64>,
    /// Points whose evaluation failed, with the error text.
    pub failures: Vec<(ParamPoint, String)>,
}

/// Grid / random search by stratified k-fold CV, selecting the point with the
/// highest mean fold accuracy (ties: first listed). A point that fails on any
/// fold is recorded and skipped, not fatal.
pub fn cross_validate(
    train: &MultiViewDataset,
    method: Method,
    space: &SearchSpace,
    opts: &ExperimentOptions,
    seed: u64,
) -> Result<CvOutcome> {
    let points = space.candidates(method)?;
    let folds = stratified_folds(&train.labels, space.folds, seed)?;
    let results: Vec<std::result::Result<Vec<f64>, String>> = points
        .par_iter()
        .map(|point| {
            let mut scores = Vec::with_capacity(folds.len());
            for fold in &folds {
                let fold_set: std::collections::HashSet<usize> = fold.iter().cloned().collect();
                let tr_idx: Vec<usize> =
                    (0..train.n_samples()).filter(|i| !fold_set.contains(i)).collect();
                let tr = train.subset(&tr_idx);
                let va = train.subset(fold);
                let (preds, _) = fit_predict(&tr, &va, method, point, opts, seed)
                    .map_err(|e| e.to_string())?;
                let correct = preds.iter().zip(&va.labels).filter(|(p, l)| p == l).count();
                scores.push(correct as f64 / va.labels.len() as f64);
            }
            Ok(scores)
        })
        .collect();

    let mut best: Option<(usize, f64)> = None;
    let mut failures = Vec::new();
    let mut fold_scores = Vec::new();
    for (i, res) in results.iter().enumerate() {
        match res {
            Ok(scores) => {
                let mean = scores.iter().sum::<f64>() / scores.len() as f64;
                if best.map(|(_, b)| mean > b).unwrap_or(true) {
                    best = Some((i, mean));
                    fold_scores = scores.clone();
                }
            }
            Err(msg) => failures.push((points[i], msg.clone())),
        }
    }
    let (idx, _) = best.ok_or_else(|| CoreError::numerical("every search point failed"))?;
    Ok(CvOutcome { best: points[idx], fold_scores, failures })
}

// ---------------------------------------------------------------------------
// Experiment protocol

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedOutcome {
    pub seed: u64,
    pub best_point: ParamPoint,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub method: Method,
    pub metric_names: Vec<String>,
    pub per_seed: Vec<SeedOutcome>,
    pub mean: Vec<f64>,
    /// Population standard deviation (denominator n).
    pub sd: Vec<f64>,
    pub failures: Vec<String>,
}

impl MetricReport {
    /// Aligned "mean +/- sd" table at 3 decimals, one row per metric.
    pub fn table(&self) -> String {
        let mut out = String::new();
        let width = self.metric_names.iter().map(|n| n.len()).max().unwrap_or(0);
        let _ = writeln!(out, "method: {:?}", self.method);
        for (i, name) in self.metric_names.iter().enumerate() {
            let _ = writeln!(out, "{name:width$}  {:.3} ± {:.3}", self.mean[i], self.sd[i]);
        }
        out
    }
}

/// Full protocol for one method: per seed, stratified split, CV on the
/// training side, refit at the winning point, evaluate on the test side.
/// Failed seeds are recorded and excluded from the aggregates.
pub fn run_experiment(
    dataset: &MultiViewDataset,
    method: Method,
    space: &SearchSpace,
    opts: &ExperimentOptions,
    seeds: &[u64],
    train_fraction: f64,
) -> Result<MetricReport> {
    if seeds.is_empty() {
        return Err(CoreError::invalid("no seeds"));
    }
    let binary = dataset.class_names.len() == 2;
    let metric_names: Vec<String> = if binary {
        vec!["acc".into(), "f1".into(), "auc".into()]
    } else {
        vec!["acc".into(), "f1_weighted".into(), "f1_macro".into()]
    };

    let outcomes: Vec<std::result::Result<SeedOutcome, String>> = seeds
        .par_iter()
        .map(|&seed| {
            let run = || -> Result<SeedOutcome> {
                let plan = stratified_split(&dataset.labels, seed, train_fraction)?;
                let train = dataset.subset(&plan.train_indices);
                let test = dataset.subset(&plan.test_indices);
                let cv = cross_validate(&train, method, space, opts, seed)?;
                let (preds, scores) = fit_predict(&train, &test, method, &cv.best, opts, seed)?;
                let values = if binary {
                    let scores = scores
                        .ok_or_else(|| CoreError::numerical("missing binary scores"))?;
                    let m = binary_metrics(&test.labels, &preds, &scores)?;
                    vec![m.acc, m.f1, m.auc]
                } else {
                    let m =
                        multiclass_metrics(&test.labels, &preds, dataset.class_names.len())?;
                    vec![m.acc, m.f1_weighted, m.f1_macro]
                };
                Ok(SeedOutcome { seed, best_point: cv.best, values })
            };
            run().map_err(|e| format!("seed {seed}: {e}"))
        })
        .collect();

    let mut per_seed = Vec::new();
    let mut failures = Vec::new();
    for outcome in outcomes {
        match outcome {
            Ok(o) => per_seed.push(o),
            Err(msg) => failures.push(msg),
        }
    }
    if per_seed.is_empty() {
        return Err(CoreError::numerical(format!(
            "all seeds failed: {}",
            failures.join("; ")
        )));
    }
    let k = metric_names.len();
    let n = per_seed.len() as f64;
    let mean: Vec<f64> = (0..k)
        .map(|i| per_seed.iter().map(|o| o.values[i]).sum::<f64>() / n)
        .collect();
    let sd: Vec<f64> = (0..k)
        .map(|i| {
            (per_seed.iter().map(|o| (o.values[i] - mean[i]).powi(2)).sum::<f64>() / n).sqrt()
        })
        .collect();
    Ok(MetricReport { method, metric_names, per_seed, mean, sd, failures })
}
