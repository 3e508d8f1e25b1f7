//! Multi-view tabular data: ingestion, alignment, stratified splits,
//! ANOVA F-value feature pre-selection and synthetic benchmarks.
//!
//! All randomized operations draw from a ChaCha8 stream cipher seeded directly
//! by the caller's seed. ChaCha is counter-based, so splits and synthetic data
//! are reproducible across platforms independent of any global RNG state.

use crate::{CoreError, Result};
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeSet, HashMap};
use std::io::Write;
use std::path::Path;

/// One omic's sample x feature matrix with aligned ids and optional labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OmicsView {
    pub name: String,
    pub samples: Vec<String>,
    pub features: Vec<String>,
    pub values: Array2<f64>,
    pub labels: Option<Vec<usize>>,
}

impl OmicsView {
    pub fn new(
        name: impl Into<String>,
        samples: Vec<String>,
        features: Vec<String>,
        values: Array2<f64>,
        labels: Option<Vec<usize>>,
    ) -> Result<Self> {
        if values.nrows() != samples.len() {
            return Err(CoreError::dims(format!(
                "view rows {} != sample count {}",
                values.nrows(),
                samples.len()
            )));
        }
        if values.ncols() != features.len() {
            return Err(CoreError::dims(format!(
                "view cols {} != feature count {}",
                values.ncols(),
                features.len()
            )));
        }
        let unique: BTreeSet<&String> = samples.iter().collect();
        if unique.len() != samples.len() {
            return Err(CoreError::data("duplicate sample id within a view"));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(CoreError::data(format!("non-finite value {v} in view")));
        }
        if let Some(ref l) = labels {
            if l.len() != samples.len() {
                return Err(CoreError::dims("labels length != sample count"));
            }
        }
        Ok(OmicsView {
            name: name.into(),
            samples,
            features,
            values,
            labels,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.samples.len()
    }

    pub fn n_features(&self) -> usize {
        self.features.len()
    }
}

/// Views over the same ordered samples plus per-sample class labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiViewDataset {
    pub views: Vec<OmicsView>,
    pub labels: Vec<usize>,
    pub class_names: Vec<String>,
}

impl MultiViewDataset {
    pub fn new(views: Vec<OmicsView>, labels: Vec<usize>, class_names: Vec<String>) -> Result<Self> {
        if views.is_empty() {
            return Err(CoreError::invalid("dataset needs at least one view"));
        }
        if class_names.len() < 2 {
            return Err(CoreError::invalid("dataset needs at least two classes"));
        }
        let reference = &views[0].samples;
        for v in &views[1..] {
            if &v.samples != reference {
                return Err(CoreError::data(format!(
                    "view '{}' sample ordering differs from view '{}'",
                    v.name, views[0].name
                )));
            }
        }
        if labels.len() != reference.len() {
            return Err(CoreError::dims("labels length != sample count"));
        }
        if let Some(l) = labels.iter().find(|&&l| l >= class_names.len()) {
            return Err(CoreError::invalid(format!("label {l} out of range")));
        }
        Ok(MultiViewDataset {
            views,
            labels,
            class_names,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.labels.len()
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    /// Restrict every view (and the labels) to the given sample indices.
    pub fn subset(&self, indices: &[usize]) -> MultiViewDataset {
        let views = self
            .views
            .iter()
            .map(|v| OmicsView {
                name: v.name.clone(),
                samples: indices.iter().map(|&i| v.samples[i].clone()).collect(),
                features: v.features.clone(),
                values: select_rows(&v.values, indices),
                labels: None,
            })
            .collect();
        MultiViewDataset {
            views,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            class_names: self.class_names.clone(),
        }
    }
}

pub(crate) fn select_rows(m: &Array2<f64>, indices: &[usize]) -> Array2<f64> {
    let mut out = Array2::zeros((indices.len(), m.ncols()));
    for (r, &i) in indices.iter().enumerate() {
        out.row_mut(r).assign(&m.row(i));
    }
    out
}

/// A deterministic stratified train/test partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub seed: u64,
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
    pub train_fraction: f64,
}

/// Stratified split: per-class train counts are `round(train_fraction * class size)`,
/// clamped so neither side of any class is empty. Deterministic per seed.
pub fn stratified_split(labels: &[usize], seed: u64, train_fraction: f64) -> Result<SplitPlan> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(CoreError::invalid(format!(
            "train_fraction must be in (0,1), got {train_fraction}"
        )));
    }
    if labels.is_empty() {
        return Err(CoreError::invalid("empty label vector"));
    }
    let n_classes = labels.iter().max().unwrap() + 1;
    let mut per_class: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, &l) in labels.iter().enumerate() {
        per_class[l].push(i);
    }
    for (c, members) in per_class.iter().enumerate() {
        if members.len() < 2 {
            return Err(CoreError::invalid(format!(
                "class {c} has {} member(s); stratified split needs at least 2",
                members.len()
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for members in per_class.iter_mut() {
        members.shuffle(&mut rng);
        let target = (train_fraction * members.len() as f64).round() as usize;
        let take = target.clamp(1, members.len() - 1);
        train.extend_from_slice(&members[..take]);
        test.extend_from_slice(&members[take..]);
    }
    if train.is_empty() || test.is_empty() {
        return Err(CoreError::invalid("degenerate fraction: empty split side"));
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(SplitPlan {
        seed,
        train_indices: train,
        test_indices: test,
        train_fraction,
    })
}

/// How a feature ranks in the one-way ANOVA ordering.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FScore {
    /// Zero within-class variance, nonzero between: ranks above every finite F.
    Infinite,
    Finite(f64),
}

/// One-way ANOVA F statistic per feature column.
pub fn anova_f_scores(values: &Array2<f64>, labels: &[usize]) -> Result<Vec<FScore>> {
    let n = values.nrows();
    if labels.len() != n {
        return Err(CoreError::dims("labels length != row count"));
    }
    let n_classes = labels.iter().max().map(|m| m + 1).unwrap_or(0);
    if n_classes < 2 {
        return Err(CoreError::invalid("ANOVA needs at least two classes"));
    }
    let mut counts = vec![0usize; n_classes];
    for &l in labels {
        counts[l] += 1;
    }
    if counts.iter().any(|&c| c == 0) {
        return Err(CoreError::invalid("class absent from labels"));
    }
    let dfb = (n_classes - 1) as f64;
    let dfw = (n - n_classes) as f64;
    if dfw <= 0.0 {
        return Err(CoreError::invalid("too few samples for within-class variance"));
    }

    let mut scores = Vec::with_capacity(values.ncols());
    for col in values.columns() {
        let grand = col.sum() / n as f64;
        let mut class_sum = vec![0.0f64; n_classes];
        for (i, &l) in labels.iter().enumerate() {
            class_sum[l] += col[i];
        }
        let class_mean: Vec<f64> = class_sum
            .iter()
            .zip(&counts)
            .map(|(s, &c)| s / c as f64)
            .collect();
        let ssb: f64 = class_mean
            .iter()
            .zip(&counts)
            .map(|(m, &c)| c as f64 * (m - grand).powi(2))
            .sum();
        let ssw: f64 = labels
            .iter()
            .enumerate()
            .map(|(i, &l)| (col[i] - class_mean[l]).powi(2))
            .sum();
        let sumsq: f64 = col.iter().map(|v| v * v).sum();
        let zero_within = ssw <= f64::EPSILON * sumsq.max(1e-300);
        let zero_between = ssb <= f64::EPSILON * sumsq.max(1e-300);
        let score = if zero_within {
            if zero_between {
                FScore::Finite(0.0)
            } else {
                FScore::Infinite
            }
        } else if zero_between {
            FScore::Finite(0.0)
        } else {
            FScore::Finite((ssb / dfb) / (ssw / dfw))
        };
        scores.push(score);
    }
    Ok(scores)
}

/// Keep the `k` features with largest ANOVA F, stable by original column order.
///
/// Zero-within-variance / nonzero-between features rank above all finite-F
/// features; constant features score 0 and fall to the back.
pub fn anova_f_select(view: &OmicsView, labels: &[usize], k: usize) -> Result<OmicsView> {
    if k == 0 {
        return Err(CoreError::invalid("k must be positive"));
    }
    if k > view.n_features() {
        return Err(CoreError::invalid(format!(
            "k = {k} exceeds feature count {}",
            view.n_features()
        )));
    }
    let scores = anova_f_scores(&view.values, labels)?;
    if scores.iter().all(|s| matches!(s, FScore::Finite(f) if *f == 0.0)) {
        return Err(CoreError::invalid("all features constant"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        let key = |s: &FScore| match s {
            FScore::Infinite => f64::INFINITY,
            FScore::Finite(f) => *f,
        };
        key(&scores[b])
            .partial_cmp(&key(&scores[a]))
            .unwrap()
            .then(a.cmp(&b))
    });
    let selected = &order[..k];
    let mut out = Array2::zeros((view.n_samples(), k));
    for (dst, &src) in selected.iter().enumerate() {
        out.column_mut(dst).assign(&view.values.column(src));
    }
    OmicsView::new(
        view.name.clone(),
        view.samples.clone(),
        selected.iter().map(|&i| view.features[i].clone()).collect(),
        out,
        view.labels.clone(),
    )
}

// ---------------------------------------------------------------------------
// CSV ingestion
// ---------------------------------------------------------------------------

fn parse_cell(raw: &str, path: &Path, row: usize, col: usize) -> Result<f64> {
    let trimmed = raw.trim();
    let value: f64 = trimmed.parse().map_err(|_| {
        CoreError::data(format!(
            "{}: non-numeric cell '{trimmed}' at row {row}, column {col}",
            path.display()
        ))
    })?;
    if !value.is_finite() {
        return Err(CoreError::data(format!(
            "{}: non-finite value '{trimmed}' at row {row}, column {col}",
            path.display()
        )));
    }
    Ok(value)
}

fn read_feature_csv(path: &Path, name: &str) -> Result<OmicsView> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)?;
    let header = reader.headers()?.clone();
    if header.is_empty() || header.get(0) != Some("sample_id") {
        return Err(CoreError::data(format!(
            "{}: first header cell must be 'sample_id'",
            path.display()
        )));
    }
    let features: Vec<String> = header.iter().skip(1).map(|s| s.to_string()).collect();
    let mut samples = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != features.len() + 1 {
            return Err(CoreError::data(format!(
                "{}: row {} has {} cells, expected {}",
                path.display(),
                r + 2,
                record.len(),
                features.len() + 1
            )));
        }
        samples.push(record[0].to_string());
        let mut row = Vec::with_capacity(features.len());
        for (c, cell) in record.iter().skip(1).enumerate() {
            row.push(parse_cell(cell, path, r + 2, c + 2)?);
        }
        rows.push(row);
    }
    let values = Array2::from_shape_fn((rows.len(), features.len()), |(i, j)| rows[i][j]);
    OmicsView::new(name, samples, features, values, None)
}

fn read_label_csv(path: &Path) -> Result<(HashMap<String, String>, Vec<String>)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)?;
    let header = reader.headers()?.clone();
    if header.len() < 2 || header.get(0) != Some("sample_id") || header.get(1) != Some("label") {
        return Err(CoreError::data(format!(
            "{}: label header must be 'sample_id,label'",
            path.display()
        )));
    }
    let mut map = HashMap::new();
    let mut class_order = Vec::new();
    for record in reader.records() {
        let record = record?;
        let id = record[0].to_string();
        let label = record[1].to_string();
        if map.insert(id.clone(), label.clone()).is_some() {
            return Err(CoreError::data(format!(
                "{}: duplicate sample id '{id}' in label file",
                path.display()
            )));
        }
        if !class_order.contains(&label) {
            class_order.push(label);
        }
    }
    Ok((map, class_order))
}

/// Load one feature CSV per view plus a label CSV, align samples across views
/// (intersection of ids, sorted lexicographically) and map labels to dense
/// integers in first-appearance order.
pub fn load_views(paths: &[impl AsRef<Path>], label_path: impl AsRef<Path>) -> Result<MultiViewDataset> {
    if paths.is_empty() {
        return Err(CoreError::invalid("no view paths given"));
    }
    let mut raw_views = Vec::new();
    for path in paths {
        let path = path.as_ref();
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().to_string())
            .unwrap_or_else(|| "view".to_string());
        raw_views.push(read_feature_csv(path, &name)?);
    }
    let (label_map, class_order) = read_label_csv(label_path.as_ref())?;

    let mut common: BTreeSet<String> = raw_views[0].samples.iter().cloned().collect();
    for view in &raw_views[1..] {
        let ids: BTreeSet<String> = view.samples.iter().cloned().collect();
        common = common.intersection(&ids).cloned().collect();
    }
    if common.is_empty() {
        return Err(CoreError::data("empty intersection of sample ids across views"));
    }
    let ordered: Vec<String> = common.into_iter().collect();
    for id in &ordered {
        if !label_map.contains_key(id) {
            return Err(CoreError::data(format!("unlabeled sample '{id}'")));
        }
    }
    let labels: Vec<usize> = ordered
        .iter()
        .map(|id| {
            class_order
                .iter()
                .position(|c| c == &label_map[id])
                .expect("class present in class_order")
        })
        .collect();

    let mut views = Vec::new();
    for raw in raw_views {
        let index: HashMap<&String, usize> =
            raw.samples.iter().enumerate().map(|(i, s)| (s, i)).collect();
        let rows: Vec<usize> = ordered.iter().map(|id| index[id]).collect();
        views.push(OmicsView::new(
            raw.name,
            ordered.clone(),
            raw.features,
            select_rows(&raw.values, &rows),
            None,
        )?);
    }
    MultiViewDataset::new(views, labels, class_order)
}

/// Load feature CSVs without labels (for prediction), aligning samples to
/// the lexicographically sorted intersection of ids across views.
pub fn load_unlabeled_views(paths: &[impl AsRef<Path>]) -> Result<Vec<OmicsView>> {
    if paths.is_empty() {
        return Err(CoreError::invalid("no view paths given"));
    }
    let mut raw_views = Vec::new();
    for path in paths {
        let path = path.as_ref();
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().to_string())
            .unwrap_or_else(|| "view".to_string());
        raw_views.push(read_feature_csv(path, &name)?);
    }
    let mut common: BTreeSet<String> = raw_views[0].samples.iter().cloned().collect();
    for view in &raw_views[1..] {
        let ids: BTreeSet<String> = view.samples.iter().cloned().collect();
        common = common.intersection(&ids).cloned().collect();
    }
    if common.is_empty() {
        return Err(CoreError::data("empty intersection of sample ids across views"));
    }
    let ordered: Vec<String> = common.into_iter().collect();
    raw_views
        .into_iter()
        .map(|raw| {
            let index: HashMap<&String, usize> =
                raw.samples.iter().enumerate().map(|(i, s)| (s, i)).collect();
            let rows: Vec<usize> = ordered.iter().map(|id| index[id]).collect();
            OmicsView::new(
                raw.name,
                ordered.clone(),
                raw.features,
                select_rows(&raw.values, &rows),
                None,
            )
        })
        .collect()
}

/// Write one view in the toolkit's feature-CSV format.
pub fn write_view_csv(view: &OmicsView, path: impl AsRef<Path>) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    write!(file, "sample_id")?;
    for f in &view.features {
        write!(file, ",{f}")?;
    }
    writeln!(file)?;
    for (i, id) in view.samples.iter().enumerate() {
        write!(file, "{id}")?;
        for j in 0..view.n_features() {
            write!(file, ",{}", view.values[[i, j]])?;
        }
        writeln!(file)?;
    }
    Ok(())
}

/// Write the labels CSV companion for a dataset.
pub fn write_labels_csv(dataset: &MultiViewDataset, path: impl AsRef<Path>) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    writeln!(file, "sample_id,label")?;
    for (id, &label) in dataset.views[0].samples.iter().zip(&dataset.labels) {
        writeln!(file, "{id},{}", dataset.class_names[label])?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Synthetic benchmarks
// ---------------------------------------------------------------------------

/// Gaussian class-blob multi-view data. Class-mean separation in view `m`
/// scales with `strengths[m]`; strength 0 yields label-independent noise.
/// Deterministic per seed.
pub fn synthetic_multiview(
    seed: u64,
    n: usize,
    classes: usize,
    dims: &[usize],
    strengths: &[f64],
) -> Result<MultiViewDataset> {
    if n == 0 || classes == 0 || dims.iter().any(|&d| d == 0) {
        return Err(CoreError::invalid("n, classes, and dims must be positive"));
    }
    if dims.len() != strengths.len() || dims.is_empty() {
        return Err(CoreError::invalid(
            "dims and strengths must have equal nonzero length",
        ));
    }
    if classes < 2 {
        return Err(CoreError::invalid("need at least two classes"));
    }
    if n < 4 * classes {
        return Err(CoreError::invalid(format!(
            "n = {n} too small; need at least 4 x classes = {}",
            4 * classes
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
    let samples: Vec<String> = (0..n).map(|i| format!("s{i:05}")).collect();

    let mut views = Vec::new();
    for (m, (&dim, &strength)) in dims.iter().zip(strengths).enumerate() {
        // Class directions: one-hot when the view is wide enough, otherwise
        // normalized Gaussian draws. Drawn even at strength 0 to keep the
        // RNG stream independent of strength values.
        let mut directions = Vec::with_capacity(classes);
        for c in 0..classes {
            let mut dir = vec![0.0f64; dim];
            if c < dim {
                dir[c] = 1.0;
            } else {
                let mut norm = 0.0;
                for v in dir.iter_mut() {
                    *v = rng.sample(StandardNormal);
                    norm += *v * *v;
                }
                let norm = norm.sqrt().max(1e-12);
                for v in dir.iter_mut() {
                    *v /= norm;
                }
            }
            directions.push(dir);
        }
        let mut values = Array2::zeros((n, dim));
        for i in 0..n {
            let dir = &directions[labels[i]];
            for j in 0..dim {
                let noise: f64 = rng.sample(StandardNormal);
                values[[i, j]] = strength * dir[j] + noise;
            }
        }
        let features = (0..dim).map(|j| format!("view{m}_f{j}")).collect();
        views.push(OmicsView::new(
            format!("view{m}"),
            samples.clone(),
            features,
            values,
            None,
        )?);
    }
    let class_names = (0..classes).map(|c| format!("class{c}")).collect();
    MultiViewDataset::new(views, labels, class_names)
}

/// Complementary-views benchmark: three views, binary labels. Each sample
/// carries three hidden ±1 bits; the label is their majority vote and view
/// `m` observes only bit `m` (plus pure-noise features). A single view can
/// therefore agree with the label at most 75% of the time, while the three
/// views together determine it almost perfectly.
pub fn complementary_multiview(seed: u64, n: usize) -> Result<MultiViewDataset> {
    if n < 8 {
        return Err(CoreError::invalid("n must be at least 8"));
    }
    const VIEWS: usize = 3;
    const DIM: usize = 4;
    const SIGNAL: f64 = 1.5;
    const BIT_NOISE: f64 = 0.5;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bits = vec![[0i8; VIEWS]; n];
    let mut labels = Vec::with_capacity(n);
    for row in bits.iter_mut() {
        let mut sum = 0i8;
        for b in row.iter_mut() {
            *b = if rng.gen::<bool>() { 1 } else { -1 };
            sum += *b;
        }
        labels.push(usize::from(sum > 0));
    }
    let samples: Vec<String> = (0..n).map(|i| format!("s{i:05}")).collect();
    let mut views = Vec::new();
    for m in 0..VIEWS {
        let mut values = Array2::zeros((n, DIM));
        for i in 0..n {
            for j in 0..DIM {
                let noise: f64 = rng.sample(StandardNormal);
                values[[i, j]] = if j == 0 {
                    SIGNAL * f64::from(bits[i][m]) + BIT_NOISE * noise
                } else {
                    noise
                };
            }
        }
        let features = (0..DIM).map(|j| format!("view{m}_f{j}")).collect();
        views.push(OmicsView::new(
            format!("view{m}"),
            samples.clone(),
            features,
            values,
            None,
        )?);
    }
    let class_names = vec!["class0".to_string(), "class1".to_string()];
    MultiViewDataset::new(views, labels, class_names)
}
