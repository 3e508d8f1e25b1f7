//! Multi-branch feed-forward classifier over per-view embeddings with
//! concat / sum / weighted-sum fusion, optional cross-connections between
//! branches, and manual backprop trained by mini-batch Adam.

use crate::{CoreError, Result};
use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub const BN_MOMENTUM: f64 = 0.9;
pub const BN_EPSILON: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionMode {
    Concat,
    Sum,
    WeightedSum,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeepMklConfig {
    pub branch_sizes: Vec<usize>,
    pub cross_modal: bool,
    pub fusion: FusionMode,
    /// Head widths: hidden size then class count.
    pub head_sizes: [usize; 2],
    pub leaky_slope: f64,
    pub dropout_rate: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Adam (beta1, beta2, epsilon).
    pub adam: (f64, f64, f64),
    /// Ablation flag: reorder each block to FC -> BatchNorm -> LeakyReLU ->
    /// Dropout instead of the default FC -> LeakyReLU -> Dropout -> BatchNorm.
    pub norm_first: bool,
}

impl DeepMklConfig {
    pub fn defaults(branch_sizes: Vec<usize>, head_hidden: usize, classes: usize) -> Self {
        DeepMklConfig {
            branch_sizes,
            cross_modal: false,
            fusion: FusionMode::Concat,
            head_sizes: [head_hidden, classes],
            leaky_slope: 0.01,
            dropout_rate: 0.3,
            learning_rate: 1e-3,
            batch_size: 32,
            epochs: 100,
            seed: 0,
            adam: (0.9, 0.999, 1e-8),
            norm_first: false,
        }
    }

    fn validate(&self, classes: usize) -> Result<()> {
        if self.branch_sizes.is_empty() {
            return Err(CoreError::invalid("branch_sizes must be non-empty"));
        }
        if self.branch_sizes.iter().any(|&w| w == 0) || self.head_sizes[0] == 0 {
            return Err(CoreError::invalid("layer widths must be positive"));
        }
        if classes < 2 {
            return Err(CoreError::invalid("need at least two classes"));
        }
        if self.head_sizes[1] != classes {
            return Err(CoreError::invalid(format!(
                "head output width {} != class count {classes}",
                self.head_sizes[1]
            )));
        }
        if self.cross_modal && self.branch_sizes.len() < 4 {
            return Err(CoreError::invalid(
                "cross-modal wiring needs at least four branch layers",
            ));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(CoreError::invalid("dropout_rate must be in [0, 1)"));
        }
        if self.batch_size < 2 {
            return Err(CoreError::invalid("batch_size must be at least 2"));
        }
        Ok(())
    }
}

/// Fully connected layer plus its batch-norm parameters and running stats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerBlock {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
    pub run_mean: Array1<f64>,
    pub run_var: Array1<f64>,
}

impl LayerBlock {
    fn init(fan_in: usize, out: usize, rng: &mut ChaCha8Rng) -> LayerBlock {
        let limit = (6.0 / fan_in as f64).sqrt();
        let w = Array2::from_shape_fn((fan_in, out), |_| rng.gen_range(-limit..limit));
        LayerBlock {
            w,
            b: Array1::zeros(out),
            gamma: Array1::ones(out),
            beta: Array1::zeros(out),
            run_mean: Array1::zeros(out),
            run_var: Array1::ones(out),
        }
    }

    #[cfg(test)]
    fn out_width(&self) -> usize {
        self.w.ncols()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunMode {
    /// Batch statistics, dropout sampling, running-stat updates.
    Train,
    /// Running statistics, no dropout; forward is per-row deterministic.
    Eval,
}

struct BlockCache {
    x: Array2<f64>,
    /// Input the LeakyReLU was applied to.
    act_in: Array2<f64>,
    /// Scaled dropout mask (entries 0 or 1/(1-p)); None when dropout is off.
    mask: Option<Array2<f64>>,
    bn_norm: Array2<f64>,
    bn_std: Array1<f64>,
    bn_batch: bool,
    out: Array2<f64>,
}

struct ForwardCache {
    branch: Vec<Vec<BlockCache>>,
    branch_out: Vec<Array2<f64>>,
    head_block: BlockCache,
    logits: Array2<f64>,
}

#[derive(Debug, Clone)]
pub struct BlockGrads {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
}

/// Parameter gradients, mirroring the model layout.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub branch: Vec<Vec<BlockGrads>>,
    pub head_block: BlockGrads,
    pub head_w: Array2<f64>,
    pub head_b: Array1<f64>,
    pub fusion: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub train_acc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeepMklModel {
    pub config: DeepMklConfig,
    pub input_dims: Vec<usize>,
    pub classes: usize,
    pub branches: Vec<Vec<LayerBlock>>,
    pub head_block: LayerBlock,
    pub head_w: Array2<f64>,
    pub head_b: Array1<f64>,
    /// Learnable scalars for weighted-sum fusion; empty otherwise.
    pub fusion_weights: Vec<f64>,
}

pub fn build(config: DeepMklConfig, input_dims: &[usize], classes: usize) -> Result<DeepMklModel> {
    config.validate(classes)?;
    if input_dims.is_empty() || input_dims.iter().any(|&d| d == 0) {
        return Err(CoreError::invalid("input widths must be positive"));
    }
    let m = input_dims.len();
    let depth = config.branch_sizes.len();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut branches = Vec::with_capacity(m);
    for &dim in input_dims {
        let mut layers = Vec::with_capacity(depth);
        let mut prev = dim;
        for (l, &width) in config.branch_sizes.iter().enumerate() {
            let fan_in = if config.cross_modal && l == depth - 1 {
                m * config.branch_sizes[depth - 2]
            } else {
                prev
            };
            layers.push(LayerBlock::init(fan_in, width, &mut rng));
            prev = width;
        }
        branches.push(layers);
    }
    let last = *config.branch_sizes.last().unwrap();
    let fused_width = match config.fusion {
        FusionMode::Concat => m * last,
        FusionMode::Sum | FusionMode::WeightedSum => last,
    };
    let head_block = LayerBlock::init(fused_width, config.head_sizes[0], &mut rng);
    let limit = (6.0 / config.head_sizes[0] as f64).sqrt();
    let head_w =
        Array2::from_shape_fn((config.head_sizes[0], classes), |_| rng.gen_range(-limit..limit));
    let fusion_weights = if config.fusion == FusionMode::WeightedSum {
        vec![1.0 / m as f64; m]
    } else {
        Vec::new()
    };
    Ok(DeepMklModel {
        config,
        input_dims: input_dims.to_vec(),
        classes,
        branches,
        head_block,
        head_w,
        head_b: Array1::zeros(classes),
        fusion_weights,
    })
}

fn leaky(x: f64, slope: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        slope * x
    }
}

fn leaky_deriv(x: f64, slope: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        slope
    }
}

pub fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    out
}

fn bn_apply(
    x: &Array2<f64>,
    mean: &Array1<f64>,
    std: &Array1<f64>,
    gamma: &Array1<f64>,
    beta: &Array1<f64>,
) -> (Array2<f64>, Array2<f64>) {
    let mut norm = x.clone();
    for mut row in norm.rows_mut() {
        for j in 0..row.len() {
            row[j] = (row[j] - mean[j]) / std[j];
        }
    }
    let mut out = norm.clone();
    for mut row in out.rows_mut() {
        for j in 0..row.len() {
            row[j] = gamma[j] * row[j] + beta[j];
        }
    }
    (norm, out)
}

impl DeepMklModel {
    fn check_views(&self, views: &[Array2<f64>]) -> Result<usize> {
        if views.len() != self.input_dims.len() {
            return Err(CoreError::dims(format!(
                "expected {} views, got {}",
                self.input_dims.len(),
                views.len()
            )));
        }
        let n = views[0].nrows();
        for (v, &dim) in views.iter().zip(&self.input_dims) {
            if v.ncols() != dim {
                return Err(CoreError::dims(format!(
                    "view width {} != expected {dim}",
                    v.ncols()
                )));
            }
            if v.nrows() != n {
                return Err(CoreError::dims("views disagree on sample count"));
            }
        }
        Ok(n)
    }

    fn block_forward(
        layer: &mut LayerBlock,
        x: &Array2<f64>,
        mode: RunMode,
        slope: f64,
        dropout: f64,
        norm_first: bool,
        rng: Option<&mut ChaCha8Rng>,
    ) -> BlockCache {
        let z = x.dot(&layer.w) + &layer.b;
        let n = z.nrows() as f64;
        let batch_stats = mode == RunMode::Train;

        let bn = |layer: &mut LayerBlock, input: &Array2<f64>| -> (Array2<f64>, Array2<f64>, Array1<f64>) {
            if batch_stats {
                let mean = input.mean_axis(Axis(0)).unwrap();
                let mut var = Array1::<f64>::zeros(input.ncols());
                for row in input.rows() {
                    for j in 0..row.len() {
                        let d = row[j] - mean[j];
                        var[j] += d * d;
                    }
                }
                var.mapv_inplace(|v| v / n);
                let std = var.mapv(|v| (v + BN_EPSILON).sqrt());
                layer.run_mean = &layer.run_mean * BN_MOMENTUM + &(&mean * (1.0 - BN_MOMENTUM));
                layer.run_var = &layer.run_var * BN_MOMENTUM + &(&var * (1.0 - BN_MOMENTUM));
                let (norm, out) = bn_apply(input, &mean, &std, &layer.gamma, &layer.beta);
                (norm, out, std)
            } else {
                let std = layer.run_var.mapv(|v| (v + BN_EPSILON).sqrt());
                let (norm, out) = bn_apply(input, &layer.run_mean, &std, &layer.gamma, &layer.beta);
                (norm, out, std)
            }
        };

        let sample_mask = |rng: Option<&mut ChaCha8Rng>, shape: (usize, usize)| -> Option<Array2<f64>> {
            if mode == RunMode::Train && dropout > 0.0 {
                let rng = rng.expect("train mode requires an RNG for dropout");
                let keep = 1.0 - dropout;
                Some(Array2::from_shape_fn(shape, |_| {
                    if rng.gen::<f64>() < keep {
                        1.0 / keep
                    } else {
                        0.0
                    }
                }))
            } else {
                None
            }
        };

        if norm_first {
            // FC -> BN -> LeakyReLU -> Dropout
            let (bn_norm, h, bn_std) = bn(layer, &z);
            let act = h.mapv(|v| leaky(v, slope));
            let mask = sample_mask(rng, (act.nrows(), act.ncols()));
            let out = match &mask {
                Some(m) => &act * m,
                None => act,
            };
            BlockCache { x: x.clone(), act_in: h, mask, bn_norm, bn_std, bn_batch: batch_stats, out }
        } else {
            // FC -> LeakyReLU -> Dropout -> BN
            let act = z.mapv(|v| leaky(v, slope));
            let mask = sample_mask(rng, (act.nrows(), act.ncols()));
            let dropped = match &mask {
                Some(m) => &act * m,
                None => act,
            };
            let (bn_norm, out, bn_std) = bn(layer, &dropped);
            BlockCache { x: x.clone(), act_in: z, mask, bn_norm, bn_std, bn_batch: batch_stats, out }
        }
    }

    fn block_backward(
        &self,
        layer: &LayerBlock,
        cache: &BlockCache,
        dout: &Array2<f64>,
    ) -> (Array2<f64>, BlockGrads) {
        let slope = self.config.leaky_slope;
        let n = dout.nrows() as f64;

        let bn_back = |d: &Array2<f64>| -> (Array2<f64>, Array1<f64>, Array1<f64>) {
            let mut dgamma = Array1::zeros(d.ncols());
            let mut dbeta = Array1::zeros(d.ncols());
            for (drow, nrow) in d.rows().into_iter().zip(cache.bn_norm.rows()) {
                for j in 0..drow.len() {
                    dgamma[j] += drow[j] * nrow[j];
                    dbeta[j] += drow[j];
                }
            }
            let mut dx = d.clone();
            if cache.bn_batch {
                for (mut drow, nrow) in dx.rows_mut().into_iter().zip(cache.bn_norm.rows()) {
                    for j in 0..drow.len() {
                        drow[j] = layer.gamma[j] / (n * cache.bn_std[j])
                            * (n * drow[j] - dbeta[j] - nrow[j] * dgamma[j]);
                    }
                }
            } else {
                for mut drow in dx.rows_mut() {
                    for j in 0..drow.len() {
                        drow[j] *= layer.gamma[j] / cache.bn_std[j];
                    }
                }
            }
            (dx, dgamma, dbeta)
        };

        let (dz, dgamma, dbeta) = if self.config.norm_first {
            // backward through Dropout -> LeakyReLU -> BN
            let d = match &cache.mask {
                Some(m) => dout * m,
                None => dout.clone(),
            };
            let mut dh = d;
            for (mut drow, arow) in dh.rows_mut().into_iter().zip(cache.act_in.rows()) {
                for j in 0..drow.len() {
                    drow[j] *= leaky_deriv(arow[j], slope);
                }
            }
            bn_back(&dh)
        } else {
            // backward through BN -> Dropout -> LeakyReLU
            let (dx, dgamma, dbeta) = bn_back(dout);
            let mut dz = match &cache.mask {
                Some(m) => &dx * m,
                None => dx,
            };
            for (mut drow, zrow) in dz.rows_mut().into_iter().zip(cache.act_in.rows()) {
                for j in 0..drow.len() {
                    drow[j] *= leaky_deriv(zrow[j], slope);
                }
            }
            (dz, dgamma, dbeta)
        };

        let dw = cache.x.t().dot(&dz);
        let db = dz.sum_axis(Axis(0));
        let dx = dz.dot(&layer.w.t());
        (dx, BlockGrads { w: dw, b: db, gamma: dgamma, beta: dbeta })
    }

    fn forward(
        &mut self,
        views: &[Array2<f64>],
        mode: RunMode,
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> Result<ForwardCache> {
        let n = self.check_views(views)?;
        if mode == RunMode::Train && n < 2 {
            return Err(CoreError::invalid(
                "training batches need at least two samples for batch normalization",
            ));
        }
        let slope = self.config.leaky_slope;
        let dropout = self.config.dropout_rate;
        let norm_first = self.config.norm_first;
        let depth = self.config.branch_sizes.len();
        let trunk_depth = if self.config.cross_modal { depth - 1 } else { depth };

        let mut branch_caches: Vec<Vec<BlockCache>> = Vec::with_capacity(self.branches.len());
        for (b, view) in views.iter().enumerate() {
            let mut caches = Vec::with_capacity(depth);
            let mut cur = view.clone();
            for l in 0..trunk_depth {
                let cache = Self::block_forward(
                    &mut self.branches[b][l],
                    &cur,
                    mode,
                    slope,
                    dropout,
                    norm_first,
                    rng.as_deref_mut(),
                );
                cur = cache.out.clone();
                caches.push(cache);
            }
            branch_caches.push(caches);
        }

        if self.config.cross_modal {
            // Each branch's last layer reads the concatenation of every
            // branch's penultimate output.
            let parts: Vec<Array2<f64>> = branch_caches
                .iter()
                .map(|c| c.last().unwrap().out.clone())
                .collect();
            let concat = hconcat(&parts);
            for b in 0..self.branches.len() {
                let cache = Self::block_forward(
                    &mut self.branches[b][depth - 1],
                    &concat,
                    mode,
                    slope,
                    dropout,
                    norm_first,
                    rng.as_deref_mut(),
                );
                branch_caches[b].push(cache);
            }
        }

        let branch_out: Vec<Array2<f64>> = branch_caches
            .iter()
            .map(|c| c.last().unwrap().out.clone())
            .collect();
        let fused = match self.config.fusion {
            FusionMode::Concat => hconcat(&branch_out),
            FusionMode::Sum => {
                let mut s = branch_out[0].clone();
                for o in &branch_out[1..] {
                    s += o;
                }
                s
            }
            FusionMode::WeightedSum => {
                let mut s: Array2<f64> = &branch_out[0] * self.fusion_weights[0];
                for (o, &w) in branch_out[1..].iter().zip(&self.fusion_weights[1..]) {
                    s += &(o * w);
                }
                s
            }
        };

        let head_block = Self::block_forward(
            &mut self.head_block,
            &fused,
            mode,
            slope,
            dropout,
            norm_first,
            rng.as_deref_mut(),
        );
        let logits = head_block.out.dot(&self.head_w) + &self.head_b;
        Ok(ForwardCache { branch: branch_caches, branch_out, head_block, logits })
    }

    fn backward(&self, cache: &ForwardCache, dlogits: &Array2<f64>) -> (Gradients, Vec<Array2<f64>>) {
        let dhead_w = cache.head_block.out.t().dot(dlogits);
        let dhead_b = dlogits.sum_axis(Axis(0));
        let dhidden = dlogits.dot(&self.head_w.t());
        let (dfused, head_block_grads) = self.block_backward(&self.head_block, &cache.head_block, &dhidden);

        let m = self.branches.len();
        let last = *self.config.branch_sizes.last().unwrap();
        let mut dfusion = Vec::new();
        let dbranch_out: Vec<Array2<f64>> = match self.config.fusion {
            FusionMode::Concat => (0..m)
                .map(|b| dfused.slice(ndarray::s![.., b * last..(b + 1) * last]).to_owned())
                .collect(),
            FusionMode::Sum => (0..m).map(|_| dfused.clone()).collect(),
            FusionMode::WeightedSum => {
                dfusion = (0..m)
                    .map(|b| (&dfused * &cache.branch_out[b]).sum())
                    .collect();
                (0..m).map(|b| &dfused * self.fusion_weights[b]).collect()
            }
        };

        let depth = self.config.branch_sizes.len();
        let mut branch_grads: Vec<Vec<Option<BlockGrads>>> =
            vec![(0..depth).map(|_| None).collect(); m];
        // Gradient flowing into each branch's trunk output.
        let dtrunk: Vec<Array2<f64>>;

        if self.config.cross_modal {
            let pen = self.config.branch_sizes[depth - 2];
            let n = dfused.nrows();
            let mut dconcat = Array2::zeros((n, m * pen));
            for b in 0..m {
                let (dc, grads) =
                    self.block_backward(&self.branches[b][depth - 1], &cache.branch[b][depth - 1], &dbranch_out[b]);
                dconcat += &dc;
                branch_grads[b][depth - 1] = Some(grads);
            }
            dtrunk = (0..m)
                .map(|b| dconcat.slice(ndarray::s![.., b * pen..(b + 1) * pen]).to_owned())
                .collect();
        } else {
            dtrunk = dbranch_out;
        }

        let trunk_depth = if self.config.cross_modal { depth - 1 } else { depth };
        let mut dinputs = Vec::with_capacity(m);
        for b in 0..m {
            let mut d = dtrunk[b].clone();
            for l in (0..trunk_depth).rev() {
                let (dx, grads) = self.block_backward(&self.branches[b][l], &cache.branch[b][l], &d);
                d = dx;
                branch_grads[b][l] = Some(grads);
            }
            dinputs.push(d);
        }
        drop(dtrunk);

        let grads = Gradients {
            branch: branch_grads
                .into_iter()
                .map(|layers| layers.into_iter().map(|g| g.unwrap()).collect())
                .collect(),
            head_block: head_block_grads,
            head_w: dhead_w,
            head_b: dhead_b,
            fusion: dfusion,
        };
        (grads, dinputs)
    }

    /// Mean cross-entropy loss and parameter gradients for one batch.
    ///
    /// `mode` Train uses batch statistics and dropout; Eval freezes
    /// batch-norm at the running statistics and disables dropout (the
    /// configuration used for gradient checking and attribution).
    pub fn loss_and_gradients(
        &mut self,
        views: &[Array2<f64>],
        labels: &[usize],
        mode: RunMode,
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<(f64, Gradients)> {
        let n = self.check_views(views)?;
        if labels.len() != n {
            return Err(CoreError::dims("label count != sample count"));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= self.classes) {
            return Err(CoreError::invalid(format!("label {bad} out of range")));
        }
        let cache = self.forward(views, mode, rng)?;
        let probs = softmax_rows(&cache.logits);
        let mut loss = 0.0;
        let mut dlogits = probs.clone();
        for (i, &label) in labels.iter().enumerate() {
            loss -= probs[[i, label]].max(1e-300).ln();
            dlogits[[i, label]] -= 1.0;
        }
        loss /= n as f64;
        dlogits.mapv_inplace(|v| v / n as f64);
        let (grads, _) = self.backward(&cache, &dlogits);
        Ok((loss, grads))
    }

    /// Per-sample gradient of the `target` class pre-softmax logit with
    /// respect to each view's input, in eval mode.
    pub fn logit_input_gradients(
        &self,
        views: &[Array2<f64>],
        target: usize,
    ) -> Result<Vec<Array2<f64>>> {
        if target >= self.classes {
            return Err(CoreError::invalid(format!("class {target} out of range")));
        }
        let n = self.check_views(views)?;
        // Eval-mode forward never mutates running stats, so the clone is
        // only to satisfy the &mut signature of the shared forward path.
        let mut scratch = self.clone();
        let cache = scratch.forward(views, RunMode::Eval, None)?;
        let mut dlogits = Array2::zeros((n, self.classes));
        dlogits.column_mut(target).fill(1.0);
        let (_, dinputs) = self.backward(&cache, &dlogits);
        Ok(dinputs)
    }

    /// Pre-softmax logits in eval mode.
    pub fn logits(&self, views: &[Array2<f64>]) -> Result<Array2<f64>> {
        let mut scratch = self.clone();
        let cache = scratch.forward(views, RunMode::Eval, None)?;
        Ok(cache.logits)
    }

    pub fn predict_proba(&self, views: &[Array2<f64>]) -> Result<Array2<f64>> {
        Ok(softmax_rows(&self.logits(views)?))
    }

    pub fn predict(&self, views: &[Array2<f64>]) -> Result<Vec<usize>> {
        let probs = self.predict_proba(views)?;
        Ok(probs
            .rows()
            .into_iter()
            .map(|row| {
                let mut best = 0;
                for (j, &v) in row.iter().enumerate() {
                    if v > row[best] {
                        best = j;
                    }
                }
                best
            })
            .collect())
    }

    /// Trainable parameters flattened in a fixed layout (branch blocks, head
    /// block, head linear layer, fusion scalars). Running stats excluded.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::new();
        let blocks = self.param_blocks();
        for block in blocks {
            out.extend(block.w.iter());
            out.extend(block.b.iter());
            out.extend(block.gamma.iter());
            out.extend(block.beta.iter());
        }
        out.extend(self.head_w.iter());
        out.extend(self.head_b.iter());
        out.extend(&self.fusion_weights);
        out
    }

    pub fn set_flat_params(&mut self, params: &[f64]) -> Result<()> {
        let mut it = params.iter();
        let mut take = |dst: &mut f64| -> Result<()> {
            *dst = *it
                .next()
                .ok_or_else(|| CoreError::dims("parameter vector too short"))?;
            Ok(())
        };
        for branch in &mut self.branches {
            for layer in branch.iter_mut() {
                for v in layer.w.iter_mut() {
                    take(v)?;
                }
                for v in layer.b.iter_mut() {
                    take(v)?;
                }
                for v in layer.gamma.iter_mut() {
                    take(v)?;
                }
                for v in layer.beta.iter_mut() {
                    take(v)?;
                }
            }
        }
        for v in self.head_block.w.iter_mut() {
            take(v)?;
        }
        for v in self.head_block.b.iter_mut() {
            take(v)?;
        }
        for v in self.head_block.gamma.iter_mut() {
            take(v)?;
        }
        for v in self.head_block.beta.iter_mut() {
            take(v)?;
        }
        for v in self.head_w.iter_mut() {
            take(v)?;
        }
        for v in self.head_b.iter_mut() {
            take(v)?;
        }
        for v in self.fusion_weights.iter_mut() {
            take(v)?;
        }
        if it.next().is_some() {
            return Err(CoreError::dims("parameter vector too long"));
        }
        Ok(())
    }

    fn param_blocks(&self) -> Vec<&LayerBlock> {
        let mut blocks: Vec<&LayerBlock> = Vec::new();
        for branch in &self.branches {
            blocks.extend(branch.iter());
        }
        blocks.push(&self.head_block);
        blocks
    }

    /// Train in place with mini-batch Adam; returns per-epoch stats.
    pub fn train(
        &mut self,
        views: &[Array2<f64>],
        labels: &[usize],
    ) -> Result<Vec<EpochStats>> {
        let n = self.check_views(views)?;
        if labels.len() != n {
            return Err(CoreError::dims("label count != sample count"));
        }
        if n < 2 {
            return Err(CoreError::invalid("training needs at least two samples"));
        }
        let (beta1, beta2, eps) = self.config.adam;
        let lr = self.config.learning_rate;
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        let dim = self.flat_params().len();
        let mut m1 = vec![0.0; dim];
        let mut m2 = vec![0.0; dim];
        let mut step = 0usize;
        let mut trace = Vec::with_capacity(self.config.epochs);

        for epoch in 0..self.config.epochs {
            let mut order: Vec<usize> = (0..n).collect();
            // Fisher-Yates with the model's own RNG for reproducibility.
            for i in (1..n).rev() {
                let j = rng.gen_range(0..=i);
                order.swap(i, j);
            }
            let mut batches: Vec<Vec<usize>> = order
                .chunks(self.config.batch_size)
                .map(|c| c.to_vec())
                .collect();
            if batches.len() > 1 && batches.last().unwrap().len() < 2 {
                let tail = batches.pop().unwrap();
                batches.last_mut().unwrap().extend(tail);
            }

            let mut epoch_loss = 0.0;
            let mut seen = 0usize;
            for batch in &batches {
                let batch_views: Vec<Array2<f64>> =
                    views.iter().map(|v| select_rows(v, batch)).collect();
                let batch_labels: Vec<usize> = batch.iter().map(|&i| labels[i]).collect();
                let (loss, grads) = self.loss_and_gradients(
                    &batch_views,
                    &batch_labels,
                    RunMode::Train,
                    Some(&mut rng),
                )?;
                if !loss.is_finite() {
                    return Err(CoreError::numerical(format!(
                        "training diverged at epoch {epoch}: non-finite loss"
                    )));
                }
                epoch_loss += loss * batch.len() as f64;
                seen += batch.len();

                step += 1;
                let g = grads.flat();
                let mut p = self.flat_params();
                let bias1 = 1.0 - beta1.powi(step as i32);
                let bias2 = 1.0 - beta2.powi(step as i32);
                for i in 0..dim {
                    m1[i] = beta1 * m1[i] + (1.0 - beta1) * g[i];
                    m2[i] = beta2 * m2[i] + (1.0 - beta2) * g[i] * g[i];
                    p[i] -= lr * (m1[i] / bias1) / ((m2[i] / bias2).sqrt() + eps);
                }
                self.set_flat_params(&p)?;
            }

            let preds = self.predict(views)?;
            let correct = preds.iter().zip(labels).filter(|(p, l)| p == l).count();
            trace.push(EpochStats {
                epoch,
                loss: epoch_loss / seen as f64,
                train_acc: correct as f64 / n as f64,
            });
        }
        Ok(trace)
    }
}

impl Gradients {
    /// Flatten in the same layout as [`DeepMklModel::flat_params`].
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for branch in &self.branch {
            for g in branch {
                out.extend(g.w.iter());
                out.extend(g.b.iter());
                out.extend(g.gamma.iter());
                out.extend(g.beta.iter());
            }
        }
        out.extend(self.head_block.w.iter());
        out.extend(self.head_block.b.iter());
        out.extend(self.head_block.gamma.iter());
        out.extend(self.head_block.beta.iter());
        out.extend(self.head_w.iter());
        out.extend(self.head_b.iter());
        out.extend(&self.fusion);
        out
    }
}

fn hconcat(parts: &[Array2<f64>]) -> Array2<f64> {
    let n = parts[0].nrows();
    let total: usize = parts.iter().map(|p| p.ncols()).sum();
    let mut out = Array2::zeros((n, total));
    let mut offset = 0;
    for p in parts {
        out.slice_mut(ndarray::s![.., offset..offset + p.ncols()])
            .assign(p);
        offset += p.ncols();
    }
    out
}

fn select_rows(m: &Array2<f64>, rows: &[usize]) -> Array2<f64> {
    let mut out = Array2::zeros((rows.len(), m.ncols()));
    for (i, &r) in rows.iter().enumerate() {
        out.row_mut(i).assign(&m.row(r));
    }
    out
}
