//! Node classification on region graphs.
//!
//! The reference model is a distance-weighted message-passing network:
//! every layer concatenates a node's state with the weighted mean of its
//! neighbours' states and applies an affine map and ReLU. Neighbour weights
//! are `ω = 1/(1 + d/δ̄)` normalized over the neighbourhood, where `d` is the
//! centroid distance and `δ̄` the mean edge weight of the graph. A linear
//! readout produces one logit per class.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ragbuild::{ClassLabel, RegionGraph};

pub const MODEL_FORMAT_VERSION: u32 = 1;
pub const N_CLASSES: usize = ClassLabel::COUNT;

#[derive(Debug, Error)]
pub enum ClassifyError {
    #[error("no training graphs")]
    NoGraphs,
    #[error("node {0} has no label")]
    Unlabeled(u32),
    #[error("feature width mismatch: model expects {expected}, node {id} has {got}")]
    Shape {
        expected: usize,
        got: usize,
        id: u32,
    },
    #[error("non-finite feature on node {0}")]
    NonFinite(u32),
    #[error("prediction and truth cover different node sets")]
    NodeSetMismatch,
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, ClassifyError>;

/// Per-dimension affine standardization fitted on training nodes, with an
/// optional `ln(1 + x)` applied to degree and area first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub log_scale_dims: Vec<usize>,
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn identity(dim: usize) -> Self {
        Standardizer {
            log_scale_dims: Vec::new(),
            mean: vec![0.0; dim],
            scale: vec![1.0; dim],
        }
    }

    fn pre(&self, x: &mut [f64]) {
        for &d in &self.log_scale_dims {
            x[d] = x[d].max(0.0).ln_1p();
        }
    }

    /// Z-score per dimension; zero-variance dimensions keep unit scale.
    pub fn fit(rows: &[Vec<f64>], log_scale_dims: &[usize]) -> Result<Self> {
        let first = rows.first().ok_or(ClassifyError::NoGraphs)?;
        let dim = first.len();
        let mut s = Standardizer {
            log_scale_dims: log_scale_dims.to_vec(),
            mean: vec![0.0; dim],
            scale: vec![1.0; dim],
        };
        let pre: Vec<Vec<f64>> = rows
            .iter()
            .map(|r| {
                let mut r = r.clone();
                s.pre(&mut r);
                r
            })
            .collect();
        let n = pre.len() as f64;
        for d in 0..dim {
            let mean = pre.iter().map(|r| r[d]).sum::<f64>() / n;
            let var = pre.iter().map(|r| (r[d] - mean).powi(2)).sum::<f64>() / n;
            s.mean[d] = mean;
            s.scale[d] = if var > 1e-24 { var.sqrt() } else { 1.0 };
        }
        Ok(s)
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut v = x.to_vec();
        self.pre(&mut v);
        for (d, v) in v.iter_mut().enumerate() {
            *v = (*v - self.mean[d]) / self.scale[d];
        }
        v
    }
}

/// Fits a standardizer on all nodes of `graphs` and returns it together
/// with the transformed feature rows of each graph.
pub fn standardize(
    graphs: &[RegionGraph],
    log_scale_dims: &[usize],
) -> Result<(Standardizer, Vec<Vec<Vec<f64>>>)> {
    let rows: Vec<Vec<f64>> = graphs
        .iter()
        .flat_map(|g| g.nodes.values().map(|n| n.features.to_vec()))
        .collect();
    let s = Standardizer::fit(&rows, log_scale_dims)?;
    let out = graphs
        .iter()
        .map(|g| {
            g.nodes
                .values()
                .map(|n| s.apply(&n.features.to_vec()))
                .collect()
        })
        .collect();
    Ok((s, out))
}

/// Sum that does not depend on the order of its terms.
fn canonical_sum(buf: &mut [f64]) -> f64 {
    buf.sort_unstable_by(f64::total_cmp);
    buf.iter().sum()
}

/// Graph prepared for the network: dense node indices, standardized
/// features and normalized neighbour weights.
#[derive(Debug, Clone)]
pub struct GraphInput {
    pub ids: Vec<u32>,
    pub x: Vec<Vec<f64>>,
    pub nbrs: Vec<Vec<(usize, f64)>>,
}

impl GraphInput {
    pub fn new(g: &RegionGraph, s: &Standardizer) -> Result<Self> {
        let ids: Vec<u32> = g.nodes.keys().copied().collect();
        let index: BTreeMap<u32, usize> = ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
        let mut x = Vec::with_capacity(ids.len());
        for (id, n) in &g.nodes {
            let f = n.features.to_vec();
            if f.len() != s.mean.len() {
                return Err(ClassifyError::Shape {
                    expected: s.mean.len(),
                    got: f.len(),
                    id: *id,
                });
            }
            if f.iter().any(|v| !v.is_finite()) {
                return Err(ClassifyError::NonFinite(*id));
            }
            x.push(s.apply(&f));
        }
        let edges: Vec<(usize, usize, f64)> = g
            .edges
            .iter()
            .filter_map(|&(a, b, w)| Some((*index.get(&a)?, *index.get(&b)?, w)))
            .collect();
        Ok(GraphInput {
            ids,
            nbrs: neighbour_weights(x.len(), &edges),
            x,
        })
    }
}

/// Normalized `ω(u, v) = 1/(1 + d/δ̄)` lists per node.
pub fn neighbour_weights(n: usize, edges: &[(usize, usize, f64)]) -> Vec<Vec<(usize, f64)>> {
    let mut nbrs: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    if edges.is_empty() {
        return nbrs;
    }
    let mut ws: Vec<f64> = edges.iter().map(|e| e.2).collect();
    let mean = canonical_sum(&mut ws) / edges.len() as f64;
    for &(a, b, d) in edges {
        let w = 1.0 / (1.0 + d / mean);
        nbrs[a].push((b, w));
        nbrs[b].push((a, w));
    }
    let mut buf = Vec::new();
    for list in nbrs.iter_mut() {
        buf.clear();
        buf.extend(list.iter().map(|e| e.1));
        let total = canonical_sum(&mut buf);
        for e in list.iter_mut() {
            e.1 /= total;
        }
    }
    nbrs
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub layer_count: usize,
    pub hidden_width: usize,
    pub input_dim: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            layer_count: 6,
            hidden_width: 64,
            input_dim: 18,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Optimizer {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Optimizer {
    pub fn adam() -> Self {
        Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub optimizer: Optimizer,
    /// Apply `ln(1 + x)` to degree and area before z-scoring.
    pub log_scale: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 40,
            learning_rate: 0.01,
            batch_size: 1,
            seed: 7,
            optimizer: Optimizer::Sgd,
            log_scale: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0
            || self.batch_size == 0
            || !(self.learning_rate > 0.0 && self.learning_rate.is_finite())
        {
            return Err(ClassifyError::InvalidModel(format!(
                "epochs and batch_size must be >= 1 and learning_rate > 0 (got {}, {}, {})",
                self.epochs, self.batch_size, self.learning_rate
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
struct LayerShape {
    input: usize,
    output: usize,
    w: usize,
    b: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierModel {
    pub format_version: u32,
    pub config: ModelConfig,
    pub classes: Vec<String>,
    pub standardizer: Standardizer,
    pub params: Vec<f64>,
}

/// Activations kept for the backward pass.
struct Cache {
    /// `h[k]` is the input to layer `k`; `h[L]` feeds the readout.
    h: Vec<Vec<Vec<f64>>>,
    agg: Vec<Vec<Vec<f64>>>,
    z: Vec<Vec<Vec<f64>>>,
    logits: Vec<Vec<f64>>,
}

impl ClassifierModel {
    /// He-initialized weights, zero biases.
    pub fn new(cfg: ModelConfig, standardizer: Standardizer) -> Self {
        let mut m = ClassifierModel {
            format_version: MODEL_FORMAT_VERSION,
            config: cfg,
            classes: ClassLabel::ALL
                .iter()
                .map(|c| c.name().to_string())
                .collect(),
            standardizer,
            params: Vec::new(),
        };
        let shapes = m.shapes();
        let total = shapes.last().map_or(0, |s| s.b + s.output);
        m.params = vec![0.0; total];
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let readout = shapes.len() - 1;
        for (k, s) in shapes.iter().enumerate() {
            let fan = if k == readout { s.input } else { 2 * s.input };
            let normal = Normal::new(0.0, (2.0 / fan.max(1) as f64).sqrt()).expect("valid std");
            for p in &mut m.params[s.w..s.w + s.output * fan] {
                *p = normal.sample(&mut rng);
            }
        }
        m
    }

    /// Message-passing layers followed by the readout.
    fn shapes(&self) -> Vec<LayerShape> {
        let c = &self.config;
        let mut out = Vec::with_capacity(c.layer_count + 1);
        let mut off = 0;
        let mut input = c.input_dim;
        for _ in 0..c.layer_count {
            let w = off;
            let b = w + c.hidden_width * 2 * input;
            out.push(LayerShape {
                input,
                output: c.hidden_width,
                w,
                b,
            });
            off = b + c.hidden_width;
            input = c.hidden_width;
        }
        let w = off;
        let b = w + N_CLASSES * input;
        out.push(LayerShape {
            input,
            output: N_CLASSES,
            w,
            b,
        });
        out
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.format_version != MODEL_FORMAT_VERSION {
            return Err(ClassifyError::InvalidModel(format!(
                "unsupported format_version {}",
                self.format_version
            )));
        }
        let expected = self.shapes().last().map_or(0, |s| s.b + s.output);
        if self.params.len() != expected {
            return Err(ClassifyError::InvalidModel(format!(
                "expected {expected} parameters, found {}",
                self.params.len()
            )));
        }
        if self.standardizer.mean.len() != self.config.input_dim
            || self.standardizer.scale.len() != self.config.input_dim
        {
            return Err(ClassifyError::InvalidModel(
                "standardizer width does not match input_dim".into(),
            ));
        }
        if self.params.iter().any(|p| !p.is_finite()) {
            return Err(ClassifyError::InvalidModel("non-finite parameter".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: ClassifierModel = serde_json::from_str(s)?;
        m.validate()?;
        Ok(m)
    }

    fn forward_cached(&self, g: &GraphInput, params: &[f64]) -> Cache {
        let shapes = self.shapes();
        let n = g.x.len();
        let mut h = vec![g.x.clone()];
        let mut agg = Vec::new();
        let mut z = Vec::new();
        let mut buf = Vec::new();
        for s in &shapes[..shapes.len() - 1] {
            let cur = h.last().unwrap();
            let mut a = vec![vec![0.0; s.input]; n];
            for v in 0..n {
                if g.nbrs[v].is_empty() {
                    continue;
                }
                for d in 0..s.input {
                    buf.clear();
                    buf.extend(g.nbrs[v].iter().map(|&(u, w)| w * cur[u][d]));
                    a[v][d] = canonical_sum(&mut buf);
                }
            }
            let mut zl = vec![vec![0.0; s.output]; n];
            let mut hl = vec![vec![0.0; s.output]; n];
            for v in 0..n {
                for o in 0..s.output {
                    let row = &params[s.w + o * 2 * s.input..s.w + (o + 1) * 2 * s.input];
                    let mut acc = params[s.b + o];
                    for (wi, xi) in row[..s.input].iter().zip(&cur[v]) {
                        acc += wi * xi;
                    }
                    for (wi, xi) in row[s.input..].iter().zip(&a[v]) {
                        acc += wi * xi;
                    }
                    zl[v][o] = acc;
                    hl[v][o] = acc.max(0.0);
                }
            }
            agg.push(a);
            z.push(zl);
            h.push(hl);
        }
        let s = shapes.last().unwrap();
        let last = h.last().unwrap();
        let logits = (0..n)
            .map(|v| {
                (0..N_CLASSES)
                    .map(|o| {
                        let row = &params[s.w + o * s.input..s.w + (o + 1) * s.input];
                        params[s.b + o] + row.iter().zip(&last[v]).map(|(a, b)| a * b).sum::<f64>()
                    })
                    .collect()
            })
            .collect();
        Cache { h, agg, z, logits }
    }

    /// Per-node logits in node-id order of the graph input.
    pub fn forward(&self, g: &GraphInput) -> Vec<Vec<f64>> {
        self.forward_cached(g, &self.params).logits
    }

    fn loss_with(&self, g: &GraphInput, targets: &[usize], params: &[f64]) -> f64 {
        let c = self.forward_cached(g, params);
        mean_cross_entropy(&c.logits, targets).0
    }

    /// Mean cross-entropy over the graph's nodes.
    pub fn loss(&self, g: &GraphInput, targets: &[usize]) -> f64 {
        self.loss_with(g, targets, &self.params)
    }

    /// Loss and its gradient with respect to all parameters.
    pub fn loss_and_grad(&self, g: &GraphInput, targets: &[usize]) -> (f64, Vec<f64>) {
        let shapes = self.shapes();
        let p = &self.params;
        let cache = self.forward_cached(g, p);
        let (loss, dlogits) = mean_cross_entropy(&cache.logits, targets);
        let n = g.x.len();
        let mut grad = vec![0.0; p.len()];

        let s = shapes.last().unwrap();
        let last = &cache.h[shapes.len() - 1];
        let mut dh = vec![vec![0.0; s.input]; n];
        for v in 0..n {
            for o in 0..N_CLASSES {
                let dl = dlogits[v][o];
                if dl == 0.0 {
                    continue;
                }
                grad[s.b + o] += dl;
                let base = s.w + o * s.input;
                for i in 0..s.input {
                    grad[base + i] += dl * last[v][i];
                    dh[v][i] += dl * p[base + i];
                }
            }
        }
        for k in (0..shapes.len() - 1).rev() {
            let s = shapes[k];
            let hin = &cache.h[k];
            let a = &cache.agg[k];
            let z = &cache.z[k];
            let mut dh_in = vec![vec![0.0; s.input]; n];
            let mut da = vec![vec![0.0; s.input]; n];
            for v in 0..n {
                for o in 0..s.output {
                    if z[v][o] <= 0.0 {
                        continue;
                    }
                    let dz = dh[v][o];
                    if dz == 0.0 {
                        continue;
                    }
                    grad[s.b + o] += dz;
                    let base = s.w + o * 2 * s.input;
                    for i in 0..s.input {
                        grad[base + i] += dz * hin[v][i];
                        grad[base + s.input + i] += dz * a[v][i];
                        dh_in[v][i] += dz * p[base + i];
                        da[v][i] += dz * p[base + s.input + i];
                    }
                }
            }
            for v in 0..n {
                for &(u, w) in &g.nbrs[v] {
                    for i in 0..s.input {
                        dh_in[u][i] += w * da[v][i];
                    }
                }
            }
            dh = dh_in;
        }
        (loss, grad)
    }

    /// ReLU on/off pattern, used to detect kinks in finite differences.
    fn relu_pattern(&self, g: &GraphInput, params: &[f64]) -> Vec<bool> {
        let c = self.forward_cached(g, params);
        c.z.iter().flatten().flatten().map(|&v| v > 0.0).collect()
    }
}

/// Mean softmax cross-entropy and its gradient with respect to the logits.
fn mean_cross_entropy(logits: &[Vec<f64>], targets: &[usize]) -> (f64, Vec<Vec<f64>>) {
    let n = logits.len().max(1) as f64;
    let mut loss = 0.0;
    let grads = logits
        .iter()
        .zip(targets)
        .map(|(l, &t)| {
            let m = l.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = l.iter().map(|v| (v - m).exp()).collect();
            let z: f64 = exps.iter().sum();
            loss += z.ln() + m - l[t];
            exps.iter()
                .enumerate()
                .map(|(i, e)| (e / z - if i == t { 1.0 } else { 0.0 }) / n)
                .collect()
        })
        .collect();
    (loss / n, grads)
}

/// Pluggable node classifier.
pub trait NodeClassifier {
    fn logits(&self, g: &RegionGraph) -> Result<BTreeMap<u32, Vec<f64>>>;

    fn predict(&self, g: &RegionGraph) -> Result<BTreeMap<u32, ClassLabel>> {
        Ok(self
            .logits(g)?
            .into_iter()
            .map(|(id, l)| {
                let best = l
                    .iter()
                    .enumerate()
                    .fold(
                        (0, f64::NEG_INFINITY),
                        |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc },
                    )
                    .0;
                (
                    id,
                    ClassLabel::from_index(best).expect("logit count equals class count"),
                )
            })
            .collect())
    }
}

impl NodeClassifier for ClassifierModel {
    fn logits(&self, g: &RegionGraph) -> Result<BTreeMap<u32, Vec<f64>>> {
        let input = GraphInput::new(g, &self.standardizer)?;
        let logits = self.forward(&input);
        Ok(input.ids.into_iter().zip(logits).collect())
    }
}

/// Training sample: prepared input plus one class index per node.
#[derive(Debug, Clone)]
pub struct Sample {
    pub input: GraphInput,
    pub targets: Vec<usize>,
}

fn targets_of(g: &RegionGraph) -> Result<Vec<usize>> {
    g.nodes
        .iter()
        .map(|(id, n)| {
            n.label
                .map(|l| l.index())
                .ok_or(ClassifyError::Unlabeled(*id))
        })
        .collect()
}

pub fn make_samples(graphs: &[RegionGraph], s: &Standardizer) -> Result<Vec<Sample>> {
    graphs
        .iter()
        .map(|g| {
            Ok(Sample {
                input: GraphInput::new(g, s)?,
                targets: targets_of(g)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub initial_loss: f64,
    pub epoch_losses: Vec<f64>,
    pub validation_losses: Vec<f64>,
    /// Epoch (1-based) whose parameters were returned; 0 means initial.
    pub selected_epoch: usize,
}

fn mean_loss(m: &ClassifierModel, samples: &[Sample]) -> f64 {
    samples
        .iter()
        .map(|s| m.loss(&s.input, &s.targets))
        .sum::<f64>()
        / samples.len().max(1) as f64
}

/// Gradient-descent training on labeled graphs. With a validation set the
/// parameters of the epoch with the lowest validation loss are returned.
pub fn train(
    graphs: &[RegionGraph],
    validation: Option<&[RegionGraph]>,
    model_cfg: ModelConfig,
    cfg: &TrainConfig,
) -> Result<(ClassifierModel, TrainReport)> {
    cfg.validate()?;
    if graphs.is_empty() {
        return Err(ClassifyError::NoGraphs);
    }
    let log_dims: Vec<usize> = if cfg.log_scale {
        vec![0, 1]
    } else {
        Vec::new()
    };
    let (standardizer, _) = standardize(graphs, &log_dims)?;
    let mcfg = ModelConfig {
        input_dim: standardizer.mean.len(),
        ..model_cfg
    };
    let mut model = ClassifierModel::new(mcfg, standardizer.clone());
    let samples = make_samples(graphs, &standardizer)?;
    let val = match validation {
        Some(v) if !v.is_empty() => Some(make_samples(v, &standardizer)?),
        _ => None,
    };
    let mut report = TrainReport {
        initial_loss: mean_loss(&model, &samples),
        ..Default::default()
    };
    let mut best = val
        .as_ref()
        .map(|v| (mean_loss(&model, v), model.params.clone(), 0));

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let np = model.params.len();
    let (mut m1, mut m2) = (vec![0.0; np], vec![0.0; np]);
    let mut step = 0i32;
    let mut order: Vec<usize> = (0..samples.len()).collect();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut g = vec![0.0; np];
            for &i in batch {
                let (l, gi) = model.loss_and_grad(&samples[i].input, &samples[i].targets);
                epoch_loss += l;
                for (a, b) in g.iter_mut().zip(&gi) {
                    *a += b / batch.len() as f64;
                }
            }
            step += 1;
            match cfg.optimizer {
                Optimizer::Sgd => {
                    for (p, gv) in model.params.iter_mut().zip(&g) {
                        *p -= cfg.learning_rate * gv;
                    }
                }
                Optimizer::Adam { beta1, beta2, eps } => {
                    let c1 = 1.0 - beta1.powi(step);
                    let c2 = 1.0 - beta2.powi(step);
                    for i in 0..np {
                        m1[i] = beta1 * m1[i] + (1.0 - beta1) * g[i];
                        m2[i] = beta2 * m2[i] + (1.0 - beta2) * g[i] * g[i];
                        model.params[i] -=
                            cfg.learning_rate * (m1[i] / c1) / ((m2[i] / c2).sqrt() + eps);
                    }
                }
            }
        }
        let epoch_loss = epoch_loss / samples.len() as f64;
        log::debug!("epoch {epoch}: train loss {epoch_loss:.5}");
        report.epoch_losses.push(epoch_loss);
        if let Some(v) = &val {
            let vl = mean_loss(&model, v);
            report.validation_losses.push(vl);
            if let Some(b) = best.as_mut() {
                if vl < b.0 {
                    *b = (vl, model.params.clone(), epoch);
                }
            }
        }
    }
    report.selected_epoch = cfg.epochs;
    if let Some((_, params, epoch)) = best {
        model.params = params;
        report.selected_epoch = epoch;
    }
    Ok((model, report))
}

/// Largest relative deviation between analytic gradients and central
/// differences (step `1e-5`) over `samples` randomly drawn parameters.
/// Parameters whose perturbation flips a ReLU are redrawn. The relative
/// error uses `max(|a|, |n|, 1e-8)` as denominator.
pub fn gradient_check(
    m: &ClassifierModel,
    g: &GraphInput,
    targets: &[usize],
    samples: usize,
    seed: u64,
) -> f64 {
    const H: f64 = 1e-5;
    let (_, grad) = m.loss_and_grad(g, targets);
    let base_pattern = m.relu_pattern(g, &m.params);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = m.params.clone();
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    let mut attempts = 0;
    while checked < samples && attempts < samples * 50 {
        attempts += 1;
        let i = rng.gen_range(0..params.len());
        let orig = params[i];
        params[i] = orig + H;
        let kink_plus = m.relu_pattern(g, &params) != base_pattern;
        let lp = m.loss_with(g, targets, &params);
        params[i] = orig - H;
        let kink_minus = m.relu_pattern(g, &params) != base_pattern;
        let lm = m.loss_with(g, targets, &params);
        params[i] = orig;
        if kink_plus || kink_minus {
            continue;
        }
        let numeric = (lp - lm) / (2.0 * H);
        let denom = grad[i].abs().max(numeric.abs()).max(1e-8);
        worst = worst.max((grad[i] - numeric).abs() / denom);
        checked += 1;
    }
    worst
}

// ---- metrics --------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    /// `None` for classes absent from both prediction and truth.
    pub per_class_f1: Vec<Option<f64>>,
    pub per_class_iou: Vec<Option<f64>>,
    pub macro_f1_excl_outer: f64,
    pub macro_iou_excl_outer: f64,
    pub accuracy: f64,
    pub node_count: usize,
}

/// Accumulates node counts and areas over any number of graphs.
#[derive(Debug, Clone, Default)]
pub struct MetricAccumulator {
    tp: [usize; N_CLASSES],
    fp: [usize; N_CLASSES],
    fn_: [usize; N_CLASSES],
    inter: [f64; N_CLASSES],
    union: [f64; N_CLASSES],
    correct: usize,
    total: usize,
}

impl MetricAccumulator {
    pub fn add(
        &mut self,
        pred: &BTreeMap<u32, ClassLabel>,
        truth: &BTreeMap<u32, ClassLabel>,
        areas: &BTreeMap<u32, f64>,
    ) -> Result<()> {
        if pred.len() != truth.len() || pred.keys().any(|k| !truth.contains_key(k)) {
            return Err(ClassifyError::NodeSetMismatch);
        }
        for (id, &t) in truth {
            let p = pred[id];
            let a = areas.get(id).copied().unwrap_or(0.0);
            self.total += 1;
            if p == t {
                self.correct += 1;
                self.tp[t.index()] += 1;
                self.inter[t.index()] += a;
                self.union[t.index()] += a;
            } else {
                self.fp[p.index()] += 1;
                self.fn_[t.index()] += 1;
                self.union[p.index()] += a;
                self.union[t.index()] += a;
            }
        }
        Ok(())
    }

    pub fn report(&self) -> MetricReport {
        let mut f1 = Vec::with_capacity(N_CLASSES);
        let mut iou = Vec::with_capacity(N_CLASSES);
        for c in 0..N_CLASSES {
            let present = self.tp[c] + self.fp[c] + self.fn_[c] > 0;
            f1.push(present.then(|| {
                2.0 * self.tp[c] as f64 / (2 * self.tp[c] + self.fp[c] + self.fn_[c]) as f64
            }));
            iou.push(present.then(|| {
                if self.union[c] > 0.0 {
                    self.inter[c] / self.union[c]
                } else {
                    0.0
                }
            }));
        }
        let macro_of = |v: &[Option<f64>]| {
            let vals: Vec<f64> = v
                .iter()
                .enumerate()
                .filter(|(c, _)| *c != ClassLabel::OuterSpace.index())
                .filter_map(|(_, x)| *x)
                .collect();
            if vals.is_empty() {
                0.0
            } else {
                vals.iter().sum::<f64>() / vals.len() as f64
            }
        };
        MetricReport {
            macro_f1_excl_outer: macro_of(&f1),
            macro_iou_excl_outer: macro_of(&iou),
            per_class_f1: f1,
            per_class_iou: iou,
            accuracy: if self.total > 0 {
                self.correct as f64 / self.total as f64
            } else {
                0.0
            },
            node_count: self.total,
        }
    }
}

/// Node-level F1 and area-weighted IoU per class.
pub fn evaluate(
    pred: &BTreeMap<u32, ClassLabel>,
    truth: &BTreeMap<u32, ClassLabel>,
    areas: &BTreeMap<u32, f64>,
) -> Result<MetricReport> {
    let mut acc = MetricAccumulator::default();
    acc.add(pred, truth, areas)?;
    Ok(acc.report())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Point, PolygonWithHoles};
    use crate::ragbuild::{FeatureMeta, FeatureMode, FeatureVector, Node, Region};
    use crate::zernike::ZernikeFeatures;

    /// Synthetic graph with explicit features and edges.
    fn graph(feats: &[Vec<f64>], edges: &[(u32, u32, f64)], labels: &[ClassLabel]) -> RegionGraph {
        let mut nodes = BTreeMap::new();
        for (i, f) in feats.iter().enumerate() {
            let id = i as u32 + 1;
            let polygon = PolygonWithHoles::rect(0.0, 0.0, 1.0, 1.0).unwrap();
            nodes.insert(
                id,
                Node {
                    region: Region {
                        id,
                        polygon,
                        centroid: Point::new(0.5, 0.5),
                        area: f[1],
                        ink: false,
                    },
                    features: FeatureVector {
                        degree: f[0] as usize,
                        area: f[1],
                        zernike: ZernikeFeatures {
                            amplitudes: f[2..].to_vec(),
                        },
                    },
                    label: labels.get(i).copied(),
                },
            );
        }
        RegionGraph {
            width: 10,
            height: 10,
            nodes,
            edges: edges.to_vec(),
            outer_space: None,
            meta: FeatureMeta {
                mode: FeatureMode::Normalized,
                c: 0.5,
                n_max: 6,
                grid: 256,
            },
        }
    }

    fn feat(seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut v = vec![rng.gen_range(1..5) as f64, rng.gen_range(10.0..500.0)];
        v.extend((0..16).map(|_| rng.gen_range(0.0..0.3)));
        v
    }

    fn hollow_fixture() -> RegionGraph {
        let f = |d: f64, a: f64, z: f64| {
            let mut v = vec![d, a];
            v.extend((0..16).map(|k| z * (k as f64 + 1.0) / 16.0));
            v
        };
        graph(
            &[f(1.0, 500.0, 0.1), f(2.0, 204.0, 0.3), f(1.0, 196.0, 0.05)],
            &[(1, 2, 1.0), (2, 3, 1.5)],
            &[ClassLabel::OuterSpace, ClassLabel::Wall, ClassLabel::Room],
        )
    }

    fn random_graph(n: usize, seed: u64) -> RegionGraph {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let feats: Vec<Vec<f64>> = (0..n).map(|i| feat(seed * 100 + i as u64)).collect();
        let mut edges = Vec::new();
        for a in 1..=n as u32 {
            for b in a + 1..=n as u32 {
                if rng.gen_bool(0.25) {
                    edges.push((a, b, rng.gen_range(1.0..50.0)));
                }
            }
        }
        let labels: Vec<ClassLabel> = (0..n)
            .map(|_| ClassLabel::from_index(rng.gen_range(0..8)).unwrap())
            .collect();
        graph(&feats, &edges, &labels)
    }

    fn model_for(g: &RegionGraph, seed: u64) -> ClassifierModel {
        let (s, _) = standardize(std::slice::from_ref(g), &[0, 1]).unwrap();
        ClassifierModel::new(
            ModelConfig {
                seed,
                ..ModelConfig::default()
            },
            s,
        )
    }

    #[test]
    fn standardize_examples() {
        let g = graph(&[feat(1), feat(2), feat(3), feat(4)], &[], &[]);
        let (s, rows) = standardize(std::slice::from_ref(&g), &[]).unwrap();
        for d in 0..18 {
            let mean: f64 = rows[0].iter().map(|r| r[d]).sum::<f64>() / 4.0;
            assert!(mean.abs() < 1e-9);
        }
        // constant column maps to zero with unit scale
        let mut fs = vec![feat(5), feat(6)];
        fs[0][5] = 0.2;
        fs[1][5] = 0.2;
        let g = graph(&fs, &[], &[]);
        let (s2, rows) = standardize(std::slice::from_ref(&g), &[]).unwrap();
        assert_eq!(s2.scale[5], 1.0);
        assert_eq!(rows[0][0][5], 0.0);
        // refitting on standardized rows is close to identity
        let again = Standardizer::fit(
            &standardize(
                std::slice::from_ref(&graph(&[feat(1), feat(2), feat(3), feat(4)], &[], &[])),
                &[],
            )
            .unwrap()
            .1[0],
            &[],
        )
        .unwrap();
        for d in 0..18 {
            assert!(again.mean[d].abs() < 1e-9 && (again.scale[d] - 1.0).abs() < 1e-9);
        }
        assert_eq!(s.mean.len(), 18);
    }

    #[test]
    fn isolated_node_ignores_others() {
        let g1 = graph(&[feat(1), feat(2)], &[], &[]);
        let g2 = graph(&[feat(1), feat(9)], &[], &[]);
        let m = model_for(&g1, 3);
        let a = m.logits(&g1).unwrap();
        let b = m.logits(&g2).unwrap();
        assert_eq!(a[&1], b[&1]);
    }

    #[test]
    fn forward_is_permutation_equivariant() {
        let g = random_graph(12, 4);
        let m = model_for(&g, 5);
        let base = m.logits(&g).unwrap();
        // reverse ids: k -> 13 - k
        let perm = |k: u32| 13 - k;
        let mut nodes = BTreeMap::new();
        for (k, n) in &g.nodes {
            let mut n = n.clone();
            n.region.id = perm(*k);
            nodes.insert(perm(*k), n);
        }
        let mut edges: Vec<(u32, u32, f64)> = g
            .edges
            .iter()
            .map(|&(a, b, w)| (perm(a).min(perm(b)), perm(a).max(perm(b)), w))
            .collect();
        edges.sort_by_key(|e| (e.0, e.1));
        let pg = RegionGraph {
            nodes,
            edges,
            ..g.clone()
        };
        let out = m.logits(&pg).unwrap();
        for (k, l) in &base {
            assert_eq!(&out[&perm(*k)], l);
        }
    }

    #[test]
    fn edge_weight_scale_cancels() {
        let g = random_graph(10, 8);
        let m = model_for(&g, 1);
        let mut scaled = g.clone();
        for e in scaled.edges.iter_mut() {
            e.2 *= 4.0;
        }
        assert_eq!(m.logits(&g).unwrap(), m.logits(&scaled).unwrap());
    }

    #[test]
    fn gradient_check_fresh_and_trained() {
        let g = random_graph(15, 11);
        let m = model_for(&g, 2);
        let input = GraphInput::new(&g, &m.standardizer).unwrap();
        let t = targets_of(&g).unwrap();
        let err = gradient_check(&m, &input, &t, 100, 1);
        assert!(err < 1e-4, "fresh model rel err {err}");
        let cfg = TrainConfig {
            epochs: 10,
            ..TrainConfig::default()
        };
        let (trained, _) = train(std::slice::from_ref(&g), None, m.config, &cfg).unwrap();
        let input = GraphInput::new(&g, &trained.standardizer).unwrap();
        let err = gradient_check(&trained, &input, &t, 100, 2);
        assert!(err < 1e-4, "trained model rel err {err}");
    }

    #[test]
    fn tied_parameters_get_tied_gradients() {
        let g = hollow_fixture();
        let mut m = model_for(&g, 1);
        // every hidden unit identical: gradients must match row by row
        let shapes = m.shapes();
        for s in &shapes {
            let fan = if s.output == N_CLASSES {
                s.input
            } else {
                2 * s.input
            };
            for o in 0..s.output {
                for i in 0..fan {
                    m.params[s.w + o * fan + i] = if s.output == N_CLASSES { 0.01 } else { 0.05 };
                }
                m.params[s.b + o] = 0.01;
            }
        }
        let input = GraphInput::new(&g, &m.standardizer).unwrap();
        let (_, grad) = m.loss_and_grad(&input, &[1, 1, 1]);
        let s = shapes[2];
        let fan = 2 * s.input;
        for o in 1..s.output {
            for i in 0..fan {
                let a = grad[s.w + i];
                let b = grad[s.w + o * fan + i];
                assert!((a - b).abs() <= 1e-12 * a.abs().max(1e-12));
            }
        }
    }

    #[test]
    fn training_reduces_loss_and_is_deterministic() {
        let graphs: Vec<RegionGraph> = (0..4).map(|i| random_graph(12, 20 + i)).collect();
        let cfg = TrainConfig::default();
        let (m1, r1) = train(&graphs, None, ModelConfig::default(), &cfg).unwrap();
        let (m2, _) = train(&graphs, None, ModelConfig::default(), &cfg).unwrap();
        assert_eq!(m1.params, m2.params);
        assert!(r1.epoch_losses.last().unwrap() < &r1.initial_loss);
        assert!(train(&[], None, ModelConfig::default(), &cfg).is_err());
    }

    #[test]
    fn overfits_hollow_square() {
        let g = hollow_fixture();
        let cfg = TrainConfig {
            epochs: 200,
            ..TrainConfig::default()
        };
        let (m, _) = train(std::slice::from_ref(&g), None, ModelConfig::default(), &cfg).unwrap();
        assert_eq!(m.predict(&g).unwrap(), g.labels());
    }

    #[test]
    fn validation_selects_best_epoch() {
        let train_g: Vec<RegionGraph> = (0..3).map(|i| random_graph(10, 40 + i)).collect();
        let val_g = vec![random_graph(10, 99)];
        let cfg = TrainConfig {
            epochs: 15,
            ..TrainConfig::default()
        };
        let (m, r) = train(&train_g, Some(&val_g), ModelConfig::default(), &cfg).unwrap();
        assert_eq!(r.validation_losses.len(), 15);
        let s = make_samples(&val_g, &m.standardizer).unwrap();
        let best = r
            .validation_losses
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        let got = mean_loss(&m, &s);
        if r.selected_epoch > 0 {
            assert_eq!(got, best);
        }
    }

    #[test]
    fn model_json_round_trip() {
        let g = hollow_fixture();
        let m = model_for(&g, 9);
        let back = ClassifierModel::from_json(&m.to_json()).unwrap();
        assert_eq!(back, m);
        let mut bad = m.clone();
        bad.params.pop();
        assert!(ClassifierModel::from_json(&bad.to_json()).is_err());
    }

    #[test]
    fn metric_examples() {
        let ids = [1u32, 2, 3, 4];
        let truth: BTreeMap<u32, ClassLabel> = ids
            .iter()
            .zip([
                ClassLabel::Room,
                ClassLabel::Wall,
                ClassLabel::Room,
                ClassLabel::Door,
            ])
            .map(|(&i, c)| (i, c))
            .collect();
        let areas: BTreeMap<u32, f64> = ids.iter().map(|&i| (i, 10.0 * i as f64)).collect();
        let r = evaluate(&truth, &truth, &areas).unwrap();
        for c in [0, 1, 2] {
            assert_eq!(r.per_class_f1[c], Some(1.0));
            assert_eq!(r.per_class_iou[c], Some(1.0));
        }
        assert_eq!(r.per_class_f1[3], None);
        assert_eq!(r.macro_f1_excl_outer, 1.0);

        let all_room: BTreeMap<u32, ClassLabel> =
            ids.iter().map(|&i| (i, ClassLabel::Room)).collect();
        let r = evaluate(&all_room, &truth, &areas).unwrap();
        assert_eq!(r.per_class_f1[1], Some(0.0));
        // room: P = 2/4, R = 1 -> F1 = 2/3
        assert!((r.per_class_f1[0].unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert!((r.per_class_iou[0].unwrap() - 40.0 / 100.0).abs() < 1e-12);

        let mut fewer = truth.clone();
        fewer.remove(&4);
        assert!(evaluate(&fewer, &truth, &areas).is_err());
    }

    #[test]
    fn outer_space_excluded_from_macro() {
        let truth: BTreeMap<u32, ClassLabel> = [(1, ClassLabel::Room), (2, ClassLabel::OuterSpace)]
            .into_iter()
            .collect();
        let pred: BTreeMap<u32, ClassLabel> = [(1, ClassLabel::Room), (2, ClassLabel::Room)]
            .into_iter()
            .collect();
        let areas = BTreeMap::new();
        let r = evaluate(&pred, &truth, &areas).unwrap();
        assert!((r.macro_f1_excl_outer - 2.0 / 3.0).abs() < 1e-12);
    }
}
