//! Two-layer graph convolutional scorer used as a supervised ceiling.
//!
//! A case becomes a graph whose adjacency is the symmetrized self-entailment
//! matrix, or the self/cross block matrix when verifier answers are present.
//! Node features are `[1, degree / size, verifier indicator]`.
//!
//! ```text
//! Â  = D^{-1/2} A D^{-1/2}
//! H1 = relu(Â X W1)
//! H2 = relu(Â H1 W2)
//! o  = sigmoid(mean_i (H2 w_out)_i + b_out)
//! ```
//!
//! Gradients of the binary cross-entropy are computed analytically.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::consistency::{EntailmentMatrix, QuestionCase};
use crate::error::{invalid, Error, Result};
use crate::evaluation::{aurac, auroc};
use crate::linalg::Matrix;

pub const FEATURE_DIM: usize = 3;
pub const CHECKPOINT_VERSION: u32 = 1;
pub const MIN_CEILING_CASES: usize = 40;

#[derive(Debug, Clone, PartialEq)]
pub struct ConsistencyGraph {
    adjacency: Matrix<f64>,
    features: Matrix<f64>,
    norm_adj: Matrix<f64>,
    /// `Â X`, constant for a graph.
    propagated: Matrix<f64>,
}

impl ConsistencyGraph {
    /// Builds a graph from a symmetric adjacency with entries in `[0, 1]`
    /// and a per-node verifier indicator.
    pub fn from_adjacency(adjacency: Matrix<f64>, verifier: &[bool]) -> Result<Self> {
        let n = adjacency.rows();
        if !adjacency.is_square() || n == 0 {
            return Err(Error::Shape {
                rows: adjacency.rows(),
                cols: adjacency.cols(),
            });
        }
        if verifier.len() != n {
            return Err(invalid("verifier", format!("{} indicators for {n} nodes", verifier.len())));
        }
        for i in 0..n {
            for j in 0..n {
                let v = adjacency[(i, j)];
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::Range { row: i, col: j, value: v });
                }
            }
        }
        if !adjacency.is_symmetric(0.0) {
            return Err(invalid("adjacency", "must be symmetric"));
        }
        let degree: Vec<f64> = (0..n).map(|i| adjacency.row(i).iter().sum()).collect();
        let inv_sqrt: Vec<f64> = degree
            .iter()
            .map(|&d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 })
            .collect();
        let norm_adj = Matrix::from_fn(n, n, |i, j| inv_sqrt[i] * adjacency[(i, j)] * inv_sqrt[j]);
        let features = Matrix::from_fn(n, FEATURE_DIM, |i, k| match k {
            0 => 1.0,
            1 => degree[i] / n as f64,
            _ => f64::from(u8::from(verifier[i])),
        });
        let propagated = norm_adj.matmul(&features);
        Ok(Self {
            adjacency,
            features,
            norm_adj,
            propagated,
        })
    }

    pub fn adjacency(&self) -> &Matrix<f64> {
        &self.adjacency
    }

    pub fn node_features(&self) -> &Matrix<f64> {
        &self.features
    }

    pub fn normalized_adjacency(&self) -> &Matrix<f64> {
        &self.norm_adj
    }

    pub fn n_nodes(&self) -> usize {
        self.adjacency.rows()
    }
}

/// Self-only graph from `sym(P_self)`, or the `2m × 2m` block graph
/// `sym([[P_self, P_cross], [P_crossᵀ, I]])` when `p_cross` is given.
pub fn build_graph(p_self: &EntailmentMatrix<f64>, p_cross: Option<&EntailmentMatrix<f64>>) -> Result<ConsistencyGraph> {
    let m = p_self.m();
    let Some(cross) = p_cross else {
        return ConsistencyGraph::from_adjacency(p_self.symmetrize().entries().clone(), &vec![false; m]);
    };
    if cross.m() != m {
        return Err(invalid("p_cross", format!("size {} does not match p_self size {m}", cross.m())));
    }
    let n = 2 * m;
    let raw = Matrix::from_fn(n, n, |i, j| match (i < m, j < m) {
        (true, true) => p_self.get(i, j),
        (true, false) => cross.get(i, j - m),
        (false, true) => cross.get(j, i - m),
        (false, false) => f64::from(u8::from(i == j)),
    });
    let adjacency = Matrix::from_fn(n, n, |i, j| (raw[(i, j)] + raw[(j, i)]) / 2.0);
    let indicator: Vec<bool> = (0..n).map(|i| i >= m).collect();
    ConsistencyGraph::from_adjacency(adjacency, &indicator)
}

pub fn case_graph(case: &QuestionCase, use_cross: bool) -> Result<ConsistencyGraph> {
    let cross = if use_cross { Some(case.require_cross()?) } else { None };
    build_graph(case.require_self()?, cross)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GcnParams {
    /// `3 × d_h`.
    pub w1: Matrix<f64>,
    /// `d_h × d_h`.
    pub w2: Matrix<f64>,
    pub w_out: Vec<f64>,
    pub b_out: f64,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format_version: u32,
    d_in: usize,
    d_h: usize,
    w1: Vec<Vec<f64>>,
    w2: Vec<Vec<f64>>,
    w_out: Vec<f64>,
    b_out: f64,
}

impl GcnParams {
    pub fn zeros(d_h: usize) -> Self {
        Self {
            w1: Matrix::zeros(FEATURE_DIM, d_h),
            w2: Matrix::zeros(d_h, d_h),
            w_out: vec![0.0; d_h],
            b_out: 0.0,
        }
    }

    /// Xavier-uniform weights and zero bias.
    pub fn xavier(d_h: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |fan_in: usize, fan_out: usize| {
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            rng.random_range(-limit..=limit)
        };
        let w1 = Matrix::from_fn(FEATURE_DIM, d_h, |_, _| draw(FEATURE_DIM, d_h));
        let w2 = Matrix::from_fn(d_h, d_h, |_, _| draw(d_h, d_h));
        let w_out = (0..d_h).map(|_| draw(d_h, 1)).collect();
        Self { w1, w2, w_out, b_out: 0.0 }
    }

    pub fn d_h(&self) -> usize {
        self.w_out.len()
    }

    pub fn n_params(&self) -> usize {
        let h = self.d_h();
        FEATURE_DIM * h + h * h + h + 1
    }

    pub fn validate(&self) -> Result<()> {
        let h = self.d_h();
        if h == 0 {
            return Err(invalid("d_h", "must be positive"));
        }
        if (self.w1.rows(), self.w1.cols()) != (FEATURE_DIM, h) || (self.w2.rows(), self.w2.cols()) != (h, h) {
            return Err(invalid("gcn params", "weight shapes disagree with d_h"));
        }
        if !self.to_flat().iter().all(|x| x.is_finite()) {
            return Err(invalid("gcn params", "non-finite entry"));
        }
        Ok(())
    }

    /// `[w1 row-major, w2 row-major, w_out, b_out]`.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.n_params());
        v.extend_from_slice(self.w1.as_slice());
        v.extend_from_slice(self.w2.as_slice());
        v.extend_from_slice(&self.w_out);
        v.push(self.b_out);
        v
    }

    pub fn from_flat(d_h: usize, flat: &[f64]) -> Result<Self> {
        let expected = Self::zeros(d_h).n_params();
        if flat.len() != expected {
            return Err(invalid("flat params", format!("{} values, expected {expected}", flat.len())));
        }
        let (a, rest) = flat.split_at(FEATURE_DIM * d_h);
        let (b, rest) = rest.split_at(d_h * d_h);
        let (c, d) = rest.split_at(d_h);
        Ok(Self {
            w1: Matrix::from_vec(FEATURE_DIM, d_h, a.to_vec()),
            w2: Matrix::from_vec(d_h, d_h, b.to_vec()),
            w_out: c.to_vec(),
            b_out: d[0],
        })
    }

    pub fn to_json(&self) -> Result<String> {
        let ck = Checkpoint {
            format_version: CHECKPOINT_VERSION,
            d_in: FEATURE_DIM,
            d_h: self.d_h(),
            w1: self.w1.to_rows(),
            w2: self.w2.to_rows(),
            w_out: self.w_out.clone(),
            b_out: self.b_out,
        };
        serde_json::to_string_pretty(&ck).map_err(|e| invalid("checkpoint", e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_str(text).map_err(|e| invalid("checkpoint", e.to_string()))?;
        if ck.format_version != CHECKPOINT_VERSION {
            return Err(invalid("checkpoint", format!("unsupported format_version {}", ck.format_version)));
        }
        if ck.d_in != FEATURE_DIM {
            return Err(invalid("checkpoint", format!("d_in {} != {FEATURE_DIM}", ck.d_in)));
        }
        let shape_err = || invalid("checkpoint", "weight shapes disagree with header");
        let w1 = Matrix::from_rows(&ck.w1).ok_or_else(shape_err)?;
        let w2 = Matrix::from_rows(&ck.w2).ok_or_else(shape_err)?;
        if ck.w_out.len() != ck.d_h {
            return Err(shape_err());
        }
        let params = Self {
            w1,
            w2,
            w_out: ck.w_out,
            b_out: ck.b_out,
        };
        params.validate()?;
        Ok(params)
    }

    fn axpy(&mut self, a: f64, other: &Self) {
        let flat: Vec<f64> = self.to_flat().iter().zip(other.to_flat()).map(|(x, y)| x + a * y).collect();
        *self = Self::from_flat(self.d_h(), &flat).expect("same shape");
    }
}

struct Forward {
    z1: Matrix<f64>,
    ah1: Matrix<f64>,
    z2: Matrix<f64>,
    h2: Matrix<f64>,
    logit: f64,
}

fn relu(m: &Matrix<f64>) -> Matrix<f64> {
    m.map(|x| x.max(0.0))
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn check_dims(params: &GcnParams, graph: &ConsistencyGraph) {
    assert_eq!(params.w1.rows(), graph.features.cols(), "feature dimension mismatch");
}

fn forward(params: &GcnParams, graph: &ConsistencyGraph) -> Forward {
    check_dims(params, graph);
    let z1 = graph.propagated.matmul(&params.w1);
    let h1 = relu(&z1);
    let ah1 = graph.norm_adj.matmul(&h1);
    let z2 = ah1.matmul(&params.w2);
    let h2 = relu(&z2);
    let n = graph.n_nodes();
    let pooled: f64 = (0..n)
        .map(|i| h2.row(i).iter().zip(&params.w_out).map(|(a, b)| a * b).sum::<f64>())
        .sum::<f64>()
        / n as f64;
    Forward {
        z1,
        ah1,
        z2,
        h2,
        logit: pooled + params.b_out,
    }
}

pub fn gcn_logit(params: &GcnParams, graph: &ConsistencyGraph) -> f64 {
    forward(params, graph).logit
}

/// Predicted hallucination probability.
pub fn gcn_forward(params: &GcnParams, graph: &ConsistencyGraph) -> f64 {
    sigmoid(gcn_logit(params, graph))
}

/// Smallest absolute hidden pre-activation; the output is smooth in the
/// parameters while this stays away from zero.
pub fn activation_margin(params: &GcnParams, graph: &ConsistencyGraph) -> f64 {
    let f = forward(params, graph);
    f.z1.as_slice()
        .iter()
        .chain(f.z2.as_slice())
        .fold(f64::INFINITY, |m, z| m.min(z.abs()))
}

/// Binary cross-entropy of the prediction against `label`.
pub fn gcn_loss(params: &GcnParams, graph: &ConsistencyGraph, label: bool) -> f64 {
    let z = gcn_logit(params, graph);
    softplus(z) - if label { z } else { 0.0 }
}

/// Analytic gradient of [`gcn_loss`] with respect to every parameter.
pub fn gcn_grad(params: &GcnParams, graph: &ConsistencyGraph, label: bool) -> GcnParams {
    let f = forward(params, graph);
    let n = graph.n_nodes();
    let h = params.d_h();
    let g = sigmoid(f.logit) - f64::from(u8::from(label));

    let mut w_out = vec![0.0; h];
    for i in 0..n {
        for (k, w) in w_out.iter_mut().enumerate() {
            *w += f.h2[(i, k)];
        }
    }
    w_out.iter_mut().for_each(|w| *w *= g / n as f64);

    let dz2 = Matrix::from_fn(n, h, |i, k| {
        if f.z2[(i, k)] > 0.0 {
            g * params.w_out[k] / n as f64
        } else {
            0.0
        }
    });
    let w2 = f.ah1.transpose().matmul(&dz2);
    // Â is symmetric, so Âᵀ dZ2 = Â dZ2
    let dh1 = graph.norm_adj.matmul(&dz2).matmul(&params.w2.transpose());
    let dz1 = Matrix::from_fn(n, h, |i, k| if f.z1[(i, k)] > 0.0 { dh1[(i, k)] } else { 0.0 });
    let w1 = graph.propagated.transpose().matmul(&dz1);
    GcnParams { w1, w2, w_out, b_out: g }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    /// Plain full-batch gradient descent.
    Gd,
    /// Full-batch gradient descent with Adam step sizes.
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub d_h: usize,
    pub seed: u64,
    pub patience: usize,
    pub optimizer: Optimizer,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 0.05,
            epochs: 2000,
            d_h: 16,
            seed: 0,
            patience: 100,
            optimizer: Optimizer::Gd,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(invalid("lr", format!("{} must be positive", self.lr)));
        }
        if self.d_h == 0 {
            return Err(invalid("d_h", "must be positive"));
        }
        Ok(())
    }
}

pub type LabeledGraph = (ConsistencyGraph, bool);

pub fn graphs_from_cases(cases: &[QuestionCase], use_cross: bool) -> Result<Vec<LabeledGraph>> {
    cases
        .par_iter()
        .map(|c| Ok((case_graph(c, use_cross)?, c.require_label()?)))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub params: GcnParams,
    pub val_auroc: f64,
    pub best_epoch: usize,
    pub epochs_run: usize,
}

pub fn predict(params: &GcnParams, graphs: &[LabeledGraph]) -> Vec<f64> {
    graphs.par_iter().map(|(g, _)| gcn_forward(params, g)).collect()
}

fn labels_of(graphs: &[LabeledGraph]) -> Vec<bool> {
    graphs.iter().map(|(_, y)| *y).collect()
}

/// Mean BCE over a batch.
pub fn batch_loss(params: &GcnParams, graphs: &[LabeledGraph]) -> f64 {
    let losses: Vec<f64> = graphs.par_iter().map(|(g, y)| gcn_loss(params, g, *y)).collect();
    losses.iter().sum::<f64>() / graphs.len() as f64
}

/// Mean gradient over a batch; summed in input order so results do not
/// depend on thread scheduling.
pub fn batch_grad(params: &GcnParams, graphs: &[LabeledGraph]) -> GcnParams {
    let grads: Vec<GcnParams> = graphs.par_iter().map(|(g, y)| gcn_grad(params, g, *y)).collect();
    let mut total = vec![0.0; params.n_params()];
    for grad in &grads {
        for (t, x) in total.iter_mut().zip(grad.to_flat()) {
            *t += x;
        }
    }
    let scale = 1.0 / graphs.len() as f64;
    total.iter_mut().for_each(|t| *t *= scale);
    GcnParams::from_flat(params.d_h(), &total).expect("same shape")
}

/// Full-batch training on mean BCE with early stopping on validation AUROC.
/// Returns the parameters of the best validation epoch.
pub fn train(train_set: &[LabeledGraph], val_set: &[LabeledGraph], cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::EmptyScores);
    }
    let val_labels = labels_of(val_set);
    let mut params = GcnParams::xavier(cfg.d_h, cfg.seed);
    let mut best = TrainOutcome {
        val_auroc: auroc(&predict(&params, val_set), &val_labels)?,
        params: params.clone(),
        best_epoch: 0,
        epochs_run: 0,
    };

    let (beta1, beta2, adam_eps): (f64, f64, f64) = (0.9, 0.999, 1e-8);
    let mut m1 = vec![0.0; params.n_params()];
    let mut m2 = vec![0.0; params.n_params()];

    for epoch in 1..=cfg.epochs {
        let grad = batch_grad(&params, train_set);
        match cfg.optimizer {
            Optimizer::Gd => params.axpy(-cfg.lr, &grad),
            Optimizer::Adam => {
                let g = grad.to_flat();
                let mut flat = params.to_flat();
                let t = epoch as i32;
                let (c1, c2) = (1.0 - beta1.powi(t), 1.0 - beta2.powi(t));
                for k in 0..flat.len() {
                    m1[k] = beta1 * m1[k] + (1.0 - beta1) * g[k];
                    m2[k] = beta2 * m2[k] + (1.0 - beta2) * g[k] * g[k];
                    flat[k] -= cfg.lr * (m1[k] / c1) / ((m2[k] / c2).sqrt() + adam_eps);
                }
                params = GcnParams::from_flat(cfg.d_h, &flat)?;
            }
        }
        best.epochs_run = epoch;
        let score = auroc(&predict(&params, val_set), &val_labels)?;
        if score > best.val_auroc {
            best.val_auroc = score;
            best.params = params.clone();
            best.best_epoch = epoch;
        } else if epoch - best.best_epoch >= cfg.patience {
            break;
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CeilingReport {
    pub auroc: f64,
    pub aurac: f64,
    pub val_auroc: f64,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
}

/// Stratified 50/25/25 split of `0..labels.len()`, shuffled per class.
pub fn stratified_split(labels: &[bool], seed: u64) -> (Vec<usize>, Vec<usize>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut val, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for class in [false, true] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        idx.shuffle(&mut rng);
        let n = idx.len();
        let (a, b) = (n / 2, n / 2 + n / 4);
        train.extend_from_slice(&idx[..a]);
        val.extend_from_slice(&idx[a..b]);
        test.extend_from_slice(&idx[b..]);
    }
    (train, val, test)
}

/// Trains on half the cases, early-stops on a quarter and reports the
/// learned scorer's AUROC and AURAC on the remaining quarter.
pub fn ceiling_estimate(
    cases: &[QuestionCase],
    use_cross: bool,
    split_seed: u64,
    cfg: &TrainConfig,
) -> Result<CeilingReport> {
    if cases.len() < MIN_CEILING_CASES {
        return Err(invalid("cases", format!("{} cases, need at least {MIN_CEILING_CASES}", cases.len())));
    }
    let graphs = graphs_from_cases(cases, use_cross)?;
    let labels = labels_of(&graphs);
    let (tr, va, te) = stratified_split(&labels, split_seed);
    let pick = |idx: &[usize]| idx.iter().map(|&i| graphs[i].clone()).collect::<Vec<_>>();
    let (train_set, val_set, test_set) = (pick(&tr), pick(&va), pick(&te));
    let outcome = train(&train_set, &val_set, cfg)?;
    let scores = predict(&outcome.params, &test_set);
    let test_labels = labels_of(&test_set);
    Ok(CeilingReport {
        auroc: auroc(&scores, &test_labels)?,
        aurac: aurac(&scores, &test_labels)?,
        val_auroc: outcome.val_auroc,
        n_train: train_set.len(),
        n_val: val_set.len(),
        n_test: test_set.len(),
    })
}
