//! Comparison rankers: pairwise RankNet and a pointwise logistic classifier.
//!
//! Both are trained by deterministic full-batch gradient descent. Ranking
//! scores are raw outputs (logits for the logistic model), which avoids ties
//! from sigmoid saturation.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::QueryGroup;
use crate::error::{Error, Result};
use crate::linalg::dot;
use crate::pairgen::PairSet;
use crate::{seeded_rng, Scorer};

/// A loss this many times above the starting loss counts as divergence.
const DIVERGENCE_FACTOR: f64 = 1e3;

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
pub fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HiddenLayer {
    /// Row-major `width × dim`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Scorer with either no hidden layer (linear) or one rectified hidden layer.
#[derive(Debug, Clone, PartialEq)]
pub struct RankNetModel {
    dim: usize,
    hidden: Option<HiddenLayer>,
    out_w: Vec<f64>,
    out_b: f64,
    /// Per-epoch training loss (empty for untrained models).
    pub losses: Vec<f64>,
}

impl RankNetModel {
    /// Linear scorer `wᵀx + b`.
    pub fn linear(w: Vec<f64>, b: f64) -> Self {
        Self {
            dim: w.len(),
            hidden: None,
            out_w: w,
            out_b: b,
            losses: Vec::new(),
        }
    }

    /// Randomly initialized model. `hidden_width == 0` gives a linear scorer
    /// with small random weights; otherwise He-initialized hidden weights.
    pub fn init(dim: usize, hidden_width: usize, seed: u64) -> Self {
        let mut rng = seeded_rng(seed);
        if hidden_width == 0 {
            let normal = Normal::new(0.0, 0.01).expect("valid std");
            let w = (0..dim).map(|_| normal.sample(&mut rng)).collect();
            return Self::linear(w, 0.0);
        }
        let he = Normal::new(0.0, (2.0 / dim as f64).sqrt()).expect("valid std");
        let out = Normal::new(0.0, (1.0 / hidden_width as f64).sqrt()).expect("valid std");
        let weights = (0..hidden_width * dim).map(|_| he.sample(&mut rng)).collect();
        let bias = (0..hidden_width).map(|_| rng.random_range(-0.1..0.1)).collect();
        let out_w = (0..hidden_width).map(|_| out.sample(&mut rng)).collect();
        Self {
            dim,
            hidden: Some(HiddenLayer { weights, bias }),
            out_w,
            out_b: 0.0,
            losses: Vec::new(),
        }
    }

    pub fn hidden_width(&self) -> usize {
        self.hidden.as_ref().map_or(0, |h| h.bias.len())
    }

    pub fn param_count(&self) -> usize {
        self.hidden.as_ref().map_or(0, |h| h.weights.len() + h.bias.len()) + self.out_w.len() + 1
    }

    /// Flat parameters: hidden weights, hidden bias, output weights, output bias.
    pub fn params(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.param_count());
        if let Some(h) = &self.hidden {
            p.extend_from_slice(&h.weights);
            p.extend_from_slice(&h.bias);
        }
        p.extend_from_slice(&self.out_w);
        p.push(self.out_b);
        p
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::DimensionMismatch {
                expected: self.param_count(),
                actual: params.len(),
            });
        }
        let mut rest = params;
        if let Some(h) = &mut self.hidden {
            let (w, r) = rest.split_at(h.weights.len());
            h.weights.copy_from_slice(w);
            let (b, r) = r.split_at(h.bias.len());
            h.bias.copy_from_slice(b);
            rest = r;
        }
        let (w, r) = rest.split_at(self.out_w.len());
        self.out_w.copy_from_slice(w);
        self.out_b = r[0];
        Ok(())
    }

    /// Hidden pre-activations for `x` (empty for linear models).
    pub fn pre_activations(&self, x: &[f64]) -> Vec<f64> {
        match &self.hidden {
            None => Vec::new(),
            Some(h) => h
                .weights
                .chunks(self.dim)
                .zip(&h.bias)
                .map(|(row, b)| dot(row, x) + b)
                .collect(),
        }
    }

    /// Adds `coef · ∂s(x)/∂θ` to `grad` (flat layout of [`Self::params`]).
    fn accumulate_score_grad(&self, x: &[f64], coef: f64, grad: &mut [f64]) {
        match &self.hidden {
            None => {
                for (g, xi) in grad.iter_mut().zip(x) {
                    *g += coef * xi;
                }
            }
            Some(h) => {
                let width = h.bias.len();
                let pre = self.pre_activations(x);
                let (gw, rest) = grad.split_at_mut(width * self.dim);
                let (gb, rest) = rest.split_at_mut(width);
                for j in 0..width {
                    if pre[j] > 0.0 {
                        let back = coef * self.out_w[j];
                        gb[j] += back;
                        for (g, xi) in gw[j * self.dim..(j + 1) * self.dim].iter_mut().zip(x) {
                            *g += back * xi;
                        }
                        rest[j] += coef * pre[j];
                    }
                }
            }
        }
        *grad.last_mut().expect("output bias") += coef;
    }

    pub fn to_json(&self) -> Result<String> {
        let file = BaselineFile {
            kind: BaselineKind::Ranknet,
            architecture: Architecture {
                dim: self.dim,
                hidden_width: self.hidden_width(),
                activation: (self.hidden.is_some()).then(|| "relu".to_string()),
            },
            params: self.params(),
            final_loss: self.losses.last().copied(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: BaselineFile = serde_json::from_str(text)?;
        if file.kind != BaselineKind::Ranknet {
            return Err(Error::InvalidConfig("not a RankNet model file".into()));
        }
        let arch = &file.architecture;
        let mut model = if arch.hidden_width == 0 {
            Self::linear(vec![0.0; arch.dim], 0.0)
        } else {
            Self {
                dim: arch.dim,
                hidden: Some(HiddenLayer {
                    weights: vec![0.0; arch.hidden_width * arch.dim],
                    bias: vec![0.0; arch.hidden_width],
                }),
                out_w: vec![0.0; arch.hidden_width],
                out_b: 0.0,
                losses: Vec::new(),
            }
        };
        model.set_params(&file.params)?;
        model.losses.extend(file.final_loss);
        Ok(model)
    }
}

impl Scorer for RankNetModel {
    fn dim(&self) -> usize {
        self.dim
    }

    fn score_unchecked(&self, x: &[f64]) -> f64 {
        match &self.hidden {
            None => dot(&self.out_w, x) + self.out_b,
            Some(_) => {
                let pre = self.pre_activations(x);
                pre.iter().zip(&self.out_w).map(|(a, w)| a.max(0.0) * w).sum::<f64>() + self.out_b
            }
        }
    }
}

/// Mean pairwise logistic loss `(1/n) Σ −ln σ(s_u − s_v)` and its gradient
/// with respect to [`RankNetModel::params`].
pub fn ranknet_loss_grad(model: &RankNetModel, pairs: &PairSet) -> Result<(f64, Vec<f64>)> {
    if pairs.dim() != model.dim {
        return Err(Error::DimensionMismatch {
            expected: model.dim,
            actual: pairs.dim(),
        });
    }
    let n = pairs.pair_count();
    if n == 0 {
        return Err(Error::EmptyPairSet);
    }
    let mut loss = 0.0;
    let mut grad = vec![0.0; model.param_count()];
    let mut coef = Vec::new();
    for q in pairs.queries() {
        if q.pairs.is_empty() {
            continue;
        }
        let scores: Vec<f64> = q.features.iter().map(|x| model.score_unchecked(x)).collect();
        coef.clear();
        coef.resize(scores.len(), 0.0);
        for p in &q.pairs {
            let z = scores[p.preferred] - scores[p.other];
            loss += softplus(-z);
            // d/dz of softplus(-z)
            let dz = -sigmoid(-z);
            coef[p.preferred] += dz;
            coef[p.other] -= dz;
        }
        for (x, &c) in q.features.iter().zip(&coef) {
            if c != 0.0 {
                model.accumulate_score_grad(x, c, &mut grad);
            }
        }
    }
    let inv_n = 1.0 / n as f64;
    grad.iter_mut().for_each(|g| *g *= inv_n);
    Ok((loss * inv_n, grad))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RankNetParams {
    pub lr: f64,
    pub epochs: usize,
    pub seed: u64,
    /// 0 for a linear scorer.
    pub hidden_width: usize,
}

impl Default for RankNetParams {
    fn default() -> Self {
        Self {
            lr: 0.1,
            epochs: 200,
            seed: 0,
            hidden_width: 0,
        }
    }
}

fn check_descent(lr: f64, epochs: usize) -> Result<()> {
    if !(lr.is_finite() && lr > 0.0) {
        return Err(Error::InvalidConfig(format!("learning rate must be positive, got {lr}")));
    }
    if epochs == 0 {
        return Err(Error::InvalidConfig("epochs must be at least 1".into()));
    }
    Ok(())
}

fn diverged(loss: f64, initial: f64) -> bool {
    !loss.is_finite() || loss > DIVERGENCE_FACTOR * initial.max(std::f64::consts::LN_2)
}

/// Full-batch gradient descent on the RankNet loss. `losses[e]` is the loss
/// after epoch `e`.
pub fn train_ranknet(pairs: &PairSet, params: &RankNetParams) -> Result<RankNetModel> {
    check_descent(params.lr, params.epochs)?;
    let mut model = RankNetModel::init(pairs.dim(), params.hidden_width, params.seed);
    let (initial, mut grad) = ranknet_loss_grad(&model, pairs)?;
    let mut theta = model.params();
    for epoch in 0..params.epochs {
        for (t, g) in theta.iter_mut().zip(&grad) {
            *t -= params.lr * g;
        }
        model.set_params(&theta)?;
        let (loss, g) = ranknet_loss_grad(&model, pairs)?;
        if diverged(loss, initial) || theta.iter().any(|t| !t.is_finite()) {
            return Err(Error::Diverged { epoch, loss });
        }
        model.losses.push(loss);
        grad = g;
    }
    Ok(model)
}

/// Pointwise logistic classifier scored by its logit `wᵀx + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticModel {
    pub w: Vec<f64>,
    pub bias: f64,
    pub losses: Vec<f64>,
}

impl LogisticModel {
    pub fn new(w: Vec<f64>, bias: f64) -> Self {
        Self {
            w,
            bias,
            losses: Vec::new(),
        }
    }

    pub fn probability(&self, x: &[f64]) -> Result<f64> {
        self.score(x).map(sigmoid)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut params = self.w.clone();
        params.push(self.bias);
        let file = BaselineFile {
            kind: BaselineKind::Logistic,
            architecture: Architecture {
                dim: self.w.len(),
                hidden_width: 0,
                activation: None,
            },
            params,
            final_loss: self.losses.last().copied(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: BaselineFile = serde_json::from_str(text)?;
        if file.kind != BaselineKind::Logistic {
            return Err(Error::InvalidConfig("not a logistic model file".into()));
        }
        let dim = file.architecture.dim;
        if file.params.len() != dim + 1 {
            return Err(Error::DimensionMismatch {
                expected: dim + 1,
                actual: file.params.len(),
            });
        }
        let mut model = Self::new(file.params[..dim].to_vec(), file.params[dim]);
        model.losses.extend(file.final_loss);
        Ok(model)
    }
}

impl Scorer for LogisticModel {
    fn dim(&self) -> usize {
        self.w.len()
    }

    fn score_unchecked(&self, x: &[f64]) -> f64 {
        dot(&self.w, x) + self.bias
    }
}

/// Mean cross-entropy and its gradient `[∂w..., ∂b]`.
pub fn logistic_loss_grad(model: &LogisticModel, xs: &[Vec<f64>], ys: &[u8]) -> Result<(f64, Vec<f64>)> {
    if xs.len() != ys.len() {
        return Err(Error::DimensionMismatch {
            expected: xs.len(),
            actual: ys.len(),
        });
    }
    if xs.is_empty() {
        return Err(Error::EmptyInput);
    }
    let dim = model.w.len();
    let mut loss = 0.0;
    let mut grad = vec![0.0; dim + 1];
    for (x, &y) in xs.iter().zip(ys) {
        if x.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: x.len(),
            });
        }
        let z = model.score_unchecked(x);
        let y = f64::from(y);
        loss += softplus(z) - y * z;
        let r = sigmoid(z) - y;
        for (g, xi) in grad.iter_mut().zip(x) {
            *g += r * xi;
        }
        grad[dim] += r;
    }
    let inv = 1.0 / xs.len() as f64;
    grad.iter_mut().for_each(|g| *g *= inv);
    Ok((loss * inv, grad))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LogisticParams {
    pub lr: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Standard deviation of the seeded initial weights; 0 starts from zero.
    pub init_scale: f64,
}

impl Default for LogisticParams {
    fn default() -> Self {
        Self {
            lr: 0.5,
            epochs: 500,
            seed: 0,
            init_scale: 0.0,
        }
    }
}

/// Full-batch gradient descent on mean cross-entropy.
pub fn train_logistic(xs: &[Vec<f64>], ys: &[u8], params: &LogisticParams) -> Result<LogisticModel> {
    check_descent(params.lr, params.epochs)?;
    let positives = ys.iter().filter(|&&y| y != 0).count();
    if positives == 0 || positives == ys.len() {
        return Err(Error::SingleClass);
    }
    let dim = xs.first().map_or(0, Vec::len);
    let w = if params.init_scale > 0.0 {
        let normal = Normal::new(0.0, params.init_scale)
            .map_err(|e| Error::InvalidConfig(e.to_string()))?;
        let mut rng = seeded_rng(params.seed);
        (0..dim).map(|_| normal.sample(&mut rng)).collect()
    } else {
        vec![0.0; dim]
    };
    let mut model = LogisticModel::new(w, 0.0);
    let (initial, mut grad) = logistic_loss_grad(&model, xs, ys)?;
    for epoch in 0..params.epochs {
        for (wi, g) in model.w.iter_mut().zip(&grad) {
            *wi -= params.lr * g;
        }
        model.bias -= params.lr * grad[dim];
        let (loss, g) = logistic_loss_grad(&model, xs, ys)?;
        if diverged(loss, initial) {
            return Err(Error::Diverged { epoch, loss });
        }
        model.losses.push(loss);
        grad = g;
    }
    Ok(model)
}

/// Flattens groups into pointwise `(features, golden label)` training data.
pub fn pointwise_examples<'a>(
    groups: impl IntoIterator<Item = &'a QueryGroup>,
    threshold: u32,
) -> (Vec<Vec<f64>>, Vec<u8>) {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for g in groups {
        for c in g.candidates() {
            xs.push(c.features.clone());
            ys.push(u8::from(c.relevance >= threshold));
        }
    }
    (xs, ys)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaselineKind {
    Ranknet,
    Logistic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Architecture {
    dim: usize,
    hidden_width: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    activation: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct BaselineFile {
    kind: BaselineKind,
    architecture: Architecture,
    params: Vec<f64>,
    #[serde(default)]
    final_loss: Option<f64>,
}
