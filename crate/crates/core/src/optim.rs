//! Parameter update rules and epoch-level minibatching.
//!
//! Gradients arriving from [`MlpModel::gradients`] are for the summed loss;
//! with [`Reduction::Mean`] each batch gradient is divided by the batch size
//! before the update, so learning rates are per-example.

use ndarray::{ArrayView2, Zip};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{loss_from_logits, ForwardPass, Gradients, MlpModel, ParamSet};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerKind {
    Gd,
    Momentum {
        mu: f64,
    },
    WeightDecay {
        lambda: f64,
        #[serde(default = "yes")]
        decay_biases: bool,
    },
    Sgd {
        batch_size: usize,
    },
    Adam {
        #[serde(default = "beta1")]
        beta1: f64,
        #[serde(default = "beta2")]
        beta2: f64,
        #[serde(default = "adam_eps")]
        eps: f64,
    },
}

fn yes() -> bool {
    true
}
fn beta1() -> f64 {
    0.9
}
fn beta2() -> f64 {
    0.999
}
fn adam_eps() -> f64 {
    1e-8
}

impl OptimizerKind {
    pub fn adam() -> Self {
        OptimizerKind::Adam {
            beta1: beta1(),
            beta2: beta2(),
            eps: adam_eps(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            OptimizerKind::Gd => "gd",
            OptimizerKind::Momentum { .. } => "momentum",
            OptimizerKind::WeightDecay { .. } => "weight_decay",
            OptimizerKind::Sgd { .. } => "sgd",
            OptimizerKind::Adam { .. } => "adam",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Reduction {
    Sum,
    #[default]
    Mean,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    #[serde(flatten)]
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    #[serde(default)]
    pub shuffle_seed: u64,
    #[serde(default)]
    pub reduction: Reduction,
}

impl OptimizerConfig {
    pub fn gd(learning_rate: f64) -> Self {
        Self {
            kind: OptimizerKind::Gd,
            learning_rate,
            shuffle_seed: 0,
            reduction: Reduction::Mean,
        }
    }

    pub fn with_kind(kind: OptimizerKind, learning_rate: f64) -> Self {
        Self {
            kind,
            ..Self::gd(learning_rate)
        }
    }

    /// Checks the ranges; `train_size` bounds the SGD batch size.
    pub fn validate(&self, train_size: usize) -> Result<()> {
        let bad = |m: String| Err(Error::Optimizer(m));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning rate must be positive, got {}", self.learning_rate));
        }
        match self.kind {
            OptimizerKind::Momentum { mu } if !(0.0..1.0).contains(&mu) => {
                bad(format!("momentum must lie in [0, 1), got {mu}"))
            }
            OptimizerKind::WeightDecay { lambda, .. } if !(lambda >= 0.0) => {
                bad(format!("weight decay must be non-negative, got {lambda}"))
            }
            OptimizerKind::Sgd { batch_size } if batch_size == 0 || batch_size > train_size => bad(
                format!("batch size must lie in 1..={train_size}, got {batch_size}"),
            ),
            OptimizerKind::Adam { beta1, beta2, eps }
                if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) || !(eps > 0.0) =>
            {
                bad("Adam needs beta1, beta2 in [0, 1) and eps > 0".into())
            }
            _ => Ok(()),
        }
    }

    fn is_full_batch(&self) -> bool {
        !matches!(self.kind, OptimizerKind::Sgd { .. })
    }
}

/// Per-parameter accumulators of the stateful update rules.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OptimizerState {
    pub velocity: Option<ParamSet>,
    pub first_moment: Option<ParamSet>,
    pub second_moment: Option<ParamSet>,
    pub steps: u64,
}

impl OptimizerState {
    pub fn new(model: &MlpModel, cfg: &OptimizerConfig) -> Self {
        let zeros = || Some(ParamSet::zeros_like(model));
        match cfg.kind {
            OptimizerKind::Momentum { .. } => Self {
                velocity: zeros(),
                ..Self::default()
            },
            OptimizerKind::Adam { .. } => Self {
                first_moment: zeros(),
                second_moment: zeros(),
                ..Self::default()
            },
            _ => Self::default(),
        }
    }
}

/// Applies one update in place.
pub fn step(
    model: &mut MlpModel,
    grads: &Gradients,
    state: &mut OptimizerState,
    cfg: &OptimizerConfig,
) -> Result<()> {
    if !grads.matches(model) {
        return Err(Error::ShapeMismatch);
    }
    let lr = cfg.learning_rate;
    match cfg.kind {
        OptimizerKind::Gd | OptimizerKind::Sgd { .. } => {
            for (p, g) in model.layers.iter_mut().zip(&grads.layers) {
                p.weights.scaled_add(-lr, &g.weights);
                p.bias.scaled_add(-lr, &g.bias);
            }
        }
        OptimizerKind::WeightDecay {
            lambda,
            decay_biases,
        } => {
            for (p, g) in model.layers.iter_mut().zip(&grads.layers) {
                Zip::from(&mut p.weights)
                    .and(&g.weights)
                    .for_each(|w, &g| *w -= lr * (g + lambda * *w));
                let bias_decay = if decay_biases { lambda } else { 0.0 };
                Zip::from(&mut p.bias)
                    .and(&g.bias)
                    .for_each(|b, &g| *b -= lr * (g + bias_decay * *b));
            }
        }
        OptimizerKind::Momentum { mu } => {
            let velocity = state.velocity.as_mut().ok_or(Error::UninitializedState)?;
            if !velocity.matches(model) {
                return Err(Error::ShapeMismatch);
            }
            for ((p, g), v) in model
                .layers
                .iter_mut()
                .zip(&grads.layers)
                .zip(&mut velocity.layers)
            {
                Zip::from(&mut p.weights)
                    .and(&g.weights)
                    .and(&mut v.weights)
                    .for_each(|w, &g, v| {
                        *v = mu * *v + g;
                        *w -= lr * *v;
                    });
                Zip::from(&mut p.bias)
                    .and(&g.bias)
                    .and(&mut v.bias)
                    .for_each(|b, &g, v| {
                        *v = mu * *v + g;
                        *b -= lr * *v;
                    });
            }
        }
        OptimizerKind::Adam { beta1, beta2, eps } => {
            let (m, v) = match (state.first_moment.as_mut(), state.second_moment.as_mut()) {
                (Some(m), Some(v)) => (m, v),
                _ => return Err(Error::UninitializedState),
            };
            if !m.matches(model) || !v.matches(model) {
                return Err(Error::ShapeMismatch);
            }
            let t = (state.steps + 1) as i32;
            let c1 = 1.0 - beta1.powi(t);
            let c2 = 1.0 - beta2.powi(t);
            let update = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
            };
            for (((p, g), m), v) in model
                .layers
                .iter_mut()
                .zip(&grads.layers)
                .zip(&mut m.layers)
                .zip(&mut v.layers)
            {
                Zip::from(&mut p.weights)
                    .and(&g.weights)
                    .and(&mut m.weights)
                    .and(&mut v.weights)
                    .for_each(|p, &g, m, v| update(p, g, m, v));
                Zip::from(&mut p.bias)
                    .and(&g.bias)
                    .and(&mut m.bias)
                    .and(&mut v.bias)
                    .for_each(|p, &g, m, v| update(p, g, m, v));
            }
        }
    }
    state.steps += 1;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub steps: usize,
    /// Summed loss over the batches, each evaluated before its update.
    pub loss: f64,
}

/// One full pass over `(inputs, labels)`. `epoch_index` seeds the SGD shuffle.
pub fn epoch(
    model: &mut MlpModel,
    inputs: ArrayView2<f64>,
    labels: &[i8],
    state: &mut OptimizerState,
    cfg: &OptimizerConfig,
    epoch_index: u64,
) -> Result<EpochStats> {
    run_epoch(model, inputs, labels, state, cfg, epoch_index, None)
}

/// As [`epoch`], reusing a forward pass of the current model over the whole
/// set when the update rule is full-batch.
pub(crate) fn run_epoch(
    model: &mut MlpModel,
    inputs: ArrayView2<f64>,
    labels: &[i8],
    state: &mut OptimizerState,
    cfg: &OptimizerConfig,
    epoch_index: u64,
    cached: Option<&ForwardPass>,
) -> Result<EpochStats> {
    let n = inputs.nrows();
    if n == 0 {
        return Err(Error::EmptyBatch);
    }
    if labels.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: labels.len(),
        });
    }
    let scale = |len: usize| match cfg.reduction {
        Reduction::Sum => 1.0,
        Reduction::Mean => 1.0 / len as f64,
    };

    if cfg.is_full_batch() {
        let owned;
        let pass = match cached {
            Some(p) => p,
            None => {
                owned = model.forward_batch(inputs)?;
                &owned
            }
        };
        let loss = loss_from_logits(&pass.logits, labels);
        let mut grads = model.backward(inputs, labels, pass);
        grads.scale(scale(n));
        step(model, &grads, state, cfg)?;
        return Ok(EpochStats { steps: 1, loss });
    }

    let OptimizerKind::Sgd { batch_size } = cfg.kind else {
        unreachable!()
    };
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.shuffle_seed ^ epoch_index);
    order.shuffle(&mut rng);

    let mut stats = EpochStats { steps: 0, loss: 0.0 };
    for chunk in order.chunks(batch_size) {
        let x = inputs.select(ndarray::Axis(0), chunk);
        let y: Vec<i8> = chunk.iter().map(|&i| labels[i]).collect();
        let pass = model.forward_batch(x.view())?;
        stats.loss += loss_from_logits(&pass.logits, &y);
        let mut grads = model.backward(x.view(), &y, &pass);
        grads.scale(scale(chunk.len()));
        step(model, &grads, state, cfg)?;
        stats.steps += 1;
    }
    Ok(stats)
}
