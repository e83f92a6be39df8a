//! Fully connected classifiers with two outputs, exact backpropagation of the
//! summed softmax cross-entropy, and access to hidden representations.
//!
//! Output index 0 is the `+1` class and index 1 the `-1` class. Hidden layers
//! share one activation; the output layer is affine.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Relu,
    LeakyRelu { slope: f64 },
    Silu,
    Identity,
}

impl Activation {
    pub const DEFAULT_LEAKY_SLOPE: f64 = 0.1;

    pub fn leaky_relu() -> Self {
        Activation::LeakyRelu {
            slope: Self::DEFAULT_LEAKY_SLOPE,
        }
    }

    /// Parses `tanh`, `relu`, `leaky_relu`, `silu` or `identity`.
    pub fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "tanh" => Activation::Tanh,
            "relu" => Activation::Relu,
            "leaky_relu" => Activation::leaky_relu(),
            "silu" => Activation::Silu,
            "identity" => Activation::Identity,
            _ => return None,
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
            Activation::LeakyRelu { .. } => "leaky_relu",
            Activation::Silu => "silu",
            Activation::Identity => "identity",
        }
    }

    #[inline]
    pub fn apply(&self, z: f64) -> f64 {
        match *self {
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
            Activation::LeakyRelu { slope } => {
                if z > 0.0 {
                    z
                } else {
                    slope * z
                }
            }
            Activation::Silu => z / (1.0 + (-z).exp()),
            Activation::Identity => z,
        }
    }

    /// Derivative with respect to the pre-activation `z`, given `a = apply(z)`.
    #[inline]
    pub fn derivative(&self, z: f64, a: f64) -> f64 {
        match *self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu { slope } => {
                if z > 0.0 {
                    1.0
                } else {
                    slope
                }
            }
            Activation::Silu => {
                let s = 1.0 / (1.0 + (-z).exp());
                s * (1.0 + z * (1.0 - s))
            }
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InitScheme {
    /// Weights and biases `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    #[default]
    UniformFanin,
    /// Weights `U(-sqrt(6/fan_in), sqrt(6/fan_in))`, zero biases.
    He,
    /// Weights `U(-sqrt(6/(fan_in+fan_out)), ..)`, zero biases.
    Xavier,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitConfig {
    #[serde(default)]
    pub scheme: InitScheme,
    /// Multiplier on the half-width of every uniform range; 1 is the default.
    #[serde(default = "one")]
    pub variance_scale: f64,
    #[serde(default)]
    pub seed: u64,
}

fn one() -> f64 {
    1.0
}

impl Default for InitConfig {
    fn default() -> Self {
        Self {
            scheme: InitScheme::UniformFanin,
            variance_scale: 1.0,
            seed: 0,
        }
    }
}

impl InitConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }
}

/// One affine map: `weights` is `fan_out x fan_in`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Layer {
    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            weights: Array2::zeros((fan_out, fan_in)),
            bias: Array1::zeros(fan_out),
        }
    }

    pub fn fan_in(&self) -> usize {
        self.weights.ncols()
    }

    pub fn fan_out(&self) -> usize {
        self.weights.nrows()
    }

    fn zeros_like(&self) -> Self {
        Self::zeros(self.fan_in(), self.fan_out())
    }

    fn same_shape(&self, other: &Layer) -> bool {
        self.weights.dim() == other.weights.dim() && self.bias.len() == other.bias.len()
    }
}

/// A list of layers shaped like a model's parameters. Used for gradients and
/// optimizer accumulators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSet {
    pub layers: Vec<Layer>,
}

impl ParamSet {
    pub fn zeros_like(model: &MlpModel) -> Self {
        Self {
            layers: model.layers.iter().map(Layer::zeros_like).collect(),
        }
    }

    pub fn matches(&self, model: &MlpModel) -> bool {
        self.layers.len() == model.layers.len()
            && self
                .layers
                .iter()
                .zip(&model.layers)
                .all(|(a, b)| a.same_shape(b))
    }

    pub fn scale(&mut self, factor: f64) {
        for l in &mut self.layers {
            l.weights *= factor;
            l.bias *= factor;
        }
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()).copied())
    }

    pub fn len(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub type Gradients = ParamSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub layers: Vec<Layer>,
    pub activation: Activation,
}

/// Intermediate values of a batched forward pass, one row per example.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub pre_activations: Vec<Array2<f64>>,
    /// Post-activation output of each hidden layer.
    pub hidden: Vec<Array2<f64>>,
    pub logits: Array2<f64>,
}

impl ForwardPass {
    /// Predicted labels, ties going to `+1`.
    pub fn predictions(&self) -> Vec<i8> {
        self.logits
            .rows()
            .into_iter()
            .map(|r| label_from_logits(r[0], r[1]))
            .collect()
    }
}

#[inline]
pub fn label_from_logits(plus: f64, minus: f64) -> i8 {
    if plus >= minus {
        1
    } else {
        -1
    }
}

#[inline]
fn class_index(label: i8) -> usize {
    if label > 0 {
        0
    } else {
        1
    }
}

/// `-log softmax(f)_class`, with max subtraction.
#[inline]
fn nll(f0: f64, f1: f64, class: usize) -> f64 {
    let m = f0.max(f1);
    let lse = m + ((f0 - m).exp() + (f1 - m).exp()).ln();
    lse - if class == 0 { f0 } else { f1 }
}

fn check_batch(x: &ArrayView2<f64>, labels: &[i8], input_dim: usize) -> Result<()> {
    if x.nrows() == 0 {
        return Err(Error::EmptyBatch);
    }
    if x.ncols() != input_dim {
        return Err(Error::DimensionMismatch {
            expected: input_dim,
            found: x.ncols(),
        });
    }
    if labels.len() != x.nrows() {
        return Err(Error::DimensionMismatch {
            expected: x.nrows(),
            found: labels.len(),
        });
    }
    Ok(())
}

impl MlpModel {
    /// `sizes` lists input dimension, hidden widths, then the output width 2.
    pub fn init(sizes: &[usize], activation: Activation, cfg: &InitConfig) -> Result<Self> {
        if sizes.len() < 3 {
            return Err(Error::Architecture(
                "need an input size, at least one hidden layer and the output size".into(),
            ));
        }
        if *sizes.last().unwrap() != 2 {
            return Err(Error::Architecture("the output layer must have 2 units".into()));
        }
        if sizes.contains(&0) {
            return Err(Error::Architecture("layer sizes must be positive".into()));
        }
        if !(cfg.variance_scale >= 0.0 && cfg.variance_scale.is_finite()) {
            return Err(Error::Architecture(format!(
                "variance scale must be finite and non-negative, got {}",
                cfg.variance_scale
            )));
        }

        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let g = cfg.variance_scale;
        let layers = sizes
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let (w_half, b_half) = match cfg.scheme {
                    InitScheme::UniformFanin => {
                        let a = 1.0 / (fan_in as f64).sqrt();
                        (a, a)
                    }
                    InitScheme::He => ((6.0 / fan_in as f64).sqrt(), 0.0),
                    InitScheme::Xavier => ((6.0 / (fan_in + fan_out) as f64).sqrt(), 0.0),
                };
                let mut draw = |half: f64| {
                    let half = g * half;
                    if half > 0.0 {
                        rng.random_range(-half..half)
                    } else {
                        0.0
                    }
                };
                let weights = Array2::from_shape_simple_fn((fan_out, fan_in), || draw(w_half));
                let bias = Array1::from_shape_simple_fn(fan_out, || draw(b_half));
                Layer { weights, bias }
            })
            .collect();
        Ok(Self { layers, activation })
    }

    pub fn from_layers(layers: Vec<Layer>, activation: Activation) -> Result<Self> {
        if layers.len() < 2 {
            return Err(Error::Architecture("need at least one hidden layer".into()));
        }
        for w in layers.windows(2) {
            if w[0].fan_out() != w[1].fan_in() {
                return Err(Error::Architecture(format!(
                    "layer output {} does not feed next input {}",
                    w[0].fan_out(),
                    w[1].fan_in()
                )));
            }
        }
        for l in &layers {
            if l.bias.len() != l.fan_out() {
                return Err(Error::Architecture("bias length differs from fan-out".into()));
            }
        }
        if layers.last().unwrap().fan_out() != 2 {
            return Err(Error::Architecture("the output layer must have 2 units".into()));
        }
        Ok(Self { layers, activation })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].fan_in()
    }

    pub fn hidden_layers(&self) -> usize {
        self.layers.len() - 1
    }

    /// Input size, hidden widths, output size.
    pub fn sizes(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(Layer::fan_out))
            .collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    /// Single-example forward pass: logits and every hidden activation vector.
    pub fn forward(&self, x: ArrayView1<f64>) -> Result<(Array1<f64>, Vec<Array1<f64>>)> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                found: x.len(),
            });
        }
        let mut hidden = Vec::with_capacity(self.hidden_layers());
        let mut current = x.to_owned();
        let (output, hiddens) = self.layers.split_last().unwrap();
        for layer in hiddens {
            let z = layer.weights.dot(&current) + &layer.bias;
            current = z.mapv(|v| self.activation.apply(v));
            hidden.push(current.clone());
        }
        let logits = output.weights.dot(&current) + &output.bias;
        Ok((logits, hidden))
    }

    pub fn predict(&self, x: ArrayView1<f64>) -> Result<i8> {
        let (logits, _) = self.forward(x)?;
        Ok(label_from_logits(logits[0], logits[1]))
    }

    /// Batched forward pass over the rows of `x`.
    pub fn forward_batch(&self, x: ArrayView2<f64>) -> Result<ForwardPass> {
        if x.ncols() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                found: x.ncols(),
            });
        }
        let (output, hiddens) = self.layers.split_last().unwrap();
        let mut pre = Vec::with_capacity(hiddens.len());
        let mut hidden: Vec<Array2<f64>> = Vec::with_capacity(hiddens.len());
        for layer in hiddens {
            let input = hidden.last().map(|h| h.view()).unwrap_or(x);
            let z = input.dot(&layer.weights.t()) + &layer.bias;
            let a = z.mapv(|v| self.activation.apply(v));
            pre.push(z);
            hidden.push(a);
        }
        let last = hidden.last().expect("at least one hidden layer");
        let logits = last.dot(&output.weights.t()) + &output.bias;
        Ok(ForwardPass {
            pre_activations: pre,
            hidden,
            logits,
        })
    }

    /// Summed negative log-likelihood of the true labels.
    pub fn loss(&self, x: ArrayView2<f64>, labels: &[i8]) -> Result<f64> {
        check_batch(&x, labels, self.input_dim())?;
        let pass = self.forward_batch(x)?;
        Ok(loss_from_logits(&pass.logits, labels))
    }

    /// Exact gradient of the summed loss with respect to every parameter.
    pub fn gradients(&self, x: ArrayView2<f64>, labels: &[i8]) -> Result<Gradients> {
        check_batch(&x, labels, self.input_dim())?;
        let pass = self.forward_batch(x)?;
        Ok(self.backward(x, labels, &pass))
    }

    /// Backpropagation through a pass previously computed on the same `x`.
    pub fn backward(&self, x: ArrayView2<f64>, labels: &[i8], pass: &ForwardPass) -> Gradients {
        let n = x.nrows();
        // dL/df = softmax(f) - onehot(y)
        let mut delta = Array2::zeros((n, 2));
        for (i, (f, &y)) in pass.logits.rows().into_iter().zip(labels).enumerate() {
            let m = f[0].max(f[1]);
            let e0 = (f[0] - m).exp();
            let e1 = (f[1] - m).exp();
            let s = e0 + e1;
            delta[[i, 0]] = e0 / s;
            delta[[i, 1]] = e1 / s;
            delta[[i, class_index(y)]] -= 1.0;
        }

        let depth = self.layers.len();
        let mut grads: Vec<Layer> = Vec::with_capacity(depth);
        for l in (0..depth).rev() {
            let input = if l == 0 { x } else { pass.hidden[l - 1].view() };
            let weights = delta.t().dot(&input);
            let bias = delta.sum_axis(Axis(0));
            grads.push(Layer { weights, bias });
            if l > 0 {
                let mut back = delta.dot(&self.layers[l].weights);
                let act = self.activation;
                Zip::from(&mut back)
                    .and(&pass.pre_activations[l - 1])
                    .and(&pass.hidden[l - 1])
                    .for_each(|d, &z, &a| *d *= act.derivative(z, a));
                delta = back;
            }
        }
        grads.reverse();
        ParamSet { layers: grads }
    }

    /// Activations of hidden layer `layer`, counted from 1.
    pub fn hidden_representation(&self, x: ArrayView1<f64>, layer: usize) -> Result<Array1<f64>> {
        if layer == 0 || layer > self.hidden_layers() {
            return Err(Error::LayerOutOfRange {
                layer,
                hidden: self.hidden_layers(),
            });
        }
        let (_, mut hidden) = self.forward(x)?;
        Ok(hidden.swap_remove(layer - 1))
    }

    pub fn save_checkpoint(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let ck = Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            sizes: self.sizes(),
            model: self.clone(),
        };
        let text = serde_json::to_string(&ck).map_err(|e| Error::Checkpoint(e.to_string()))?;
        crate::io::write_atomic(path, text.as_bytes())
    }

    pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ck: Checkpoint =
            serde_json::from_str(&text).map_err(|e| Error::Checkpoint(e.to_string()))?;
        if ck.format != CHECKPOINT_FORMAT || ck.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint {} v{}",
                ck.format, ck.version
            )));
        }
        let model = MlpModel::from_layers(ck.model.layers, ck.model.activation)?;
        if model.sizes() != ck.sizes {
            return Err(Error::Checkpoint("declared sizes disagree with parameters".into()));
        }
        Ok(model)
    }
}

pub fn loss_from_logits(logits: &Array2<f64>, labels: &[i8]) -> f64 {
    logits
        .rows()
        .into_iter()
        .zip(labels)
        .map(|(f, &y)| nll(f[0], f[1], class_index(y)))
        .sum()
}

const CHECKPOINT_FORMAT: &str = "stragglers-mlp";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    sizes: Vec<usize>,
    model: MlpModel,
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::array;

    fn hand_model() -> MlpModel {
        // 3 inputs -> 2 tanh units -> 2 outputs
        MlpModel::from_layers(
            vec![
                Layer {
                    weights: array![[0.5, -1.0, 0.25], [1.5, 0.0, -0.5]],
                    bias: array![0.1, -0.2],
                },
                Layer {
                    weights: array![[1.0, -2.0], [0.5, 0.75]],
                    bias: array![0.3, -0.1],
                },
            ],
            Activation::Tanh,
        )
        .unwrap()
    }

    #[test]
    fn hand_computed_forward() {
        let m = hand_model();
        let x = array![1.0, 2.0, -1.0];
        // z1 = 0.5 - 2 - 0.25 + 0.1 = -1.65 ; z2 = 1.5 + 0.5 - 0.2 = 1.8
        let h1 = (-1.65f64).tanh();
        let h2 = 1.8f64.tanh();
        let f0 = h1 - 2.0 * h2 + 0.3;
        let f1 = 0.5 * h1 + 0.75 * h2 - 0.1;
        let (logits, hidden) = m.forward(x.view()).unwrap();
        assert_relative_eq!(hidden[0][0], h1, epsilon = 1e-15);
        assert_relative_eq!(hidden[0][1], h2, epsilon = 1e-15);
        assert_relative_eq!(logits[0], f0, epsilon = 1e-15);
        assert_relative_eq!(logits[1], f1, epsilon = 1e-15);

        let batch = m.forward_batch(x.view().insert_axis(Axis(0))).unwrap();
        assert_relative_eq!(batch.logits[[0, 0]], f0, epsilon = 1e-15);
    }

    #[test]
    fn linear_composition_with_identity() {
        let w = array![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
        let v = array![[2.0, -1.0], [0.5, 3.0]];
        let m = MlpModel::from_layers(
            vec![
                Layer {
                    weights: w.clone(),
                    bias: Array1::zeros(2),
                },
                Layer {
                    weights: v.clone(),
                    bias: Array1::zeros(2),
                },
            ],
            Activation::Identity,
        )
        .unwrap();
        let x = array![0.3, -0.7, 5.0];
        let (logits, _) = m.forward(x.view()).unwrap();
        assert_eq!(logits, v.dot(&w.dot(&x)));
    }

    #[test]
    fn zero_input_tanh_gives_output_bias() {
        let mut m = hand_model();
        for l in &mut m.layers[..1] {
            l.bias.fill(0.0);
        }
        let (logits, hidden) = m.forward(Array1::zeros(3).view()).unwrap();
        assert!(hidden[0].iter().all(|&h| h == 0.0));
        assert_eq!(logits, m.layers[1].bias);
    }

    #[test]
    fn predict_tie_rule() {
        assert_eq!(label_from_logits(2.0, -1.0), 1);
        assert_eq!(label_from_logits(0.0, 0.0), 1);
        assert_eq!(label_from_logits(-3.0, -2.5), -1);
    }

    #[test]
    fn uniform_loss_is_p_ln2() {
        let mut m = hand_model();
        for l in &mut m.layers {
            l.weights.fill(0.0);
            l.bias.fill(0.0);
        }
        let x = Array2::from_shape_fn((7, 3), |(i, j)| (i * 3 + j) as f64 * 0.1);
        let labels = [1, -1, 1, 1, -1, -1, 1];
        let l = m.loss(x.view(), &labels).unwrap();
        assert_relative_eq!(l, 7.0 * std::f64::consts::LN_2, epsilon = 1e-12);
    }

    #[test]
    fn saturated_correct_contribution_vanishes() {
        assert!(nll(800.0, -5.0, 0) < 1e-300);
        assert!(nll(800.0, -5.0, 0) >= 0.0);
        assert_relative_eq!(nll(-5.0, 800.0, 0), 805.0, epsilon = 1e-9);
    }

    #[test]
    fn loss_matches_direct_evaluation() {
        let m = MlpModel::init(&[4, 3, 2], Activation::Tanh, &InitConfig::with_seed(11)).unwrap();
        let x = Array2::from_shape_fn((5, 4), |(i, j)| ((i * 7 + j * 3) % 5) as f64 - 2.0);
        let labels = [1, -1, -1, 1, 1];
        let mut direct = 0.0;
        for (row, &y) in x.rows().into_iter().zip(&labels) {
            let (f, _) = m.forward(row).unwrap();
            let p = f[class_index(y)].exp() / (f[0].exp() + f[1].exp());
            direct -= p.ln();
        }
        assert_relative_eq!(m.loss(x.view(), &labels).unwrap(), direct, epsilon = 1e-12);
    }

    #[test]
    fn errors() {
        let m = hand_model();
        assert!(matches!(
            m.forward(array![1.0, 2.0].view()),
            Err(Error::DimensionMismatch { expected: 3, found: 2 })
        ));
        let empty = Array2::<f64>::zeros((0, 3));
        assert!(matches!(m.loss(empty.view(), &[]), Err(Error::EmptyBatch)));
        assert!(matches!(
            m.hidden_representation(array![1.0, 2.0, 3.0].view(), 2),
            Err(Error::LayerOutOfRange { layer: 2, hidden: 1 })
        ));
        assert!(MlpModel::init(&[], Activation::Tanh, &InitConfig::default()).is_err());
        assert!(MlpModel::init(&[4, 2], Activation::Tanh, &InitConfig::default()).is_err());
        assert!(MlpModel::init(&[4, 3, 3], Activation::Tanh, &InitConfig::default()).is_err());
    }

    #[test]
    fn init_ranges() {
        let m = MlpModel::init(&[784, 20, 2], Activation::Tanh, &InitConfig::with_seed(1)).unwrap();
        let a = 1.0 / 28.0;
        assert!(m.layers[0].weights.iter().all(|&w| w > -a && w < a));
        assert!(m.layers[0].bias.iter().all(|&w| w > -a && w < a));
        let b = 1.0 / 20f64.sqrt();
        assert!(m.layers[1].weights.iter().all(|&w| w > -b && w < b));

        let n = m.layers[0].weights.len() as f64;
        let mean = m.layers[0].weights.sum() / n;
        let var = m.layers[0].weights.iter().map(|w| (w - mean).powi(2)).sum::<f64>() / n;
        let expected = (1.0 / 784.0) / 3.0;
        assert!((var - expected).abs() / expected < 0.05, "variance {var}");

        let zero = MlpModel::init(
            &[784, 20, 2],
            Activation::Tanh,
            &InitConfig {
                variance_scale: 0.0,
                ..InitConfig::default()
            },
        )
        .unwrap();
        assert!(ParamSet {
            layers: zero.layers.clone()
        }
        .values()
        .all(|v| v == 0.0));

        let again = MlpModel::init(&[784, 20, 2], Activation::Tanh, &InitConfig::with_seed(1)).unwrap();
        assert_eq!(m, again);
    }

    #[test]
    fn zero_input_identity_gradients() {
        let m = MlpModel::init(&[3, 4, 2], Activation::Identity, &InitConfig::with_seed(2)).unwrap();
        let x = Array2::zeros((3, 3));
        let g = m.gradients(x.view(), &[1, -1, 1]).unwrap();
        assert!(g.layers[0].weights.iter().all(|&v| v == 0.0));
        assert!(g.layers[1].bias.iter().any(|&v| v != 0.0));
    }

    #[test]
    fn duplicated_batch_doubles_gradient() {
        let m = MlpModel::init(&[3, 4, 2], Activation::Tanh, &InitConfig::with_seed(3)).unwrap();
        let x = array![[0.1, -0.3, 0.8], [1.0, 0.5, -0.2]];
        let labels = [1, -1];
        let x2 = ndarray::concatenate![Axis(0), x, x];
        let g1 = m.gradients(x.view(), &labels).unwrap();
        let g2 = m.gradients(x2.view(), &[1, -1, 1, -1]).unwrap();
        for (a, b) in g1.values().zip(g2.values()) {
            assert_relative_eq!(2.0 * a, b, epsilon = 1e-14);
        }
    }

    #[test]
    fn deep_net_first_layer_representation() {
        let m = MlpModel::init(&[5, 4, 3, 3, 2], Activation::Tanh, &InitConfig::with_seed(4)).unwrap();
        let x = array![0.1, 0.2, 0.3, 0.4, 0.5];
        let h1 = m.hidden_representation(x.view(), 1).unwrap();
        let direct = (m.layers[0].weights.dot(&x) + &m.layers[0].bias).mapv(f64::tanh);
        assert_eq!(h1, direct);
        assert_eq!(m.hidden_representation(x.view(), 3).unwrap().len(), 3);
    }

    #[test]
    fn checkpoint_round_trip() {
        let m = MlpModel::init(&[6, 5, 2], Activation::leaky_relu(), &InitConfig::with_seed(9)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        m.save_checkpoint(&path).unwrap();
        assert_eq!(MlpModel::load_checkpoint(&path).unwrap(), m);
    }
}
