use ndarray::Array2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use stragglers_core::network::{Activation, InitConfig, MlpModel};
use stragglers_core::optim::{step, OptimizerConfig, OptimizerKind, OptimizerState};

const ACTIVATIONS: [Activation; 5] = [
    Activation::Tanh,
    Activation::Relu,
    Activation::LeakyRelu { slope: 0.01 },
    Activation::Silu,
    Activation::Identity,
];

fn batch(seed: u64, rows: usize, dim: usize) -> (Array2<f64>, Vec<i8>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = Array2::from_shape_fn((rows, dim), |_| rng.random_range(-2.0..2.0));
    let y = (0..rows).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect();
    (x, y)
}

fn flat(model: &MlpModel) -> Vec<f64> {
    model
        .layers
        .iter()
        .flat_map(|l| l.weights.iter().chain(l.bias.iter()).copied().collect::<Vec<_>>())
        .collect()
}

fn set_flat(model: &mut MlpModel, i: usize, delta: f64) {
    let mut k = i;
    for l in &mut model.layers {
        let n = l.weights.len();
        if k < n {
            let c = l.weights.ncols();
            l.weights[[k / c, k % c]] += delta;
            return;
        }
        k -= n;
        if k < l.bias.len() {
            l.bias[k] += delta;
            return;
        }
        k -= l.bias.len();
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn gradients_match_central_differences(seed in 0u64..1000, act in 0usize..5, hidden in 1usize..6) {
        let act = ACTIVATIONS[act];
        let model = MlpModel::init(&[4, hidden, 3, 2], act, &InitConfig::with_seed(seed)).unwrap();
        let (x, y) = batch(seed, 5, 4);
        let pass = model.forward_batch(x.view()).unwrap();
        // Finite differences are meaningless across a kink.
        prop_assume!(pass.pre_activations.iter().all(|z| z.iter().all(|v| v.abs() > 1e-4)));
        let g: Vec<f64> = model.gradients(x.view(), &y).unwrap().values().collect();
        let h = 1e-6;
        let (mut num, mut den) = (0.0, 0.0);
        for (i, &gi) in g.iter().enumerate() {
            let mut a = model.clone();
            set_flat(&mut a, i, h);
            let mut b = model.clone();
            set_flat(&mut b, i, -h);
            let fd = (a.loss(x.view(), &y).unwrap() - b.loss(x.view(), &y).unwrap()) / (2.0 * h);
            num += (fd - gi).powi(2);
            den += fd.powi(2).max(gi.powi(2));
        }
        prop_assert!(den == 0.0 || (num / den).sqrt() < 1e-5);
    }

    #[test]
    fn init_respects_fan_in_bound(seed in 0u64..1000, fan_in in 1usize..50) {
        let model = MlpModel::init(&[fan_in, 7, 2], Activation::Tanh, &InitConfig::with_seed(seed)).unwrap();
        let bound = 1.0 / (fan_in as f64).sqrt();
        let first = &model.layers[0];
        prop_assert!(first.weights.iter().chain(first.bias.iter()).all(|v| v.abs() <= bound));
    }

    #[test]
    fn small_gd_step_decreases_loss(seed in 0u64..1000) {
        let mut model = MlpModel::init(&[4, 6, 2], Activation::Tanh, &InitConfig::with_seed(seed)).unwrap();
        let (x, y) = batch(seed ^ 7, 12, 4);
        let before = model.loss(x.view(), &y).unwrap();
        let g = model.gradients(x.view(), &y).unwrap();
        let norm2: f64 = g.values().map(|v| v * v).sum();
        prop_assume!(norm2 > 1e-12);
        let cfg = OptimizerConfig::gd(1e-4);
        let mut state = OptimizerState::new(&model, &cfg);
        step(&mut model, &g, &mut state, &cfg).unwrap();
        prop_assert!(model.loss(x.view(), &y).unwrap() < before);
    }

    #[test]
    fn first_adam_step_is_bounded_by_learning_rate(seed in 0u64..1000, lr in 1e-4f64..0.1) {
        let mut model = MlpModel::init(&[4, 6, 2], Activation::Silu, &InitConfig::with_seed(seed)).unwrap();
        let (x, y) = batch(seed, 8, 4);
        let before = flat(&model);
        let g = model.gradients(x.view(), &y).unwrap();
        let cfg = OptimizerConfig::with_kind(OptimizerKind::adam(), lr);
        let mut state = OptimizerState::new(&model, &cfg);
        step(&mut model, &g, &mut state, &cfg).unwrap();
        for (a, b) in before.iter().zip(flat(&model)) {
            prop_assert!((a - b).abs() <= lr * (1.0 + 1e-12));
        }
    }

    #[test]
    fn zero_weight_decay_equals_gd(seed in 0u64..1000) {
        let model = MlpModel::init(&[3, 5, 2], Activation::Relu, &InitConfig::with_seed(seed)).unwrap();
        let (x, y) = batch(seed, 6, 3);
        let g = model.gradients(x.view(), &y).unwrap();
        let gd = OptimizerConfig::gd(0.1);
        let wd = OptimizerConfig::with_kind(OptimizerKind::WeightDecay { lambda: 0.0, decay_biases: true }, 0.1);
        let (mut a, mut b) = (model.clone(), model);
        let mut state = OptimizerState::new(&a, &gd);
        step(&mut a, &g, &mut state, &gd).unwrap();
        let mut state = OptimizerState::new(&b, &wd);
        step(&mut b, &g, &mut state, &wd).unwrap();
        prop_assert_eq!(flat(&a), flat(&b));
    }
}

#[test]
fn checkpoint_round_trip_is_exact() {
    let tmp = tempfile::tempdir().unwrap();
    let model = MlpModel::init(&[5, 4, 4, 2], Activation::Silu, &InitConfig::with_seed(3)).unwrap();
    let path = tmp.path().join("model.json");
    model.save_checkpoint(&path).unwrap();
    assert_eq!(MlpModel::load_checkpoint(&path).unwrap(), model);
}
