//! Trains one parity classifier on MNIST and prints its inversion point.
//!
//! `cargo run --release --example trajectory -- [data_dir] [size] [seed] [epochs]`

use std::time::Instant;

use stragglers_core::dataio::{load_mnist_family, standardize, subsample, Source, Split};
use stragglers_core::dynamics::{detect_inversion, RunSpec, StopRule, TestEval, TrainConfig};
use stragglers_core::network::{Activation, InitConfig};
use stragglers_core::optim::OptimizerConfig;

fn main() -> stragglers_core::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let dir = args.first().map_or("/root/data/mnist", String::as_str);
    let size: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(8192);
    let seed: u64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(0);
    let epochs: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(300);

    let raw = load_mnist_family(dir, Split::Train, Source::Mnist)?;
    let ds = standardize(&subsample(&raw, size, 0)?, None)?;
    let mut train = TrainConfig::new(OptimizerConfig::gd(0.2), epochs);
    train.stop_rule = StopRule::MaxEpochs;
    train.test_eval = TestEval::Never;
    let spec = RunSpec {
        hidden: vec![20],
        activation: Activation::Tanh,
        init: InitConfig::default(),
        train,
    };
    let t = Instant::now();
    let (_, log) = spec.run(&ds, None, seed)?;
    let elapsed = t.elapsed().as_secs_f64();
    println!(
        "{} epochs in {elapsed:.1}s ({:.1} ms/epoch), final eps_tr {:.4}",
        log.records.len() - 1,
        1e3 * elapsed / (log.records.len() - 1) as f64,
        log.final_record().eps_tr
    );
    let inv = detect_inversion(&log)?;
    for e in inv.extrema() {
        println!(
            "{:8} epoch {:4} eps_tr {:.4} value {:.4} prominence {:.3} interior {}",
            e.metric.name(),
            e.epoch,
            e.eps_tr,
            e.value,
            e.prominence,
            e.interior
        );
    }
    println!("phi {:.4}  |S| {}  converged {}", inv.phi, inv.stragglers.len(), inv.converged);
    Ok(())
}
