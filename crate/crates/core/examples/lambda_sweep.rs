//! Trains with and without the quantization penalty and compares hashed
//! retrieval on the held-out split.
//!
//! cargo run --release --example lambda_sweep [lambda ...]

use hashscreen::dataio::{generate_synthetic, split, SynthSpec};
use hashscreen::metrics::Mode;
use hashscreen::screen::{screen_dataset, summarize};
use hashscreen::train::{train, TrainingConfig};

fn main() -> hashscreen::Result<()> {
    let mut lambdas: Vec<f64> = std::env::args().skip(1).map(|s| s.parse().expect("lambda")).collect();
    if lambdas.is_empty() {
        lambdas = vec![0.0, 0.05, 0.2, 1.0];
    }
    let data = generate_synthetic(&SynthSpec::default())?;
    println!("lambda  test_bedroc  test_auroc  best_epoch  val_bedroc");
    for lambda in lambdas {
        let config = TrainingConfig { lambda, seed: 1, ..TrainingConfig::default() };
        let (train_set, val, test) = split(&data, config.split_fractions(), config.seed)?;
        let outcome = train(&train_set, Some(&val), &config)?;
        let s = summarize(&screen_dataset(&outcome.params, &test, Mode::Hamming)?, Mode::Hamming, test.len());
        let best = &outcome.curve[outcome.best_epoch - 1];
        println!(
            "{lambda:<6}  {:.4}       {:.4}      {:3}         {:.4}",
            s.mean.bedroc,
            s.mean.auroc,
            outcome.best_epoch,
            best.val_bedroc.unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
