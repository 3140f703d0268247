//! Validation loss per epoch with and without the quantization penalty.
//! Writes one CSV per setting and prints where each curve bottoms out.
//!
//! cargo run --release --example overfitting_curves [out_dir]

use std::path::PathBuf;

use hashscreen::dataio::{generate_synthetic, split, SynthSpec};
use hashscreen::train::{curve_csv, train, TrainingConfig};

fn main() -> hashscreen::Result<()> {
    let out = std::env::args().nth(1).map_or_else(std::env::temp_dir, PathBuf::from);
    std::fs::create_dir_all(&out).map_err(|e| hashscreen::Error::io(&out, e))?;
    let data = generate_synthetic(&SynthSpec::default())?;
    for lambda in [0.0, 0.2] {
        let config = TrainingConfig { lambda, seed: 1, ..TrainingConfig::default() };
        let (train_set, val, _) = split(&data, config.split_fractions(), config.seed)?;
        let outcome = train(&train_set, Some(&val), &config)?;
        let losses: Vec<f64> = outcome.curve.iter().filter_map(|r| r.val_loss).collect();
        let (min_epoch, min) = losses
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, &v)| (i + 1, v))
            .expect("validation split is non-empty");
        let last = *losses.last().expect("at least one epoch");
        let path = out.join(format!("curve_lambda_{lambda}.csv"));
        std::fs::write(&path, curve_csv(&outcome.curve)).map_err(|e| hashscreen::Error::io(&path, e))?;
        println!(
            "lambda {lambda}: min val loss {min:.4} at epoch {min_epoch}, final {last:.4} (x{:.3})  -> {}",
            last / min,
            path.display()
        );
    }
    Ok(())
}
