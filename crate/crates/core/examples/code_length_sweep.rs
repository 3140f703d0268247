//! Retrieval quality of hashed search as the code length grows.
//!
//! cargo run --release --example code_length_sweep [bits ...]

use hashscreen::dataio::{generate_synthetic, split, SynthSpec};
use hashscreen::metrics::Mode;
use hashscreen::screen::{screen_dataset, summarize};
use hashscreen::train::{train, TrainingConfig};

fn main() -> hashscreen::Result<()> {
    let mut lengths: Vec<usize> = std::env::args().skip(1).map(|s| s.parse().expect("bits")).collect();
    if lengths.is_empty() {
        lengths = vec![16, 32, 64, 128];
    }
    let data = generate_synthetic(&SynthSpec::default())?;
    println!("bits  bytes/record  test_bedroc  test_ef1  test_auroc");
    for code_bits in lengths {
        let config = TrainingConfig { code_bits, seed: 1, ..TrainingConfig::default() };
        let (train_set, val, test) = split(&data, config.split_fractions(), config.seed)?;
        let outcome = train(&train_set, Some(&val), &config)?;
        let s = summarize(&screen_dataset(&outcome.params, &test, Mode::Hamming)?, Mode::Hamming, test.len());
        println!(
            "{code_bits:<4}  {:<12}  {:.4}       {:6.2}    {:.4}",
            code_bits.div_ceil(64) * 8,
            s.mean.bedroc,
            s.mean.ef.ef1,
            s.mean.auroc
        );
    }
    Ok(())
}
