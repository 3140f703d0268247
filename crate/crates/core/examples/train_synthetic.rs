//! Trains the two-tower hashing encoder on a clustered synthetic set and
//! reports retrieval quality on the held-out split.
//!
//! cargo run --release --example train_synthetic [epochs]

use hashscreen::dataio::{generate_synthetic, split, SynthSpec};
use hashscreen::encoder::EncoderParams;
use hashscreen::metrics::Mode;
use hashscreen::screen::{screen_dataset, summarize};
use hashscreen::train::{train_with_observer, TrainingConfig};

fn main() -> hashscreen::Result<()> {
    let epochs = std::env::args().nth(1).map_or(30, |s| s.parse().expect("epochs"));
    let config = TrainingConfig { epochs, seed: 1, ..TrainingConfig::default() };
    let data = generate_synthetic(&SynthSpec::default())?;
    let (train, val, test) = split(&data, config.split_fractions(), config.seed)?;
    println!("pairs: train {} validation {} test {}", train.len(), val.len(), test.len());

    let outcome = train_with_observer(&train, Some(&val), &config, |r| {
        println!(
            "epoch {:3}  loss {:.4} (contrastive {:.4} hash {:.4})  val bedroc {:.4}",
            r.epoch,
            r.total,
            r.contrastive,
            r.hash,
            r.val_bedroc.unwrap_or(f64::NAN)
        );
    })?;
    println!("best epoch {}", outcome.best_epoch);

    for mode in [Mode::Hamming, Mode::Cosine] {
        let s = summarize(&screen_dataset(&outcome.params, &test, mode)?, mode, test.len());
        println!("test {mode:?}: auroc {:.4} bedroc {:.4} ef1 {:.2}", s.mean.auroc, s.mean.bedroc, s.mean.ef.ef1);
    }

    let path = std::env::temp_dir().join("train_synthetic.ck");
    outcome.params.save(&path)?;
    let reloaded = EncoderParams::load(&path)?;
    assert_eq!(reloaded.to_bytes(), outcome.params.to_bytes());
    println!("checkpoint: {} ({} parameters)", path.display(), reloaded.param_count());
    Ok(())
}
