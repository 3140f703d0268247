//! Early-recognition metrics on hand-made rankings.

use hashscreen::metrics::{auroc, bedroc, enrichment_factor, Ranking, DEFAULT_ALPHA};

fn report(name: &str, scores: &[f64], actives: &[bool]) -> hashscreen::Result<()> {
    let r = Ranking::from_scores(scores, actives)?;
    println!(
        "{name:<10} auroc {:.4}  bedroc {:.4}  ef0.5 {:7.2}  ef1 {:6.2}  ef5 {:5.2}",
        auroc(&r)?,
        bedroc(&r, DEFAULT_ALPHA)?,
        enrichment_factor(&r, 0.5)?,
        enrichment_factor(&r, 1.0)?,
        enrichment_factor(&r, 5.0)?
    );
    Ok(())
}

fn main() -> hashscreen::Result<()> {
    let n = 1000;
    let mut actives = vec![false; n];
    for a in actives.iter_mut().take(10) {
        *a = true;
    }
    // higher score ranks first
    let perfect: Vec<f64> = (0..n).map(|i| -(i as f64)).collect();
    let worst: Vec<f64> = (0..n).map(|i| i as f64).collect();
    let mixed: Vec<f64> = (0..n).map(|i| if i < 10 { -(i as f64 * 50.0) } else { -(i as f64) }).collect();

    report("perfect", &perfect, &actives)?;
    report("spread", &mixed, &actives)?;
    report("worst", &worst, &actives)?;
    Ok(())
}
