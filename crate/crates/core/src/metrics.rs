//! Screening metrics: AUROC, BEDROC and enrichment factors.
//!
//! Rankings are ordered by descending score with ties broken by ascending
//! item id. BEDROC and EF read integer ranks off that order. AUROC instead
//! scores tied items with average ranks, so a constant scorer gets 0.5.

use serde::Serialize;

use crate::codes::{cosine_similarity, hamming_words, sign_quantize, BinaryCode};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Early-recognition parameter used for BEDROC unless overridden.
pub const DEFAULT_ALPHA: f64 = 80.5;

/// Enrichment cutoffs reported in a [`MetricReport`], in percent.
pub const EF_CUTOFFS: [f64; 3] = [0.5, 1.0, 5.0];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankedItem {
    pub id: usize,
    pub score: f64,
    pub active: bool,
}

#[derive(Debug, Clone)]
pub struct Ranking {
    items: Vec<RankedItem>,
    actives: usize,
}

impl Ranking {
    pub fn new(mut items: Vec<RankedItem>) -> Result<Self> {
        if let Some(bad) = items.iter().find(|i| !i.score.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "item {} has non-finite score {}",
                bad.id, bad.score
            )));
        }
        items.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.id.cmp(&b.id)));
        let actives = items.iter().filter(|i| i.active).count();
        Ok(Ranking { items, actives })
    }

    /// Item `i` gets id `i`.
    pub fn from_scores(scores: &[f64], actives: &[bool]) -> Result<Self> {
        if scores.len() != actives.len() {
            return Err(Error::InvalidInput(format!(
                "{} scores but {} activity labels",
                scores.len(),
                actives.len()
            )));
        }
        Ranking::new(
            scores
                .iter()
                .zip(actives)
                .enumerate()
                .map(|(id, (&score, &active))| RankedItem { id, score, active })
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn actives(&self) -> usize {
        self.actives
    }

    /// Items in rank order.
    pub fn items(&self) -> &[RankedItem] {
        &self.items
    }

    /// 1-based ranks of the actives in rank order.
    pub fn active_ranks(&self) -> impl Iterator<Item = usize> + '_ {
        self.items
            .iter()
            .enumerate()
            .filter(|(_, it)| it.active)
            .map(|(r, _)| r + 1)
    }

    fn require_mixed(&self) -> Result<()> {
        if self.actives == 0 || self.actives == self.items.len() {
            return Err(Error::UndefinedMetric(format!(
                "{} actives among {} items; need at least one of each class",
                self.actives,
                self.items.len()
            )));
        }
        Ok(())
    }
}

/// Probability that a random active outscores a random inactive, ties
/// counting one half.
pub fn auroc(r: &Ranking) -> Result<f64> {
    r.require_mixed()?;
    // ascending score; average ranks over tied runs
    let mut scores: Vec<(f64, bool)> = r.items.iter().map(|i| (i.score, i.active)).collect();
    scores.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut rank_sum = 0.0;
    let mut start = 0;
    while start < scores.len() {
        let mut end = start;
        while end < scores.len() && scores[end].0 == scores[start].0 {
            end += 1;
        }
        let avg_rank = (start + 1 + end) as f64 / 2.0;
        let tied_actives = scores[start..end].iter().filter(|s| s.1).count();
        rank_sum += avg_rank * tied_actives as f64;
        start = end;
    }
    let n = r.actives as f64;
    let m = (r.items.len() - r.actives) as f64;
    Ok((rank_sum - n * (n + 1.0) / 2.0) / (n * m))
}

/// Boltzmann-enhanced discrimination of ROC.
pub fn bedroc(r: &Ranking, alpha: f64) -> Result<f64> {
    r.require_mixed()?;
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidInput(format!("alpha must be positive, got {alpha}")));
    }
    let big_n = r.items.len() as f64;
    let n = r.actives as f64;
    let ra = n / big_n;
    let sum: f64 = r
        .active_ranks()
        .map(|rank| (-alpha * rank as f64 / big_n).exp())
        .sum();
    let random_sum = ra * (1.0 - (-alpha).exp()) / ((alpha / big_n).exp_m1());
    let rie = sum / random_sum;
    let half = alpha / 2.0;
    let scale = ra * half.sinh() / (half.cosh() - (half - alpha * ra).cosh());
    let offset = 1.0 / (1.0 - (alpha * (1.0 - ra)).exp());
    // the bounds are exact; only rounding can leave them
    Ok((rie * scale + offset).clamp(0.0, 1.0))
}

/// Items in the top `x_percent` window: `ceil(N * x / 100)`.
pub fn enrichment_window(total: usize, x_percent: f64) -> usize {
    let raw = total as f64 * x_percent / 100.0;
    let nearest = raw.round();
    // absorb representation error so that exact products are not bumped up
    let w = if (raw - nearest).abs() <= 1e-9 * raw.max(1.0) {
        nearest
    } else {
        raw.ceil()
    };
    (w as usize).min(total)
}

/// Active rate in the top `x_percent` relative to the overall active rate.
pub fn enrichment_factor(r: &Ranking, x_percent: f64) -> Result<f64> {
    if !(x_percent > 0.0 && x_percent <= 100.0) {
        return Err(Error::InvalidInput(format!(
            "enrichment cutoff must be in (0, 100], got {x_percent}"
        )));
    }
    let total = r.items.len();
    if r.actives == 0 {
        return Err(Error::UndefinedMetric("no actives in ranking".into()));
    }
    let window = enrichment_window(total, x_percent);
    if window == 0 {
        return Err(Error::UndefinedMetric(format!(
            "top {x_percent}% of {total} items is empty"
        )));
    }
    let hits = r.items[..window].iter().filter(|i| i.active).count();
    Ok((hits as f64 / window as f64) / (r.actives as f64 / total as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct EnrichmentFactors {
    #[serde(rename = "ef0.5")]
    pub ef0_5: f64,
    #[serde(rename = "ef1")]
    pub ef1: f64,
    #[serde(rename = "ef5")]
    pub ef5: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct MetricReport {
    pub auroc: f64,
    pub bedroc: f64,
    #[serde(flatten)]
    pub ef: EnrichmentFactors,
}

impl MetricReport {
    pub fn from_ranking(r: &Ranking, alpha: f64) -> Result<Self> {
        Ok(MetricReport {
            auroc: auroc(r)?,
            bedroc: bedroc(r, alpha)?,
            ef: EnrichmentFactors {
                ef0_5: enrichment_factor(r, EF_CUTOFFS[0])?,
                ef1: enrichment_factor(r, EF_CUTOFFS[1])?,
                ef5: enrichment_factor(r, EF_CUTOFFS[2])?,
            },
        })
    }

    /// Field-wise mean; `None` for an empty slice.
    pub fn mean(reports: &[MetricReport]) -> Option<MetricReport> {
        if reports.is_empty() {
            return None;
        }
        let n = reports.len() as f64;
        let avg = |f: fn(&MetricReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
        Some(MetricReport {
            auroc: avg(|r| r.auroc),
            bedroc: avg(|r| r.bedroc),
            ef: EnrichmentFactors {
                ef0_5: avg(|r| r.ef.ef0_5),
                ef1: avg(|r| r.ef.ef1),
                ef5: avg(|r| r.ef.ef5),
            },
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Hamming,
    Cosine,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hamming" => Ok(Mode::Hamming),
            "cosine" => Ok(Mode::Cosine),
            _ => Err(Error::InvalidInput(format!(
                "unknown mode {s:?}; expected hamming or cosine"
            ))),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Hamming => "hamming",
            Mode::Cosine => "cosine",
        })
    }
}

/// Similarity of every database row to the query, higher meaning closer.
///
/// Hamming mode sign-quantizes query and rows and scores `-distance`; cosine
/// mode scores the cosine similarity of the raw vectors.
pub fn screen_scores(query: &[f64], database: &Matrix, mode: Mode) -> Result<Vec<f64>> {
    if database.rows() > 0 && database.cols() != query.len() {
        return Err(Error::Shape(format!(
            "query has {} dimensions, database rows {}",
            query.len(),
            database.cols()
        )));
    }
    match mode {
        Mode::Hamming => {
            let q = sign_quantize(query)?;
            database
                .iter_rows()
                .map(|row| {
                    let c = sign_quantize(row)?;
                    Ok(-(hamming_words(q.words(), c.words()) as f64))
                })
                .collect()
        }
        Mode::Cosine => database
            .iter_rows()
            .map(|row| cosine_similarity(query, row))
            .collect(),
    }
}

/// Hamming scores of packed codes against a packed query.
pub fn code_scores(query: &BinaryCode, codes: &[BinaryCode]) -> Result<Vec<f64>> {
    codes
        .iter()
        .map(|c| crate::codes::hamming_distance(query, c).map(|h| -(h as f64)))
        .collect()
}

/// Ranks the database for one query and computes every metric.
pub fn evaluate_screen(query: &[f64], database: &Matrix, actives: &[bool], mode: Mode) -> Result<MetricReport> {
    let scores = screen_scores(query, database, mode)?;
    MetricReport::from_ranking(&Ranking::from_scores(&scores, actives)?, DEFAULT_ALPHA)
}
