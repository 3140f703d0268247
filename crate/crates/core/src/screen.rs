//! Screening a labeled pair dataset with a trained encoder: every protein is
//! a query against all molecules of the dataset.

use serde::Serialize;

use crate::codes::BinaryCode;
use crate::dataio::PairDataset;
use crate::encoder::{EncoderParams, Modality};
use crate::error::Result;
use crate::loss::update_codes;
use crate::matrix::Matrix;
use crate::metrics::{code_scores, screen_scores, MetricReport, Mode, Ranking, DEFAULT_ALPHA};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QueryReport {
    pub query_id: String,
    #[serde(flatten)]
    pub metrics: MetricReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScreenSummary {
    pub mode: Mode,
    pub queries: usize,
    pub database_size: usize,
    #[serde(flatten)]
    pub mean: MetricReport,
}

/// Per-query metrics for already-computed embeddings.
pub fn screen_embeddings(
    ds: &PairDataset,
    protein_embeddings: &Matrix,
    molecule_embeddings: &Matrix,
    mode: Mode,
) -> Result<Vec<QueryReport>> {
    let codes: Option<(Vec<BinaryCode>, Vec<BinaryCode>)> = match mode {
        Mode::Hamming => Some(update_codes(protein_embeddings, molecule_embeddings)?),
        Mode::Cosine => None,
    };
    (0..ds.len())
        .map(|k| {
            let scores = match &codes {
                Some((pc, mc)) => code_scores(&pc[k], mc)?,
                None => screen_scores(protein_embeddings.row(k), molecule_embeddings, Mode::Cosine)?,
            };
            let ranking = Ranking::from_scores(&scores, &ds.actives_for(k))?;
            Ok(QueryReport {
                query_id: ds.protein_ids[k].clone(),
                metrics: MetricReport::from_ranking(&ranking, DEFAULT_ALPHA)?,
            })
        })
        .collect()
}

pub fn screen_dataset(params: &EncoderParams, ds: &PairDataset, mode: Mode) -> Result<Vec<QueryReport>> {
    let p = params.encode_batch(Modality::Protein, &ds.proteins)?;
    let m = params.encode_batch(Modality::Molecule, &ds.molecules)?;
    screen_embeddings(ds, &p, &m, mode)
}

pub fn summarize(reports: &[QueryReport], mode: Mode, database_size: usize) -> ScreenSummary {
    let metrics: Vec<MetricReport> = reports.iter().map(|r| r.metrics).collect();
    ScreenSummary {
        mode,
        queries: reports.len(),
        database_size,
        mean: MetricReport::mean(&metrics).unwrap_or_default(),
    }
}

/// Per-query CSV: `query_id,auroc,bedroc,ef0.5,ef1,ef5`.
pub fn reports_csv(reports: &[QueryReport]) -> String {
    let mut out = String::from("query_id,auroc,bedroc,ef0.5,ef1,ef5\n");
    for r in reports {
        let m = &r.metrics;
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.query_id, m.auroc, m.bedroc, m.ef.ef0_5, m.ef.ef1, m.ef.ef5
        ));
    }
    out
}
