//! Bidirectional InfoNCE over cosine similarities, the quantization penalty
//! that pulls embeddings toward their sign codes, and their weighted sum.
//!
//! Row `k` of the protein matrix and row `k` of the molecule matrix form the
//! positive pair; every other row of the opposite modality is a negative.

use serde::Serialize;

use crate::codes::{BinaryCode, MIN_NORM};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Loss components for one batch.
///
/// `protein_side` and `molecule_side` are the sums over `k` of the per-pair
/// terms seen from each modality; `contrastive` is half their sum.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct LossReport {
    pub contrastive: f64,
    pub hash: f64,
    pub total: f64,
    pub protein_side: f64,
    pub molecule_side: f64,
}

impl LossReport {
    pub fn is_finite(&self) -> bool {
        [self.contrastive, self.hash, self.total, self.protein_side, self.molecule_side]
            .iter()
            .all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContrastiveLoss {
    pub value: f64,
    pub protein_side: f64,
    pub molecule_side: f64,
}

/// Gradients of a loss with respect to both embedding matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingGrads {
    pub proteins: Matrix,
    pub molecules: Matrix,
}

fn check_pair(proteins: &Matrix, molecules: &Matrix) -> Result<()> {
    if proteins.rows() != molecules.rows() || proteins.cols() != molecules.cols() {
        return Err(Error::Shape(format!(
            "protein embeddings are {}x{}, molecule embeddings {}x{}",
            proteins.rows(),
            proteins.cols(),
            molecules.rows(),
            molecules.cols()
        )));
    }
    if proteins.rows() == 0 {
        return Err(Error::InvalidInput("empty batch".into()));
    }
    Ok(())
}

/// Unit-normalizes every row, failing on the first near-zero row.
fn normalized_rows(m: &Matrix, side: &str) -> Result<(Matrix, Vec<f64>)> {
    let mut unit = m.clone();
    let mut norms = Vec::with_capacity(m.rows());
    for k in 0..m.rows() {
        let norm = m.row(k).iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm >= MIN_NORM) {
            return Err(Error::Degenerate(format!(
                "{side} embedding row {k} has norm {norm:e}"
            )));
        }
        unit.row_mut(k).iter_mut().for_each(|v| *v /= norm);
        norms.push(norm);
    }
    Ok((unit, norms))
}

/// `(max, ln sum exp(v - max))`, kept apart so that callers can subtract the
/// shift before adding the two.
fn shifted_log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    (max, values.map(|v| (v - max).exp()).sum::<f64>().ln())
}

/// Mean computed around the first element; exact for constant sequences.
fn centered_mean(xs: &[f64]) -> f64 {
    let first = xs[0];
    first + xs.iter().map(|x| x - first).sum::<f64>() / xs.len() as f64
}

fn contrastive_impl(
    proteins: &Matrix,
    molecules: &Matrix,
    tau: f64,
    want_grad: bool,
) -> Result<(ContrastiveLoss, Option<EmbeddingGrads>)> {
    check_pair(proteins, molecules)?;
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::InvalidInput(format!("temperature must be positive, got {tau}")));
    }
    let n = proteins.rows();
    let d = proteins.cols();
    let (up, norm_p) = normalized_rows(proteins, "protein")?;
    let (um, norm_m) = normalized_rows(molecules, "molecule")?;

    let mut cos = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            cos.row_mut(i)[j] = up.row(i).iter().zip(um.row(j)).map(|(a, b)| a * b).sum();
        }
    }
    let logit = |i: usize, j: usize| cos.row(i)[j] / tau;
    let row_lse: Vec<(f64, f64)> = (0..n).map(|i| shifted_log_sum_exp((0..n).map(move |j| logit(i, j)))).collect();
    let col_lse: Vec<(f64, f64)> = (0..n).map(|j| shifted_log_sum_exp((0..n).map(move |i| logit(i, j)))).collect();

    // -log softmax of the positive: ln sum exp(l - max) - (l_kk - max)
    let nll = |(max, ln_sum): (f64, f64), k: usize| ln_sum - (logit(k, k) - max);
    let protein_terms: Vec<f64> = (0..n).map(|k| nll(row_lse[k], k)).collect();
    let molecule_terms: Vec<f64> = (0..n).map(|k| nll(col_lse[k], k)).collect();
    let protein_side = centered_mean(&protein_terms);
    let molecule_side = centered_mean(&molecule_terms);
    let inv_n = 1.0 / n as f64;
    let loss = ContrastiveLoss {
        value: 0.5 * (protein_side + molecule_side),
        protein_side,
        molecule_side,
    };
    if !want_grad {
        return Ok((loss, None));
    }

    // dL/dcos_ij = (P_ij + Q_ij - 2 [i == j]) / (2 n tau), P row-softmax, Q column-softmax
    let mut g = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let p = (logit(i, j) - row_lse[i].0 - row_lse[i].1).exp();
            let q = (logit(i, j) - col_lse[j].0 - col_lse[j].1).exp();
            let delta = if i == j { 2.0 } else { 0.0 };
            g.row_mut(i)[j] = (p + q - delta) * 0.5 * inv_n / tau;
        }
    }
    let mut gp = Matrix::zeros(n, d);
    let mut gm = Matrix::zeros(n, d);
    for i in 0..n {
        for j in 0..n {
            let gij = g.row(i)[j];
            let c = cos.row(i)[j];
            let (ui, vj) = (up.row(i), um.row(j));
            let a = gij / norm_p[i];
            for (out, (v, u)) in gp.row_mut(i).iter_mut().zip(vj.iter().zip(ui)) {
                *out += a * (v - c * u);
            }
            let b = gij / norm_m[j];
            for (out, (u, v)) in gm.row_mut(j).iter_mut().zip(ui.iter().zip(vj)) {
                *out += b * (u - c * v);
            }
        }
    }
    Ok((
        loss,
        Some(EmbeddingGrads {
            proteins: gp,
            molecules: gm,
        }),
    ))
}

pub fn contrastive_loss(proteins: &Matrix, molecules: &Matrix, tau: f64) -> Result<ContrastiveLoss> {
    contrastive_impl(proteins, molecules, tau, false).map(|(l, _)| l)
}

pub fn contrastive_loss_with_grad(
    proteins: &Matrix,
    molecules: &Matrix,
    tau: f64,
) -> Result<(ContrastiveLoss, EmbeddingGrads)> {
    contrastive_impl(proteins, molecules, tau, true).map(|(l, g)| (l, g.expect("requested")))
}

fn check_codes(embeddings: &Matrix, codes: &Matrix, side: &str) -> Result<()> {
    if embeddings.rows() != codes.rows() || embeddings.cols() != codes.cols() {
        return Err(Error::Shape(format!(
            "{side} codes are {}x{}, embeddings {}x{}",
            codes.rows(),
            codes.cols(),
            embeddings.rows(),
            embeddings.cols()
        )));
    }
    if let Some(pos) = codes.as_slice().iter().position(|&b| b != 1.0 && b != -1.0) {
        return Err(Error::InvalidInput(format!(
            "{side} code row {} holds {}; codes must be +1 or -1",
            pos / codes.cols(),
            codes.as_slice()[pos]
        )));
    }
    Ok(())
}

/// Mean squared gap between embeddings and their codes over both modalities,
/// normalized by `n * d`.
pub fn hash_loss(
    proteins: &Matrix,
    molecules: &Matrix,
    protein_codes: &Matrix,
    molecule_codes: &Matrix,
) -> Result<f64> {
    check_pair(proteins, molecules)?;
    check_codes(proteins, protein_codes, "protein")?;
    check_codes(molecules, molecule_codes, "molecule")?;
    let nd = (proteins.rows() * proteins.cols()) as f64;
    let sq = |y: &Matrix, b: &Matrix| -> f64 {
        y.as_slice().iter().zip(b.as_slice()).map(|(y, b)| (y - b).powi(2)).sum()
    };
    Ok((sq(proteins, protein_codes) + sq(molecules, molecule_codes)) / nd)
}

/// Gradient of [`hash_loss`] with codes held constant: `2 (y - b) / (n d)`.
pub fn hash_loss_grad(
    proteins: &Matrix,
    molecules: &Matrix,
    protein_codes: &Matrix,
    molecule_codes: &Matrix,
) -> EmbeddingGrads {
    let nd = (proteins.rows() * proteins.cols()) as f64;
    let grad = |y: &Matrix, b: &Matrix| {
        let data = y
            .as_slice()
            .iter()
            .zip(b.as_slice())
            .map(|(y, b)| 2.0 * (y - b) / nd)
            .collect();
        Matrix::from_vec(y.rows(), y.cols(), data).expect("same shape")
    };
    EmbeddingGrads {
        proteins: grad(proteins, protein_codes),
        molecules: grad(molecules, molecule_codes),
    }
}

/// `contrastive + lambda * hash`. With `lambda == 0` the hash term is skipped
/// entirely, so the total equals the contrastive loss exactly.
pub fn total_loss(
    proteins: &Matrix,
    molecules: &Matrix,
    protein_codes: &Matrix,
    molecule_codes: &Matrix,
    lambda: f64,
    tau: f64,
) -> Result<LossReport> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidInput(format!("lambda must be >= 0, got {lambda}")));
    }
    let c = contrastive_loss(proteins, molecules, tau)?;
    let hash = hash_loss(proteins, molecules, protein_codes, molecule_codes)?;
    Ok(combine(c, hash, lambda))
}

pub(crate) fn combine(c: ContrastiveLoss, hash: f64, lambda: f64) -> LossReport {
    let total = if lambda == 0.0 { c.value } else { c.value + lambda * hash };
    LossReport {
        contrastive: c.value,
        hash,
        total,
        protein_side: c.protein_side,
        molecule_side: c.molecule_side,
    }
}

/// Closed-form code update: every entry replaced by its sign, as `+1.0` / `-1.0`.
pub fn sign_codes(embeddings: &Matrix) -> Result<Matrix> {
    if let Some(pos) = embeddings.as_slice().iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "non-finite embedding entry in row {}",
            pos / embeddings.cols().max(1)
        )));
    }
    let data = embeddings
        .as_slice()
        .iter()
        .map(|&v| if v > 0.0 { 1.0 } else { -1.0 })
        .collect();
    Matrix::from_vec(embeddings.rows(), embeddings.cols(), data)
}

/// Packed codes for each row of both modalities.
pub fn update_codes(proteins: &Matrix, molecules: &Matrix) -> Result<(Vec<BinaryCode>, Vec<BinaryCode>)> {
    let pack = |m: &Matrix| -> Result<Vec<BinaryCode>> {
        m.iter_rows().map(crate::codes::sign_quantize).collect()
    };
    Ok((pack(proteins)?, pack(molecules)?))
}
