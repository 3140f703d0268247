//! Feature files, activity labels, synthetic clustered datasets and splits.
//!
//! Feature files are tab-separated: an identifier followed by the feature
//! values, one row per item. Row `k` of the protein file pairs with row `k`
//! of the molecule file. Label files hold `id<TAB>label`; a molecule counts
//! as active for a protein query when both carry the same label.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::config::KvConfig;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Aligned protein/molecule feature pairs with optional group labels.
#[derive(Debug, Clone, PartialEq)]
pub struct PairDataset {
    pub protein_ids: Vec<String>,
    pub molecule_ids: Vec<String>,
    pub proteins: Matrix,
    pub molecules: Matrix,
    /// Group index per protein and per molecule, from the same label table.
    pub labels: Option<Labels>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Labels {
    pub names: Vec<String>,
    pub proteins: Vec<usize>,
    pub molecules: Vec<usize>,
}

impl PairDataset {
    pub fn new(
        protein_ids: Vec<String>,
        molecule_ids: Vec<String>,
        proteins: Matrix,
        molecules: Matrix,
    ) -> Result<Self> {
        if proteins.rows() != molecules.rows() {
            return Err(Error::Shape(format!(
                "{} proteins but {} molecules",
                proteins.rows(),
                molecules.rows()
            )));
        }
        if protein_ids.len() != proteins.rows() || molecule_ids.len() != molecules.rows() {
            return Err(Error::Shape("identifier count does not match row count".into()));
        }
        Ok(PairDataset {
            protein_ids,
            molecule_ids,
            proteins,
            molecules,
            labels: None,
        })
    }

    pub fn len(&self) -> usize {
        self.proteins.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Group of pair `k` for stratification: its protein label, or `k` itself.
    pub fn group(&self, k: usize) -> usize {
        match &self.labels {
            Some(l) => l.proteins[k],
            None => k,
        }
    }

    /// Molecules that count as actives for protein query `k`.
    pub fn actives_for(&self, k: usize) -> Vec<bool> {
        match &self.labels {
            Some(l) => l.molecules.iter().map(|&g| g == l.proteins[k]).collect(),
            None => (0..self.len()).map(|j| j == k).collect(),
        }
    }

    pub fn subset(&self, indices: &[usize]) -> PairDataset {
        let pick = |v: &[String]| indices.iter().map(|&i| v[i].clone()).collect();
        PairDataset {
            protein_ids: pick(&self.protein_ids),
            molecule_ids: pick(&self.molecule_ids),
            proteins: self.proteins.select_rows(indices),
            molecules: self.molecules.select_rows(indices),
            labels: self.labels.as_ref().map(|l| Labels {
                names: l.names.clone(),
                proteins: indices.iter().map(|&i| l.proteins[i]).collect(),
                molecules: indices.iter().map(|&i| l.molecules[i]).collect(),
            }),
        }
    }

    /// Attaches labels by identifier. Every protein and molecule must have
    /// one; the error lists the identifiers that do not.
    pub fn attach_labels(&mut self, labels: &HashMap<String, String>) -> Result<()> {
        let mut names: Vec<String> = Vec::new();
        let mut index: HashMap<&str, usize> = HashMap::new();
        let mut missing = Vec::new();
        let mut lookup = |id: &String, missing: &mut Vec<String>| -> usize {
            match labels.get(id) {
                Some(label) => *index.entry(label.as_str()).or_insert_with(|| {
                    names.push(label.clone());
                    names.len() - 1
                }),
                None => {
                    missing.push(id.clone());
                    usize::MAX
                }
            }
        };
        let proteins: Vec<usize> = self.protein_ids.iter().map(|id| lookup(id, &mut missing)).collect();
        let molecules: Vec<usize> = self.molecule_ids.iter().map(|id| lookup(id, &mut missing)).collect();
        if !missing.is_empty() {
            return Err(Error::InvalidInput(format!(
                "no label for {} id(s): {}",
                missing.len(),
                missing.join(", ")
            )));
        }
        self.labels = Some(Labels {
            names,
            proteins,
            molecules,
        });
        Ok(())
    }
}

/// Reads a feature TSV into identifiers and a row matrix.
pub fn read_features(path: &Path) -> Result<(Vec<String>, Matrix)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_features(&text, &path.display().to_string())
}

pub fn parse_features(text: &str, origin: &str) -> Result<(Vec<String>, Matrix)> {
    let mut ids = Vec::new();
    let mut values = Vec::new();
    let mut width = None;
    for (i, line) in text.lines().enumerate() {
        let err = |message: String| Error::Parse {
            path: origin.to_string(),
            line: i + 1,
            message,
        };
        let mut fields = line.split('\t');
        let id = fields.next().unwrap_or("");
        if id.trim().is_empty() {
            return Err(err("missing identifier".into()));
        }
        let start = values.len();
        for (f, field) in fields.enumerate() {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| err(format!("field {} ({field:?}) is not a number", f + 2)))?;
            if !v.is_finite() {
                return Err(err(format!("field {} is not finite", f + 2)));
            }
            values.push(v);
        }
        let n = values.len() - start;
        if n == 0 {
            return Err(err("row has no feature values".into()));
        }
        match width {
            None => width = Some(n),
            Some(w) if w != n => {
                return Err(err(format!("row has {n} values, earlier rows have {w}")))
            }
            _ => {}
        }
        ids.push(id.to_string());
    }
    let matrix = Matrix::from_vec(ids.len(), width.unwrap_or(0), values)?;
    Ok((ids, matrix))
}

pub fn format_features(ids: &[String], m: &Matrix) -> String {
    let mut out = String::new();
    for (id, row) in ids.iter().zip(m.iter_rows()) {
        out.push_str(id);
        for v in row {
            write!(out, "\t{v}").unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn write_features(path: &Path, ids: &[String], m: &Matrix) -> Result<()> {
    std::fs::write(path, format_features(ids, m)).map_err(|e| Error::io(path, e))
}

/// Loads a protein file and a molecule file whose rows pair up by position.
pub fn load_pairs(protein_path: &Path, molecule_path: &Path) -> Result<PairDataset> {
    let (pids, proteins) = read_features(protein_path)?;
    let (mids, molecules) = read_features(molecule_path)?;
    if pids.len() != mids.len() {
        return Err(Error::InvalidInput(format!(
            "{} has {} rows but {} has {} rows",
            protein_path.display(),
            pids.len(),
            molecule_path.display(),
            mids.len()
        )));
    }
    PairDataset::new(pids, mids, proteins, molecules)
}

pub fn read_labels(path: &Path) -> Result<HashMap<String, String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        let err = |message: String| Error::Parse {
            path: path.display().to_string(),
            line: i + 1,
            message,
        };
        let (id, label) = line
            .split_once('\t')
            .ok_or_else(|| err("expected id<TAB>label".into()))?;
        if id.is_empty() || label.is_empty() || label.contains('\t') {
            return Err(err("expected id<TAB>label".into()));
        }
        if out.insert(id.to_string(), label.to_string()).is_some() {
            return Err(err(format!("duplicate id {id:?}")));
        }
    }
    Ok(out)
}

pub fn write_labels(path: &Path, ds: &PairDataset) -> Result<()> {
    let labels = ds
        .labels
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("dataset has no labels".into()))?;
    let mut out = String::new();
    for (id, &g) in ds.protein_ids.iter().zip(&labels.proteins) {
        writeln!(out, "{id}\t{}", labels.names[g]).unwrap();
    }
    for (id, &g) in ds.molecule_ids.iter().zip(&labels.molecules) {
        writeln!(out, "{id}\t{}", labels.names[g]).unwrap();
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Parameters of a clustered synthetic pair dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub num_clusters: usize,
    pub pairs_per_cluster: usize,
    pub protein_dim: usize,
    pub molecule_dim: usize,
    pub center_scale: f64,
    pub noise: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            num_clusters: 24,
            pairs_per_cluster: 32,
            protein_dim: 32,
            molecule_dim: 24,
            center_scale: 1.0,
            noise: 0.35,
            seed: 1,
        }
    }
}

impl SynthSpec {
    pub const KEYS: [&'static str; 7] = [
        "clusters",
        "pairs_per_cluster",
        "protein_dim",
        "molecule_dim",
        "center_scale",
        "noise",
        "seed",
    ];

    pub fn from_config(cfg: &KvConfig) -> Result<Self> {
        cfg.ensure_known(&Self::KEYS)?;
        let mut spec = SynthSpec::default();
        spec.apply(cfg, "seed")?;
        Ok(spec)
    }

    /// Overrides fields present in `cfg`, reading the seed from `seed_key`.
    /// Other keys are left to the caller.
    pub fn apply(&mut self, cfg: &KvConfig, seed_key: &str) -> Result<()> {
        macro_rules! set {
            ($field:ident, $key:expr) => {
                if let Some(v) = cfg.get($key)? {
                    self.$field = v;
                }
            };
        }
        set!(num_clusters, "clusters");
        set!(pairs_per_cluster, "pairs_per_cluster");
        set!(protein_dim, "protein_dim");
        set!(molecule_dim, "molecule_dim");
        set!(center_scale, "center_scale");
        set!(noise, "noise");
        set!(seed, seed_key);
        self.validate()
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_clusters == 0
            || self.pairs_per_cluster == 0
            || self.protein_dim == 0
            || self.molecule_dim == 0
        {
            return Err(Error::InvalidInput("synthetic sizes must be positive".into()));
        }
        if !(self.center_scale > 0.0 && self.center_scale.is_finite()) {
            return Err(Error::InvalidInput("center_scale must be positive".into()));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::InvalidInput("noise must be >= 0".into()));
        }
        Ok(())
    }

    pub fn latent_dim(&self) -> usize {
        self.protein_dim.min(self.molecule_dim)
    }
}

/// Clustered pairs: each cluster has a latent center seen in both modalities
/// through fixed random linear maps; each item adds independent Gaussian
/// noise of standard deviation `noise`. Pairs are labeled by cluster.
pub fn generate_synthetic(spec: &SynthSpec) -> Result<PairDataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let latent = spec.latent_dim();
    let mut gaussian = |n: usize, scale: f64| -> Vec<f64> {
        (0..n)
            .map(|_| scale * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
            .collect()
    };
    let map_p = gaussian(spec.protein_dim * latent, 1.0 / (latent as f64).sqrt());
    let map_m = gaussian(spec.molecule_dim * latent, 1.0 / (latent as f64).sqrt());
    let centers = gaussian(spec.num_clusters * latent, spec.center_scale);
    let image = |map: &[f64], dim: usize, z: &[f64]| -> Vec<f64> {
        (0..dim)
            .map(|r| map[r * latent..(r + 1) * latent].iter().zip(z).map(|(a, b)| a * b).sum())
            .collect()
    };

    let total = spec.num_clusters * spec.pairs_per_cluster;
    let mut proteins = Matrix::zeros(total, spec.protein_dim);
    let mut molecules = Matrix::zeros(total, spec.molecule_dim);
    let mut groups = Vec::with_capacity(total);
    for c in 0..spec.num_clusters {
        let z = &centers[c * latent..(c + 1) * latent];
        let cp = image(&map_p, spec.protein_dim, z);
        let cm = image(&map_m, spec.molecule_dim, z);
        for j in 0..spec.pairs_per_cluster {
            let k = c * spec.pairs_per_cluster + j;
            let np = gaussian(spec.protein_dim, spec.noise);
            let nm = gaussian(spec.molecule_dim, spec.noise);
            for ((dst, base), e) in proteins.row_mut(k).iter_mut().zip(&cp).zip(&np) {
                *dst = base + e;
            }
            for ((dst, base), e) in molecules.row_mut(k).iter_mut().zip(&cm).zip(&nm) {
                *dst = base + e;
            }
            groups.push(c);
        }
    }
    let mut ds = PairDataset::new(
        (0..total).map(|k| format!("p{k}")).collect(),
        (0..total).map(|k| format!("m{k}")).collect(),
        proteins,
        molecules,
    )?;
    ds.labels = Some(Labels {
        names: (0..spec.num_clusters).map(|c| format!("c{c}")).collect(),
        proteins: groups.clone(),
        molecules: groups,
    });
    Ok(ds)
}

/// Stratified split into train / validation / test.
///
/// Pairs are grouped (by protein label, or one group when unlabeled), each
/// group is shuffled with `seed`, and each group contributes
/// `round(fraction * size)` pairs to train and validation with the rest to
/// test. Indices within each split keep dataset order.
pub fn split(ds: &PairDataset, fractions: [f64; 3], seed: u64) -> Result<(PairDataset, PairDataset, PairDataset)> {
    if fractions.iter().any(|f| !(*f >= 0.0 && f.is_finite())) {
        return Err(Error::InvalidInput(format!("split fractions must be >= 0: {fractions:?}")));
    }
    let sum: f64 = fractions.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidInput(format!("split fractions sum to {sum}, not 1")));
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut slot: HashMap<usize, usize> = HashMap::new();
    for k in 0..ds.len() {
        let g = if ds.labels.is_some() { ds.group(k) } else { 0 };
        let s = *slot.entry(g).or_insert_with(|| {
            groups.push(Vec::new());
            groups.len() - 1
        });
        groups[s].push(k);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut parts: [Vec<usize>; 3] = Default::default();
    for members in &mut groups {
        members.shuffle(&mut rng);
        let m = members.len();
        let n_train = ((fractions[0] * m as f64).round() as usize).min(m);
        let n_val = ((fractions[1] * m as f64).round() as usize).min(m - n_train);
        parts[0].extend_from_slice(&members[..n_train]);
        parts[1].extend_from_slice(&members[n_train..n_train + n_val]);
        parts[2].extend_from_slice(&members[n_train + n_val..]);
    }
    for (i, part) in parts.iter_mut().enumerate() {
        part.sort_unstable();
        if fractions[i] > 0.0 && part.is_empty() {
            return Err(Error::InvalidInput(format!(
                "{} split is empty with fraction {}",
                ["train", "validation", "test"][i],
                fractions[i]
            )));
        }
    }
    Ok((ds.subset(&parts[0]), ds.subset(&parts[1]), ds.subset(&parts[2])))
}
