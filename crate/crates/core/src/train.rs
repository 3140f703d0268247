//! Alternating optimization of the encoders.
//!
//! Each step encodes a batch, fixes the codes at the sign of the current
//! embeddings, and takes a gradient step on the encoder parameters with the
//! codes held constant. No gradient flows through the sign function.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::KvConfig;
use crate::dataio::PairDataset;
use crate::encoder::{Activation, EncoderConfig, EncoderParams, Modality};
use crate::error::{Error, Result};
use crate::loss::{self, combine, contrastive_loss_with_grad, hash_loss, hash_loss_grad, sign_codes, LossReport};
use crate::matrix::Matrix;
use crate::metrics::{MetricReport, Mode};
use crate::screen::screen_dataset;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingConfig {
    pub lambda: f64,
    pub tau: f64,
    pub batch_size: usize,
    pub code_bits: usize,
    pub hidden_dim: usize,
    pub activation: Activation,
    pub epochs: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    /// Batches whose summed gradients make one optimizer update.
    pub accumulation_steps: usize,
    pub seed: u64,
    pub val_fraction: f64,
    pub test_fraction: f64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            lambda: 0.2,
            tau: 0.07,
            batch_size: 48,
            code_bits: 128,
            hidden_dim: 64,
            activation: Activation::Tanh,
            epochs: 60,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            accumulation_steps: 1,
            seed: 0,
            val_fraction: 0.2,
            test_fraction: 0.2,
        }
    }
}

impl TrainingConfig {
    pub const KEYS: [&'static str; 16] = [
        "lambda",
        "tau",
        "batch_size",
        "code_length",
        "code_bits",
        "hidden_dim",
        "activation",
        "epochs",
        "lr",
        "beta1",
        "beta2",
        "adam_eps",
        "accumulation_steps",
        "seed",
        "val_fraction",
        "test_fraction",
    ];

    /// Overrides fields present in `cfg`; other keys are left to the caller.
    pub fn apply(&mut self, cfg: &KvConfig) -> Result<()> {
        macro_rules! set {
            ($field:ident, $key:expr) => {
                if let Some(v) = cfg.get($key)? {
                    self.$field = v;
                }
            };
        }
        set!(lambda, "lambda");
        set!(tau, "tau");
        set!(batch_size, "batch_size");
        if cfg.raw("code_length").is_some() && cfg.raw("code_bits").is_some() {
            return Err(Error::InvalidInput(format!(
                "{}: code_length and code_bits are aliases; give one",
                cfg.origin()
            )));
        }
        set!(code_bits, "code_length");
        set!(code_bits, "code_bits");
        set!(hidden_dim, "hidden_dim");
        set!(activation, "activation");
        set!(epochs, "epochs");
        set!(learning_rate, "lr");
        set!(beta1, "beta1");
        set!(beta2, "beta2");
        set!(adam_eps, "adam_eps");
        set!(accumulation_steps, "accumulation_steps");
        set!(seed, "seed");
        set!(val_fraction, "val_fraction");
        set!(test_fraction, "test_fraction");
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(m));
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return bad(format!("tau must be > 0, got {}", self.tau));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be >= 0, got {}", self.lambda));
        }
        if self.batch_size == 0 || self.code_bits == 0 || self.accumulation_steps == 0 {
            return bad("batch_size, code_bits and accumulation_steps must be positive".into());
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning rate must be >= 0, got {}", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.adam_eps > 0.0) {
            return bad("Adam needs 0 <= beta < 1 and eps > 0".into());
        }
        let held_out = self.val_fraction + self.test_fraction;
        if !(self.val_fraction >= 0.0 && self.test_fraction >= 0.0 && held_out < 1.0) {
            return bad(format!(
                "validation and test fractions must be >= 0 and leave room for training, got {} and {}",
                self.val_fraction, self.test_fraction
            ));
        }
        Ok(())
    }

    pub fn split_fractions(&self) -> [f64; 3] {
        [1.0 - self.val_fraction - self.test_fraction, self.val_fraction, self.test_fraction]
    }

    pub fn encoder_config(&self, protein_dim: usize, molecule_dim: usize) -> EncoderConfig {
        EncoderConfig {
            protein_dim,
            molecule_dim,
            hidden_dim: self.hidden_dim,
            code_bits: self.code_bits,
            activation: self.activation,
            seed: self.seed,
        }
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(params: &EncoderParams, config: &TrainingConfig) -> Self {
        let zeros: Vec<Vec<f64>> = params.tensors().map(|t| vec![0.0; t.len()]).collect();
        Adam {
            lr: config.learning_rate,
            beta1: config.beta1,
            beta2: config.beta2,
            eps: config.adam_eps,
            t: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn steps(&self) -> i32 {
        self.t
    }

    pub fn step(&mut self, params: &mut EncoderParams, grads: &EncoderParams) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for (((p, g), m), v) in params
            .tensors_mut()
            .zip(grads.tensors())
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            for i in 0..p.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let mhat = m[i] / c1;
                let vhat = v[i] / c2;
                p[i] -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
    }
}

/// Aligned batch: row `k` of both matrices is a positive pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PairBatch {
    pub proteins: Matrix,
    pub molecules: Matrix,
}

impl PairBatch {
    pub fn new(proteins: Matrix, molecules: Matrix) -> Result<Self> {
        if proteins.rows() != molecules.rows() {
            return Err(Error::Shape(format!(
                "batch has {} proteins but {} molecules",
                proteins.rows(),
                molecules.rows()
            )));
        }
        if proteins.rows() == 0 {
            return Err(Error::InvalidInput("empty batch".into()));
        }
        Ok(PairBatch { proteins, molecules })
    }

    pub fn from_dataset(ds: &PairDataset, indices: &[usize]) -> Result<Self> {
        Self::new(ds.proteins.select_rows(indices), ds.molecules.select_rows(indices))
    }

    pub fn len(&self) -> usize {
        self.proteins.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Loss of one batch under the current parameters, with codes set to the
/// signs of the current embeddings.
pub fn batch_loss(params: &EncoderParams, batch: &PairBatch, lambda: f64, tau: f64) -> Result<LossReport> {
    let yp = params.encode_batch(Modality::Protein, &batch.proteins)?;
    let ym = params.encode_batch(Modality::Molecule, &batch.molecules)?;
    let bp = sign_codes(&yp)?;
    let bm = sign_codes(&ym)?;
    loss::total_loss(&yp, &ym, &bp, &bm, lambda, tau)
}

/// Loss and its gradient for every encoder parameter. Codes are the signs of
/// the embeddings at the current parameters and are treated as constants.
pub fn loss_and_gradients(
    params: &EncoderParams,
    batch: &PairBatch,
    lambda: f64,
    tau: f64,
) -> Result<(LossReport, EncoderParams)> {
    let yp = params.encode_batch(Modality::Protein, &batch.proteins)?;
    let ym = params.encode_batch(Modality::Molecule, &batch.molecules)?;
    let bp = sign_codes(&yp)?;
    let bm = sign_codes(&ym)?;
    loss_and_gradients_with_codes(params, batch, &yp, &ym, &bp, &bm, lambda, tau)
}

#[allow(clippy::too_many_arguments)]
fn loss_and_gradients_with_codes(
    params: &EncoderParams,
    batch: &PairBatch,
    yp: &Matrix,
    ym: &Matrix,
    bp: &Matrix,
    bm: &Matrix,
    lambda: f64,
    tau: f64,
) -> Result<(LossReport, EncoderParams)> {
    let (c, mut grads) = contrastive_loss_with_grad(yp, ym, tau)?;
    let hash = hash_loss(yp, ym, bp, bm)?;
    if lambda != 0.0 {
        let hg = hash_loss_grad(yp, ym, bp, bm);
        for (g, h) in grads.proteins.as_mut_slice().iter_mut().zip(hg.proteins.as_slice()) {
            *g += lambda * h;
        }
        for (g, h) in grads.molecules.as_mut_slice().iter_mut().zip(hg.molecules.as_slice()) {
            *g += lambda * h;
        }
    }
    let report = combine(c, hash, lambda);
    let mut param_grads = params.zeros_like();
    for k in 0..batch.len() {
        params
            .protein
            .backward_accumulate(batch.proteins.row(k), grads.proteins.row(k), &mut param_grads.protein)?;
        params
            .molecule
            .backward_accumulate(batch.molecules.row(k), grads.molecules.row(k), &mut param_grads.molecule)?;
    }
    Ok((report, param_grads))
}

/// Total loss as a function of the parameters with codes pinned to `codes`.
/// Used for finite-difference checks of [`loss_and_gradients`].
pub fn loss_with_fixed_codes(
    params: &EncoderParams,
    batch: &PairBatch,
    codes: (&Matrix, &Matrix),
    lambda: f64,
    tau: f64,
) -> Result<LossReport> {
    let yp = params.encode_batch(Modality::Protein, &batch.proteins)?;
    let ym = params.encode_batch(Modality::Molecule, &batch.molecules)?;
    loss::total_loss(&yp, &ym, codes.0, codes.1, lambda, tau)
}

fn diverged(report: &LossReport, grads: &EncoderParams) -> Option<String> {
    if !report.is_finite() {
        return Some(format!(
            "non-finite loss (contrastive {}, hash {}, total {})",
            report.contrastive, report.hash, report.total
        ));
    }
    if !grads.all_finite() {
        return Some(format!("non-finite gradient at loss {}", report.total));
    }
    None
}

/// Stateful trainer: parameters, optimizer state and pending accumulated
/// gradients.
pub struct Trainer {
    params: EncoderParams,
    optimizer: Adam,
    config: TrainingConfig,
    pending: Option<EncoderParams>,
    pending_batches: usize,
}

impl Trainer {
    pub fn new(params: EncoderParams, config: TrainingConfig) -> Result<Self> {
        config.validate()?;
        if params.code_bits() != config.code_bits {
            return Err(Error::Shape(format!(
                "encoder emits {} bits, training config asks for {}",
                params.code_bits(),
                config.code_bits
            )));
        }
        let optimizer = Adam::new(&params, &config);
        Ok(Trainer {
            params,
            optimizer,
            config,
            pending: None,
            pending_batches: 0,
        })
    }

    pub fn params(&self) -> &EncoderParams {
        &self.params
    }

    pub fn into_params(mut self) -> EncoderParams {
        self.flush();
        self.params
    }

    pub fn optimizer_steps(&self) -> i32 {
        self.optimizer.steps()
    }

    /// One alternation on `batch`. The optimizer update happens once every
    /// `accumulation_steps` batches.
    pub fn step(&mut self, batch: &PairBatch) -> Result<LossReport> {
        let (report, grads) = loss_and_gradients(&self.params, batch, self.config.lambda, self.config.tau)?;
        if let Some(why) = diverged(&report, &grads) {
            return Err(Error::Diverged(why));
        }
        match &mut self.pending {
            Some(acc) => acc.add_scaled(&grads, 1.0),
            None => self.pending = Some(grads),
        }
        self.pending_batches += 1;
        if self.pending_batches == self.config.accumulation_steps {
            self.flush();
        }
        Ok(report)
    }

    /// Applies any accumulated gradient now.
    pub fn flush(&mut self) {
        if let Some(grads) = self.pending.take() {
            self.optimizer.step(&mut self.params, &grads);
        }
        self.pending_batches = 0;
    }
}

/// A single alternation from fresh optimizer state.
pub fn train_step(params: &EncoderParams, batch: &PairBatch, config: &TrainingConfig) -> Result<(EncoderParams, LossReport)> {
    let mut config = config.clone();
    config.accumulation_steps = 1;
    let mut trainer = Trainer::new(params.clone(), config)?;
    let report = trainer.step(batch)?;
    Ok((trainer.into_params(), report))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub batches: usize,
    pub contrastive: f64,
    pub hash: f64,
    pub total: f64,
    /// Mean BEDROC of hashed retrieval on the validation split.
    pub val_bedroc: Option<f64>,
    /// Mean total loss over validation batches.
    pub val_loss: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the best validation BEDROC (the last
    /// epoch when there is no validation split).
    pub params: EncoderParams,
    pub best_epoch: usize,
    pub curve: Vec<EpochRecord>,
}

/// Mean total loss over consecutive batches of `batch_size` validation pairs.
/// A trailing partial batch is used only when it is the whole set.
pub fn validation_loss(params: &EncoderParams, ds: &PairDataset, config: &TrainingConfig) -> Result<Option<f64>> {
    let n = ds.len();
    if n < 2 {
        return Ok(None);
    }
    let size = config.batch_size.min(n);
    let mut sum = 0.0;
    let mut count = 0;
    for start in (0..n).step_by(size) {
        if start + size > n {
            break;
        }
        let idx: Vec<usize> = (start..start + size).collect();
        let batch = PairBatch::from_dataset(ds, &idx)?;
        sum += batch_loss(params, &batch, config.lambda, config.tau)?.total;
        count += 1;
    }
    Ok(Some(sum / count as f64))
}

/// Mean hashed-retrieval metrics over the dataset's protein queries.
pub fn validation_metrics(params: &EncoderParams, ds: &PairDataset) -> Result<MetricReport> {
    let reports = screen_dataset(params, ds, Mode::Hamming)?;
    let metrics: Vec<MetricReport> = reports.into_iter().map(|r| r.metrics).collect();
    MetricReport::mean(&metrics).ok_or_else(|| Error::UndefinedMetric("empty validation set".into()))
}

/// Full training run.
///
/// Each epoch shuffles the training pairs with a generator seeded from
/// `config.seed`, walks them in batches of `batch_size` and drops the last
/// partial batch. After every epoch the validation split (if any) is scored.
pub fn train(train_set: &PairDataset, validation: Option<&PairDataset>, config: &TrainingConfig) -> Result<TrainOutcome> {
    train_with_observer(train_set, validation, config, |_| {})
}

pub fn train_with_observer(
    train_set: &PairDataset,
    validation: Option<&PairDataset>,
    config: &TrainingConfig,
    mut observe: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(Error::InvalidInput("training set is empty".into()));
    }
    if train_set.len() < config.batch_size {
        return Err(Error::InvalidInput(format!(
            "training set has {} pairs, fewer than one batch of {}",
            train_set.len(),
            config.batch_size
        )));
    }
    let validation = validation.filter(|v| !v.is_empty());
    let enc = config.encoder_config(train_set.proteins.cols(), train_set.molecules.cols());
    let params = EncoderParams::init(&enc)?;
    let mut trainer = Trainer::new(params, config.clone())?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5_eed0_fba7_c4e5);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut curve = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, EncoderParams)> = None;

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut sums = LossReport::default();
        let mut batches = 0;
        for chunk in order.chunks_exact(config.batch_size) {
            let batch = PairBatch::from_dataset(train_set, chunk)?;
            let r = trainer.step(&batch)?;
            sums.contrastive += r.contrastive;
            sums.hash += r.hash;
            sums.total += r.total;
            batches += 1;
        }
        trainer.flush();
        let nb = batches as f64;
        let (val_bedroc, val_loss) = match validation {
            Some(v) => (
                Some(validation_metrics(trainer.params(), v)?.bedroc),
                validation_loss(trainer.params(), v, config)?,
            ),
            None => (None, None),
        };
        let record = EpochRecord {
            epoch,
            batches,
            contrastive: sums.contrastive / nb,
            hash: sums.hash / nb,
            total: sums.total / nb,
            val_bedroc,
            val_loss,
        };
        observe(&record);
        let score = val_bedroc.unwrap_or(f64::NEG_INFINITY);
        let improved = match &best {
            None => true,
            Some((s, _, _)) => validation.is_none() || score > *s,
        };
        if improved {
            best = Some((score, epoch, trainer.params().clone()));
        }
        curve.push(record);
    }
    let (params, best_epoch) = match best {
        Some((_, e, p)) => (p, e),
        None => (trainer.into_params(), 0),
    };
    Ok(TrainOutcome {
        params,
        best_epoch,
        curve,
    })
}

/// Training curve CSV: `epoch,contrastive,hash,total,val_bedroc,val_loss`.
pub fn curve_csv(curve: &[EpochRecord]) -> String {
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut out = String::from("epoch,contrastive,hash,total,val_bedroc,val_loss\n");
    for r in curve {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.epoch,
            r.contrastive,
            r.hash,
            r.total,
            opt(r.val_bedroc),
            opt(r.val_loss)
        ));
    }
    out
}
