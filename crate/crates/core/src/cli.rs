//! Command-line front end.
//!
//! Failures print one line `error[<category>]: <message>` on standard error
//! and exit with 2 (input), 3 (data or shape), 4 (divergence) or 5 (I/O).

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::bench::{bench, BenchOptions};
use crate::codedb::{read_ids, sidecar_path, topk_hamming, write_ids, CodeDatabase, DatabaseWriter};
use crate::codes::{sign_quantize, BinaryCode, CodeLength};
use crate::config::KvConfig;
use crate::dataio::{
    generate_synthetic, load_pairs, read_features, read_labels, split, write_features, write_labels, PairDataset,
    SynthSpec,
};
use crate::encoder::{EncoderParams, Modality};
use crate::error::{Category, Error, Result};
use crate::matrix::Matrix;
use crate::metrics::Mode;
use crate::screen::{reports_csv, screen_dataset, screen_embeddings, summarize, QueryReport, ScreenSummary};
use crate::train::{curve_csv, train_with_observer, TrainOutcome, TrainingConfig};

/// Rows encoded per parallel batch when streaming a feature file.
const ENCODE_CHUNK: usize = 4096;

#[derive(Parser, Debug)]
#[command(name = "hashscreen", version, about = "Binary hash codes for protein to molecule screening")]
#[command(after_help = "Set HASHSCREEN_THREADS to cap the number of scan and encoding threads.")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write a clustered synthetic pair dataset.
    Synth(SynthArgs),
    /// Train both encoders and write a checkpoint plus the per-epoch curve.
    Train(TrainArgs),
    /// Encode a feature file and write its sign codes as a database.
    Encode(EncodeArgs),
    /// Build a database from `id<TAB>bits` lines.
    Build(BuildArgs),
    /// Top-k Hamming search of a database.
    Search(SearchArgs),
    /// Screening metrics for every protein query of a labeled set.
    Eval(EvalArgs),
    /// Compare packed-code and 32-bit real stores on size and scan time.
    Bench(BenchArgs),
    /// Train and evaluate once per lambda or code length.
    Sweep(SweepArgs),
}

#[derive(Args, Debug, Clone, Default)]
pub struct Overrides {
    /// Training seed; also drives the split and batch order.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Weight of the quantization loss.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Softmax temperature.
    #[arg(long)]
    pub tau: Option<f64>,
    /// Code length in bits.
    #[arg(long)]
    pub code_bits: Option<usize>,
    /// Pairs per batch.
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
}

#[derive(Args, Debug, Clone, Default)]
pub struct DataArgs {
    /// Protein feature TSV (`id<TAB>f1<TAB>...`). For train and sweep, a synthetic set is generated from the config when absent.
    #[arg(long, requires = "molecules")]
    pub proteins: Option<PathBuf>,
    /// Molecule feature TSV, row k paired with protein row k.
    #[arg(long, requires = "proteins")]
    pub molecules: Option<PathBuf>,
    /// `id<TAB>label` file covering every protein and molecule.
    #[arg(long)]
    pub labels: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// `key = value` file with synthetic-data keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Data seed; overrides `data_seed` from the config.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of related groups.
    #[arg(long)]
    pub clusters: Option<usize>,
    #[arg(long)]
    pub pairs_per_cluster: Option<usize>,
    /// Standard deviation of the per-pair noise.
    #[arg(long)]
    pub noise: Option<f64>,
    /// Output directory for proteins.tsv, molecules.tsv and labels.tsv.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// `key = value` run configuration; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub overrides: Overrides,
    /// Checkpoint path.
    #[arg(long)]
    pub out: PathBuf,
    /// Per-epoch curve CSV; printed to standard output when absent.
    #[arg(long)]
    pub metrics: Option<PathBuf>,
    /// Directory to receive the held-out test split as TSV files.
    #[arg(long)]
    pub test_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EncodeArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Which tower encodes the input: protein or molecule.
    #[arg(long, default_value = "molecule")]
    pub modality: Modality,
    /// Feature TSV.
    #[arg(long)]
    pub input: PathBuf,
    /// Database path; identifiers go to `<out>.ids`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct BuildArgs {
    /// Lines of `id<TAB>bits`, bit for dimension 0 first.
    #[arg(long)]
    pub codes: PathBuf,
    /// Code length, needed only when the input is empty.
    #[arg(long)]
    pub code_bits: Option<usize>,
    /// Database path; identifiers go to `<out>.ids`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct SearchArgs {
    /// Code database with its `.ids` sidecar.
    #[arg(long)]
    pub db: PathBuf,
    /// Query feature TSV, encoded with --checkpoint.
    #[arg(long, requires = "checkpoint", conflicts_with = "code")]
    pub query: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Tower used to encode --query.
    #[arg(long, default_value = "protein")]
    pub modality: Modality,
    /// Query code as a bit string.
    #[arg(long, required_unless_present = "query")]
    pub code: Option<String>,
    /// Results per query.
    #[arg(long, default_value_t = 10)]
    pub k: usize,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Encode --proteins/--molecules with this checkpoint.
    #[arg(long, requires = "proteins", conflicts_with_all = ["query_db", "db"])]
    pub checkpoint: Option<PathBuf>,
    #[command(flatten)]
    pub data: DataArgs,
    /// Protein code database; row k is paired with row k of --db.
    #[arg(long, requires = "db")]
    pub query_db: Option<PathBuf>,
    /// Molecule code database.
    #[arg(long, requires = "query_db")]
    pub db: Option<PathBuf>,
    /// Score by Hamming distance of sign codes or by cosine of embeddings.
    #[arg(long, default_value = "hamming")]
    pub mode: Mode,
    /// Directory for per_query.csv and summary.json.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    /// Records in each store.
    #[arg(long, default_value_t = 1_000_000)]
    pub count: usize,
    #[arg(long, default_value_t = 128)]
    pub code_bits: usize,
    /// Timed scans per store; the median is reported.
    #[arg(long, default_value_t = 3)]
    pub reps: usize,
    #[arg(long, default_value_t = 100)]
    pub k: usize,
    /// Seed for the random codes and the query.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Scratch directory for the two stores.
    #[arg(long)]
    pub dir: PathBuf,
    /// Keep the stores after timing.
    #[arg(long)]
    pub keep: bool,
    /// Report JSON; printed to standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    /// `key = value` run configuration; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub overrides: Overrides,
    /// Comma-separated lambda values.
    #[arg(long, value_delimiter = ',', conflicts_with = "code_lengths", required_unless_present = "code_lengths")]
    pub lambdas: Vec<f64>,
    /// Comma-separated code lengths.
    #[arg(long, value_delimiter = ',')]
    pub code_lengths: Vec<usize>,
    /// Comparison CSV; printed to standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Directory for one curve CSV per setting.
    #[arg(long)]
    pub curves: Option<PathBuf>,
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let msg = e.kind().as_str().unwrap_or("invalid arguments");
            let detail = e.to_string();
            let first = detail.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("error[{}]: {msg}: {first}", Category::Input.as_str());
            return Category::Input.exit_code();
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            let cat = e.category();
            eprintln!("error[{}]: {}", cat.as_str(), e.to_string().replace('\n', " "));
            cat.exit_code()
        }
    }
}

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Synth(a) => cmd_synth(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Encode(a) => cmd_encode(&a),
        Command::Build(a) => cmd_build(&a),
        Command::Search(a) => cmd_search(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Bench(a) => cmd_bench(&a),
        Command::Sweep(a) => cmd_sweep(&a),
    }
}

/// Config keys accepted by `train` and `sweep`: training keys plus the
/// synthetic-data keys, whose seed is `data_seed`.
fn run_config_keys() -> Vec<&'static str> {
    let mut keys: Vec<&str> = TrainingConfig::KEYS.to_vec();
    keys.extend(SynthSpec::KEYS.iter().filter(|k| **k != "seed"));
    keys.push("data_seed");
    keys
}

fn load_config(path: Option<&Path>) -> Result<KvConfig> {
    match path {
        Some(p) => KvConfig::load(p),
        None => Ok(KvConfig::default()),
    }
}

/// Resolved training config and the dataset it runs on.
struct RunSetup {
    config: TrainingConfig,
    data: PairDataset,
}

fn resolve_run(config: Option<&Path>, data: &DataArgs, ov: &Overrides) -> Result<RunSetup> {
    let cfg = load_config(config)?;
    cfg.ensure_known(&run_config_keys())?;
    let mut tc = TrainingConfig::default();
    tc.apply(&cfg)?;
    if let Some(v) = ov.seed {
        tc.seed = v;
    }
    if let Some(v) = ov.lambda {
        tc.lambda = v;
    }
    if let Some(v) = ov.tau {
        tc.tau = v;
    }
    if let Some(v) = ov.code_bits {
        tc.code_bits = v;
    }
    if let Some(v) = ov.batch_size {
        tc.batch_size = v;
    }
    if let Some(v) = ov.epochs {
        tc.epochs = v;
    }
    tc.validate()?;
    let data = match (&data.proteins, &data.molecules) {
        (Some(p), Some(m)) => {
            let mut ds = load_pairs(p, m)?;
            if let Some(l) = &data.labels {
                ds.attach_labels(&read_labels(l)?)?;
            }
            ds
        }
        _ => {
            let mut spec = SynthSpec::default();
            spec.apply(&cfg, "data_seed")?;
            eprintln!(
                "data: synthetic, {} clusters x {} pairs, noise {}, data_seed {}",
                spec.num_clusters, spec.pairs_per_cluster, spec.noise, spec.seed
            );
            generate_synthetic(&spec)?
        }
    };
    eprintln!(
        "config: lambda {} tau {} code_bits {} batch_size {} epochs {} lr {} seed {}",
        tc.lambda, tc.tau, tc.code_bits, tc.batch_size, tc.epochs, tc.learning_rate, tc.seed
    );
    Ok(RunSetup { config: tc, data })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => write_text(p, text),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|e| Error::io(Path::new("<stdout>"), e))
        }
    }
}

fn write_split(dir: &Path, ds: &PairDataset) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_features(&dir.join("proteins.tsv"), &ds.protein_ids, &ds.proteins)?;
    write_features(&dir.join("molecules.tsv"), &ds.molecule_ids, &ds.molecules)?;
    if ds.labels.is_some() {
        write_labels(&dir.join("labels.tsv"), ds)?;
    }
    Ok(())
}

fn cmd_synth(a: &SynthArgs) -> Result<()> {
    let mut spec = match &a.config {
        Some(p) => SynthSpec::from_config(&KvConfig::load(p)?)?,
        None => SynthSpec::default(),
    };
    if let Some(v) = a.seed {
        spec.seed = v;
    }
    if let Some(v) = a.clusters {
        spec.num_clusters = v;
    }
    if let Some(v) = a.pairs_per_cluster {
        spec.pairs_per_cluster = v;
    }
    if let Some(v) = a.noise {
        spec.noise = v;
    }
    let ds = generate_synthetic(&spec)?;
    write_split(&a.out, &ds)?;
    eprintln!("wrote {} pairs to {}", ds.len(), a.out.display());
    Ok(())
}

/// Splits, trains on the train part and keeps the best validation epoch.
fn fit(setup: &RunSetup) -> Result<(TrainOutcome, PairDataset)> {
    let (tr, va, te) = split(&setup.data, setup.config.split_fractions(), setup.config.seed)?;
    eprintln!("split: train {} validation {} test {}", tr.len(), va.len(), te.len());
    let outcome = train_with_observer(&tr, Some(&va), &setup.config, |r| {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into());
        eprintln!(
            "epoch {:>3} loss {:.4} (contrastive {:.4} hash {:.4}) val_bedroc {} val_loss {}",
            r.epoch,
            r.total,
            r.contrastive,
            r.hash,
            opt(r.val_bedroc),
            opt(r.val_loss)
        );
    })?;
    Ok((outcome, te))
}

fn cmd_train(a: &TrainArgs) -> Result<()> {
    let setup = resolve_run(a.config.as_deref(), &a.data, &a.overrides)?;
    let (outcome, test) = fit(&setup)?;
    outcome.params.save(&a.out)?;
    eprintln!("best epoch {}; checkpoint {}", outcome.best_epoch, a.out.display());
    if let Some(dir) = &a.test_out {
        write_split(dir, &test)?;
    }
    emit(a.metrics.as_deref(), &curve_csv(&outcome.curve))
}

/// Encodes `features` row by row in parallel chunks and streams the codes.
fn encode_into(params: &EncoderParams, modality: Modality, features: &Matrix, writer: &mut DatabaseWriter) -> Result<()> {
    let width = features.cols();
    for start in (0..features.rows()).step_by(ENCODE_CHUNK) {
        let end = (start + ENCODE_CHUNK).min(features.rows());
        let chunk = Matrix::from_vec(end - start, width, features.as_slice()[start * width..end * width].to_vec())?;
        let emb = params.encode_batch(modality, &chunk)?;
        for row in emb.iter_rows() {
            writer.push(&sign_quantize(row)?)?;
        }
    }
    Ok(())
}

fn cmd_encode(a: &EncodeArgs) -> Result<()> {
    let params = EncoderParams::load(&a.checkpoint)?;
    let (ids, features) = read_features(&a.input)?;
    let expected = params.config.input_dim(a.modality);
    if !ids.is_empty() && features.cols() != expected {
        return Err(Error::Shape(format!(
            "{} has {} features per row, the {} encoder expects {expected}",
            a.input.display(),
            features.cols(),
            a.modality
        )));
    }
    let mut writer = DatabaseWriter::create(&a.out, CodeLength::new(params.code_bits())?)?;
    encode_into(&params, a.modality, &features, &mut writer)?;
    let db = writer.finish()?;
    write_ids(&sidecar_path(&a.out), &ids)?;
    eprintln!("wrote {} codes of {} bits to {}", db.len(), db.code_len(), a.out.display());
    Ok(())
}

fn cmd_build(a: &BuildArgs) -> Result<()> {
    let text = std::fs::read_to_string(&a.codes).map_err(|e| Error::io(&a.codes, e))?;
    let mut ids = Vec::new();
    let mut codes = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let err = |message: String| Error::Parse {
            path: a.codes.display().to_string(),
            line: i + 1,
            message,
        };
        let (id, bits) = line.split_once('\t').ok_or_else(|| err("expected id<TAB>bits".into()))?;
        let code = BinaryCode::from_bit_string(bits.trim()).map_err(|e| err(e.to_string()))?;
        if let Some(first) = codes.first().map(BinaryCode::len) {
            if code.len() != first {
                return Err(err(format!("code has {} bits, earlier codes have {first}", code.len())));
            }
        }
        ids.push(id.to_string());
        codes.push(code);
    }
    let len = match (codes.first(), a.code_bits) {
        (Some(c), Some(b)) if c.len().bits() != b => {
            return Err(Error::Shape(format!("codes have {} bits, --code-bits says {b}", c.len())))
        }
        (Some(c), _) => c.len(),
        (None, Some(b)) => CodeLength::new(b)?,
        (None, None) => return Err(Error::InvalidInput("empty input needs --code-bits".into())),
    };
    let mut writer = DatabaseWriter::create(&a.out, len)?;
    for c in &codes {
        writer.push(c)?;
    }
    let db = writer.finish()?;
    write_ids(&sidecar_path(&a.out), &ids)?;
    eprintln!("wrote {} codes of {} bits to {}", db.len(), db.code_len(), a.out.display());
    Ok(())
}

/// Sidecar identifiers, or record indices when there is no sidecar.
fn database_ids(path: &Path, db: &CodeDatabase) -> Result<Vec<String>> {
    let side = sidecar_path(path);
    if side.exists() {
        read_ids(&side, db.len())
    } else {
        Ok((0..db.len()).map(|i| i.to_string()).collect())
    }
}

fn cmd_search(a: &SearchArgs) -> Result<()> {
    let db = CodeDatabase::open(&a.db)?;
    let ids = database_ids(&a.db, &db)?;
    let queries: Vec<(String, BinaryCode)> = match (&a.code, &a.query, &a.checkpoint) {
        (Some(bits), _, _) => vec![("-".to_string(), BinaryCode::from_bit_string(bits.trim())?)],
        (None, Some(q), Some(ck)) => {
            let params = EncoderParams::load(ck)?;
            let (qids, features) = read_features(q)?;
            let expected = params.config.input_dim(a.modality);
            if !qids.is_empty() && features.cols() != expected {
                return Err(Error::Shape(format!(
                    "{} has {} features per row, the {} encoder expects {expected}",
                    q.display(),
                    features.cols(),
                    a.modality
                )));
            }
            let emb = params.encode_batch(a.modality, &features)?;
            qids.into_iter()
                .zip(emb.iter_rows())
                .map(|(id, row)| Ok((id, sign_quantize(row)?)))
                .collect::<Result<_>>()?
        }
        _ => return Err(Error::InvalidInput("search needs --code or --query with --checkpoint".into())),
    };
    let mut out = String::from("query\trank\tid\tdistance\n");
    for (qid, code) in &queries {
        let result = topk_hamming(&db, code, a.k)?;
        for (rank, hit) in result.hits.iter().enumerate() {
            out.push_str(&format!("{qid}\t{}\t{}\t{}\n", rank + 1, ids[hit.index as usize], hit.distance));
        }
    }
    emit(None, &out)
}

/// ±1 rows of every code in a database.
fn sign_matrix(db: &CodeDatabase) -> Result<Matrix> {
    let bits = db.code_len().bits();
    let mut data = Vec::with_capacity(db.len() * bits);
    for code in db.iter() {
        data.extend(code?.to_f64());
    }
    Matrix::from_vec(db.len(), bits, data)
}

fn evaluate(a: &EvalArgs) -> Result<(Vec<QueryReport>, usize)> {
    if let (Some(qpath), Some(dpath)) = (&a.query_db, &a.db) {
        let qdb = CodeDatabase::open(qpath)?;
        let mdb = CodeDatabase::open(dpath)?;
        if qdb.code_len() != mdb.code_len() {
            return Err(Error::Shape(format!(
                "query codes have {} bits, database codes {}",
                qdb.code_len(),
                mdb.code_len()
            )));
        }
        let (p, m) = (sign_matrix(&qdb)?, sign_matrix(&mdb)?);
        let mut ds = PairDataset::new(database_ids(qpath, &qdb)?, database_ids(dpath, &mdb)?, p.clone(), m.clone())?;
        if let Some(l) = &a.data.labels {
            ds.attach_labels(&read_labels(l)?)?;
        }
        return Ok((screen_embeddings(&ds, &p, &m, a.mode)?, mdb.len()));
    }
    let (Some(ck), Some(pp), Some(mp)) = (&a.checkpoint, &a.data.proteins, &a.data.molecules) else {
        return Err(Error::InvalidInput(
            "eval needs --checkpoint with --proteins/--molecules, or --query-db with --db".into(),
        ));
    };
    let params = EncoderParams::load(ck)?;
    let mut ds = load_pairs(pp, mp)?;
    for (modality, m) in [(Modality::Protein, &ds.proteins), (Modality::Molecule, &ds.molecules)] {
        let expected = params.config.input_dim(modality);
        if m.rows() > 0 && m.cols() != expected {
            return Err(Error::Shape(format!(
                "{modality} features have {} columns, the checkpoint expects {expected}",
                m.cols()
            )));
        }
    }
    if let Some(l) = &a.data.labels {
        ds.attach_labels(&read_labels(l)?)?;
    }
    Ok((screen_dataset(&params, &ds, a.mode)?, ds.len()))
}

fn summary_json(summary: &ScreenSummary) -> String {
    serde_json::to_string_pretty(summary).expect("summary serializes") + "\n"
}

fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let (reports, db_size) = evaluate(a)?;
    let summary = summarize(&reports, a.mode, db_size);
    write_text(&a.out.join("per_query.csv"), &reports_csv(&reports))?;
    write_text(&a.out.join("summary.json"), &summary_json(&summary))?;
    eprintln!(
        "{} queries, mean auroc {:.4} bedroc {:.4}; wrote {}",
        summary.queries,
        summary.mean.auroc,
        summary.mean.bedroc,
        a.out.display()
    );
    Ok(())
}

fn cmd_bench(a: &BenchArgs) -> Result<()> {
    let opts = BenchOptions {
        count: a.count,
        code_bits: a.code_bits,
        repetitions: a.reps,
        k: a.k,
        dir: a.dir.clone(),
        seed: a.seed,
        keep_files: a.keep,
    };
    let report = bench(&opts)?;
    emit(a.out.as_deref(), &(serde_json::to_string_pretty(&report).expect("report serializes") + "\n"))
}

/// Header of the sweep comparison CSV.
pub const SWEEP_HEADER: &str = "setting,bedroc,ef0.5,ef1,ef5,auroc,best_epoch,status";

fn cmd_sweep(a: &SweepArgs) -> Result<()> {
    let base = resolve_run(a.config.as_deref(), &a.data, &a.overrides)?;
    let settings: Vec<(String, TrainingConfig)> = if a.code_lengths.is_empty() {
        a.lambdas
            .iter()
            .map(|&l| (format!("lambda={l}"), TrainingConfig { lambda: l, ..base.config.clone() }))
            .collect()
    } else {
        a.code_lengths
            .iter()
            .map(|&d| (format!("code_bits={d}"), TrainingConfig { code_bits: d, ..base.config.clone() }))
            .collect()
    };
    let mut out = format!("{SWEEP_HEADER}\n");
    for (name, config) in settings {
        eprintln!("setting {name}");
        let setup = RunSetup { config, data: base.data.clone() };
        let row = fit(&setup).and_then(|(outcome, test)| {
            if let Some(dir) = &a.curves {
                write_text(&dir.join(format!("{}.csv", name.replace('=', "_"))), &curve_csv(&outcome.curve))?;
            }
            let reports = screen_dataset(&outcome.params, &test, Mode::Hamming)?;
            Ok((summarize(&reports, Mode::Hamming, test.len()), outcome.best_epoch))
        });
        match row {
            Ok((s, best)) => {
                let m = s.mean;
                out.push_str(&format!(
                    "{name},{},{},{},{},{},{best},ok\n",
                    m.bedroc, m.ef.ef0_5, m.ef.ef1, m.ef.ef5, m.auroc
                ));
            }
            Err(e) => {
                eprintln!("setting {name} failed: {e}");
                out.push_str(&format!("{name},,,,,,,failed:{}\n", e.category().as_str()));
            }
        }
    }
    emit(a.out.as_deref(), &out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_flags_and_rejects_unknown() {
        let cli = Cli::try_parse_from(["hashscreen", "train", "--out", "x.ck", "--lambda", "0.5", "--epochs", "3"]).unwrap();
        match cli.command {
            Command::Train(t) => {
                assert_eq!(t.overrides.lambda, Some(0.5));
                assert_eq!(t.overrides.epochs, Some(3));
            }
            other => panic!("{other:?}"),
        }
        assert!(Cli::try_parse_from(["hashscreen", "train", "--out", "x", "--bogus"]).is_err());
        // proteins and molecules come together
        assert!(Cli::try_parse_from(["hashscreen", "train", "--out", "x", "--proteins", "p.tsv"]).is_err());
        assert!(Cli::try_parse_from(["hashscreen", "sweep"]).is_err());
        assert!(Cli::try_parse_from(["hashscreen", "sweep", "--lambdas", "0", "--code-lengths", "64"]).is_err());
        let s = Cli::try_parse_from(["hashscreen", "sweep", "--lambdas", "0,0.2"]).unwrap();
        assert!(matches!(s.command, Command::Sweep(ref w) if w.lambdas == vec![0.0, 0.2]));
        assert!(Cli::try_parse_from(["hashscreen", "search", "--db", "d"]).is_err());
        assert!(Cli::try_parse_from(["hashscreen", "eval", "--out", "o", "--mode", "euclid"]).is_err());
    }

    #[test]
    fn run_config_rejects_unknown_keys() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("run.cfg");
        std::fs::write(&cfg, "lambda = 0.2\nwarmup = 3\n").unwrap();
        let err = resolve_run(Some(&cfg), &DataArgs::default(), &Overrides::default()).err().unwrap();
        assert_eq!(err.category(), Category::Input);
        std::fs::write(&cfg, "seed = 4\ndata_seed = 9\nclusters = 3\n").unwrap();
        let setup = resolve_run(Some(&cfg), &DataArgs::default(), &Overrides { epochs: Some(2), ..Default::default() }).unwrap();
        assert_eq!((setup.config.seed, setup.config.epochs), (4, 2));
        assert_eq!(setup.data.labels.as_ref().unwrap().names.len(), 3);
    }
}
