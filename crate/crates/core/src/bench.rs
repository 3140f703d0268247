//! Memory and scan-time comparison between packed codes and 32-bit reals.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::codedb::{
    topk_cosine, topk_hamming, CodeDatabase, DatabaseWriter, RealDatabase, RealDatabaseWriter, HEADER_LEN,
};
use crate::codes::{BinaryCode, CodeLength};
use crate::error::{Error, Result};
use crate::parallel::max_threads;

/// Payload sizes in bytes for `count` records of `bits` dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PayloadSizes {
    /// Packed codes as stored: whole 64-bit words per record.
    pub code_bytes: u128,
    /// One bit per dimension, ignoring word padding.
    pub bit_bytes: u128,
    /// One f32 per dimension.
    pub real_bytes: u128,
}

impl PayloadSizes {
    /// `real_bytes / code_bytes`; exactly 32 when `bits` is a multiple of 64.
    pub fn ratio(&self) -> Option<f64> {
        (self.code_bytes > 0).then(|| self.real_bytes as f64 / self.code_bytes as f64)
    }
}

pub fn payload_sizes(count: u128, bits: usize) -> PayloadSizes {
    let bits = bits as u128;
    PayloadSizes {
        code_bytes: count * bits.div_ceil(64) * 8,
        bit_bytes: (count * bits).div_ceil(8),
        real_bytes: count * bits * 4,
    }
}

#[derive(Debug, Clone)]
pub struct BenchOptions {
    pub count: usize,
    pub code_bits: usize,
    pub repetitions: usize,
    pub k: usize,
    pub dir: PathBuf,
    pub seed: u64,
    pub keep_files: bool,
}

impl BenchOptions {
    pub fn new(count: usize, code_bits: usize, dir: &Path) -> Self {
        BenchOptions {
            count,
            code_bits,
            repetitions: 3,
            k: 100,
            dir: dir.to_path_buf(),
            seed: 0,
            keep_files: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub count: usize,
    pub code_bits: usize,
    pub code_file_bytes: u64,
    pub code_payload_bytes: u64,
    pub real_file_bytes: u64,
    pub real_payload_bytes: u64,
    pub compression_ratio: Option<f64>,
    pub repetitions: usize,
    pub k: usize,
    pub threads: usize,
    /// Median wall time of a full top-k Hamming scan.
    pub hamming_seconds: Option<f64>,
    /// Median wall time of a full top-k cosine scan.
    pub cosine_seconds: Option<f64>,
    pub speedup: Option<f64>,
    /// Both scans returned the same record order.
    pub results_agree: Option<bool>,
}

fn median(mut xs: Vec<f64>) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    Some(if n % 2 == 1 { xs[n / 2] } else { 0.5 * (xs[n / 2 - 1] + xs[n / 2]) })
}

fn random_code(rng: &mut ChaCha8Rng, len: CodeLength) -> BinaryCode {
    let mut words: Vec<u64> = (0..len.words()).map(|_| rng.random()).collect();
    if let Some(last) = words.last_mut() {
        *last &= len.tail_mask();
    }
    BinaryCode::from_words(words, len).expect("masked words are valid")
}

fn file_len(path: &Path) -> Result<u64> {
    Ok(std::fs::metadata(path).map_err(|e| Error::io(path, e))?.len())
}

/// Writes both stores for `count` random codes, the real store holding the
/// ±1 vector of each code, so the two scans rank identically.
fn write_stores(opts: &BenchOptions, len: CodeLength, code_path: &Path, real_path: &Path) -> Result<(CodeDatabase, RealDatabase)> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut codes = DatabaseWriter::create(code_path, len)?;
    let mut reals = RealDatabaseWriter::create(real_path, len.bits())?;
    for _ in 0..opts.count {
        let code = random_code(&mut rng, len);
        codes.push(&code)?;
        let v: Vec<f32> = code.to_signs().iter().map(|&s| s as f32).collect();
        reals.push(&v)?;
    }
    Ok((codes.finish()?, reals.finish()?))
}

fn time<T>(f: impl FnOnce() -> Result<T>) -> Result<(f64, T)> {
    let start = Instant::now();
    let out = f()?;
    Ok((start.elapsed().as_secs_f64(), out))
}

/// Builds a packed-code store and a 32-bit real store of the same records in
/// `opts.dir`, then times full top-k scans of each with one query.
pub fn bench(opts: &BenchOptions) -> Result<BenchReport> {
    let len = CodeLength::new(opts.code_bits)?;
    if opts.k == 0 {
        return Err(Error::InvalidInput("k must be at least 1".into()));
    }
    std::fs::create_dir_all(&opts.dir).map_err(|e| Error::io(&opts.dir, e))?;
    let code_path = opts.dir.join("bench_codes.dhdb");
    let real_path = opts.dir.join("bench_reals.dhrv");
    let (codes, reals) = write_stores(opts, len, &code_path, &real_path)?;
    let sizes = payload_sizes(opts.count as u128, len.bits());
    debug_assert_eq!(sizes.code_bytes, codes.payload_bytes() as u128);
    debug_assert_eq!(sizes.real_bytes, reals.payload_bytes() as u128);

    let mut report = BenchReport {
        count: opts.count,
        code_bits: len.bits(),
        code_file_bytes: file_len(&code_path)?,
        code_payload_bytes: codes.payload_bytes() as u64,
        real_file_bytes: file_len(&real_path)?,
        real_payload_bytes: reals.payload_bytes() as u64,
        compression_ratio: sizes.ratio(),
        repetitions: opts.repetitions,
        k: opts.k,
        threads: max_threads(),
        hamming_seconds: None,
        cosine_seconds: None,
        speedup: None,
        results_agree: None,
    };

    if opts.count > 0 && opts.repetitions > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x9e37_79b9_7f4a_7c15);
        let query = random_code(&mut rng, len);
        let query_real: Vec<f32> = query.to_signs().iter().map(|&s| s as f32).collect();
        let mut ht = Vec::new();
        let mut ct = Vec::new();
        let mut agree = true;
        for _ in 0..opts.repetitions {
            let (th, h) = time(|| topk_hamming(&codes, &query, opts.k))?;
            let (tc, c) = time(|| topk_cosine(&reals, &query_real, opts.k))?;
            ht.push(th);
            ct.push(tc);
            agree &= h.hits.iter().map(|x| x.index).eq(c.hits.iter().map(|x| x.index));
        }
        report.hamming_seconds = median(ht);
        report.cosine_seconds = median(ct);
        report.speedup = match (report.hamming_seconds, report.cosine_seconds) {
            (Some(h), Some(c)) if h > 0.0 => Some(c / h),
            _ => None,
        };
        report.results_agree = Some(agree);
    }

    drop(codes);
    drop(reals);
    if !opts.keep_files {
        for p in [&code_path, &real_path] {
            std::fs::remove_file(p).map_err(|e| Error::io(p, e))?;
        }
    }
    Ok(report)
}

/// Header size shared by both stores.
pub const fn header_bytes() -> u64 {
    HEADER_LEN as u64
}
