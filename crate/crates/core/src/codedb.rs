//! On-disk code database and exhaustive top-k scans.
//!
//! Code database layout (little-endian):
//!
//! ```text
//! offset  size  field
//!      0     4  magic "DHDB"
//!      4     2  format version (1)
//!      6     2  reserved (0)
//!      8     4  code_bits d
//!     12     8  record count C
//!     20     .  C records of ceil(d / 64) u64 words each
//! ```
//!
//! The real-valued baseline store uses the same header with magic `"DHRV"`,
//! `dim` in place of `code_bits`, and `C * dim` f32 values as payload.
//! Record order is insertion order. Both files are opened with a read-only
//! memory map, so opening is constant time and records page in on demand.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fs::File;
use std::io::{BufWriter, Seek, SeekFrom, Write};
use std::ops::{Deref, Range};
use std::path::{Path, PathBuf};

use memmap2::Mmap;
use serde::Serialize;

use crate::codes::{BinaryCode, CodeLength};
use crate::error::{Error, Result};
use crate::parallel::{max_threads, partition_ranges};

pub const CODE_MAGIC: &[u8; 4] = b"DHDB";
pub const REAL_MAGIC: &[u8; 4] = b"DHRV";
pub const FORMAT_VERSION: u16 = 1;
pub const HEADER_LEN: usize = 20;

enum Backing {
    Mapped(Mmap),
    Owned(Vec<u8>),
}

impl Deref for Backing {
    type Target = [u8];

    fn deref(&self) -> &[u8] {
        match self {
            Backing::Mapped(m) => m,
            Backing::Owned(v) => v,
        }
    }
}

fn encode_header(magic: &[u8; 4], width: u32, count: u64) -> [u8; HEADER_LEN] {
    let mut h = [0u8; HEADER_LEN];
    h[0..4].copy_from_slice(magic);
    h[4..6].copy_from_slice(&FORMAT_VERSION.to_le_bytes());
    h[8..12].copy_from_slice(&width.to_le_bytes());
    h[12..20].copy_from_slice(&count.to_le_bytes());
    h
}

/// Validates a header and returns `(width, count)`.
fn decode_header(bytes: &[u8], magic: &[u8; 4], record_bytes: impl Fn(usize) -> usize) -> Result<(usize, usize)> {
    let corrupt = |check, detail: String| Error::CorruptDatabase { check, detail };
    if bytes.len() < HEADER_LEN {
        return Err(corrupt("header", format!("file is {} bytes, header needs {HEADER_LEN}", bytes.len())));
    }
    if &bytes[0..4] != magic {
        return Err(corrupt(
            "magic",
            format!("expected {:?}, found {:?}", String::from_utf8_lossy(magic), &bytes[0..4]),
        ));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != FORMAT_VERSION {
        return Err(corrupt("version", format!("unsupported format version {version}")));
    }
    let width = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    if width == 0 {
        return Err(corrupt("width", "zero-width records".into()));
    }
    let count = u64::from_le_bytes(bytes[12..20].try_into().unwrap());
    let expected = (count as u128) * record_bytes(width) as u128 + HEADER_LEN as u128;
    if expected != bytes.len() as u128 {
        return Err(corrupt(
            "size",
            format!("{count} records need {expected} bytes, file has {}", bytes.len()),
        ));
    }
    Ok((width, count as usize))
}

fn map_file(path: &Path) -> Result<Backing> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    // SAFETY: databases are immutable once built; the map is read-only.
    let map = unsafe { Mmap::map(&file) }.map_err(|e| Error::io(path, e))?;
    Ok(Backing::Mapped(map))
}

/// Streaming writer; memory use does not grow with the record count.
pub struct DatabaseWriter {
    out: BufWriter<File>,
    path: PathBuf,
    len: CodeLength,
    count: u64,
}

impl DatabaseWriter {
    pub fn create(path: &Path, len: CodeLength) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::with_capacity(1 << 20, file);
        out.write_all(&encode_header(CODE_MAGIC, len.bits() as u32, 0))
            .map_err(|e| Error::io(path, e))?;
        Ok(DatabaseWriter {
            out,
            path: path.to_path_buf(),
            len,
            count: 0,
        })
    }

    pub fn push(&mut self, code: &BinaryCode) -> Result<()> {
        if code.len() != self.len {
            return Err(Error::InvalidInput(format!(
                "record {} has {} bits, database holds {}-bit codes",
                self.count,
                code.len(),
                self.len
            )));
        }
        self.push_words(code.words())
    }

    /// Appends raw words; the caller guarantees zero padding.
    pub fn push_words(&mut self, words: &[u64]) -> Result<()> {
        debug_assert_eq!(words.len(), self.len.words());
        for w in words {
            self.out.write_all(&w.to_le_bytes()).map_err(|e| Error::io(&self.path, e))?;
        }
        self.count += 1;
        Ok(())
    }

    pub fn finish(mut self) -> Result<CodeDatabase> {
        let path = self.path.clone();
        let io = |e| Error::io(&path, e);
        self.out.seek(SeekFrom::Start(12)).map_err(io)?;
        self.out.write_all(&self.count.to_le_bytes()).map_err(io)?;
        let file = self.out.into_inner().map_err(|e| Error::io(&path, e.into_error()))?;
        file.sync_all().map_err(io)?;
        drop(file);
        CodeDatabase::open(&path)
    }
}

/// Writes every code to `path` and opens the result.
///
/// The code length is taken from the first code; an empty input needs
/// [`build_empty_database`] since there is nothing to infer it from.
pub fn build_database<I>(codes: I, path: &Path) -> Result<CodeDatabase>
where
    I: IntoIterator<Item = BinaryCode>,
{
    let mut codes = codes.into_iter().peekable();
    let len = match codes.peek() {
        Some(c) => c.len(),
        None => {
            return Err(Error::InvalidInput(
                "cannot infer the code length of an empty database".into(),
            ))
        }
    };
    let mut writer = DatabaseWriter::create(path, len)?;
    for c in codes {
        writer.push(&c)?;
    }
    writer.finish()
}

pub fn build_empty_database(path: &Path, len: CodeLength) -> Result<CodeDatabase> {
    DatabaseWriter::create(path, len)?.finish()
}

/// Read-only view over a code database file.
pub struct CodeDatabase {
    bytes: Backing,
    len: CodeLength,
    count: usize,
    words: usize,
}

impl std::fmt::Debug for CodeDatabase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CodeDatabase")
            .field("code_bits", &self.len.bits())
            .field("count", &self.count)
            .finish()
    }
}

impl CodeDatabase {
    pub fn open(path: &Path) -> Result<Self> {
        Self::from_backing(map_file(path)?)
    }

    pub fn from_bytes(bytes: Vec<u8>) -> Result<Self> {
        Self::from_backing(Backing::Owned(bytes))
    }

    fn from_backing(bytes: Backing) -> Result<Self> {
        let (bits, count) = decode_header(&bytes, CODE_MAGIC, |bits| bits.div_ceil(64) * 8)?;
        let len = CodeLength::new(bits)?;
        Ok(CodeDatabase {
            bytes,
            len,
            count,
            words: len.words(),
        })
    }

    pub fn code_len(&self) -> CodeLength {
        self.len
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn payload_bytes(&self) -> usize {
        self.count * self.words * 8
    }

    fn record_bytes(&self, i: usize) -> &[u8] {
        let stride = self.words * 8;
        let start = HEADER_LEN + i * stride;
        &self.bytes[start..start + stride]
    }

    /// Record `i`; fails if the stored padding bits are not zero.
    pub fn code(&self, i: usize) -> Result<BinaryCode> {
        if i >= self.count {
            return Err(Error::InvalidInput(format!(
                "record {i} out of range for {} records",
                self.count
            )));
        }
        let words = self
            .record_bytes(i)
            .chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        BinaryCode::from_words(words, self.len).map_err(|e| Error::CorruptDatabase {
            check: "padding",
            detail: format!("record {i}: {e}"),
        })
    }

    pub fn iter(&self) -> impl Iterator<Item = Result<BinaryCode>> + '_ {
        (0..self.count).map(move |i| self.code(i))
    }

    /// Full pass checking that no record has padding bits set.
    pub fn verify(&self) -> Result<()> {
        if !self.len.is_padded() {
            return Ok(());
        }
        (0..self.count).try_for_each(|i| self.code(i).map(drop))
    }

    /// Hamming distance from `query` to every record, in record order.
    pub fn distances(&self, query: &BinaryCode) -> Result<Vec<u32>> {
        self.check_query(query)?;
        let mut out = Vec::with_capacity(self.count);
        self.scan(query, 0..self.count, |i, d| {
            debug_assert_eq!(i, out.len());
            out.push(d)
        });
        Ok(out)
    }

    fn check_query(&self, query: &BinaryCode) -> Result<()> {
        if query.len() != self.len {
            return Err(Error::InvalidInput(format!(
                "query has {} bits, database holds {}-bit codes",
                query.len(),
                self.len
            )));
        }
        Ok(())
    }

    #[inline]
    fn scan(&self, query: &BinaryCode, range: Range<usize>, mut visit: impl FnMut(usize, u32)) {
        let stride = self.words * 8;
        let q = query.words();
        let tail = self.len.tail_mask();
        let start = HEADER_LEN + range.start * stride;
        let end = HEADER_LEN + range.end * stride;
        let payload = &self.bytes[start..end];
        let last = self.words - 1;
        if self.words == 2 {
            for (r, rec) in payload.chunks_exact(16).enumerate() {
                let w0 = u64::from_le_bytes(rec[0..8].try_into().unwrap());
                let w1 = u64::from_le_bytes(rec[8..16].try_into().unwrap());
                let d = (w0 ^ q[0]).count_ones() + ((w1 ^ q[1]) & tail).count_ones();
                visit(range.start + r, d);
            }
            return;
        }
        for (r, rec) in payload.chunks_exact(stride).enumerate() {
            let mut d = 0;
            for (w, (chunk, qw)) in rec.chunks_exact(8).zip(q).enumerate() {
                let mut x = u64::from_le_bytes(chunk.try_into().unwrap()) ^ qw;
                if w == last {
                    x &= tail;
                }
                d += x.count_ones();
            }
            visit(range.start + r, d);
        }
    }

    fn topk_range(&self, query: &BinaryCode, k: usize, range: Range<usize>) -> Vec<Hit> {
        let mut heap = TopK::new(k);
        self.scan(query, range, |i, d| heap.offer(Hit { index: i as u64, distance: d }));
        heap.into_vec()
    }
}

/// One search hit: record index and its Hamming distance to the query.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct Hit {
    // field order gives (distance, index) ordering
    pub distance: u32,
    pub index: u64,
}

/// Hits in ascending `(distance, index)` order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SearchResult {
    pub hits: Vec<Hit>,
}

/// Bounded max-heap keeping the `k` smallest items seen.
struct TopK<T: Ord> {
    k: usize,
    heap: BinaryHeap<T>,
}

impl<T: Ord> TopK<T> {
    fn new(k: usize) -> Self {
        TopK {
            k,
            heap: BinaryHeap::with_capacity(k.min(1 << 20) + 1),
        }
    }

    #[inline]
    fn offer(&mut self, item: T) {
        if self.heap.len() < self.k {
            self.heap.push(item);
        } else if let Some(mut top) = self.heap.peek_mut() {
            if item < *top {
                *top = item;
            }
        }
    }

    fn into_vec(self) -> Vec<T> {
        self.heap.into_sorted_vec()
    }
}

fn merge_topk<T: Ord>(parts: Vec<Vec<T>>, k: usize) -> Vec<T> {
    let mut all: Vec<T> = parts.into_iter().flatten().collect();
    all.sort();
    all.truncate(k);
    all
}

/// Runs `work` over `partitions` contiguous ranges on up to `max_threads()`
/// workers and returns the per-partition results in partition order.
fn run_partitions<T: Send>(len: usize, partitions: usize, work: impl Fn(Range<usize>) -> T + Sync) -> Vec<T> {
    let ranges = partition_ranges(len, partitions);
    let workers = max_threads().min(ranges.len()).max(1);
    if workers == 1 {
        return ranges.into_iter().map(&work).collect();
    }
    let mut slots: Vec<Option<T>> = (0..ranges.len()).map(|_| None).collect();
    std::thread::scope(|s| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let ranges = &ranges;
                let work = &work;
                s.spawn(move || {
                    (w..ranges.len())
                        .step_by(workers)
                        .map(|p| (p, work(ranges[p].clone())))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        for h in handles {
            for (p, r) in h.join().expect("scan worker panicked") {
                slots[p] = Some(r);
            }
        }
    });
    slots.into_iter().map(|s| s.expect("every partition scanned")).collect()
}

fn check_k(k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::InvalidInput("k must be at least 1".into()));
    }
    Ok(())
}

/// Exact top-`k` by Hamming distance, ties by ascending record index.
pub fn topk_hamming(db: &CodeDatabase, query: &BinaryCode, k: usize) -> Result<SearchResult> {
    topk_hamming_partitioned(db, query, k, max_threads())
}

/// [`topk_hamming`] with an explicit partition count; the result does not
/// depend on `partitions`.
pub fn topk_hamming_partitioned(
    db: &CodeDatabase,
    query: &BinaryCode,
    k: usize,
    partitions: usize,
) -> Result<SearchResult> {
    check_k(k)?;
    db.check_query(query)?;
    let parts = run_partitions(db.len(), partitions, |r| db.topk_range(query, k, r));
    Ok(SearchResult {
        hits: merge_topk(parts, k),
    })
}

/// Writer for the real-valued baseline store.
pub struct RealDatabaseWriter {
    out: BufWriter<File>,
    path: PathBuf,
    dim: usize,
    count: u64,
}

impl RealDatabaseWriter {
    pub fn create(path: &Path, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidInput("vector dimension must be positive".into()));
        }
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::with_capacity(1 << 20, file);
        out.write_all(&encode_header(REAL_MAGIC, dim as u32, 0))
            .map_err(|e| Error::io(path, e))?;
        Ok(RealDatabaseWriter {
            out,
            path: path.to_path_buf(),
            dim,
            count: 0,
        })
    }

    pub fn push(&mut self, v: &[f32]) -> Result<()> {
        if v.len() != self.dim {
            return Err(Error::InvalidInput(format!(
                "record {} has {} values, store holds {}-dimensional vectors",
                self.count,
                v.len(),
                self.dim
            )));
        }
        let norm2: f32 = v.iter().map(|x| x * x).sum();
        if !(norm2 > 0.0 && norm2.is_finite()) {
            return Err(Error::Degenerate(format!(
                "record {} has zero or non-finite norm",
                self.count
            )));
        }
        let mut buf = Vec::with_capacity(v.len() * 4);
        for x in v {
            buf.extend_from_slice(&x.to_le_bytes());
        }
        self.out.write_all(&buf).map_err(|e| Error::io(&self.path, e))?;
        self.count += 1;
        Ok(())
    }

    pub fn finish(mut self) -> Result<RealDatabase> {
        let path = self.path.clone();
        let io = |e| Error::io(&path, e);
        self.out.seek(SeekFrom::Start(12)).map_err(io)?;
        self.out.write_all(&self.count.to_le_bytes()).map_err(io)?;
        let file = self.out.into_inner().map_err(|e| Error::io(&path, e.into_error()))?;
        file.sync_all().map_err(io)?;
        drop(file);
        RealDatabase::open(&path)
    }
}

/// Read-only view over stored 32-bit real vectors.
pub struct RealDatabase {
    bytes: Backing,
    dim: usize,
    count: usize,
}

/// Cosine hit: record index and similarity to the query.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CosineHit {
    pub index: u64,
    pub similarity: f32,
}

/// Heap key that orders better hits first: higher similarity, then lower index.
#[derive(Clone, Copy, PartialEq)]
struct CosineKey(CosineHit);

impl Eq for CosineKey {}

impl Ord for CosineKey {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .0
            .similarity
            .total_cmp(&self.0.similarity)
            .then(self.0.index.cmp(&other.0.index))
    }
}

impl PartialOrd for CosineKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CosineResult {
    pub hits: Vec<CosineHit>,
}

impl RealDatabase {
    pub fn open(path: &Path) -> Result<Self> {
        Self::from_backing(map_file(path)?)
    }

    pub fn from_bytes(bytes: Vec<u8>) -> Result<Self> {
        Self::from_backing(Backing::Owned(bytes))
    }

    /// In-memory store built from rows (used by tests and small evaluations).
    pub fn from_rows<R: AsRef<[f32]>>(rows: &[R], dim: usize) -> Result<Self> {
        let mut bytes = encode_header(REAL_MAGIC, dim as u32, rows.len() as u64).to_vec();
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != dim {
                return Err(Error::InvalidInput(format!("row {i} has {} values, expected {dim}", r.len())));
            }
            for x in r {
                bytes.extend_from_slice(&x.to_le_bytes());
            }
        }
        Self::from_bytes(bytes)
    }

    fn from_backing(bytes: Backing) -> Result<Self> {
        let (dim, count) = decode_header(&bytes, REAL_MAGIC, |dim| dim * 4)?;
        Ok(RealDatabase { bytes, dim, count })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn payload_bytes(&self) -> usize {
        self.count * self.dim * 4
    }

    pub fn vector(&self, i: usize) -> Vec<f32> {
        let start = HEADER_LEN + i * self.dim * 4;
        self.bytes[start..start + self.dim * 4]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect()
    }

    fn topk_range(&self, query: &[f32], query_norm: f32, k: usize, range: Range<usize>) -> Vec<CosineKey> {
        let stride = self.dim * 4;
        let start = HEADER_LEN + range.start * stride;
        let end = HEADER_LEN + range.end * stride;
        let mut heap = TopK::new(k);
        let mut row = vec![0f32; self.dim];
        for (r, rec) in self.bytes[start..end].chunks_exact(stride).enumerate() {
            for (dst, c) in row.iter_mut().zip(rec.chunks_exact(4)) {
                *dst = f32::from_le_bytes(c.try_into().unwrap());
            }
            let (dot, norm2) = dot_and_norm(&row, query);
            let similarity = dot / (norm2.sqrt() * query_norm);
            heap.offer(CosineKey(CosineHit {
                index: (range.start + r) as u64,
                similarity,
            }));
        }
        heap.into_vec()
    }
}

/// `(row . query, row . row)` with eight independent f32 lanes.
#[inline]
fn dot_and_norm(row: &[f32], query: &[f32]) -> (f32, f32) {
    let mut dot = [0f32; 8];
    let mut nrm = [0f32; 8];
    let chunks = row.len() / 8;
    for c in 0..chunks {
        let r = &row[c * 8..c * 8 + 8];
        let q = &query[c * 8..c * 8 + 8];
        for l in 0..8 {
            dot[l] += r[l] * q[l];
            nrm[l] += r[l] * r[l];
        }
    }
    let mut d: f32 = dot.iter().sum();
    let mut n: f32 = nrm.iter().sum();
    for i in chunks * 8..row.len() {
        d += row[i] * query[i];
        n += row[i] * row[i];
    }
    (d, n)
}

/// Exact top-`k` by descending cosine similarity, ties by ascending index.
pub fn topk_cosine(db: &RealDatabase, query: &[f32], k: usize) -> Result<CosineResult> {
    topk_cosine_partitioned(db, query, k, max_threads())
}

pub fn topk_cosine_partitioned(db: &RealDatabase, query: &[f32], k: usize, partitions: usize) -> Result<CosineResult> {
    check_k(k)?;
    if query.len() != db.dim {
        return Err(Error::InvalidInput(format!(
            "query has {} values, store holds {}-dimensional vectors",
            query.len(),
            db.dim
        )));
    }
    let query_norm = query.iter().map(|x| x * x).sum::<f32>().sqrt();
    if !(query_norm > 0.0 && query_norm.is_finite()) {
        return Err(Error::Degenerate("query vector has zero or non-finite norm".into()));
    }
    let parts = run_partitions(db.len(), partitions, |r| db.topk_range(query, query_norm, k, r));
    Ok(CosineResult {
        hits: merge_topk(parts, k).into_iter().map(|k| k.0).collect(),
    })
}

/// Path of the id sidecar for a database file: `<path>.ids`.
pub fn sidecar_path(db_path: &Path) -> PathBuf {
    let mut s = db_path.as_os_str().to_owned();
    s.push(".ids");
    PathBuf::from(s)
}

pub fn write_ids(path: &Path, ids: &[String]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for id in ids {
        if id.contains('\n') {
            return Err(Error::InvalidInput(format!("identifier {id:?} contains a newline")));
        }
        writeln!(out, "{id}").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// Reads a sidecar, checking it has one line per record.
pub fn read_ids(path: &Path, expected: usize) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let ids: Vec<String> = text.lines().map(str::to_owned).collect();
    if ids.len() != expected {
        return Err(Error::CorruptDatabase {
            check: "sidecar",
            detail: format!("{} has {} ids for {expected} records", path.display(), ids.len()),
        });
    }
    Ok(ids)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use crate::codes::pack_bits;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_code(rng: &mut impl Rng, bits: usize) -> BinaryCode {
        let signs: Vec<i8> = (0..bits).map(|_| if rng.random_bool(0.5) { 1 } else { -1 }).collect();
        pack_bits(&signs).unwrap()
    }

    #[test]
    fn empty_database_is_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.db");
        let db = build_empty_database(&path, CodeLength::new(128).unwrap()).unwrap();
        assert_eq!(db.len(), 0);
        assert_eq!(std::fs::metadata(&path).unwrap().len(), HEADER_LEN as u64);
        assert!(build_database(Vec::new(), &path).is_err());
        let r = topk_hamming(&db, &BinaryCode::zeros(db.code_len()), 5).unwrap();
        assert!(r.hits.is_empty());
    }

    #[test]
    fn mixed_lengths_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let codes = vec![
            BinaryCode::zeros(CodeLength::new(64).unwrap()),
            BinaryCode::zeros(CodeLength::new(128).unwrap()),
        ];
        assert!(matches!(
            build_database(codes, &dir.path().join("x.db")),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn roundtrip_and_random_access() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(30);
        let codes: Vec<BinaryCode> = (0..1000).map(|_| random_code(&mut rng, 100)).collect();
        let db = build_database(codes.clone(), &dir.path().join("r.db")).unwrap();
        assert_eq!(db.len(), 1000);
        db.verify().unwrap();
        for _ in 0..50 {
            let i = rng.random_range(0..1000);
            assert_eq!(db.code(i).unwrap(), codes[i]);
        }
        assert!(db.code(1000).is_err());
    }

    #[test]
    fn corrupt_files_name_the_check() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let path = dir.path().join("c.db");
        build_database((0..3).map(|_| random_code(&mut rng, 64)), &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        let check_of = |b: Vec<u8>| match CodeDatabase::from_bytes(b) {
            Err(Error::CorruptDatabase { check, .. }) => check,
            other => panic!("expected corruption, got {other:?}"),
        };
        assert_eq!(check_of(bytes[..bytes.len() - 3].to_vec()), "size");
        assert_eq!(check_of(bytes[..10].to_vec()), "header");
        let mut b = bytes.clone();
        b[1] = b'X';
        assert_eq!(check_of(b), "magic");
        let mut b = bytes.clone();
        b[4] = 2;
        assert_eq!(check_of(b), "version");
        let mut b = bytes.clone();
        b.extend_from_slice(&[0; 8]);
        assert_eq!(check_of(b), "size");
    }

    #[test]
    fn padding_violation_is_reported() {
        let mut bytes = encode_header(CODE_MAGIC, 60, 1).to_vec();
        bytes.extend_from_slice(&(1u64 << 62).to_le_bytes());
        let db = CodeDatabase::from_bytes(bytes).unwrap();
        assert!(matches!(db.verify(), Err(Error::CorruptDatabase { check: "padding", .. })));
        // the scan masks padding, so distance ignores the stray bit
        let q = BinaryCode::zeros(CodeLength::new(60).unwrap());
        assert_eq!(db.distances(&q).unwrap(), vec![0]);
    }

    #[test]
    fn topk_basic_contracts() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let codes: Vec<BinaryCode> = (0..200).map(|_| random_code(&mut rng, 128)).collect();
        let mut bytes = encode_header(CODE_MAGIC, 128, 200).to_vec();
        for c in &codes {
            for w in c.words() {
                bytes.extend_from_slice(&w.to_le_bytes());
            }
        }
        let db = CodeDatabase::from_bytes(bytes).unwrap();
        let r = topk_hamming(&db, &codes[17], 1).unwrap();
        assert_eq!(r.hits, vec![Hit { index: 17, distance: 0 }]);
        let full = topk_hamming(&db, &codes[3], 200).unwrap();
        assert_eq!(full.hits.len(), 200);
        assert!(full.hits.windows(2).all(|w| w[0] < w[1]));
        let over = topk_hamming(&db, &codes[3], 500).unwrap();
        assert_eq!(over, full);
        assert!(topk_hamming(&db, &codes[3], 0).is_err());
        assert!(topk_hamming(&db, &BinaryCode::zeros(CodeLength::new(64).unwrap()), 3).is_err());
    }

    #[test]
    fn cosine_topk_contracts() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let rows: Vec<Vec<f32>> = (0..300)
            .map(|_| (0..16).map(|_| rng.random_range(-1.0f32..1.0)).collect())
            .collect();
        let db = RealDatabase::from_rows(&rows, 16).unwrap();
        let r = topk_cosine(&db, &rows[42], 1).unwrap();
        assert_eq!(r.hits[0].index, 42);
        assert!((r.hits[0].similarity - 1.0).abs() < 1e-6);
        let full = topk_cosine(&db, &rows[0], 300).unwrap();
        assert!(full
            .hits
            .windows(2)
            .all(|w| w[0].similarity > w[1].similarity
                || (w[0].similarity == w[1].similarity && w[0].index < w[1].index)));
        for p in [2, 7, 16] {
            assert_eq!(topk_cosine_partitioned(&db, &rows[5], 10, p).unwrap(), topk_cosine_partitioned(&db, &rows[5], 10, 1).unwrap());
        }
        assert!(topk_cosine(&db, &[0.0; 16], 3).is_err());
        assert!(topk_cosine(&db, &[1.0; 15], 3).is_err());
    }

    #[test]
    fn real_store_file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.rdb");
        let mut w = RealDatabaseWriter::create(&path, 3).unwrap();
        w.push(&[1.0, 2.0, 3.0]).unwrap();
        w.push(&[-1.0, 0.5, 0.0]).unwrap();
        assert!(w.push(&[0.0, 0.0, 0.0]).is_err());
        let db = w.finish().unwrap();
        assert_eq!(db.len(), 2);
        assert_eq!(db.vector(1), vec![-1.0, 0.5, 0.0]);
        assert_eq!(std::fs::metadata(&path).unwrap().len(), (HEADER_LEN + 2 * 3 * 4) as u64);
    }

    #[test]
    fn sidecar_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = sidecar_path(&dir.path().join("a.db"));
        assert!(path.to_string_lossy().ends_with("a.db.ids"));
        let ids = vec!["m1".to_string(), "m2".to_string()];
        write_ids(&path, &ids).unwrap();
        assert_eq!(read_ids(&path, 2).unwrap(), ids);
        assert!(read_ids(&path, 3).is_err());
    }


    fn database_strategy() -> impl Strategy<Value = (usize, Vec<BinaryCode>, BinaryCode)> {
        (1usize..140, 0usize..120, any::<u64>()).prop_map(|(bits, count, seed)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let codes = (0..count).map(|_| random_code(&mut rng, bits)).collect();
            (bits, codes, random_code(&mut rng, bits))
        })
    }

    proptest! {
        #[test]
        fn topk_matches_a_full_sort((bits, codes, query) in database_strategy(), k in 1usize..150, partitions in 1usize..9) {
            let mut bytes = encode_header(CODE_MAGIC, bits as u32, codes.len() as u64).to_vec();
            for c in &codes {
                for w in c.words() {
                    bytes.extend_from_slice(&w.to_le_bytes());
                }
            }
            let db = CodeDatabase::from_bytes(bytes).unwrap();
            let mut naive: Vec<(u32, u64)> = codes
                .iter()
                .enumerate()
                .map(|(i, c)| (crate::codes::hamming_distance(c, &query).unwrap(), i as u64))
                .collect();
            naive.sort();
            naive.truncate(k);
            let got = topk_hamming_partitioned(&db, &query, k, partitions).unwrap();
            let got: Vec<(u32, u64)> = got.hits.iter().map(|h| (h.distance, h.index)).collect();
            prop_assert_eq!(got, naive);
        }
    }
}
