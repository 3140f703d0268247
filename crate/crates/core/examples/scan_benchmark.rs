//! Storage and full-scan time of packed codes against 32-bit real vectors.
//!
//! cargo run --release --example scan_benchmark [count] [code_bits]

use hashscreen::bench::{bench, payload_sizes, BenchOptions};

fn main() -> hashscreen::Result<()> {
    let mut args = std::env::args().skip(1);
    let count = args.next().map_or(200_000, |s| s.parse().expect("count"));
    let bits = args.next().map_or(128, |s| s.parse().expect("code_bits"));

    let library = payload_sizes(6_500_000_000, bits);
    println!(
        "6.5e9 records at {bits} bits: codes {:.1} GiB, reals {:.1} GiB",
        library.code_bytes as f64 / (1u64 << 30) as f64,
        library.real_bytes as f64 / (1u64 << 30) as f64
    );

    let dir = tempfile::tempdir().expect("temp dir");
    let report = bench(&BenchOptions::new(count, bits, dir.path()))?;
    println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    Ok(())
}
