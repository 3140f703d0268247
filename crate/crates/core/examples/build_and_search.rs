//! Encodes a molecule library into an on-disk code database, reopens it
//! through a memory map and runs top-k Hamming queries for a few proteins.

use hashscreen::codedb::{build_database, read_ids, sidecar_path, topk_hamming, write_ids, CodeDatabase};
use hashscreen::dataio::{generate_synthetic, split, SynthSpec};
use hashscreen::encoder::Modality;
use hashscreen::train::{train, TrainingConfig};

fn main() -> hashscreen::Result<()> {
    let config = TrainingConfig { epochs: 20, seed: 1, ..TrainingConfig::default() };
    let data = generate_synthetic(&SynthSpec::default())?;
    let (train_set, val, test) = split(&data, config.split_fractions(), config.seed)?;
    let params = train(&train_set, Some(&val), &config)?.params;

    let dir = tempfile::tempdir().expect("temp dir");
    let db_path = dir.path().join("library.dhdb");
    let codes = (0..test.len())
        .map(|i| params.encode(Modality::Molecule, test.molecules.row(i)).map(|e| e.quantize()))
        .collect::<hashscreen::Result<Vec<_>>>()?;
    build_database(codes, &db_path)?;
    write_ids(&sidecar_path(&db_path), &test.molecule_ids)?;

    let db = CodeDatabase::open(&db_path)?;
    let ids = read_ids(&sidecar_path(&db_path), db.len())?;
    println!("{} codes of {} bits, {} payload bytes", db.len(), db.code_len(), db.payload_bytes());

    let labels = test.labels.as_ref().expect("synthetic data is labeled");
    for q in 0..3 {
        let query = params.encode(Modality::Protein, test.proteins.row(q))?.quantize();
        let result = topk_hamming(&db, &query, 5)?;
        println!("query {} (group {}):", test.protein_ids[q], labels.names[labels.proteins[q]]);
        for (rank, hit) in result.hits.iter().enumerate() {
            let i = hit.index as usize;
            println!("  {}  {:<10} distance {:3}  group {}", rank + 1, ids[i], hit.distance, labels.names[labels.molecules[i]]);
        }
    }
    Ok(())
}
