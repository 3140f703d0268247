use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::Instant;

use hashscreen::codes::BinaryCode;
use hashscreen::dataio::{format_features, generate_synthetic, SynthSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn hashscreen(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hashscreen"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = hashscreen(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn fails(args: &[&str]) -> (i32, String) {
    let out = hashscreen(args);
    let err = String::from_utf8(out.stderr).unwrap();
    (out.status.code().unwrap(), err)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

/// Writes a synthetic set and returns its directory.
fn synth(dir: &Path, args: &[&str]) -> PathBuf {
    let out = dir.join("data");
    let mut full = vec!["synth", "--out", s(&out)];
    full.extend_from_slice(args);
    ok(&full);
    out
}

#[test]
fn missing_data_file_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let ck = dir.path().join("m.ck");
    let (code, err) = fails(&["train", "--proteins", "/nonexistent/p.tsv", "--molecules", "/nonexistent/m.tsv", "--out", s(&ck)]);
    assert_eq!(code, 2);
    assert!(err.starts_with("error[input]:"), "{err}");
    assert_eq!(err.trim_end().lines().count(), 1);
    assert!(!ck.exists());
}

#[test]
fn unknown_flags_and_missing_partners_are_rejected() {
    let (code, err) = fails(&["train", "--out", "x.ck", "--warmup", "3"]);
    assert_eq!(code, 2);
    assert!(err.starts_with("error[input]:"), "{err}");
    let (code, _) = fails(&["train", "--out", "x.ck", "--proteins", "p.tsv"]);
    assert_eq!(code, 2);
    let (code, _) = fails(&["sweep", "--lambdas", "0", "--code-lengths", "64"]);
    assert_eq!(code, 2);
    let help = ok(&["--help"]);
    for flag in ["train", "encode", "build", "search", "eval", "bench", "sweep", "HASHSCREEN_THREADS"] {
        assert!(help.contains(flag), "{flag} missing from help");
    }
    let train_help = ok(&["train", "--help"]);
    for flag in ["--config", "--seed", "--lambda", "--tau", "--code-bits", "--batch-size", "--epochs", "--out"] {
        assert!(train_help.contains(flag), "{flag} missing from train help");
    }
}

#[test]
fn tiny_training_run_is_fast_and_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), &["--clusters", "2", "--pairs-per-cluster", "48"]);
    let (p, m, l) = (data.join("proteins.tsv"), data.join("molecules.tsv"), data.join("labels.tsv"));
    let run = |name: &str| {
        let ck = dir.path().join(format!("{name}.ck"));
        let csv = dir.path().join(format!("{name}.csv"));
        let start = Instant::now();
        ok(&[
            "train", "--proteins", s(&p), "--molecules", s(&m), "--labels", s(&l), "--epochs", "5", "--batch-size", "24",
            "--seed", "3", "--out", s(&ck), "--metrics", s(&csv),
        ]);
        assert!(start.elapsed().as_secs() < 60);
        (std::fs::read(ck).unwrap(), std::fs::read_to_string(csv).unwrap())
    };
    let (ck_a, csv_a) = run("a");
    let (ck_b, csv_b) = run("b");
    let lines: Vec<&str> = csv_a.lines().collect();
    assert_eq!(lines[0], "epoch,contrastive,hash,total,val_bedroc,val_loss");
    assert_eq!(lines.len(), 6);
    assert_eq!(ck_a, ck_b);
    assert_eq!(csv_a, csv_b);
}

#[test]
fn divergence_exits_with_code_four() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), &["--clusters", "2", "--pairs-per-cluster", "48"]);
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "lr = 1e300\nepochs = 3\n").unwrap();
    let (code, err) = fails(&[
        "train", "--config", s(&cfg), "--proteins", s(&data.join("proteins.tsv")), "--molecules",
        s(&data.join("molecules.tsv")), "--out", s(&dir.path().join("m.ck")),
    ]);
    assert_eq!(code, 4, "{err}");
    assert!(err.trim_end().lines().last().unwrap().starts_with("error[divergence]:"), "{err}");
}

/// Trains on a noise-free set with one pair per cluster and returns
/// (data dir, checkpoint).
fn trained_noise_free(dir: &Path) -> (PathBuf, PathBuf) {
    let data = synth(dir, &["--clusters", "40", "--pairs-per-cluster", "1", "--noise", "0"]);
    let cfg = dir.join("run.cfg");
    std::fs::write(&cfg, "val_fraction = 0\ntest_fraction = 0\nbatch_size = 20\nepochs = 150\nlr = 0.005\n").unwrap();
    let ck = dir.join("m.ck");
    ok(&[
        "train", "--config", s(&cfg), "--proteins", s(&data.join("proteins.tsv")), "--molecules",
        s(&data.join("molecules.tsv")), "--out", s(&ck), "--metrics", s(&dir.join("curve.csv")),
    ]);
    (data, ck)
}

#[test]
fn encode_then_search_finds_the_partner() {
    let dir = tempfile::tempdir().unwrap();
    let (data, ck) = trained_noise_free(dir.path());
    let db = dir.path().join("mol.db");
    ok(&["encode", "--checkpoint", s(&ck), "--modality", "molecule", "--input", s(&data.join("molecules.tsv")), "--out", s(&db)]);
    let again = dir.path().join("mol2.db");
    ok(&["encode", "--checkpoint", s(&ck), "--modality", "molecule", "--input", s(&data.join("molecules.tsv")), "--out", s(&again)]);
    assert_eq!(std::fs::read(&db).unwrap(), std::fs::read(&again).unwrap());

    let out = ok(&["search", "--db", s(&db), "--query", s(&data.join("proteins.tsv")), "--checkpoint", s(&ck), "--k", "1"]);
    let rows: Vec<Vec<&str>> = out.lines().skip(1).map(|l| l.split('\t').collect()).collect();
    assert_eq!(rows.len(), 40);
    let hits = rows.iter().filter(|r| r[0][1..] == r[2][1..]).count();
    assert_eq!(hits, 40, "{out}");
}

#[test]
fn encode_rejects_wrong_width_and_accepts_empty_input() {
    let dir = tempfile::tempdir().unwrap();
    let (data, ck) = trained_noise_free(dir.path());
    let db = dir.path().join("bad.db");
    // protein rows have a different width from molecule rows
    let (code, err) = fails(&["encode", "--checkpoint", s(&ck), "--modality", "molecule", "--input", s(&data.join("proteins.tsv")), "--out", s(&db)]);
    assert_eq!(code, 3);
    assert!(err.starts_with("error[shape]:"), "{err}");

    let empty = dir.path().join("empty.tsv");
    std::fs::write(&empty, "").unwrap();
    let edb = dir.path().join("empty.db");
    ok(&["encode", "--checkpoint", s(&ck), "--input", s(&empty), "--out", s(&edb)]);
    let bytes = std::fs::read(&edb).unwrap();
    assert_eq!(bytes.len(), 20);
    assert_eq!(&bytes[12..20], &[0u8; 8]);
}

#[test]
fn build_reproduces_the_golden_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let db = dir.path().join("g.db");
    ok(&["build", "--codes", s(&fixture("golden3.codes")), "--out", s(&db)]);
    assert_eq!(std::fs::read(&db).unwrap(), std::fs::read(fixture("golden3.dhdb")).unwrap());
    assert_eq!(std::fs::read_to_string(dir.path().join("g.db.ids")).unwrap(), "zero\nends\nalternating\n");

    // distances from the all-zero code are the popcounts 0, 2 and 38
    let zero = "0".repeat(70);
    let out = ok(&["search", "--db", s(&db), "--code", &zero, "--k", "3"]);
    assert_eq!(out, "query\trank\tid\tdistance\n-\t1\tzero\t0\n-\t2\tends\t2\n-\t3\talternating\t38\n");
    let out = ok(&["search", "--db", s(&db), "--code", &zero, "--k", "1"]);
    assert_eq!(out.lines().count(), 2);

    let (code, err) = fails(&["search", "--db", s(&db), "--code", "0101", "--k", "1"]);
    assert_eq!(code, 2, "{err}");
}

#[test]
fn search_matches_a_naive_ranking() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let codes: Vec<String> = (0..2_000)
        .map(|_| (0..32).map(|_| if rng.random_bool(0.5) { '1' } else { '0' }).collect())
        .collect();
    let text: String = codes.iter().enumerate().map(|(i, c)| format!("r{i}\t{c}\n")).collect();
    let input = dir.path().join("codes.txt");
    std::fs::write(&input, text).unwrap();
    let db = dir.path().join("r.db");
    ok(&["build", "--codes", s(&input), "--out", s(&db)]);
    let query = &codes[77];
    let mut naive: Vec<(usize, usize)> = codes
        .iter()
        .enumerate()
        .map(|(i, c)| (c.chars().zip(query.chars()).filter(|(a, b)| a != b).count(), i))
        .collect();
    naive.sort();
    let out = ok(&["search", "--db", s(&db), "--code", query, "--k", "50"]);
    let got: Vec<(usize, usize)> = out
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split('\t').collect();
            (f[3].parse().unwrap(), f[2][1..].parse().unwrap())
        })
        .collect();
    assert_eq!(got, naive[..50].to_vec());
    assert_eq!(got[0], (0, 77));
}

fn write_code_db(dir: &Path, name: &str, ids: &[String], codes: &[BinaryCode]) -> PathBuf {
    let text: String = ids.iter().zip(codes).map(|(id, c)| format!("{id}\t{}\n", c.to_bit_string())).collect();
    let input = dir.join(format!("{name}.txt"));
    std::fs::write(&input, text).unwrap();
    let db = dir.join(format!("{name}.db"));
    ok(&["build", "--codes", s(&input), "--out", s(&db)]);
    db
}

fn read_summary(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

#[test]
fn eval_modes_agree_and_perfect_codes_score_one() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    // four groups, each with its own 16-bit code shared by proteins and molecules
    let group_codes: Vec<String> = (0..4)
        .map(|_| (0..16).map(|_| if rng.random_bool(0.5) { '1' } else { '0' }).collect())
        .collect();
    let n = 24;
    let pids: Vec<String> = (0..n).map(|k| format!("p{k}")).collect();
    let mids: Vec<String> = (0..n).map(|k| format!("m{k}")).collect();
    let codes: Vec<BinaryCode> = (0..n).map(|k| BinaryCode::from_bit_string(&group_codes[k % 4]).unwrap()).collect();
    let qdb = write_code_db(dir.path(), "q", &pids, &codes);
    let mdb = write_code_db(dir.path(), "m", &mids, &codes);
    let labels = dir.path().join("labels.tsv");
    let label_text: String = (0..n).map(|k| format!("p{k}\tg{}\nm{k}\tg{}\n", k % 4, k % 4)).collect();
    std::fs::write(&labels, label_text).unwrap();

    let (h, c) = (dir.path().join("h"), dir.path().join("c"));
    ok(&["eval", "--query-db", s(&qdb), "--db", s(&mdb), "--labels", s(&labels), "--mode", "hamming", "--out", s(&h)]);
    ok(&["eval", "--query-db", s(&qdb), "--db", s(&mdb), "--labels", s(&labels), "--mode", "cosine", "--out", s(&c)]);
    assert_eq!(std::fs::read(h.join("per_query.csv")).unwrap(), std::fs::read(c.join("per_query.csv")).unwrap());
    let summary = read_summary(&h);
    assert_eq!(summary["auroc"], 1.0);
    assert_eq!(summary["queries"], 24);
    let csv = std::fs::read_to_string(h.join("per_query.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "query_id,auroc,bedroc,ef0.5,ef1,ef5");

    // coverage gap: the error lists the ids without labels
    let partial = dir.path().join("partial.tsv");
    let text: String = (2..n).map(|k| format!("p{k}\tg{}\nm{k}\tg{}\n", k % 4, k % 4)).collect();
    std::fs::write(&partial, text).unwrap();
    let (code, err) = fails(&["eval", "--query-db", s(&qdb), "--db", s(&mdb), "--labels", s(&partial), "--out", s(&h)]);
    assert_eq!(code, 2);
    for id in ["p0", "p1", "m0", "m1"] {
        assert!(err.contains(id), "{err}");
    }
}

#[test]
fn random_labels_give_chance_auroc() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let n = 400;
    let random_codes = |rng: &mut ChaCha8Rng| -> Vec<BinaryCode> {
        (0..n)
            .map(|_| BinaryCode::from_bit_string(&(0..64).map(|_| if rng.random_bool(0.5) { '1' } else { '0' }).collect::<String>()).unwrap())
            .collect()
    };
    let pids: Vec<String> = (0..n).map(|k| format!("p{k}")).collect();
    let mids: Vec<String> = (0..n).map(|k| format!("m{k}")).collect();
    let qdb = write_code_db(dir.path(), "q", &pids, &random_codes(&mut rng));
    let mdb = write_code_db(dir.path(), "m", &mids, &random_codes(&mut rng));
    let labels = dir.path().join("labels.tsv");
    let text: String = (0..n).map(|k| format!("p{k}\tg{}\nm{k}\tg{}\n", k % 50, rng.random_range(0..50))).collect();
    std::fs::write(&labels, text).unwrap();
    let out = dir.path().join("ev");
    ok(&["eval", "--query-db", s(&qdb), "--db", s(&mdb), "--labels", s(&labels), "--out", s(&out)]);
    let auroc = read_summary(&out)["auroc"].as_f64().unwrap();
    assert!((auroc - 0.5).abs() <= 0.05, "{auroc}");
}

#[test]
fn single_setting_sweep_matches_train_then_eval() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "clusters = 6\npairs_per_cluster = 20\nepochs = 8\nbatch_size = 24\nseed = 2\n").unwrap();
    let sweep = dir.path().join("sweep.csv");
    ok(&["sweep", "--config", s(&cfg), "--lambdas", "0.2", "--out", s(&sweep), "--curves", s(&dir.path().join("curves"))]);
    let ck = dir.path().join("m.ck");
    let test = dir.path().join("test");
    let curve = dir.path().join("curve.csv");
    ok(&["train", "--config", s(&cfg), "--lambda", "0.2", "--out", s(&ck), "--metrics", s(&curve), "--test-out", s(&test)]);
    assert_eq!(
        std::fs::read_to_string(&curve).unwrap(),
        std::fs::read_to_string(dir.path().join("curves/lambda_0.2.csv")).unwrap()
    );
    let ev = dir.path().join("ev");
    ok(&[
        "eval", "--checkpoint", s(&ck), "--proteins", s(&test.join("proteins.tsv")), "--molecules",
        s(&test.join("molecules.tsv")), "--labels", s(&test.join("labels.tsv")), "--out", s(&ev),
    ]);
    let summary = read_summary(&ev);
    let text = std::fs::read_to_string(&sweep).unwrap();
    let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[0], "lambda=0.2");
    assert_eq!(row[7], "ok");
    for (col, key) in [(1, "bedroc"), (2, "ef0.5"), (3, "ef1"), (4, "ef5"), (5, "auroc")] {
        let (a, b) = (row[col].parse::<f64>().unwrap(), summary[key].as_f64().unwrap());
        assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0), "{key}: {a} vs {b}");
    }
}

#[test]
fn sweep_marks_failed_settings_and_continues() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "clusters = 4\npairs_per_cluster = 20\nepochs = 2\nbatch_size = 16\n").unwrap();
    let out = ok(&["sweep", "--config", s(&cfg), "--code-lengths", "0,32"]);
    let rows: Vec<&str> = out.lines().collect();
    assert_eq!(rows[0], "setting,bedroc,ef0.5,ef1,ef5,auroc,best_epoch,status");
    assert!(rows[1].starts_with("code_bits=0,") && rows[1].ends_with("failed:input"), "{out}");
    assert!(rows[2].starts_with("code_bits=32,") && rows[2].ends_with(",ok"), "{out}");
}

#[test]
fn lambda_and_code_length_sweeps_keep_their_direction() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixture("direction.cfg");
    let bedroc = |csv: &str, row: usize| -> f64 { csv.lines().nth(row).unwrap().split(',').nth(1).unwrap().parse().unwrap() };
    let lambdas = ok(&["sweep", "--config", s(&cfg), "--lambdas", "0,0.2"]);
    assert!(bedroc(&lambdas, 2) >= bedroc(&lambdas, 1), "{lambdas}");
    let lengths = ok(&["sweep", "--config", s(&cfg), "--code-lengths", "64,128", "--curves", s(dir.path())]);
    assert!(bedroc(&lengths, 2) >= bedroc(&lengths, 1), "{lengths}");
    assert!(dir.path().join("code_bits_64.csv").exists());
}

#[test]
fn bench_reports_exact_sizes() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(&["bench", "--count", "20000", "--code-bits", "128", "--reps", "1", "--dir", s(dir.path())]);
    let r: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(r["code_payload_bytes"], 320_000);
    assert_eq!(r["real_payload_bytes"], 10_240_000);
    assert_eq!(r["compression_ratio"], 32.0);
    assert_eq!(r["results_agree"], true);
    let empty = ok(&["bench", "--count", "0", "--dir", s(dir.path())]);
    let r: serde_json::Value = serde_json::from_str(&empty).unwrap();
    assert_eq!(r["code_payload_bytes"], 0);
    assert!(r["speedup"].is_null());
}

#[test]
fn synth_writes_parsable_tables() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), &["--clusters", "3", "--pairs-per-cluster", "4", "--seed", "9"]);
    let expected = generate_synthetic(&SynthSpec { num_clusters: 3, pairs_per_cluster: 4, seed: 9, ..SynthSpec::default() }).unwrap();
    assert_eq!(
        std::fs::read_to_string(data.join("proteins.tsv")).unwrap(),
        format_features(&expected.protein_ids, &expected.proteins)
    );
    let labels = std::fs::read_to_string(data.join("labels.tsv")).unwrap();
    assert_eq!(labels.lines().count(), 24);
}
