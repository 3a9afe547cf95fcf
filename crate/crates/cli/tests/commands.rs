mod common;

use std::fs;

use common::*;
use kmerstream_cli::analyze::{read_abundance, read_presence};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn s(p: &std::path::Path) -> &str {
    p.to_str().unwrap()
}

fn toy_setup(root: &std::path::Path) -> (Vec<(u32, Vec<u8>)>, std::path::PathBuf) {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let genomes: Vec<(u32, Vec<u8>)> = vec![(101, random_dna(&mut rng, 8_000)), (202, random_dna(&mut rng, 6_000))];
    let gdir = root.join("genomes");
    write_genomes(&gdir, &genomes);
    (genomes, gdir)
}

#[test]
fn build_db_is_byte_identical_across_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let (_, gdir) = toy_setup(tmp.path());
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for out in [&a, &b] {
        run_ok(&["build-db", "--genomes", s(&gdir), "--k", "21", "--out", s(out)]);
    }
    let (sa, sb) = (snapshot(&a), snapshot(&b));
    assert!(sa.iter().any(|(p, _)| p.ends_with("kmers.db")));
    assert!(sa.iter().any(|(p, _)| p.ends_with("index/101.idx")));
    assert_eq!(sa, sb);
    // Rebuilding into an existing run directory replaces it.
    run_ok(&["build-db", "--genomes", s(&gdir), "--k", "21", "--out", s(&a)]);
    assert_eq!(snapshot(&a), sb);
}

#[test]
fn empty_genome_dir_fails_without_output() {
    let tmp = tempfile::tempdir().unwrap();
    let gdir = tmp.path().join("none");
    fs::create_dir(&gdir).unwrap();
    let out = tmp.path().join("db");
    assert_eq!(exit_code(&["build-db", "--genomes", s(&gdir), "--out", s(&out)]), 1);
    assert!(!out.exists());
    // No staging directories are left behind either.
    let leftovers: Vec<_> = fs::read_dir(tmp.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(leftovers, vec![std::ffi::OsString::from("none")]);
}

#[test]
fn analyze_recovers_sampled_genomes_and_rejects_foreign_reads() {
    let tmp = tempfile::tempdir().unwrap();
    let (genomes, gdir) = toy_setup(tmp.path());
    let db = tmp.path().join("db");
    run_ok(&["build-db", "--genomes", s(&gdir), "--k", "21", "--sketch-size", "64", "--out", s(&db)]);

    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let reads = tmp.path().join("reads.fq");
    write_reads(&reads, &mut rng, &[&genomes[0].1, &genomes[1].1], &[240, 80]);
    let out = tmp.path().join("an");
    run_ok(&["analyze", "--reads", s(&reads), "--db", s(&db), "--out", s(&out)]);
    assert_eq!(read_presence(&out).unwrap().into_iter().collect::<Vec<_>>(), vec![101, 202]);
    let ab = read_abundance(&out).unwrap();
    assert!((ab[&101] - 0.75).abs() < 1e-9 && (ab[&202] - 0.25).abs() < 1e-9, "{ab:?}");

    let foreign_genome = random_dna(&mut rng, 8_000);
    let foreign = tmp.path().join("foreign.fq");
    write_reads(&foreign, &mut rng, &[&foreign_genome], &[200]);
    let out = tmp.path().join("foreign");
    run_ok(&["analyze", "--reads", s(&foreign), "--db", s(&db), "--out", s(&out)]);
    assert!(read_presence(&out).unwrap().is_empty());
}

#[test]
fn empty_reads_give_empty_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let (_, gdir) = toy_setup(tmp.path());
    let db = tmp.path().join("db");
    run_ok(&["build-db", "--genomes", s(&gdir), "--k", "21", "--out", s(&db)]);
    let reads = tmp.path().join("empty.fq");
    fs::write(&reads, "").unwrap();
    let out = tmp.path().join("an");
    run_ok(&["analyze", "--reads", s(&reads), "--db", s(&db), "--out", s(&out)]);
    assert!(read_presence(&out).unwrap().is_empty());
    assert!(read_abundance(&out).unwrap().is_empty());
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let (_, gdir) = toy_setup(tmp.path());
    let out = tmp.path().join("x");
    assert_eq!(exit_code(&["simulate", "--scenario", "bogus", "--out", s(&out)]), 2);
    assert_eq!(exit_code(&["frobnicate"]), 2);
    assert_eq!(exit_code(&["build-db", "--genomes", s(&gdir), "--k", "0", "--out", s(&out)]), 2);
    assert_eq!(exit_code(&["--threads", "0", "report", "--out", s(&out)]), 2);

    let db = tmp.path().join("db");
    run_ok(&["build-db", "--genomes", s(&gdir), "--k", "21", "--out", s(&db)]);
    let reads = tmp.path().join("r.fa");
    fs::write(&reads, ">r\nACGTACGTACGTACGTACGTACGTACGT\n").unwrap();
    assert_eq!(exit_code(&["analyze", "--reads", s(&reads), "--db", s(&db), "--tau", "1.5", "--out", s(&out)]), 2);
    // k mismatch is a data error.
    assert_eq!(exit_code(&["analyze", "--reads", s(&reads), "--db", s(&db), "--k", "19", "--out", s(&out)]), 1);
    assert_eq!(exit_code(&["report", s(&gdir), "--out", s(&out)]), 1);
    assert!(!out.exists());
}

#[test]
fn simulate_scenarios_and_report() {
    let tmp = tempfile::tempdir().unwrap();
    let ov = tmp.path().join("overlap");
    let ms = tmp.path().join("multi");
    run_ok(&["simulate", "--scenario", "overlap", "--out", s(&ov)]);
    run_ok(&["simulate", "--scenario", "multi_sample", "--out", s(&ms)]);

    let summary = fs::read_to_string(ov.join("summary.csv")).unwrap();
    let rows: Vec<Vec<&str>> = summary.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 2);
    assert_eq!((rows[0][1], rows[1][1]), ("overlapped", "serialized"));
    let t: Vec<f64> = rows.iter().map(|r| r[2].parse().unwrap()).collect();
    assert!(t[0] <= t[1]);

    let summary = fs::read_to_string(ms.join("summary.csv")).unwrap();
    let speedups: Vec<f64> = summary
        .lines()
        .skip(1)
        .map(|l| l.split(',').collect::<Vec<_>>())
        .filter(|r| r[1].parse::<u32>().is_ok())
        .map(|r| r[3].parse().unwrap())
        .collect();
    assert_eq!(speedups.len(), 16);
    assert!(speedups.windows(2).all(|w| w[0] <= w[1]), "{speedups:?}");

    let empty = tmp.path().join("empty_report");
    run_ok(&["report", "--out", s(&empty)]);
    assert_eq!(
        fs::read_to_string(empty.join("report.csv")).unwrap(),
        "run,command,scenario,config_hash,tool_version,metric,value\n"
    );

    let one = tmp.path().join("one");
    run_ok(&["report", s(&ov), "--out", s(&one)]);
    assert_eq!(fs::read_to_string(one.join("report.csv")).unwrap().lines().count(), 2);

    let mixed = tmp.path().join("mixed");
    run_ok(&["report", s(&ov), s(&ms), s(&one), "--out", s(&mixed)]);
    let text = fs::read_to_string(mixed.join("report.csv")).unwrap();
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let tags: Vec<(String, String)> = rdr
        .records()
        .map(|r| {
            let r = r.unwrap();
            (r[1].to_string(), r[2].to_string())
        })
        .collect();
    assert_eq!(
        tags,
        vec![
            ("simulate".into(), "overlap".into()),
            ("simulate".into(), "multi_sample".into()),
            ("report".into(), String::new()),
        ]
    );
    let json: serde_json::Value = serde_json::from_slice(&fs::read(mixed.join("report.json")).unwrap()).unwrap();
    assert_eq!(json.as_array().unwrap().len(), 3);
}

#[test]
fn simulate_reads_a_device_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("dev.toml");
    fs::write(&cfg, "preset = \"ssd-p\"\nchannels = 4\n").unwrap();
    let out = tmp.path().join("sim");
    run_ok(&["simulate", "--scenario", "overlap", "--config", s(&cfg), "--out", s(&out)]);
    let m: serde_json::Value = serde_json::from_slice(&fs::read(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["parameters"]["ssd.channels"], "4");
    assert_eq!(m["parameters"]["ssd.interface_bw"], "8000000000");

    fs::write(&cfg, "channel = 4\n").unwrap();
    let out = tmp.path().join("bad");
    assert_eq!(exit_code(&["simulate", "--scenario", "overlap", "--config", s(&cfg), "--out", s(&out)]), 1);
}
