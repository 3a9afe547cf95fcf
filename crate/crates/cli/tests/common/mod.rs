#![allow(dead_code)]

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::Command;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const READ_LEN: usize = 150;

pub fn random_dna(rng: &mut ChaCha8Rng, len: usize) -> Vec<u8> {
    (0..len).map(|_| b"ACGT"[rng.gen_range(0..4)]).collect()
}

pub fn write_fasta(path: &Path, name: &str, seq: &[u8]) {
    let mut f = fs::File::create(path).unwrap();
    writeln!(f, ">{name}").unwrap();
    for line in seq.chunks(80) {
        f.write_all(line).unwrap();
        f.write_all(b"\n").unwrap();
    }
}

/// Writes genomes as `<dir>/<taxid>.fasta`.
pub fn write_genomes(dir: &Path, genomes: &[(u32, Vec<u8>)]) {
    fs::create_dir_all(dir).unwrap();
    for (t, seq) in genomes {
        write_fasta(&dir.join(format!("{t}.fasta")), &format!("taxon{t}"), seq);
    }
}

/// Error-free reads: `counts[i]` reads drawn uniformly from `genomes[i]`,
/// shuffled, written as FASTQ.
pub fn write_reads(path: &Path, rng: &mut ChaCha8Rng, genomes: &[&[u8]], counts: &[usize]) {
    let mut reads = Vec::new();
    for (g, &n) in genomes.iter().zip(counts) {
        for _ in 0..n {
            let p = rng.gen_range(0..=g.len() - READ_LEN);
            reads.push(g[p..p + READ_LEN].to_vec());
        }
    }
    reads.shuffle(rng);
    let mut f = std::io::BufWriter::new(fs::File::create(path).unwrap());
    for (i, r) in reads.iter().enumerate() {
        writeln!(f, "@read{i}").unwrap();
        f.write_all(r).unwrap();
        writeln!(f, "\n+").unwrap();
        f.write_all(&vec![b'I'; r.len()]).unwrap();
        f.write_all(b"\n").unwrap();
    }
}

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_kmerstream"))
}

/// Runs the binary and returns its exit code.
pub fn exit_code(args: &[&str]) -> i32 {
    let out = bin().args(args).output().unwrap();
    out.status.code().unwrap_or(-1)
}

pub fn run_ok(args: &[&str]) {
    let out = bin().args(args).output().unwrap();
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

/// Every file under `dir` with its bytes, by relative path. The manifest's
/// wall-clock field is zeroed.
pub fn snapshot(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
                continue;
            }
            let mut bytes = fs::read(&p).unwrap();
            if p.file_name().unwrap() == "manifest.json" {
                let mut v: serde_json::Value = serde_json::from_slice(&bytes).unwrap();
                v["wall_clock_ms"] = 0.into();
                bytes = serde_json::to_vec(&v).unwrap();
            }
            out.push((p.strip_prefix(dir).unwrap().to_path_buf(), bytes));
        }
    }
    out.sort();
    out
}
