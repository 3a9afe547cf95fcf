use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::Args;
use kmerstream::abundance::build_species_index;
use kmerstream::fastx;
use kmerstream::refdb::{
    build_kmer_db, build_kss, build_sketches, build_tree, structure_sizes, Genome, SketchParams,
    DEFAULT_SKETCH_SEED, DEFAULT_SKETCH_SIZE,
};
use kmerstream::TaxId;

use crate::error::{CliError, Result};
use crate::manifest::{RunManifest, MANIFEST_FILE};
use crate::output::Staging;

pub const DB_FILE: &str = "kmers.db";
pub const FLAT_FILE: &str = "sketches.flat";
pub const KSS_FILE: &str = "sketches.kss";
pub const TREE_FILE: &str = "sketches.tree";
pub const INDEX_DIR: &str = "index";

const FASTA_EXTENSIONS: [&str; 3] = ["fasta", "fa", "fna"];

#[derive(Args, Clone, Debug)]
pub struct BuildDbArgs {
    /// Directory of reference genomes named `<taxid>.fasta`.
    #[arg(long)]
    pub genomes: PathBuf,
    #[arg(long, default_value_t = 60)]
    pub k: usize,
    /// Sketch k-mer lengths, largest first; the first must equal --k.
    /// Defaults to k, 5k/6, 4k/6 and k/2.
    #[arg(long, value_delimiter = ',')]
    pub k_levels: Option<Vec<usize>>,
    /// Bottom-s sketch size per genome and level.
    #[arg(long, default_value_t = DEFAULT_SKETCH_SIZE)]
    pub sketch_size: usize,
    /// Sketch hash seed.
    #[arg(long, default_value_t = DEFAULT_SKETCH_SEED)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn default_levels(k: usize) -> Vec<usize> {
    let mut levels: Vec<usize> = (0..4).map(|i| k * (6 - i) / 6).filter(|&l| l > 0).collect();
    levels.dedup();
    levels
}

/// A reference genome file, contigs in file order.
pub struct GenomeFile {
    pub taxid: TaxId,
    pub path: PathBuf,
    pub contigs: Vec<Vec<u8>>,
}

/// Loads every `<taxid>.fasta` (or `.fa`, `.fna`) file, sorted by taxid.
pub fn load_genomes(dir: &Path) -> Result<Vec<GenomeFile>> {
    let entries = fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?;
    let mut out: Vec<GenomeFile> = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| CliError::io(dir, e))?.path();
        let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
        if !path.is_file() || !FASTA_EXTENSIONS.contains(&ext) {
            continue;
        }
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("");
        let id: u32 = stem
            .parse()
            .map_err(|_| CliError::input(&path, "file name must be a numeric taxid"))?;
        let taxid = TaxId::new(id).map_err(|e| CliError::input(&path, e.to_string()))?;
        let contigs: Vec<Vec<u8>> = fastx::read_file(&path)?.into_iter().map(|r| r.seq).collect();
        if contigs.is_empty() {
            return Err(CliError::input(&path, "no sequences"));
        }
        out.push(GenomeFile { taxid, path, contigs });
    }
    out.sort_by_key(|g| g.taxid);
    if let Some(w) = out.windows(2).find(|w| w[0].taxid == w[1].taxid) {
        return Err(CliError::input(&w[1].path, format!("taxid {} appears twice", w[1].taxid)));
    }
    if out.is_empty() {
        return Err(CliError::input(dir, "no <taxid>.fasta files"));
    }
    Ok(out)
}

pub fn build_db(args: &BuildDbArgs, start: Instant) -> Result<RunManifest> {
    let levels = args.k_levels.clone().unwrap_or_else(|| default_levels(args.k));
    if levels.first() != Some(&args.k) {
        return Err(CliError::Usage("--k-levels must start with --k".into()));
    }
    if args.sketch_size == 0 {
        return Err(CliError::Usage("--sketch-size must be positive".into()));
    }
    let files = load_genomes(&args.genomes)?;
    // Contigs are joined with an ambiguous base so no window spans two.
    let genomes: Vec<Genome> = files
        .iter()
        .map(|f| Genome::new(f.taxid, f.contigs.join(&b'N')))
        .collect();

    let db = build_kmer_db(&genomes, args.k)?;
    let params = SketchParams {
        s: args.sketch_size,
        k_levels: levels.clone(),
        seed: args.seed,
    };
    let flat = build_sketches(&genomes, &params)?;
    let kss = build_kss(&flat)?;
    let tree = build_tree(&flat);
    let sizes = structure_sizes(&flat, &tree, &kss);

    let mut stage = Staging::new(&args.out)?;
    stage.write_with(DB_FILE, |w| db.write_to(w))?;
    stage.write_with(FLAT_FILE, |w| flat.write_to(w))?;
    stage.write_with(KSS_FILE, |w| kss.write_to(w))?;
    stage.write_with(TREE_FILE, |w| tree.write_to(w))?;
    for f in &files {
        let idx = build_species_index(f.taxid, &f.contigs, args.k)?;
        stage.write_with(&format!("{INDEX_DIR}/{}.idx", f.taxid), |w| idx.write_to(w))?;
    }

    let mut parameters = BTreeMap::new();
    parameters.insert("k".into(), args.k.to_string());
    parameters.insert("k_levels".into(), join(&levels));
    parameters.insert("sketch_size".into(), args.sketch_size.to_string());
    parameters.insert("seed".into(), args.seed.to_string());
    let mut m = RunManifest::new("build-db", parameters);
    m.inputs = files.iter().map(|f| f.path.display().to_string()).collect();
    m.outputs = stage.files().to_vec();
    m.metric("genomes", files.len());
    m.metric("kmers", db.len());
    m.metric("sketch_entries", flat.total_entries());
    m.metric("flat_bytes", sizes.flat);
    m.metric("kss_bytes", sizes.kss);
    m.metric("tree_bytes", sizes.tree);
    m.wall_clock_ms = start.elapsed().as_millis() as u64;
    let json = m.to_json()?;
    stage.write_with(MANIFEST_FILE, |w| w.write_all(&json))?;
    stage.commit()?;
    Ok(m)
}

pub(crate) fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_levels_follow_k() {
        assert_eq!(default_levels(60), vec![60, 50, 40, 30]);
        assert_eq!(default_levels(12), vec![12, 10, 8, 6]);
        assert_eq!(default_levels(2), vec![2, 1]);
    }
}
