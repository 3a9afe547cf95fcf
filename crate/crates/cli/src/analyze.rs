use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufReader, Write};
use std::path::PathBuf;
use std::time::Instant;

use clap::Args;
use kmerstream::abundance::{estimate_abundance, merge_indexes, SpeciesIndex};
use kmerstream::fastx;
use kmerstream::isp::{call_presence, check_tau, containment, run_step2, DEFAULT_TAU};
use kmerstream::query_prep::{prepare, FrequencyBounds, PrepConfig, DEFAULT_BUCKETS};
use kmerstream::refdb::{KssTables, SortedKmerDatabase};
use kmerstream::Error;

use crate::build_db::{DB_FILE, INDEX_DIR, KSS_FILE};
use crate::error::{CliError, Result};
use crate::manifest::{RunManifest, MANIFEST_FILE};
use crate::output::{parse_size, Staging};

pub const PRESENCE_FILE: &str = "presence.csv";
pub const ABUNDANCE_FILE: &str = "abundance.csv";
pub const HITS_FILE: &str = "hits.csv";

#[derive(Args, Clone, Debug)]
pub struct AnalyzeArgs {
    /// FASTA or FASTQ read set.
    #[arg(long)]
    pub reads: PathBuf,
    /// Output directory of build-db.
    #[arg(long)]
    pub db: PathBuf,
    /// Query k-mer length; must match the database and defaults to it.
    #[arg(long)]
    pub k: Option<usize>,
    /// Containment threshold for calling a taxid present.
    #[arg(long, default_value_t = DEFAULT_TAU)]
    pub tau: f64,
    #[arg(long, default_value_t = DEFAULT_BUCKETS)]
    pub buckets: usize,
    /// Drop query k-mers seen fewer times than this.
    #[arg(long, default_value_t = 1)]
    pub min_count: u32,
    /// Drop query k-mers seen more times than this.
    #[arg(long)]
    pub max_count: Option<u32>,
    /// Host memory for extracted k-mers (e.g. 8G); buckets that do not fit
    /// are spilled to disk. Unlimited when omitted.
    #[arg(long, value_parser = parse_size)]
    pub dram_budget: Option<u64>,
    /// Intersecting k-mers buffered before a retrieval round runs.
    #[arg(long, value_parser = parse_size, default_value = "1G")]
    pub intersection_budget: u64,
    /// Database stripes intersected in parallel, one per flash channel.
    #[arg(long, default_value_t = 8)]
    pub channels: usize,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn analyze(args: &AnalyzeArgs, start: Instant) -> Result<RunManifest> {
    check_tau(args.tau).map_err(|e| CliError::Usage(e.to_string()))?;
    let bounds = FrequencyBounds::new(args.min_count, args.max_count.unwrap_or(u32::MAX))
        .map_err(|e| CliError::Usage(e.to_string()))?;
    if args.buckets == 0 || args.channels == 0 {
        return Err(CliError::Usage("--buckets and --channels must be positive".into()));
    }

    let mut db = SortedKmerDatabase::read_file(&args.db.join(DB_FILE))?;
    if let Some(k) = args.k {
        if k != db.k() {
            return Err(Error::KMismatch { reads: k, db: db.k() }.into());
        }
    }
    let kss_path = args.db.join(KSS_FILE);
    let kss = KssTables::read_from(BufReader::new(
        File::open(&kss_path).map_err(|e| CliError::io(&kss_path, e))?,
    ))?;
    if kss.k_max() != db.k() {
        return Err(Error::KMismatch { reads: kss.k_max(), db: db.k() }.into());
    }

    let reads: Vec<Vec<u8>> = fastx::read_file(&args.reads)?.into_iter().map(|r| r.seq).collect();
    let mut prep_cfg = PrepConfig::new(db.k());
    prep_cfg.buckets = args.buckets;
    prep_cfg.bounds = bounds;
    prep_cfg.host_budget = args.dram_budget;
    let prep = prepare(&reads, &prep_cfg)?;

    let stripes = db.even_stripes(args.channels);
    db.set_stripes(stripes)?;
    let step2 = run_step2(&prep.set, &db, &kss, args.intersection_budget)?;
    let sizes = kss.sketch_sizes();
    let scores = containment(&step2.hits, &sizes);
    let present = call_presence(&step2.hits, &sizes, args.tau)?;

    let abundance = if reads.is_empty() {
        None
    } else {
        let indexes = present
            .iter()
            .map(|t| SpeciesIndex::read_file(&args.db.join(INDEX_DIR).join(format!("{t}.idx"))))
            .collect::<kmerstream::Result<Vec<_>>>()?;
        let unified = merge_indexes(&indexes)?;
        Some(estimate_abundance(&reads, &unified, &present))
    };

    let mut stage = Staging::new(&args.out)?;
    stage.write_with(PRESENCE_FILE, |w| {
        writeln!(w, "taxid,containment")?;
        for t in &present {
            writeln!(w, "{t},{:.6}", scores[t])?;
        }
        Ok(())
    })?;
    stage.write_with(ABUNDANCE_FILE, |w| match &abundance {
        Some(p) => p.write_csv(w),
        None => writeln!(w, "taxid,abundance"),
    })?;
    stage.write_with(HITS_FILE, |w| {
        writeln!(w, "taxid,k,hits")?;
        for (t, counts) in step2.hits.iter() {
            for (k, c) in step2.hits.k_levels().iter().zip(counts) {
                writeln!(w, "{t},{k},{c}")?;
            }
        }
        Ok(())
    })?;

    let mut parameters = BTreeMap::new();
    parameters.insert("k".into(), db.k().to_string());
    parameters.insert("tau".into(), args.tau.to_string());
    parameters.insert("buckets".into(), args.buckets.to_string());
    parameters.insert("min_count".into(), args.min_count.to_string());
    parameters.insert("max_count".into(), bounds.max.to_string());
    // Budgets change where work happens, not the results, but they are
    // recorded so a rerun can reproduce the same plan.
    parameters.insert(
        "dram_budget".into(),
        args.dram_budget.map_or("unlimited".into(), |b| b.to_string()),
    );
    parameters.insert("intersection_budget".into(), args.intersection_budget.to_string());
    parameters.insert("channels".into(), args.channels.to_string());
    let mut m = RunManifest::new("analyze", parameters);
    m.inputs = vec![args.reads.display().to_string(), args.db.display().to_string()];
    m.outputs = stage.files().to_vec();
    m.metric("reads", reads.len());
    m.metric("extracted_kmers", prep.extracted);
    m.metric("query_kmers", prep.set.total_distinct());
    m.metric("buckets", prep.spec.count());
    m.metric("pinned_buckets", prep.plan.pinned);
    m.metric("intersecting_kmers", step2.intersection.kmers.len());
    m.metric("comparisons", step2.intersection.comparisons);
    m.metric("retrieval_rounds", step2.retrieval_rounds);
    m.metric("present_taxa", present.len());
    m.wall_clock_ms = start.elapsed().as_millis() as u64;
    let json = m.to_json()?;
    stage.write_with(MANIFEST_FILE, |w| w.write_all(&json))?;
    stage.commit()?;
    Ok(m)
}

/// Reads back the presence set written by [`analyze`].
pub fn read_presence(dir: &std::path::Path) -> Result<BTreeSet<u32>> {
    let path = dir.join(PRESENCE_FILE);
    let mut rdr = csv::Reader::from_path(&path)?;
    let mut out = BTreeSet::new();
    for rec in rdr.records() {
        let rec = rec?;
        let t = rec[0].parse().map_err(|_| CliError::input(&path, "bad taxid"))?;
        out.insert(t);
    }
    Ok(out)
}

/// Reads back the abundance profile written by [`analyze`]; taxid 0 is the
/// unclassified share.
pub fn read_abundance(dir: &std::path::Path) -> Result<BTreeMap<u32, f64>> {
    let path = dir.join(ABUNDANCE_FILE);
    let mut rdr = csv::Reader::from_path(&path)?;
    let mut out = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let t = rec[0].parse().map_err(|_| CliError::input(&path, "bad taxid"))?;
        let a = rec[1].parse().map_err(|_| CliError::input(&path, "bad abundance"))?;
        out.insert(t, a);
    }
    Ok(out)
}
