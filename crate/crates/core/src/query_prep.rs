//! Host-side query preparation: k-mer extraction into lexicographic buckets,
//! bucket calibration, per-bucket sort and count, frequency exclusion, and
//! the pinned/spilled residency plan used when the extracted k-mers do not fit
//! the host memory budget.

use std::fs::{self, File, OpenOptions};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::encoding::{KmerWindows, PackedKmer, MAX_K, RECORD_BYTES};
use crate::error::{Error, Result};

/// Default number of buckets.
pub const DEFAULT_BUCKETS: usize = 512;
/// Preliminary buckets created per requested bucket before merging.
pub const PRELIM_FACTOR: usize = 8;
/// K-mers taken from the head of the stream for calibration.
pub const CALIBRATION_SAMPLE: usize = 1_000_000;
/// Host write buffer reserved for each spilled bucket.
pub const SPILL_BUFFER_BYTES: u64 = 1 << 20;

/// Every N-free window of every read, in read order.
pub fn extract_kmers<'a, S>(reads: &'a [S], k: usize) -> Result<impl Iterator<Item = PackedKmer> + 'a>
where
    S: AsRef<[u8]>,
{
    // Validate k once up front so the iterator itself cannot fail.
    KmerWindows::new(b"", k)?;
    Ok(reads.iter().flat_map(move |r| {
        KmerWindows::new(r.as_ref(), k)
            .expect("k validated")
            .map(|(_, km)| km)
    }))
}

/// Lexicographic bucket boundaries. Bucket `i` holds k-mers in
/// `[boundaries[i], boundaries[i + 1])`; the last bucket is open-ended.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BucketSpec {
    k: usize,
    boundaries: Vec<PackedKmer>,
}

impl BucketSpec {
    /// Validates and wraps a boundary list. The first boundary must be the
    /// all-`A` k-mer and boundaries must be strictly increasing.
    pub fn new(k: usize, boundaries: Vec<PackedKmer>) -> Result<Self> {
        if k == 0 || k > MAX_K {
            return Err(Error::InvalidK(k));
        }
        match boundaries.first() {
            Some(first) if first.rank() == 0 && first.k() == k => {}
            _ => return Err(Error::Format("first bucket boundary must be the minimum k-mer".into())),
        }
        if boundaries.iter().any(|b| b.k() != k) {
            return Err(Error::Format("bucket boundary has the wrong k".into()));
        }
        if boundaries.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Format("bucket boundaries must be strictly increasing".into()));
        }
        Ok(Self { k, boundaries })
    }

    /// A single bucket spanning every k-mer.
    pub fn single(k: usize) -> Result<Self> {
        if k == 0 || k > MAX_K {
            return Err(Error::InvalidK(k));
        }
        Ok(Self {
            k,
            boundaries: vec![PackedKmer::from_rank(0, k)],
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn count(&self) -> usize {
        self.boundaries.len()
    }

    pub fn boundaries(&self) -> &[PackedKmer] {
        &self.boundaries
    }

    /// Index of the bucket containing `km`. Lower bounds are inclusive.
    #[inline]
    pub fn assign(&self, km: &PackedKmer) -> usize {
        self.boundaries.partition_point(|b| b <= km) - 1
    }
}

/// Same as [`BucketSpec::assign`].
pub fn assign_bucket(km: &PackedKmer, spec: &BucketSpec) -> usize {
    spec.assign(km)
}

/// Builds `target` buckets of balanced sample mass.
///
/// The k-mer space is first cut into `8 * target` equal-width preliminary
/// ranges; adjacent ranges are then merged into exactly `target` contiguous
/// groups so that the largest group's sample mass is minimal. When the space
/// holds fewer than `target` distinct k-mers, one bucket per k-mer is used.
pub fn calibrate_buckets<I>(sample: I, target: usize) -> Result<BucketSpec>
where
    I: IntoIterator<Item = PackedKmer>,
{
    let sample: Vec<PackedKmer> = sample.into_iter().take(CALIBRATION_SAMPLE).collect();
    let first = sample.first().ok_or(Error::EmptySample)?;
    if target == 0 {
        return Err(Error::Format("bucket count must be at least 1".into()));
    }
    let k = first.k();
    if sample.iter().any(|km| km.k() != k) {
        return Err(Error::Format("calibration sample mixes k-mer lengths".into()));
    }

    let space: u128 = 1u128 << (2 * k);
    let prelim = (PRELIM_FACTOR as u128 * target as u128).min(space) as usize;
    let width = space / prelim as u128;
    let extra = space % prelim as u128;
    let prelim_bounds: Vec<u128> = (0..prelim as u128)
        .map(|j| j * width + j * extra / prelim as u128)
        .collect();

    let mut mass = vec![0u64; prelim];
    for km in &sample {
        let r = km.rank();
        mass[prelim_bounds.partition_point(|&b| b <= r) - 1] += 1;
    }

    let groups = target.min(prelim);
    let starts = min_max_partition(&mass, groups);
    let boundaries = starts
        .into_iter()
        .map(|i| PackedKmer::from_rank(prelim_bounds[i], k))
        .collect();
    BucketSpec::new(k, boundaries)
}

/// Splits `mass` into exactly `groups` non-empty contiguous runs minimizing the
/// largest run sum. Returns the start index of each run.
fn min_max_partition(mass: &[u64], groups: usize) -> Vec<usize> {
    debug_assert!(groups >= 1 && groups <= mass.len());
    let fits = |limit: u64| {
        let mut used = 1;
        let mut acc = 0u64;
        for &m in mass {
            if acc + m > limit {
                used += 1;
                acc = m;
            } else {
                acc += m;
            }
        }
        used <= groups
    };
    let mut lo = mass.iter().copied().max().unwrap_or(0);
    let mut hi = mass.iter().sum::<u64>();
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if fits(mid) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    let limit = lo;

    let mut starts = vec![0];
    let mut acc = 0u64;
    for (i, &m) in mass.iter().enumerate().skip(1) {
        acc += mass[i - 1];
        let remaining_items = mass.len() - i;
        let remaining_groups = groups - starts.len();
        if remaining_groups > 0 && (acc + m > limit || remaining_items == remaining_groups) {
            starts.push(i);
            acc = 0;
        }
    }
    debug_assert_eq!(starts.len(), groups);
    starts
}

/// One lexicographic bucket of extracted k-mers.
#[derive(Clone, Debug, Default)]
pub struct KmerBucket {
    pub index: usize,
    pub kmers: Vec<PackedKmer>,
    /// Resident in host memory (as opposed to spilled to storage).
    pub pinned: bool,
}

/// Sorts a bucket and collapses runs into `(k-mer, multiplicity)` pairs.
pub fn sort_and_count(mut kmers: Vec<PackedKmer>) -> Vec<(PackedKmer, u32)> {
    kmers.sort_unstable();
    let mut out: Vec<(PackedKmer, u32)> = Vec::new();
    for km in kmers {
        match out.last_mut() {
            Some((last, count)) if *last == km => *count += 1,
            _ => out.push((km, 1)),
        }
    }
    out
}

/// Inclusive multiplicity bounds; `max == u32::MAX` means unbounded.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FrequencyBounds {
    pub min: u32,
    pub max: u32,
}

impl Default for FrequencyBounds {
    fn default() -> Self {
        Self {
            min: 1,
            max: u32::MAX,
        }
    }
}

impl FrequencyBounds {
    pub fn new(min: u32, max: u32) -> Result<Self> {
        if min < 1 || min > max {
            return Err(Error::BadRange { min, max });
        }
        Ok(Self { min, max })
    }

    #[inline]
    pub fn keeps(&self, count: u32) -> bool {
        (self.min..=self.max).contains(&count)
    }
}

/// Keeps k-mers whose multiplicity lies within `bounds`, preserving order.
pub fn exclude_by_frequency(
    counted: &[(PackedKmer, u32)],
    bounds: FrequencyBounds,
) -> Vec<(PackedKmer, u32)> {
    counted
        .iter()
        .copied()
        .filter(|&(_, c)| bounds.keeps(c))
        .collect()
}

/// Which buckets stay in host memory. Buckets `0..pinned` are pinned, the rest
/// are spilled, each with a sequential write buffer of `spill_buffer` bytes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ResidencyPlan {
    pub pinned: usize,
    pub buckets: usize,
    pub spill_buffer: u64,
    /// Host bytes used by pinned buckets plus spill buffers.
    pub host_bytes: u64,
}

impl ResidencyPlan {
    pub fn is_pinned(&self, bucket: usize) -> bool {
        bucket < self.pinned
    }

    pub fn spilled(&self) -> usize {
        self.buckets - self.pinned
    }
}

/// Pins the longest bucket prefix that fits `host_budget` after reserving a
/// spill buffer for every bucket left out.
pub fn plan_residency(sizes: &[u64], host_budget: u64, spill_buffer: u64) -> Result<ResidencyPlan> {
    let largest = sizes.iter().copied().max().unwrap_or(0);
    if largest > host_budget {
        return Err(Error::BudgetTooSmall {
            budget: host_budget,
            needed: largest,
        });
    }
    let n = sizes.len();
    let mut best: Option<(usize, u64)> = None;
    let mut prefix = 0u64;
    for p in 0..=n {
        if p > 0 {
            prefix += sizes[p - 1];
        }
        let used = prefix + spill_buffer * (n - p) as u64;
        if used <= host_budget {
            best = Some((p, used));
        }
    }
    let (pinned, host_bytes) = best.ok_or(Error::BudgetTooSmall {
        budget: host_budget,
        needed: spill_buffer * n as u64,
    })?;
    Ok(ResidencyPlan {
        pinned,
        buckets: n,
        spill_buffer,
        host_bytes,
    })
}

/// Append-only file of raw little-endian 128-bit k-mer records.
pub struct SpillWriter {
    path: PathBuf,
    out: BufWriter<File>,
    records: u64,
}

impl SpillWriter {
    pub fn create(path: impl Into<PathBuf>, buffer_bytes: usize) -> Result<Self> {
        let path = path.into();
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        Ok(Self {
            out: BufWriter::with_capacity(buffer_bytes.max(RECORD_BYTES), file),
            path,
            records: 0,
        })
    }

    pub fn push(&mut self, km: &PackedKmer) -> Result<()> {
        self.out
            .write_all(&km.to_le_bytes())
            .map_err(|e| Error::io(&self.path, e))?;
        self.records += 1;
        Ok(())
    }

    pub fn finish(mut self) -> Result<(PathBuf, u64)> {
        self.out.flush().map_err(|e| Error::io(&self.path, e))?;
        Ok((self.path, self.records))
    }
}

pub fn read_spill_file(path: &Path, k: usize) -> Result<Vec<PackedKmer>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let len = file.metadata().map_err(|e| Error::io(path, e))?.len();
    if len % RECORD_BYTES as u64 != 0 {
        return Err(Error::Format(format!(
            "{}: spill file length {len} is not a multiple of {RECORD_BYTES}",
            path.display()
        )));
    }
    let mut reader = BufReader::new(file);
    let mut out = Vec::with_capacity((len / RECORD_BYTES as u64) as usize);
    let mut buf = [0u8; RECORD_BYTES];
    for _ in 0..len / RECORD_BYTES as u64 {
        reader.read_exact(&mut buf).map_err(|e| Error::io(path, e))?;
        out.push(PackedKmer::from_le_bytes(buf, k)?);
    }
    Ok(out)
}

/// Deduplicated, counted, filtered query k-mers in bucket order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QueryKmerSet {
    k: usize,
    buckets: Vec<Vec<(PackedKmer, u32)>>,
}

const QUERY_MAGIC: &[u8; 4] = b"MGQS";
const QUERY_VERSION: u16 = 1;

impl QueryKmerSet {
    pub fn new(k: usize, buckets: Vec<Vec<(PackedKmer, u32)>>) -> Result<Self> {
        let set = Self { k, buckets };
        set.validate()?;
        Ok(set)
    }

    fn validate(&self) -> Result<()> {
        let mut prev: Option<PackedKmer> = None;
        for (i, (km, c)) in self.iter().enumerate() {
            if km.k() != self.k || c == 0 {
                return Err(Error::Format(format!("bad query record at {i}")));
            }
            if prev.is_some_and(|p| p >= km) {
                return Err(Error::UnsortedInput { position: i });
            }
            prev = Some(km);
        }
        Ok(())
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn buckets(&self) -> &[Vec<(PackedKmer, u32)>] {
        &self.buckets
    }

    pub fn total_distinct(&self) -> usize {
        self.buckets.iter().map(Vec::len).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (PackedKmer, u32)> + '_ {
        self.buckets.iter().flatten().copied()
    }

    pub fn kmers(&self) -> impl Iterator<Item = PackedKmer> + '_ {
        self.iter().map(|(km, _)| km)
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(QUERY_MAGIC)?;
        w.write_all(&QUERY_VERSION.to_le_bytes())?;
        w.write_all(&(self.k as u16).to_le_bytes())?;
        w.write_all(&(self.buckets.len() as u32).to_le_bytes())?;
        for bucket in &self.buckets {
            w.write_all(&(bucket.len() as u64).to_le_bytes())?;
            for (km, c) in bucket {
                w.write_all(&km.to_le_bytes())?;
                w.write_all(&c.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != QUERY_MAGIC {
            return Err(Error::Format("not a query k-mer set file".into()));
        }
        let mut b2 = [0u8; 2];
        r.read_exact(&mut b2)?;
        if u16::from_le_bytes(b2) != QUERY_VERSION {
            return Err(Error::Format("unsupported query set version".into()));
        }
        r.read_exact(&mut b2)?;
        let k = u16::from_le_bytes(b2) as usize;
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4)?;
        let nb = u32::from_le_bytes(b4) as usize;
        let mut buckets = Vec::with_capacity(nb);
        let mut b8 = [0u8; 8];
        let mut rec = [0u8; RECORD_BYTES];
        for _ in 0..nb {
            r.read_exact(&mut b8)?;
            let n = u64::from_le_bytes(b8) as usize;
            let mut bucket = Vec::with_capacity(n);
            for _ in 0..n {
                r.read_exact(&mut rec)?;
                r.read_exact(&mut b4)?;
                bucket.push((PackedKmer::from_le_bytes(rec, k)?, u32::from_le_bytes(b4)));
            }
            buckets.push(bucket);
        }
        Self::new(k, buckets)
    }
}

#[derive(Clone, Debug)]
pub struct PrepConfig {
    pub k: usize,
    pub buckets: usize,
    pub bounds: FrequencyBounds,
    /// Host memory available for extracted k-mers; `None` pins everything.
    pub host_budget: Option<u64>,
    /// Directory for spilled buckets; a temporary directory when `None`.
    pub spill_dir: Option<PathBuf>,
    /// Host write buffer reserved per spilled bucket.
    pub spill_buffer: u64,
}

impl PrepConfig {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            buckets: DEFAULT_BUCKETS,
            bounds: FrequencyBounds::default(),
            host_budget: None,
            spill_dir: None,
            spill_buffer: SPILL_BUFFER_BYTES,
        }
    }
}

#[derive(Debug)]
pub struct PrepOutput {
    pub set: QueryKmerSet,
    pub spec: BucketSpec,
    pub plan: ResidencyPlan,
    /// Extracted k-mers per bucket, before deduplication.
    pub bucket_sizes: Vec<u64>,
    pub extracted: u64,
}

/// Runs extraction, bucketing, sorting and exclusion over an in-memory read set.
pub fn prepare<S>(reads: &[S], cfg: &PrepConfig) -> Result<PrepOutput>
where
    S: AsRef<[u8]> + Sync,
{
    let spec = match calibrate_buckets(extract_kmers(reads, cfg.k)?, cfg.buckets) {
        Ok(spec) => spec,
        Err(Error::EmptySample) => BucketSpec::single(cfg.k)?,
        Err(e) => return Err(e),
    };

    let mut counts = vec![0u64; spec.count()];
    for km in extract_kmers(reads, cfg.k)? {
        counts[spec.assign(&km)] += 1;
    }
    let extracted: u64 = counts.iter().sum();
    let sizes: Vec<u64> = counts.iter().map(|c| c * RECORD_BYTES as u64).collect();
    let plan = match cfg.host_budget {
        Some(budget) => plan_residency(&sizes, budget, cfg.spill_buffer)?,
        None => ResidencyPlan {
            pinned: spec.count(),
            buckets: spec.count(),
            spill_buffer: cfg.spill_buffer,
            host_bytes: sizes.iter().sum(),
        },
    };

    let mut buckets: Vec<KmerBucket> = (0..spec.count())
        .map(|index| KmerBucket {
            index,
            kmers: if plan.is_pinned(index) {
                Vec::with_capacity(counts[index] as usize)
            } else {
                Vec::new()
            },
            pinned: plan.is_pinned(index),
        })
        .collect();

    let tmp;
    let spill_dir = match (&cfg.spill_dir, plan.spilled()) {
        (_, 0) => None,
        (Some(dir), _) => Some(dir.clone()),
        (None, _) => {
            tmp = tempfile::tempdir()?;
            Some(tmp.path().to_path_buf())
        }
    };
    let mut writers: Vec<Option<SpillWriter>> = (0..spec.count()).map(|_| None).collect();
    if let Some(dir) = &spill_dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for i in plan.pinned..spec.count() {
            let path = dir.join(format!("bucket-{i:05}.spill"));
            // Stale spill output from an earlier run must not be appended to.
            if path.exists() {
                fs::remove_file(&path).map_err(|e| Error::io(&path, e))?;
            }
            writers[i] = Some(SpillWriter::create(path, plan.spill_buffer as usize)?);
        }
    }

    for km in extract_kmers(reads, cfg.k)? {
        let b = spec.assign(&km);
        match &mut writers[b] {
            Some(w) => w.push(&km)?,
            None => buckets[b].kmers.push(km),
        }
    }
    let mut spill_paths = vec![None; spec.count()];
    for (i, w) in writers.into_iter().enumerate() {
        if let Some(w) = w {
            spill_paths[i] = Some(w.finish()?.0);
        }
    }

    let sorted: Vec<Vec<(PackedKmer, u32)>> = buckets
        .into_par_iter()
        .map(|bucket| -> Result<_> {
            let kmers = match &spill_paths[bucket.index] {
                Some(path) => read_spill_file(path, cfg.k)?,
                None => bucket.kmers,
            };
            Ok(exclude_by_frequency(&sort_and_count(kmers), cfg.bounds))
        })
        .collect::<Result<_>>()?;

    Ok(PrepOutput {
        set: QueryKmerSet::new(cfg.k, sorted)?,
        spec,
        plan,
        bucket_sizes: counts,
        extracted,
    })
}
