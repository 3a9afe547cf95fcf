use std::ops::Range;

use rayon::prelude::*;

use crate::encoding::{PackedKmer, RECORD_BYTES};
use crate::error::{Error, Result};
use crate::query_prep::QueryKmerSet;
use crate::refdb::SortedKmerDatabase;

/// Size of one query transfer batch.
pub const BATCH_BYTES: usize = 1 << 20;
pub const BATCH_RECORDS: usize = BATCH_BYTES / RECORD_BYTES;

/// A run of consecutive query records, never splitting a record.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Batch {
    pub seq: u64,
    pub records: Vec<PackedKmer>,
}

/// Cuts a sorted stream into batches of at most `records_per_batch` records.
pub fn batches<I>(query: I, records_per_batch: usize) -> impl Iterator<Item = Batch>
where
    I: IntoIterator<Item = PackedKmer>,
{
    let per = records_per_batch.max(1);
    let mut it = query.into_iter();
    let mut seq = 0;
    std::iter::from_fn(move || {
        let records: Vec<PackedKmer> = it.by_ref().take(per).collect();
        if records.is_empty() {
            return None;
        }
        seq += 1;
        Some(Batch { seq: seq - 1, records })
    })
}

/// Two-pointer merge-join over two strictly increasing streams whose state
/// survives across query batches, so the database side is read once.
pub struct MergeJoin<D: Iterator<Item = Result<PackedKmer>>> {
    db: D,
    db_head: Option<PackedKmer>,
    db_pos: usize,
    last_query: Option<PackedKmer>,
    query_pos: usize,
    comparisons: u64,
}

impl<D: Iterator<Item = Result<PackedKmer>>> MergeJoin<D> {
    pub fn new(mut db: D) -> Result<Self> {
        let db_head = db.next().transpose()?;
        Ok(Self {
            db,
            db_head,
            db_pos: 0,
            last_query: None,
            query_pos: 0,
            comparisons: 0,
        })
    }

    fn advance_db(&mut self) -> Result<()> {
        let prev = self.db_head;
        self.db_head = self.db.next().transpose()?;
        self.db_pos += 1;
        if let (Some(p), Some(n)) = (prev, self.db_head) {
            if n <= p {
                return Err(Error::UnsortedInput { position: self.db_pos });
            }
        }
        Ok(())
    }

    /// Intersects one batch, appending matches to `out`.
    pub fn feed(&mut self, batch: &[PackedKmer], out: &mut Vec<PackedKmer>) -> Result<()> {
        for &q in batch {
            if self.last_query.is_some_and(|p| q <= p) {
                return Err(Error::UnsortedInput { position: self.query_pos });
            }
            self.last_query = Some(q);
            self.query_pos += 1;
            while let Some(d) = self.db_head {
                self.comparisons += 1;
                if d < q {
                    self.advance_db()?;
                } else {
                    if d == q {
                        out.push(q);
                        self.advance_db()?;
                    }
                    break;
                }
            }
        }
        Ok(())
    }

    /// Three-way comparisons performed so far.
    pub fn comparisons(&self) -> u64 {
        self.comparisons
    }
}

/// Intersection of two strictly increasing streams and the number of
/// comparisons it took.
pub fn stream_intersect<Q, D>(query: Q, db: D) -> Result<(Vec<PackedKmer>, u64)>
where
    Q: IntoIterator<Item = PackedKmer>,
    D: IntoIterator<Item = PackedKmer>,
{
    let mut join = MergeJoin::new(db.into_iter().map(Ok))?;
    let mut out = Vec::new();
    let query: Vec<PackedKmer> = query.into_iter().collect();
    join.feed(&query, &mut out)?;
    Ok((out, join.comparisons()))
}

/// Query k-mers found in the database, with the output range contributed by
/// each query bucket.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct IntersectionSet {
    pub kmers: Vec<PackedKmer>,
    pub buckets: Vec<Range<usize>>,
    pub comparisons: u64,
}

impl IntersectionSet {
    pub fn len(&self) -> usize {
        self.kmers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kmers.is_empty()
    }

    /// Writes the k-mers in the database file format.
    pub fn write_to<W: std::io::Write>(&self, w: W, k: usize) -> Result<()> {
        SortedKmerDatabase::new(k, self.kmers.clone())?.write_to(w)?;
        Ok(())
    }
}

/// Intersects each channel's database stripe independently and concatenates
/// the lanes in stripe order. A lane only sees the query k-mers inside its
/// stripe's value range.
pub fn intersect_striped(query: &[PackedKmer], db: &[PackedKmer], stripes: &[Range<usize>]) -> Result<(Vec<PackedKmer>, u64)> {
    if let Some(i) = query.windows(2).position(|w| w[0] >= w[1]) {
        return Err(Error::UnsortedInput { position: i + 1 });
    }
    let lanes: Vec<(Vec<PackedKmer>, u64)> = stripes
        .par_iter()
        .map(|s| {
            if s.is_empty() {
                return Ok((Vec::new(), 0));
            }
            let (lo, hi) = (db[s.start], db[s.end - 1]);
            let qs = query.partition_point(|q| *q < lo);
            let qe = query.partition_point(|q| *q <= hi);
            stream_intersect(query[qs..qe].iter().copied(), db[s.clone()].iter().copied())
        })
        .collect::<Result<_>>()?;
    let comparisons = lanes.iter().map(|l| l.1).sum();
    Ok((lanes.into_iter().flat_map(|l| l.0).collect(), comparisons))
}

/// Intersects a prepared query set bucket by bucket against the database,
/// one lane per stripe (a single lane when the database has no stripes).
pub fn intersect_query_set(set: &QueryKmerSet, db: &SortedKmerDatabase) -> Result<IntersectionSet> {
    if set.k() != db.k() {
        return Err(Error::KMismatch { reads: set.k(), db: db.k() });
    }
    let whole = [0..db.len()];
    let stripes = if db.stripes().is_empty() { &whole[..] } else { db.stripes() };
    let mut out = IntersectionSet::default();
    for bucket in set.buckets() {
        let q: Vec<PackedKmer> = bucket.iter().map(|(k, _)| *k).collect();
        let (found, cmp) = intersect_striped(&q, db.records(), stripes)?;
        let start = out.kmers.len();
        out.kmers.extend(found);
        out.buckets.push(start..out.kmers.len());
        out.comparisons += cmp;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeSet;

    fn km(s: &str) -> PackedKmer {
        PackedKmer::from_str_k(s).unwrap()
    }

    fn random_set(rng: &mut impl Rng, n: usize, k: usize, space: u128) -> Vec<PackedKmer> {
        let set: BTreeSet<PackedKmer> = (0..n).map(|_| PackedKmer::from_rank(rng.gen_range(0..space), k)).collect();
        set.into_iter().collect()
    }

    #[test]
    fn examples() {
        let q = [km("AAC"), km("GGT"), km("TTA")];
        let d = [km("AAC"), km("CCC"), km("GGT")];
        assert_eq!(stream_intersect(q, d).unwrap().0, vec![km("AAC"), km("GGT")]);
        assert!(stream_intersect([km("AAA")], [km("CCC")]).unwrap().0.is_empty());
        assert!(stream_intersect([], [km("CCC")]).unwrap().0.is_empty());
    }

    #[test]
    fn inversions_abort() {
        assert!(matches!(
            stream_intersect([km("GGT"), km("AAC")], [km("AAC")]),
            Err(Error::UnsortedInput { position: 1 })
        ));
        assert!(matches!(
            stream_intersect([km("TTT")], [km("CCC"), km("AAC")]),
            Err(Error::UnsortedInput { .. })
        ));
        assert!(stream_intersect([km("AAC"), km("AAC")], [km("AAC")]).is_err());
    }

    #[test]
    fn matches_set_oracle_within_single_pass_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..20 {
            let a = random_set(&mut rng, 3000, 10, 1 << 14);
            let b = random_set(&mut rng, 3000, 10, 1 << 14);
            let (got, cmp) = stream_intersect(a.iter().copied(), b.iter().copied()).unwrap();
            let sa: BTreeSet<_> = a.iter().collect();
            let oracle: Vec<PackedKmer> = b.iter().filter(|k| sa.contains(k)).copied().collect();
            assert_eq!(got, oracle);
            assert!(cmp <= (a.len() + b.len()) as u64);
        }
    }

    #[test]
    fn batching_is_transparent() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let a = random_set(&mut rng, 5000, 12, 1 << 16);
        let b = random_set(&mut rng, 5000, 12, 1 << 16);
        let whole = stream_intersect(a.iter().copied(), b.iter().copied()).unwrap().0;
        for per in [1, 7, 64, 1000, 10_000] {
            let mut join = MergeJoin::new(b.iter().copied().map(Ok)).unwrap();
            let mut out = Vec::new();
            let mut seqs = Vec::new();
            for batch in batches(a.iter().copied(), per) {
                assert!(batch.records.len() <= per);
                seqs.push(batch.seq);
                join.feed(&batch.records, &mut out).unwrap();
            }
            assert_eq!(out, whole);
            assert_eq!(seqs, (0..seqs.len() as u64).collect::<Vec<_>>());
        }
    }

    #[test]
    fn batch_size_is_one_mebibyte_of_records() {
        assert_eq!(BATCH_RECORDS, 65_536);
        let n = BATCH_RECORDS * 2 + 5;
        let all: Vec<PackedKmer> = (0..n as u128).map(|r| PackedKmer::from_rank(r, 20)).collect();
        let sizes: Vec<usize> = batches(all, BATCH_RECORDS).map(|b| b.records.len()).collect();
        assert_eq!(sizes, vec![BATCH_RECORDS, BATCH_RECORDS, 5]);
    }

    #[test]
    fn striped_lanes_concatenate_to_the_whole() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let a = random_set(&mut rng, 4000, 11, 1 << 13);
        let b = random_set(&mut rng, 4000, 11, 1 << 13);
        let whole = stream_intersect(a.iter().copied(), b.iter().copied()).unwrap().0;
        for ch in [1, 2, 8, 32] {
            let db = SortedKmerDatabase::new(11, b.clone()).unwrap();
            let (got, cmp) = intersect_striped(&a, &b, &db.even_stripes(ch)).unwrap();
            assert_eq!(got, whole);
            assert!(cmp <= (a.len() + b.len()) as u64);
        }
    }
}
