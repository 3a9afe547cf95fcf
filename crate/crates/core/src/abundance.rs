//! Per-species reference indexes, their merge into one offset-adjusted
//! unified index, and a read-level k-mer vote abundance estimator.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::binio::{expect_magic, get_kmer, get_u16, get_u32, get_u64, put_u16, put_u32, put_u64};
use crate::encoding::{check_k, KmerWindows, PackedKmer, TaxId};
use crate::error::{Error, Result};

const SPECIES_MAGIC: &[u8; 4] = b"MGIX";
const UNIFIED_MAGIC: &[u8; 4] = b"MGIU";
const INDEX_VERSION: u16 = 1;

/// K-mer locations within one species' genome.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SpeciesIndex {
    pub taxid: TaxId,
    pub k: usize,
    pub genome_len: u64,
    /// Sorted by k-mer; locations sorted.
    pub entries: Vec<(PackedKmer, Vec<u32>)>,
}

/// Indexes every window of a genome given as one or more contigs. Contigs are
/// laid end to end, so a location is an offset into their concatenation.
pub fn build_species_index<S: AsRef<[u8]>>(taxid: TaxId, contigs: &[S], k: usize) -> Result<SpeciesIndex> {
    check_k(k)?;
    let mut hits: Vec<(PackedKmer, u32)> = Vec::new();
    let mut base = 0u64;
    for c in contigs {
        let c = c.as_ref();
        for (pos, km) in KmerWindows::new(c, k)? {
            let loc = u32::try_from(base + pos as u64).map_err(|_| Error::Format("genome longer than 4 Gbp".into()))?;
            hits.push((km, loc));
        }
        base += c.len() as u64;
    }
    hits.sort_unstable();
    let mut entries: Vec<(PackedKmer, Vec<u32>)> = Vec::new();
    for (km, loc) in hits {
        match entries.last_mut() {
            Some((last, locs)) if *last == km => locs.push(loc),
            _ => entries.push((km, vec![loc])),
        }
    }
    Ok(SpeciesIndex {
        taxid,
        k,
        genome_len: base,
        entries,
    })
}

impl SpeciesIndex {
    pub fn validate(&self) -> Result<()> {
        check_k(self.k)?;
        if self.entries.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(Error::Format(format!("index {}: entries not sorted", self.taxid)));
        }
        for (km, locs) in &self.entries {
            if km.k() != self.k || locs.is_empty() {
                return Err(Error::Format(format!("index {}: bad entry {km}", self.taxid)));
            }
            if locs.windows(2).any(|w| w[0] >= w[1]) || locs.iter().any(|&l| l as u64 >= self.genome_len) {
                return Err(Error::Format(format!("index {}: bad locations for {km}", self.taxid)));
            }
        }
        Ok(())
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(SPECIES_MAGIC)?;
        put_u16(&mut w, INDEX_VERSION)?;
        put_u16(&mut w, self.k as u16)?;
        put_u64(&mut w, self.entries.len() as u64)?;
        put_u32(&mut w, self.taxid.get())?;
        put_u64(&mut w, self.genome_len)?;
        for (km, locs) in &self.entries {
            w.write_all(&km.to_le_bytes())?;
            put_u32(&mut w, locs.len() as u32)?;
            for &l in locs {
                put_u32(&mut w, l)?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        expect_magic(&mut r, SPECIES_MAGIC, "species index")?;
        if get_u16(&mut r)? != INDEX_VERSION {
            return Err(Error::Format("unsupported species index version".into()));
        }
        let k = get_u16(&mut r)? as usize;
        check_k(k)?;
        let count = get_u64(&mut r)?;
        let taxid = TaxId::new(get_u32(&mut r)?)?;
        let genome_len = get_u64(&mut r)?;
        let mut entries = Vec::with_capacity(count as usize);
        for _ in 0..count {
            let km = get_kmer(&mut r, k)?;
            let n = get_u32(&mut r)?;
            entries.push((km, (0..n).map(|_| get_u32(&mut r)).collect::<Result<Vec<_>>>()?));
        }
        let idx = Self { taxid, k, genome_len, entries };
        idx.validate()?;
        Ok(idx)
    }

    pub fn write_file(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
        self.write_to(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_file(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(BufReader::new(f)).map_err(|e| match e {
            Error::RawIo(io) => Error::io(path, io),
            other => other,
        })
    }
}

/// Candidate species' indexes merged into one coordinate space: species `i`
/// occupies `[offsets[i], offsets[i] + genome_lens[i])`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UnifiedIndex {
    pub k: usize,
    pub taxids: Vec<TaxId>,
    pub offsets: Vec<u64>,
    pub genome_lens: Vec<u64>,
    pub entries: Vec<(PackedKmer, Vec<u64>)>,
}

/// K-way merge of species indexes in ascending taxid order, shifting each
/// species' locations by the total length of the genomes before it.
pub fn merge_indexes(indexes: &[SpeciesIndex]) -> Result<UnifiedIndex> {
    let mut order: Vec<&SpeciesIndex> = indexes.iter().collect();
    order.sort_by_key(|i| i.taxid);
    if order.windows(2).any(|w| w[0].taxid == w[1].taxid) {
        return Err(Error::Format("duplicate taxid among species indexes".into()));
    }
    let k = order.first().map_or(1, |i| i.k);
    if let Some(bad) = order.iter().find(|i| i.k != k) {
        return Err(Error::KMismatch { reads: bad.k, db: k });
    }
    let mut offsets = Vec::with_capacity(order.len());
    let mut total = 0u64;
    for idx in &order {
        offsets.push(total);
        total += idx.genome_len;
    }

    // Heap-free k-way merge: the number of candidates is small, so a linear
    // scan of the heads per output entry is enough.
    let mut heads = vec![0usize; order.len()];
    let mut entries: Vec<(PackedKmer, Vec<u64>)> = Vec::new();
    loop {
        let min = order
            .iter()
            .zip(&heads)
            .filter_map(|(idx, &h)| idx.entries.get(h).map(|e| e.0))
            .min();
        let Some(km) = min else { break };
        let mut locs = Vec::new();
        for (i, idx) in order.iter().enumerate() {
            if let Some((e, l)) = idx.entries.get(heads[i]) {
                if *e == km {
                    locs.extend(l.iter().map(|&x| offsets[i] + x as u64));
                    heads[i] += 1;
                }
            }
        }
        entries.push((km, locs));
    }
    Ok(UnifiedIndex {
        k,
        taxids: order.iter().map(|i| i.taxid).collect(),
        genome_lens: order.iter().map(|i| i.genome_len).collect(),
        offsets,
        entries,
    })
}

impl UnifiedIndex {
    /// Maps a global location back to its species and local location.
    pub fn locate(&self, global: u64) -> Option<(TaxId, u32)> {
        let i = self.offsets.partition_point(|&o| o <= global).checked_sub(1)?;
        let local = global - self.offsets[i];
        (local < self.genome_lens[i]).then(|| (self.taxids[i], local as u32))
    }

    pub fn get(&self, km: &PackedKmer) -> Option<&[u64]> {
        self.entries
            .binary_search_by(|e| e.0.cmp(km))
            .ok()
            .map(|i| self.entries[i].1.as_slice())
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(UNIFIED_MAGIC)?;
        put_u16(&mut w, INDEX_VERSION)?;
        put_u16(&mut w, self.k as u16)?;
        put_u64(&mut w, self.entries.len() as u64)?;
        put_u32(&mut w, self.taxids.len() as u32)?;
        for i in 0..self.taxids.len() {
            put_u32(&mut w, self.taxids[i].get())?;
            put_u64(&mut w, self.offsets[i])?;
            put_u64(&mut w, self.genome_lens[i])?;
        }
        for (km, locs) in &self.entries {
            w.write_all(&km.to_le_bytes())?;
            put_u32(&mut w, locs.len() as u32)?;
            for &l in locs {
                put_u64(&mut w, l)?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        expect_magic(&mut r, UNIFIED_MAGIC, "unified index")?;
        if get_u16(&mut r)? != INDEX_VERSION {
            return Err(Error::Format("unsupported unified index version".into()));
        }
        let k = get_u16(&mut r)? as usize;
        let count = get_u64(&mut r)?;
        let n = get_u32(&mut r)? as usize;
        let (mut taxids, mut offsets, mut genome_lens) = (Vec::new(), Vec::new(), Vec::new());
        for _ in 0..n {
            taxids.push(TaxId::new(get_u32(&mut r)?)?);
            offsets.push(get_u64(&mut r)?);
            genome_lens.push(get_u64(&mut r)?);
        }
        let mut entries = Vec::with_capacity(count as usize);
        for _ in 0..count {
            let km = get_kmer(&mut r, k)?;
            let m = get_u32(&mut r)?;
            entries.push((km, (0..m).map(|_| get_u64(&mut r)).collect::<Result<Vec<_>>>()?));
        }
        Ok(Self { k, taxids, offsets, genome_lens, entries })
    }
}

/// Relative abundance per taxid plus the unclassified share.
#[derive(Clone, Debug, PartialEq)]
pub struct AbundanceProfile {
    pub abundances: BTreeMap<TaxId, f64>,
    pub unclassified: f64,
    pub reads: u64,
}

impl AbundanceProfile {
    pub fn total(&self) -> f64 {
        self.unclassified + self.abundances.values().sum::<f64>()
    }

    /// CSV with header `taxid,abundance`; taxid 0 is the unclassified row.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "taxid,abundance")?;
        writeln!(w, "{},{}", TaxId::UNCLASSIFIED, self.unclassified)?;
        for (t, a) in &self.abundances {
            writeln!(w, "{t},{a}")?;
        }
        Ok(())
    }
}

/// Assigns each read to the candidate with the most k-mer votes. A k-mer
/// votes once for every candidate owning one of its locations. Reads with no
/// votes or a tied maximum stay unclassified.
pub fn estimate_abundance<S>(reads: &[S], unified: &UnifiedIndex, candidates: &BTreeSet<TaxId>) -> AbundanceProfile
where
    S: AsRef<[u8]> + Sync,
{
    let lookup: HashMap<PackedKmer, Vec<TaxId>> = unified
        .entries
        .par_iter()
        .filter_map(|(km, locs)| {
            let mut owners: Vec<TaxId> = locs
                .iter()
                .filter_map(|&g| unified.locate(g).map(|(t, _)| t))
                .filter(|t| candidates.contains(t))
                .collect();
            owners.dedup();
            (!owners.is_empty()).then(|| (*km, owners))
        })
        .collect();

    let assigned: Vec<Option<TaxId>> = reads
        .par_iter()
        .map(|read| {
            let mut votes: BTreeMap<TaxId, u32> = BTreeMap::new();
            let Ok(windows) = KmerWindows::new(read.as_ref(), unified.k) else {
                return None;
            };
            for (_, km) in windows {
                if let Some(owners) = lookup.get(&km) {
                    for t in owners {
                        *votes.entry(*t).or_default() += 1;
                    }
                }
            }
            let best = *votes.values().max()?;
            let mut winners = votes.iter().filter(|(_, &v)| v == best);
            let (t, _) = winners.next()?;
            winners.next().is_none().then_some(*t)
        })
        .collect();

    let mut counts: BTreeMap<TaxId, u64> = BTreeMap::new();
    let mut unclassified = 0u64;
    for a in assigned {
        match a {
            Some(t) => *counts.entry(t).or_default() += 1,
            None => unclassified += 1,
        }
    }
    let n = reads.len() as u64;
    if n == 0 {
        return AbundanceProfile {
            abundances: BTreeMap::new(),
            unclassified: 1.0,
            reads: 0,
        };
    }
    AbundanceProfile {
        abundances: counts.into_iter().map(|(t, c)| (t, c as f64 / n as f64)).collect(),
        unclassified: unclassified as f64 / n as f64,
        reads: n,
    }
}
