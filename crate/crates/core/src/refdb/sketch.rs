use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};

use rayon::prelude::*;

use super::Genome;
use crate::binio::{expect_magic, get_kmer, get_u16, get_u32, get_u64, put_u16, put_u32, put_u64};
use crate::encoding::{check_k, KmerWindows, PackedKmer, TaxId, RECORD_BYTES};
use crate::error::{Error, Result};

pub const DEFAULT_K_LEVELS: [usize; 4] = [60, 50, 40, 30];
pub const DEFAULT_SKETCH_SIZE: usize = 1000;
pub const DEFAULT_SKETCH_SEED: u64 = 0x5eed_0f_5ce7c4;
pub const MAX_TAXIDS_PER_ENTRY: usize = u16::MAX as usize;

const FLAT_MAGIC: &[u8; 4] = b"MGSF";
const SKETCH_VERSION: u16 = 1;
/// magic + version + level count
pub(crate) const SKETCH_HEADER_BYTES: u64 = 4 + 2 + 2;
/// k + entry count + offset
pub(crate) const SECTION_BYTES: u64 = 2 + 8 + 8;

/// 64-bit multiply-xor hash of a packed k-mer.
pub fn sketch_hash(km: &PackedKmer, seed: u64) -> u64 {
    let r = km.rank();
    let (lo, hi) = (r as u64, (r >> 64) as u64);
    let mut x = lo ^ seed ^ (km.k() as u64).wrapping_mul(0xff51_afd7_ed55_8ccd);
    x = (x ^ (x >> 33)).wrapping_mul(0xc4ce_b9fe_1a85_ec53);
    x ^= hi.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 29)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x ^ (x >> 32)
}

/// The `s` distinct k-mers with the smallest hash, returned in k-mer order.
/// Hash ties are broken by k-mer order.
pub fn bottom_s<I>(kmers: I, s: usize, seed: u64) -> Vec<PackedKmer>
where
    I: IntoIterator<Item = PackedKmer>,
{
    let mut keyed: Vec<(u64, PackedKmer)> = kmers.into_iter().map(|k| (sketch_hash(&k, seed), k)).collect();
    keyed.sort_unstable();
    keyed.dedup();
    keyed.truncate(s);
    let mut out: Vec<PackedKmer> = keyed.into_iter().map(|(_, k)| k).collect();
    out.sort_unstable();
    out
}

#[derive(Clone, Debug)]
pub struct SketchParams {
    pub s: usize,
    /// Strictly decreasing; the first entry is the database k.
    pub k_levels: Vec<usize>,
    pub seed: u64,
}

impl Default for SketchParams {
    fn default() -> Self {
        Self {
            s: DEFAULT_SKETCH_SIZE,
            k_levels: DEFAULT_K_LEVELS.to_vec(),
            seed: DEFAULT_SKETCH_SEED,
        }
    }
}

pub(crate) fn check_levels(k_levels: &[usize]) -> Result<()> {
    if k_levels.is_empty() {
        return Err(Error::InconsistentLevels("no levels".into()));
    }
    for &k in k_levels {
        check_k(k)?;
    }
    if k_levels.windows(2).any(|w| w[0] <= w[1]) {
        return Err(Error::InconsistentLevels(format!(
            "levels {k_levels:?} are not strictly decreasing"
        )));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SketchEntry {
    pub kmer: PackedKmer,
    pub taxids: Vec<TaxId>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FlatLevel {
    pub k: usize,
    pub entries: Vec<SketchEntry>,
}

/// One sorted table per level mapping sketch k-mers to the taxids whose
/// sketch contains them.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FlatSketches {
    levels: Vec<FlatLevel>,
}

pub(crate) fn check_taxids(taxids: &[TaxId], what: &str) -> Result<()> {
    if taxids.len() > MAX_TAXIDS_PER_ENTRY {
        return Err(Error::TaxIdOverflow(taxids.len()));
    }
    if taxids.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Format(format!("{what}: taxid list not strictly increasing")));
    }
    Ok(())
}

impl FlatSketches {
    pub fn new(levels: Vec<FlatLevel>) -> Result<Self> {
        check_levels(&levels.iter().map(|l| l.k).collect::<Vec<_>>())?;
        for level in &levels {
            for (i, e) in level.entries.iter().enumerate() {
                if e.kmer.k() != level.k {
                    return Err(Error::Format(format!("level {}: entry {i} has the wrong k", level.k)));
                }
                if e.taxids.is_empty() {
                    return Err(Error::Format(format!("level {}: entry {i} has no taxids", level.k)));
                }
                check_taxids(&e.taxids, "sketch entry")?;
            }
            if let Some(i) = level.entries.windows(2).position(|w| w[0].kmer >= w[1].kmer) {
                return Err(Error::UnsortedInput { position: i + 1 });
            }
        }
        Ok(Self { levels })
    }

    pub fn levels(&self) -> &[FlatLevel] {
        &self.levels
    }

    pub fn k_levels(&self) -> Vec<usize> {
        self.levels.iter().map(|l| l.k).collect()
    }

    pub fn k_max(&self) -> usize {
        self.levels[0].k
    }

    pub fn total_entries(&self) -> usize {
        self.levels.iter().map(|l| l.entries.len()).sum()
    }

    /// Taxids of `kmer` in level `level` (index into `levels`).
    pub fn lookup(&self, level: usize, kmer: &PackedKmer) -> Option<&[TaxId]> {
        let entries = &self.levels[level].entries;
        entries
            .binary_search_by(|e| e.kmer.cmp(kmer))
            .ok()
            .map(|i| entries[i].taxids.as_slice())
    }

    /// Number of top-level entries listing each taxid.
    pub fn sketch_sizes(&self) -> BTreeMap<TaxId, u64> {
        let mut sizes = BTreeMap::new();
        for e in &self.levels[0].entries {
            for t in &e.taxids {
                *sizes.entry(*t).or_insert(0) += 1;
            }
        }
        sizes
    }

    pub fn serialized_len(&self) -> u64 {
        SKETCH_HEADER_BYTES
            + SECTION_BYTES * self.levels.len() as u64
            + self
                .levels
                .iter()
                .flat_map(|l| &l.entries)
                .map(|e| RECORD_BYTES as u64 + list_bytes(e.taxids.len()))
                .sum::<u64>()
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(FLAT_MAGIC)?;
        put_u16(&mut w, SKETCH_VERSION)?;
        put_u16(&mut w, self.levels.len() as u16)?;
        let mut offset = SKETCH_HEADER_BYTES + SECTION_BYTES * self.levels.len() as u64;
        for level in &self.levels {
            put_u16(&mut w, level.k as u16)?;
            put_u64(&mut w, level.entries.len() as u64)?;
            put_u64(&mut w, offset)?;
            offset += level
                .entries
                .iter()
                .map(|e| RECORD_BYTES as u64 + list_bytes(e.taxids.len()))
                .sum::<u64>();
        }
        for level in &self.levels {
            for e in &level.entries {
                w.write_all(&e.kmer.to_le_bytes())?;
                write_list(&mut w, &e.taxids)?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        expect_magic(&mut r, FLAT_MAGIC, "flat sketch")?;
        let sections = read_section_table(&mut r)?;
        let mut levels = Vec::with_capacity(sections.len());
        for (k, count) in sections {
            let mut entries = Vec::with_capacity(count as usize);
            for _ in 0..count {
                let kmer = get_kmer(&mut r, k)?;
                entries.push(SketchEntry {
                    kmer,
                    taxids: read_list(&mut r)?,
                });
            }
            levels.push(FlatLevel { k, entries });
        }
        Self::new(levels)
    }
}

pub(crate) fn list_bytes(n: usize) -> u64 {
    2 + 4 * n as u64
}

pub(crate) fn write_list(w: &mut impl Write, taxids: &[TaxId]) -> std::io::Result<()> {
    put_u16(w, taxids.len() as u16)?;
    for t in taxids {
        put_u32(w, t.get())?;
    }
    Ok(())
}

pub(crate) fn read_list(r: &mut impl Read) -> Result<Vec<TaxId>> {
    let n = get_u16(r)?;
    (0..n).map(|_| TaxId::new(get_u32(r)?)).collect()
}

/// Reads the version, level count and section table; returns (k, count) per
/// section. Offsets are checked against the running position.
pub(crate) fn read_section_table(r: &mut impl Read) -> Result<Vec<(usize, u64)>> {
    if get_u16(r)? != SKETCH_VERSION {
        return Err(Error::Format("unsupported sketch file version".into()));
    }
    let n = get_u16(r)? as usize;
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let k = get_u16(r)? as usize;
        check_k(k)?;
        let count = get_u64(r)?;
        let _offset = get_u64(r)?;
        out.push((k, count));
    }
    Ok(out)
}

pub(crate) fn write_header(w: &mut impl Write, magic: &[u8; 4], levels: usize) -> std::io::Result<()> {
    w.write_all(magic)?;
    put_u16(w, SKETCH_VERSION)?;
    put_u16(w, levels as u16)
}

/// Merges `add` into the sorted list `into`.
pub(crate) fn merge_into(into: &mut Vec<TaxId>, add: &[TaxId]) {
    if add.iter().all(|t| into.binary_search(t).is_ok()) {
        return;
    }
    into.extend_from_slice(add);
    into.sort_unstable();
    into.dedup();
}

/// Bottom-s sketches per genome and level, merged into flat tables.
///
/// Level-k candidates of a genome are the k-prefixes of its top-level
/// windows. Each genome's sketches are made prefix-closed: the k-prefix of
/// every larger-level sketch k-mer joins the level-k sketch. A lower-level
/// k-mer that is then still not a prefix of any top-level entry pulls in its
/// lowest-hash extension from the genomes that list it, so that every level's
/// k-mers are prefixes of top-level entries.
pub fn build_sketches(genomes: &[Genome], params: &SketchParams) -> Result<FlatSketches> {
    check_levels(&params.k_levels)?;
    let levels = &params.k_levels;
    let k_max = levels[0];
    let seed = params.seed;

    // Distinct top-level windows per genome, sorted.
    let windows: Vec<Vec<PackedKmer>> = genomes
        .par_iter()
        .map(|g| {
            let mut w: Vec<PackedKmer> = KmerWindows::new(&g.seq, k_max)
                .expect("levels checked")
                .map(|(_, km)| km)
                .collect();
            w.sort_unstable();
            w.dedup();
            w
        })
        .collect();

    let per_genome: Vec<Vec<Vec<PackedKmer>>> = windows
        .par_iter()
        .map(|w| {
            let mut sketches: Vec<Vec<PackedKmer>> = Vec::with_capacity(levels.len());
            sketches.push(bottom_s(w.iter().copied(), params.s, seed));
            for (l, &k) in levels.iter().enumerate().skip(1) {
                let mut cands: Vec<PackedKmer> = w.iter().map(|km| km.prefix_unchecked(k)).collect();
                cands.dedup();
                let mut s = bottom_s(cands, params.s, seed);
                s.extend(sketches[l - 1].iter().map(|km| km.prefix_unchecked(k)));
                s.sort_unstable();
                s.dedup();
                sketches.push(s);
            }
            sketches
        })
        .collect();

    let mut tables: Vec<BTreeMap<PackedKmer, Vec<TaxId>>> = vec![BTreeMap::new(); levels.len()];
    for (g, sketches) in genomes.iter().zip(&per_genome) {
        for (l, s) in sketches.iter().enumerate() {
            for km in s {
                let list = tables[l].entry(*km).or_default();
                if let Err(pos) = list.binary_search(&g.taxid) {
                    list.insert(pos, g.taxid);
                }
            }
        }
    }

    let mut genomes_of: BTreeMap<TaxId, Vec<usize>> = BTreeMap::new();
    for (i, g) in genomes.iter().enumerate() {
        genomes_of.entry(g.taxid).or_default().push(i);
    }

    for l in 1..levels.len() {
        let k = levels[l];
        let orphans: Vec<(PackedKmer, Vec<TaxId>)> = tables[l]
            .iter()
            .filter(|(x, _)| !has_extension(&tables[0], x, k_max))
            .map(|(x, t)| (*x, t.clone()))
            .collect();
        for (x, taxids) in orphans {
            // An earlier extension in this pass may already cover x.
            if has_extension(&tables[0], &x, k_max) {
                continue;
            }
            let lo = PackedKmer::from_rank(x.rank() << (2 * (k_max - k)), k_max);
            let mut best: Option<(u64, PackedKmer)> = None;
            for t in &taxids {
                for &gi in &genomes_of[t] {
                    let w = &windows[gi];
                    let start = w.partition_point(|y| *y < lo);
                    for y in w[start..].iter().take_while(|y| y.has_prefix(&x)) {
                        let key = (sketch_hash(y, seed), *y);
                        if best.is_none_or(|b| key < b) {
                            best = Some(key);
                        }
                    }
                }
            }
            let (_, y) = best.expect("level k-mers are prefixes of their genomes' windows");
            let owners: Vec<TaxId> = taxids
                .iter()
                .copied()
                .filter(|t| genomes_of[t].iter().any(|&gi| windows[gi].binary_search(&y).is_ok()))
                .collect();
            for (j, &kj) in levels.iter().enumerate().take(l) {
                merge_into(tables[j].entry(y.prefix_unchecked(kj)).or_default(), &owners);
            }
        }
    }

    let flat_levels = levels
        .iter()
        .zip(tables)
        .map(|(&k, table)| FlatLevel {
            k,
            entries: table
                .into_iter()
                .map(|(kmer, taxids)| SketchEntry { kmer, taxids })
                .collect(),
        })
        .collect();
    FlatSketches::new(flat_levels)
}

fn has_extension(top: &BTreeMap<PackedKmer, Vec<TaxId>>, x: &PackedKmer, k_max: usize) -> bool {
    let lo = PackedKmer::from_rank(x.rank() << (2 * (k_max - x.k())), k_max);
    top.range(lo..).next().is_some_and(|(y, _)| y.has_prefix(x))
}

/// Asserts that every level is covered by top-level prefixes and that taxids
/// propagate from each level to the next smaller one.
pub(crate) fn check_closure(flat: &FlatSketches) -> Result<()> {
    let levels = flat.levels();
    let top = &levels[0];
    for l in 1..levels.len() {
        let k = levels[l].k;
        let mut prefixes: Vec<PackedKmer> = top.entries.iter().map(|e| e.kmer.prefix_unchecked(k)).collect();
        prefixes.dedup();
        let keys: Vec<PackedKmer> = levels[l].entries.iter().map(|e| e.kmer).collect();
        if prefixes != keys {
            let p: BTreeSet<_> = prefixes.iter().collect();
            let bad = keys.iter().find(|x| !p.contains(x));
            return Err(Error::InconsistentLevels(match bad {
                Some(x) => format!("level {k} k-mer {x} is not a prefix of any level {} entry", top.k),
                None => format!("level {k} lacks prefixes of level {} entries", top.k),
            }));
        }
        for e in &levels[l - 1].entries {
            let parent = flat
                .lookup(l, &e.kmer.prefix_unchecked(k))
                .expect("coverage checked above");
            if e.taxids.iter().any(|t| parent.binary_search(t).is_err()) {
                return Err(Error::InconsistentLevels(format!(
                    "taxids of {} are missing from its level {k} prefix",
                    e.kmer
                )));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashSet;

    fn tid(i: u32) -> TaxId {
        TaxId::new(i).unwrap()
    }

    fn random_genome(rng: &mut impl Rng, id: u32, len: usize) -> Genome {
        Genome::new(tid(id), (0..len).map(|_| b"ACGT"[rng.gen_range(0..4)]).collect::<Vec<u8>>())
    }

    #[test]
    fn hash_is_fixed() {
        let a = PackedKmer::from_str_k("ACGT").unwrap();
        assert_eq!(sketch_hash(&a, 1), sketch_hash(&a, 1));
        assert_ne!(sketch_hash(&a, 1), sketch_hash(&a, 2));
        let b = PackedKmer::from_str_k("ACGTA").unwrap().prefix(4).unwrap();
        assert_eq!(sketch_hash(&a, 7), sketch_hash(&b, 7));
    }

    #[test]
    fn bottom_s_matches_full_sort_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(64);
        let kmers: Vec<PackedKmer> = (0..5000)
            .map(|_| PackedKmer::from_rank(rng.gen_range(0..1u128 << 30), 15))
            .collect();
        let got = bottom_s(kmers.iter().copied(), 64, 99);
        let mut distinct: Vec<PackedKmer> = kmers.clone();
        distinct.sort();
        distinct.dedup();
        distinct.sort_by_key(|k| (sketch_hash(k, 99), *k));
        let mut expect = distinct[..64].to_vec();
        expect.sort();
        assert_eq!(got, expect);
    }

    #[test]
    fn single_level_is_plain_bottom_s() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = random_genome(&mut rng, 3, 2000);
        let params = SketchParams { s: 64, k_levels: vec![21], seed: 5 };
        let flat = build_sketches(std::slice::from_ref(&g), &params).unwrap();
        let oracle = bottom_s(KmerWindows::new(&g.seq, 21).unwrap().map(|(_, k)| k), 64, 5);
        let got: Vec<_> = flat.levels()[0].entries.iter().map(|e| e.kmer).collect();
        assert_eq!(got, oracle);
    }

    #[test]
    fn large_s_keeps_every_kmer() {
        let g = Genome::new(tid(1), b"ACGTTGCAAGGCTAGC".to_vec());
        let params = SketchParams { s: 1000, k_levels: vec![6, 4], seed: 0 };
        let flat = build_sketches(&[g.clone()], &params).unwrap();
        let w6: HashSet<_> = KmerWindows::new(&g.seq, 6).unwrap().map(|(_, k)| k).collect();
        assert_eq!(flat.levels()[0].entries.len(), w6.len());
        // Level-4 candidates are prefixes of 6-mer windows.
        let p4: HashSet<_> = w6.iter().map(|k| k.prefix(4).unwrap()).collect();
        assert_eq!(flat.levels()[1].entries.len(), p4.len());
    }

    #[test]
    fn shared_genome_lists_both_taxids() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let g = random_genome(&mut rng, 4, 800);
        let twin = Genome::new(tid(9), g.seq.clone());
        let params = SketchParams { s: 32, k_levels: vec![20, 12, 8], seed: 1 };
        let flat = build_sketches(&[g, twin], &params).unwrap();
        for level in flat.levels() {
            for e in &level.entries {
                assert_eq!(e.taxids, vec![tid(4), tid(9)]);
            }
        }
    }

    #[test]
    fn built_sketches_contain_bottom_s_and_are_closed() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let genomes: Vec<Genome> = (1..=6).map(|i| random_genome(&mut rng, i, 1500)).collect();
        let params = SketchParams { s: 64, k_levels: vec![24, 16, 12, 8], seed: 11 };
        let flat = build_sketches(&genomes, &params).unwrap();
        check_closure(&flat).unwrap();
        for g in &genomes {
            let w: Vec<PackedKmer> = KmerWindows::new(&g.seq, 24).unwrap().map(|(_, k)| k).collect();
            for (l, &k) in params.k_levels.iter().enumerate() {
                let cands = w.iter().map(|km| km.prefix(k).unwrap());
                for x in bottom_s(cands, 64, 11) {
                    assert!(flat.lookup(l, &x).unwrap().contains(&g.taxid));
                }
            }
        }
    }

    #[test]
    fn file_round_trip_and_length() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let genomes: Vec<Genome> = (1..=3).map(|i| random_genome(&mut rng, i, 500)).collect();
        let params = SketchParams { s: 16, k_levels: vec![15, 10], seed: 2 };
        let flat = build_sketches(&genomes, &params).unwrap();
        let mut buf = Vec::new();
        flat.write_to(&mut buf).unwrap();
        assert_eq!(buf.len() as u64, flat.serialized_len());
        assert_eq!(FlatSketches::read_from(&buf[..]).unwrap(), flat);
    }

    #[test]
    fn validation_errors() {
        assert!(check_levels(&[10, 12]).is_err());
        assert!(check_levels(&[]).is_err());
        let km = PackedKmer::from_str_k("ACG").unwrap();
        let too_many: Vec<TaxId> = (1..=70_000).map(tid).collect();
        let level = FlatLevel {
            k: 3,
            entries: vec![SketchEntry { kmer: km, taxids: too_many }],
        };
        assert!(matches!(FlatSketches::new(vec![level]), Err(Error::TaxIdOverflow(70_000))));
    }
}
