use std::collections::BTreeMap;
use std::io::{Read, Write};

use super::sketch::{
    check_closure, check_levels, check_taxids, list_bytes, merge_into, read_list, read_section_table,
    write_header, write_list, FlatLevel, FlatSketches, SketchEntry, SECTION_BYTES, SKETCH_HEADER_BYTES,
};
use crate::binio::{expect_magic, get_kmer, put_u16, put_u64};
use crate::encoding::{PackedKmer, TaxId, RECORD_BYTES};
use crate::error::{Error, Result};

const KSS_MAGIC: &[u8; 4] = b"MGSK";

/// Streaming layout of the sketch database.
///
/// Only the top level stores k-mers. Every smaller level is an array with one
/// slot per distinct prefix of the top-level table, in table order, and each
/// slot holds just the taxids that no longer entry with that prefix carries.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KssTables {
    k_levels: Vec<usize>,
    top: Vec<SketchEntry>,
    /// `slots[l - 1][j]` is the level-`l` slot of the `j`-th distinct prefix.
    slots: Vec<Vec<Vec<TaxId>>>,
}

/// Derives the KSS layout from prefix-closed flat tables.
pub fn build_kss(flat: &FlatSketches) -> Result<KssTables> {
    check_closure(flat)?;
    let levels = flat.levels();
    let mut slots = Vec::with_capacity(levels.len() - 1);
    for l in 1..levels.len() {
        let k = levels[l].k;
        let mut level_slots = Vec::with_capacity(levels[l].entries.len());
        for e in &levels[l].entries {
            let mut longer: Vec<TaxId> = Vec::new();
            for larger in &levels[..l] {
                for le in with_prefix(&larger.entries, &e.kmer, larger.k) {
                    merge_into(&mut longer, &le.taxids);
                }
            }
            debug_assert!(e.kmer.k() == k);
            level_slots.push(
                e.taxids
                    .iter()
                    .copied()
                    .filter(|t| longer.binary_search(t).is_err())
                    .collect(),
            );
        }
        slots.push(level_slots);
    }
    Ok(KssTables {
        k_levels: flat.k_levels(),
        top: levels[0].entries.clone(),
        slots,
    })
}

/// Entries of a sorted level whose k-mer starts with `x`.
pub(crate) fn with_prefix<'a>(entries: &'a [SketchEntry], x: &PackedKmer, k: usize) -> &'a [SketchEntry] {
    let lo = PackedKmer::from_rank(x.rank() << (2 * (k - x.k())), k);
    let start = entries.partition_point(|e| e.kmer < lo);
    let len = entries[start..].partition_point(|e| e.kmer.has_prefix(x));
    &entries[start..start + len]
}

impl KssTables {
    pub fn k_levels(&self) -> &[usize] {
        &self.k_levels
    }

    pub fn k_max(&self) -> usize {
        self.k_levels[0]
    }

    pub fn top(&self) -> &[SketchEntry] {
        &self.top
    }

    /// Slots of level `level` (index into `k_levels`, at least 1).
    pub fn slots(&self, level: usize) -> &[Vec<TaxId>] {
        &self.slots[level - 1]
    }

    /// Number of top-level entries listing each taxid; equals the flat
    /// tables' sketch sizes.
    pub fn sketch_sizes(&self) -> BTreeMap<TaxId, u64> {
        let mut sizes = BTreeMap::new();
        for e in &self.top {
            for t in &e.taxids {
                *sizes.entry(*t).or_insert(0) += 1;
            }
        }
        sizes
    }

    /// Indices into the top table where the `k`-prefix changes, starting at 0.
    pub fn prefix_change_points(&self, k: usize) -> Vec<usize> {
        (0..self.top.len())
            .filter(|&i| i == 0 || self.top[i - 1].kmer.prefix_unchecked(k) != self.top[i].kmer.prefix_unchecked(k))
            .collect()
    }

    /// Rebuilds the flat tables: each level-k set is its slot plus the union of
    /// the next larger level's sets under the same prefix.
    pub fn reconstruct(&self) -> FlatSketches {
        let mut levels = vec![FlatLevel {
            k: self.k_levels[0],
            entries: self.top.clone(),
        }];
        for l in 1..self.k_levels.len() {
            let k = self.k_levels[l];
            let prev = &levels[l - 1];
            let mut entries: Vec<SketchEntry> = Vec::with_capacity(self.slots[l - 1].len());
            let mut slot = self.slots[l - 1].iter();
            for child in &prev.entries {
                let x = child.kmer.prefix_unchecked(k);
                match entries.last_mut() {
                    Some(last) if last.kmer == x => merge_into(&mut last.taxids, &child.taxids),
                    _ => {
                        let mut taxids = slot.next().expect("one slot per distinct prefix").clone();
                        merge_into(&mut taxids, &child.taxids);
                        entries.push(SketchEntry { kmer: x, taxids });
                    }
                }
            }
            levels.push(FlatLevel { k, entries });
        }
        FlatSketches::new(levels).expect("reconstruction preserves validity")
    }

    pub fn serialized_len(&self) -> u64 {
        SKETCH_HEADER_BYTES
            + SECTION_BYTES * self.k_levels.len() as u64
            + self
                .top
                .iter()
                .map(|e| RECORD_BYTES as u64 + list_bytes(e.taxids.len()))
                .sum::<u64>()
            + self.slots.iter().flatten().map(|s| list_bytes(s.len())).sum::<u64>()
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        write_header(&mut w, KSS_MAGIC, self.k_levels.len())?;
        let mut offset = SKETCH_HEADER_BYTES + SECTION_BYTES * self.k_levels.len() as u64;
        put_u16(&mut w, self.k_levels[0] as u16)?;
        put_u64(&mut w, self.top.len() as u64)?;
        put_u64(&mut w, offset)?;
        offset += self
            .top
            .iter()
            .map(|e| RECORD_BYTES as u64 + list_bytes(e.taxids.len()))
            .sum::<u64>();
        for (l, level) in self.slots.iter().enumerate() {
            put_u16(&mut w, self.k_levels[l + 1] as u16)?;
            put_u64(&mut w, level.len() as u64)?;
            put_u64(&mut w, offset)?;
            offset += level.iter().map(|s| list_bytes(s.len())).sum::<u64>();
        }
        for e in &self.top {
            w.write_all(&e.kmer.to_le_bytes())?;
            write_list(&mut w, &e.taxids)?;
        }
        for s in self.slots.iter().flatten() {
            write_list(&mut w, s)?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        expect_magic(&mut r, KSS_MAGIC, "KSS")?;
        let sections = read_section_table(&mut r)?;
        let k_levels: Vec<usize> = sections.iter().map(|s| s.0).collect();
        check_levels(&k_levels)?;
        let (k_max, top_count) = sections[0];
        let mut top = Vec::with_capacity(top_count as usize);
        for _ in 0..top_count {
            let kmer = get_kmer(&mut r, k_max)?;
            let taxids = read_list(&mut r)?;
            if taxids.is_empty() {
                return Err(Error::Format("top-level entry without taxids".into()));
            }
            check_taxids(&taxids, "KSS entry")?;
            top.push(SketchEntry { kmer, taxids });
        }
        if let Some(i) = top.windows(2).position(|w| w[0].kmer >= w[1].kmer) {
            return Err(Error::UnsortedInput { position: i + 1 });
        }
        let mut slots = Vec::with_capacity(sections.len() - 1);
        for &(_, count) in &sections[1..] {
            let level: Vec<Vec<TaxId>> = (0..count).map(|_| read_list(&mut r)).collect::<Result<_>>()?;
            for s in &level {
                check_taxids(s, "KSS slot")?;
            }
            slots.push(level);
        }
        let kss = Self { k_levels, top, slots };
        for (l, &k) in kss.k_levels.iter().enumerate().skip(1) {
            if kss.prefix_change_points(k).len() != kss.slots[l - 1].len() {
                return Err(Error::InconsistentLevels(format!(
                    "level {k} slot count does not match the top table's distinct prefixes"
                )));
            }
        }
        Ok(kss)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::refdb::{build_sketches, Genome, SketchParams};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tid(i: u32) -> TaxId {
        TaxId::new(i).unwrap()
    }

    fn entry(s: &str, taxids: &[u32]) -> SketchEntry {
        SketchEntry {
            kmer: PackedKmer::from_str_k(s).unwrap(),
            taxids: taxids.iter().map(|&t| tid(t)).collect(),
        }
    }

    pub(crate) fn toy() -> FlatSketches {
        FlatSketches::new(vec![
            FlatLevel { k: 5, entries: vec![entry("AATCC", &[2])] },
            FlatLevel { k: 4, entries: vec![entry("AATC", &[2, 7])] },
        ])
        .unwrap()
    }

    #[test]
    fn toy_slot_holds_only_the_new_taxid() {
        let kss = build_kss(&toy()).unwrap();
        assert_eq!(kss.top(), &[entry("AATCC", &[2])]);
        assert_eq!(kss.slots(1), &[vec![tid(7)]]);
        assert_eq!(kss.reconstruct(), toy());
        assert_eq!(kss.sketch_sizes(), toy().sketch_sizes());
        assert!(kss.serialized_len() < toy().serialized_len());
    }

    #[test]
    fn single_level_is_the_flat_table() {
        let flat = FlatSketches::new(vec![FlatLevel {
            k: 3,
            entries: vec![entry("ACG", &[1]), entry("TTT", &[1, 2])],
        }])
        .unwrap();
        let kss = build_kss(&flat).unwrap();
        assert_eq!(kss.top(), flat.levels()[0].entries.as_slice());
        assert_eq!(kss.reconstruct(), flat);
    }

    #[test]
    fn uncovered_lower_level_kmer_is_rejected() {
        let flat = FlatSketches::new(vec![
            FlatLevel { k: 5, entries: vec![entry("AATCC", &[2])] },
            FlatLevel { k: 4, entries: vec![entry("AATC", &[2]), entry("GGGG", &[3])] },
        ])
        .unwrap();
        assert!(matches!(build_kss(&flat), Err(Error::InconsistentLevels(_))));
        let unclosed = FlatSketches::new(vec![
            FlatLevel { k: 5, entries: vec![entry("AATCC", &[2])] },
            FlatLevel { k: 4, entries: vec![entry("AATC", &[7])] },
        ])
        .unwrap();
        assert!(matches!(build_kss(&unclosed), Err(Error::InconsistentLevels(_))));
    }

    fn random_flat(seed: u64) -> FlatSketches {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let genomes: Vec<Genome> = (1..=8)
            .map(|i| {
                let len = rng.gen_range(100..600);
                let id = rng.gen_range(1..6);
                Genome::new(tid(id + i % 2), (0..len).map(|_| b"ACGT"[rng.gen_range(0..4)]).collect::<Vec<u8>>())
            })
            .collect();
        let params = SketchParams { s: rng.gen_range(4..40), k_levels: vec![12, 9, 6, 3], seed };
        build_sketches(&genomes, &params).unwrap()
    }

    #[test]
    fn random_three_and_four_level_reconstruction() {
        for seed in 0..30 {
            let flat = random_flat(seed);
            let kss = build_kss(&flat).unwrap();
            assert_eq!(kss.reconstruct(), flat, "seed {seed}");
            for (l, &k) in kss.k_levels().iter().enumerate().skip(1) {
                assert_eq!(kss.prefix_change_points(k).len(), kss.slots(l).len());
                // Disjointness against every longer entry with the same prefix.
                for (e, slot) in flat.levels()[l].entries.iter().zip(kss.slots(l)) {
                    for larger in &flat.levels()[..l] {
                        for le in with_prefix(&larger.entries, &e.kmer, larger.k) {
                            assert!(slot.iter().all(|t| !le.taxids.contains(t)));
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn file_round_trip_and_length() {
        let kss = build_kss(&random_flat(99)).unwrap();
        let mut buf = Vec::new();
        kss.write_to(&mut buf).unwrap();
        assert_eq!(buf.len() as u64, kss.serialized_len());
        assert_eq!(KssTables::read_from(&buf[..]).unwrap(), kss);
    }
}
