use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::ops::Range;
use std::path::Path;

use rayon::prelude::*;

use super::Genome;
use crate::binio::{expect_magic, get_kmer, get_u16, get_u64, put_u16, put_u64};
use crate::encoding::{check_k, KmerWindows, PackedKmer, RECORD_BYTES};
use crate::error::{Error, Result};

pub const DB_MAGIC: &[u8; 4] = b"MGIS";
const DB_VERSION: u16 = 1;
/// magic + version + k + count
pub const DB_HEADER_BYTES: u64 = 4 + 2 + 2 + 8;

/// Strictly increasing reference k-mers of a single length.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SortedKmerDatabase {
    k: usize,
    records: Vec<PackedKmer>,
    /// Contiguous record ranges, one per channel, once placement has run.
    stripes: Vec<Range<usize>>,
}

impl SortedKmerDatabase {
    pub fn new(k: usize, records: Vec<PackedKmer>) -> Result<Self> {
        check_k(k)?;
        if let Some(i) = records.iter().position(|r| r.k() != k) {
            return Err(Error::Format(format!("record {i} has the wrong k")));
        }
        if let Some(i) = records.windows(2).position(|w| w[0] >= w[1]) {
            return Err(Error::UnsortedInput { position: i + 1 });
        }
        Ok(Self {
            k,
            records,
            stripes: Vec::new(),
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[PackedKmer] {
        &self.records
    }

    pub fn contains(&self, km: &PackedKmer) -> bool {
        self.records.binary_search(km).is_ok()
    }

    /// Bytes occupied on disk, header included.
    pub fn file_bytes(&self) -> u64 {
        DB_HEADER_BYTES + self.records.len() as u64 * RECORD_BYTES as u64
    }

    pub fn stripes(&self) -> &[Range<usize>] {
        &self.stripes
    }

    pub fn set_stripes(&mut self, stripes: Vec<Range<usize>>) -> Result<()> {
        let mut next = 0;
        for s in &stripes {
            if s.start != next || s.end < s.start {
                return Err(Error::Format("stripes must tile the database in order".into()));
            }
            next = s.end;
        }
        if next != self.records.len() {
            return Err(Error::Format("stripes do not cover the database".into()));
        }
        self.stripes = stripes;
        Ok(())
    }

    /// Splits the records into `channels` contiguous, near-equal stripes.
    pub fn even_stripes(&self, channels: usize) -> Vec<Range<usize>> {
        even_ranges(self.records.len(), channels)
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(DB_MAGIC)?;
        put_u16(&mut w, DB_VERSION)?;
        put_u16(&mut w, self.k as u16)?;
        put_u64(&mut w, self.records.len() as u64)?;
        for r in &self.records {
            w.write_all(&r.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn write_file(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_to(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_from<R: Read>(r: R) -> Result<Self> {
        let reader = DbFileReader::new(r)?;
        let k = reader.k();
        let records = reader.collect::<Result<Vec<_>>>()?;
        Self::new(k, records)
    }

    pub fn read_file(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(BufReader::new(file))
    }
}

pub(crate) fn even_ranges(n: usize, parts: usize) -> Vec<Range<usize>> {
    let parts = parts.max(1);
    (0..parts)
        .map(|i| (i * n / parts)..((i + 1) * n / parts))
        .collect()
}

/// Streams records out of a database file without loading it.
pub struct DbFileReader<R> {
    inner: R,
    k: usize,
    remaining: u64,
    count: u64,
}

impl DbFileReader<BufReader<File>> {
    pub fn open(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::new(BufReader::with_capacity(1 << 20, file))
    }
}

impl<R: Read> DbFileReader<R> {
    pub fn new(mut inner: R) -> Result<Self> {
        expect_magic(&mut inner, DB_MAGIC, "k-mer database")?;
        if get_u16(&mut inner)? != DB_VERSION {
            return Err(Error::Format("unsupported database version".into()));
        }
        let k = get_u16(&mut inner)? as usize;
        check_k(k)?;
        let count = get_u64(&mut inner)?;
        Ok(Self {
            inner,
            k,
            remaining: count,
            count,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Record count from the header.
    pub fn count(&self) -> u64 {
        self.count
    }
}

impl<R: Read> Iterator for DbFileReader<R> {
    type Item = Result<PackedKmer>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.remaining == 0 {
            return None;
        }
        self.remaining -= 1;
        Some(get_kmer(&mut self.inner, self.k))
    }
}

/// Union of all distinct k-mers across `genomes`, sorted.
pub fn build_kmer_db(genomes: &[Genome], k: usize) -> Result<SortedKmerDatabase> {
    check_k(k)?;
    let mut all: Vec<PackedKmer> = genomes
        .par_iter()
        .flat_map_iter(|g| KmerWindows::new(&g.seq, k).expect("k checked").map(|(_, km)| km))
        .collect();
    if all.is_empty() {
        return Err(Error::EmptyInput);
    }
    all.par_sort_unstable();
    all.dedup();
    SortedKmerDatabase::new(k, all)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoding::TaxId;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeSet;

    fn g(id: u32, s: &str) -> Genome {
        Genome::new(TaxId::new(id).unwrap(), s.as_bytes())
    }

    #[test]
    fn build_examples() {
        let db = build_kmer_db(&[g(1, "ACGTACGT")], 4).unwrap();
        let got: Vec<String> = db.records().iter().map(|k| k.to_string()).collect();
        assert_eq!(got, ["ACGT", "CGTA", "GTAC", "TACG"]);
        let twice = build_kmer_db(&[g(1, "ACGTACGT"), g(2, "ACGTACGT")], 4).unwrap();
        assert_eq!(twice, db);
        assert!(matches!(build_kmer_db(&[], 4), Err(Error::EmptyInput)));
        assert!(matches!(build_kmer_db(&[g(1, "AC")], 4), Err(Error::EmptyInput)));
    }

    #[test]
    fn build_matches_set_union_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let genomes: Vec<Genome> = (1..=20)
            .map(|i| {
                let seq: Vec<u8> = (0..1000).map(|_| b"ACGT"[rng.gen_range(0..4)]).collect();
                Genome::new(TaxId::new(i).unwrap(), seq)
            })
            .collect();
        let db = build_kmer_db(&genomes, 21).unwrap();
        let mut oracle = BTreeSet::new();
        for gen in &genomes {
            for w in gen.seq.windows(21) {
                oracle.insert(std::str::from_utf8(w).unwrap().to_string());
            }
        }
        let got: Vec<String> = db.records().iter().map(|k| k.to_string()).collect();
        assert_eq!(got, oracle.into_iter().collect::<Vec<_>>());
    }

    #[test]
    fn file_round_trip_and_header() {
        let db = build_kmer_db(&[g(1, "ACGTTGCAAGGCT")], 5).unwrap();
        let mut buf = Vec::new();
        db.write_to(&mut buf).unwrap();
        assert_eq!(buf.len() as u64, db.file_bytes());
        assert_eq!(&buf[..4], b"MGIS");
        assert_eq!(u16::from_le_bytes([buf[6], buf[7]]), 5);
        assert_eq!(SortedKmerDatabase::read_from(&buf[..]).unwrap(), db);
        // Flip two records so the file is no longer sorted.
        let (a, b) = (16usize, 32usize);
        let first: Vec<u8> = buf[a..a + 16].to_vec();
        buf.copy_within(b..b + 16, a);
        buf[b..b + 16].copy_from_slice(&first);
        assert!(matches!(
            SortedKmerDatabase::read_from(&buf[..]),
            Err(Error::UnsortedInput { .. })
        ));
    }

    #[test]
    fn stripes_tile_the_records() {
        let db = build_kmer_db(&[g(1, "ACGTTGCAAGGCTAGGATTACA")], 3).unwrap();
        for ch in [1, 3, 4, 32] {
            let stripes = db.even_stripes(ch);
            assert_eq!(stripes.len(), ch);
            let mut copy = db.clone();
            copy.set_stripes(stripes).unwrap();
        }
        let mut copy = db.clone();
        assert!(copy.set_stripes(vec![0..1]).is_err());
    }
}
