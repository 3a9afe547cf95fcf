//! 2-bit nucleotide codec and the fixed-width packed k-mer type.
//!
//! Bases map to codes in alphabetical order (`A=00, C=01, G=10, T=11`) and are
//! packed most-significant-base-first into the high end of a `u128`. With that
//! layout, integer order on equal-length k-mers is lexicographic order on their
//! strings, and a prefix is just a mask of the high bits.

use std::fmt;

use crate::error::{Error, Result};

/// Largest supported k-mer length (120 payload bits).
pub const MAX_K: usize = 60;

/// Bytes per on-disk k-mer record.
pub const RECORD_BYTES: usize = 16;

const CODE_TO_BASE: [u8; 4] = [b'A', b'C', b'G', b'T'];

/// Maps one nucleotide to its 2-bit code.
#[inline]
pub fn encode_base(b: u8) -> Result<u8> {
    match b {
        b'A' => Ok(0b00),
        b'C' => Ok(0b01),
        b'G' => Ok(0b10),
        b'T' => Ok(0b11),
        other => Err(Error::AmbiguousBase(other as char)),
    }
}

/// Infallible variant used by the hot extraction loops.
#[inline]
pub(crate) fn base_code(b: u8) -> Option<u8> {
    match b {
        b'A' => Some(0),
        b'C' => Some(1),
        b'G' => Some(2),
        b'T' => Some(3),
        _ => None,
    }
}

#[inline]
pub fn decode_base(code: u8) -> u8 {
    CODE_TO_BASE[(code & 3) as usize]
}

/// Mask selecting the top `2 * k` bits of a word.
#[inline]
fn high_mask(k: usize) -> u128 {
    if k == 0 {
        0
    } else {
        u128::MAX << (128 - 2 * k)
    }
}

/// A k-mer packed 2 bits per base, high-aligned in a `u128`.
///
/// Ordering compares the bit pattern first and the length second, so k-mers of
/// equal length sort lexicographically and a prefix sorts before its extensions.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PackedKmer {
    bits: u128,
    k: u8,
}

impl PackedKmer {
    /// Packs `s`, which must be exactly `k` bases long.
    pub fn pack(s: &[u8], k: usize) -> Result<Self> {
        check_k(k)?;
        if s.len() != k {
            return Err(Error::LengthMismatch {
                expected: k,
                found: s.len(),
            });
        }
        let mut bits = 0u128;
        for (i, &b) in s.iter().enumerate() {
            let code = encode_base(b)? as u128;
            bits |= code << (126 - 2 * i);
        }
        Ok(Self { bits, k: k as u8 })
    }

    /// Convenience for string literals in tests and examples.
    pub fn from_str_k(s: &str) -> Result<Self> {
        Self::pack(s.as_bytes(), s.len())
    }

    /// Builds a k-mer from its high-aligned bit pattern. Bits below `2 * k`
    /// from the top must be zero.
    pub fn from_bits(bits: u128, k: usize) -> Result<Self> {
        check_k(k)?;
        if bits & !high_mask(k) != 0 {
            return Err(Error::Format(format!(
                "k-mer record has non-zero padding bits for k={k}"
            )));
        }
        Ok(Self { bits, k: k as u8 })
    }

    /// Builds a k-mer from its low-aligned integer rank (`0..4^k`).
    #[inline]
    pub(crate) fn from_rank(rank: u128, k: usize) -> Self {
        debug_assert!((1..=MAX_K).contains(&k));
        Self {
            bits: rank << (128 - 2 * k),
            k: k as u8,
        }
    }

    /// Low-aligned integer rank of this k-mer among all k-mers of its length.
    #[inline]
    pub fn rank(&self) -> u128 {
        self.bits >> (128 - 2 * self.k as usize)
    }

    #[inline]
    pub fn bits(&self) -> u128 {
        self.bits
    }

    #[inline]
    pub fn k(&self) -> usize {
        self.k as usize
    }

    /// The 2-bit code of base `i`.
    #[inline]
    pub fn code_at(&self, i: usize) -> u8 {
        debug_assert!(i < self.k());
        ((self.bits >> (126 - 2 * i)) & 3) as u8
    }

    pub fn unpack(&self) -> Vec<u8> {
        (0..self.k()).map(|i| decode_base(self.code_at(i))).collect()
    }

    /// The first `k2` bases as a k-mer of length `k2`.
    pub fn prefix(&self, k2: usize) -> Result<Self> {
        if k2 > self.k() {
            return Err(Error::PrefixTooLong {
                requested: k2,
                k: self.k(),
            });
        }
        check_k(k2)?;
        Ok(self.prefix_unchecked(k2))
    }

    #[inline]
    pub(crate) fn prefix_unchecked(&self, k2: usize) -> Self {
        Self {
            bits: self.bits & high_mask(k2),
            k: k2 as u8,
        }
    }

    /// True if `self` starts with `other`.
    #[inline]
    pub fn has_prefix(&self, other: &PackedKmer) -> bool {
        other.k <= self.k && self.bits & high_mask(other.k()) == other.bits
    }

    pub fn reverse_complement(&self) -> Self {
        let k = self.k();
        let mut bits = 0u128;
        for i in 0..k {
            let comp = 3 - self.code_at(i) as u128;
            bits |= comp << (126 - 2 * (k - 1 - i));
        }
        Self { bits, k: self.k }
    }

    /// The smaller of the k-mer and its reverse complement.
    pub fn canonical(&self) -> Self {
        let rc = self.reverse_complement();
        if rc.bits < self.bits {
            rc
        } else {
            *self
        }
    }

    pub fn to_le_bytes(&self) -> [u8; RECORD_BYTES] {
        self.bits.to_le_bytes()
    }

    pub fn from_le_bytes(bytes: [u8; RECORD_BYTES], k: usize) -> Result<Self> {
        Self::from_bits(u128::from_le_bytes(bytes), k)
    }
}

impl fmt::Debug for PackedKmer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self)
    }
}

impl fmt::Display for PackedKmer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = self.unpack();
        f.write_str(std::str::from_utf8(&s).expect("ACGT is ascii"))
    }
}

pub(crate) fn check_k(k: usize) -> Result<()> {
    if k == 0 || k > MAX_K {
        Err(Error::InvalidK(k))
    } else {
        Ok(())
    }
}

/// Cluster identifier. Zero is reserved for "unclassified".
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TaxId(u32);

impl TaxId {
    pub const UNCLASSIFIED: u32 = 0;

    pub fn new(id: u32) -> Result<Self> {
        if id == Self::UNCLASSIFIED {
            Err(Error::InvalidTaxId(id))
        } else {
            Ok(Self(id))
        }
    }

    #[inline]
    pub fn get(self) -> u32 {
        self.0
    }
}

impl fmt::Display for TaxId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Rolling extractor of every N-free window of length `k` in one sequence.
///
/// Windows containing a non-ACGT byte are skipped, which splits the sequence
/// at ambiguous bases.
pub struct KmerWindows<'a> {
    seq: &'a [u8],
    pos: usize,
    k: usize,
    valid: usize,
    rolling: u128,
    low_mask: u128,
}

impl<'a> KmerWindows<'a> {
    pub fn new(seq: &'a [u8], k: usize) -> Result<Self> {
        check_k(k)?;
        let low_mask = (1u128 << (2 * k)) - 1;
        Ok(Self {
            seq,
            pos: 0,
            k,
            valid: 0,
            rolling: 0,
            low_mask,
        })
    }
}

impl Iterator for KmerWindows<'_> {
    /// Start offset of the window and the packed k-mer.
    type Item = (usize, PackedKmer);

    fn next(&mut self) -> Option<Self::Item> {
        while self.pos < self.seq.len() {
            let b = self.seq[self.pos];
            self.pos += 1;
            match base_code(b) {
                Some(code) => {
                    self.rolling = ((self.rolling << 2) | code as u128) & self.low_mask;
                    self.valid += 1;
                    if self.valid >= self.k {
                        let km = PackedKmer::from_rank(self.rolling, self.k);
                        #[cfg(feature = "canonical")]
                        let km = km.canonical();
                        return Some((self.pos - self.k, km));
                    }
                }
                None => {
                    self.valid = 0;
                    self.rolling = 0;
                }
            }
        }
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_seq(rng: &mut impl Rng, n: usize) -> Vec<u8> {
        (0..n).map(|_| b"ACGT"[rng.gen_range(0..4)]).collect()
    }

    #[test]
    fn base_codes() {
        assert_eq!(encode_base(b'A').unwrap(), 0b00);
        assert_eq!(encode_base(b'C').unwrap(), 0b01);
        assert_eq!(encode_base(b'G').unwrap(), 0b10);
        assert_eq!(encode_base(b'T').unwrap(), 0b11);
        assert!(matches!(encode_base(b'N'), Err(Error::AmbiguousBase('N'))));
        assert!(matches!(encode_base(b'a'), Err(Error::AmbiguousBase('a'))));
    }

    #[test]
    fn pack_fixed_examples() {
        let acg = PackedKmer::from_str_k("ACG").unwrap();
        assert_eq!(acg.bits() >> 122, 0b000110);
        assert_eq!(acg.bits() & !high_mask(3), 0);
        assert_eq!(PackedKmer::from_str_k("AAA").unwrap().bits(), 0);
        assert!(matches!(
            PackedKmer::pack(b"ACGT", 3),
            Err(Error::LengthMismatch { expected: 3, found: 4 })
        ));
        assert!(matches!(
            PackedKmer::pack(b"ANG", 3),
            Err(Error::AmbiguousBase('N'))
        ));
        assert!(matches!(PackedKmer::pack(b"", 0), Err(Error::InvalidK(0))));
        let long = vec![b'A'; 61];
        assert!(matches!(PackedKmer::pack(&long, 61), Err(Error::InvalidK(61))));
    }

    #[test]
    fn k60_uses_120_bits() {
        let s = vec![b'T'; 60];
        let km = PackedKmer::pack(&s, 60).unwrap();
        assert_eq!(km.bits(), u128::MAX << 8);
        assert_eq!(km.unpack(), s);
    }

    #[test]
    fn order_matches_string_order_for_random_20mers() {
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        for _ in 0..1000 {
            let x = random_seq(&mut rng, 20);
            let y = random_seq(&mut rng, 20);
            let px = PackedKmer::pack(&x, 20).unwrap();
            let py = PackedKmer::pack(&y, 20).unwrap();
            assert_eq!(px.cmp(&py), x.cmp(&y));
        }
    }

    #[test]
    fn exhaustive_round_trip_up_to_k8() {
        for k in 1..=8usize {
            for rank in 0..(1u128 << (2 * k)) {
                let km = PackedKmer::from_rank(rank, k);
                let s = km.unpack();
                let again = PackedKmer::pack(&s, k).unwrap();
                assert_eq!(again, km);
                assert_eq!(again.rank(), rank);
            }
        }
    }

    #[test]
    fn prefix_examples() {
        let x = PackedKmer::from_str_k("AATCC").unwrap();
        assert_eq!(x.prefix(4).unwrap(), PackedKmer::from_str_k("AATC").unwrap());
        assert_eq!(x.prefix(5).unwrap(), x);
        assert!(matches!(
            x.prefix(6),
            Err(Error::PrefixTooLong { requested: 6, k: 5 })
        ));
        assert!(x.has_prefix(&PackedKmer::from_str_k("AAT").unwrap()));
        assert!(!x.has_prefix(&PackedKmer::from_str_k("AAG").unwrap()));
    }

    #[test]
    fn prefix_matches_string_slice_for_random_30mers() {
        let mut rng = ChaCha8Rng::seed_from_u64(30);
        for _ in 0..200 {
            let s = random_seq(&mut rng, 30);
            let km = PackedKmer::pack(&s, 30).unwrap();
            for k2 in 1..=30 {
                let expect = PackedKmer::pack(&s[..k2], k2).unwrap();
                assert_eq!(km.prefix(k2).unwrap(), expect);
            }
        }
    }

    #[test]
    fn reverse_complement_and_canonical() {
        let km = PackedKmer::from_str_k("AACGT").unwrap();
        assert_eq!(km.reverse_complement().to_string(), "ACGTT");
        assert_eq!(km.canonical().to_string(), "AACGT");
        let km = PackedKmer::from_str_k("TTTG").unwrap();
        assert_eq!(km.canonical().to_string(), "CAAA");
    }

    #[test]
    fn record_bytes_round_trip_and_padding_check() {
        let km = PackedKmer::from_str_k("GATTACA").unwrap();
        let back = PackedKmer::from_le_bytes(km.to_le_bytes(), 7).unwrap();
        assert_eq!(back, km);
        assert!(PackedKmer::from_bits(1, 7).is_err());
    }

    #[test]
    fn taxid_zero_reserved() {
        assert!(TaxId::new(0).is_err());
        assert_eq!(TaxId::new(7).unwrap().get(), 7);
    }

    #[cfg(not(feature = "canonical"))]
    #[test]
    fn windows_split_at_ambiguous_bases() {
        let got: Vec<String> = KmerWindows::new(b"ACGTA", 3)
            .unwrap()
            .map(|(_, k)| k.to_string())
            .collect();
        assert_eq!(got, ["ACG", "CGT", "GTA"]);
        assert_eq!(KmerWindows::new(b"ACNGT", 3).unwrap().count(), 0);
        let got: Vec<(usize, String)> = KmerWindows::new(b"AACNGGTT", 3)
            .unwrap()
            .map(|(p, k)| (p, k.to_string()))
            .collect();
        assert_eq!(
            got,
            [(0, "AAC".into()), (4, "GGT".into()), (5, "GTT".into())]
        );
    }
}

#[cfg(test)]
mod proptests {
    use super::*;
    use proptest::prelude::*;

    fn dna(len: usize) -> impl Strategy<Value = Vec<u8>> {
        proptest::collection::vec(prop::sample::select(b"ACGT".to_vec()), len)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]

        #[test]
        fn order_isomorphism(x in dna(24), y in dna(24)) {
            let px = PackedKmer::pack(&x, 24).unwrap();
            let py = PackedKmer::pack(&y, 24).unwrap();
            prop_assert_eq!(px.cmp(&py), x.cmp(&y));
        }
    }

    proptest! {
        #[test]
        fn prefix_monotone(x in dna(16), y in dna(16), k2 in 1usize..=16) {
            let (lo, hi) = if x <= y { (x, y) } else { (y, x) };
            let plo = PackedKmer::pack(&lo, 16).unwrap().prefix(k2).unwrap();
            let phi = PackedKmer::pack(&hi, 16).unwrap().prefix(k2).unwrap();
            prop_assert!(plo <= phi);
        }

        #[test]
        fn pack_unpack_identity(s in (1usize..=60).prop_flat_map(dna)) {
            let km = PackedKmer::pack(&s, s.len()).unwrap();
            prop_assert_eq!(km.unpack(), s);
        }
    }
}
