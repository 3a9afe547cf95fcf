//! Reference-side builders: the sorted k-mer database and the multi-level
//! sketch database in its flat, KSS and ternary-tree layouts.

mod kmer_db;
mod kss;
mod sketch;
mod tree;

pub use kmer_db::{build_kmer_db, DbFileReader, SortedKmerDatabase, DB_HEADER_BYTES, DB_MAGIC};
pub use kss::{build_kss, KssTables};
pub use sketch::{
    bottom_s, build_sketches, sketch_hash, FlatLevel, FlatSketches, SketchEntry, SketchParams,
    DEFAULT_K_LEVELS, DEFAULT_SKETCH_SEED, DEFAULT_SKETCH_SIZE, MAX_TAXIDS_PER_ENTRY,
};
pub use tree::{build_tree, TernaryTree};

use crate::encoding::TaxId;

/// A reference genome and the cluster it is attributed to.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Genome {
    pub taxid: TaxId,
    pub seq: Vec<u8>,
}

impl Genome {
    pub fn new(taxid: TaxId, seq: impl Into<Vec<u8>>) -> Self {
        Self {
            taxid,
            seq: seq.into(),
        }
    }
}

/// Serialized byte counts of the three sketch layouts.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StructureSizes {
    pub flat: u64,
    pub kss: u64,
    pub tree: u64,
}

pub fn structure_sizes(flat: &FlatSketches, tree: &TernaryTree, kss: &KssTables) -> StructureSizes {
    StructureSizes {
        flat: flat.serialized_len(),
        kss: kss.serialized_len(),
        tree: tree.serialized_len(),
    }
}
