//! Block-granular mapping for databases that are only ever read sequentially.
//!
//! Blocks are dealt to channels in turn and pages are striped across the
//! blocks of one stripe (one block per channel), so every active block of a
//! stripe sits at the same page offset. The mapping then needs the start
//! address, the size and the ordered block list.

use crate::config::SsdConfig;
use crate::error::{Result, SimError};

/// Physical location of a block.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BlockAddr {
    pub channel: u32,
    pub die: u32,
    pub plane: u32,
    pub block: u32,
}

impl BlockAddr {
    /// Block ids interleave channels fastest, then dies, then planes.
    pub fn decode(id: u32, cfg: &SsdConfig) -> Self {
        let c = cfg.channels;
        let d = cfg.dies_per_channel;
        let p = cfg.planes_per_die;
        Self {
            channel: id % c,
            die: (id / c) % d,
            plane: (id / (c * d)) % p,
            block: id / (c * d * p),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FtlMapping {
    pub start_lpa: u64,
    pub start_ppa: u64,
    pub size: u64,
    /// Physical block ids in logical order.
    pub blocks: Vec<u32>,
    /// Per-block read counts kept for read-disturb management.
    pub read_counts: Vec<u32>,
    channels: u32,
    pages_per_block: u64,
    page_size: u64,
}

/// Mapping metadata in bytes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MetadataSize {
    /// Block list plus the start mapping and size.
    pub l2p: u64,
    pub read_counters: u64,
    pub total: u64,
}

const BLOCK_ENTRY_BYTES: u64 = 4;
const COUNTER_BYTES: u64 = 4;
/// Start LPA-to-PPA pair and database size.
const FIXED_BYTES: u64 = 16;

pub fn place_database(size: u64, cfg: &SsdConfig) -> Result<FtlMapping> {
    cfg.validate()?;
    let capacity = cfg.capacity();
    if size > capacity {
        return Err(SimError::CapacityExceeded { size, capacity });
    }
    let n = size.div_ceil(cfg.block_bytes());
    if n > u32::MAX as u64 {
        return Err(SimError::CapacityExceeded { size, capacity });
    }
    Ok(FtlMapping {
        start_lpa: 0,
        start_ppa: 0,
        size,
        blocks: (0..n as u32).collect(),
        read_counts: vec![0; n as usize],
        channels: cfg.channels,
        pages_per_block: cfg.pages_per_block(),
        page_size: cfg.page_size,
    })
}

pub fn metadata_size(m: &FtlMapping) -> MetadataSize {
    let n = m.blocks.len() as u64;
    let l2p = BLOCK_ENTRY_BYTES * n + FIXED_BYTES;
    let read_counters = COUNTER_BYTES * n;
    MetadataSize {
        l2p,
        read_counters,
        total: l2p + read_counters,
    }
}

impl FtlMapping {
    pub fn block_count(&self) -> usize {
        self.blocks.len()
    }

    pub fn pages(&self) -> u64 {
        self.size.div_ceil(self.page_size)
    }

    fn stripe_pages(&self) -> u64 {
        self.channels as u64 * self.pages_per_block
    }

    fn stripe_width(&self, stripe: u64) -> u64 {
        (self.blocks.len() as u64 - stripe * self.channels as u64).min(self.channels as u64)
    }

    /// Block index (into `blocks`) and page offset of a logical page.
    pub fn locate_page(&self, page: u64) -> (usize, u64) {
        assert!(page < self.pages(), "page {page} beyond the database");
        let stripe = page / self.stripe_pages();
        let r = page % self.stripe_pages();
        let w = self.stripe_width(stripe);
        ((stripe * self.channels as u64 + r % w) as usize, r / w)
    }

    /// Pages written into each block.
    pub fn block_fill(&self) -> Vec<u64> {
        let total = self.pages();
        let sp = self.stripe_pages();
        let mut fill = vec![0u64; self.blocks.len()];
        let stripes = (self.blocks.len() as u64).div_ceil(self.channels as u64);
        for s in 0..stripes {
            let w = self.stripe_width(s);
            let pages = total.saturating_sub(s * sp).min(sp);
            for b in 0..w {
                fill[(s * self.channels as u64 + b) as usize] = pages / w + u64::from(b < pages % w);
            }
        }
        fill
    }

    /// Pages each channel must deliver for one full sequential read.
    pub fn pages_per_channel(&self) -> Vec<u64> {
        let mut out = vec![0u64; self.channels as usize];
        for (i, f) in self.block_fill().into_iter().enumerate() {
            out[i % self.channels as usize] += f;
        }
        out
    }

    pub fn blocks_per_channel(&self) -> Vec<u64> {
        let mut out = vec![0u64; self.channels as usize];
        for i in 0..self.blocks.len() {
            out[i % self.channels as usize] += 1;
        }
        out
    }

    /// Counts one sequential pass over the database.
    pub fn record_pass(&mut self) {
        for c in &mut self.read_counts {
            *c = c.saturating_add(1);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn one_block_lands_on_channel_zero() {
        let cfg = SsdConfig::ssd_c();
        let m = place_database(cfg.block_bytes(), &cfg).unwrap();
        assert_eq!(m.block_count(), 1);
        assert_eq!(BlockAddr::decode(m.blocks[0], &cfg).channel, 0);
        assert_eq!(metadata_size(&m).total, 24);
        assert_eq!(metadata_size(&m).l2p, 20);
    }

    #[test]
    fn one_stripe_fills_every_channel_to_the_same_offset() {
        let cfg = SsdConfig::ssd_c();
        let m = place_database(cfg.channels as u64 * cfg.block_bytes(), &cfg).unwrap();
        let channels: Vec<u32> = m.blocks.iter().map(|&b| BlockAddr::decode(b, &cfg).channel).collect();
        assert_eq!(channels, (0..cfg.channels).collect::<Vec<_>>());
        assert!(m.block_fill().iter().all(|&f| f == cfg.pages_per_block()));
        // Pages walk the channels in turn at a shared offset.
        assert_eq!(m.locate_page(0), (0, 0));
        assert_eq!(m.locate_page(1), (1, 0));
        assert_eq!(m.locate_page(8), (0, 1));
    }

    #[test]
    fn partial_tail_stripe_keeps_offsets_within_one() {
        let cfg = SsdConfig::ssd_c();
        let size = 2 * cfg.channels as u64 * cfg.block_bytes() + 3 * cfg.block_bytes() - 5 * cfg.page_size;
        let m = place_database(size, &cfg).unwrap();
        assert_eq!(m.block_count(), 19);
        let tail = &m.block_fill()[16..];
        assert!(tail.iter().max().unwrap() - tail.iter().min().unwrap() <= 1);
        assert_eq!(m.block_fill().iter().sum::<u64>(), m.pages());
    }

    #[test]
    fn random_sizes_balance_channels() {
        let cfg = SsdConfig::ssd_p();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let size = if rng.gen_bool(0.5) {
                rng.gen_range(1..cfg.capacity() / 64)
            } else {
                rng.gen_range(1..40 * cfg.block_bytes())
            };
            let m = place_database(size, &cfg).unwrap();
            assert_eq!(m.block_count() as u64, size.div_ceil(cfg.block_bytes()));
            let per = m.blocks_per_channel();
            assert!(per.iter().max().unwrap() - per.iter().min().unwrap() <= 1);
            // Oracle: walk every page of small databases.
            if m.pages() < 30_000 {
                let mut fill = vec![0u64; m.block_count()];
                for p in 0..m.pages() {
                    let (b, off) = m.locate_page(p);
                    assert_eq!(off, fill[b]);
                    fill[b] += 1;
                }
                assert_eq!(fill, m.block_fill());
            }
        }
    }

    #[test]
    fn capacity_is_enforced() {
        let cfg = SsdConfig::ssd_c();
        assert!(place_database(cfg.capacity(), &cfg).is_ok());
        assert!(matches!(
            place_database(cfg.capacity() + 1, &cfg),
            Err(SimError::CapacityExceeded { .. })
        ));
    }

    #[test]
    fn passes_bump_every_counter() {
        let cfg = SsdConfig::ssd_c();
        let mut m = place_database(3 * cfg.block_bytes(), &cfg).unwrap();
        m.record_pass();
        m.record_pass();
        assert_eq!(m.read_counts, vec![2, 2, 2]);
    }
}
