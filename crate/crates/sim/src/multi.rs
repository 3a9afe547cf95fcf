//! Several samples against one database. Samples that fit in host memory
//! together are merged bucket by bucket and share a single database pass;
//! the per-sample baseline streams the database once for every sample.

use crate::pipeline::{sim_pipeline, StageRates};
use crate::time::Ps;

#[derive(Clone, Debug, PartialEq)]
pub struct MultiSampleParams {
    pub samples: u32,
    /// Samples whose extracted k-mers fit in host memory at once.
    pub buffer_capacity: u32,
    pub db_bytes: u64,
    /// Extracted k-mer bytes of one sample.
    pub sample_bytes: u64,
    pub buckets: u32,
    /// `isp` is the database streaming rate in bytes per second.
    pub rates: StageRates,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MultiSampleResult {
    pub passes: u64,
    pub db_bytes_read: u64,
    pub total: Ps,
    pub baseline_db_bytes_read: u64,
    pub baseline_total: Ps,
}

impl MultiSampleResult {
    pub fn speedup(&self) -> f64 {
        self.baseline_total as f64 / self.total.max(1) as f64
    }
}

/// Time of one database pass serving `group` samples.
pub fn group_pass(p: &MultiSampleParams, group: u32) -> Ps {
    let query = p.sample_bytes * group as u64;
    let n = p.buckets.max(1) as u64;
    let buckets: Vec<u64> = (0..n).map(|i| query / n + u64::from(i < query % n)).collect();
    // Intersection time follows the database slice, which is the same for any
    // number of merged samples.
    let isp = if query == 0 {
        p.rates.isp
    } else {
        p.rates.isp * query as f64 / p.db_bytes.max(1) as f64
    };
    let rates = StageRates { isp, ..p.rates.clone() };
    sim_pipeline(&buckets, &rates, true).total()
}

fn grouped_total(p: &MultiSampleParams, capacity: u32) -> (u64, Ps) {
    let full = p.samples / capacity;
    let rest = p.samples % capacity;
    let mut total = 0;
    if full > 0 {
        total += full as u64 * group_pass(p, capacity);
    }
    if rest > 0 {
        total += group_pass(p, rest);
    }
    (full as u64 + u64::from(rest > 0), total)
}

pub fn sim_multi_sample(p: &MultiSampleParams) -> MultiSampleResult {
    assert!(p.samples >= 1, "at least one sample");
    assert!(p.buffer_capacity >= 1, "buffer holds at least one sample");
    let (passes, total) = grouped_total(p, p.buffer_capacity.min(p.samples));
    let (base_passes, baseline_total) = grouped_total(p, 1);
    MultiSampleResult {
        passes,
        db_bytes_read: passes * p.db_bytes,
        total,
        baseline_db_bytes_read: base_passes * p.db_bytes,
        baseline_total,
    }
}
