use std::collections::{BTreeMap, BTreeSet};

use super::TaxHitTable;
use crate::encoding::TaxId;
use crate::error::{Error, Result};

pub const DEFAULT_TAU: f64 = 0.2;

pub fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau <= 1.0 {
        Ok(())
    } else {
        Err(Error::BadThreshold(tau))
    }
}

/// Level-weighted hits over top-level sketch size. A level-k hit weighs
/// k / k_max.
pub fn containment(hits: &TaxHitTable, sketch_sizes: &BTreeMap<TaxId, u64>) -> BTreeMap<TaxId, f64> {
    let k_max = hits.k_levels()[0] as f64;
    hits.iter()
        .filter_map(|(t, counts)| {
            let size = *sketch_sizes.get(&t)?;
            if size == 0 {
                return None;
            }
            let weighted: f64 = counts
                .iter()
                .zip(hits.k_levels())
                .map(|(&c, &k)| c as f64 * k as f64 / k_max)
                .sum();
            Some((t, weighted / size as f64))
        })
        .collect()
}

pub fn call_presence(hits: &TaxHitTable, sketch_sizes: &BTreeMap<TaxId, u64>, tau: f64) -> Result<BTreeSet<TaxId>> {
    check_tau(tau)?;
    Ok(containment(hits, sketch_sizes)
        .into_iter()
        .filter(|&(_, c)| c >= tau)
        .map(|(t, _)| t)
        .collect())
}
