//! Host/device timeline for bucketed query preparation and in-storage
//! intersection.
//!
//! Resources: the host sorter, the host link (which also carries commands)
//! and the in-storage units. Each bucket crosses the link in fixed-size
//! batches through two device buffers, so a batch can cross while the
//! previous one is intersected. Overlapped mode also lets the host sort
//! bucket i+1 while bucket i is in the device; serialized mode sorts a bucket
//! only after the previous one is fully intersected.

use crate::time::{transfer_ps_f, us_to_ps, Ps};

pub const BATCH_BYTES: u64 = 1 << 20;
pub const COMMAND_US: f64 = 10.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Command,
    Sort,
    Transfer,
    Intersect,
    Retrieve,
}

impl Stage {
    pub const ALL: [Stage; 5] = [
        Stage::Command,
        Stage::Sort,
        Stage::Transfer,
        Stage::Intersect,
        Stage::Retrieve,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Command => "command",
            Stage::Sort => "sort",
            Stage::Transfer => "transfer",
            Stage::Intersect => "intersect",
            Stage::Retrieve => "retrieve",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StageEvent {
    pub stage: Stage,
    pub bucket: Option<u32>,
    pub start: Ps,
    pub end: Ps,
}

/// Rates are in query bytes per second.
#[derive(Clone, Debug, PartialEq)]
pub struct StageRates {
    pub sort: f64,
    pub interface: f64,
    pub isp: f64,
    /// Duration of the taxid retrieval pass after the last bucket.
    pub retrieve: Ps,
    pub command: Ps,
    pub batch_bytes: u64,
}

impl StageRates {
    pub fn new(sort: f64, interface: f64, isp: f64) -> Self {
        Self {
            sort,
            interface,
            isp,
            retrieve: 0,
            command: us_to_ps(COMMAND_US),
            batch_bytes: BATCH_BYTES,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PipelineTimeline {
    pub events: Vec<StageEvent>,
}

impl PipelineTimeline {
    pub fn total(&self) -> Ps {
        self.events.iter().map(|e| e.end).max().unwrap_or(0)
    }

    pub fn busy(&self, stage: Stage) -> Ps {
        self.events.iter().filter(|e| e.stage == stage).map(|e| e.end - e.start).sum()
    }

    pub fn utilization(&self, stage: Stage) -> f64 {
        match self.total() {
            0 => 0.0,
            t => self.busy(stage) as f64 / t as f64,
        }
    }

    /// First start and last end of a stage, if it ran at all.
    pub fn span(&self, stage: Stage) -> Option<(Ps, Ps)> {
        let mut it = self.events.iter().filter(|e| e.stage == stage);
        let first = it.next()?;
        Some(it.fold((first.start, first.end), |(s, e), ev| (s.min(ev.start), e.max(ev.end))))
    }

    pub fn bucket_event(&self, stage: Stage, bucket: u32) -> Option<&StageEvent> {
        self.events.iter().find(|e| e.stage == stage && e.bucket == Some(bucket))
    }
}

/// Which resource a stage occupies; commands share the host link.
pub fn resource_of(stage: Stage) -> u8 {
    match stage {
        Stage::Sort => 0,
        Stage::Command | Stage::Transfer => 1,
        Stage::Intersect | Stage::Retrieve => 2,
    }
}

pub fn sim_pipeline(buckets: &[u64], rates: &StageRates, overlap: bool) -> PipelineTimeline {
    assert!(rates.sort > 0.0 && rates.interface > 0.0 && rates.isp > 0.0, "rates must be positive");
    assert!(rates.batch_bytes > 0, "batch size must be positive");
    let mut events = Vec::with_capacity(4 * buckets.len() + 2);
    let init_end = rates.command;
    events.push(StageEvent { stage: Stage::Command, bucket: None, start: 0, end: init_end });

    let mut host_free = 0;
    let mut link_free = init_end;
    let mut isp_free = 0;
    // Completion of each bucket and of each batch, for the lookahead and
    // double-buffer constraints.
    let mut bucket_done: Vec<Ps> = Vec::with_capacity(buckets.len());
    let mut batch_done: Vec<Ps> = Vec::new();

    for (i, &bytes) in buckets.iter().enumerate() {
        let b = Some(i as u32);
        let gate = match (overlap, i) {
            (true, i) if i >= 2 => bucket_done[i - 2],
            (false, i) if i >= 1 => bucket_done[i - 1],
            _ => 0,
        };
        let sort_start = host_free.max(gate);
        let sort_end = sort_start + transfer_ps_f(bytes, rates.sort);
        host_free = sort_end;
        events.push(StageEvent { stage: Stage::Sort, bucket: b, start: sort_start, end: sort_end });

        let cmd_start = sort_end.max(link_free);
        let cmd_end = cmd_start + rates.command;
        link_free = cmd_end;
        events.push(StageEvent { stage: Stage::Command, bucket: b, start: cmd_start, end: cmd_end });

        let mut remaining = bytes;
        let (mut t_first, mut t_last) = (cmd_end, cmd_end);
        let mut x_first = None;
        let mut x_last = cmd_end;
        while remaining > 0 {
            let n = remaining.min(rates.batch_bytes);
            remaining -= n;
            let k = batch_done.len();
            let buffer_free = if k >= 2 { batch_done[k - 2] } else { 0 };
            let start = link_free.max(buffer_free);
            let end = start + transfer_ps_f(n, rates.interface);
            link_free = end;
            if x_first.is_none() {
                t_first = start;
            }
            t_last = end;
            let xs = end.max(isp_free);
            let xe = xs + transfer_ps_f(n, rates.isp);
            isp_free = xe;
            x_first.get_or_insert(xs);
            x_last = xe;
            batch_done.push(xe);
        }
        let x_first = x_first.unwrap_or(t_last);
        events.push(StageEvent { stage: Stage::Transfer, bucket: b, start: t_first, end: t_last });
        events.push(StageEvent { stage: Stage::Intersect, bucket: b, start: x_first, end: x_last });
        bucket_done.push(x_last.max(t_last));
    }

    let r_start = isp_free.max(bucket_done.last().copied().unwrap_or(init_end));
    events.push(StageEvent { stage: Stage::Retrieve, bucket: None, start: r_start, end: r_start + rates.retrieve });
    PipelineTimeline { events }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::time::PS_PER_S;

    fn secs(ps: Ps) -> f64 {
        ps as f64 / PS_PER_S as f64
    }

    #[test]
    fn single_bucket_gains_nothing_from_overlap() {
        let rates = StageRates::new(1e9, 4e9, 1e9);
        let a = sim_pipeline(&[1 << 20], &rates, true);
        let b = sim_pipeline(&[1 << 20], &rates, false);
        assert_eq!(a.total(), b.total());
    }

    #[test]
    fn equal_sort_and_isp_time_approaches_n_plus_one() {
        // t = 64 ms per bucket for sort and intersection, transfer ~100x faster.
        let n = 64;
        let bucket = 64 << 20;
        let rates = StageRates::new(1e9, 1e11, 1e9);
        let t = secs(transfer_ps_f(bucket, 1e9));
        let over = secs(sim_pipeline(&vec![bucket; n], &rates, true).total());
        let ser = secs(sim_pipeline(&vec![bucket; n], &rates, false).total());
        assert!((over / ((n + 1) as f64 * t) - 1.0).abs() < 0.02, "{over}");
        assert!((ser / (2 * n) as f64 / t - 1.0).abs() < 0.02, "{ser}");
    }

    #[test]
    fn buckets_flow_sort_then_transfer_then_intersect() {
        let rates = StageRates::new(2e9, 1e9, 3e9);
        let tl = sim_pipeline(&[3 << 20, 5 << 20, 1 << 19, 0, 7 << 20], &rates, true);
        for b in 0..5 {
            let s = tl.bucket_event(Stage::Sort, b).unwrap();
            let t = tl.bucket_event(Stage::Transfer, b).unwrap();
            let x = tl.bucket_event(Stage::Intersect, b).unwrap();
            assert!(s.end <= t.start && t.start <= x.start && t.end <= x.end);
        }
        assert_eq!(tl.span(Stage::Retrieve).unwrap().0, tl.total());
    }

    #[test]
    fn empty_workload_is_just_the_init_command() {
        let tl = sim_pipeline(&[], &StageRates::new(1.0, 1.0, 1.0), true);
        assert_eq!(tl.total(), us_to_ps(COMMAND_US));
    }
}
