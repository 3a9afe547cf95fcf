//! Named parameter sweeps built from the device, pipeline and multi-sample
//! models.
//!
//! Every scenario reports, per swept value, the first-start and last-end time
//! of each stage plus a summary row with the end-to-end time and the speedup
//! over that scenario's baseline:
//!
//! * `overlap`: overlapped against serialized execution on one device.
//! * `db_size`, `channels`: in-storage pipeline against a host that streams
//!   the database over the device link.
//! * `ssd_count`: the database split disjointly over D devices against one
//!   device.
//! * `host_dram`: bucketed preparation with spilled buckets against an
//!   unbucketed run that pages its working set in and out.
//! * `multi_sample`: one shared database pass against one pass per sample.

use std::io::Write;
use std::str::FromStr;

use kmerstream::query_prep::{plan_residency, SPILL_BUFFER_BYTES};

use crate::config::SsdConfig;
use crate::error::{Result, SimError};
use crate::multi::{sim_multi_sample, MultiSampleParams};
use crate::nand::sim_sequential_read;
use crate::pipeline::{sim_pipeline, PipelineTimeline, Stage, StageEvent, StageRates};
use crate::time::{ps_to_us, rate_of, transfer_ps_f, Ps};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Scenario {
    Overlap,
    DbSize,
    Channels,
    SsdCount,
    HostDram,
    MultiSample,
}

impl Scenario {
    pub const ALL: [Scenario; 6] = [
        Scenario::Overlap,
        Scenario::DbSize,
        Scenario::Channels,
        Scenario::SsdCount,
        Scenario::HostDram,
        Scenario::MultiSample,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::Overlap => "overlap",
            Scenario::DbSize => "db_size",
            Scenario::Channels => "channels",
            Scenario::SsdCount => "ssd_count",
            Scenario::HostDram => "host_dram",
            Scenario::MultiSample => "multi_sample",
        }
    }
}

impl FromStr for Scenario {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.as_str() == s)
            .ok_or_else(|| SimError::UnknownScenario(s.to_string()))
    }
}

/// Sample and database sizes plus host-side rates. Sizes are bytes.
#[derive(Clone, Debug, PartialEq)]
pub struct Workload {
    pub db_bytes: u64,
    /// Sketch tables streamed once for taxid retrieval.
    pub sketch_bytes: u64,
    /// Extracted k-mers of one sample.
    pub query_bytes: u64,
    pub buckets: u32,
    /// Host sorting throughput in bytes per second.
    pub sort_rate: f64,
    pub host_dram: u64,
    /// Largest sample count of the multi-sample sweep.
    pub samples: u32,
    /// Samples buffered together; defaults to `samples`.
    pub buffer_capacity: Option<u32>,
    /// Intersecting k-mers as a fraction of the query, for internal DRAM traffic.
    pub intersect_fraction: f64,
}

const GIB: u64 = 1 << 30;

impl Default for Workload {
    fn default() -> Self {
        Self {
            db_bytes: 128 * GIB,
            sketch_bytes: 8 * GIB,
            query_bytes: 16 * GIB,
            buckets: 512,
            sort_rate: 2e9,
            host_dram: 64 * GIB,
            samples: 16,
            buffer_capacity: None,
            intersect_fraction: 0.05,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TimelineRow {
    pub scenario: String,
    pub parameter: String,
    pub stage: String,
    pub start_us: f64,
    pub end_us: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub scenario: String,
    pub parameter: String,
    pub total_us: f64,
    pub speedup_vs_baseline: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Experiment {
    pub scenario: Scenario,
    pub rows: Vec<TimelineRow>,
    pub summary: Vec<SummaryRow>,
}

impl Experiment {
    fn new(scenario: Scenario) -> Self {
        Self {
            scenario,
            rows: Vec::new(),
            summary: Vec::new(),
        }
    }

    fn push_span(&mut self, parameter: &str, stage: &str, start: Ps, end: Ps) {
        self.rows.push(TimelineRow {
            scenario: self.scenario.as_str().into(),
            parameter: parameter.into(),
            stage: stage.into(),
            start_us: ps_to_us(start),
            end_us: ps_to_us(end),
        });
    }

    fn push_timeline(&mut self, parameter: &str, tl: &PipelineTimeline, offset: Ps) {
        for stage in Stage::ALL {
            if let Some((s, e)) = tl.span(stage) {
                self.push_span(parameter, stage.as_str(), s + offset, e + offset);
            }
        }
    }

    fn push_summary(&mut self, parameter: &str, total: Ps, baseline: Ps) {
        self.summary.push(SummaryRow {
            scenario: self.scenario.as_str().into(),
            parameter: parameter.into(),
            total_us: ps_to_us(total),
            speedup_vs_baseline: baseline as f64 / total.max(1) as f64,
        });
    }

    pub fn write_timeline_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["scenario", "parameter", "stage", "start_us", "end_us"])?;
        for r in &self.rows {
            out.write_record([
                r.scenario.as_str(),
                r.parameter.as_str(),
                r.stage.as_str(),
                &format!("{:.3}", r.start_us),
                &format!("{:.3}", r.end_us),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn write_summary_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["scenario", "parameter", "total_us", "speedup_vs_baseline"])?;
        for r in &self.summary {
            out.write_record([
                r.scenario.as_str(),
                r.parameter.as_str(),
                &format!("{:.3}", r.total_us),
                &format!("{:.4}", r.speedup_vs_baseline),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Database streaming rate after the internal DRAM check: the query fetch,
/// the query read-out and the intersection write must fit the DRAM
/// bandwidth while the flash is read at `flash_rate`; any excess slows the
/// stream proportionally.
pub fn dram_limited_rate(cfg: &SsdConfig, flash_rate: f64, w: &Workload) -> f64 {
    let per_db_byte = (2.0 + w.intersect_fraction) * w.query_bytes as f64 / w.db_bytes.max(1) as f64;
    let demand = flash_rate * per_db_byte;
    let budget = cfg.internal_dram_bw as f64;
    if demand > budget {
        flash_rate * budget / demand
    } else {
        flash_rate
    }
}

fn equal_buckets(total: u64, n: u32) -> Vec<u64> {
    let n = n.max(1) as u64;
    (0..n).map(|i| total / n + u64::from(i < total % n)).collect()
}

/// End-to-end in-storage run of one sample on one device.
fn in_storage(cfg: &SsdConfig, w: &Workload, overlap: bool) -> Result<PipelineTimeline> {
    let db = sim_sequential_read(w.db_bytes, cfg)?;
    let stream = dram_limited_rate(cfg, db.throughput(), w);
    let sketch = sim_sequential_read(w.sketch_bytes, cfg)?;
    let mut rates = StageRates::new(
        w.sort_rate,
        cfg.interface_bw as f64,
        stream * w.query_bytes.max(1) as f64 / w.db_bytes.max(1) as f64,
    );
    // Retrieval reads only flash and the small intersection, so it is not
    // held to the DRAM check.
    rates.retrieve = sketch.duration;
    Ok(sim_pipeline(&equal_buckets(w.query_bytes, w.buckets), &rates, overlap))
}

/// Host-side run. The database is pulled across the device link in chunks
/// that fit host memory, and every chunk is queried with the whole sample;
/// the sketch tables follow over the same link.
fn host_streaming(cfg: &SsdConfig, w: &Workload) -> Result<Ps> {
    let link = |bytes: u64| -> Result<Ps> {
        let flash = sim_sequential_read(bytes, cfg)?.duration;
        Ok(flash.max(transfer_ps_f(bytes, cfg.interface_bw as f64)))
    };
    let chunks = w.db_bytes.div_ceil(w.host_dram.max(1)).max(1);
    let query = chunks * transfer_ps_f(w.query_bytes, w.sort_rate);
    Ok(query + link(w.db_bytes)? + link(w.sketch_bytes)?)
}

pub fn run_experiment(scenario: Scenario, cfg: &SsdConfig, w: &Workload) -> Result<Experiment> {
    cfg.validate()?;
    let mut ex = Experiment::new(scenario);
    match scenario {
        Scenario::Overlap => {
            let over = in_storage(cfg, w, true)?;
            let ser = in_storage(cfg, w, false)?;
            ex.push_timeline("overlapped", &over, 0);
            ex.push_timeline("serialized", &ser, 0);
            ex.push_summary("overlapped", over.total(), ser.total());
            ex.push_summary("serialized", ser.total(), ser.total());
        }
        Scenario::DbSize => {
            for f in [1u64, 2, 3] {
                let wf = Workload {
                    db_bytes: w.db_bytes * f,
                    sketch_bytes: w.sketch_bytes * f,
                    ..w.clone()
                };
                let tl = in_storage(cfg, &wf, true)?;
                let p = format!("{f}x");
                ex.push_timeline(&p, &tl, 0);
                ex.push_summary(&p, tl.total(), host_streaming(cfg, &wf)?);
            }
        }
        Scenario::Channels => {
            for ch in [4u32, 8, 16, 32] {
                let c = cfg.with_channels(ch);
                let tl = in_storage(&c, w, true)?;
                let p = ch.to_string();
                ex.push_timeline(&p, &tl, 0);
                ex.push_summary(&p, tl.total(), host_streaming(&c, w)?);
            }
        }
        Scenario::SsdCount => {
            let single = in_storage(cfg, w, true)?.total();
            for d in [1u64, 2, 4, 8] {
                // Disjoint partitions; the slowest (largest) one finishes last.
                let wd = Workload {
                    db_bytes: w.db_bytes.div_ceil(d),
                    sketch_bytes: w.sketch_bytes.div_ceil(d),
                    ..w.clone()
                };
                let tl = in_storage(cfg, &wd, true)?;
                let p = d.to_string();
                ex.push_timeline(&p, &tl, 0);
                ex.push_summary(&p, tl.total(), single);
            }
        }
        Scenario::HostDram => {
            let q = w.query_bytes;
            let sizes = equal_buckets(q, w.buckets);
            let flash = sim_sequential_read(w.db_bytes, cfg)?.throughput();
            let write_rate = cfg.program_rate().min(cfg.interface_bw as f64);
            let read_rate = flash.min(cfg.interface_bw as f64);
            let over = in_storage(cfg, w, true)?;
            let ser = in_storage(cfg, w, false)?;
            for (num, den) in [(2u64, 1u64), (1, 1), (1, 2), (1, 4), (1, 8)] {
                let budget = q * num / den;
                let p = if den == 1 { format!("{num}x") } else { format!("1/{den}x") };
                let plan = plan_residency(&sizes, budget, SPILL_BUFFER_BYTES)?;
                let spilled: u64 = sizes[plan.pinned..].iter().sum();
                let spill_w = transfer_ps_f(spilled, write_rate);
                let spill_r = transfer_ps_f(spilled, read_rate);
                if spilled > 0 {
                    ex.push_span(&p, "spill", 0, spill_w + spill_r);
                }
                ex.push_timeline(&p, &over, spill_w + spill_r);
                let total = spill_w + spill_r + over.total();
                // Unbucketed: no overlap, and run formation plus every merge
                // round page the overflow out and back in.
                let overflow = q.saturating_sub(budget);
                let rounds = if overflow == 0 {
                    0
                } else {
                    1 + (q as f64 / budget as f64).log2().ceil() as u64
                };
                let swap = rounds * (transfer_ps_f(overflow, write_rate) + transfer_ps_f(overflow, read_rate));
                ex.push_summary(&p, total, ser.total() + swap);
            }
        }
        Scenario::MultiSample => {
            let db = sim_sequential_read(w.db_bytes, cfg)?;
            let stream = dram_limited_rate(cfg, db.throughput(), w);
            let cap = w.buffer_capacity.unwrap_or(w.samples).max(1);
            for s in 1..=w.samples.max(1) {
                let params = MultiSampleParams {
                    samples: s,
                    buffer_capacity: cap,
                    db_bytes: w.db_bytes,
                    sample_bytes: w.query_bytes,
                    buckets: w.buckets,
                    rates: StageRates::new(w.sort_rate, cfg.interface_bw as f64, stream),
                };
                let r = sim_multi_sample(&params);
                let p = s.to_string();
                let per_pass = r.total / r.passes.max(1);
                for k in 0..r.passes {
                    let end = if k + 1 == r.passes { r.total } else { (k + 1) * per_pass };
                    ex.push_span(&p, "db_pass", k * per_pass, end);
                }
                ex.push_summary(&p, r.total, r.baseline_total);
            }
        }
    }
    Ok(ex)
}

/// Event-level rows of a timeline, for inspecting a single run.
pub fn timeline_rows(scenario: &str, parameter: &str, events: &[StageEvent]) -> Vec<TimelineRow> {
    events
        .iter()
        .map(|e| TimelineRow {
            scenario: scenario.into(),
            parameter: parameter.into(),
            stage: e.stage.as_str().into(),
            start_us: ps_to_us(e.start),
            end_us: ps_to_us(e.end),
        })
        .collect()
}

/// Simulated throughput of the in-storage intersection step alone.
pub fn isp_step_throughput(cfg: &SsdConfig, w: &Workload) -> Result<f64> {
    let db = sim_sequential_read(w.db_bytes, cfg)?;
    let stream = dram_limited_rate(cfg, db.throughput(), w);
    let t = (db.duration as f64 * db.throughput() / stream).ceil() as Ps;
    Ok(rate_of(w.db_bytes, t))
}
