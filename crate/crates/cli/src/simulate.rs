use std::collections::BTreeMap;
use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, ValueEnum};
use kmerstream_sim::{run_experiment, Scenario, SsdConfig, Workload};

use crate::error::{CliError, Result};
use crate::manifest::{RunManifest, MANIFEST_FILE};
use crate::output::{parse_size, Staging};

pub const TIMELINE_FILE: &str = "timeline.csv";
pub const SUMMARY_FILE: &str = "summary.csv";

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ScenarioArg {
    #[value(name = "overlap")]
    Overlap,
    #[value(name = "db_size")]
    DbSize,
    #[value(name = "channels")]
    Channels,
    #[value(name = "ssd_count")]
    SsdCount,
    #[value(name = "host_dram")]
    HostDram,
    #[value(name = "multi_sample")]
    MultiSample,
}

impl From<ScenarioArg> for Scenario {
    fn from(s: ScenarioArg) -> Self {
        match s {
            ScenarioArg::Overlap => Scenario::Overlap,
            ScenarioArg::DbSize => Scenario::DbSize,
            ScenarioArg::Channels => Scenario::Channels,
            ScenarioArg::SsdCount => Scenario::SsdCount,
            ScenarioArg::HostDram => Scenario::HostDram,
            ScenarioArg::MultiSample => Scenario::MultiSample,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum PresetArg {
    #[value(name = "ssd-c")]
    SsdC,
    #[value(name = "ssd-p")]
    SsdP,
}

#[derive(Args, Clone, Debug)]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    pub scenario: ScenarioArg,
    /// Device preset used when no --config is given.
    #[arg(long, value_enum, default_value = "ssd-c")]
    pub preset: PresetArg,
    /// Key-value device description; may name a preset and override fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Reference k-mer database size.
    #[arg(long, value_parser = parse_size, default_value = "128G")]
    pub db_bytes: u64,
    /// Sketch tables streamed for taxid retrieval.
    #[arg(long, value_parser = parse_size, default_value = "8G")]
    pub sketch_bytes: u64,
    /// Extracted k-mers of one sample.
    #[arg(long, value_parser = parse_size, default_value = "16G")]
    pub query_bytes: u64,
    #[arg(long, default_value_t = 512)]
    pub buckets: u32,
    /// Host sorting throughput in bytes per second.
    #[arg(long, default_value_t = 2e9)]
    pub sort_rate: f64,
    /// Host memory for extracted k-mers.
    #[arg(long, value_parser = parse_size, default_value = "64G")]
    pub dram_budget: u64,
    /// Largest sample count of the multi-sample sweep.
    #[arg(long, default_value_t = 16)]
    pub samples: u32,
    /// Samples buffered per database pass; defaults to --samples.
    #[arg(long)]
    pub buffer_capacity: Option<u32>,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn device_config(args: &SimulateArgs) -> Result<SsdConfig> {
    match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            SsdConfig::from_toml_str(&text).map_err(|e| CliError::input(path, e.to_string()))
        }
        None => Ok(match args.preset {
            PresetArg::SsdC => SsdConfig::ssd_c(),
            PresetArg::SsdP => SsdConfig::ssd_p(),
        }),
    }
}

pub fn simulate(args: &SimulateArgs, start: Instant) -> Result<RunManifest> {
    if args.buckets == 0 || args.samples == 0 || args.buffer_capacity == Some(0) {
        return Err(CliError::Usage("--buckets, --samples and --buffer-capacity must be positive".into()));
    }
    if !(args.sort_rate.is_finite() && args.sort_rate > 0.0) {
        return Err(CliError::Usage("--sort-rate must be positive".into()));
    }
    let cfg = device_config(args)?;
    let workload = Workload {
        db_bytes: args.db_bytes,
        sketch_bytes: args.sketch_bytes,
        query_bytes: args.query_bytes,
        buckets: args.buckets,
        sort_rate: args.sort_rate,
        host_dram: args.dram_budget,
        samples: args.samples,
        buffer_capacity: args.buffer_capacity,
        ..Workload::default()
    };
    let scenario: Scenario = args.scenario.into();
    let ex = run_experiment(scenario, &cfg, &workload)?;

    let mut stage = Staging::new(&args.out)?;
    let mut buf = Vec::new();
    ex.write_timeline_csv(&mut buf)?;
    stage.write_with(TIMELINE_FILE, |w| w.write_all(&buf))?;
    buf.clear();
    ex.write_summary_csv(&mut buf)?;
    stage.write_with(SUMMARY_FILE, |w| w.write_all(&buf))?;

    let mut parameters = BTreeMap::new();
    parameters.insert("scenario".into(), scenario.as_str().into());
    for (k, v) in device_parameters(&cfg) {
        parameters.insert(format!("ssd.{k}"), v);
    }
    parameters.insert("db_bytes".into(), workload.db_bytes.to_string());
    parameters.insert("sketch_bytes".into(), workload.sketch_bytes.to_string());
    parameters.insert("query_bytes".into(), workload.query_bytes.to_string());
    parameters.insert("buckets".into(), workload.buckets.to_string());
    parameters.insert("sort_rate".into(), workload.sort_rate.to_string());
    parameters.insert("dram_budget".into(), workload.host_dram.to_string());
    parameters.insert("samples".into(), workload.samples.to_string());
    parameters.insert(
        "buffer_capacity".into(),
        workload.buffer_capacity.unwrap_or(workload.samples).to_string(),
    );
    parameters.insert("intersect_fraction".into(), workload.intersect_fraction.to_string());
    let mut m = RunManifest::new("simulate", parameters);
    if let Some(p) = &args.config {
        m.inputs.push(p.display().to_string());
    }
    m.outputs = stage.files().to_vec();
    m.metric("timeline_rows", ex.rows.len());
    m.metric("summary_rows", ex.summary.len());
    m.wall_clock_ms = start.elapsed().as_millis() as u64;
    let json = m.to_json()?;
    stage.write_with(MANIFEST_FILE, |w| w.write_all(&json))?;
    stage.commit()?;
    Ok(m)
}

fn device_parameters(c: &SsdConfig) -> Vec<(&'static str, String)> {
    vec![
        ("channels", c.channels.to_string()),
        ("dies_per_channel", c.dies_per_channel.to_string()),
        ("planes_per_die", c.planes_per_die.to_string()),
        ("blocks_per_plane", c.blocks_per_plane.to_string()),
        ("wordlines_per_block", c.wordlines_per_block.to_string()),
        ("bits_per_cell", c.bits_per_cell.to_string()),
        ("page_size", c.page_size.to_string()),
        ("t_r_us", c.t_r_us.to_string()),
        ("t_prog_us", c.t_prog_us.to_string()),
        ("channel_rate", c.channel_rate.to_string()),
        ("interface_bw", c.interface_bw.to_string()),
        ("internal_dram_bw", c.internal_dram_bw.to_string()),
    ]
}
