use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::Args;
use serde::Serialize;

use crate::error::{CliError, Result};
use crate::manifest::{RunManifest, MANIFEST_FILE};
use crate::output::Staging;
use crate::simulate::SUMMARY_FILE;

pub const REPORT_CSV: &str = "report.csv";
pub const REPORT_JSON: &str = "report.json";

#[derive(Args, Clone, Debug)]
pub struct ReportArgs {
    /// Output directories of earlier runs.
    pub runs: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

/// One row per run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReportRow {
    pub run: String,
    pub command: String,
    /// Simulation scenario; empty for other commands.
    pub scenario: String,
    pub config_hash: String,
    pub tool_version: String,
    pub metric: String,
    pub value: String,
}

const HEADER: [&str; 7] = ["run", "command", "scenario", "config_hash", "tool_version", "metric", "value"];

pub fn report_row(dir: &Path) -> Result<ReportRow> {
    let m = RunManifest::read(dir)?;
    let scenario = m.parameters.get("scenario").cloned().unwrap_or_default();
    let metric_of = |name: &str| m.metrics.get(name).map(|v| v.to_string()).unwrap_or_default();
    let (metric, value) = match m.command.as_str() {
        "build-db" => ("genomes".to_string(), metric_of("genomes")),
        "analyze" => ("present_taxa".to_string(), metric_of("present_taxa")),
        "simulate" => ("max_speedup".to_string(), max_speedup(dir)?),
        "report" => ("runs".to_string(), metric_of("runs")),
        other => (other.to_string(), String::new()),
    };
    Ok(ReportRow {
        run: dir.display().to_string(),
        command: m.command,
        scenario,
        config_hash: m.config_hash,
        tool_version: m.tool_version,
        metric,
        value,
    })
}

fn max_speedup(dir: &Path) -> Result<String> {
    let path = dir.join(SUMMARY_FILE);
    let mut rdr = csv::Reader::from_path(&path)?;
    let mut best: Option<f64> = None;
    for rec in rdr.records() {
        let rec = rec?;
        let v: f64 = rec
            .get(3)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| CliError::input(&path, "bad speedup column"))?;
        best = Some(best.map_or(v, |b: f64| b.max(v)));
    }
    Ok(best.map(|b| format!("{b:.4}")).unwrap_or_default())
}

pub fn report(args: &ReportArgs, start: Instant) -> Result<RunManifest> {
    let rows = args.runs.iter().map(|d| report_row(d)).collect::<Result<Vec<_>>>()?;

    let mut stage = Staging::new(&args.out)?;
    let mut csv_buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut csv_buf);
        w.write_record(HEADER)?;
        for r in &rows {
            w.write_record([&r.run, &r.command, &r.scenario, &r.config_hash, &r.tool_version, &r.metric, &r.value])?;
        }
        w.flush().map_err(|e| CliError::io(&args.out, e))?;
    }
    stage.write_with(REPORT_CSV, |w| w.write_all(&csv_buf))?;
    let mut json = serde_json::to_vec_pretty(&rows)?;
    json.push(b'\n');
    stage.write_with(REPORT_JSON, |w| w.write_all(&json))?;

    let mut parameters = BTreeMap::new();
    parameters.insert(
        "runs".into(),
        args.runs.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(","),
    );
    let mut m = RunManifest::new("report", parameters);
    m.inputs = args.runs.iter().map(|p| p.join(MANIFEST_FILE).display().to_string()).collect();
    m.outputs = stage.files().to_vec();
    m.metric("runs", rows.len());
    m.wall_clock_ms = start.elapsed().as_millis() as u64;
    let json = m.to_json()?;
    stage.write_with(MANIFEST_FILE, |w| w.write_all(&json))?;
    stage.commit()?;
    Ok(m)
}
