//! CSV artifacts of a run: `flow_<id>.csv` traces plus `summary.csv`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::scenario::ControllerKind;
use super::sim::SimResult;
use crate::error::{Result, SimError};

pub const SUMMARY_FILE: &str = "summary.csv";

/// One row of `summary.csv`. `flow` is the flow id or `all`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub scenario: String,
    pub seed: u64,
    pub flow: String,
    pub controller: String,
    pub start_s: f64,
    pub end_s: f64,
    pub delivered_bytes: u64,
    pub utilization: f64,
    pub mean_owd_ms: Option<f64>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> SimError + '_ {
    move |source| SimError::Io {
        path: path.to_owned(),
        source,
    }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> SimError + '_ {
    move |e| SimError::Parse {
        path: path.to_owned(),
        message: e.to_string(),
    }
}

pub fn summary_rows(result: &SimResult) -> Vec<SummaryRow> {
    let kinds: Vec<ControllerKind> = result.flows.iter().map(|f| f.controller).collect();
    let mut mix: Vec<&str> = kinds.iter().map(|k| k.name()).collect();
    mix.dedup();
    result
        .interval_utilization()
        .into_iter()
        .map(|u| SummaryRow {
            scenario: result.scenario.clone(),
            seed: result.seed,
            flow: u.flow_id.map_or("all".to_owned(), |id| id.to_string()),
            controller: match u.flow_id {
                Some(id) => kinds[id as usize].name().to_owned(),
                None => mix.join("+"),
            },
            start_s: u.start_s,
            end_s: u.end_s,
            delivered_bytes: u.delivered_bytes,
            utilization: u.utilization,
            mean_owd_ms: u.mean_owd_ms,
        })
        .collect()
}

/// Writes every artifact of `result` into `dir` and returns the paths.
pub fn write_outputs(result: &SimResult, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut written = Vec::new();
    for f in &result.flows {
        let path = dir.join(format!("flow_{}.csv", f.flow_id));
        let mut w = csv::Writer::from_path(&path).map_err(csv_err(&path))?;
        for rec in result.flow_trace(f.flow_id) {
            w.serialize(rec).map_err(csv_err(&path))?;
        }
        w.flush().map_err(io_err(&path))?;
        written.push(path);
    }
    let path = dir.join(SUMMARY_FILE);
    let mut w = csv::Writer::from_path(&path).map_err(csv_err(&path))?;
    for row in summary_rows(result) {
        w.serialize(row).map_err(csv_err(&path))?;
    }
    w.flush().map_err(io_err(&path))?;
    written.push(path);

    let path = dir.join("config.toml");
    fs::write(&path, result.spec.config.to_toml_string()).map_err(io_err(&path))?;
    written.push(path);
    Ok(written)
}

pub fn read_summary(path: &Path) -> Result<Vec<SummaryRow>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    r.deserialize()
        .collect::<std::result::Result<Vec<SummaryRow>, _>>()
        .map_err(csv_err(path))
}

/// Every `summary.csv` in `dir` or its immediate subdirectories, sorted.
pub fn find_summaries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let own = dir.join(SUMMARY_FILE);
    if own.is_file() {
        out.push(own);
    }
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let entry = entry.map_err(io_err(dir))?;
        let p = entry.path().join(SUMMARY_FILE);
        if p.is_file() {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}

/// Collects the aggregate rows of every run under `dir` into
/// `utilization.csv` and returns them.
pub fn write_report(dir: &Path) -> Result<Vec<SummaryRow>> {
    let mut rows = Vec::new();
    for p in find_summaries(dir)? {
        rows.extend(read_summary(&p)?.into_iter().filter(|r| r.flow == "all"));
    }
    let path = dir.join("utilization.csv");
    let mut w = csv::Writer::from_path(&path).map_err(csv_err(&path))?;
    for row in &rows {
        w.serialize(row).map_err(csv_err(&path))?;
    }
    w.flush().map_err(io_err(&path))?;
    Ok(rows)
}

pub fn format_table(rows: &[SummaryRow]) -> String {
    let mut s = format!(
        "{:<16} {:>4} {:<14} {:>7} {:>7} {:>7}\n",
        "scenario", "seed", "controller", "from_s", "to_s", "util"
    );
    for r in rows {
        s.push_str(&format!(
            "{:<16} {:>4} {:<14} {:>7.0} {:>7.0} {:>6.1}%\n",
            r.scenario,
            r.seed,
            r.controller,
            r.start_s,
            r.end_s,
            r.utilization * 100.0
        ));
    }
    s
}
