//! Run-log files: a per-step CSV table plus a JSON metadata document.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde_json::json;

use crate::error::{Error, Result};
use crate::sim::RunLog;

pub const LOG_FORMAT_VERSION: u32 = 1;
pub const STEPS_FILE: &str = "steps.csv";
pub const META_FILE: &str = "meta.json";

/// Column names of the step table for `m` robots and `n` targets.
pub fn csv_header(m: usize, n: usize) -> Vec<String> {
    let mut cols = vec!["t".to_string()];
    for i in 0..m {
        cols.push(format!("robot{i}_x"));
        cols.push(format!("robot{i}_y"));
    }
    for j in 0..n {
        cols.push(format!("target{j}_x"));
        cols.push(format!("target{j}_y"));
    }
    for j in 0..n {
        cols.push(format!("est{j}_x"));
        cols.push(format!("est{j}_y"));
    }
    for c in ["trace", "sensing_risk", "jamming_risk", "residual_min", "status"] {
        cols.push(c.to_string());
    }
    cols
}

/// Renders the step table. Floats use the shortest representation that
/// parses back to the same value.
pub fn steps_csv(log: &RunLog) -> String {
    let (m, n) = log
        .records
        .first()
        .map(|r| (r.robot_positions.len(), r.true_target_positions.len()))
        .unwrap_or((0, 0));
    let mut out = csv_header(m, n).join(",");
    out.push('\n');
    for r in &log.records {
        write!(out, "{}", r.t).unwrap();
        for p in r.robot_positions.iter().chain(&r.true_target_positions).chain(&r.estimate_mean) {
            write!(out, ",{},{}", p.x, p.y).unwrap();
        }
        writeln!(
            out,
            ",{},{},{},{},{}",
            r.trace,
            r.sensing_risk,
            r.jamming_risk,
            r.residual_min,
            r.solver_status.as_str()
        )
        .unwrap();
    }
    out
}

/// Renders the metadata document.
pub fn meta_json(log: &RunLog, resolved_config: &str, applied_defaults: &[String]) -> String {
    let meta = json!({
        "format_version": LOG_FORMAT_VERSION,
        "scenario_name": log.scenario_name,
        "scenario_digest": log.scenario_digest,
        "seeds": {
            "master": log.seeds.master,
            "measurement": log.seeds.measurement,
            "mc_sensing": log.seeds.mc_sensing,
            "mc_jamming": log.seeds.mc_jamming,
        },
        "steps": log.records.len(),
        "escaped_steps": log.records.iter().filter(|r| r.escaped).count(),
        "applied_defaults": applied_defaults,
        "resolved_config": resolved_config,
    });
    let mut text = serde_json::to_string_pretty(&meta).expect("metadata is valid JSON");
    text.push('\n');
    text
}

/// Writes `contents` to `path` through a sibling temporary file and a rename.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::io(path, std::io::Error::new(std::io::ErrorKind::InvalidInput, "not a file path")))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(file_name);
    tmp_name.push(".tmp");
    let tmp: PathBuf = path.with_file_name(tmp_name);
    fs::write(&tmp, contents).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Writes `steps.csv` and `meta.json` into `dir`, creating it if needed.
pub fn write_run_log(log: &RunLog, dir: &Path, resolved_config: &str, applied_defaults: &[String]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_atomic(&dir.join(STEPS_FILE), &steps_csv(log))?;
    write_atomic(&dir.join(META_FILE), &meta_json(log, resolved_config, applied_defaults))
}

/// A parsed step table: header plus raw cells.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn parse(text: &str) -> Result<Table> {
        let mut lines = text.lines();
        let header: Vec<String> = lines
            .next()
            .ok_or_else(|| Error::Parse("empty table".into()))?
            .split(',')
            .map(str::to_string)
            .collect();
        let mut rows = Vec::new();
        for (k, line) in lines.enumerate() {
            let row: Vec<String> = line.split(',').map(str::to_string).collect();
            if row.len() != header.len() {
                return Err(Error::Parse(format!(
                    "row {} has {} cells, header has {}",
                    k + 1,
                    row.len(),
                    header.len()
                )));
            }
            rows.push(row);
        }
        Ok(Table { header, rows })
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    /// Projects the named columns, in order, into a new CSV document.
    pub fn select(&self, names: &[String]) -> Result<String> {
        let idx = names
            .iter()
            .map(|n| self.column(n).ok_or_else(|| Error::Parse(format!("missing column `{n}`"))))
            .collect::<Result<Vec<_>>>()?;
        let mut out = names.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<&str> = idx.iter().map(|&i| row[i].as_str()).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        Ok(out)
    }
}

/// Per-figure series derived from a run directory, keyed by file name.
///
/// * `trace_risk.csv`: t, trace, sensing_risk, jamming_risk
/// * `trajectories.csv`: t and every robot, target and estimate coordinate
/// * `residuals.csv`: t, residual_min, status
pub fn plot_series(steps: &str) -> Result<Vec<(&'static str, String)>> {
    let table = Table::parse(steps)?;
    let names = |list: &[&str]| list.iter().map(|s| s.to_string()).collect::<Vec<_>>();
    let coords: Vec<String> = table
        .header
        .iter()
        .filter(|h| ["robot", "target", "est"].iter().any(|p| h.starts_with(p)))
        .cloned()
        .collect();
    let mut trajectory = vec!["t".to_string()];
    trajectory.extend(coords);
    Ok(vec![
        ("trace_risk.csv", table.select(&names(&["t", "trace", "sensing_risk", "jamming_risk"]))?),
        ("trajectories.csv", table.select(&trajectory)?),
        ("residuals.csv", table.select(&names(&["t", "residual_min", "status"]))?),
    ])
}

/// Reads `dir/steps.csv` and writes the plot series into `dir/plots/`.
pub fn write_plot_data(dir: &Path) -> Result<Vec<PathBuf>> {
    let steps_path = dir.join(STEPS_FILE);
    let steps = fs::read_to_string(&steps_path).map_err(|e| Error::io(&steps_path, e))?;
    let out_dir = dir.join("plots");
    fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
    let mut written = Vec::new();
    for (name, body) in plot_series(&steps)? {
        let path = out_dir.join(name);
        write_atomic(&path, &body)?;
        written.push(path);
    }
    Ok(written)
}
