//! Run artifacts: trajectory CSV, summaries and the run manifest.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use comm_energy::solver::{SolveStatus, SolverOptions};
use comm_energy::{Scenario, Solution};
use serde::Serialize;

/// Writes `contents` next to `path` and renames it into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let name = path.file_name().context("output path has no file name")?.to_string_lossy();
    let tmp = dir.join(format!(".{name}.tmp"));
    {
        let mut f = fs::File::create(&tmp).with_context(|| format!("creating {}", tmp.display()))?;
        f.write_all(contents)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path).with_context(|| format!("moving {} into place", path.display()))
}

pub fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// Header and rows of `solution.csv`: `t_s`, then for each node its link
/// powers, its link rates, buffer, position, speed and thrust.
pub fn solution_csv(cfg: &Scenario, solution: &Solution) -> String {
    let mut columns: Vec<(String, Vec<f64>)> = vec![("t_s".into(), solution.knot_times.clone())];
    for id in 1..=cfg.node_count() {
        let links: Vec<_> = solution.links.iter().filter(|l| l.link.from == id).collect();
        for l in &links {
            columns.push((format!("p_W_{}_{}", l.link.from, l.link.to), l.power.clone()));
        }
        for l in &links {
            columns.push((format!("r_bps_{}_{}", l.link.from, l.link.to), l.rate.clone()));
        }
        let node = solution.node(id);
        columns.push((format!("s_bits_{id}"), node.buffer.clone()));
        columns.push((format!("q_m_{id}"), node.position.clone()));
        columns.push((format!("v_mps_{id}"), node.speed.clone()));
        columns.push((format!("F_N_{id}"), node.thrust.clone()));
    }
    let mut out = String::new();
    let header: Vec<&str> = columns.iter().map(|c| c.0.as_str()).collect();
    out.push_str(&header.join(","));
    out.push('\n');
    for k in 0..solution.knot_times.len() {
        for (i, (_, values)) in columns.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            write!(out, "{}", values[k]).expect("writing to a string");
        }
        out.push('\n');
    }
    out
}

fn unix_seconds() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

/// Record of one `solve` run, written last.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool_version: &'static str,
    pub scenario_path: PathBuf,
    pub config_hash: String,
    pub solver_options: SolverOptions,
    pub output_dir: PathBuf,
    pub started_unix_s: f64,
    pub finished_unix_s: f64,
    pub status: SolveStatus,
    pub artifacts: Vec<String>,
}

impl RunManifest {
    pub fn start(scenario_path: &Path, config_hash: String, solver_options: SolverOptions, output_dir: &Path) -> Self {
        RunManifest {
            tool_version: env!("CARGO_PKG_VERSION"),
            scenario_path: scenario_path.to_path_buf(),
            config_hash,
            solver_options,
            output_dir: output_dir.to_path_buf(),
            started_unix_s: unix_seconds(),
            finished_unix_s: 0.0,
            status: SolveStatus::NotSolved,
            artifacts: Vec::new(),
        }
    }

    pub fn finish(mut self, status: SolveStatus) -> Result<()> {
        self.status = status;
        self.finished_unix_s = unix_seconds();
        let path = self.output_dir.join("manifest.json");
        write_json(&path, &self)
    }
}
