//! Run directory layout and artifact formats.
//!
//! ```text
//! <run>/config.json
//! <run>/state/baseline.json
//! <run>/state/iter_<k>.json
//! <run>/results/history.csv
//! <run>/results/best_design.json
//! <run>/results/convergence.svg
//! <run>/results/sensitivity.csv             (sobol command)
//! <run>/results/sensitivity_ranking.csv     (sobol command)
//! <run>/.lock
//! ```
//!
//! Every file is rewritten through a temporary sibling and a rename, so a
//! killed process leaves either the old or the new version.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::sensitivity::SobolResult;
use crate::space::{DesignSpace, Region};
use crate::srsm::{IterationRecord, RunResult, RunState, StopReason};

pub const ENV_OUTPUT_ROOT: &str = "SRSM_OPT_DIR";
pub const DEFAULT_OUTPUT_ROOT: &str = "runs";
pub const CONFIG_FILE: &str = "config.json";
pub const STATE_DIR: &str = "state";
pub const RESULTS_DIR: &str = "results";
pub const BASELINE_FILE: &str = "baseline.json";
pub const HISTORY_FILE: &str = "history.csv";
pub const BEST_FILE: &str = "best_design.json";
pub const CONVERGENCE_FILE: &str = "convergence.svg";
pub const SENSITIVITY_FILE: &str = "sensitivity.csv";
pub const RANKING_FILE: &str = "sensitivity_ranking.csv";
pub const LOCK_FILE: &str = ".lock";

/// Run directory for `config`: its `output_dir`, else `<root>/<name>` with
/// the root taken from `env_root` or [`DEFAULT_OUTPUT_ROOT`].
pub fn default_run_dir(config: &RunConfig, env_root: Option<PathBuf>) -> PathBuf {
    match &config.output_dir {
        Some(dir) => dir.clone(),
        None => env_root
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_ROOT))
            .join(config.run_name()),
    }
}

fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, contents).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Exclusive ownership of a run directory; released on drop.
#[derive(Debug)]
pub struct RunLock {
    path: PathBuf,
}

impl Drop for RunLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

fn pid_alive(pid: u32) -> bool {
    let proc_root = Path::new("/proc");
    !proc_root.is_dir() || proc_root.join(pid.to_string()).exists()
}

#[derive(Clone, Debug)]
pub struct RunDir {
    pub root: PathBuf,
}

impl RunDir {
    /// Creates the layout and stores `config_json`; an existing directory
    /// must hold the same configuration.
    pub fn create(root: impl Into<PathBuf>, config_json: &str) -> Result<Self> {
        let dir = Self { root: root.into() };
        for sub in [STATE_DIR, RESULTS_DIR] {
            let p = dir.root.join(sub);
            fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
        }
        let cfg = dir.root.join(CONFIG_FILE);
        if cfg.exists() {
            let existing = read(&cfg)?;
            if existing != config_json {
                return Err(Error::Config(format!(
                    "{} already holds a different configuration; resume it or choose another output directory",
                    dir.root.display()
                )));
            }
        } else {
            write_atomic(&cfg, config_json.as_bytes())?;
        }
        Ok(dir)
    }

    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let dir = Self { root: root.into() };
        let cfg = dir.root.join(CONFIG_FILE);
        if !cfg.is_file() {
            return Err(Error::Integrity(format!("{} is missing", cfg.display())));
        }
        Ok(dir)
    }

    pub fn config_text(&self) -> Result<String> {
        read(&self.root.join(CONFIG_FILE))
    }

    pub fn state_dir(&self) -> PathBuf {
        self.root.join(STATE_DIR)
    }

    pub fn results(&self, file: &str) -> PathBuf {
        self.root.join(RESULTS_DIR).join(file)
    }

    /// Takes the lock file, replacing one left by a dead process.
    pub fn lock(&self) -> Result<RunLock> {
        let path = self.root.join(LOCK_FILE);
        for _ in 0..2 {
            match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
                Ok(mut f) => {
                    use std::io::Write;
                    writeln!(f, "{}", std::process::id()).map_err(|e| Error::io(&path, e))?;
                    return Ok(RunLock { path });
                }
                Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                    let holder = fs::read_to_string(&path)
                        .ok()
                        .and_then(|s| s.trim().parse::<u32>().ok());
                    if holder.is_some_and(pid_alive) {
                        return Err(Error::Locked(self.root.clone()));
                    }
                    fs::remove_file(&path).map_err(|e| Error::io(&path, e))?;
                }
                Err(e) => return Err(Error::io(&path, e)),
            }
        }
        Err(Error::Locked(self.root.clone()))
    }

    /// Writes the baseline, every iteration file not yet on disk (the last
    /// one always) and the result artifacts.
    pub fn save(&self, state: &RunState, space: &DesignSpace) -> Result<()> {
        let sd = self.state_dir();
        let base = sd.join(BASELINE_FILE);
        if !base.exists() {
            write_atomic(&base, &serde_json::to_vec(&state.baseline)?)?;
        }
        let n = state.history.len();
        for (i, rec) in state.history.iter().enumerate() {
            let p = sd.join(iter_file(rec.k));
            if i + 1 == n || !p.exists() {
                write_atomic(&p, &serde_json::to_vec(rec)?)?;
            }
        }
        self.write_results(state, space)
    }

    pub fn write_results(&self, state: &RunState, space: &DesignSpace) -> Result<()> {
        let omega = Region::full(space);
        let rows = history_rows(state, &omega);
        write_atomic(&self.results(HISTORY_FILE), format_history_csv(&rows)?.as_bytes())?;
        let best = BestDesign::from_state(state, space);
        write_atomic(
            &self.results(BEST_FILE),
            (serde_json::to_string_pretty(&best)? + "\n").as_bytes(),
        )?;
        write_atomic(&self.results(CONVERGENCE_FILE), convergence_svg(&rows).as_bytes())
    }

    /// The persisted state, `None` before the baseline was saved.
    pub fn load_state(&self) -> Result<Option<RunState>> {
        let sd = self.state_dir();
        let base = sd.join(BASELINE_FILE);
        if !base.exists() {
            return Ok(None);
        }
        let baseline =
            serde_json::from_str(&read(&base)?).map_err(|e| Error::Integrity(format!("{}: {e}", base.display())))?;
        let mut ks = Vec::new();
        for entry in fs::read_dir(&sd).map_err(|e| Error::io(&sd, e))? {
            let name = entry.map_err(|e| Error::io(&sd, e))?.file_name();
            if let Some(k) = name.to_str().and_then(parse_iter_file) {
                ks.push(k);
            }
        }
        ks.sort_unstable();
        let mut history: Vec<IterationRecord> = Vec::with_capacity(ks.len());
        for (i, k) in ks.into_iter().enumerate() {
            if k as usize != i + 1 {
                return Err(Error::Integrity(format!("state files skip iteration {}", i + 1)));
            }
            let p = sd.join(iter_file(k));
            let rec: IterationRecord =
                serde_json::from_str(&read(&p)?).map_err(|e| Error::Integrity(format!("{}: {e}", p.display())))?;
            if rec.k != k {
                return Err(Error::Integrity(format!("{} holds iteration {}", p.display(), rec.k)));
            }
            history.push(rec);
        }
        let state = RunState { baseline, history };
        if let Some(pos) = state.history.iter().position(|r| r.termination.stop.is_some()) {
            if pos + 1 != state.history.len() {
                return Err(Error::Integrity(format!(
                    "iterations recorded after the stop at {}",
                    pos + 1
                )));
            }
        }
        Ok(Some(state))
    }
}

fn iter_file(k: u32) -> String {
    format!("iter_{k}.json")
}

fn parse_iter_file(name: &str) -> Option<u32> {
    let k: u32 = name.strip_prefix("iter_")?.strip_suffix(".json")?.parse().ok()?;
    (k >= 1 && iter_file(k) == name).then_some(k)
}

/// One line of `history.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HistoryRow {
    pub iteration: u32,
    /// True objective at the predicted optimum, f⁽ᵏ⁾.
    pub objective: Option<f64>,
    pub verified_feasible: bool,
    pub predicted_objective: f64,
    pub best_so_far: Option<f64>,
    /// Region volume relative to Ω.
    pub region_volume: f64,
    pub design_change: Option<f64>,
    pub objective_change: Option<f64>,
    pub stop: Option<String>,
    pub n_samples: usize,
    pub n_failed: usize,
}

pub fn history_rows(state: &RunState, omega: &Region) -> Vec<HistoryRow> {
    state
        .history
        .iter()
        .map(|r| HistoryRow {
            iteration: r.k,
            objective: r.verified.objective(),
            verified_feasible: r.verified.feasible(),
            predicted_objective: r.optimum.predicted_objective,
            best_so_far: r.best_objective,
            region_volume: r.region.relative_volume(omega),
            design_change: r.termination.design_change,
            objective_change: r.termination.objective_change,
            stop: r.termination.stop.map(|s| s.as_str().to_owned()),
            n_samples: r.samples.len(),
            n_failed: r.failed_ids().len(),
        })
        .collect()
}

pub fn format_history_csv(rows: &[HistoryRow]) -> Result<String> {
    let mut w = csv::WriterBuilder::new().has_headers(true).from_writer(Vec::new());
    if rows.is_empty() {
        w.write_record(HISTORY_HEADER)?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Parse(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Parse(e.to_string()))
}

const HISTORY_HEADER: [&str; 11] = [
    "iteration",
    "objective",
    "verified_feasible",
    "predicted_objective",
    "best_so_far",
    "region_volume",
    "design_change",
    "objective_change",
    "stop",
    "n_samples",
    "n_failed",
];

pub fn parse_history_csv(text: &str) -> Result<Vec<HistoryRow>> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header = r.headers()?.clone();
    if header.iter().ne(HISTORY_HEADER) {
        return Err(Error::Parse(format!("{HISTORY_FILE}: unexpected header")));
    }
    let rows: Vec<HistoryRow> = r.deserialize().collect::<std::result::Result<_, _>>()?;
    for (i, row) in rows.iter().enumerate() {
        if row.iteration as usize != i + 1 {
            return Err(Error::Parse(format!(
                "{HISTORY_FILE}: row {} has iteration {}",
                i + 1,
                row.iteration
            )));
        }
        if let Some(s) = &row.stop {
            if ![
                StopReason::DesignChange,
                StopReason::ObjectiveChange,
                StopReason::MaxIterations,
            ]
            .iter()
            .any(|r| r.as_str() == s)
            {
                return Err(Error::Parse(format!("{HISTORY_FILE}: unknown stop reason `{s}`")));
            }
        }
    }
    Ok(rows)
}

/// Contents of `best_design.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BestDesign {
    pub iterations: u32,
    pub termination: Option<StopReason>,
    pub baseline_objective: Option<f64>,
    pub best_objective: Option<f64>,
    pub improvement_percent: Option<f64>,
    pub id: Option<u64>,
    pub iteration: Option<u32>,
    /// Sampled variables by name; empty without a feasible design.
    pub values: BTreeMap<String, f64>,
    /// All variables including dependents.
    pub resolved: BTreeMap<String, f64>,
}

impl BestDesign {
    pub fn from_state(state: &RunState, space: &DesignSpace) -> Self {
        let r = RunResult::from_state(state);
        let point = r.best.as_ref().map(|e| &e.point);
        Self {
            iterations: r.iterations,
            termination: r.termination,
            baseline_objective: r.baseline_objective,
            best_objective: r.best_objective,
            improvement_percent: r.improvement_percent,
            id: point.map(|p| p.id),
            iteration: point.map(|p| p.iteration),
            values: point
                .map(|p| {
                    space
                        .sampled_names()
                        .into_iter()
                        .zip(p.values.iter().copied())
                        .collect()
                })
                .unwrap_or_default(),
            resolved: point.map(|p| p.resolved.clone()).unwrap_or_default(),
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Objective and relative region volume per iteration, as a static plot.
pub fn convergence_svg(rows: &[HistoryRow]) -> String {
    const W: f64 = 640.0;
    const H: f64 = 220.0;
    const M: f64 = 48.0;
    let n = rows.len().max(2) as f64;
    let x = |k: u32| M + (f64::from(k) - 1.0) / (n - 1.0) * (W - 2.0 * M);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{}" font-family="sans-serif" font-size="11">"#,
        2.0 * H
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);

    let mut panel = |top: f64, title: &str, series: &[(&str, Vec<(u32, f64)>)], log: bool| {
        let tf = |v: f64| if log { v.max(1e-300).log10() } else { v };
        let all: Vec<f64> = series
            .iter()
            .flat_map(|(_, p)| p.iter().map(|q| tf(q.1)))
            .filter(|v| v.is_finite())
            .collect();
        let (lo, hi) = all
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
        let (lo, hi) = if lo.is_finite() && hi > lo {
            (lo, hi)
        } else if lo.is_finite() {
            (lo - 1.0, lo + 1.0)
        } else {
            (0.0, 1.0)
        };
        let y = |v: f64| top + H - M / 2.0 - (tf(v) - lo) / (hi - lo) * (H - M);
        let _ = writeln!(
            s,
            r#"<rect x="{M}" y="{:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="black"/>"#,
            top + M / 2.0,
            W - 2.0 * M,
            H - M
        );
        let _ = writeln!(s, r#"<text x="{M}" y="{:.2}">{title}</text>"#, top + M / 2.0 - 6.0);
        let label = |v: f64| if log { format!("1e{v:.1}") } else { format!("{v:.4}") };
        let _ = writeln!(s, r#"<text x="4" y="{:.2}">{}</text>"#, top + M / 2.0 + 10.0, label(hi));
        let _ = writeln!(s, r#"<text x="4" y="{:.2}">{}</text>"#, top + H - M / 2.0, label(lo));
        for (i, (name, pts)) in series.iter().enumerate() {
            let color = ["#1f77b4", "#d62728"][i % 2];
            let path: Vec<String> = pts
                .iter()
                .filter(|(_, v)| tf(*v).is_finite())
                .map(|(k, v)| format!("{:.2},{:.2}", x(*k), y(*v)))
                .collect();
            let _ = writeln!(
                s,
                r#"<polyline fill="none" stroke="{color}" points="{}"/>"#,
                path.join(" ")
            );
            let _ = writeln!(
                s,
                r#"<text x="{:.2}" y="{:.2}" fill="{color}">{name}</text>"#,
                W - M - 140.0,
                top + M / 2.0 + 14.0 * (i as f64 + 1.0)
            );
        }
    };
    let verified: Vec<(u32, f64)> = rows
        .iter()
        .filter_map(|r| r.objective.map(|v| (r.iteration, v)))
        .collect();
    let best: Vec<(u32, f64)> = rows
        .iter()
        .filter_map(|r| r.best_so_far.map(|v| (r.iteration, v)))
        .collect();
    panel(
        0.0,
        "objective vs iteration",
        &[("best so far", best), ("verified optimum", verified)],
        false,
    );
    let volume: Vec<(u32, f64)> = rows.iter().map(|r| (r.iteration, r.region_volume)).collect();
    panel(
        H,
        "relative region volume vs iteration (log)",
        &[("region volume", volume)],
        true,
    );
    s.push_str("</svg>\n");
    s
}

/// `variable,objective,S,S_T` rows.
pub fn format_sensitivity_csv(results: &[SobolResult]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["variable", "objective", "S", "S_T"])?;
    for r in results {
        for (i, v) in r.variables.iter().enumerate() {
            w.write_record([
                v.clone(),
                r.objective.clone(),
                r.first_order[i].to_string(),
                r.total[i].to_string(),
            ])?;
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::Parse(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Parse(e.to_string()))
}

pub fn format_ranking_csv(ranking: &[(String, f64)]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["rank", "variable", "score"])?;
    for (i, (v, s)) in ranking.iter().enumerate() {
        w.write_record([(i + 1).to_string(), v.clone(), s.to_string()])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Parse(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Parse(e.to_string()))
}

pub fn parse_ranking_csv(text: &str) -> Result<Vec<(String, f64)>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        if rec.len() != 3 {
            return Err(Error::Parse(format!("{RANKING_FILE}: expected 3 fields")));
        }
        let score: f64 = rec[2]
            .parse()
            .map_err(|_| Error::Parse(format!("{RANKING_FILE}: bad score `{}`", &rec[2])))?;
        out.push((rec[1].to_owned(), score));
    }
    Ok(out)
}
