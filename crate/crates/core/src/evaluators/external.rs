//! Evaluation by an external simulation process.
//!
//! For each design a fresh working directory receives `design.txt`
//! (`name = value` per line, resolved values including dependents). The
//! configured command runs there through `sh -c`; on success it must leave
//! `responses.csv` (a header row of names, then one row of values) and
//! optionally one `curve_<name>.csv` (`time,value`, uniform time step) per
//! curve response.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{out_of_bounds, Evaluator, ResponseSet};
use crate::error::{Error, Result};
use crate::problem::Curve;
use crate::space::{DesignPoint, DesignSpace};

pub const DESIGN_FILE: &str = "design.txt";
pub const RESPONSES_FILE: &str = "responses.csv";
const CURVE_PREFIX: &str = "curve_";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExternalProcessConfig {
    /// Shell command, run with the design directory as working directory.
    pub command: String,
    /// Parent directory of the per-design working directories.
    pub work_root: PathBuf,
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
    #[serde(default = "default_poll")]
    pub poll_ms: u64,
    /// Settling time stripped from curves before curve matching.
    #[serde(default)]
    pub settling_end: f64,
}

fn default_timeout() -> f64 {
    4.0 * 3600.0
}

fn default_poll() -> u64 {
    50
}

#[derive(Clone, Debug)]
pub struct ExternalProcess {
    pub space: DesignSpace,
    pub config: ExternalProcessConfig,
}

/// `name = value` lines; `#` starts a comment, blank lines are skipped.
pub fn parse_design_txt(text: &str) -> Result<BTreeMap<String, f64>> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |what: &str| Error::Parse(format!("{DESIGN_FILE} line {}: {what}", i + 1));
        let (k, v) = line.split_once('=').ok_or_else(|| err("expected `name = value`"))?;
        let k = k.trim();
        if k.is_empty() || k.chars().any(char::is_whitespace) {
            return Err(err("bad variable name"));
        }
        let v: f64 = v.trim().parse().map_err(|_| err("value is not a number"))?;
        if !v.is_finite() {
            return Err(err("value is not finite"));
        }
        if out.insert(k.to_owned(), v).is_some() {
            return Err(err(&format!("duplicate variable `{k}`")));
        }
    }
    Ok(out)
}

pub fn format_design_txt(values: &BTreeMap<String, f64>) -> String {
    values.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
}

fn reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .flexible(true)
        .from_reader(text.as_bytes())
}

fn curve_rows(text: &str, file: &str) -> Result<Vec<(String, String)>> {
    let mut rows = Vec::new();
    for (i, rec) in reader(text).records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse(format!("{file}: {e}")))?;
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        if rec.len() != 2 {
            return Err(Error::Parse(format!(
                "{file} row {}: expected 2 columns, got {}",
                i + 1,
                rec.len()
            )));
        }
        if i == 0 && rec[0].eq_ignore_ascii_case("time") {
            continue;
        }
        rows.push((rec[0].to_owned(), rec[1].to_owned()));
    }
    Ok(rows)
}

fn number(s: &str, file: &str, row: usize) -> Result<f64> {
    s.parse::<f64>()
        .map_err(|_| Error::Parse(format!("{file} row {row}: `{s}` is not a number")))
}

/// A header row of response names followed by one row of values. Values may
/// be non-finite; the response set check rejects them later.
pub fn parse_responses_csv(text: &str) -> Result<BTreeMap<String, f64>> {
    let mut rows = Vec::new();
    for rec in reader(text).records() {
        let rec = rec.map_err(|e| Error::Parse(format!("{RESPONSES_FILE}: {e}")))?;
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        rows.push(rec);
    }
    let [names, values] = rows.as_slice() else {
        return Err(Error::Parse(format!(
            "{RESPONSES_FILE}: expected a header row and one value row, got {} rows",
            rows.len()
        )));
    };
    if names.len() != values.len() {
        return Err(Error::Parse(format!(
            "{RESPONSES_FILE}: {} names but {} values",
            names.len(),
            values.len()
        )));
    }
    let mut out = BTreeMap::new();
    for (k, v) in names.iter().zip(values) {
        if k.is_empty() {
            return Err(Error::Parse(format!("{RESPONSES_FILE}: empty response name")));
        }
        let v = number(v, RESPONSES_FILE, 2)?;
        if out.insert(k.to_owned(), v).is_some() {
            return Err(Error::Parse(format!("{RESPONSES_FILE}: duplicate response `{k}`")));
        }
    }
    Ok(out)
}

pub fn format_responses_csv(values: &BTreeMap<String, f64>) -> String {
    let names: Vec<&str> = values.keys().map(String::as_str).collect();
    let nums: Vec<String> = values.values().map(f64::to_string).collect();
    format!("{}\n{}\n", names.join(","), nums.join(","))
}

/// `time,value` rows on a uniform grid starting at zero.
pub fn parse_curve_csv(name: &str, text: &str) -> Result<Curve> {
    let file = format!("{CURVE_PREFIX}{name}.csv");
    let rows = curve_rows(text, &file)?;
    let mut times = Vec::with_capacity(rows.len());
    let mut values = Vec::with_capacity(rows.len());
    for (i, (t, v)) in rows.iter().enumerate() {
        times.push(number(t, &file, i + 1)?);
        values.push(number(v, &file, i + 1)?);
    }
    if times.is_empty() {
        return Err(Error::EmptyCurve(name.to_owned()));
    }
    let dt = if times.len() > 1 { times[1] - times[0] } else { 1.0 };
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::Parse(format!("{file}: time must increase")));
    }
    for (k, t) in times.iter().enumerate() {
        let expected = times[0] + k as f64 * dt;
        if !((t - expected).abs() <= 1e-6 * dt.max(t.abs())) {
            return Err(Error::Parse(format!("{file} row {}: time step is not uniform", k + 1)));
        }
    }
    if times[0].abs() > 1e-9 * dt {
        return Err(Error::Parse(format!("{file}: time must start at 0")));
    }
    Curve::new(name, "", dt, values)
}

/// Reads `responses.csv` and all `curve_*.csv` from `dir`.
pub fn read_outputs(dir: &Path, settling_end: f64) -> Result<ResponseSet> {
    let path = dir.join(RESPONSES_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let mut rs = ResponseSet::ok(parse_responses_csv(&text)?);
    rs.settling_end = settling_end;
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let file = entry.file_name().to_string_lossy().into_owned();
        if let Some(name) = file.strip_prefix(CURVE_PREFIX).and_then(|f| f.strip_suffix(".csv")) {
            let text = fs::read_to_string(entry.path()).map_err(|e| Error::io(entry.path(), e))?;
            rs.curves.insert(name.to_owned(), parse_curve_csv(name, &text)?);
        }
    }
    Ok(rs)
}

impl ExternalProcess {
    pub fn new(space: DesignSpace, config: ExternalProcessConfig) -> Result<Self> {
        if config.command.trim().is_empty() {
            return Err(Error::Config("external evaluator needs a command".into()));
        }
        if !(config.timeout_secs > 0.0) {
            return Err(Error::Config("timeout_secs must be positive".into()));
        }
        Ok(Self { space, config })
    }

    fn work_dir(&self, point: &DesignPoint) -> PathBuf {
        self.config
            .work_root
            .join(format!("iter_{:03}_design_{:06}", point.iteration, point.id))
    }

    fn run(&self, point: &DesignPoint) -> Result<ResponseSet> {
        let dir = self.work_dir(point);
        if dir.exists() {
            fs::remove_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        }
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let design = dir.join(DESIGN_FILE);
        fs::write(&design, format_design_txt(&point.resolved)).map_err(|e| Error::io(&design, e))?;
        let log = dir.join("process.log");
        let out = fs::File::create(&log).map_err(|e| Error::io(&log, e))?;
        let err = out.try_clone().map_err(|e| Error::io(&log, e))?;
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(&self.config.command)
            .current_dir(&dir)
            .stdin(Stdio::null())
            .stdout(out)
            .stderr(err)
            .spawn()
            .map_err(|e| Error::io(&dir, e))?;
        let start = Instant::now();
        let timeout = Duration::from_secs_f64(self.config.timeout_secs);
        let status = loop {
            match child.try_wait().map_err(|e| Error::io(&dir, e))? {
                Some(s) => break s,
                None if start.elapsed() >= timeout => {
                    let _ = child.kill();
                    let _ = child.wait();
                    return Ok(ResponseSet::failed("timeout"));
                }
                None => std::thread::sleep(Duration::from_millis(self.config.poll_ms)),
            }
        };
        if !status.success() {
            return Ok(ResponseSet::failed(match status.code() {
                Some(c) => format!("exit_code_{c}"),
                None => "killed_by_signal".to_owned(),
            }));
        }
        Ok(read_outputs(&dir, self.config.settling_end)?.checked())
    }
}

impl Evaluator for ExternalProcess {
    fn name(&self) -> &str {
        "external_process"
    }

    fn evaluate(&self, point: &DesignPoint) -> ResponseSet {
        if let Some(r) = out_of_bounds(&self.space, point) {
            return r;
        }
        match self.run(point) {
            Ok(rs) => rs,
            Err(Error::Parse(msg)) => ResponseSet::failed(format!("parse_error: {msg}")),
            Err(Error::EmptyCurve(name)) => ResponseSet::failed(format!("parse_error: empty curve {name}")),
            Err(e) => ResponseSet::failed(format!("io_error: {e}")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::{SamplingRules, VariableSpec};

    fn space() -> DesignSpace {
        DesignSpace::new(
            "toy",
            vec![
                VariableSpec::continuous("a", 0.0, 1.0),
                VariableSpec::continuous("b", 0.0, 1.0),
            ],
            BTreeMap::new(),
            SamplingRules::None,
        )
        .unwrap()
    }

    fn process(command: &str, root: &Path, timeout: f64) -> ExternalProcess {
        ExternalProcess::new(
            space(),
            ExternalProcessConfig {
                command: command.into(),
                work_root: root.to_path_buf(),
                timeout_secs: timeout,
                poll_ms: 5,
                settling_end: 0.0,
            },
        )
        .unwrap()
    }

    #[test]
    fn design_txt_round_trip() {
        let mut m = BTreeMap::new();
        m.insert("sphere_radius".to_owned(), 4.6);
        m.insert("x".to_owned(), -1e-7);
        assert_eq!(parse_design_txt(&format_design_txt(&m)).unwrap(), m);
        assert!(parse_design_txt("a = 1\na = 2\n").is_err());
        assert!(parse_design_txt("a 1\n").is_err());
        assert!(parse_design_txt("a = nan\n").is_err());
        assert_eq!(parse_design_txt("# c\n\n b = 2 # note\n").unwrap()["b"], 2.0);
    }

    #[test]
    fn responses_and_curves_parse() {
        let r = parse_responses_csv("f, g\n1.5,-2\n").unwrap();
        assert_eq!(r["f"], 1.5);
        assert_eq!(r["g"], -2.0);
        assert_eq!(parse_responses_csv(&format_responses_csv(&r)).unwrap(), r);
        assert!(parse_responses_csv("f\nx\n").is_err());
        assert!(parse_responses_csv("f,g\n1\n").is_err());
        assert!(parse_responses_csv("f\n1\n2\n").is_err());
        assert!(parse_responses_csv("f,f\n1,2\n").is_err());
        let c = parse_curve_csv("s", "time,value\n0,0\n0.01,1\n0.02,4\n").unwrap();
        assert_eq!(c.values, vec![0.0, 1.0, 4.0]);
        assert!((c.dt - 0.01).abs() < 1e-15);
        assert!(parse_curve_csv("s", "0,0\n0.01,1\n0.05,4\n").is_err());
        assert!(parse_curve_csv("s", "time,value\n").is_err());
    }

    #[test]
    fn runs_command_and_reads_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let cmd = "a=$(sed -n 's/^a = //p' design.txt); printf 'f,g\\n%s,3\\n' \"$a\" > responses.csv; printf 'time,value\\n0,1\\n0.5,2\\n' > curve_c.csv";
        let ev = process(cmd, dir.path(), 30.0);
        let p = space().point(vec![0.25, 0.5], 7, 1).unwrap();
        let rs = ev.evaluate(&p);
        assert!(rs.is_ok(), "{:?}", rs.status);
        assert_eq!(rs.scalar("f").unwrap(), 0.25);
        assert_eq!(rs.scalar("g").unwrap(), 3.0);
        assert_eq!(rs.curve("c").unwrap().values, vec![1.0, 2.0]);
    }

    #[test]
    fn failure_modes() {
        let dir = tempfile::tempdir().unwrap();
        let p = space().point(vec![0.5, 0.5], 1, 0).unwrap();
        assert_eq!(
            process("exit 3", dir.path(), 30.0).evaluate(&p).failure(),
            Some("exit_code_3")
        );
        assert_eq!(
            process("sleep 5", dir.path(), 0.2).evaluate(&p).failure(),
            Some("timeout")
        );
        let rs = process("printf 'f\\nabc\\n' > responses.csv", dir.path(), 30.0).evaluate(&p);
        assert!(rs.failure().unwrap().starts_with("parse_error"));
        let rs = process("true", dir.path(), 30.0).evaluate(&p);
        assert!(rs.failure().unwrap().starts_with("io_error"));
        let rs = process("printf 'f\\ninf\\n' > responses.csv", dir.path(), 30.0).evaluate(&p);
        assert_eq!(rs.failure(), Some("non_finite:f"));
    }
}
