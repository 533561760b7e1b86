//! Commands behind the `srsm-opt` binary.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use log::info;
use srsm_core::config::{template, RunConfig};
use srsm_core::persist::{
    default_run_dir, format_ranking_csv, format_sensitivity_csv, RunDir, ENV_OUTPUT_ROOT, RANKING_FILE,
    SENSITIVITY_FILE,
};
use srsm_core::problem::{calibrate_weights_doe, Calibration, ObjectiveSpec, D_EXPULSION, D_SUBSIDENCE};
use srsm_core::report::Report;
use srsm_core::rng;
use srsm_core::sensitivity::{aggregate_ranking, sobol_on_models, Aggregation, SobolResult};
use srsm_core::space::preset_names;
use srsm_core::srsm::{RunResult, Srsm};

pub const DEFAULT_DOE_DESIGNS: usize = 100;

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub parallelism: Option<usize>,
    /// Iterations to run in this call before returning (the run stays resumable).
    pub stop_after: Option<u32>,
    /// Run directory, overriding the config and `SRSM_OPT_DIR`.
    pub output: Option<PathBuf>,
}

/// Writes one template per preset problem into `dir`.
pub fn cmd_init(dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut written = Vec::new();
    for name in preset_names() {
        let path = dir.join(format!("{name}.json"));
        fs::write(&path, template(name)?.to_json()?).with_context(|| format!("writing {}", path.display()))?;
        written.push(path);
    }
    Ok(written)
}

fn read_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let (config, _) = RunConfig::from_json(&text).map_err(|e| anyhow!("{}: {e}", path.display()))?;
    Ok(config)
}

/// Starts (or continues) the run described by the config at `path`.
pub fn cmd_run(path: &Path, opts: &RunOptions) -> Result<(PathBuf, RunResult)> {
    let mut config = read_config(path)?;
    if let Some(seed) = opts.seed {
        config.srsm.seed = seed;
    }
    let root = opts
        .output
        .clone()
        .unwrap_or_else(|| default_run_dir(&config, std::env::var_os(ENV_OUTPUT_ROOT).map(PathBuf::from)));
    let stored = root.join(srsm_core::persist::CONFIG_FILE);
    let text = if stored.is_file() {
        let existing = fs::read_to_string(&stored)?;
        let previous = RunConfig::parse(&existing)?;
        if !same_run(&previous, &config) {
            bail!(
                "{} already holds a run with a different configuration; use `resume` or another output directory",
                root.display()
            );
        }
        config = previous;
        existing
    } else {
        config.to_json()?
    };
    let dir = RunDir::create(&root, &text)?;
    let result = execute(&dir, &config, opts)?;
    Ok((root, result))
}

/// Equal apart from the evaluation parallelism, which never changes results.
fn same_run(a: &RunConfig, b: &RunConfig) -> bool {
    let mut b = b.clone();
    b.srsm.parallelism = a.srsm.parallelism;
    *a == b
}

pub fn cmd_resume(root: &Path, opts: &RunOptions) -> Result<RunResult> {
    let dir = RunDir::open(root)?;
    let config = RunConfig::parse(&dir.config_text()?)?;
    if opts.seed.is_some_and(|s| s != config.srsm.seed) {
        bail!("--seed cannot change the seed of an existing run");
    }
    execute(&dir, &config, opts)
}

fn execute(dir: &RunDir, config: &RunConfig, opts: &RunOptions) -> Result<RunResult> {
    let _lock = dir.lock()?;
    let setup = config.build()?;
    let mut srsm_config = setup.srsm.clone();
    if let Some(p) = opts.parallelism {
        srsm_config.parallelism = p;
    }
    let srsm = Srsm::new(&setup.space, setup.evaluator.as_ref(), &setup.problem, srsm_config)?;
    let mut state = match dir.load_state()? {
        Some(s) => {
            if s.baseline.point.values != setup.baseline {
                bail!(
                    "{}: stored baseline does not match the configuration",
                    dir.root.display()
                );
            }
            info!("resuming {} after iteration {}", dir.root.display(), s.history.len());
            s
        }
        None => {
            let s = srsm.start(setup.baseline.clone())?;
            dir.save(&s, &setup.space)?;
            info!("baseline objective {:?}", s.baseline.objective());
            s
        }
    };
    if state.is_finished() {
        dir.write_results(&state, &setup.space)?;
        return Ok(RunResult::from_state(&state));
    }
    let result = srsm.run(&mut state, opts.stop_after, |s| {
        dir.save(s, &setup.space)?;
        if let Some(r) = s.history.last() {
            info!(
                "iteration {}: f = {:?}, best = {:?}, dp = {:?}, df = {:?}{}",
                r.k,
                r.verified.objective(),
                r.best_objective,
                r.termination.design_change,
                r.termination.objective_change,
                r.termination
                    .stop
                    .map_or(String::new(), |s| format!(", stop: {}", s.as_str()))
            );
        }
        Ok(())
    });
    if result.is_err() {
        dir.write_results(&state, &setup.space)?;
    }
    Ok(result?)
}

/// DOE weight calibration of a displacement objective; returns the
/// calibration and the derived config path.
pub fn cmd_doe(path: &Path, n: usize, out: Option<&Path>) -> Result<(Calibration, PathBuf)> {
    let config = read_config(path)?;
    let setup = config.build()?;
    let responses: Vec<&str> = config.objectives.iter().map(ObjectiveSpec::response).collect();
    if config.spine_targets.is_some()
        || !responses.contains(&D_SUBSIDENCE)
        || !responses.contains(&D_EXPULSION)
        || config
            .objectives
            .iter()
            .any(|o| !matches!(o, ObjectiveSpec::WeightedScalar { .. }))
    {
        bail!("doe needs weighted `{D_SUBSIDENCE}` and `{D_EXPULSION}` objective terms");
    }
    let seed = rng::substream_seed(config.srsm.seed, "doe", 0);
    let cal = calibrate_weights_doe(setup.evaluator.as_ref(), &setup.space, n, seed, &config.srsm.sampling)?;
    let weights: Vec<f64> = responses
        .iter()
        .map(|r| match *r {
            D_SUBSIDENCE => cal.w1,
            D_EXPULSION => cal.w2,
            _ => 0.0,
        })
        .collect();
    let derived = config.with_weights(&weights)?;
    let text = derived.to_json()?;
    RunConfig::from_json(&text)?;
    let out = out.map(Path::to_path_buf).unwrap_or_else(|| {
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("config");
        path.with_file_name(format!("{stem}.doe.json"))
    });
    fs::write(&out, text).with_context(|| format!("writing {}", out.display()))?;
    Ok((cal, out))
}

pub fn cmd_report(root: &Path) -> Result<Report> {
    Ok(Report::from_dir(&RunDir::open(root)?)?)
}

/// Sobol indices of every objective term on the final metamodels; writes
/// the per-objective table and the aggregate ranking.
pub fn cmd_sobol(
    root: &Path,
    n_base: usize,
    seed: Option<u64>,
    rule: Aggregation,
) -> Result<(Vec<SobolResult>, Vec<(String, f64)>)> {
    let dir = RunDir::open(root)?;
    let config = RunConfig::parse(&dir.config_text()?)?;
    let setup = config.build()?;
    let state = dir
        .load_state()?
        .ok_or_else(|| anyhow!("{} holds no run state", root.display()))?;
    let srsm = Srsm::new(
        &setup.space,
        setup.evaluator.as_ref(),
        &setup.problem,
        setup.srsm.clone(),
    )?;
    let (models, region) = srsm
        .final_models(&state)?
        .ok_or_else(|| anyhow!("{} has no completed iteration", root.display()))?;
    let seed = seed.unwrap_or_else(|| rng::substream_seed(config.srsm.seed, "sobol", 0));
    let (results, weights) = sobol_on_models(&setup.space, &region, &models, &setup.problem, n_base, seed)?;
    let ranking = aggregate_ranking(&results, &weights, rule)?;
    fs::write(dir.results(SENSITIVITY_FILE), format_sensitivity_csv(&results)?)?;
    fs::write(dir.results(RANKING_FILE), format_ranking_csv(&ranking)?)?;
    Ok((results, ranking))
}

pub fn summary(result: &RunResult) -> String {
    let f = |v: Option<f64>| v.map_or_else(|| "n/a".to_owned(), |v| format!("{v:.6}"));
    format!(
        "iterations {} | termination {} | baseline {} | best {} | {}",
        result.iterations,
        result.termination.map_or("not finished", |s| s.as_str()),
        f(result.baseline_objective),
        f(result.best_objective),
        result
            .improvement_percent
            .map_or_else(|| "improvement n/a".to_owned(), srsm_core::report::format_improvement)
    )
}
