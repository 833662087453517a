use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{Algo, ExperimentConfig};
use crate::dataset;
use crate::learner::{run_one, RunResult};

#[derive(Debug, Serialize)]
struct Stat {
    mean: f64,
    sd: f64,
}

fn stat(v: &[f64]) -> Stat {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let sd = if v.len() > 1 {
        (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Stat { mean, sd }
}

#[derive(Debug, Serialize)]
struct GridStat {
    queries: usize,
    mean: f64,
    sd: f64,
    seeds: usize,
}

#[derive(Debug, Serialize)]
struct SeedSummary {
    seed: u64,
    final_error: f64,
    oracle_calls: usize,
    rounds: usize,
    capped: bool,
}

#[derive(Debug, Serialize)]
struct AlgoSummary {
    curve: Vec<GridStat>,
    final_error: Stat,
    runs: Vec<SeedSummary>,
}

#[derive(Debug, Serialize)]
struct Summary {
    config_hash: String,
    train_size: usize,
    test_size: usize,
    dim: usize,
    budget: usize,
    grid: Vec<usize>,
    algos: BTreeMap<String, AlgoSummary>,
}

#[derive(Debug, Serialize)]
struct Timing {
    seed: u64,
    seconds: f64,
}

#[derive(Debug, Serialize)]
struct AlgoTimings {
    runs: Vec<Timing>,
    seconds: Stat,
}

#[derive(Debug, Serialize)]
struct Timings {
    config_hash: String,
    algos: BTreeMap<String, AlgoTimings>,
}

/// Files written by `run`.
#[derive(Debug)]
pub struct RunReport {
    pub curves: Vec<PathBuf>,
    pub summary: PathBuf,
    pub timings: PathBuf,
    /// Mean final test error per algorithm.
    pub final_errors: BTreeMap<Algo, f64>,
    /// Runs stopped by the round cap.
    pub capped: usize,
}

pub fn curve_file_name(algo: Algo, seed: u64) -> String {
    format!("curve_{algo}_{seed}.csv")
}

pub fn cmd_run(cfg: &ExperimentConfig) -> Result<RunReport> {
    let splits = dataset::load(&cfg.dataset)?;
    let hash = cfg.hash();
    let mut grid = cfg.grid();
    grid.sort_unstable();
    grid.dedup();

    let cells: Vec<(Algo, u64)> = cfg
        .algo
        .iter()
        .flat_map(|&a| cfg.seeds.iter().map(move |&s| (a, s)))
        .collect();
    let results: Vec<RunResult> = cells
        .par_iter()
        .map(|&(algo, seed)| {
            run_one(cfg, algo, seed, cfg.budget, &grid, &splits.train, &splits.test)
                .with_context(|| format!("{algo} seed {seed}"))
        })
        .collect::<Result<_>>()?;

    fs::create_dir_all(&cfg.output).with_context(|| format!("creating {}", cfg.output.display()))?;
    let mut curves = Vec::new();
    for r in &results {
        let path = cfg.output.join(curve_file_name(r.algo, r.seed));
        write_curve(&path, &hash, r)?;
        curves.push(path);
    }

    let mut algos = BTreeMap::new();
    let mut timings = BTreeMap::new();
    let mut final_errors = BTreeMap::new();
    for &algo in &cfg.algo {
        let runs: Vec<&RunResult> = results.iter().filter(|r| r.algo == algo).collect();
        let curve = grid
            .iter()
            .filter_map(|&q| {
                let errs: Vec<f64> = runs
                    .iter()
                    .filter_map(|r| r.curve.iter().find(|p| p.0 == q).map(|p| p.1))
                    .collect();
                (!errs.is_empty()).then(|| {
                    let s = stat(&errs);
                    GridStat { queries: q, mean: s.mean, sd: s.sd, seeds: errs.len() }
                })
            })
            .collect();
        let finals: Vec<f64> = runs.iter().map(|r| r.final_error).collect();
        let final_error = stat(&finals);
        final_errors.insert(algo, final_error.mean);
        algos.insert(
            algo.to_string(),
            AlgoSummary {
                curve,
                final_error,
                runs: runs
                    .iter()
                    .map(|r| SeedSummary {
                        seed: r.seed,
                        final_error: r.final_error,
                        oracle_calls: r.oracle_calls,
                        rounds: r.rounds,
                        capped: r.capped,
                    })
                    .collect(),
            },
        );
        let secs: Vec<f64> = runs.iter().map(|r| r.seconds).collect();
        timings.insert(
            algo.to_string(),
            AlgoTimings {
                runs: runs.iter().map(|r| Timing { seed: r.seed, seconds: r.seconds }).collect(),
                seconds: stat(&secs),
            },
        );
    }

    let summary = Summary {
        config_hash: hash.clone(),
        train_size: splits.train.len(),
        test_size: splits.test.len(),
        dim: splits.train.dim(),
        budget: cfg.budget,
        grid,
        algos,
    };
    let summary_path = cfg.output.join("summary.json");
    write_json(&summary_path, &summary)?;
    let timings_path = cfg.output.join("timings.json");
    write_json(&timings_path, &Timings { config_hash: hash, algos: timings })?;

    Ok(RunReport {
        curves,
        summary: summary_path,
        timings: timings_path,
        final_errors,
        capped: results.iter().filter(|r| r.capped).count(),
    })
}

fn write_curve(path: &Path, hash: &str, r: &RunResult) -> Result<()> {
    let mut text = format!("# config_hash={hash} seed={} algo={}\nqueries,test_error\n", r.seed, r.algo);
    for (q, e) in &r.curve {
        writeln!(text, "{q},{e}").unwrap();
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}
