use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};

use crate::config::{Algo, DatasetSpec, ExperimentConfig};
use crate::dataset::{self, Splits};
use crate::learner::run_one;

/// One `bench.csv` row: median seconds and mean test error over the seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub size_or_budget: usize,
    pub algo: Algo,
    pub seconds: f64,
    pub test_error: f64,
}

#[derive(Debug)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    /// `(size_or_budget, bmal_seconds / upal_seconds)` when both were timed.
    pub speedup: Vec<(usize, f64)>,
    pub table: PathBuf,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let m = v.len() / 2;
    if v.len().is_multiple_of(2) {
        0.5 * (v[m - 1] + v[m])
    } else {
        v[m]
    }
}

/// Times each algorithm across a size sweep (fixed budget) or a budget
/// sweep (full train set). Cells run one after another so the timings do
/// not compete for cores.
pub fn cmd_bench(cfg: &ExperimentConfig) -> Result<BenchReport> {
    let sweep_cfg = &cfg.bench;
    let by_size = match (sweep_cfg.sizes.is_empty(), sweep_cfg.budgets.is_empty()) {
        (false, true) => true,
        (true, false) => false,
        _ => bail!(crate::config::ConfigError(
            "bench: set exactly one of bench.sizes and bench.budgets".into()
        )),
    };
    let sweep = if by_size { &sweep_cfg.sizes } else { &sweep_cfg.budgets };
    // synthetic size sweeps draw a fresh pool of each size
    let full = if by_size && matches!(cfg.dataset, DatasetSpec::Synthetic { .. }) {
        None
    } else {
        Some(dataset::load(&cfg.dataset)?)
    };

    let mut rows = Vec::new();
    for &v in sweep {
        let (budget, splits) = if by_size {
            let s = match &full {
                Some(f) => f.truncated(v)?,
                None => dataset::synthetic(&cfg.dataset, Some(v))?,
            };
            (cfg.budget, s)
        } else {
            (v, full.clone().expect("loaded above"))
        };
        rows.extend(bench_cell(cfg, v, budget, &splits)?);
    }

    let mut speedup = Vec::new();
    for &v in sweep {
        let secs = |a: Algo| rows.iter().find(|r| r.size_or_budget == v && r.algo == a).map(|r| r.seconds);
        if let (Some(u), Some(b)) = (secs(Algo::Upal), secs(Algo::Bmal)) {
            speedup.push((v, b / u));
        }
    }

    fs::create_dir_all(&cfg.output).with_context(|| format!("creating {}", cfg.output.display()))?;
    let mut text = String::from("size_or_budget,algo,seconds,test_error\n");
    for r in &rows {
        writeln!(text, "{},{},{},{}", r.size_or_budget, r.algo, r.seconds, r.test_error).unwrap();
    }
    let table = cfg.output.join("bench.csv");
    fs::write(&table, text).with_context(|| format!("writing {}", table.display()))?;
    if !speedup.is_empty() {
        let mut text = String::from("size_or_budget,speedup\n");
        for (v, s) in &speedup {
            writeln!(text, "{v},{s}").unwrap();
        }
        let path = cfg.output.join("speedup.csv");
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(BenchReport { rows, speedup, table })
}

fn bench_cell(cfg: &ExperimentConfig, v: usize, budget: usize, splits: &Splits) -> Result<Vec<BenchRow>> {
    if budget > splits.train.len() {
        bail!(crate::config::ConfigError(format!(
            "bench: budget {budget} exceeds the {} train points",
            splits.train.len()
        )));
    }
    let grid = [budget];
    let mut rows = Vec::new();
    for &algo in &cfg.bench.algos {
        let mut secs = Vec::new();
        let mut errs = Vec::new();
        for &seed in &cfg.seeds {
            let r = run_one(cfg, algo, seed, budget, &grid, &splits.train, &splits.test)
                .with_context(|| format!("{algo} at {v}, seed {seed}"))?;
            secs.push(r.seconds);
            errs.push(r.final_error);
        }
        rows.push(BenchRow {
            size_or_budget: v,
            algo,
            seconds: median(secs),
            test_error: errs.iter().sum::<f64>() / errs.len() as f64,
        });
    }
    Ok(rows)
}
