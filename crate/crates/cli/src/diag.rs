use std::path::PathBuf;

use anyhow::{Context, Result};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use upal_core::data::{synth_pool, LabelMode, SyntheticModel, XLaw};
use upal_core::theory::{
    ewa_check, risk_decomposition_terms, sample_thresholds, tail_bound_suite, unbiasedness_check_with,
    DiagnosticsReport, Estimator, QuerySampler, TailSuiteConfig, Thresholds, UnbiasednessSetup,
};
use upal_core::{run_upal, Hypothesis, LossSpec, StopRule, UpalConfig};

use crate::config::ExperimentConfig;
use crate::run::write_json;

#[derive(Debug, Clone, Serialize)]
pub struct DiagRecord {
    pub name: String,
    pub statistic: f64,
    pub threshold: f64,
    pub pass: bool,
    /// Informational records never fail the command.
    pub hard: bool,
}

impl DiagRecord {
    fn hard(r: upal_core::theory::CheckRecord) -> Self {
        Self {
            name: r.name,
            statistic: r.statistic,
            threshold: r.threshold,
            pass: r.pass,
            hard: true,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct DiagOutput {
    pub config_hash: String,
    pub negative_control: bool,
    pub records: Vec<DiagRecord>,
    pub decomposition: DiagnosticsReport,
    pub thresholds: Thresholds,
    pub thresholds_note: &'static str,
}

impl DiagOutput {
    pub fn failures(&self) -> Vec<&str> {
        self.records
            .iter()
            .filter(|r| r.hard && !r.pass)
            .map(|r| r.name.as_str())
            .collect()
    }
}

/// Runs every check on a synthetic regression pool and writes `diag.json`.
/// With `negative_control` the unbiasedness check uses the unweighted
/// estimator and is expected to fail.
pub fn cmd_diag(cfg: &ExperimentConfig, negative_control: bool) -> Result<(DiagOutput, PathBuf)> {
    let dc = &cfg.diag;
    let d = dc.dim;
    let beta = Hypothesis::new(DVector::from_fn(d, |i, _| {
        let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
        sign * (1.0 + 0.3 * i as f64)
    }))?;
    let model = SyntheticModel::isotropic(beta.clone(), XLaw::BoundedUniformCube, dc.noise, LabelMode::Regression)?;
    let draw = synth_pool(&model, dc.n, dc.seed)?;
    let loss = LossSpec::squared();
    let mut records = Vec::new();

    let h = Hypothesis::new(beta.weights() * 0.5)?;
    let setup = UnbiasednessSetup {
        rounds: dc.unbiasedness_rounds,
        replicates: dc.replicates,
        seed: dc.seed,
        sampler: QuerySampler::Engine(cfg.pmin),
        estimator: if negative_control {
            Estimator::Unweighted
        } else {
            Estimator::ImportanceWeighted
        },
    };
    let unb = unbiasedness_check_with(&draw.pool, &h, &loss, &setup).context("unbiasedness")?;
    records.push(DiagRecord::hard(unb.record("unbiasedness")));

    let mut uc = UpalConfig::new(dc.n, loss, dc.seed);
    uc.pmin = cfg.pmin;
    uc.stop = StopRule::Rounds(dc.rounds);
    let history = run_upal(&draw.pool, &uc)?.history;

    let mut rng = ChaCha8Rng::seed_from_u64(dc.seed);
    let (mut worst, mut all) = (0.0f64, true);
    for k in 0..dc.ewa_points {
        let x0 = DVector::from_fn(d, |_, _| rng.random_range(-3.0..3.0));
        let r = ewa_check(&draw.pool, &history, &x0, dc.ewa_samples, dc.seed + k as u64).context("ewa")?;
        all &= r.pass;
        worst = worst.max((r.ewa_estimate - r.closed).abs() / r.se.max(f64::MIN_POSITIVE));
    }
    records.push(DiagRecord {
        name: "ewa_equivalence".into(),
        statistic: worst,
        threshold: 5.0,
        pass: all,
        hard: true,
    });

    let decomposition = risk_decomposition_terms(&draw.pool, &history, &draw.params, &draw.xi)?;
    let ratio = match (decomposition.excess, decomposition.product()) {
        (Some(e), Some(p)) if p > 0.0 => e / p,
        _ => f64::NAN,
    };
    records.push(DiagRecord {
        name: "decomposition".into(),
        statistic: ratio,
        threshold: 1.0,
        pass: decomposition.bound_holds == Some(true),
        hard: true,
    });

    let p = &draw.params;
    let thresholds = sample_thresholds(d, p.gamma0, p.gamma1, dc.delta, dc.n, &p.sigma)?;
    records.push(DiagRecord {
        name: "sample_size_n0".into(),
        statistic: dc.n as f64,
        threshold: thresholds.n0,
        pass: dc.n as f64 >= thresholds.n0,
        hard: false,
    });

    let tails = tail_bound_suite(&TailSuiteConfig {
        trials: dc.tail_trials,
        delta: dc.tail_delta,
        seed: dc.seed,
        ..TailSuiteConfig::default()
    })?;
    records.extend(tails.records.into_iter().map(DiagRecord::hard));

    let out = DiagOutput {
        config_hash: cfg.hash(),
        negative_control,
        records,
        decomposition,
        thresholds,
        thresholds_note: Thresholds::T0_NOTE,
    };
    std::fs::create_dir_all(&cfg.output).with_context(|| format!("creating {}", cfg.output.display()))?;
    let path = cfg.output.join("diag.json");
    write_json(&path, &out)?;
    Ok((out, path))
}
