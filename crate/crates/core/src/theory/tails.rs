use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use rayon::prelude::*;
use serde::Serialize;

use super::{stream_seed, CheckRecord};
use crate::data::{synth_pool, LabelMode, SyntheticModel, XLaw};
use crate::error::{Result, UpalError};
use crate::linalg::{eigen_extremes, sym_pow};
use crate::losses::LossSpec;
use crate::pool::{Hypothesis, LabeledPool};
use crate::upal::{pmin_schedule, StopRule, UpalConfig, UpalRun};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailSuiteConfig {
    pub trials: usize,
    pub delta: f64,
    pub seed: u64,
    /// Dimension of the sampled vectors.
    pub dim: usize,
    /// Number of summands in the rank-1 and Bernstein checks.
    pub sample_size: usize,
    pub law: XLaw,
    /// Pool size and round count for the engine-driven checks.
    pub engine_pool: usize,
    pub engine_rounds: usize,
}

impl Default for TailSuiteConfig {
    fn default() -> Self {
        Self {
            trials: 10_000,
            delta: 0.05,
            seed: 0,
            dim: 4,
            sample_size: 200,
            law: XLaw::Gaussian,
            engine_pool: 12,
            engine_rounds: 40,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailReport {
    pub records: Vec<CheckRecord>,
}

impl TailReport {
    pub fn pass(&self) -> bool {
        self.records.iter().all(|r| r.pass)
    }
}

/// Largest violation frequency consistent with a level-`delta` bound over
/// `trials` independent draws.
pub fn allowed_violation_rate(delta: f64, trials: usize) -> f64 {
    delta + 3.0 * (delta * (1.0 - delta) / trials as f64).sqrt()
}

#[derive(Debug, Clone, Copy, Default)]
struct Violations {
    quadratic: usize,
    rank_one: usize,
    bernstein_sphere: usize,
    bernstein_engine: usize,
    martingale: usize,
    hoeffding: usize,
    weyl: usize,
}

impl Violations {
    fn add(mut self, o: Self) -> Self {
        self.quadratic += o.quadratic;
        self.rank_one += o.rank_one;
        self.bernstein_sphere += o.bernstein_sphere;
        self.bernstein_engine += o.bernstein_engine;
        self.martingale += o.martingale;
        self.hoeffding += o.hoeffding;
        self.weyl += o.weyl;
        self
    }
}

/// Fixed inputs shared by every trial.
struct Fixture {
    a: DMatrix<f64>,
    quadratic_threshold: f64,
    rank_one_eps: f64,
    sphere_threshold: f64,
    pool: LabeledPool,
    xi: Vec<f64>,
    whitened: Vec<DVector<f64>>,
    j: DMatrix<f64>,
    alpha: Vec<f64>,
}

/// Runs every bound `trials` times and reports empirical violation rates.
pub fn tail_bound_suite(config: &TailSuiteConfig) -> Result<TailReport> {
    if config.trials == 0 || config.dim == 0 || config.sample_size == 0 {
        return Err(UpalError::InvalidConfig("tail suite needs trials, dim and sample_size >= 1".into()));
    }
    if !(config.delta > 0.0 && config.delta < 1.0) {
        return Err(UpalError::InvalidConfig(format!("delta must lie in (0, 1), got {}", config.delta)));
    }
    if config.engine_pool < 2 || config.engine_rounds == 0 {
        return Err(UpalError::InvalidConfig("engine checks need a pool of >= 2 points and >= 1 round".into()));
    }
    let fx = fixture(config)?;
    let counts = (0..config.trials)
        .into_par_iter()
        .map(|k| trial(config, &fx, stream_seed(config.seed, k as u64)))
        .try_reduce(Violations::default, |a, b| Ok(a.add(b)))?;

    let allowed = allowed_violation_rate(config.delta, config.trials);
    let m = config.trials as f64;
    let rate = |c: usize| c as f64 / m;
    let prob = |name: &str, c: usize| CheckRecord::new(name, rate(c), allowed, rate(c) <= allowed);
    let exact = |name: &str, c: usize| CheckRecord::new(name, rate(c), 0.0, c == 0);
    Ok(TailReport {
        records: vec![
            prob("quadratic_form", counts.quadratic),
            prob("rank_one_eigenvalues", counts.rank_one),
            prob("matrix_bernstein_sphere", counts.bernstein_sphere),
            prob("matrix_bernstein_engine", counts.bernstein_engine),
            prob("martingale_engine", counts.martingale),
            exact("hoeffding_lemma", counts.hoeffding),
            exact("weyl", counts.weyl),
        ],
    })
}

fn fixture(config: &TailSuiteConfig) -> Result<Fixture> {
    let d = config.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(config.seed, u64::MAX));
    let var_proxy = match config.law {
        XLaw::Gaussian => 1.0,
        // Hoeffding on [-sqrt 3, sqrt 3]
        XLaw::BoundedUniformCube => 3.0,
    };
    let l = (1.0 / config.delta).ln();

    let a = DMatrix::from_fn(d, d, |_, _| StandardNormal.sample(&mut rng));
    let hm = &a * a.transpose();
    let (_, h_norm) = eigen_extremes(&hm);
    let quadratic_threshold = var_proxy * (hm.trace() + 2.0 * ((&hm * &hm).trace() * l).sqrt() + 2.0 * h_norm * l);

    let n = config.sample_size as f64;
    let df = d as f64;
    let c = df * 5f64.ln() + (2.0 / config.delta).ln();
    let rank_one_eps = var_proxy * ((32.0 * c / n).sqrt() + 2.0 * c / n);

    // X_i = d u u^T - I, u uniform on the sphere: b = d - 1, sigma^2 = d - 1
    let ld = (df / config.delta).ln();
    let sphere_threshold = (2.0 * (df - 1.0) * ld / n).sqrt() + (df - 1.0) * ld / (3.0 * n);

    let sigma = DMatrix::from_fn(d, d, |i, j| if i == j { 1.0 + 0.5 * i as f64 } else { 0.0 });
    let beta = Hypothesis::new(DVector::from_fn(d, |i, _| if i % 2 == 0 { 1.0 } else { -0.5 }))?;
    let model = SyntheticModel::new(beta, sigma.clone(), XLaw::BoundedUniformCube, 2.0, LabelMode::Regression)?;
    let draw = synth_pool(&model, config.engine_pool, stream_seed(config.seed, u64::MAX - 1))?;
    let whiten = sym_pow(&sigma, -0.5)?;
    let whitened: Vec<DVector<f64>> = (0..draw.pool.len()).map(|i| &whiten * draw.pool.point(i)).collect();
    let mut j = DMatrix::zeros(d, d);
    for w in &whitened {
        j.ger(1.0, w, w, 1.0);
    }
    let mut alpha: Vec<f64> = (0..draw.pool.len()).map(|_| StandardNormal.sample(&mut rng)).collect();
    let norm = alpha.iter().map(|v| v * v).sum::<f64>().sqrt();
    alpha.iter_mut().for_each(|v| *v /= norm);

    Ok(Fixture {
        a,
        quadratic_threshold,
        rank_one_eps,
        sphere_threshold,
        pool: draw.pool,
        xi: draw.xi,
        whitened,
        j,
        alpha,
    })
}

fn sample_vector(law: XLaw, d: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
    match law {
        XLaw::Gaussian => DVector::from_fn(d, |_, _| StandardNormal.sample(rng)),
        XLaw::BoundedUniformCube => {
            let s3 = 3f64.sqrt();
            let u = Uniform::new_inclusive(-s3, s3).expect("valid range");
            DVector::from_fn(d, |_, _| u.sample(rng))
        }
    }
}

fn trial(config: &TailSuiteConfig, fx: &Fixture, seed: u64) -> Result<Violations> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = config.dim;
    let n = config.sample_size;
    let mut v = Violations::default();

    let r = sample_vector(config.law, d, &mut rng);
    if (&fx.a * r).norm_squared() > fx.quadratic_threshold {
        v.quadratic = 1;
    }

    let mut gram = DMatrix::zeros(d, d);
    for _ in 0..n {
        let r = sample_vector(config.law, d, &mut rng);
        gram.ger(1.0, &r, &r, 1.0);
    }
    let (lo, hi) = eigen_extremes(&(gram / n as f64));
    if hi > 1.0 + 2.0 * fx.rank_one_eps || lo < 1.0 - 2.0 * fx.rank_one_eps {
        v.rank_one = 1;
    }

    let mut sum = DMatrix::zeros(d, d);
    for _ in 0..n {
        let g = DVector::<f64>::from_fn(d, |_, _| StandardNormal.sample(&mut rng));
        let u = &g / g.norm();
        sum.ger(d as f64, &u, &u, 1.0);
    }
    sum -= DMatrix::identity(d, d) * n as f64;
    if eigen_extremes(&(sum / n as f64)).1 > fx.sphere_threshold {
        v.bernstein_sphere = 1;
    }

    let (bern, mart) = engine_trial(config, fx, seed)?;
    v.bernstein_engine = bern as usize;
    v.martingale = mart as usize;
    v.hoeffding = !hoeffding_holds(&mut rng) as usize;
    v.weyl = !weyl_holds(d, &mut rng) as usize;
    Ok(v)
}

/// One engine run; returns whether the matrix Bernstein bound on
/// `R_t = J - M_t` and the martingale bound on `D_t` were violated.
fn engine_trial(config: &TailSuiteConfig, fx: &Fixture, seed: u64) -> Result<(bool, bool)> {
    let n = fx.pool.len();
    let d = fx.pool.dim();
    let t_max = config.engine_rounds;
    let mut cfg = UpalConfig::new(n, LossSpec::squared(), seed);
    cfg.stop = StopRule::Rounds(t_max);
    let mut run = UpalRun::new(&fx.pool, cfg.clone())?;
    while !run.finished() {
        if run.step()?.is_none() {
            break;
        }
    }
    let out = run.finish();
    let rounds = out.history.rounds();
    let t = rounds.len() as f64;

    let mut mz = DMatrix::zeros(d, d);
    for (i, &z) in out.history.z().iter().enumerate() {
        if z > 0.0 {
            mz.ger(z, &fx.whitened[i], &fx.whitened[i], 1.0);
        }
    }
    let centered = &fx.j - mz / t;
    let b = eigen_extremes(&fx.j).1;
    let fourth: f64 = fx.whitened.iter().map(|w| w.norm_squared().powi(2)).sum();
    let inv_pmin: f64 = rounds
        .iter()
        .map(|r| 1.0 / pmin_schedule(n, r.round, cfg.pmin))
        .sum();
    let var = fourth * inv_pmin / t;
    let ld = (d as f64 / config.delta).ln();
    let bern_threshold = (2.0 * var * ld / t).sqrt() + b * ld / (3.0 * t);
    let bern = eigen_extremes(&centered).1 > bern_threshold;

    let anorm = fx.alpha.iter().map(|a| a * a).sum::<f64>().sqrt();
    let bound = fx.xi.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let mean_term: f64 = fx.alpha.iter().zip(&fx.xi).map(|(a, x)| a * x).sum();
    let mut total = 0.0;
    let mut c_sum = 0.0;
    for r in rounds {
        total += fx.alpha[r.index] * fx.xi[r.index] / r.prob - mean_term;
        let pmin = pmin_schedule(n, r.round, cfg.pmin);
        // D_t has range 2 * bound * |alpha| / pmin, so Hoeffding gives
        // P[D_t >= a] <= exp(-2 a^2 / range^2)
        let range = 2.0 * bound.max(f64::MIN_POSITIVE) * anorm / pmin;
        c_sum += 2.0 / (range * range);
    }
    let mart_threshold = (28.0 * (1.0 / config.delta).ln() / c_sum).sqrt();
    let mart = total / t > mart_threshold;
    Ok((bern, mart))
}

/// Hoeffding's lemma on a random discrete law and a random `s`, computed
/// exactly.
fn hoeffding_holds(rng: &mut ChaCha8Rng) -> bool {
    let lo: f64 = rng.random_range(-3.0..0.0);
    let hi: f64 = lo + rng.random_range(0.1..4.0);
    let k = rng.random_range(2..=6);
    let atoms: Vec<f64> = (0..k).map(|_| rng.random_range(lo..=hi)).collect();
    let mut probs: Vec<f64> = (0..k).map(|_| rng.random_range(0.01..1.0)).collect();
    let total: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= total);
    let s: f64 = rng.random_range(-3.0..3.0);
    let mean: f64 = atoms.iter().zip(&probs).map(|(a, p)| a * p).sum();
    let mgf: f64 = atoms.iter().zip(&probs).map(|(a, p)| p * (s * a).exp()).sum();
    let bound = (s * mean + s * s * (hi - lo).powi(2) / 8.0).exp();
    mgf <= bound * (1.0 + 1e-12)
}

/// Both Weyl inequalities on a random pair of PSD matrices (possibly
/// rank-deficient).
fn weyl_holds(d: usize, rng: &mut ChaCha8Rng) -> bool {
    let psd = |rng: &mut ChaCha8Rng| {
        let k = rng.random_range(1..=d);
        let g = DMatrix::<f64>::from_fn(d, k, |_, _| StandardNormal.sample(rng));
        &g * g.transpose()
    };
    let a = psd(rng);
    let b = psd(rng);
    let (_, amax) = eigen_extremes(&a);
    let (bmin, bmax) = eigen_extremes(&b);
    let (_, smax) = eigen_extremes(&(&a + &b));
    let tol = 1e-10 * (amax + bmax).max(1.0);
    amax + bmin <= smax + tol && smax <= amax + bmax + tol
}
