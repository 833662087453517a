use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize};
use sha2::{Digest, Sha256};
use upal_core::data::LabelRule;
use upal_core::{LossKind, PminVariant};

/// Which learner a run drives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algo {
    Upal,
    Pl,
    Ral,
    Bmal,
}

impl Algo {
    pub fn name(self) -> &'static str {
        match self {
            Self::Upal => "upal",
            Self::Pl => "pl",
            Self::Ral => "ral",
            Self::Bmal => "bmal",
        }
    }
}

impl fmt::Display for Algo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Where the train and test pools come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind", deny_unknown_fields)]
pub enum DatasetSpec {
    /// Isotropic cube points, alternating-sign `beta`, labels `sign(beta.x + xi)`.
    Synthetic {
        #[serde(default = "default_dim")]
        dim: usize,
        #[serde(default = "default_noise")]
        noise: f64,
        #[serde(default = "default_train_n")]
        n: usize,
        #[serde(default = "default_test_n")]
        test_n: usize,
        #[serde(default)]
        seed: u64,
    },
    Csv {
        path: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        test_path: Option<PathBuf>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        label_column: Option<usize>,
        #[serde(default)]
        labels: LabelRule,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        has_header: Option<bool>,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        skip_columns: Vec<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        delimiter: Option<char>,
        /// Held-out share when no `test_path` is given.
        #[serde(default = "default_test_fraction")]
        test_fraction: f64,
        #[serde(default)]
        split_seed: u64,
        /// Project onto this many principal directions fitted on the train part.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        pca: Option<usize>,
        /// Keep only the first rows of the train part.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        max_points: Option<usize>,
    },
    Libsvm {
        path: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        test_path: Option<PathBuf>,
        /// Feature count; inferred from the largest index when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        dim: Option<usize>,
        #[serde(default)]
        labels: LabelRule,
        /// Held-out share when no `test_path` is given.
        #[serde(default = "default_test_fraction")]
        test_fraction: f64,
        #[serde(default)]
        split_seed: u64,
        /// Project onto this many principal directions fitted on the train part.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        pca: Option<usize>,
        /// Keep only the first rows of the train part.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        max_points: Option<usize>,
    },
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self::Synthetic {
            dim: default_dim(),
            noise: default_noise(),
            n: default_train_n(),
            test_n: default_test_n(),
            seed: 0,
        }
    }
}

/// Preprocessing shared by the file formats.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prep {
    pub test_fraction: f64,
    pub split_seed: u64,
    pub pca: Option<usize>,
    pub max_points: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchSpec {
    /// Train-set sizes at the fixed `budget`.
    #[serde(default)]
    pub sizes: Vec<usize>,
    /// Budgets on the full train set.
    #[serde(default)]
    pub budgets: Vec<usize>,
    #[serde(default = "default_bench_algos", deserialize_with = "one_or_many")]
    pub algos: Vec<Algo>,
}

impl Default for BenchSpec {
    fn default() -> Self {
        Self {
            sizes: Vec::new(),
            budgets: Vec::new(),
            algos: default_bench_algos(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagSpec {
    pub dim: usize,
    pub n: usize,
    pub noise: f64,
    /// Rounds of the history used by the EWA and decomposition checks.
    pub rounds: usize,
    pub unbiasedness_rounds: usize,
    pub replicates: usize,
    pub ewa_points: usize,
    pub ewa_samples: usize,
    pub tail_trials: usize,
    pub tail_delta: f64,
    pub delta: f64,
    pub seed: u64,
}

impl Default for DiagSpec {
    fn default() -> Self {
        Self {
            dim: 3,
            n: 40,
            noise: 2.0,
            rounds: 60,
            unbiasedness_rounds: 5,
            replicates: 20_000,
            ewa_points: 3,
            ewa_samples: 200_000,
            tail_trials: 10_000,
            tail_delta: 0.05,
            delta: 0.1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_algos", deserialize_with = "one_or_many")]
    pub algo: Vec<Algo>,
    #[serde(default = "default_loss")]
    pub loss: LossKind,
    #[serde(default = "default_budget")]
    pub budget: usize,
    #[serde(default = "default_pmin")]
    pub pmin: PminVariant,
    #[serde(default = "default_lambda0")]
    pub lambda0: f64,
    /// BMAL candidate subsample size.
    #[serde(default = "default_subsample")]
    pub subsample: usize,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Query counts at which test error is recorded; defaults to every 10 up to `budget`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<Vec<usize>>,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default)]
    pub dataset: DatasetSpec,
    #[serde(default)]
    pub bench: BenchSpec,
    #[serde(default)]
    pub diag: DiagSpec,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            algo: default_algos(),
            loss: default_loss(),
            budget: default_budget(),
            pmin: default_pmin(),
            lambda0: default_lambda0(),
            subsample: default_subsample(),
            seeds: default_seeds(),
            grid: None,
            output: default_output(),
            dataset: DatasetSpec::default(),
            bench: BenchSpec::default(),
            diag: DiagSpec::default(),
        }
    }
}

fn default_dim() -> usize {
    5
}
fn default_noise() -> f64 {
    0.3
}
fn default_train_n() -> usize {
    1000
}
fn default_test_n() -> usize {
    5000
}
fn default_test_fraction() -> f64 {
    0.3
}
fn default_algos() -> Vec<Algo> {
    vec![Algo::Upal, Algo::Pl, Algo::Ral, Algo::Bmal]
}
fn default_bench_algos() -> Vec<Algo> {
    vec![Algo::Upal, Algo::Bmal]
}
fn default_loss() -> LossKind {
    LossKind::Logistic
}
fn default_budget() -> usize {
    100
}
fn default_pmin() -> PminVariant {
    PminVariant::Linear
}
fn default_lambda0() -> f64 {
    1e-3
}
fn default_subsample() -> usize {
    300
}
fn default_seeds() -> Vec<u64> {
    (0..5).collect()
}
fn default_output() -> PathBuf {
    PathBuf::from("results")
}

/// Accepts `algo = "upal"` as well as `algo = ["upal", "ral"]`.
fn one_or_many<'de, D: Deserializer<'de>>(de: D) -> Result<Vec<Algo>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany {
        One(Algo),
        Many(Vec<Algo>),
    }
    match OneOrMany::deserialize(de) {
        Ok(OneOrMany::One(a)) => Ok(vec![a]),
        Ok(OneOrMany::Many(v)) => Ok(v),
        Err(_) => Err(serde::de::Error::custom(
            "expected an algorithm name or a list of them (upal, pl, ral, bmal)",
        )),
    }
}

/// A config problem, reported with the offending key path.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn bad(key: &str, msg: impl fmt::Display) -> ConfigError {
    ConfigError(format!("{key}: {msg}"))
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ConfigError(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; relative dataset paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        if let Some(dir) = path.parent() {
            cfg.dataset.resolve_paths(dir);
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn grid(&self) -> Vec<usize> {
        match &self.grid {
            Some(g) => g.clone(),
            None => {
                let mut g: Vec<usize> = (1..=self.budget / 10).map(|k| 10 * k).collect();
                if g.last() != Some(&self.budget) {
                    g.push(self.budget);
                }
                g
            }
        }
    }

    /// First 16 hex digits of the SHA-256 of the canonical JSON form,
    /// output directory excluded.
    pub fn hash(&self) -> String {
        let mut canon = self.clone();
        canon.output = PathBuf::new();
        let json = serde_json::to_string(&canon).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))[..16].to_string()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.algo.is_empty() {
            return Err(bad("algo", "at least one algorithm is required"));
        }
        if self.budget == 0 {
            return Err(bad("budget", "must be at least 1"));
        }
        if self.seeds.is_empty() {
            return Err(bad("seeds", "at least one seed is required"));
        }
        let mut seen = std::collections::HashSet::new();
        for (k, s) in self.seeds.iter().enumerate() {
            if !seen.insert(s) {
                return Err(bad(&format!("seeds[{k}]"), format!("seed {s} is listed twice")));
            }
        }
        if !(self.lambda0 >= 0.0 && self.lambda0.is_finite()) {
            return Err(bad("lambda0", format!("must be finite and >= 0, got {}", self.lambda0)));
        }
        if self.subsample == 0 {
            return Err(bad("subsample", "must be at least 1"));
        }
        if let Some(grid) = &self.grid {
            if grid.is_empty() {
                return Err(bad("grid", "must not be empty"));
            }
            for (k, &q) in grid.iter().enumerate() {
                if q == 0 || q > self.budget {
                    return Err(bad(&format!("grid[{k}]"), format!("{q} must lie in 1..={}", self.budget)));
                }
            }
        }
        match &self.dataset {
            DatasetSpec::Synthetic { dim, noise, n, test_n, .. } => {
                if *dim == 0 {
                    return Err(bad("dataset.dim", "must be at least 1"));
                }
                if !(0.0..=2.0).contains(noise) {
                    return Err(bad("dataset.noise", format!("must lie in [0, 2], got {noise}")));
                }
                if *n < self.budget {
                    return Err(bad("dataset.n", format!("{n} is smaller than budget = {}", self.budget)));
                }
                if *test_n == 0 {
                    return Err(bad("dataset.test_n", "must be at least 1"));
                }
            }
            DatasetSpec::Csv { test_path, .. } | DatasetSpec::Libsvm { test_path, .. } => {
                let prep = self.dataset.prep().expect("file dataset");
                if test_path.is_none() && !(prep.test_fraction > 0.0 && prep.test_fraction < 1.0) {
                    return Err(bad(
                        "dataset.test_fraction",
                        format!("must lie in (0, 1), got {}", prep.test_fraction),
                    ));
                }
                if prep.pca == Some(0) {
                    return Err(bad("dataset.pca", "must be at least 1"));
                }
                if let Some(m) = prep.max_points {
                    if m < self.budget {
                        return Err(bad("dataset.max_points", format!("{m} is smaller than budget = {}", self.budget)));
                    }
                }
            }
        }
        for (k, &s) in self.bench.sizes.iter().enumerate() {
            if s < self.budget {
                return Err(bad(&format!("bench.sizes[{k}]"), format!("{s} is smaller than budget = {}", self.budget)));
            }
        }
        for (k, &b) in self.bench.budgets.iter().enumerate() {
            if b == 0 {
                return Err(bad(&format!("bench.budgets[{k}]"), "must be at least 1"));
            }
        }
        if self.bench.algos.is_empty() {
            return Err(bad("bench.algos", "at least one algorithm is required"));
        }
        let d = &self.diag;
        if d.dim == 0 || d.dim > 5 {
            return Err(bad("diag.dim", format!("must lie in 1..=5, got {}", d.dim)));
        }
        if d.n < d.dim {
            return Err(bad("diag.n", format!("{} is smaller than diag.dim = {}", d.n, d.dim)));
        }
        if !(0.0..=2.0).contains(&d.noise) {
            return Err(bad("diag.noise", format!("must lie in [0, 2], got {}", d.noise)));
        }
        if d.rounds == 0 || d.unbiasedness_rounds == 0 {
            return Err(bad("diag.rounds", "rounds must be at least 1"));
        }
        if d.replicates < 2 || d.ewa_samples < 2 || d.tail_trials == 0 {
            return Err(bad("diag.replicates", "replicate and sample counts must be at least 2"));
        }
        for (key, v) in [("diag.tail_delta", d.tail_delta), ("diag.delta", d.delta)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(bad(key, format!("must lie in (0, 1), got {v}")));
            }
        }
        Ok(())
    }
}

impl DatasetSpec {
    pub fn prep(&self) -> Option<Prep> {
        match *self {
            Self::Synthetic { .. } => None,
            Self::Csv { test_fraction, split_seed, pca, max_points, .. }
            | Self::Libsvm { test_fraction, split_seed, pca, max_points, .. } => Some(Prep {
                test_fraction,
                split_seed,
                pca,
                max_points,
            }),
        }
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        match self {
            Self::Synthetic { .. } => {}
            Self::Csv { path, test_path, .. } | Self::Libsvm { path, test_path, .. } => {
                fix(path);
                if let Some(t) = test_path {
                    fix(t);
                }
            }
        }
    }
}
