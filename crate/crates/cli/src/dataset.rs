use anyhow::{bail, Context, Result};
use upal_core::data::{load_csv, load_libsvm, split, synth_pool, CsvOptions, Pca, SyntheticModel};
use upal_core::LabeledPool;

use crate::config::{ConfigError, DatasetSpec, Prep};

/// Train and held-out pools.
#[derive(Debug, Clone)]
pub struct Splits {
    pub train: LabeledPool,
    pub test: LabeledPool,
}

/// Test points are drawn from an independent stream of the same seed.
const TEST_STREAM: u64 = 0x7E57_7E57;

/// Loads the configured pools; failures are reported as config errors.
pub fn load(spec: &DatasetSpec) -> Result<Splits> {
    load_inner(spec).map_err(|e| ConfigError(format!("dataset: {e:#}")).into())
}

fn load_inner(spec: &DatasetSpec) -> Result<Splits> {
    match spec {
        DatasetSpec::Synthetic { .. } => synthetic(spec, None),
        DatasetSpec::Csv {
            path,
            test_path,
            label_column,
            labels,
            has_header,
            skip_columns,
            delimiter,
            ..
        } => {
            let opts = CsvOptions {
                label_column: *label_column,
                labels: labels.clone(),
                has_header: *has_header,
                skip_columns: skip_columns.clone(),
                delimiter: *delimiter,
            };
            let read = |p: &std::path::Path| load_csv(p, &opts).with_context(|| format!("reading {}", p.display()));
            let train = read(path)?;
            let test = test_path.as_deref().map(read).transpose()?;
            prepare(train, test, spec.prep().expect("file dataset"))
        }
        DatasetSpec::Libsvm {
            path,
            test_path,
            dim,
            labels,
            ..
        } => {
            let read = |p: &std::path::Path, d: Option<usize>| {
                load_libsvm(p, d, labels).with_context(|| format!("reading {}", p.display()))
            };
            let train = read(path, *dim)?;
            let test = test_path.as_deref().map(|p| read(p, Some(train.dim()))).transpose()?;
            prepare(train, test, spec.prep().expect("file dataset"))
        }
    }
}

/// A synthetic train pool of `n_override` points (or the configured size).
pub fn synthetic(spec: &DatasetSpec, n_override: Option<usize>) -> Result<Splits> {
    let DatasetSpec::Synthetic { dim, noise, n, test_n, seed } = *spec else {
        bail!("dataset is not synthetic");
    };
    let model = SyntheticModel::benchmark(dim, noise)?;
    let train = synth_pool(&model, n_override.unwrap_or(n), seed)?.pool;
    let test = synth_pool(&model, test_n, seed ^ TEST_STREAM)?.pool;
    Ok(Splits { train, test })
}

fn prepare(train: LabeledPool, test: Option<LabeledPool>, prep: Prep) -> Result<Splits> {
    let (mut train, mut test) = match test {
        Some(t) => (train, t),
        None => split(&train, prep.test_fraction, prep.split_seed)?,
    };
    if train.dim() != test.dim() {
        bail!("train has {} features but test has {}", train.dim(), test.dim());
    }
    if let Some(m) = prep.max_points {
        if m < train.len() {
            train = train.select(&(0..m).collect::<Vec<_>>())?;
        }
    }
    if let Some(k) = prep.pca {
        if k < train.dim() {
            let pca = Pca::fit(&train, k)?;
            train = pca.transform(&train)?;
            test = pca.transform(&test)?;
        }
    }
    Ok(Splits { train, test })
}

impl Splits {
    /// The first `n` train points.
    pub fn truncated(&self, n: usize) -> Result<Self> {
        if n > self.train.len() {
            bail!("requested {n} train points but only {} are available", self.train.len());
        }
        Ok(Self {
            train: self.train.select(&(0..n).collect::<Vec<_>>())?,
            test: self.test.clone(),
        })
    }
}
