mod common;

use std::io::Write;

use upal_core::data::{
    load_csv, load_libsvm, pca_reduce, read_cache, split, synth_pool, write_cache, write_libsvm,
    CsvOptions, LabelMode, LabelRule, SyntheticModel, XLaw,
};
use upal_core::theory::excess_risk;
use upal_core::{run_upal, Hypothesis, LossSpec, StopRule, UpalConfig, UpalError};

#[test]
fn csv_file_loads_and_reports_bad_lines() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.csv");
    std::fs::write(&good, "1.0,2.0,+1\n3.0,4.0,-1\n").unwrap();
    let pool = load_csv(&good, &CsvOptions::default()).unwrap();
    assert_eq!((pool.len(), pool.dim()), (2, 2));
    assert_eq!(pool.labels(), &[1.0, -1.0]);

    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "1.0,2.0,1\n3.0,NaN,-1\n").unwrap();
    match load_csv(&bad, &CsvOptions::default()) {
        Err(UpalError::Parse { line, .. }) => assert_eq!(line, 2),
        other => panic!("expected parse error, got {other:?}"),
    }
    assert!(load_csv(dir.path().join("missing.csv"), &CsvOptions::default()).is_err());
}

#[test]
fn class_name_mapping_for_uci_style_files() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("abalone.csv");
    // sex column skipped, rings thresholded
    std::fs::write(&path, "M,0.455,0.365,15\nF,0.53,0.42,7\nI,0.33,0.255,10\n").unwrap();
    let opts = CsvOptions {
        skip_columns: vec![0],
        labels: LabelRule::Threshold { threshold: 10.0 },
        ..Default::default()
    };
    let pool = load_csv(&path, &opts).unwrap();
    assert_eq!(pool.dim(), 2);
    assert_eq!(pool.labels(), &[1.0, -1.0, 1.0]);
}

#[test]
fn libsvm_and_cache_files_round_trip() {
    let pool = common::classification_pool(30, 6, 4);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("pool.svm");
    std::fs::write(&path, write_libsvm(&pool)).unwrap();
    let back = load_libsvm(&path, Some(6), &LabelRule::PlusMinusOne).unwrap();
    assert_eq!(back, pool);

    let cache = dir.path().join("pool.bin");
    let mut f = std::fs::File::create(&cache).unwrap();
    write_cache(&pool, &mut f).unwrap();
    f.flush().unwrap();
    let back = read_cache(std::fs::File::open(&cache).unwrap()).unwrap();
    assert_eq!(back, pool);
}

#[test]
fn noiseless_model_is_recovered_with_full_budget() {
    let beta = Hypothesis::from_slice(&[0.7, -1.3, 0.4]).unwrap();
    let model = SyntheticModel::isotropic(beta, XLaw::BoundedUniformCube, 0.0, LabelMode::Regression).unwrap();
    let draw = synth_pool(&model, 40, 12).unwrap();
    let mut cfg = UpalConfig::new(40, LossSpec::squared(), 3);
    cfg.lambda0 = 0.0;
    cfg.stop = StopRule::Rounds(200);
    let out = run_upal(&draw.pool, &cfg).unwrap();
    assert!(excess_risk(&draw.params, &out.hypothesis).unwrap() <= 1e-8);
}

#[test]
fn pca_then_split_keeps_labels_aligned() {
    let pool = common::classification_pool(100, 8, 2);
    let reduced = pca_reduce(&pool, 3).unwrap();
    assert_eq!(reduced.dim(), 3);
    assert_eq!(reduced.labels(), pool.labels());
    let (train, test) = split(&reduced, 0.3, 7).unwrap();
    assert_eq!(train.len() + test.len(), 100);
    assert_eq!(test.len(), 30);
}
