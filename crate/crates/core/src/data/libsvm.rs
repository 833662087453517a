use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Result, UpalError};
use crate::pool::LabeledPool;

use super::csv::LabelRule;

/// Reads `label index:value ...` lines (1-based indices) into a dense pool.
/// `dim` fixes the dimension; otherwise the largest index seen is used.
pub fn load_libsvm(path: impl AsRef<Path>, dim: Option<usize>, labels: &LabelRule) -> Result<LabeledPool> {
    parse_libsvm(&std::fs::read_to_string(path)?, dim, labels)
}

pub fn parse_libsvm(text: &str, dim: Option<usize>, labels: &LabelRule) -> Result<LabeledPool> {
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut ys = Vec::new();
    let mut max_index = 0;
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut tokens = content.split_whitespace();
        let label = tokens.next().expect("nonempty line");
        ys.push(labels.map(label, line)?);
        let mut seen = HashSet::new();
        let mut entries = Vec::new();
        for tok in tokens {
            let (idx, val) = tok.split_once(':').ok_or_else(|| UpalError::Parse {
                line,
                message: format!("expected index:value, found {tok:?}"),
            })?;
            let idx: usize = idx.parse().map_err(|_| UpalError::Parse {
                line,
                message: format!("bad feature index {idx:?}"),
            })?;
            if idx == 0 {
                return Err(UpalError::Parse {
                    line,
                    message: "feature indices are 1-based".into(),
                });
            }
            if !seen.insert(idx) {
                return Err(UpalError::Parse {
                    line,
                    message: format!("duplicate feature index {idx}"),
                });
            }
            let val: f64 = val.parse().map_err(|_| UpalError::Parse {
                line,
                message: format!("bad feature value {val:?}"),
            })?;
            if !val.is_finite() {
                return Err(UpalError::Parse {
                    line,
                    message: format!("feature {idx} is not finite"),
                });
            }
            if let Some(d) = dim {
                if idx > d {
                    return Err(UpalError::Parse {
                        line,
                        message: format!("feature index {idx} exceeds dimension {d}"),
                    });
                }
            }
            max_index = max_index.max(idx);
            entries.push((idx - 1, val));
        }
        rows.push(entries);
    }
    if rows.is_empty() {
        return Err(UpalError::InvalidPool("no data rows".into()));
    }
    let d = dim.unwrap_or(max_index);
    let mut points = DMatrix::zeros(rows.len(), d);
    for (i, entries) in rows.iter().enumerate() {
        for &(j, v) in entries {
            points[(i, j)] = v;
        }
    }
    LabeledPool::new(points, ys)
}

/// Writes a pool in libsvm text format, skipping zero features. Values use
/// the shortest round-trip representation.
pub fn write_libsvm(pool: &LabeledPool) -> String {
    let mut out = String::new();
    for i in 0..pool.len() {
        let _ = write!(out, "{}", if pool.label(i) > 0.0 { "+1" } else { "-1" });
        for (j, v) in pool.points().row(i).iter().enumerate() {
            if *v != 0.0 {
                let _ = write!(out, " {}:{}", j + 1, v);
            }
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn densifies_sparse_line() {
        let pool = parse_libsvm("+1 1:0.5 3:2.0\n", Some(3), &LabelRule::PlusMinusOne).unwrap();
        assert_eq!(pool.point(0).as_slice(), &[0.5, 0.0, 2.0]);
        assert_eq!(pool.labels(), &[1.0]);
    }

    #[test]
    fn duplicate_index_is_an_error() {
        let err = parse_libsvm("-1 2:1 2:3\n", None, &LabelRule::PlusMinusOne).unwrap_err();
        assert!(matches!(err, UpalError::Parse { line: 1, .. }));
    }

    #[test]
    fn rejects_zero_index_and_bad_label() {
        assert!(parse_libsvm("+1 0:1\n", None, &LabelRule::PlusMinusOne).is_err());
        assert!(matches!(
            parse_libsvm("2 1:1\n", None, &LabelRule::PlusMinusOne),
            Err(UpalError::UnknownLabel { .. })
        ));
    }

    proptest! {
        #[test]
        fn write_read_round_trip(
            rows in proptest::collection::vec(proptest::collection::vec(-1e6f64..1e6, 4), 1..20),
            signs in proptest::collection::vec(any::<bool>(), 20),
        ) {
            let labels: Vec<f64> = (0..rows.len()).map(|i| if signs[i] { 1.0 } else { -1.0 }).collect();
            let pool = LabeledPool::from_rows(&rows, labels).unwrap();
            let text = write_libsvm(&pool);
            let back = parse_libsvm(&text, Some(4), &LabelRule::PlusMinusOne).unwrap();
            prop_assert_eq!(back, pool);
        }
    }
}
