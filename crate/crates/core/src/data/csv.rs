use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Result, UpalError};
use crate::pool::LabeledPool;

/// Maps raw label strings onto {-1, +1}.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum LabelRule {
    /// Numeric labels `+1`/`1` and `-1`.
    #[default]
    PlusMinusOne,
    /// Explicit class values; anything outside both lists is an error.
    Classes {
        positive: Vec<String>,
        negative: Vec<String>,
    },
    /// Numeric labels, `>= threshold` is positive (e.g. wine quality >= 6).
    Threshold { threshold: f64 },
}

impl LabelRule {
    pub fn map(&self, raw: &str, line: usize) -> Result<f64> {
        let raw = raw.trim();
        let unknown = || UpalError::UnknownLabel {
            line,
            value: raw.to_string(),
        };
        match self {
            Self::PlusMinusOne => match raw.parse::<f64>() {
                Ok(1.0) => Ok(1.0),
                Ok(-1.0) => Ok(-1.0),
                _ => Err(unknown()),
            },
            Self::Classes { positive, negative } => {
                if positive.iter().any(|p| p == raw) {
                    Ok(1.0)
                } else if negative.iter().any(|n| n == raw) {
                    Ok(-1.0)
                } else {
                    Err(unknown())
                }
            }
            Self::Threshold { threshold } => {
                let v: f64 = raw.parse().map_err(|_| unknown())?;
                if !v.is_finite() {
                    return Err(unknown());
                }
                Ok(if v >= *threshold { 1.0 } else { -1.0 })
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CsvOptions {
    /// Zero-based label column; `None` means the last column.
    pub label_column: Option<usize>,
    pub labels: LabelRule,
    /// `None` detects a header from a non-numeric first row.
    pub has_header: Option<bool>,
    /// Zero-based columns ignored entirely (e.g. a categorical field).
    #[serde(default)]
    pub skip_columns: Vec<usize>,
    /// Field separator; defaults to `,`.
    #[serde(default)]
    pub delimiter: Option<char>,
}

/// Reads a comma-separated file into a dense pool.
pub fn load_csv(path: impl AsRef<Path>, options: &CsvOptions) -> Result<LabeledPool> {
    let text = std::fs::read_to_string(path)?;
    parse_csv(&text, options)
}

pub(crate) fn parse_csv(text: &str, options: &CsvOptions) -> Result<LabeledPool> {
    let mut reader = ::csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(::csv::Trim::All)
        .delimiter(options.delimiter.unwrap_or(',') as u8)
        .from_reader(text.as_bytes());
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut labels = Vec::new();
    let mut width = None;
    for (k, record) in reader.records().enumerate() {
        let line = k + 1;
        let record = record.map_err(|e| UpalError::Parse {
            line,
            message: e.to_string(),
        })?;
        if record.iter().all(str::is_empty) {
            continue;
        }
        let ncols = record.len();
        if ncols < 2 {
            return Err(UpalError::Parse {
                line,
                message: "need at least one feature and a label".into(),
            });
        }
        let label_col = options.label_column.unwrap_or(ncols - 1);
        if label_col >= ncols {
            return Err(UpalError::Parse {
                line,
                message: format!("label column {label_col} out of range"),
            });
        }
        let feature_fields: Vec<&str> = record
            .iter()
            .enumerate()
            .filter(|(c, _)| *c != label_col && !options.skip_columns.contains(c))
            .map(|(_, f)| f)
            .collect();
        if k == 0 {
            let numeric = feature_fields.iter().all(|f| f.parse::<f64>().is_ok());
            if options.has_header.unwrap_or(!numeric) {
                continue;
            }
        }
        let mut features = Vec::with_capacity(feature_fields.len());
        for (c, field) in feature_fields.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| UpalError::Parse {
                line,
                message: format!("feature {c}: cannot parse {field:?}"),
            })?;
            if !v.is_finite() {
                return Err(UpalError::Parse {
                    line,
                    message: format!("feature {c} is not finite ({field})"),
                });
            }
            features.push(v);
        }
        match width {
            None => width = Some(features.len()),
            Some(w) if w != features.len() => {
                return Err(UpalError::Parse {
                    line,
                    message: format!("expected {w} features, found {}", features.len()),
                })
            }
            _ => {}
        }
        labels.push(options.labels.map(&record[label_col], line)?);
        rows.push(features);
    }
    let d = width.ok_or_else(|| UpalError::InvalidPool("no data rows".into()))?;
    let points = DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j]);
    LabeledPool::new(points, labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_rows() {
        let pool = parse_csv("1.0,2.0,+1\n3.0,4.0,-1\n", &CsvOptions::default()).unwrap();
        assert_eq!((pool.len(), pool.dim()), (2, 2));
        assert_eq!(pool.labels(), &[1.0, -1.0]);
        assert_eq!(pool.point(1).as_slice(), &[3.0, 4.0]);
    }

    #[test]
    fn nan_reports_line() {
        let err = parse_csv("1.0,2.0,1\nNaN,4.0,-1\n", &CsvOptions::default()).unwrap_err();
        assert!(matches!(err, UpalError::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn header_detected_and_label_column_chosen() {
        let text = "cls,a,b\nM,1,2\nF,3,4\n";
        let opts = CsvOptions {
            label_column: Some(0),
            labels: LabelRule::Classes {
                positive: vec!["M".into()],
                negative: vec!["F".into()],
            },
            has_header: None,
            ..Default::default()
        };
        let pool = parse_csv(text, &opts).unwrap();
        assert_eq!(pool.labels(), &[1.0, -1.0]);
        assert_eq!(pool.point(0).as_slice(), &[1.0, 2.0]);
    }

    #[test]
    fn unknown_labels_rejected() {
        let err = parse_csv("1,2,3\n", &CsvOptions::default()).unwrap_err();
        assert!(matches!(err, UpalError::UnknownLabel { line: 1, .. }));
        let opts = CsvOptions {
            labels: LabelRule::Classes {
                positive: vec!["a".into()],
                negative: vec!["b".into()],
            },
            ..Default::default()
        };
        assert!(parse_csv("1,2,c\n", &opts).is_err());
    }

    #[test]
    fn semicolon_file_with_skipped_column() {
        let opts = CsvOptions {
            skip_columns: vec![0],
            delimiter: Some(';'),
            labels: LabelRule::Threshold { threshold: 10.0 },
            ..Default::default()
        };
        let pool = parse_csv("sex;len;rings\nM;0.4;15\nI;0.2;7\n", &opts).unwrap();
        assert_eq!(pool.dim(), 1);
        assert_eq!(pool.labels(), &[1.0, -1.0]);
    }

    #[test]
    fn threshold_rule() {
        let opts = CsvOptions {
            labels: LabelRule::Threshold { threshold: 6.0 },
            ..Default::default()
        };
        let pool = parse_csv("0.1,5\n0.2,6\n0.3,7\n", &opts).unwrap();
        assert_eq!(pool.labels(), &[-1.0, 1.0, 1.0]);
    }
}
