//! CSV ingestion with schema inference.
//!
//! Columns where every value parses as a finite number become continuous
//! features. Columns with non-numeric values become categorical when they
//! have at most [`MAX_INFERRED_LEVELS`] distinct values; otherwise the first
//! non-numeric cell is reported as a parse error with its line number.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{OakError, Result};

/// Columns with non-numeric entries and at most this many distinct values
/// are inferred categorical.
pub const MAX_INFERRED_LEVELS: usize = 20;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureKind {
    Continuous,
    Categorical { levels: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub name: String,
    #[serde(flatten)]
    pub kind: FeatureKind,
}

/// Parsed tabular data: feature columns (categorical values as level
/// indices), optional targets, and the per-feature schema.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub features: Vec<Vec<f64>>,
    pub targets: Option<Vec<f64>>,
    pub schema: Vec<FeatureSchema>,
}

impl Dataset {
    pub fn n_rows(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }

    pub fn n_features(&self) -> usize {
        self.features.len()
    }
}

struct RawTable {
    header: Vec<String>,
    /// Column-major cells.
    columns: Vec<Vec<String>>,
    /// 1-based source line of each row (the header is line 1).
    lines: Vec<usize>,
}

fn read_table(path: &Path) -> Result<RawTable> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => {
                OakError::Io(std::io::Error::other(format!("{}: {e}", path.display())))
            }
            _ => OakError::Parse {
                line: 1,
                msg: e.to_string(),
            },
        })?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| OakError::Parse {
            line: 1,
            msg: format!("bad header: {e}"),
        })?
        .iter()
        .map(str::to_owned)
        .collect();
    if header.is_empty() {
        return Err(OakError::Parse {
            line: 1,
            msg: "empty header row".into(),
        });
    }
    let mut columns: Vec<Vec<String>> = vec![Vec::new(); header.len()];
    let mut lines = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = match e.position() {
                Some(p) => p.line() as usize,
                None => 0,
            };
            OakError::Parse {
                line,
                msg: e.to_string(),
            }
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != header.len() {
            return Err(OakError::Parse {
                line,
                msg: format!(
                    "row has {} fields, header has {}",
                    record.len(),
                    header.len()
                ),
            });
        }
        for (column, value) in columns.iter_mut().zip(record.iter()) {
            column.push(value.to_owned());
        }
        lines.push(line);
    }
    if lines.is_empty() {
        return Err(OakError::Parse {
            line: 1,
            msg: "file has no data rows".into(),
        });
    }
    Ok(RawTable {
        header,
        columns,
        lines,
    })
}

fn parse_finite(value: &str) -> Option<f64> {
    value.parse::<f64>().ok().filter(|v| v.is_finite())
}

fn numeric_column(name: &str, column: &[String], lines: &[usize]) -> Result<Vec<f64>> {
    column
        .iter()
        .zip(lines)
        .map(|(value, &line)| {
            parse_finite(value).ok_or_else(|| OakError::Parse {
                line,
                msg: format!("column '{name}': cannot parse '{value}' as a finite number"),
            })
        })
        .collect()
}

/// Infer a feature column: continuous when fully numeric, categorical when
/// the distinct values are few, otherwise a parse error at the first
/// non-numeric cell.
fn infer_column(
    name: &str,
    column: &[String],
    lines: &[usize],
) -> Result<(FeatureSchema, Vec<f64>)> {
    if column.iter().all(|v| parse_finite(v).is_some()) {
        return Ok((
            FeatureSchema {
                name: name.to_owned(),
                kind: FeatureKind::Continuous,
            },
            numeric_column(name, column, lines)?,
        ));
    }
    let mut distinct: Vec<&str> = column.iter().map(String::as_str).collect();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() > MAX_INFERRED_LEVELS {
        let (value, &line) = column
            .iter()
            .zip(lines)
            .find(|(v, _)| parse_finite(v).is_none())
            .expect("column has a non-numeric value");
        return Err(OakError::Parse {
            line,
            msg: format!(
                "column '{name}': cannot parse '{value}' as a finite number \
                 ({} distinct values is too many for a categorical feature)",
                distinct.len()
            ),
        });
    }
    let levels: Vec<String> = distinct.iter().map(|s| (*s).to_owned()).collect();
    let index: BTreeMap<&str, usize> = levels
        .iter()
        .enumerate()
        .map(|(i, l)| (l.as_str(), i))
        .collect();
    let values = column.iter().map(|v| index[v.as_str()] as f64).collect();
    Ok((
        FeatureSchema {
            name: name.to_owned(),
            kind: FeatureKind::Categorical { levels },
        },
        values,
    ))
}

/// Ingest a training CSV: the target column is required and at least four
/// rows must be present. Feature kinds are inferred per column.
pub fn ingest(path: &Path, target: &str) -> Result<Dataset> {
    let table = read_table(path)?;
    let Some(target_idx) = table.header.iter().position(|h| h == target) else {
        return Err(OakError::Config(format!(
            "target column '{target}' not found; columns are {:?}",
            table.header
        )));
    };
    let targets = numeric_column(target, &table.columns[target_idx], &table.lines)?;
    if targets.len() < 4 {
        return Err(OakError::Invalid(format!(
            "need at least 4 rows to fit, got {}",
            targets.len()
        )));
    }
    let mut schema = Vec::new();
    let mut features = Vec::new();
    for (idx, name) in table.header.iter().enumerate() {
        if idx == target_idx {
            continue;
        }
        let (feature_schema, values) = infer_column(name, &table.columns[idx], &table.lines)?;
        schema.push(feature_schema);
        features.push(values);
    }
    if features.is_empty() {
        return Err(OakError::Invalid(
            "no feature columns besides the target".into(),
        ));
    }
    Ok(Dataset {
        features,
        targets: Some(targets),
        schema,
    })
}

/// Ingest a CSV against a known schema (the prediction path). Features are
/// matched by name and reordered to the schema; the target is optional.
pub fn ingest_with_schema(path: &Path, target: &str, schema: &[FeatureSchema]) -> Result<Dataset> {
    let table = read_table(path)?;
    let mut missing = Vec::new();
    let mut positions = Vec::with_capacity(schema.len());
    for feature in schema {
        match table.header.iter().position(|h| *h == feature.name) {
            Some(idx) => positions.push(idx),
            None => missing.push(feature.name.clone()),
        }
    }
    let extra: Vec<&String> = table
        .header
        .iter()
        .filter(|h| *h != target && !schema.iter().any(|f| f.name == **h))
        .collect();
    if !missing.is_empty() || !extra.is_empty() {
        return Err(OakError::Config(format!(
            "schema mismatch: missing columns {missing:?}, unexpected columns {extra:?}"
        )));
    }

    let mut features = Vec::with_capacity(schema.len());
    for (feature, &idx) in schema.iter().zip(&positions) {
        let column = &table.columns[idx];
        match &feature.kind {
            FeatureKind::Continuous => {
                features.push(numeric_column(&feature.name, column, &table.lines)?);
            }
            FeatureKind::Categorical { levels } => {
                let index: BTreeMap<&str, usize> = levels
                    .iter()
                    .enumerate()
                    .map(|(i, l)| (l.as_str(), i))
                    .collect();
                let values = column
                    .iter()
                    .zip(&table.lines)
                    .map(|(value, &line)| {
                        index.get(value.as_str()).map(|&i| i as f64).ok_or_else(|| {
                            OakError::Parse {
                                line,
                                msg: format!(
                                    "column '{}': value '{value}' is not one of the trained levels {levels:?}",
                                    feature.name
                                ),
                            }
                        })
                    })
                    .collect::<Result<Vec<f64>>>()?;
                features.push(values);
            }
        }
    }
    let targets = table
        .header
        .iter()
        .position(|h| h == target)
        .map(|idx| numeric_column(target, &table.columns[idx], &table.lines))
        .transpose()?;
    Ok(Dataset {
        features,
        targets,
        schema: schema.to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_csv(content: &str) -> tempfile::NamedTempFile {
        let mut file = tempfile::NamedTempFile::new().unwrap();
        file.write_all(content.as_bytes()).unwrap();
        file
    }

    #[test]
    fn numeric_csv_becomes_continuous_features() {
        let file = write_csv("a,b,y\n1,2,3\n4,5,6\n7,8,9\n10,11,12\n");
        let data = ingest(file.path(), "y").unwrap();
        assert_eq!(data.n_features(), 2);
        assert_eq!(data.n_rows(), 4);
        assert_eq!(data.schema[0].kind, FeatureKind::Continuous);
        assert_eq!(data.targets.as_ref().unwrap(), &[3.0, 6.0, 9.0, 12.0]);
    }

    #[test]
    fn string_column_becomes_categorical_with_sorted_levels() {
        let file = write_csv("grade,y\nG,1\nF,2\nS,3\nF,4\n");
        let data = ingest(file.path(), "y").unwrap();
        match &data.schema[0].kind {
            FeatureKind::Categorical { levels } => {
                assert_eq!(levels, &["F", "G", "S"]);
            }
            FeatureKind::Continuous => panic!("expected categorical"),
        }
        assert_eq!(data.features[0], vec![1.0, 0.0, 2.0, 0.0]);
    }

    #[test]
    fn stray_cell_in_numeric_column_reports_its_line() {
        let mut content = String::from("a,y\n");
        for i in 0..30 {
            content.push_str(&format!("{i},{i}\n"));
        }
        content.push_str("oops,31\n");
        let file = write_csv(&content);
        let err = ingest(file.path(), "y").unwrap_err();
        match err {
            OakError::Parse { line, msg } => {
                assert_eq!(line, 32);
                assert!(msg.contains("oops"));
            }
            other => panic!("expected parse error, got {other}"),
        }
    }

    #[test]
    fn non_finite_numeric_cell_is_rejected() {
        let file = write_csv("a,y\nNaN,1\n2,2\n3,3\n4,4\n");
        // 'NaN' fails the finite check; the column has 4 distinct values so
        // it is inferred categorical instead. Force the numeric path via the
        // target column.
        let err = ingest(file.path(), "a").unwrap_err();
        assert!(matches!(err, OakError::Parse { line: 2, .. }));
    }

    #[test]
    fn ragged_row_is_a_parse_error() {
        let file = write_csv("a,b,y\n1,2,3\n4,5\n");
        let err = ingest(file.path(), "y").unwrap_err();
        assert!(matches!(err, OakError::Parse { .. }));
    }

    #[test]
    fn missing_target_column_is_a_config_error() {
        let file = write_csv("a,b\n1,2\n3,4\n5,6\n7,8\n");
        let err = ingest(file.path(), "y").unwrap_err();
        assert!(matches!(err, OakError::Config(_)));
    }

    #[test]
    fn schema_ingest_matches_by_name_and_validates_levels() {
        let train = write_csv("grade,x,y\nF,0.5,1\nG,1.5,2\nS,2.5,3\nF,3.5,4\n");
        let data = ingest(train.path(), "y").unwrap();

        // Columns permuted, target absent.
        let predict = write_csv("x,grade\n0.1,S\n0.2,F\n");
        let batch = ingest_with_schema(predict.path(), "y", &data.schema).unwrap();
        assert_eq!(batch.features[0], vec![2.0, 0.0]); // grade reordered first
        assert!(batch.targets.is_none());

        // Unknown level.
        let bad = write_csv("x,grade\n0.1,Z\n");
        assert!(matches!(
            ingest_with_schema(bad.path(), "y", &data.schema),
            Err(OakError::Parse { .. })
        ));

        // Missing and extra columns are listed.
        let mismatched = write_csv("x,extra\n0.1,1\n");
        let err = ingest_with_schema(mismatched.path(), "y", &data.schema).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("grade") && msg.contains("extra"));
    }
}
