//! Dataset ingestion, feature scaling, target encoding and splitting.

mod preprocess;
mod schema;
mod split;

use std::path::Path;

pub use preprocess::{ordinal_code, ColumnRange, Encoded, FeatureEncoder, FeatureKind, RawFeature, Scaling};
pub use schema::{CategoricalEncoding, Delimiter, Schema, TaskSpec};
pub use split::{apportion, split_indices, validate_fractions, Split, PART_NAMES};

use crate::error::{Error, Result};
use crate::numerics::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskKind {
    Regression,
    Classification { num_classes: usize },
}

impl TaskKind {
    pub fn output_dim(&self) -> usize {
        match *self {
            TaskKind::Regression => 1,
            TaskKind::Classification { num_classes } => num_classes,
        }
    }
}

/// One-hot encoding of class labels; decoding is the row argmax.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TargetEncoder {
    pub num_classes: usize,
}

impl TargetEncoder {
    pub fn new(num_classes: usize) -> Result<Self> {
        if num_classes < 2 {
            return Err(Error::param("num_classes", format!("need at least 2, got {num_classes}")));
        }
        Ok(TargetEncoder { num_classes })
    }

    pub fn encode(&self, labels: &[usize]) -> Result<Matrix> {
        let mut t = Matrix::zeros(labels.len(), self.num_classes);
        for (i, &l) in labels.iter().enumerate() {
            if l >= self.num_classes {
                return Err(Error::UnknownLabel(format!("label {l} with {} classes", self.num_classes)));
            }
            t[(i, l)] = 1.0;
        }
        Ok(t)
    }

    pub fn decode(&self, row: &[f64]) -> Result<usize> {
        if row.len() != self.num_classes {
            return Err(Error::UnknownLabel(format!(
                "output width {} does not match {} classes",
                row.len(),
                self.num_classes
            )));
        }
        Ok(argmax(row))
    }
}

/// Index of the largest value; the first one wins ties.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    /// `N x P` features. Encoded raw values until [`normalize`] is applied.
    pub x: Matrix,
    /// `N x Q` targets: raw values for regression, one-hot rows otherwise.
    pub t: Matrix,
    pub task: TaskKind,
    pub labels: Option<Vec<usize>>,
    pub class_names: Vec<String>,
    pub encoder: FeatureEncoder,
    /// Column ranges recorded by [`normalize`]; `None` while raw.
    pub feature_ranges: Option<Scaling>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.nrows() == 0
    }

    pub fn input_dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn select_rows(&self, rows: &[usize]) -> (Matrix, Matrix) {
        (self.x.select_rows(rows), self.t.select_rows(rows))
    }

    /// Current scaling, identity over the encoded columns while raw.
    pub fn scaling(&self) -> Scaling {
        self.feature_ranges
            .clone()
            .unwrap_or_else(|| Scaling::identity(self.encoder.encoded_width()))
    }

    pub fn split(&self, fractions: [f64; 3], seed: u64) -> Result<Split> {
        split_indices(self.len(), self.labels.as_deref(), fractions, seed)
    }
}

/// Reads a delimited text file described by `schema`.
pub fn load_csv(path: impl AsRef<Path>, schema: &Schema) -> Result<Dataset> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_records(&text, &path.display().to_string(), schema)
}

/// Parses file contents; `origin` names the source in error messages.
pub fn parse_records(text: &str, origin: &str, schema: &Schema) -> Result<Dataset> {
    schema.validate()?;
    let encoder = FeatureEncoder::from_schema(schema);
    let feature_idx: Vec<usize> = schema.feature_columns().map(|(i, _)| i).collect();
    let target_idx = schema.target_index();
    let parse_err = |line: usize, message: String| Error::Parse {
        path: origin.to_string(),
        line,
        message,
    };

    let mut rows: Vec<f64> = Vec::new();
    let mut values: Vec<f64> = Vec::new();
    let mut labels: Vec<usize> = Vec::new();
    let mut dropped = 0usize;
    let mut header_pending = schema.header;

    for (lineno, line) in text.lines().enumerate().map(|(i, l)| (i + 1, l)) {
        if line.trim().is_empty() {
            continue;
        }
        if header_pending {
            header_pending = false;
            continue;
        }
        let fields = schema.delimiter.split(line);
        if fields.len() != schema.columns.len() {
            return Err(parse_err(
                lineno,
                format!("expected {} fields, found {}", schema.columns.len(), fields.len()),
            ));
        }
        let feature_fields: Vec<&str> = feature_idx.iter().map(|&i| fields[i]).collect();
        let target_field = fields[target_idx];
        let encoded = encoder.encode(&feature_fields, &schema.missing).map_err(|msg| {
            if msg.starts_with("non-numeric") {
                Error::Schema(format!("{origin}:{lineno}: {msg}"))
            } else {
                parse_err(lineno, msg)
            }
        })?;
        let row = match encoded {
            Encoded::Row(row) if !schema.missing.iter().any(|m| m == target_field) => row,
            _ => {
                dropped += 1;
                continue;
            }
        };
        match schema.task {
            TaskSpec::Regression => {
                let v: f64 = target_field
                    .parse()
                    .ok()
                    .filter(|v: &f64| v.is_finite())
                    .ok_or_else(|| parse_err(lineno, format!("target {target_field:?} is not a finite number")))?;
                values.push(v);
            }
            TaskSpec::Classification => {
                let label = schema
                    .classes
                    .iter()
                    .position(|c| c == target_field)
                    .ok_or_else(|| parse_err(lineno, format!("unknown class {target_field:?}")))?;
                labels.push(label);
            }
        }
        rows.extend(row);
    }

    if dropped > 0 {
        log::warn!("{origin}: dropped {dropped} rows with missing values");
    }
    let n = rows.len() / encoder.encoded_width().max(1);
    if n == 0 {
        return Err(parse_err(0, "no data rows".into()));
    }
    let x = Matrix::from_row_slice(n, encoder.encoded_width(), &rows);
    let (task, t, labels) = match schema.task {
        TaskSpec::Regression => (TaskKind::Regression, Matrix::from_column_slice(n, 1, &values), None),
        TaskSpec::Classification => {
            let enc = TargetEncoder::new(schema.classes.len())?;
            (
                TaskKind::Classification {
                    num_classes: enc.num_classes,
                },
                enc.encode(&labels)?,
                Some(labels),
            )
        }
    };
    Ok(Dataset {
        name: schema.name.clone(),
        x,
        t,
        task,
        labels,
        class_names: schema.classes.clone(),
        encoder,
        feature_ranges: None,
    })
}

/// Maps every feature column affinely onto `[-1, 1]` using statistics of
/// `fit_rows` only (the training part). Columns constant on those rows are
/// dropped with a warning.
pub fn normalize(d: &Dataset, fit_rows: &[usize]) -> Result<Dataset> {
    if let Some(&bad) = fit_rows.iter().find(|&&r| r >= d.len()) {
        return Err(Error::param("fit_rows", format!("row {bad} out of range for {} samples", d.len())));
    }
    let prev = d.scaling();
    let (scaling, kept) = prev.refit(&d.x, fit_rows)?;
    let x = Matrix::from_fn(d.len(), kept.len(), |i, j| {
        let prev_col = kept[j];
        let raw = prev.columns[prev_col].unscale(d.x[(i, prev_col)]);
        scaling.columns[j].scale(raw)
    });
    Ok(Dataset {
        x,
        feature_ranges: Some(scaling),
        ..d.clone()
    })
}

/// Rebuilds the target matrix from labels (one-hot) or passes regression
/// targets through unchanged.
pub fn encode_targets(d: &Dataset) -> Result<Dataset> {
    match (&d.task, &d.labels) {
        (TaskKind::Regression, _) => Ok(d.clone()),
        (TaskKind::Classification { num_classes }, Some(labels)) => Ok(Dataset {
            t: TargetEncoder::new(*num_classes)?.encode(labels)?,
            ..d.clone()
        }),
        (TaskKind::Classification { .. }, None) => Err(Error::UnknownLabel("classification dataset without labels".into())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const IRIS_SCHEMA: &str = r#"
name = "iris"
task = "classification"
columns = ["sl", "sw", "pl", "pw", "class"]
target = "class"
classes = ["a", "b", "c"]
"#;

    fn schema() -> Schema {
        Schema::parse(IRIS_SCHEMA).unwrap()
    }

    #[test]
    fn parses_rows_and_labels() {
        let d = parse_records("1,2,3,4,a\n5,6,7,8,c\n\n9,10,11,12,b\n", "mem", &schema()).unwrap();
        assert_eq!(d.len(), 3);
        assert_eq!(d.labels.as_deref(), Some(&[0, 2, 1][..]));
        assert_eq!(d.t.row(1).iter().copied().collect::<Vec<_>>(), vec![0.0, 0.0, 1.0]);
        assert!(d.feature_ranges.is_none());
    }

    #[test]
    fn malformed_row_cites_line() {
        let err = parse_records("1,2,3,4,a\n1,2,3,b\n", "f.csv", &schema()).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn text_in_numeric_column_is_schema_error() {
        let err = parse_records("1,x,3,4,a\n", "f.csv", &schema()).unwrap_err();
        assert!(matches!(err, Error::Schema(_)), "{err:?}");
    }

    #[test]
    fn empty_input_is_parse_error() {
        assert!(matches!(parse_records("", "f.csv", &schema()), Err(Error::Parse { .. })));
    }

    #[test]
    fn missing_rows_dropped() {
        let d = parse_records("1,2,3,4,a\n1,?,3,4,b\n5,6,7,8,b\n", "f", &schema()).unwrap();
        assert_eq!(d.len(), 2);
    }

    #[test]
    fn unknown_class_rejected() {
        assert!(parse_records("1,2,3,4,z\n", "f", &schema()).is_err());
    }

    #[test]
    fn one_hot_roundtrip() {
        let enc = TargetEncoder::new(3).unwrap();
        let t = enc.encode(&[2]).unwrap();
        assert_eq!(t.row(0).iter().copied().collect::<Vec<_>>(), vec![0.0, 0.0, 1.0]);
        assert_eq!(enc.decode(&[0.1, 0.9, 0.3]).unwrap(), 1);
        assert!(enc.decode(&[0.1, 0.9]).is_err());
        assert!(enc.encode(&[3]).is_err());
    }

    #[test]
    fn normalize_uses_fit_rows_only() {
        let d = parse_records("0,0,0,1,a\n10,0,5,2,b\n20,1,5,3,c\n", "f", &schema()).unwrap();
        let n = normalize(&d, &[0, 1]).unwrap();
        // Column sw is constant on rows 0 and 1 and gets dropped.
        assert_eq!(n.input_dim(), 3);
        assert_eq!(n.x[(0, 0)], -1.0);
        assert_eq!(n.x[(1, 0)], 1.0);
        assert_eq!(n.x[(2, 0)], 3.0);
        let ranges = n.feature_ranges.as_ref().unwrap();
        assert_eq!(ranges.columns[0], ColumnRange { source: 0, min: 0.0, max: 10.0 });
    }

    #[test]
    fn regression_target_passthrough() {
        let s = Schema::parse(
            r#"
name = "r"
task = "regression"
columns = ["a", "y"]
target = "y"
"#,
        )
        .unwrap();
        let d = parse_records("1,5.3\n2,1\n", "f", &s).unwrap();
        let e = encode_targets(&d).unwrap();
        assert_eq!(e.t[(0, 0)], 5.3);
    }
}
