//! Raw field encoding and affine feature scaling to `[-1, 1]`.

use crate::error::{Error, Result};
use crate::numerics::Matrix;

use super::schema::{CategoricalEncoding, Schema};

#[derive(Debug, Clone, PartialEq)]
pub enum FeatureKind {
    Numeric,
    Categorical { levels: Vec<String> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawFeature {
    pub name: String,
    pub kind: FeatureKind,
}

/// Turns the raw feature fields of one record into numbers.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureEncoder {
    pub features: Vec<RawFeature>,
    pub encoding: CategoricalEncoding,
}

/// Outcome of encoding one record.
#[derive(Debug, Clone, PartialEq)]
pub enum Encoded {
    Row(Vec<f64>),
    Missing,
}

impl FeatureEncoder {
    pub fn from_schema(schema: &Schema) -> Self {
        let features = schema
            .feature_columns()
            .map(|(_, name)| RawFeature {
                name: name.to_string(),
                kind: match schema.categorical.get(name) {
                    Some(levels) => FeatureKind::Categorical { levels: levels.clone() },
                    None => FeatureKind::Numeric,
                },
            })
            .collect();
        FeatureEncoder {
            features,
            encoding: schema.categorical_encoding,
        }
    }

    pub fn raw_width(&self) -> usize {
        self.features.len()
    }

    pub fn encoded_width(&self) -> usize {
        self.features
            .iter()
            .map(|f| match (&f.kind, self.encoding) {
                (FeatureKind::Categorical { levels }, CategoricalEncoding::Onehot) => levels.len(),
                _ => 1,
            })
            .sum()
    }

    pub fn encoded_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.encoded_width());
        for f in &self.features {
            match (&f.kind, self.encoding) {
                (FeatureKind::Categorical { levels }, CategoricalEncoding::Onehot) => {
                    names.extend(levels.iter().map(|l| format!("{}={l}", f.name)));
                }
                _ => names.push(f.name.clone()),
            }
        }
        names
    }

    /// Encodes the feature fields of one record. Errors carry the field name;
    /// callers add the line.
    pub fn encode(&self, fields: &[&str], missing: &[String]) -> std::result::Result<Encoded, String> {
        if fields.len() != self.features.len() {
            return Err(format!("expected {} feature fields, found {}", self.features.len(), fields.len()));
        }
        if fields.iter().any(|f| missing.iter().any(|m| m == f)) {
            return Ok(Encoded::Missing);
        }
        let mut out = Vec::with_capacity(self.encoded_width());
        for (feature, &field) in self.features.iter().zip(fields) {
            match &feature.kind {
                FeatureKind::Numeric => {
                    let v: f64 = field.parse().map_err(|_| {
                        format!(
                            "non-numeric value {field:?} in column {:?}, which has no categorical encoding",
                            feature.name
                        )
                    })?;
                    if !v.is_finite() {
                        return Err(format!("non-finite value {field:?} in column {:?}", feature.name));
                    }
                    out.push(v);
                }
                FeatureKind::Categorical { levels } => {
                    let idx = levels
                        .iter()
                        .position(|l| l == field)
                        .ok_or_else(|| format!("unknown level {field:?} for column {:?}", feature.name))?;
                    match self.encoding {
                        CategoricalEncoding::Ordinal => out.push(ordinal_code(idx, levels.len())),
                        CategoricalEncoding::Onehot => {
                            out.extend((0..levels.len()).map(|k| if k == idx { 1.0 } else { 0.0 }));
                        }
                    }
                }
            }
        }
        Ok(Encoded::Row(out))
    }
}

/// Evenly spaced code in `[-1, 1]`: three levels map to -1, 0, 1.
pub fn ordinal_code(index: usize, levels: usize) -> f64 {
    if levels <= 1 {
        0.0
    } else {
        -1.0 + 2.0 * index as f64 / (levels - 1) as f64
    }
}

/// Affine map of one retained column. `min`/`max` are in encoded raw units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColumnRange {
    /// Column index in the encoded (pre-scaling) feature vector.
    pub source: usize,
    pub min: f64,
    pub max: f64,
}

impl ColumnRange {
    #[inline]
    pub fn scale(&self, v: f64) -> f64 {
        (2.0 * v - (self.max + self.min)) / (self.max - self.min)
    }

    #[inline]
    pub fn unscale(&self, v: f64) -> f64 {
        (v * (self.max - self.min) + (self.max + self.min)) * 0.5
    }
}

/// The retained columns and their ranges, recorded at normalization time.
#[derive(Debug, Clone, PartialEq)]
pub struct Scaling {
    pub columns: Vec<ColumnRange>,
}

impl Scaling {
    /// Identity over `width` encoded columns; used before any scaling exists.
    pub fn identity(width: usize) -> Self {
        Scaling {
            columns: (0..width)
                .map(|source| ColumnRange {
                    source,
                    min: -1.0,
                    max: 1.0,
                })
                .collect(),
        }
    }

    pub fn width(&self) -> usize {
        self.columns.len()
    }

    /// Fits ranges for the current columns of `x` on `rows`, dropping columns
    /// that are constant there, and composes them with `self` so the result
    /// maps encoded raw values directly.
    pub fn refit(&self, x: &Matrix, rows: &[usize]) -> Result<(Scaling, Vec<usize>)> {
        if rows.is_empty() {
            return Err(Error::InsufficientData("no rows to fit the feature scaling on".into()));
        }
        let mut kept = Vec::new();
        let mut columns = Vec::new();
        for (j, prev) in self.columns.iter().enumerate() {
            let (lo, hi) = rows.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &r| {
                let v = x[(r, j)];
                (lo.min(v), hi.max(v))
            });
            if !(hi > lo) {
                log::warn!("dropping feature column {} (constant on the fitting rows)", prev.source);
                continue;
            }
            kept.push(j);
            columns.push(ColumnRange {
                source: prev.source,
                min: prev.unscale(lo),
                max: prev.unscale(hi),
            });
        }
        if columns.is_empty() {
            return Err(Error::UnusableDataset("every feature column is constant".into()));
        }
        Ok((Scaling { columns }, kept))
    }

    /// Applies the scaling to a fully encoded row.
    pub fn apply(&self, encoded: &[f64]) -> Vec<f64> {
        self.columns.iter().map(|c| c.scale(encoded[c.source])).collect()
    }
}
