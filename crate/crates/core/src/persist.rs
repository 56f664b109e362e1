//! Line-oriented text container for trained networks.
//!
//! ```text
//! pinvnet-model 1
//! activation tanh
//! task classification 3
//! classes Iris-setosa Iris-versicolor Iris-virginica
//! categorical_encoding ordinal
//! feature numeric sepal_length
//! feature categorical sex M I F
//! scaling 2
//! range 0 4.3 7.9
//! range 1 -1.0 1.0
//! input_weights 3 10
//! <3 lines of 10 space-separated values>
//! output_weights 10 3
//! <10 lines of 3 values>
//! end
//! ```
//!
//! Tokens are separated by single spaces and names may not contain
//! whitespace. Numbers use Rust's shortest round-trip formatting, so a
//! saved model reloads bit-for-bit.

use std::fmt::Write as _;
use std::path::Path;

use crate::data::{CategoricalEncoding, ColumnRange, Encoded, FeatureEncoder, FeatureKind, RawFeature, Scaling, TaskKind};
use crate::error::{Error, Result};
use crate::model::{Activation, Slfn};
use crate::numerics::Matrix;

pub const MAGIC: &str = "pinvnet-model";
pub const VERSION: u32 = 1;

/// A trained network together with the input preprocessing it expects.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub net: Slfn,
    pub task: TaskKind,
    pub class_names: Vec<String>,
    pub encoder: FeatureEncoder,
    pub scaling: Scaling,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Prediction {
    Value(f64),
    Class(usize),
}

fn check_token(what: &str, s: &str) -> Result<()> {
    if s.is_empty() || s.contains(char::is_whitespace) {
        return Err(Error::param("model", format!("{what} {s:?} must be a non-empty token without whitespace")));
    }
    Ok(())
}

fn write_matrix(out: &mut String, name: &str, m: &Matrix) {
    let _ = writeln!(out, "{name} {} {}", m.nrows(), m.ncols());
    for row in m.row_iter() {
        let line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        let _ = writeln!(out, "{}", line.join(" "));
    }
}

impl ModelBundle {
    pub fn new(net: Slfn, task: TaskKind, class_names: Vec<String>, encoder: FeatureEncoder, scaling: Scaling) -> Result<Self> {
        let q = net.output_dim().ok_or(Error::MissingWeights)?;
        if q != task.output_dim() {
            return Err(Error::shape("output weights", task.output_dim(), q));
        }
        if scaling.width() != net.input_dim() {
            return Err(Error::shape("scaling", net.input_dim(), scaling.width()));
        }
        if let TaskKind::Classification { num_classes } = task {
            if class_names.len() != num_classes {
                return Err(Error::shape("class names", num_classes, class_names.len()));
            }
        }
        Ok(ModelBundle {
            net,
            task,
            class_names,
            encoder,
            scaling,
        })
    }

    pub fn raw_input_width(&self) -> usize {
        self.encoder.raw_width()
    }

    pub fn to_text(&self) -> Result<String> {
        let mut out = String::new();
        let _ = writeln!(out, "{MAGIC} {VERSION}");
        let _ = writeln!(out, "activation {}", self.net.activation());
        match self.task {
            TaskKind::Regression => {
                let _ = writeln!(out, "task regression");
            }
            TaskKind::Classification { num_classes } => {
                for c in &self.class_names {
                    check_token("class", c)?;
                }
                let _ = writeln!(out, "task classification {num_classes}");
                let _ = writeln!(out, "classes {}", self.class_names.join(" "));
            }
        }
        let enc = match self.encoder.encoding {
            CategoricalEncoding::Ordinal => "ordinal",
            CategoricalEncoding::Onehot => "onehot",
        };
        let _ = writeln!(out, "categorical_encoding {enc}");
        for f in &self.encoder.features {
            check_token("feature", &f.name)?;
            match &f.kind {
                FeatureKind::Numeric => {
                    let _ = writeln!(out, "feature numeric {}", f.name);
                }
                FeatureKind::Categorical { levels } => {
                    for l in levels {
                        check_token("level", l)?;
                    }
                    let _ = writeln!(out, "feature categorical {} {}", f.name, levels.join(" "));
                }
            }
        }
        let _ = writeln!(out, "scaling {}", self.scaling.width());
        for c in &self.scaling.columns {
            let _ = writeln!(out, "range {} {:?} {:?}", c.source, c.min, c.max);
        }
        write_matrix(&mut out, "input_weights", self.net.input_weights());
        write_matrix(&mut out, "output_weights", self.net.output_weights().ok_or(Error::MissingWeights)?);
        out.push_str("end\n");
        Ok(out)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        Reader::new(text).bundle()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Reader::new(&text).with_origin(&path.display().to_string()).bundle()
    }

    /// Encodes and scales raw feature fields into network inputs.
    pub fn prepare_inputs(&self, rows: &[Vec<&str>]) -> Result<Matrix> {
        let p = self.net.input_dim();
        let mut data = Vec::with_capacity(rows.len() * p);
        for (i, fields) in rows.iter().enumerate() {
            if fields.len() != self.raw_input_width() {
                return Err(Error::shape(
                    "prediction input",
                    format!("{} feature fields (P = {})", self.raw_input_width(), self.raw_input_width()),
                    format!("{} fields on row {}", fields.len(), i + 1),
                ));
            }
            match self.encoder.encode(fields, &[]) {
                Ok(Encoded::Row(encoded)) => data.extend(self.scaling.apply(&encoded)),
                Ok(Encoded::Missing) => unreachable!("no missing markers were given"),
                Err(msg) => {
                    return Err(Error::Parse {
                        path: "input".into(),
                        line: i + 1,
                        message: msg,
                    })
                }
            }
        }
        Ok(Matrix::from_row_slice(rows.len(), p, &data))
    }

    pub fn predict(&self, rows: &[Vec<&str>]) -> Result<Vec<Prediction>> {
        if rows.is_empty() {
            return Ok(Vec::new());
        }
        let y = self.net.forward(&self.prepare_inputs(rows)?)?;
        Ok(y.row_iter()
            .map(|row| match self.task {
                TaskKind::Regression => Prediction::Value(row[0]),
                TaskKind::Classification { .. } => {
                    let v: Vec<f64> = row.iter().copied().collect();
                    Prediction::Class(crate::data::argmax(&v))
                }
            })
            .collect())
    }
}

struct Reader<'a> {
    lines: std::iter::Peekable<std::iter::Enumerate<std::str::Lines<'a>>>,
    origin: String,
    line: usize,
}

impl<'a> Reader<'a> {
    fn new(text: &'a str) -> Self {
        Reader {
            lines: text.lines().enumerate().peekable(),
            origin: "model".into(),
            line: 0,
        }
    }

    fn with_origin(mut self, origin: &str) -> Self {
        self.origin = origin.to_string();
        self
    }

    fn err(&self, message: impl Into<String>) -> Error {
        Error::Parse {
            path: self.origin.clone(),
            line: self.line,
            message: message.into(),
        }
    }

    fn next_line(&mut self) -> Result<&'a str> {
        match self.lines.next() {
            Some((i, l)) => {
                self.line = i + 1;
                Ok(l)
            }
            None => Err(self.err("unexpected end of file")),
        }
    }

    /// Next line, which must start with `key`; returns the remaining tokens.
    fn keyed(&mut self, key: &str) -> Result<Vec<&'a str>> {
        let line = self.next_line()?;
        let mut tokens = line.split(' ');
        if tokens.next() != Some(key) {
            return Err(self.err(format!("expected `{key}`, found {line:?}")));
        }
        Ok(tokens.collect())
    }

    fn peek_is(&mut self, key: &str) -> bool {
        matches!(self.lines.peek(), Some((_, l)) if l.split(' ').next() == Some(key))
    }

    fn number<T: std::str::FromStr>(&self, s: &str) -> Result<T> {
        s.parse().map_err(|_| self.err(format!("invalid number {s:?}")))
    }

    fn matrix(&mut self, key: &str) -> Result<Matrix> {
        let dims = self.keyed(key)?;
        if dims.len() != 2 {
            return Err(self.err(format!("`{key}` needs rows and cols")));
        }
        let (rows, cols): (usize, usize) = (self.number(dims[0])?, self.number(dims[1])?);
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let line = self.next_line()?;
            let values: Vec<f64> = line.split(' ').map(|t| self.number(t)).collect::<Result<_>>()?;
            if values.len() != cols {
                return Err(self.err(format!("expected {cols} values, found {}", values.len())));
            }
            data.extend(values);
        }
        Ok(Matrix::from_row_slice(rows, cols, &data))
    }

    fn bundle(mut self) -> Result<ModelBundle> {
        let header = self.keyed(MAGIC)?;
        if header != [VERSION.to_string().as_str()] {
            return Err(self.err(format!("unsupported format version {header:?}")));
        }
        let act = self.keyed("activation")?;
        let activation: Activation = act.first().copied().unwrap_or("").parse().map_err(|_| self.err("bad activation"))?;

        let task_tokens = self.keyed("task")?;
        let (task, class_names) = match task_tokens.as_slice() {
            ["regression"] => (TaskKind::Regression, Vec::new()),
            ["classification", n] => {
                let num_classes: usize = self.number(n)?;
                let names: Vec<String> = self.keyed("classes")?.iter().map(|s| s.to_string()).collect();
                (TaskKind::Classification { num_classes }, names)
            }
            other => return Err(self.err(format!("bad task line {other:?}"))),
        };

        let encoding = match self.keyed("categorical_encoding")?.as_slice() {
            ["ordinal"] => CategoricalEncoding::Ordinal,
            ["onehot"] => CategoricalEncoding::Onehot,
            other => return Err(self.err(format!("bad categorical_encoding {other:?}"))),
        };
        let mut features = Vec::new();
        while self.peek_is("feature") {
            let tokens = self.keyed("feature")?;
            let feature = match tokens.as_slice() {
                ["numeric", name] => RawFeature {
                    name: name.to_string(),
                    kind: FeatureKind::Numeric,
                },
                ["categorical", name, levels @ ..] if !levels.is_empty() => RawFeature {
                    name: name.to_string(),
                    kind: FeatureKind::Categorical {
                        levels: levels.iter().map(|s| s.to_string()).collect(),
                    },
                },
                other => return Err(self.err(format!("bad feature line {other:?}"))),
            };
            features.push(feature);
        }
        let encoder = FeatureEncoder { features, encoding };

        let width: usize = {
            let t = self.keyed("scaling")?;
            self.number(t.first().copied().unwrap_or(""))?
        };
        let mut columns = Vec::with_capacity(width);
        for _ in 0..width {
            let t = self.keyed("range")?;
            if t.len() != 3 {
                return Err(self.err("`range` needs source, min and max"));
            }
            let source: usize = self.number(t[0])?;
            if source >= encoder.encoded_width() {
                return Err(self.err(format!("range source {source} out of bounds")));
            }
            columns.push(ColumnRange {
                source,
                min: self.number(t[1])?,
                max: self.number(t[2])?,
            });
        }

        let c = self.matrix("input_weights")?;
        let w = self.matrix("output_weights")?;
        self.keyed("end")?;
        let net = Slfn::new(c, activation)?.with_output_weights(w)?;
        ModelBundle::new(net, task, class_names, encoder, Scaling { columns })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::InitRegime;

    fn bundle() -> ModelBundle {
        let net = Slfn::random(2, 4, Activation::Tanh, InitRegime::Scaled, 3)
            .unwrap()
            .with_output_weights(Matrix::from_fn(4, 3, |i, j| (i as f64 - j as f64) / 3.0))
            .unwrap();
        let encoder = FeatureEncoder {
            features: vec![
                RawFeature {
                    name: "sex".into(),
                    kind: FeatureKind::Categorical {
                        levels: vec!["M".into(), "I".into(), "F".into()],
                    },
                },
                RawFeature {
                    name: "len".into(),
                    kind: FeatureKind::Numeric,
                },
            ],
            encoding: CategoricalEncoding::Ordinal,
        };
        let scaling = Scaling {
            columns: vec![
                ColumnRange { source: 0, min: -1.0, max: 1.0 },
                ColumnRange { source: 1, min: 0.1, max: 0.7 },
            ],
        };
        ModelBundle::new(
            net,
            TaskKind::Classification { num_classes: 3 },
            vec!["a".into(), "b".into(), "c".into()],
            encoder,
            scaling,
        )
        .unwrap()
    }

    #[test]
    fn text_roundtrip_is_exact() {
        let b = bundle();
        let text = b.to_text().unwrap();
        let back = ModelBundle::from_text(&text).unwrap();
        assert_eq!(back, b);
        assert_eq!(back.to_text().unwrap(), text);
    }

    #[test]
    fn truncated_file_is_rejected() {
        let text = bundle().to_text().unwrap();
        let cut: String = text.lines().take(12).map(|l| format!("{l}\n")).collect();
        assert!(matches!(ModelBundle::from_text(&cut), Err(Error::Parse { .. })));
    }

    #[test]
    fn predicts_classes() {
        let b = bundle();
        let preds = b.predict(&[vec!["M", "0.3"], vec!["F", "0.7"]]).unwrap();
        assert_eq!(preds.len(), 2);
        assert!(matches!(preds[0], Prediction::Class(c) if c < 3));
        let err = b.predict(&[vec!["M"]]).unwrap_err().to_string();
        assert!(err.contains("P = 2"), "{err}");
    }

    #[test]
    fn whitespace_in_names_is_rejected() {
        let mut b = bundle();
        b.class_names[0] = "two words".into();
        assert!(b.to_text().is_err());
    }
}
