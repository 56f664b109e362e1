use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-dataset description of a delimited text file.
///
/// ```toml
/// name = "abalone"
/// task = "regression"
/// delimiter = ","
/// columns = ["sex", "length", "diameter", "height", "whole", "shucked", "viscera", "shell", "rings"]
/// target = "rings"
///
/// [categorical]
/// sex = ["M", "I", "F"]
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schema {
    pub name: String,
    pub task: TaskSpec,
    #[serde(default)]
    pub delimiter: Delimiter,
    /// Skip the first non-empty line.
    #[serde(default)]
    pub header: bool,
    pub columns: Vec<String>,
    pub target: String,
    #[serde(default)]
    pub ignore: Vec<String>,
    /// Class labels, in index order. Classification only.
    #[serde(default)]
    pub classes: Vec<String>,
    /// Categorical feature columns and their ordered levels.
    #[serde(default)]
    pub categorical: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    pub categorical_encoding: CategoricalEncoding,
    /// Field values treated as missing; rows containing one are dropped.
    #[serde(default = "default_missing")]
    pub missing: Vec<String>,
}

fn default_missing() -> Vec<String> {
    vec!["?".to_string(), String::new()]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskSpec {
    Regression,
    Classification,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Delimiter {
    #[default]
    #[serde(rename = ",")]
    Comma,
    #[serde(rename = ";")]
    Semicolon,
    #[serde(rename = "\t")]
    Tab,
    /// Any run of spaces or tabs.
    #[serde(rename = "whitespace")]
    Whitespace,
}

impl Delimiter {
    pub fn split<'a>(&self, line: &'a str) -> Vec<&'a str> {
        match self {
            Delimiter::Comma => line.split(',').map(str::trim).collect(),
            Delimiter::Semicolon => line.split(';').map(str::trim).collect(),
            Delimiter::Tab => line.split('\t').map(str::trim).collect(),
            Delimiter::Whitespace => line.split_whitespace().collect(),
        }
    }
}

/// Categorical features become one ordinal column with evenly spaced codes
/// in `[-1, 1]`, or one indicator column per level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CategoricalEncoding {
    #[default]
    Ordinal,
    Onehot,
}

impl Schema {
    pub fn parse(text: &str) -> Result<Self> {
        let schema: Schema = toml::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Schema::parse(&text).map_err(|e| match e {
            Error::Schema(msg) => Error::Schema(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for c in &self.columns {
            if !seen.insert(c.as_str()) {
                return Err(Error::Schema(format!("duplicate column {c:?}")));
            }
        }
        if !seen.contains(self.target.as_str()) {
            return Err(Error::Schema(format!("target {:?} is not among columns", self.target)));
        }
        for name in self.ignore.iter().chain(self.categorical.keys()) {
            if !seen.contains(name.as_str()) {
                return Err(Error::Schema(format!("unknown column {name:?}")));
            }
        }
        if self.ignore.contains(&self.target) {
            return Err(Error::Schema("target column cannot be ignored".into()));
        }
        if self.categorical.contains_key(&self.target) {
            return Err(Error::Schema("target column cannot be categorical; use classes".into()));
        }
        for (name, levels) in &self.categorical {
            if levels.is_empty() {
                return Err(Error::Schema(format!("categorical column {name:?} has no levels")));
            }
        }
        match self.task {
            TaskSpec::Classification if self.classes.len() < 2 => {
                return Err(Error::Schema("classification needs at least 2 classes".into()));
            }
            TaskSpec::Regression if !self.classes.is_empty() => {
                return Err(Error::Schema("classes given for a regression task".into()));
            }
            _ => {}
        }
        if self.feature_columns().next().is_none() {
            return Err(Error::Schema("no feature columns".into()));
        }
        Ok(())
    }

    /// `(index in file, name)` of every feature column, in file order.
    pub fn feature_columns(&self) -> impl Iterator<Item = (usize, &str)> {
        self.columns
            .iter()
            .enumerate()
            .filter(|(_, c)| **c != self.target && !self.ignore.contains(c))
            .map(|(i, c)| (i, c.as_str()))
    }

    pub fn target_index(&self) -> usize {
        self.columns.iter().position(|c| *c == self.target).unwrap_or(0)
    }
}
