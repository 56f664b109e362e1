//! Experiment configuration: a TOML file whose keys can each be overridden
//! by a command-line flag. Flags win over the file, the file wins over the
//! built-in defaults. Relative paths in the file are resolved against the
//! file's directory; relative paths given as flags against the working
//! directory.

use std::path::{Path, PathBuf};

use pinvnet_core::data::validate_fractions;
use pinvnet_core::experiment::{default_lambda_grid, validate_grid, validate_m_values, DEFAULT_WINDOW_FRACTION};
use pinvnet_core::stats::TTestKind;
use pinvnet_core::MethodLabel;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const DEFAULT_TRIALS: usize = 100;
pub const DEFAULT_SEED: u64 = 1;
pub const DEFAULT_CONFIDENCE: f64 = 0.95;
pub const DEFAULT_SPLIT: [f64; 3] = [0.5, 0.25, 0.25];

/// Hidden sizes: `"1..120"` (inclusive), `"5..100:5"` (with a step), or an
/// explicit list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MRange {
    Spec(String),
    List(Vec<usize>),
}

/// Every key is optional here; [`ExperimentConfig::resolve`] applies
/// defaults and validation.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub dataset: Option<PathBuf>,
    pub schema: Option<PathBuf>,
    pub methods: Option<Vec<String>>,
    pub m_range: Option<MRange>,
    pub trials: Option<usize>,
    pub lambda_grid: Option<Vec<f64>>,
    pub lambda: Option<f64>,
    pub split: Option<[f64; 3]>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
    pub confidence: Option<f64>,
    pub t_test: Option<TTestKind>,
    pub window_fraction: Option<f64>,
    pub record_timing: Option<bool>,
}

impl RawConfig {
    pub fn parse(text: &str, origin: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::usage(format!("config {origin}: {e}")))
    }

    pub fn from_file(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
        let mut raw = RawConfig::parse(&text, &path.display().to_string())?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut raw.dataset, &mut raw.schema, &mut raw.out].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(raw)
    }

    /// Keys set in `flags` replace those in `self`.
    pub fn overridden_by(self, flags: RawConfig) -> RawConfig {
        RawConfig {
            dataset: flags.dataset.or(self.dataset),
            schema: flags.schema.or(self.schema),
            methods: flags.methods.or(self.methods),
            m_range: flags.m_range.or(self.m_range),
            trials: flags.trials.or(self.trials),
            lambda_grid: flags.lambda_grid.or(self.lambda_grid),
            lambda: flags.lambda.or(self.lambda),
            split: flags.split.or(self.split),
            seed: flags.seed.or(self.seed),
            out: flags.out.or(self.out),
            workers: flags.workers.or(self.workers),
            confidence: flags.confidence.or(self.confidence),
            t_test: flags.t_test.or(self.t_test),
            window_fraction: flags.window_fraction.or(self.window_fraction),
            record_timing: flags.record_timing.or(self.record_timing),
        }
    }
}

/// A validated configuration with every default filled in.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub dataset: PathBuf,
    pub schema: PathBuf,
    pub methods: Vec<MethodLabel>,
    /// Empty when no `m_range` was given; sweep and tune require one.
    pub m_values: Vec<usize>,
    pub trials: usize,
    pub lambda_grid: Vec<f64>,
    /// Fixed lambda for regularized methods; tuned when absent.
    pub lambda: Option<f64>,
    pub split: [f64; 3],
    pub seed: u64,
    pub out: PathBuf,
    /// Worker threads; 0 uses every core.
    pub workers: usize,
    pub confidence: f64,
    pub t_test: TTestKind,
    pub window_fraction: f64,
    /// Write measured training times; otherwise the timing column is NaN so
    /// that repeated runs produce identical files.
    pub record_timing: bool,
}

fn invalid(key: &str, reason: impl std::fmt::Display) -> CliError {
    CliError::usage(format!("invalid `{key}`: {reason}"))
}

fn default_methods() -> Vec<MethodLabel> {
    vec![
        MethodLabel::HypTReg,
        MethodLabel::HypTUnreg,
        MethodLabel::SigmReg,
        MethodLabel::SigmUnreg,
        MethodLabel::Elm,
    ]
}

impl ExperimentConfig {
    /// Loads `config` (if given), applies `flags` over it and validates.
    pub fn load(config: Option<&Path>, flags: RawConfig) -> CliResult<Self> {
        let file = match config {
            Some(path) => RawConfig::from_file(path)?,
            None => RawConfig::default(),
        };
        ExperimentConfig::resolve(file.overridden_by(flags))
    }

    pub fn resolve(raw: RawConfig) -> CliResult<Self> {
        let dataset = raw
            .dataset
            .ok_or_else(|| CliError::usage("missing key `dataset` (config file or --dataset)"))?;
        if !dataset.is_file() {
            return Err(CliError::usage(format!("dataset file not found: {}", dataset.display())));
        }
        let schema = raw.schema.unwrap_or_else(|| dataset.with_extension("schema.toml"));
        if !schema.is_file() {
            return Err(CliError::usage(format!("schema file not found: {}", schema.display())));
        }

        let methods = match raw.methods {
            None => default_methods(),
            Some(names) => {
                let mut labels = Vec::new();
                for name in &names {
                    let label: MethodLabel = name.parse().map_err(|e| invalid("methods", e))?;
                    if let MethodLabel::Custom(_) = label {
                        return Err(invalid(
                            "methods",
                            format!("unknown method {name:?}; expected HypT-reg, HypT-unreg, Sigm-reg, Sigm-unreg or ELM"),
                        ));
                    }
                    if labels.contains(&label) {
                        return Err(invalid("methods", format!("{label} listed twice")));
                    }
                    labels.push(label);
                }
                if labels.is_empty() {
                    return Err(invalid("methods", "empty"));
                }
                labels
            }
        };

        let m_values = match raw.m_range {
            None => Vec::new(),
            Some(MRange::List(v)) => v,
            Some(MRange::Spec(s)) => parse_m_range(&s).map_err(|e| invalid("m_range", e))?,
        };
        if !m_values.is_empty() {
            validate_m_values(&m_values).map_err(|e| invalid("m_range", e))?;
        }

        let trials = raw.trials.unwrap_or(DEFAULT_TRIALS);
        if trials < 2 {
            return Err(invalid("trials", format!("need at least 2 for a standard deviation, got {trials}")));
        }
        let lambda_grid = raw.lambda_grid.unwrap_or_else(default_lambda_grid);
        validate_grid(&lambda_grid).map_err(|e| invalid("lambda_grid", e))?;
        if let Some(l) = raw.lambda {
            if !(l.is_finite() && l >= 0.0) {
                return Err(invalid("lambda", format!("must be finite and non-negative, got {l}")));
            }
        }
        let split = raw.split.unwrap_or(DEFAULT_SPLIT);
        validate_fractions(&split).map_err(|e| invalid("split", e))?;
        let confidence = raw.confidence.unwrap_or(DEFAULT_CONFIDENCE);
        if !(confidence > 0.0 && confidence < 1.0) {
            return Err(invalid("confidence", format!("must lie in (0, 1), got {confidence}")));
        }
        let window_fraction = raw.window_fraction.unwrap_or(DEFAULT_WINDOW_FRACTION);
        if !(window_fraction.is_finite() && window_fraction >= 0.0) {
            return Err(invalid("window_fraction", format!("must be finite and non-negative, got {window_fraction}")));
        }

        Ok(ExperimentConfig {
            dataset,
            schema,
            methods,
            m_values,
            trials,
            lambda_grid,
            lambda: raw.lambda,
            split,
            seed: raw.seed.unwrap_or(DEFAULT_SEED),
            out: raw.out.unwrap_or_else(|| PathBuf::from("results")),
            workers: raw.workers.unwrap_or(0),
            confidence,
            t_test: raw.t_test.unwrap_or_default(),
            window_fraction,
            record_timing: raw.record_timing.unwrap_or(false),
        })
    }

    pub fn require_m_values(&self) -> CliResult<&[usize]> {
        if self.m_values.is_empty() {
            return Err(CliError::usage("missing key `m_range` (config file or --m-range)"));
        }
        Ok(&self.m_values)
    }
}

/// Parses `"lo..hi"`, `"lo..hi:step"` (both inclusive) or `"a,b,c"`.
pub fn parse_m_range(s: &str) -> Result<Vec<usize>, String> {
    let s = s.trim();
    let number = |t: &str| t.trim().parse::<usize>().map_err(|_| format!("{t:?} is not a non-negative integer"));
    if let Some((lo, rest)) = s.split_once("..") {
        let (hi, step) = match rest.split_once(':') {
            Some((hi, step)) => (number(hi)?, number(step)?),
            None => (number(rest)?, 1),
        };
        let lo = number(lo)?;
        if step == 0 {
            return Err("step must be positive".into());
        }
        if lo > hi {
            return Err(format!("empty range {lo}..{hi}"));
        }
        return Ok((lo..=hi).step_by(step).collect());
    }
    s.split(',').map(number).collect()
}

/// Parses a comma-separated list of numbers.
pub fn parse_float_list(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| format!("{t:?} is not a number")))
        .collect()
}
