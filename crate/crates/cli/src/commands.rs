//! The four subcommands. Each returns what it wrote so callers (and tests)
//! can inspect it; `main` only maps errors to exit statuses.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use pinvnet_core::data::{load_csv, normalize, Dataset, Schema, Scaling};
use pinvnet_core::experiment::{
    detect_critical, near_optimal_size, prediction_error, sweep_methods, trial_seed, tune_lambda,
    write_sweep_rows, CriticalDetection, LambdaTuning, NearOptimal, SplitData, SweepSpec, TuningWindow,
    SWEEP_CSV_HEADER,
};
use pinvnet_core::model::RNG_ALGORITHM;
use pinvnet_core::persist::{ModelBundle, Prediction};
use pinvnet_core::{MethodConfig, MethodLabel, Slfn, SweepRecord};
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};
use crate::output::{sha256_file, sha256_hex, Metadata, Staged};

/// Column order of `comparison.csv`.
pub const COMPARISON_CSV_HEADER: &str = "method,dataset,lambda,best_m,best_mean_err,best_std_err,\
near_optimal_m,near_optimal_mean_err,near_optimal_std_err,max_m,max_m_mean_err,max_m_std_err,near_optimal_wall_time_s";

/// Column order of `tune_summary.csv`.
pub const TUNE_SUMMARY_CSV_HEADER: &str =
    "method,dataset,m_critical,window_lo,window_hi,fallback,non_monotone,lambda";

/// Column order of the per-method `tune_<method>.csv` files.
pub const TUNE_SCORES_CSV_HEADER: &str = "method,dataset,lambda,mean_val_err,std_val_err,n,selected";

/// Column order of `train.csv`.
pub const TRAIN_CSV_HEADER: &str = "method,dataset,m,lambda,seed,train_err,validation_err,test_err,min_ratio";

/// File-name form of a method label, e.g. `sigm-reg`.
pub fn method_slug(label: &MethodLabel) -> String {
    label.to_string().to_ascii_lowercase()
}

/// The loaded dataset and everything derived from the config that every
/// experiment command needs.
struct Prepared {
    raw: Dataset,
    scaling: Scaling,
    data: SplitData,
    meta: Metadata,
}

/// The parts of a config that determine results, hashed into the metadata.
#[derive(Serialize)]
struct Fingerprint<'a> {
    command: &'a str,
    data_sha256: &'a str,
    schema_sha256: &'a str,
    methods: Vec<String>,
    m_values: &'a [usize],
    trials: usize,
    lambda_grid: &'a [f64],
    lambda: Option<f64>,
    split: [f64; 3],
    seed: u64,
    confidence: f64,
    t_test: String,
    window_fraction: f64,
    record_timing: bool,
}

fn prepare(cfg: &ExperimentConfig, command: &str) -> CliResult<Prepared> {
    let schema = Schema::from_file(&cfg.schema).map_err(CliError::usage)?;
    let raw = load_csv(&cfg.dataset, &schema).map_err(CliError::usage)?;
    let split = raw.split(cfg.split, cfg.seed).map_err(CliError::usage)?;
    let normalized = normalize(&raw, &split.train).map_err(CliError::usage)?;
    let data = SplitData::new(&normalized, &split).map_err(CliError::usage)?;

    let data_sha = sha256_file(&cfg.dataset)?;
    let schema_sha = sha256_file(&cfg.schema)?;
    let fingerprint = Fingerprint {
        command,
        data_sha256: &data_sha,
        schema_sha256: &schema_sha,
        methods: cfg.methods.iter().map(|m| m.to_string()).collect(),
        m_values: &cfg.m_values,
        trials: cfg.trials,
        lambda_grid: &cfg.lambda_grid,
        lambda: cfg.lambda,
        split: cfg.split,
        seed: cfg.seed,
        confidence: cfg.confidence,
        t_test: format!("{:?}", cfg.t_test).to_ascii_lowercase(),
        window_fraction: cfg.window_fraction,
        record_timing: cfg.record_timing,
    };
    let canonical = toml::to_string(&fingerprint).map_err(CliError::runtime)?;

    let mut meta = Metadata::new(command);
    meta.push("config_sha256", sha256_hex(canonical.as_bytes()));
    meta.push("dataset", format!("{} {}", raw.name, cfg.dataset.display()));
    meta.push("data_sha256", data_sha);
    meta.push("seed", cfg.seed);
    meta.push("trials", cfg.trials);
    meta.push("split", format!("{:?}", cfg.split));
    meta.push("rng", RNG_ALGORITHM);
    let sizes = split.sizes();
    log::info!(
        "{}: {} samples, split {}/{}/{}, {} inputs",
        raw.name,
        raw.len(),
        sizes[0],
        sizes[1],
        sizes[2],
        data.input_dim()
    );
    Ok(Prepared {
        scaling: normalized.scaling(),
        raw,
        data,
        meta,
    })
}

fn spec(cfg: &ExperimentConfig, m_values: &[usize]) -> SweepSpec {
    SweepSpec {
        workers: cfg.workers,
        ..SweepSpec::new(m_values.to_vec(), cfg.trials, cfg.seed)
    }
}

/// How a regularized method got its lambda.
#[derive(Debug, Clone, PartialEq)]
pub enum LambdaChoice {
    /// Unregularized method.
    None,
    Fixed(f64),
    Tuned(LambdaTuning),
}

impl LambdaChoice {
    pub fn value(&self) -> Option<f64> {
        match self {
            LambdaChoice::None => None,
            LambdaChoice::Fixed(l) => Some(*l),
            LambdaChoice::Tuned(t) => Some(t.lambda),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodSweep {
    pub label: MethodLabel,
    pub lambda: LambdaChoice,
    pub records: Vec<SweepRecord>,
    pub near_optimal: Option<NearOptimal>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutput {
    pub files: Vec<PathBuf>,
    pub methods: Vec<MethodSweep>,
}

/// Result of the unregularized critical-region detection and lambda tuning
/// for one regularized method.
#[derive(Debug, Clone, PartialEq)]
pub struct TuneReport {
    pub label: MethodLabel,
    pub detection: CriticalDetection,
    pub tuning: LambdaTuning,
}

fn unregularized_twin(label: &MethodLabel) -> CliResult<MethodLabel> {
    label
        .unregularized_twin()
        .ok_or_else(|| CliError::usage(format!("{label} is not a regularized method")))
}

fn preset(label: &MethodLabel, lambda: Option<f64>) -> CliResult<MethodConfig> {
    MethodConfig::preset(label.clone(), lambda).map_err(CliError::usage)
}

/// Sweeps the given unregularized methods in one pass.
fn sweep_labels(
    p: &Prepared,
    cfg: &ExperimentConfig,
    m_values: &[usize],
    labels: &[MethodLabel],
) -> CliResult<Vec<(MethodLabel, Vec<SweepRecord>)>> {
    if labels.is_empty() {
        return Ok(Vec::new());
    }
    let cfgs: Vec<MethodConfig> = labels.iter().map(|l| preset(l, None)).collect::<CliResult<_>>()?;
    let results = sweep_methods(&p.data, &cfgs, &spec(cfg, m_values)).map_err(CliError::runtime)?;
    Ok(labels.iter().cloned().zip(results).collect())
}

/// Detects the critical region from `twin_records` and tunes lambda in it.
fn tune_one(
    p: &Prepared,
    cfg: &ExperimentConfig,
    m_values: &[usize],
    label: &MethodLabel,
    twin_records: &[SweepRecord],
) -> CliResult<TuneReport> {
    let detection = detect_critical(twin_records, cfg.window_fraction).map_err(CliError::runtime)?;
    let window = TuningWindow::from_detection(&detection, m_values).map_err(CliError::runtime)?;
    let tuning = tune_lambda(
        &p.data,
        &preset(label, None)?,
        &window,
        &cfg.lambda_grid,
        cfg.trials,
        cfg.seed,
        cfg.workers,
    )
    .map_err(CliError::runtime)?;
    match &detection {
        CriticalDetection::Found(c) => log::info!(
            "{label}: critical size {} (window {}..{}), lambda {:e}",
            c.m_critical,
            c.window.0,
            c.window.1,
            tuning.lambda
        ),
        CriticalDetection::Absent => log::info!(
            "{label}: no critical size; fallback window {:?}, lambda {:e}",
            tuning.window.m_values,
            tuning.lambda
        ),
    }
    Ok(TuneReport {
        label: label.clone(),
        detection,
        tuning,
    })
}

fn tune_labels(
    p: &Prepared,
    cfg: &ExperimentConfig,
    m_values: &[usize],
    labels: &[MethodLabel],
    known: &[(MethodLabel, Vec<SweepRecord>)],
) -> CliResult<Vec<TuneReport>> {
    let mut missing = Vec::new();
    for label in labels {
        let twin = unregularized_twin(label)?;
        if !known.iter().any(|(l, _)| *l == twin) && !missing.contains(&twin) {
            missing.push(twin);
        }
    }
    let extra = sweep_labels(p, cfg, m_values, &missing)?;
    labels
        .iter()
        .map(|label| {
            let twin = unregularized_twin(label)?;
            let records = known
                .iter()
                .chain(&extra)
                .find(|(l, _)| *l == twin)
                .map(|(_, r)| r)
                .expect("every twin was swept");
            tune_one(p, cfg, m_values, label, records)
        })
        .collect()
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|v| format!("{v:?}")).unwrap_or_default()
}

fn lambda_note(choice: &LambdaChoice) -> String {
    match choice {
        LambdaChoice::None => "none".into(),
        LambdaChoice::Fixed(l) if *l == 0.0 => {
            "0 fixed (thresholded pseudoinverse: components with sigma below the threshold are dropped)".into()
        }
        LambdaChoice::Fixed(l) => format!("{l:e} fixed"),
        LambdaChoice::Tuned(t) => match t.window.critical {
            Some(c) => format!(
                "{:e} tuned on m {}..{} around critical size {}",
                t.lambda, c.window.0, c.window.1, c.m_critical
            ),
            None => format!(
                "{:e} tuned on fallback window {}..{} (no critical size)",
                t.lambda,
                t.window.m_values.first().copied().unwrap_or(0),
                t.window.m_values.last().copied().unwrap_or(0)
            ),
        },
    }
}

fn sweep_csv(meta: &Metadata, dataset: &str, m: &MethodSweep) -> String {
    let mut out = meta.with("method", &m.label).with("lambda", lambda_note(&m.lambda)).render();
    out.push_str(SWEEP_CSV_HEADER);
    out.push('\n');
    let mut rows = Vec::new();
    write_sweep_rows(&mut rows, &m.label.to_string(), dataset, &m.records).expect("writing to memory");
    out.push_str(&String::from_utf8(rows).expect("rows are UTF-8"));
    out
}

fn comparison_csv(meta: &Metadata, dataset: &str, methods: &[MethodSweep]) -> String {
    let mut out = meta.render();
    out.push_str(COMPARISON_CSV_HEADER);
    out.push('\n');
    for m in methods {
        let last = m.records.last();
        let near = m.near_optimal.as_ref();
        let near_time = near.and_then(|n| m.records.iter().find(|r| r.m == n.m)).map(|r| r.wall_time_s);
        let _ = writeln!(
            out,
            "{},{dataset},{},{},{},{},{},{},{},{},{},{},{}",
            m.label,
            fmt_opt(m.lambda.value()),
            near.map(|n| n.best_m.to_string()).unwrap_or_default(),
            fmt_opt(near.map(|n| n.best_err)),
            fmt_opt(near.and_then(|n| m.records.iter().find(|r| r.m == n.best_m)).map(|r| r.std_err)),
            near.map(|n| n.m.to_string()).unwrap_or_default(),
            fmt_opt(near.map(|n| n.mean_err)),
            fmt_opt(near.map(|n| n.std_err)),
            last.map(|r| r.m.to_string()).unwrap_or_default(),
            fmt_opt(last.map(|r| r.mean_err)),
            fmt_opt(last.map(|r| r.std_err)),
            fmt_opt(near_time),
        );
    }
    out
}

/// Sweeps every configured method over the hidden sizes and writes
/// `sweep_<method>.csv` per method plus `comparison.csv`. Regularized
/// methods without a fixed `lambda` are tuned first, inside the critical
/// window of their unregularized twin.
///
/// Fails with a runtime error, after writing the files, if any record has
/// too many failed trials.
pub fn cmd_sweep(cfg: &ExperimentConfig) -> CliResult<SweepOutput> {
    let m_values = cfg.require_m_values()?.to_vec();
    let p = prepare(cfg, "sweep")?;

    let unreg: Vec<MethodLabel> = cfg.methods.iter().filter(|l| !l.is_regularized()).cloned().collect();
    let reg: Vec<MethodLabel> = cfg.methods.iter().filter(|l| l.is_regularized()).cloned().collect();
    let unreg_results = sweep_labels(&p, cfg, &m_values, &unreg)?;

    let choices: Vec<LambdaChoice> = match cfg.lambda {
        Some(l) => vec![LambdaChoice::Fixed(l); reg.len()],
        None => tune_labels(&p, cfg, &m_values, &reg, &unreg_results)?
            .into_iter()
            .map(|r| LambdaChoice::Tuned(r.tuning))
            .collect(),
    };
    let reg_cfgs: Vec<MethodConfig> = reg
        .iter()
        .zip(&choices)
        .map(|(l, c)| preset(l, c.value()))
        .collect::<CliResult<_>>()?;
    let reg_results = if reg_cfgs.is_empty() {
        Vec::new()
    } else {
        sweep_methods(&p.data, &reg_cfgs, &spec(cfg, &m_values)).map_err(CliError::runtime)?
    };

    let mut methods = Vec::new();
    for label in &cfg.methods {
        let (lambda, mut records) = match reg.iter().position(|l| l == label) {
            Some(i) => (choices[i].clone(), reg_results[i].clone()),
            None => {
                let (_, r) = unreg_results.iter().find(|(l, _)| l == label).expect("swept");
                (LambdaChoice::None, r.clone())
            }
        };
        if !cfg.record_timing {
            for r in &mut records {
                r.wall_time_s = f64::NAN;
            }
        }
        let near_optimal = near_optimal_size(&records, cfg.confidence, cfg.t_test).ok();
        methods.push(MethodSweep {
            label: label.clone(),
            lambda,
            records,
            near_optimal,
        });
    }

    let meta = p.meta.with("confidence", cfg.confidence).with("t_test", format!("{:?}", cfg.t_test));
    let mut staged = Staged::new(&cfg.out)?;
    for m in &methods {
        staged.write(&format!("sweep_{}.csv", method_slug(&m.label)), &sweep_csv(&meta, &p.raw.name, m))?;
    }
    staged.write("comparison.csv", &comparison_csv(&meta, &p.raw.name, &methods))?;
    let files = staged.commit()?;

    let invalid: Vec<String> = methods
        .iter()
        .flat_map(|m| m.records.iter().filter(|r| !r.is_valid()).map(move |r| format!("{} m={}", m.label, r.m)))
        .collect();
    if !invalid.is_empty() {
        return Err(CliError::runtime(format!(
            "{} invalid records (too many failed trials): {}; outputs written to {}",
            invalid.len(),
            invalid.join(", "),
            cfg.out.display()
        )));
    }
    Ok(SweepOutput { files, methods })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuneOutput {
    pub files: Vec<PathBuf>,
    pub reports: Vec<TuneReport>,
}

/// Runs critical-region detection on each regularized method's unregularized
/// twin, tunes lambda inside the window, and writes `tune_summary.csv` plus
/// per-method `tune_<method>.csv` score tables.
pub fn cmd_tune(cfg: &ExperimentConfig) -> CliResult<TuneOutput> {
    let m_values = cfg.require_m_values()?.to_vec();
    let reg: Vec<MethodLabel> = cfg.methods.iter().filter(|l| l.is_regularized()).cloned().collect();
    if reg.is_empty() {
        return Err(CliError::usage(
            "invalid `methods`: tune needs at least one regularized method (HypT-reg or Sigm-reg)",
        ));
    }
    let p = prepare(cfg, "tune")?;
    let reports = tune_labels(&p, cfg, &m_values, &reg, &[])?;

    let meta = p.meta.with("lambda_grid", format!("{:?}", cfg.lambda_grid));
    let dataset = &p.raw.name;
    let mut summary = meta.render();
    summary.push_str(TUNE_SUMMARY_CSV_HEADER);
    summary.push('\n');
    let mut staged = Staged::new(&cfg.out)?;
    for r in &reports {
        let (m_c, lo, hi, non_monotone) = match r.detection {
            CriticalDetection::Found(c) => (c.m_critical.to_string(), c.window.0, c.window.1, c.non_monotone),
            CriticalDetection::Absent => {
                let w = &r.tuning.window.m_values;
                (String::new(), w[0], w[w.len() - 1], false)
            }
        };
        let _ = writeln!(
            summary,
            "{},{dataset},{m_c},{lo},{hi},{},{non_monotone},{:?}",
            r.label, r.tuning.window.fallback, r.tuning.lambda
        );

        let mut scores = meta.with("method", &r.label).render();
        scores.push_str(TUNE_SCORES_CSV_HEADER);
        scores.push('\n');
        for s in &r.tuning.scores {
            let _ = writeln!(
                scores,
                "{},{dataset},{:?},{:?},{:?},{},{}",
                r.label,
                s.lambda,
                s.mean_val_err,
                s.std_val_err,
                s.n,
                s.lambda == r.tuning.lambda
            );
        }
        staged.write(&format!("tune_{}.csv", method_slug(&r.label)), &scores)?;
    }
    staged.write("tune_summary.csv", &summary)?;
    let files = staged.commit()?;
    Ok(TuneOutput { files, reports })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutput {
    pub files: Vec<PathBuf>,
    pub bundle: ModelBundle,
    pub train_err: f64,
    pub validation_err: f64,
    pub test_err: f64,
    pub min_ratio: f64,
}

/// Trains one network of `m` hidden units with the weights of trial 0 of a
/// sweep at the same seed, and writes `model.txt` and `train.csv`.
///
/// `lambda` overrides the config's; omitting it and passing zero both give
/// the thresholded pseudoinverse.
pub fn cmd_train(cfg: &ExperimentConfig, m: usize, lambda: Option<f64>) -> CliResult<TrainOutput> {
    if m == 0 {
        return Err(CliError::usage("invalid `m`: hidden size must be at least 1"));
    }
    let [label] = cfg.methods.as_slice() else {
        return Err(CliError::usage(format!(
            "invalid `methods`: train needs exactly one method, got {}",
            cfg.methods.len()
        )));
    };
    let lambda = lambda.or(cfg.lambda);
    if let Some(l) = lambda {
        if !(l.is_finite() && l >= 0.0) {
            return Err(CliError::usage(format!("invalid `lambda`: must be finite and non-negative, got {l}")));
        }
        if !label.is_regularized() && l != 0.0 {
            return Err(CliError::usage(format!("invalid `lambda`: {label} is unregularized")));
        }
    }
    let method = preset(label, lambda.filter(|_| label.is_regularized()))?;
    let p = prepare(cfg, "train")?;

    let seed = trial_seed(cfg.seed, m, 0);
    let mut net = Slfn::random(p.data.input_dim(), m, method.activation, method.init, seed).map_err(CliError::runtime)?;
    let report = net
        .train(&p.data.train.x, &p.data.train.t, &method.regularization.solver())
        .map_err(CliError::runtime)?;
    let err = |part: &pinvnet_core::experiment::Part| -> CliResult<f64> {
        Ok(prediction_error(p.data.task, &net.forward(&part.x).map_err(CliError::runtime)?, part))
    };
    let (train_err, validation_err, test_err) = (err(&p.data.train)?, err(&p.data.validation)?, err(&p.data.test)?);
    let bundle = ModelBundle::new(
        net.clone(),
        p.data.task,
        p.raw.class_names.clone(),
        p.raw.encoder.clone(),
        p.scaling.clone(),
    )
    .map_err(CliError::runtime)?;

    let mut staged = Staged::new(&cfg.out)?;
    staged.write("model.txt", &bundle.to_text().map_err(CliError::runtime)?)?;
    let mut csv = p.meta.with("method", label).render();
    csv.push_str(TRAIN_CSV_HEADER);
    csv.push('\n');
    let _ = writeln!(
        csv,
        "{label},{},{m},{},{},{train_err:?},{validation_err:?},{test_err:?},{:?}",
        p.raw.name,
        fmt_opt(lambda),
        cfg.seed,
        report.min_ratio
    );
    staged.write("train.csv", &csv)?;
    let files = staged.commit()?;
    Ok(TrainOutput {
        files,
        bundle,
        train_err,
        validation_err,
        test_err,
        min_ratio: report.min_ratio,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictOutput {
    /// The written file, or `None` when the CSV went to standard output.
    pub file: Option<PathBuf>,
    pub csv: String,
    pub predictions: Vec<Prediction>,
}

/// Splits a record on commas if it has any, otherwise on whitespace.
fn fields(line: &str) -> Vec<&str> {
    if line.contains(',') {
        line.split(',').map(str::trim).collect()
    } else {
        line.split_whitespace().collect()
    }
}

/// Predicts one value (regression) or class name (classification) per
/// non-empty input line. Inputs hold only the raw feature fields, in schema
/// order.
pub fn cmd_predict(model: &Path, input: &Path, out: Option<&Path>, skip_header: bool) -> CliResult<PredictOutput> {
    let bundle = ModelBundle::load(model).map_err(CliError::usage)?;
    let text = std::fs::read_to_string(input)
        .map_err(|e| CliError::usage(format!("cannot read input {}: {e}", input.display())))?;
    let rows: Vec<Vec<&str>> = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .skip(usize::from(skip_header))
        .map(fields)
        .collect();
    let predictions = bundle.predict(&rows).map_err(|e| match e {
        pinvnet_core::Error::ShapeMismatch { .. } | pinvnet_core::Error::Parse { .. } => CliError::usage(e),
        other => CliError::runtime(other),
    })?;

    let mut meta = Metadata::new("predict");
    meta.push("model_sha256", sha256_file(model)?);
    meta.push("input", input.display());
    let mut csv = meta.render();
    csv.push_str("row,prediction\n");
    for (i, pred) in predictions.iter().enumerate() {
        let _ = match pred {
            Prediction::Value(v) => writeln!(csv, "{},{v:?}", i + 1),
            Prediction::Class(c) => writeln!(csv, "{},{}", i + 1, bundle.class_names[*c]),
        };
    }

    let file = match out {
        Some(path) => {
            let name = path
                .file_name()
                .ok_or_else(|| CliError::usage(format!("invalid output path {}", path.display())))?
                .to_string_lossy()
                .into_owned();
            let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
            let mut staged = Staged::new(dir)?;
            staged.write(&name, &csv)?;
            staged.commit()?.pop()
        }
        None => None,
    };
    Ok(PredictOutput { file, csv, predictions })
}
