//! Multi-trial experiment protocol: hidden-size sweeps, detection of the
//! critical hidden-layer size, tuning of the Tikhonov parameter inside the
//! critical window, and near-optimal size selection.
//!
//! Every trial draws its input weights from a seed derived from
//! `(base_seed, m, trial)`, so methods evaluated with the same base seed see
//! the same random weights at each size, and adding trials never changes
//! earlier ones. Trials may run on a worker pool; results are always reduced
//! in `(m, trial)` order.

use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;

use crate::data::{argmax, normalize, Dataset, Split, TaskKind};
use crate::error::{Error, Result};
use crate::model::{derive_seed, Activation, InitRegime, Slfn, Solver, TrainReport};
use crate::numerics::{self, filter_factors, Lambda, Matrix, SvdFactors, TruncationPolicy};
use crate::stats::{summarize, t_test_with, SampleSummary, TTestKind};

/// Largest share of failed trials a record may have and still be valid.
pub const FAILURE_BUDGET: f64 = 0.10;

/// Default critical-window half-width as a fraction of the critical size.
pub const DEFAULT_WINDOW_FRACTION: f64 = 0.25;

/// `1e-14, 1e-13, ..., 1e-1`.
pub fn default_lambda_grid() -> Vec<f64> {
    (-14..=-1).map(|e| 10f64.powi(e)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Regularization {
    None,
    Tikhonov(Lambda),
}

impl Regularization {
    pub fn solver(&self) -> Solver {
        match *self {
            Regularization::None => Solver::Pseudoinverse(TruncationPolicy::DefaultThreshold),
            Regularization::Tikhonov(l) if l.value() == 0.0 => Solver::Pseudoinverse(TruncationPolicy::DefaultThreshold),
            Regularization::Tikhonov(l) => Solver::Tikhonov(l),
        }
    }
}

/// The five named settings compared in the experiments, plus custom ones.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum MethodLabel {
    HypTReg,
    SigmReg,
    HypTUnreg,
    SigmUnreg,
    Elm,
    Custom(String),
}

impl MethodLabel {
    pub fn is_regularized(&self) -> bool {
        matches!(self, MethodLabel::HypTReg | MethodLabel::SigmReg)
    }

    /// The unregularized method with the same activation and weight regime.
    pub fn unregularized_twin(&self) -> Option<MethodLabel> {
        match self {
            MethodLabel::HypTReg => Some(MethodLabel::HypTUnreg),
            MethodLabel::SigmReg => Some(MethodLabel::SigmUnreg),
            _ => None,
        }
    }
}

impl fmt::Display for MethodLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MethodLabel::HypTReg => "HypT-reg",
            MethodLabel::SigmReg => "Sigm-reg",
            MethodLabel::HypTUnreg => "HypT-unreg",
            MethodLabel::SigmUnreg => "Sigm-unreg",
            MethodLabel::Elm => "ELM",
            MethodLabel::Custom(s) => s,
        })
    }
}

impl FromStr for MethodLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "hypt-reg" => MethodLabel::HypTReg,
            "sigm-reg" => MethodLabel::SigmReg,
            "hypt-unreg" => MethodLabel::HypTUnreg,
            "sigm-unreg" => MethodLabel::SigmUnreg,
            "elm" => MethodLabel::Elm,
            _ => {
                if s.trim().is_empty() || s.contains(|c: char| c == ',' || c.is_whitespace()) {
                    return Err(Error::param("method", format!("invalid method label {s:?}")));
                }
                MethodLabel::Custom(s.to_string())
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodConfig {
    pub label: MethodLabel,
    pub activation: Activation,
    pub init: InitRegime,
    pub regularization: Regularization,
}

impl MethodConfig {
    /// Preset for a named method. Regularized presets take `lambda`
    /// (`None` leaves them unregularized until a value is tuned).
    pub fn preset(label: MethodLabel, lambda: Option<f64>) -> Result<Self> {
        let reg = match lambda {
            Some(v) => Regularization::Tikhonov(Lambda::new(v)?),
            None => Regularization::None,
        };
        let (activation, init, regularization) = match &label {
            MethodLabel::HypTReg => (Activation::Tanh, InitRegime::Scaled, reg),
            MethodLabel::SigmReg => (Activation::Sigmoid, InitRegime::Scaled, reg),
            MethodLabel::HypTUnreg => (Activation::Tanh, InitRegime::Scaled, Regularization::None),
            MethodLabel::SigmUnreg => (Activation::Sigmoid, InitRegime::Scaled, Regularization::None),
            MethodLabel::Elm => (
                Activation::Sigmoid,
                InitRegime::FixedInterval { half_width: 1.0 },
                Regularization::None,
            ),
            MethodLabel::Custom(name) => {
                return Err(Error::param("method", format!("{name:?} is not a preset; build it explicitly")))
            }
        };
        Ok(MethodConfig {
            label,
            activation,
            init,
            regularization,
        })
    }

    pub fn with_lambda(&self, lambda: f64) -> Result<Self> {
        Ok(MethodConfig {
            regularization: Regularization::Tikhonov(Lambda::new(lambda)?),
            ..self.clone()
        })
    }

    /// Presets must keep their defining settings.
    pub fn validate(&self) -> Result<()> {
        let ok = match self.label {
            MethodLabel::Elm => {
                self.activation == Activation::Sigmoid
                    && self.init == InitRegime::FixedInterval { half_width: 1.0 }
                    && self.regularization == Regularization::None
            }
            MethodLabel::HypTUnreg | MethodLabel::SigmUnreg => self.regularization == Regularization::None,
            _ => true,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::param("method", format!("{} settings do not match its definition", self.label)))
        }
    }
}

/// Inputs, targets and (for classification) labels of one split part.
#[derive(Debug, Clone, PartialEq)]
pub struct Part {
    pub x: Matrix,
    pub t: Matrix,
    pub labels: Option<Vec<usize>>,
}

/// A dataset cut into its three parts.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitData {
    pub name: String,
    pub task: TaskKind,
    pub train: Part,
    pub validation: Part,
    pub test: Part,
}

impl SplitData {
    /// Normalizes features on the training part, then partitions.
    pub fn prepare(raw: &Dataset, split: &Split) -> Result<Self> {
        let normalized = normalize(raw, &split.train)?;
        SplitData::new(&normalized, split)
    }

    /// Partitions without touching the features.
    pub fn new(d: &Dataset, split: &Split) -> Result<Self> {
        let part = |rows: &[usize]| -> Result<Part> {
            if let Some(&bad) = rows.iter().find(|&&r| r >= d.len()) {
                return Err(Error::param("split", format!("row {bad} out of range")));
            }
            let (x, t) = d.select_rows(rows);
            Ok(Part {
                x,
                t,
                labels: d.labels.as_ref().map(|l| rows.iter().map(|&r| l[r]).collect()),
            })
        };
        Ok(SplitData {
            name: d.name.clone(),
            task: d.task,
            train: part(&split.train)?,
            validation: part(&split.validation)?,
            test: part(&split.test)?,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.train.x.ncols()
    }
}

/// RMSE for regression, misclassification fraction for classification.
pub fn prediction_error(task: TaskKind, predictions: &Matrix, part: &Part) -> f64 {
    match (task, &part.labels) {
        (TaskKind::Classification { .. }, Some(labels)) => {
            let wrong = predictions
                .row_iter()
                .zip(labels)
                .filter(|(row, &l)| {
                    let row: Vec<f64> = row.iter().copied().collect();
                    argmax(&row) != l
                })
                .count();
            wrong as f64 / labels.len().max(1) as f64
        }
        _ => {
            let n = predictions.len().max(1) as f64;
            ((predictions - &part.t).norm_squared() / n).sqrt()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialOutcome {
    pub validation_err: f64,
    pub test_err: f64,
    pub train_err: f64,
    pub min_ratio: f64,
    /// Seconds spent on weight initialization, the hidden matrix, its SVD and
    /// the output-weight solve.
    pub wall_time_s: f64,
}

/// Everything about one random network that does not depend on the solver.
struct TrialBasis {
    factors: SvdFactors,
    projected: Matrix,
    h_train: Matrix,
    h_val: Matrix,
    h_test: Matrix,
    report: TrainReport,
    setup_s: f64,
}

fn build_basis(data: &SplitData, activation: Activation, init: InitRegime, m: usize, seed: u64) -> Result<TrialBasis> {
    let start = Instant::now();
    let net = Slfn::random(data.input_dim(), m, activation, init, seed)?;
    let h_train = net.hidden_matrix(&data.train.x)?;
    let factors = numerics::svd(&h_train)?;
    let setup_s = start.elapsed().as_secs_f64();
    let projected = factors.u.tr_mul(&data.train.t);
    let report = TrainReport::from_factors(&factors);
    Ok(TrialBasis {
        h_val: net.hidden_matrix(&data.validation.x)?,
        h_test: net.hidden_matrix(&data.test.x)?,
        h_train,
        factors,
        projected,
        report,
        setup_s,
    })
}

impl TrialBasis {
    fn outcome(&self, data: &SplitData, solver: &Solver) -> Result<TrialOutcome> {
        let start = Instant::now();
        let d = match *solver {
            Solver::Pseudoinverse(policy) => self.factors.inverted_sigma(policy)?,
            Solver::Tikhonov(lambda) => filter_factors(&self.factors, lambda).values,
        };
        let w = self.factors.apply_diagonal_projected(&d, &self.projected);
        let solve_s = start.elapsed().as_secs_f64();
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "output weights" });
        }
        Ok(TrialOutcome {
            validation_err: prediction_error(data.task, &(&self.h_val * &w), &data.validation),
            test_err: prediction_error(data.task, &(&self.h_test * &w), &data.test),
            train_err: prediction_error(data.task, &(&self.h_train * &w), &data.train),
            min_ratio: self.report.min_ratio,
            wall_time_s: self.setup_s + solve_s,
        })
    }
}

fn trial_error(m: usize, seed: u64, e: Error) -> Error {
    Error::Trial {
        m,
        seed,
        source: Box::new(e),
    }
}

/// Trains one network of `m` hidden units on the training part and scores
/// it on the validation and test parts.
pub fn run_trial(data: &SplitData, cfg: &MethodConfig, m: usize, seed: u64) -> Result<TrialOutcome> {
    if m == 0 {
        return Err(Error::param("m", "hidden size must be at least 1"));
    }
    build_basis(data, cfg.activation, cfg.init, m, seed)
        .and_then(|b| b.outcome(data, &cfg.regularization.solver()))
        .map_err(|e| trial_error(m, seed, e))
}

/// Seed of trial `trial` at hidden size `m`.
pub fn trial_seed(base_seed: u64, m: usize, trial: usize) -> u64 {
    derive_seed(base_seed, &[m as u64, trial as u64])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SeedMode {
    #[default]
    PerTrial,
    /// Every trial at a given size reuses trial 0's seed.
    Shared,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub m_values: Vec<usize>,
    pub trials: usize,
    pub base_seed: u64,
    /// Worker threads; `0` uses the global pool.
    pub workers: usize,
    pub seed_mode: SeedMode,
}

impl SweepSpec {
    pub fn new(m_values: Vec<usize>, trials: usize, base_seed: u64) -> Self {
        SweepSpec {
            m_values,
            trials,
            base_seed,
            workers: 0,
            seed_mode: SeedMode::PerTrial,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials < 2 {
            return Err(Error::param("trials", format!("need at least 2, got {}", self.trials)));
        }
        validate_m_values(&self.m_values)
    }

    fn seed(&self, m: usize, trial: usize) -> u64 {
        match self.seed_mode {
            SeedMode::PerTrial => trial_seed(self.base_seed, m, trial),
            SeedMode::Shared => trial_seed(self.base_seed, m, 0),
        }
    }
}

pub fn validate_m_values(m_values: &[usize]) -> Result<()> {
    if m_values.is_empty() {
        return Err(Error::param("m_range", "empty"));
    }
    if m_values[0] == 0 {
        return Err(Error::param("m_range", "hidden sizes start at 1"));
    }
    if m_values.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::param("m_range", "must be strictly ascending"));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRecord {
    pub m: usize,
    /// Mean test error across successful trials.
    pub mean_err: f64,
    pub std_err: f64,
    pub val_mean_err: f64,
    pub val_std_err: f64,
    /// Median of `sigma_min / threshold` across trials.
    pub min_ratio: f64,
    /// Median training time of one trial.
    pub wall_time_s: f64,
    pub n_trials: usize,
    pub n_failed: usize,
}

impl SweepRecord {
    pub fn is_valid(&self) -> bool {
        let total = self.n_trials + self.n_failed;
        self.n_trials >= 2 && (self.n_failed as f64) <= FAILURE_BUDGET * total as f64
    }

    pub fn test_summary(&self) -> Result<SampleSummary> {
        SampleSummary::new(self.n_trials, self.mean_err, self.std_err)
    }

    pub fn validation_summary(&self) -> Result<SampleSummary> {
        SampleSummary::new(self.n_trials, self.val_mean_err, self.val_std_err)
    }
}

fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    match summarize(values) {
        Ok(s) => (s.mean, s.std),
        Err(_) if values.len() == 1 => (values[0], f64::NAN),
        Err(_) => (f64::NAN, f64::NAN),
    }
}

/// A trial outcome, or the rendered error of a failed trial.
type TrialResult = std::result::Result<TrialOutcome, String>;

fn aggregate(m: usize, outcomes: &[TrialResult]) -> SweepRecord {
    let ok: Vec<&TrialOutcome> = outcomes.iter().filter_map(|o| o.as_ref().ok()).collect();
    for e in outcomes.iter().filter_map(|o| o.as_ref().err()) {
        log::warn!("{e}");
    }
    let test: Vec<f64> = ok.iter().map(|o| o.test_err).collect();
    let val: Vec<f64> = ok.iter().map(|o| o.validation_err).collect();
    let (mean_err, std_err) = mean_std(&test);
    let (val_mean_err, val_std_err) = mean_std(&val);
    SweepRecord {
        m,
        mean_err,
        std_err,
        val_mean_err,
        val_std_err,
        min_ratio: median(&mut ok.iter().map(|o| o.min_ratio).collect::<Vec<_>>()),
        wall_time_s: median(&mut ok.iter().map(|o| o.wall_time_s).collect::<Vec<_>>()),
        n_trials: ok.len(),
        n_failed: outcomes.len() - ok.len(),
    }
}

/// Runs `f` over `jobs` on a pool of `workers` threads, keeping job order.
fn ordered_map<J, T, F>(jobs: &[J], workers: usize, f: F) -> Result<Vec<T>>
where
    J: Sync,
    T: Send,
    F: Fn(&J) -> T + Sync + Send,
{
    if workers == 1 {
        return Ok(jobs.iter().map(&f).collect());
    }
    if workers == 0 {
        return Ok(jobs.par_iter().map(&f).collect());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::param("workers", e.to_string()))?;
    Ok(pool.install(|| jobs.par_iter().map(&f).collect()))
}

/// One record per hidden size, each aggregated over `spec.trials` trials.
pub fn sweep(data: &SplitData, cfg: &MethodConfig, spec: &SweepSpec) -> Result<Vec<SweepRecord>> {
    Ok(sweep_methods(data, std::slice::from_ref(cfg), spec)?.remove(0))
}

/// Sweeps several methods at once. Methods sharing an activation and weight
/// regime reuse each trial's hidden matrix and SVD, which is sound because
/// they share trial seeds.
pub fn sweep_methods(data: &SplitData, cfgs: &[MethodConfig], spec: &SweepSpec) -> Result<Vec<Vec<SweepRecord>>> {
    spec.validate()?;
    for cfg in cfgs {
        cfg.validate()?;
    }
    let mut groups: Vec<(Activation, InitRegime, Vec<usize>)> = Vec::new();
    for (i, cfg) in cfgs.iter().enumerate() {
        match groups.iter_mut().find(|g| g.0 == cfg.activation && g.1 == cfg.init) {
            Some(g) => g.2.push(i),
            None => groups.push((cfg.activation, cfg.init, vec![i])),
        }
    }

    let jobs: Vec<(usize, usize)> = spec
        .m_values
        .iter()
        .flat_map(|&m| (0..spec.trials).map(move |t| (m, t)))
        .collect();
    let mut out: Vec<Vec<SweepRecord>> = vec![Vec::new(); cfgs.len()];

    for (activation, init, members) in &groups {
        let results: Vec<Vec<TrialResult>> = ordered_map(&jobs, spec.workers, |&(m, trial)| {
            let seed = spec.seed(m, trial);
            match build_basis(data, *activation, *init, m, seed) {
                Ok(basis) => members
                    .iter()
                    .map(|&i| {
                        basis
                            .outcome(data, &cfgs[i].regularization.solver())
                            .map_err(|e| trial_error(m, seed, e).to_string())
                    })
                    .collect(),
                Err(e) => vec![Err(trial_error(m, seed, e).to_string()); members.len()],
            }
        })?;

        for (slot, &i) in members.iter().enumerate() {
            for (k, &m) in spec.m_values.iter().enumerate() {
                let outcomes: Vec<TrialResult> = results[k * spec.trials..(k + 1) * spec.trials]
                    .iter()
                    .map(|per_method| per_method[slot].clone())
                    .collect();
                out[i].push(aggregate(m, &outcomes));
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CriticalRegion {
    pub m_critical: usize,
    /// Inclusive window `[lo, hi]` around the critical size.
    pub window: (usize, usize),
    /// The ratio climbed back above one after the first crossing.
    pub non_monotone: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CriticalDetection {
    Found(CriticalRegion),
    /// The ratio never dropped below one.
    Absent,
}

/// First hidden size whose median `sigma_min / threshold` drops below one.
pub fn detect_critical(records: &[SweepRecord], window_fraction: f64) -> Result<CriticalDetection> {
    if !(window_fraction >= 0.0) || !window_fraction.is_finite() {
        return Err(Error::param("window_fraction", format!("{window_fraction}")));
    }
    validate_m_values(&records.iter().map(|r| r.m).collect::<Vec<_>>())?;
    let Some(pos) = records.iter().position(|r| r.min_ratio < 1.0) else {
        return Ok(CriticalDetection::Absent);
    };
    let m_c = records[pos].m;
    let half = (window_fraction * m_c as f64).round() as usize;
    Ok(CriticalDetection::Found(CriticalRegion {
        m_critical: m_c,
        window: (m_c.saturating_sub(half).max(1), m_c + half),
        non_monotone: records[pos + 1..].iter().any(|r| r.min_ratio >= 1.0),
    }))
}

/// Hidden sizes used for lambda tuning.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TuningWindow {
    pub m_values: Vec<usize>,
    pub critical: Option<CriticalRegion>,
    /// No critical region was found; the top decile of the sweep range is
    /// used instead.
    pub fallback: bool,
}

impl TuningWindow {
    pub fn from_detection(detection: &CriticalDetection, m_range: &[usize]) -> Result<Self> {
        match detection {
            CriticalDetection::Found(region) => Ok(TuningWindow {
                m_values: (region.window.0..=region.window.1).collect(),
                critical: Some(*region),
                fallback: false,
            }),
            CriticalDetection::Absent => {
                validate_m_values(m_range)?;
                let k = m_range.len().div_ceil(10);
                Ok(TuningWindow {
                    m_values: m_range[m_range.len() - k..].to_vec(),
                    critical: None,
                    fallback: true,
                })
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaScore {
    pub lambda: f64,
    pub mean_val_err: f64,
    pub std_val_err: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LambdaTuning {
    pub lambda: f64,
    pub scores: Vec<LambdaScore>,
    pub window: TuningWindow,
}

pub fn validate_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::param("lambda_grid", "empty"));
    }
    if grid.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
        return Err(Error::param("lambda_grid", "values must be positive and finite"));
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::param("lambda_grid", "must be strictly ascending"));
    }
    Ok(())
}

/// Picks the grid value with the lowest mean validation error over every
/// `(m, trial)` in the window. Ties go to the larger lambda.
pub fn tune_lambda(
    data: &SplitData,
    cfg: &MethodConfig,
    window: &TuningWindow,
    grid: &[f64],
    trials: usize,
    base_seed: u64,
    workers: usize,
) -> Result<LambdaTuning> {
    validate_grid(grid)?;
    validate_m_values(&window.m_values)?;
    if trials == 0 {
        return Err(Error::param("trials", "need at least 1"));
    }
    let lambdas: Vec<Lambda> = grid.iter().map(|&l| Lambda::new(l)).collect::<Result<_>>()?;
    let jobs: Vec<(usize, usize)> = window
        .m_values
        .iter()
        .flat_map(|&m| (0..trials).map(move |t| (m, t)))
        .collect();

    let per_job: Vec<Result<Vec<f64>>> = ordered_map(&jobs, workers, |&(m, trial)| {
        let seed = trial_seed(base_seed, m, trial);
        let basis = build_basis(data, cfg.activation, cfg.init, m, seed).map_err(|e| trial_error(m, seed, e))?;
        lambdas
            .iter()
            .map(|&l| {
                basis
                    .outcome(data, &Solver::Tikhonov(l))
                    .map(|o| o.validation_err)
                    .map_err(|e| trial_error(m, seed, e))
            })
            .collect()
    })?;

    let mut columns: Vec<Vec<f64>> = vec![Vec::with_capacity(jobs.len()); grid.len()];
    let mut failed = 0usize;
    for r in per_job {
        match r {
            Ok(errs) => {
                for (col, e) in columns.iter_mut().zip(errs) {
                    col.push(e);
                }
            }
            Err(e) => {
                log::warn!("{e}");
                failed += 1;
            }
        }
    }
    if (failed as f64) > FAILURE_BUDGET * jobs.len() as f64 || columns[0].is_empty() {
        return Err(Error::InsufficientData(format!(
            "{failed} of {} tuning trials failed",
            jobs.len()
        )));
    }

    let scores: Vec<LambdaScore> = grid
        .iter()
        .zip(&columns)
        .map(|(&lambda, errs)| {
            let (mean, std) = mean_std(errs);
            LambdaScore {
                lambda,
                mean_val_err: mean,
                std_val_err: std,
                n: errs.len(),
            }
        })
        .collect();
    let mut best = 0;
    for (i, s) in scores.iter().enumerate() {
        if s.mean_val_err <= scores[best].mean_val_err {
            best = i;
        }
    }
    Ok(LambdaTuning {
        lambda: scores[best].lambda,
        scores,
        window: window.clone(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NearOptimal {
    pub m: usize,
    pub mean_err: f64,
    pub std_err: f64,
    pub best_m: usize,
    pub best_err: f64,
}

/// Smallest hidden size whose mean test error is not significantly worse
/// than the best mean error of the sweep.
pub fn near_optimal_size(records: &[SweepRecord], confidence: f64, kind: TTestKind) -> Result<NearOptimal> {
    let usable: Vec<&SweepRecord> = records.iter().filter(|r| r.is_valid()).collect();
    if usable.is_empty() {
        return Err(Error::InsufficientData("no valid records with at least 2 trials".into()));
    }
    let best = usable
        .iter()
        .copied()
        .min_by(|a, b| a.mean_err.total_cmp(&b.mean_err).then(a.m.cmp(&b.m)))
        .expect("non-empty");
    let best_summary = best.test_summary()?;
    for r in &usable {
        let qualifies = if r.mean_err <= best.mean_err {
            true
        } else {
            let res = t_test_with(&r.test_summary()?, &best_summary, confidence, kind)?;
            !res.significant
        };
        if qualifies {
            return Ok(NearOptimal {
                m: r.m,
                mean_err: r.mean_err,
                std_err: r.std_err,
                best_m: best.m,
                best_err: best.mean_err,
            });
        }
    }
    unreachable!("the best record always qualifies")
}

/// Column order of sweep result files.
pub const SWEEP_CSV_HEADER: &str =
    "method,dataset,m,mean_err,std_err,min_ratio,n_trials,wall_time_s,val_mean_err,val_std_err,n_failed";

/// Writes the header line and one row per record. Floats use the shortest
/// representation that round-trips.
pub fn write_sweep_csv<W: Write>(mut w: W, method: &str, dataset: &str, records: &[SweepRecord]) -> io::Result<()> {
    writeln!(w, "{SWEEP_CSV_HEADER}")?;
    write_sweep_rows(&mut w, method, dataset, records)
}

pub fn write_sweep_rows<W: Write>(mut w: W, method: &str, dataset: &str, records: &[SweepRecord]) -> io::Result<()> {
    for r in records {
        writeln!(
            w,
            "{method},{dataset},{},{:?},{:?},{:?},{},{:?},{:?},{:?},{}",
            r.m, r.mean_err, r.std_err, r.min_ratio, r.n_trials, r.wall_time_s, r.val_mean_err, r.val_std_err, r.n_failed
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(m: usize, ratio: f64) -> SweepRecord {
        SweepRecord {
            m,
            mean_err: 1.0,
            std_err: 0.1,
            val_mean_err: 1.0,
            val_std_err: 0.1,
            min_ratio: ratio,
            wall_time_s: 0.0,
            n_trials: 10,
            n_failed: 0,
        }
    }

    #[test]
    fn first_crossing() {
        let recs: Vec<_> = [10.0, 5.0, 0.5, 0.1].iter().enumerate().map(|(i, &r)| record(i + 1, r)).collect();
        match detect_critical(&recs, 0.25).unwrap() {
            CriticalDetection::Found(c) => {
                assert_eq!(c.m_critical, 3);
                assert!(!c.non_monotone);
                assert!(c.window.0 <= 3 && c.window.1 >= 3);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn no_crossing_is_absent() {
        let recs: Vec<_> = (1..=5).map(|m| record(m, 2.0)).collect();
        assert_eq!(detect_critical(&recs, 0.25).unwrap(), CriticalDetection::Absent);
    }

    #[test]
    fn dip_and_recover_is_flagged() {
        let recs: Vec<_> = [3.0, 0.5, 2.0, 0.2].iter().enumerate().map(|(i, &r)| record(i + 1, r)).collect();
        match detect_critical(&recs, 0.25).unwrap() {
            CriticalDetection::Found(c) => {
                assert_eq!(c.m_critical, 2);
                assert!(c.non_monotone);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn window_width() {
        let recs: Vec<_> = (1..=200).map(|m| record(m, if m >= 100 { 0.5 } else { 2.0 })).collect();
        let CriticalDetection::Found(c) = detect_critical(&recs, 0.25).unwrap() else {
            panic!()
        };
        assert_eq!(c.window, (75, 125));
    }

    #[test]
    fn fallback_window_is_top_decile() {
        let range: Vec<usize> = (1..=25).collect();
        let w = TuningWindow::from_detection(&CriticalDetection::Absent, &range).unwrap();
        assert!(w.fallback);
        assert_eq!(w.m_values, vec![23, 24, 25]);
    }

    #[test]
    fn near_optimal_flat_curve() {
        let recs: Vec<_> = (1..=5).map(|m| record(m, 2.0)).collect();
        assert_eq!(near_optimal_size(&recs, 0.95, TTestKind::Welch).unwrap().m, 1);
    }

    #[test]
    fn near_optimal_separated_curve() {
        let recs: Vec<_> = (1..=5)
            .map(|m| SweepRecord {
                mean_err: 10.0 - m as f64,
                std_err: 0.01,
                ..record(m, 2.0)
            })
            .collect();
        let n = near_optimal_size(&recs, 0.95, TTestKind::Welch).unwrap();
        assert_eq!((n.m, n.best_m), (5, 5));
    }

    #[test]
    fn near_optimal_needs_two_trials() {
        let recs = vec![SweepRecord {
            n_trials: 1,
            ..record(1, 2.0)
        }];
        assert!(near_optimal_size(&recs, 0.95, TTestKind::Welch).is_err());
    }

    #[test]
    fn grid_validation() {
        assert!(validate_grid(&[]).is_err());
        assert!(validate_grid(&[1e-3, 1e-4]).is_err());
        assert!(validate_grid(&[0.0, 1e-4]).is_err());
        assert!(validate_grid(&[1e-6]).is_ok());
        assert_eq!(default_lambda_grid().len(), 14);
        assert_eq!(default_lambda_grid()[0], 1e-14);
    }

    #[test]
    fn elm_preset_is_locked() {
        let mut elm = MethodConfig::preset(MethodLabel::Elm, None).unwrap();
        assert!(elm.validate().is_ok());
        elm.activation = Activation::Tanh;
        assert!(elm.validate().is_err());
    }

    #[test]
    fn labels_roundtrip() {
        for l in ["HypT-reg", "Sigm-reg", "HypT-unreg", "Sigm-unreg", "ELM"] {
            assert_eq!(l.parse::<MethodLabel>().unwrap().to_string(), l);
        }
        assert!("a b".parse::<MethodLabel>().is_err());
    }

    #[test]
    fn median_even_odd() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn csv_rows() {
        let mut buf = Vec::new();
        write_sweep_csv(&mut buf, "ELM", "iris", &[record(3, 0.5)]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), SWEEP_CSV_HEADER);
        assert_eq!(lines.next().unwrap(), "ELM,iris,3,1.0,0.1,0.5,10,0.0,1.0,0.1,0");
    }
}
