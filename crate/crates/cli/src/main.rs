use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pinvnet_cli::config::{parse_float_list, parse_m_range, MRange};
use pinvnet_cli::{cmd_predict, cmd_sweep, cmd_train, cmd_tune, CliError, CliResult, ExperimentConfig, RawConfig};
use pinvnet_core::stats::TTestKind;

/// Single-hidden-layer networks trained by SVD pseudoinversion.
///
/// Settings come from a TOML config file (--config); any flag given on the
/// command line replaces the file's value.
#[derive(Parser)]
#[command(name = "pinvnet", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sweep hidden sizes for each method; write sweep_<method>.csv and comparison.csv.
    Sweep(ExperimentArgs),
    /// Detect the critical hidden size and tune lambda inside it.
    Tune(ExperimentArgs),
    /// Train one network and write model.txt and train.csv.
    Train {
        #[command(flatten)]
        args: ExperimentArgs,
        /// Hidden-layer size.
        #[arg(long)]
        m: usize,
        /// Tikhonov parameter; omitted or 0 means the thresholded pseudoinverse.
        #[arg(long)]
        lambda: Option<f64>,
    },
    /// Predict with a saved model; one output row per input row.
    Predict {
        #[arg(long)]
        model: PathBuf,
        /// Raw feature fields, comma- or whitespace-separated.
        #[arg(long)]
        input: PathBuf,
        /// Output CSV; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// The first non-empty input line is a header.
        #[arg(long)]
        skip_header: bool,
    },
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Data file.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Schema file; defaults to the data file with a .schema.toml extension.
    #[arg(long)]
    schema: Option<PathBuf>,
    /// Comma-separated: HypT-reg, HypT-unreg, Sigm-reg, Sigm-unreg, ELM.
    #[arg(long)]
    method: Option<String>,
    /// "LO..HI", "LO..HI:STEP" or "A,B,C".
    #[arg(long)]
    m_range: Option<String>,
    #[arg(long)]
    trials: Option<usize>,
    /// Comma-separated ascending values.
    #[arg(long)]
    lambda_grid: Option<String>,
    /// Train/validation/test fractions, e.g. "0.5,0.25,0.25".
    #[arg(long)]
    split: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; 0 uses every core.
    #[arg(long)]
    workers: Option<usize>,
    /// Confidence level of the near-optimal-size t-test.
    #[arg(long)]
    confidence: Option<f64>,
    #[arg(long, value_enum)]
    t_test: Option<TTestArg>,
    /// Critical-window half-width as a fraction of the critical size.
    #[arg(long)]
    window_fraction: Option<f64>,
    /// Record measured training times instead of NaN.
    #[arg(long)]
    record_timing: bool,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum TTestArg {
    Welch,
    Pooled,
}

fn flag_error(flag: &str, e: String) -> CliError {
    CliError::usage(format!("invalid --{flag}: {e}"))
}

impl ExperimentArgs {
    fn load(self) -> CliResult<ExperimentConfig> {
        let split = match &self.split {
            None => None,
            Some(s) => {
                let v = parse_float_list(s).map_err(|e| flag_error("split", e))?;
                Some(<[f64; 3]>::try_from(v).map_err(|v| flag_error("split", format!("need 3 fractions, got {}", v.len())))?)
            }
        };
        let flags = RawConfig {
            dataset: self.dataset,
            schema: self.schema,
            methods: self.method.map(|s| s.split(',').map(|m| m.trim().to_string()).collect()),
            m_range: match self.m_range {
                Some(s) => Some(MRange::List(parse_m_range(&s).map_err(|e| flag_error("m-range", e))?)),
                None => None,
            },
            trials: self.trials,
            lambda_grid: match self.lambda_grid {
                Some(s) => Some(parse_float_list(&s).map_err(|e| flag_error("lambda-grid", e))?),
                None => None,
            },
            lambda: None,
            split,
            seed: self.seed,
            out: self.out,
            workers: self.workers,
            confidence: self.confidence,
            t_test: self.t_test.map(|t| match t {
                TTestArg::Welch => TTestKind::Welch,
                TTestArg::Pooled => TTestKind::Pooled,
            }),
            window_fraction: self.window_fraction,
            record_timing: self.record_timing.then_some(true),
        };
        ExperimentConfig::load(self.config.as_deref(), flags)
    }
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Sweep(args) => {
            let out = cmd_sweep(&args.load()?)?;
            for m in &out.methods {
                match &m.near_optimal {
                    Some(n) => println!(
                        "{}: best m={} err={:.6}; near-optimal m={} err={:.6}±{:.6}",
                        m.label, n.best_m, n.best_err, n.m, n.mean_err, n.std_err
                    ),
                    None => println!("{}: no valid records", m.label),
                }
            }
            print_files(&out.files);
        }
        Command::Tune(args) => {
            let out = cmd_tune(&args.load()?)?;
            for r in &out.reports {
                match r.tuning.window.critical {
                    Some(c) => println!(
                        "{}: critical m={} window {}..{}, lambda={:e}",
                        r.label, c.m_critical, c.window.0, c.window.1, r.tuning.lambda
                    ),
                    None => println!(
                        "{}: no critical size; fallback window {:?}, lambda={:e}",
                        r.label, r.tuning.window.m_values, r.tuning.lambda
                    ),
                }
            }
            print_files(&out.files);
        }
        Command::Train { args, m, lambda } => {
            let out = cmd_train(&args.load()?, m, lambda)?;
            println!(
                "train err={:.6} validation err={:.6} test err={:.6} min_ratio={:.3e}",
                out.train_err, out.validation_err, out.test_err, out.min_ratio
            );
            print_files(&out.files);
        }
        Command::Predict {
            model,
            input,
            out,
            skip_header,
        } => {
            let res = cmd_predict(&model, &input, out.as_deref(), skip_header)?;
            match res.file {
                Some(f) => print_files(&[f]),
                None => print!("{}", res.csv),
            }
        }
    }
    Ok(())
}

fn print_files(files: &[PathBuf]) {
    for f in files {
        eprintln!("wrote {}", f.display());
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
