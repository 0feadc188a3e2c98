//! Command-line front end.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fading::{sample_gains, FadingModel, GainDataset};
use crate::harness::{evaluate, evaluate_on_data, run_experiment, write_rows_csv, EvalMode, ExperimentSpec};
use crate::layer::{db_to_linear, LayerAllocation, RiskSpec};
use crate::meta::{maml_train, MetaConfig, TaskSet};
use crate::optim::{optimize, optimize_known_distribution, OptimConfig};
use crate::risk::RiskReport;
use crate::theory::{bound_report, infinite_layer_rate};

#[derive(Debug, Parser)]
#[command(name = "ldm-cvar", version, about = "Risk-aware layered broadcast rate allocation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Debug, Args)]
struct Common {
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
}

#[derive(Debug, Args)]
struct RiskArgs {
    /// Transmit power in dB.
    #[arg(long, default_value_t = 20.0, allow_negative_numbers = true)]
    power_db: f64,
    #[arg(long, default_value_t = 0.1)]
    beta: f64,
    /// Sigmoid steepness of the surrogate.
    #[arg(long, default_value_t = 10.0)]
    c: f64,
    /// Bound on the threshold norm.
    #[arg(long = "s", default_value_t = 10.0)]
    s_bound: f64,
}

impl RiskArgs {
    fn spec(&self) -> Result<RiskSpec> {
        RiskSpec::new(self.beta, self.c, db_to_linear(self.power_db), self.s_bound)
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Learn an allocation from a gain dataset, or from a known law with --model.
    Optimize {
        /// Gain CSV with a `gain` column.
        #[arg(long, conflicts_with = "model")]
        data: Option<PathBuf>,
        /// Fading model as inline JSON or a JSON file; optimizes the exact expected rate.
        #[arg(long)]
        model: Option<String>,
        /// Number of layers.
        #[arg(long)]
        m: Option<usize>,
        /// Optimizer settings (JSON).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Write the objective trace as CSV.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[command(flatten)]
        risk: RiskArgs,
        #[command(flatten)]
        common: Common,
    },
    /// Meta-learn an initialization from earlier deployments' datasets.
    MetaTrain {
        /// One gain CSV per earlier deployment.
        #[arg(long, num_args = 1.., required = true)]
        tasks: Vec<PathBuf>,
        #[arg(long)]
        m: Option<usize>,
        /// Meta-learning settings (JSON).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Seed of the random starting point.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        trace: Option<PathBuf>,
        #[command(flatten)]
        risk: RiskArgs,
        #[command(flatten)]
        common: Common,
    },
    /// Score an allocation on a dataset or a known law.
    Evaluate {
        /// Allocation JSON (`{"s":[...],"lambda":[...]}`).
        #[arg(long)]
        alloc: PathBuf,
        #[arg(long, conflicts_with = "model")]
        data: Option<PathBuf>,
        #[arg(long)]
        model: Option<String>,
        /// Use a holdout sample of this size instead of the analytic evaluator.
        #[arg(long, requires = "model")]
        holdout: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        risk: RiskArgs,
        #[command(flatten)]
        common: Common,
    },
    /// Generalization bound on the optimality gap.
    Bound {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0.05)]
        delta: f64,
        #[arg(long, default_value_t = 1.0)]
        beta: f64,
        #[arg(long = "s", default_value_t = 10.0)]
        s_bound: f64,
        #[arg(long, default_value_t = 20.0, allow_negative_numbers = true)]
        power_db: f64,
        #[command(flatten)]
        common: Common,
    },
    /// Infinite-layer expected rate under a known law.
    Baseline {
        /// Fading model; unit-variance Rayleigh when absent.
        #[arg(long)]
        model: Option<String>,
        #[arg(long, default_value_t = 20.0, allow_negative_numbers = true)]
        power_db: f64,
        #[command(flatten)]
        common: Common,
    },
    /// Run a seeded experiment described by a JSON file.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the base seed of the config.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// CSV rows (default) or JSON with metadata.
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
    },
    /// Draw a gain dataset from a fading model.
    Sample {
        #[arg(long)]
        model: String,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_reader(open(path)?).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn read_data(path: &Path) -> Result<GainDataset> {
    GainDataset::read_csv(open(path)?, 0)
}

/// Inline JSON when it parses as such, otherwise a path to a JSON file.
fn parse_model(arg: &str) -> Result<FadingModel> {
    let model: FadingModel = match serde_json::from_str(arg) {
        Ok(m) => m,
        Err(_) if !arg.trim_start().starts_with('{') => read_json(Path::new(arg))?,
        Err(e) => return Err(Error::Config(format!("model: {e}"))),
    };
    model.validate()?;
    Ok(model)
}

fn sink(out: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(std::io::stdout().lock())),
    })
}

fn emit_json<T: Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    let mut w = sink(out)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn emit_alloc(alloc: &LayerAllocation, common: &Common) -> Result<()> {
    match common.format {
        Format::Json => emit_json(alloc, common.out.as_deref()),
        Format::Csv => {
            let mut w = csv::Writer::from_writer(sink(common.out.as_deref())?);
            w.write_record(["layer", "s", "lambda"])?;
            for (m, (s, l)) in alloc.s.iter().zip(&alloc.lambda).enumerate() {
                w.write_record([(m + 1).to_string(), format!("{s:?}"), format!("{l:?}")])?;
            }
            w.flush()?;
            Ok(())
        }
    }
}

fn emit_report<T: Serialize>(report: &RiskReport, json: &T, common: &Common) -> Result<()> {
    match common.format {
        Format::Json => emit_json(json, common.out.as_deref()),
        Format::Csv => {
            let mut w = csv::Writer::from_writer(sink(common.out.as_deref())?);
            w.write_record(["mean_rate", "outage_rate", "cvar_rate", "beta", "n_used"])?;
            w.write_record([
                format!("{:?}", report.mean_rate),
                format!("{:?}", report.outage_rate),
                format!("{:?}", report.cvar_rate),
                format!("{:?}", report.beta),
                report.n_used.map(|n| n.to_string()).unwrap_or_default(),
            ])?;
            w.flush()?;
            Ok(())
        }
    }
}

fn write_objective_trace(path: &Path, objective: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    w.write_record(["iter", "objective"])?;
    for (i, v) in objective.iter().enumerate() {
        w.write_record([i.to_string(), format!("{v:?}")])?;
    }
    w.flush()?;
    Ok(())
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Optimize {
            data,
            model,
            m,
            config,
            trace,
            risk,
            common,
        } => {
            let mut cfg: OptimConfig = match &config {
                Some(p) => read_json(p)?,
                None => OptimConfig::default(),
            };
            if let Some(m) = m {
                cfg.layers = m;
            }
            let spec = risk.spec()?;
            let (alloc, tr) = match (data, model) {
                (Some(d), None) => optimize(&read_data(&d)?, &spec, &cfg)?,
                (None, Some(m)) => optimize_known_distribution(&parse_model(&m)?, &spec, &cfg)?,
                _ => return Err(Error::Config("optimize needs --data or --model".into())),
            };
            if let Some(p) = trace {
                tr.write_csv(BufWriter::new(File::create(p)?))?;
            }
            emit_alloc(&alloc, &common)
        }
        Command::MetaTrain {
            tasks,
            m,
            config,
            seed,
            trace,
            risk,
            common,
        } => {
            let mut cfg: MetaConfig = match &config {
                Some(p) => read_json(p)?,
                None => MetaConfig::default(),
            };
            if let Some(m) = m {
                cfg.layers = m;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let tasks = TaskSet::new(tasks.iter().map(|p| read_data(p)).collect::<Result<_>>()?)?;
            let (u, lambda, tr) = maml_train(&tasks, &risk.spec()?, &cfg)?;
            if let Some(p) = trace {
                write_objective_trace(&p, &tr.objective)?;
            }
            let alloc = LayerAllocation {
                s: u.iter().map(|x| x.exp()).collect(),
                lambda,
            };
            emit_alloc(&alloc, &common)
        }
        Command::Evaluate {
            alloc,
            data,
            model,
            holdout,
            seed,
            risk,
            common,
        } => {
            let alloc: LayerAllocation = read_json(&alloc)?;
            alloc.validate()?;
            let spec = risk.spec()?;
            let eval = match (data, model) {
                (Some(d), None) => evaluate_on_data(&alloc, &read_data(&d)?, &spec),
                (None, Some(m)) => {
                    let mode = holdout.map_or(EvalMode::Analytic, |n| EvalMode::Holdout { n });
                    evaluate(&alloc, &parse_model(&m)?, mode, seed, &spec)?
                }
                _ => return Err(Error::Config("evaluate needs --data or --model".into())),
            };
            emit_report(&eval.report, &eval, &common)
        }
        Command::Bound {
            n,
            delta,
            beta,
            s_bound,
            power_db,
            common,
        } => emit_json(
            &bound_report(n, delta, beta, s_bound, db_to_linear(power_db))?,
            common.out.as_deref(),
        ),
        Command::Baseline { model, power_db, common } => {
            let model = match model {
                Some(m) => parse_model(&m)?,
                None => FadingModel::rayleigh(1.0),
            };
            emit_json(&infinite_layer_rate(&model, db_to_linear(power_db))?, common.out.as_deref())
        }
        Command::Experiment {
            config,
            seed,
            out,
            format,
        } => {
            let mut spec: ExperimentSpec = read_json(&config)?;
            if let Some(s) = seed {
                spec.seed = s;
            }
            let result = run_experiment(&spec)?;
            match format {
                Format::Csv => {
                    let mut w = sink(out.as_deref())?;
                    write_rows_csv(&result.rows, &mut w)?;
                    w.flush()?;
                    Ok(())
                }
                Format::Json => emit_json(&result, out.as_deref()),
            }
        }
        Command::Sample { model, n, seed, out } => {
            let data = sample_gains(&parse_model(&model)?, n, seed)?;
            let mut w = sink(out.as_deref())?;
            data.write_csv(&mut w)?;
            w.flush()?;
            Ok(())
        }
    }
}

/// Exit code for a library error: 3 for numerical breakdown, 2 otherwise.
pub fn exit_code(err: &Error) -> i32 {
    if err.is_numerical() {
        3
    } else {
        2
    }
}

/// Parse `argv` (program name first), run the command and return the exit
/// code.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
