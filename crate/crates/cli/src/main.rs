//! `csqpe`: estimate, baseline, bench, verify and signal subcommands.
//!
//! Exit codes: 0 on success, 1 for configuration errors (including bad
//! flags and unreadable input files), 2 when a run fails.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use csqpe::baselines::{run_baseline, BaselineResult};
use csqpe::bench::{run_sweep, write_outputs, SweepSpec};
use csqpe::config::{ModelSpec, PreparedModel, RunConfig};
use csqpe::estimator::{run_cs_qpe, SampleSet};
use csqpe::oracle::{run_suite, SUITES};
use csqpe::seed::{domain, Seed};
use csqpe::signal::{acquire_with, Channel, SignalSource};
use csqpe::{Error, EstimateReport};

#[derive(Debug, Parser)]
#[command(name = "csqpe", version, about = "Ground-state energy estimation from simulated Hadamard-test records")]
struct Cli {
    /// Master seed; overrides the seed in config and spec files.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for parallel sections.
    #[arg(long, global = true, env = "CSQPE_THREADS")]
    threads: Option<usize>,

    /// Output file (estimate, baseline, verify, signal) or directory (bench).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the compressed-sensing estimator once from a run config.
    Estimate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run the baseline named in a run config's "baseline" section.
    Baseline {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run a parameter sweep and write results.csv, results.json and plots/.
    Bench {
        #[arg(long)]
        spec: PathBuf,
    },
    /// Run an oracle suite and print its reports as JSON.
    Verify {
        #[arg(long, value_parser = clap::builder::PossibleValuesParser::new(SUITES))]
        suite: String,
    },
    /// Print a simulated signal as `t,re,im,shots` lines.
    Signal {
        /// tfi<L>, fh<L>
        #[arg(long)]
        model: String,
        #[arg(long)]
        alpha: f64,
        /// Half-open integer range `a..b`.
        #[arg(long, value_parser = parse_range)]
        times: (usize, usize),
        /// Shots per real and imaginary part.
        #[arg(long, default_value_t = 100)]
        mh: u64,
        /// Eigenstates in the initial state.
        #[arg(long, default_value_t = 10)]
        levels: usize,
    },
}

fn parse_range(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s.split_once("..").ok_or_else(|| format!("expected a..b, got {s:?}"))?;
    let a: usize = a.trim().parse().map_err(|e| format!("bad range start: {e}"))?;
    let b: usize = b.trim().parse().map_err(|e| format!("bad range end: {e}"))?;
    if a >= b {
        return Err(format!("empty range {s:?}"));
    }
    Ok((a, b))
}

/// An error with the exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure { code: if e.is_config() { 1 } else { 2 }, message: e.to_string() }
    }
}

fn config_failure(e: Error) -> Failure {
    Failure { code: 1, message: e.to_string() }
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e).into()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn to_json<T: Serialize>(value: &T) -> Result<String, Failure> {
    Ok(serde_json::to_string_pretty(value)
        .map_err(Error::from)
        .map_err(|e| Failure { code: 2, message: e.to_string() })?
        + "\n")
}

#[derive(Serialize)]
struct EstimateOutput<'a> {
    model: &'a str,
    alpha: f64,
    seed: u64,
    /// Exact ground energy of the normalized Hamiltonian.
    ground_energy: f64,
    abs_error: Option<f64>,
    /// `e_star` in the units of the original Hamiltonian.
    e_star_original: Option<f64>,
    #[serde(flatten)]
    report: &'a EstimateReport,
}

#[derive(Serialize)]
struct BaselineOutput<'a> {
    model: &'a str,
    alpha: f64,
    seed: u64,
    ground_energy: f64,
    abs_error: f64,
    estimate_original: f64,
    label: &'static str,
    #[serde(flatten)]
    result: &'a BaselineResult,
}

fn load_config(path: &Path, seed: Option<u64>) -> Result<RunConfig, Failure> {
    let mut cfg = RunConfig::load(path).map_err(config_failure)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), Failure> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(config_failure(Error::config("--threads must be at least 1")));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure { code: 2, message: format!("thread pool: {e}") })?;
    }
    let out = cli.out.as_deref();
    match cli.command {
        Command::Estimate { config } => {
            let cfg = load_config(&config, cli.seed)?;
            let est = cfg.estimator().map_err(config_failure)?;
            let model = cfg.prepare_model()?;
            let report = run_cs_qpe(&est, &model.spectrum, Seed::new(cfg.seed))?;
            let map = model.energy_map();
            let output = EstimateOutput {
                model: &cfg.model,
                alpha: cfg.alpha,
                seed: cfg.seed,
                ground_energy: model.ground_energy,
                abs_error: report.e_star.map(|e| (e - model.ground_energy).abs()),
                e_star_original: report.e_star.map(|e| map.inverse(e)),
                report: &report,
            };
            emit(out, &to_json(&output)?)
        }
        Command::Baseline { config } => {
            let cfg = load_config(&config, cli.seed)?;
            let baseline = cfg.baseline().map_err(config_failure)?.clone();
            let model = cfg.prepare_model()?;
            let channel = if cfg.noiseless { Channel::Exact } else { Channel::Hadamard(1) };
            let result =
                run_baseline(&baseline, &SignalSource::new(model.spectrum.clone(), channel, Seed::new(cfg.seed)))?;
            let output = BaselineOutput {
                model: &cfg.model,
                alpha: cfg.alpha,
                seed: cfg.seed,
                ground_energy: model.ground_energy,
                abs_error: (result.estimate - model.ground_energy).abs(),
                estimate_original: model.energy_map().inverse(result.estimate),
                label: "reimplementation",
                result: &result,
            };
            emit(out, &to_json(&output)?)
        }
        Command::Bench { spec } => {
            let mut sweep = SweepSpec::load(&spec).map_err(config_failure)?;
            if let Some(s) = cli.seed {
                sweep.seed = s;
            }
            let dir = out.ok_or_else(|| config_failure(Error::config("bench needs --out <dir>")))?;
            let cells = run_sweep(&sweep)?;
            write_outputs(&sweep, &cells, dir)?;
            eprintln!("wrote {} cells to {}", cells.len(), dir.display());
            Ok(())
        }
        Command::Verify { suite } => {
            let reports = run_suite(&suite, Seed::new(cli.seed.unwrap_or(0)))?;
            for r in reports.iter().filter(|r| r.violations > 0) {
                eprintln!("{}: {} violation(s) in {} trials", r.lemma_id, r.violations, r.trials);
            }
            emit(out, &to_json(&reports)?)
        }
        Command::Signal { model, alpha, times: (start, end), mh, levels } => {
            if mh == 0 {
                return Err(config_failure(Error::config("--mh must be at least 1")));
            }
            let spec = ModelSpec::parse(&model, None)?;
            if !(alpha > 0.0 && alpha < 1.0) {
                return Err(config_failure(Error::config(format!("alpha must lie in (0, 1), got {alpha}"))));
            }
            if levels == 0 {
                return Err(config_failure(Error::config("--levels must be positive")));
            }
            let prepared = PreparedModel::new(&spec, alpha, levels)?;
            let set = SampleSet::from_indices(end, (start..end).collect(), (end - start) as f64 / end as f64)?;
            let seed = Seed::new(cli.seed.unwrap_or(0)).child(domain::ACQUIRE);
            let source = SignalSource::new(prepared.spectrum, Channel::Hadamard(mh), seed);
            let (series, _) = acquire_with(&set, 1.0, &source)?;
            emit(out, &series.to_text())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("csqpe: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
