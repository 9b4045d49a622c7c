use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use velmarkov::continuum::cauchy::Kernel;
use velmarkov::experiment::{self, Command, ExperimentConfig, Overrides, PotentialKind, Preset};
use velmarkov::lattice::RateForm;
use velmarkov::{Error, Exec, Result};

#[derive(Parser)]
#[command(name = "velmarkov", version, about = "Velocity-Markov lattice walk experiments")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Two-velocity lattice run: density snapshots, moments, manifest.
    Simulate(Opts),
    /// Continuum Cauchy solution sampled at time `t`.
    Analytic(Opts),
    /// Lattice vs continuum L1 distance under grid refinement.
    Compare(Opts),
    /// Moment series of a two-velocity run against the closed-form predictions.
    Moments(Opts),
    /// Multi-velocity run with Newton rates; checks d²E[x]/dt² against E[V'].
    Newton(Opts),
    /// Multi-velocity run with Newton rates; checks the total-energy drift.
    Energy(Opts),
}

#[derive(Args)]
struct Opts {
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    /// JSON file with any of the option names below (snake_case keys).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long, value_parser = parse_rate_form)]
    rate_form: Option<RateForm>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    support_half_width: Option<f64>,
    #[arg(long)]
    n_steps: Option<usize>,
    #[arg(long)]
    dx: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    /// Steps between snapshot files; 0 keeps only the final one. Defaults to 10
    /// for two-velocity runs; multi-velocity runs write none unless asked.
    #[arg(long)]
    dump_interval: Option<usize>,
    /// Write every snapshot.
    #[arg(long)]
    dump_all: bool,
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long, value_enum)]
    potential: Option<PotentialKind>,
    #[arg(long)]
    strength: Option<f64>,
    #[arg(long)]
    j_max: Option<i32>,
    /// Evaluation time for `analytic` and `compare`.
    #[arg(long)]
    t: Option<f64>,
    #[arg(long, value_parser = parse_kernel)]
    kernel: Option<Kernel>,
    #[arg(long)]
    panels: Option<usize>,
    #[arg(long)]
    levels: Option<usize>,
    /// Worker threads; 1 runs sequentially. Defaults to all cores.
    #[arg(long)]
    threads: Option<usize>,
}

fn parse_rate_form(s: &str) -> Result<RateForm, String> {
    match s {
        "step_probability" => Ok(RateForm::StepProbability),
        "continuum_rate" => Ok(RateForm::ContinuumRate),
        other => Err(format!("unknown rate form `{other}` (expected step_probability or continuum_rate)")),
    }
}

fn parse_kernel(s: &str) -> Result<Kernel, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

impl Opts {
    fn flags(&self) -> Overrides {
        Overrides {
            preset: self.preset,
            dx: self.dx,
            dt: self.dt,
            alpha: self.alpha,
            beta: self.beta,
            rate_form: self.rate_form,
            sigma: self.sigma,
            support_half_width: self.support_half_width,
            n_steps: self.n_steps,
            dump_interval: self.dump_interval,
            dump_all: self.dump_all.then_some(true),
            theta: self.theta,
            potential: self.potential,
            strength: self.strength,
            j_max: self.j_max,
            t: self.t,
            kernel: self.kernel,
            panels: self.panels,
            levels: self.levels,
        }
    }
}

fn exec_for(threads: Option<usize>) -> Result<Exec> {
    match threads {
        Some(0) => Err(Error::Config("--threads must be >= 1".into())),
        Some(1) => Ok(Exec::Sequential),
        #[cfg(feature = "parallel")]
        Some(n) => {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
            Ok(Exec::Parallel)
        }
        _ => Ok(Exec::Parallel),
    }
}

fn main_inner(cli: Cli) -> Result<()> {
    let (command, opts) = match cli.command {
        Sub::Simulate(o) => (Command::Simulate, o),
        Sub::Analytic(o) => (Command::Analytic, o),
        Sub::Compare(o) => (Command::Compare, o),
        Sub::Moments(o) => (Command::Moments, o),
        Sub::Newton(o) => (Command::Newton, o),
        Sub::Energy(o) => (Command::Energy, o),
    };
    let file = match &opts.config {
        Some(path) => Overrides::from_json_file(path)?,
        None => Overrides::default(),
    };
    let cfg = ExperimentConfig::resolve(command, &file.layered(opts.flags()))?;
    let exec = exec_for(opts.threads)?;
    experiment::run(command, &cfg, &opts.out, exec)?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let err = json!({ "error": "usage", "message": e.to_string(), "exit_code": 2 });
            eprintln!("{err}");
            return ExitCode::from(2);
        }
    };
    match main_inner(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = e.exit_code();
            eprintln!("{}", json!({ "error": e.kind(), "message": e.to_string(), "exit_code": code }));
            ExitCode::from(code as u8)
        }
    }
}
