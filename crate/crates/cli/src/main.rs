//! `nv0sim`: simulate, fit and assess orbital-qubit experiments.
//!
//! Exit codes: 0 success, 2 configuration or input error, 3 fit
//! non-convergence, 4 I/O error.

mod config;
mod cqed;
mod error;
mod fit;
mod output;
mod simulate;
mod steady;
mod sweep;
mod units;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{Axis, Counts, Kind, RunConfig, CONFIG_ENV};
use error::CliError;
use units::Freq;

#[derive(Debug, Parser)]
#[command(name = "nv0sim", version, about = "Orbital-qubit simulation and analysis")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true, env = CONFIG_ENV)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Sample temperature in K.
    #[arg(long, global = true)]
    temperature: Option<f64>,
    /// Write the main output here instead of stdout.
    #[arg(short, long, global = true)]
    output: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one experiment sweep and write a B/A summary table.
    Simulate(SimulateArgs),
    /// Fit a model to a CSV of (x, y[, sigma]) or a count trace.
    Fit(FitArgs),
    /// Extract T1 across temperature or the Rabi frequency across power.
    Sweep(SweepArgs),
    /// Resonator coupling budget.
    Cqed(CqedArgs),
    /// Steady-state populations under optical pumping.
    Steady(SteadyArgs),
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long, value_enum)]
    kind: Option<Kind>,
    #[arg(long)]
    shots: Option<u64>,
    #[arg(long, value_enum)]
    counts: Option<Counts>,
    #[arg(long)]
    realizations: Option<usize>,
    /// Directory for one count-trace CSV per sweep point.
    #[arg(long)]
    traces: Option<PathBuf>,
    /// Skip the fit of the summary curve.
    #[arg(long)]
    no_fit: bool,
}

#[derive(Debug, Args)]
struct FitArgs {
    input: PathBuf,
    /// t1, rabi, ramsey, echo, oder or a model name such as gaussian-peak.
    #[arg(long)]
    model: String,
    /// Exponential time held fixed in the echo model, s. Co-fitted when absent.
    #[arg(long)]
    t1_fixed: Option<f64>,
    /// Emit the machine-readable report.
    #[arg(long)]
    csv: bool,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[arg(long, value_enum)]
    axis: Option<Axis>,
    /// Comma-separated axis values (K, or relative power).
    #[arg(long, value_delimiter = ',')]
    values: Option<Vec<f64>>,
    #[arg(long)]
    shots: Option<u64>,
    #[arg(long, value_enum)]
    counts: Option<Counts>,
}

#[derive(Debug, Args)]
struct CqedArgs {
    #[arg(long)]
    frequency: Option<Freq>,
    /// Ω.
    #[arg(long)]
    impedance: Option<f64>,
    #[arg(long)]
    linewidth: Option<Freq>,
    #[arg(long)]
    q: Option<f64>,
    /// Electrode gap, m.
    #[arg(long)]
    gap: Option<f64>,
    /// Emit a CSV table (the grid when impedances, gaps or qs are configured).
    #[arg(long)]
    csv: bool,
}

#[derive(Debug, Args)]
struct SteadyArgs {
    #[arg(long)]
    opt_rabi: Option<Freq>,
}

impl Cli {
    fn config(&self) -> Result<RunConfig, CliError> {
        let mut c = RunConfig::load(self.config.as_deref())?;
        if let Some(s) = self.seed {
            c.seed = s;
        }
        if let Some(t) = self.temperature {
            c.temperature = t;
        }
        if let Some(o) = &self.output {
            c.output = Some(o.clone());
        }
        Ok(c)
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Command::Fit(a) = &cli.command {
        return fit::run(a, cli.output.as_deref());
    }
    let mut c = cli.config()?;
    match &cli.command {
        Command::Simulate(a) => {
            if let Some(k) = a.kind {
                c.experiment.kind = k;
            }
            if let Some(s) = a.shots {
                c.detector.shots = s;
            }
            if let Some(m) = a.counts {
                c.detector.counts = m;
            }
            if let Some(r) = a.realizations {
                c.noise.realizations = r;
            }
            if a.no_fit {
                c.experiment.fit = false;
            }
            simulate::run(&c, a.traces.as_deref())
        }
        Command::Sweep(a) => {
            if let Some(x) = a.axis {
                c.sweep.axis = x;
            }
            if let Some(v) = &a.values {
                c.sweep.values = Some(v.clone());
            }
            if let Some(s) = a.shots {
                c.detector.shots = s;
            }
            if let Some(m) = a.counts {
                c.detector.counts = m;
            }
            sweep::run(&c)
        }
        Command::Cqed(a) => {
            let q = &mut c.cqed;
            if let Some(f) = a.frequency {
                q.frequency = f;
            }
            if let Some(z) = a.impedance {
                q.impedance = z;
                q.impedances = None;
            }
            if let Some(lw) = a.linewidth {
                q.linewidth = Some(lw);
                q.q = None;
                q.qs = None;
            }
            if let Some(v) = a.q {
                q.q = Some(v);
                q.linewidth = None;
                q.qs = None;
            }
            if let Some(d) = a.gap {
                q.gap = d;
                q.gaps = None;
            }
            cqed::run(&c, a.csv)
        }
        Command::Steady(a) => {
            if let Some(w) = a.opt_rabi {
                c.physics.opt_rabi = w;
            }
            steady::run(&c)
        }
        Command::Fit(_) => unreachable!(),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("nv0sim: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
