use std::fmt::Write as _;
use std::path::Path;

use nv0_core::detection::Ratio;
use nv0_core::experiment::{readout_ratios, simulate_sweep, thermal_state};
use nv0_core::fitting::{
    extract_cpmg, extract_oder, extract_rabi, extract_ramsey, extract_t1, FitData, FitResult,
};
use nv0_core::sequence::{
    build_cpmg, build_hahn_echo, build_oder, build_rabi, build_ramsey, build_t1_pump_probe,
};
use nv0_core::{ExperimentSetup, PulseSequence, SimulatedPoint};

use crate::config::{Counts, Kind, RunConfig, Spacing};
use crate::error::CliError;
use crate::output::{emit, linspace, logspace, write_file};

pub const SUMMARY_HEADER: &str = "# nv0 summary v1";

pub fn setup(c: &RunConfig, temperature: f64) -> Result<ExperimentSetup, CliError> {
    let rates = c.model().rates(temperature, 0.0)?;
    let mut s = ExperimentSetup::new(rates, thermal_state(&rates)?);
    s.noise = c.noise_model();
    s.realizations = c.noise.realizations;
    s.detector = c.detector_model();
    if let Some(dt) = c.experiment.dt {
        s.dt = dt;
    }
    Ok(s)
}

fn x_column(kind: Kind) -> &'static str {
    match kind {
        Kind::T1 | Kind::Ramsey => "delay_s",
        Kind::Rabi => "width_s",
        Kind::Echo | Kind::Cpmg => "total_s",
        Kind::Oder => "mw_frequency_hz",
    }
}

/// Sweep values from the config, or the built-in grid for the kind.
pub fn points(c: &RunConfig, kind: Kind, t1: f64) -> Result<Vec<f64>, CliError> {
    let e = &c.experiment;
    if let Some(p) = &e.points {
        if p.is_empty() {
            return Err(CliError::Config("experiment.points is empty".into()));
        }
        return Ok(p.iter().map(|v| v.hz()).collect());
    }
    match (e.start, e.stop) {
        (Some(a), Some(b)) => {
            if e.count == 0 {
                return Err(CliError::Config("experiment.count must be >= 1".into()));
            }
            if e.spacing == Spacing::Log && !(a.hz() > 0.0 && b.hz() > 0.0) {
                return Err(CliError::Config("log spacing needs start and stop > 0".into()));
            }
            Ok(match e.spacing {
                Spacing::Linear => linspace(a.hz(), b.hz(), e.count),
                Spacing::Log => logspace(a.hz(), b.hz(), e.count),
            })
        }
        (None, None) => Ok(match kind {
            Kind::T1 => logspace(0.1 * t1, 5.0 * t1, e.count.max(4)),
            Kind::Rabi => linspace(0.0, 150e-9, 76),
            Kind::Ramsey => linspace(0.0, 200e-9, 101),
            Kind::Echo | Kind::Cpmg => linspace(0.25e-6, 7.5e-6, 30),
            Kind::Oder => {
                let f0 = c.sequence.transition_frequency.hz();
                linspace(f0 - 60e6, f0 + 60e6, 61)
            }
        }),
        _ => Err(CliError::Config("experiment.start and experiment.stop must be set together".into())),
    }
}

pub fn sequences(c: &RunConfig, kind: Kind, x: &[f64]) -> Result<Vec<PulseSequence>, CliError> {
    let cfg = c.sequence_config();
    let e = &c.experiment;
    Ok(match kind {
        Kind::T1 => build_t1_pump_probe(&cfg, x)?,
        Kind::Rabi => build_rabi(&cfg, x)?,
        Kind::Ramsey => build_ramsey(&cfg, x, e.detuning.hz())?,
        Kind::Echo => build_hahn_echo(&cfg, x)?,
        Kind::Cpmg => build_cpmg(&cfg, e.pulses, x)?,
        Kind::Oder => x
            .iter()
            .map(|&f| build_oder(&cfg, f, e.mw_width))
            .collect::<Result<_, _>>()?,
    })
}

pub fn count_seed(c: &RunConfig, seed: u64) -> Option<u64> {
    match c.detector.counts {
        Counts::Sampled => Some(seed),
        Counts::Expected => None,
    }
}

/// Exponential time of the echo envelope: relaxation halves the coherence
/// rate, Markovian dephasing adds to it.
fn envelope_time(setup: &ExperimentSetup) -> Result<f64, CliError> {
    let r = setup.effective_rates()?;
    let rate = 0.5 * (r.kappa_down + r.kappa_up) + r.gamma_phi;
    Ok(if rate > 0.0 { 1.0 / rate } else { f64::INFINITY })
}

pub fn fit_curve(
    c: &RunConfig,
    kind: Kind,
    setup: &ExperimentSetup,
    x: &[f64],
    ratios: &[Ratio],
) -> Result<FitResult, CliError> {
    let y: Vec<f64> = ratios.iter().map(|r| r.value).collect();
    let s: Vec<f64> = ratios.iter().map(|r| r.sigma).collect();
    if kind == Kind::T1 {
        return extract_t1(x, &y, &s).map_err(CliError::from_fit);
    }
    let data = FitData::new(x.to_vec(), y, s).map_err(CliError::from_fit)?;
    let res = match kind {
        Kind::Rabi => extract_rabi(&data),
        Kind::Ramsey => extract_ramsey(&data),
        Kind::Echo | Kind::Cpmg => {
            let t = match c.experiment.t1_fixed {
                Some(t) => t,
                None => envelope_time(setup)?,
            };
            extract_cpmg(&data, t.is_finite().then_some(t))
        }
        Kind::Oder => extract_oder(&data),
        Kind::T1 => unreachable!(),
    };
    res.map_err(CliError::from_fit)
}

fn fit_comments(out: &mut String, res: &FitResult) {
    let _ = writeln!(
        out,
        "# fit model={} converged={} chi2_reduced={:e}",
        res.model.name(),
        u8::from(res.converged),
        res.chi2_reduced
    );
    for k in 0..res.params.len() {
        let _ = writeln!(out, "# fit {}={:e} std_error={:e}", res.names[k], res.params[k], res.std_errors[k]);
    }
}

fn write_traces(c: &RunConfig, setup: &ExperimentSetup, pts: &[SimulatedPoint], dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
    let g = setup.rates.gamma;
    for (i, p) in pts.iter().enumerate() {
        let trace = match count_seed(c, c.seed) {
            Some(s) => p.sample_trace(&setup.detector, g, s, i as u64)?,
            None => p.expected_trace(&setup.detector, g)?,
        };
        write_file(&dir.join(format!("trace_{i:04}.csv")), &trace.to_csv())?;
    }
    Ok(())
}

pub fn run(c: &RunConfig, traces: Option<&Path>) -> Result<(), CliError> {
    c.validate()?;
    let kind = c.experiment.kind;
    let setup = setup(c, c.temperature)?;
    let x = points(c, kind, c.model().t1(c.temperature)?)?;
    let seqs = sequences(c, kind, &x)?;
    let pts = simulate_sweep(&setup, &seqs)?;
    let ratios = readout_ratios(&pts, &setup.detector, setup.rates.gamma, count_seed(c, c.seed))?;
    if let Some(dir) = traces {
        write_traces(c, &setup, &pts, dir)?;
    }
    let fit = if c.experiment.fit {
        Some(fit_curve(c, kind, &setup, &x, &ratios)?)
    } else {
        None
    };

    let mut out = format!(
        "{SUMMARY_HEADER}\n# kind={} temperature_k={:e} seed={} shots={} counts={}\n",
        kind.name(),
        c.temperature,
        c.seed,
        setup.detector.shots,
        match c.detector.counts {
            Counts::Sampled => "sampled",
            Counts::Expected => "expected",
        }
    );
    if let Some(res) = &fit {
        fit_comments(&mut out, res);
    }
    let _ = writeln!(out, "{},ratio,sigma", x_column(kind));
    for (xi, r) in x.iter().zip(&ratios) {
        let _ = writeln!(out, "{xi:e},{:e},{:e}", r.value, r.sigma);
    }
    emit(&out, c.output.as_deref())?;

    if let Some(res) = fit {
        eprint!("{}", res.report_text());
        if !res.converged {
            return Err(CliError::Fit(format!("{} fit stopped after {} iterations", res.model, res.iterations)));
        }
    }
    Ok(())
}
