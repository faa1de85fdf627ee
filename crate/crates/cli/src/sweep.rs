use std::fmt::Write as _;

use rayon::prelude::*;

use nv0_core::experiment::{readout_ratios, simulate_sweep};
use nv0_core::fitting::{linear_regression, FitResult};
use nv0_core::physics::ordinary;

use crate::config::{Axis, Kind, RunConfig};
use crate::error::CliError;
use crate::output::{emit, logspace};
use crate::simulate::{count_seed, fit_curve, points, sequences, setup};

pub const SWEEP_HEADER: &str = "# nv0 sweep v1";

struct Row {
    x: f64,
    value: f64,
    error: f64,
    converged: bool,
}

/// Row `j` uses seed `seed + j` for both counts and detuning noise.
fn row(c: &RunConfig, axis: Axis, j: usize, v: f64) -> Result<Row, CliError> {
    let mut c = c.clone();
    c.seed = c.seed.wrapping_add(j as u64);
    let (kind, temperature) = match axis {
        Axis::Temperature => (Kind::T1, v),
        Axis::Power => {
            c.sequence.mw_rabi.0 *= v.sqrt();
            (Kind::Rabi, c.temperature)
        }
    };
    let s = setup(&c, temperature)?;
    c.experiment.points = None;
    c.experiment.start = None;
    c.experiment.stop = None;
    let x = points(&c, kind, c.model().t1(temperature)?)?;
    let pts = simulate_sweep(&s, &sequences(&c, kind, &x)?)?;
    let ratios = readout_ratios(&pts, &s.detector, s.rates.gamma, count_seed(&c, c.seed))?;
    let res: FitResult = fit_curve(&c, kind, &s, &x, &ratios)?;
    let (value, error) = match kind {
        Kind::T1 => res.param("t1").expect("t1"),
        _ => {
            let (w, e) = res.param("omega").expect("omega");
            (ordinary(w), ordinary(e))
        }
    };
    Ok(Row {
        x: v,
        value,
        error,
        converged: res.converged,
    })
}

pub fn run(c: &RunConfig) -> Result<(), CliError> {
    c.validate()?;
    let axis = c.sweep.axis;
    let values = match &c.sweep.values {
        Some(v) if v.is_empty() => return Err(CliError::Config("sweep.values is empty".into())),
        Some(v) => v.clone(),
        None => match axis {
            Axis::Temperature => logspace(0.012, 8.0, 12),
            Axis::Power => vec![0.25, 0.5, 1.0, 1.5, 2.0, 3.0],
        },
    };
    for &v in &values {
        let ok = match axis {
            Axis::Temperature => v >= 0.0 && v.is_finite(),
            Axis::Power => v > 0.0 && v.is_finite(),
        };
        if !ok {
            return Err(CliError::Config(format!("sweep value {v} is out of range")));
        }
    }
    let rows: Vec<Row> = values
        .par_iter()
        .enumerate()
        .map(|(j, &v)| row(c, axis, j, v))
        .collect::<Result<_, _>>()?;

    let mut out = format!(
        "{SWEEP_HEADER}\n# axis={} seed={} shots={}\n",
        match axis {
            Axis::Temperature => "temperature",
            Axis::Power => "power",
        },
        c.seed,
        c.detector.shots
    );
    if axis == Axis::Power && rows.len() >= 3 {
        let sx: Vec<f64> = rows.iter().map(|r| r.x.sqrt()).collect();
        let sy: Vec<f64> = rows.iter().map(|r| r.value).collect();
        let line = linear_regression(&sx, &sy)?;
        let _ = writeln!(
            out,
            "# fit rabi_hz = slope*sqrt(power) + intercept: slope={:e} intercept={:e} r_squared={:e}",
            line.slope, line.intercept, line.r_squared
        );
    }
    let _ = writeln!(
        out,
        "{},converged",
        match axis {
            Axis::Temperature => "temperature_k,t1_s,std_error_s",
            Axis::Power => "power,rabi_hz,std_error_hz",
        }
    );
    for r in &rows {
        let _ = writeln!(out, "{:e},{:e},{:e},{}", r.x, r.value, r.error, u8::from(r.converged));
    }
    emit(&out, c.output.as_deref())?;
    if rows.iter().any(|r| !r.converged) {
        return Err(CliError::Fit("at least one sweep point did not converge".into()));
    }
    Ok(())
}
