use std::f64::consts::LN_2;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lower bound for every characteristic time, s.
pub const MIN_TIME: f64 = 1e-10;
/// Upper bound for every characteristic time, s.
pub const MAX_TIME: f64 = 1.0;

/// Fit model library. Time models take x in seconds; `GaussianPeak` takes
/// any abscissa (Hz for spectra). Angular frequencies are rad/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum FitModel {
    /// y∞ − (y∞ − y₀)·exp(−t/T₁); params [y_inf, y0, t1].
    ExpRecovery,
    /// A·cos(Ω t)·exp(−t/T₂) + B; params [A, omega, t2, B].
    DampedCosine,
    /// C·cos(Δ t + φ)·exp(−t/T₂*) + D; params [C, delta, phi, t2, D].
    DetunedDampedCosine,
    /// amp·exp(−4 ln2 (x − c)²/fwhm²) + offset; params [amp, center, fwhm, offset].
    GaussianPeak,
    /// E·exp(−(t/T₂)² − t/T₁) + F. With `t1 = Some(_)` T₁ is held fixed and
    /// params are [E, t2, F]; otherwise [E, t2, t1, F].
    EchoDecay { t1: Option<f64> },
}

impl FitModel {
    pub fn name(&self) -> &'static str {
        match self {
            FitModel::ExpRecovery => "exp-recovery",
            FitModel::DampedCosine => "damped-cosine",
            FitModel::DetunedDampedCosine => "detuned-damped-cosine",
            FitModel::GaussianPeak => "gaussian-peak",
            FitModel::EchoDecay { .. } => "echo-decay",
        }
    }

    pub fn param_names(&self) -> &'static [&'static str] {
        match self {
            FitModel::ExpRecovery => &["y_inf", "y0", "t1"],
            FitModel::DampedCosine => &["A", "omega", "t2", "B"],
            FitModel::DetunedDampedCosine => &["C", "delta", "phi", "t2", "D"],
            FitModel::GaussianPeak => &["amp", "center", "fwhm", "offset"],
            FitModel::EchoDecay { t1: Some(_) } => &["E", "t2", "F"],
            FitModel::EchoDecay { t1: None } => &["E", "t2", "t1", "F"],
        }
    }

    pub fn n_params(&self) -> usize {
        self.param_names().len()
    }

    /// Indices of parameters that are characteristic times.
    pub fn time_params(&self) -> &'static [usize] {
        match self {
            FitModel::ExpRecovery => &[2],
            FitModel::DampedCosine => &[2],
            FitModel::DetunedDampedCosine => &[3],
            FitModel::GaussianPeak => &[],
            FitModel::EchoDecay { t1: Some(_) } => &[1],
            FitModel::EchoDecay { t1: None } => &[1, 2],
        }
    }

    /// Model value without bound checks.
    #[inline]
    pub fn value(&self, p: &[f64], t: f64) -> f64 {
        match *self {
            FitModel::ExpRecovery => p[0] - (p[0] - p[1]) * (-t / p[2]).exp(),
            FitModel::DampedCosine => p[0] * (p[1] * t).cos() * (-t / p[2]).exp() + p[3],
            FitModel::DetunedDampedCosine => {
                p[0] * (p[1] * t + p[2]).cos() * (-t / p[3]).exp() + p[4]
            }
            FitModel::GaussianPeak => {
                let u = (t - p[1]) / p[2];
                p[0] * (-4.0 * LN_2 * u * u).exp() + p[3]
            }
            FitModel::EchoDecay { t1: Some(t1) } => {
                let u = t / p[1];
                p[0] * (-u * u - t / t1).exp() + p[2]
            }
            FitModel::EchoDecay { t1: None } => {
                let u = t / p[1];
                p[0] * (-u * u - t / p[2]).exp() + p[3]
            }
        }
    }

    /// Default box constraints for data sampled at `x`.
    pub fn default_bounds(&self, x: &[f64]) -> Bounds {
        let n = self.n_params();
        let mut lower = vec![f64::NEG_INFINITY; n];
        let mut upper = vec![f64::INFINITY; n];
        for &k in self.time_params() {
            lower[k] = MIN_TIME;
            upper[k] = MAX_TIME;
        }
        let nyquist = std::f64::consts::PI / min_spacing(x).unwrap_or(f64::INFINITY);
        match self {
            FitModel::DampedCosine | FitModel::DetunedDampedCosine => {
                lower[1] = 0.0;
                upper[1] = nyquist;
            }
            FitModel::GaussianPeak => {
                let (lo, hi) = extent(x);
                let span = (hi - lo).max(f64::MIN_POSITIVE);
                lower[1] = lo - span;
                upper[1] = hi + span;
                lower[2] = min_spacing(x).unwrap_or(span) * 1e-3;
                upper[2] = 10.0 * span;
            }
            _ => {}
        }
        Bounds { lower, upper }
    }
}

impl fmt::Display for FitModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FitModel::EchoDecay { t1: Some(t1) } => write!(f, "echo-decay (t1 fixed at {t1:e} s)"),
            other => f.write_str(other.name()),
        }
    }
}

pub(crate) fn extent(x: &[f64]) -> (f64, f64) {
    x.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}

/// Smallest positive spacing between sorted abscissae.
pub(crate) fn min_spacing(x: &[f64]) -> Option<f64> {
    let mut s = x.to_vec();
    s.sort_by(f64::total_cmp);
    s.windows(2)
        .map(|w| w[1] - w[0])
        .filter(|&d| d > 0.0)
        .min_by(f64::total_cmp)
}

/// Box constraints, one interval per parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    pub fn unbounded(n: usize) -> Self {
        Self {
            lower: vec![f64::NEG_INFINITY; n],
            upper: vec![f64::INFINITY; n],
        }
    }

    pub fn clamp(&self, p: &mut [f64]) {
        for (k, v) in p.iter_mut().enumerate() {
            *v = v.clamp(self.lower[k], self.upper[k]);
        }
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p.iter()
            .enumerate()
            .all(|(k, &v)| v >= self.lower[k] && v <= self.upper[k])
    }

    /// Midpoint of interval `k`, falling back to a finite edge or zero.
    pub fn midpoint(&self, k: usize) -> f64 {
        let (lo, hi) = (self.lower[k], self.upper[k]);
        match (lo.is_finite(), hi.is_finite()) {
            (true, true) => 0.5 * (lo + hi),
            (true, false) => lo.max(0.0),
            (false, true) => hi.min(0.0),
            (false, false) => 0.0,
        }
    }
}

/// Model value with parameter-count and bound checks.
pub fn eval(model: &FitModel, params: &[f64], t: f64) -> Result<f64> {
    let names = model.param_names();
    if params.len() != names.len() {
        return Err(Error::invalid(
            "params",
            format!("{} expects {} parameters, got {}", model.name(), names.len(), params.len()),
        ));
    }
    if let FitModel::EchoDecay { t1: Some(t1) } = model {
        if !(*t1 >= MIN_TIME && *t1 <= MAX_TIME) {
            return Err(Error::OutOfBounds {
                name: "t1",
                value: *t1,
                lower: MIN_TIME,
                upper: MAX_TIME,
            });
        }
    }
    for &k in model.time_params() {
        if !(params[k] >= MIN_TIME && params[k] <= MAX_TIME) {
            return Err(Error::OutOfBounds {
                name: names[k],
                value: params[k],
                lower: MIN_TIME,
                upper: MAX_TIME,
            });
        }
    }
    if let FitModel::GaussianPeak = model {
        if !(params[2] > 0.0) {
            return Err(Error::OutOfBounds {
                name: "fwhm",
                value: params[2],
                lower: 0.0,
                upper: f64::INFINITY,
            });
        }
    }
    Ok(model.value(params, t))
}
