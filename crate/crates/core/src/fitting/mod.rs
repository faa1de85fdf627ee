//! Weighted nonlinear least squares and the experiment fit models.

mod extract;
mod guess;
mod lm;
mod models;

use std::fmt::Write as _;

use nalgebra::DMatrix;

use crate::detection::CountTrace;
use crate::error::{Error, Result};

pub use extract::{
    extract_cpmg, extract_oder, extract_rabi, extract_ramsey, extract_t1, linear_regression,
    LinearFit,
};
pub use guess::initial_guess;
pub use lm::{fit, fit_with, FitOptions};
pub use models::{eval, Bounds, FitModel, MAX_TIME, MIN_TIME};

pub const FIT_REPORT_HEADER: &str = "# nv0 fit-report v1";

/// Abscissae, observations and their standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct FitData {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl FitData {
    pub fn new(x: Vec<f64>, y: Vec<f64>, sigma: Vec<f64>) -> Result<Self> {
        let d = Self { x, y, sigma };
        d.validate()?;
        Ok(d)
    }

    /// Equal unit weights.
    pub fn unweighted(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        let n = y.len();
        Self::new(x, y, vec![1.0; n])
    }

    /// Raw counts with Poisson errors √counts, floored at 1.
    pub fn from_counts(x: Vec<f64>, counts: Vec<f64>) -> Result<Self> {
        let sigma = counts.iter().map(|c| c.max(0.0).sqrt().max(1.0)).collect();
        Self::new(x, counts, sigma)
    }

    /// A count trace, with sigma floored at 1.
    pub fn from_trace(trace: &CountTrace) -> Result<Self> {
        let sigma = trace.sigma.iter().map(|s| s.max(1.0)).collect();
        Self::new(trace.t.clone(), trace.counts.clone(), sigma)
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.x.len() != self.y.len() || self.x.len() != self.sigma.len() {
            return Err(Error::invalid("data", "x, y and sigma lengths differ"));
        }
        if self.x.is_empty() {
            return Err(Error::InsufficientData { needed: 1, got: 0 });
        }
        if self.x.iter().chain(&self.y).any(|v| !v.is_finite()) {
            return Err(Error::invalid("data", "non-finite value"));
        }
        if self.sigma.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
            return Err(Error::invalid("sigma", "every sigma must be finite and > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub model: FitModel,
    pub names: Vec<&'static str>,
    pub params: Vec<f64>,
    /// Infinite when the data do not constrain the parameter.
    pub std_errors: Vec<f64>,
    pub covariance: DMatrix<f64>,
    pub chi2: f64,
    pub chi2_reduced: f64,
    pub dof: usize,
    pub converged: bool,
    pub iterations: usize,
}

impl FitResult {
    fn index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| *n == name)
    }

    /// (value, standard error) of a named parameter.
    pub fn param(&self, name: &str) -> Option<(f64, f64)> {
        self.index(name).map(|k| (self.params[k], self.std_errors[k]))
    }

    /// Value of a named parameter; panics on an unknown name.
    pub fn value(&self, name: &str) -> f64 {
        self.param(name)
            .unwrap_or_else(|| panic!("{} has no parameter `{name}`", self.model.name()))
            .0
    }

    pub fn error(&self, name: &str) -> f64 {
        self.param(name)
            .unwrap_or_else(|| panic!("{} has no parameter `{name}`", self.model.name()))
            .1
    }

    /// Whether any parameter error is infinite or NaN.
    pub fn is_flagged(&self) -> bool {
        self.std_errors.iter().any(|e| !e.is_finite())
    }

    pub fn predict(&self, x: f64) -> f64 {
        self.model.value(&self.params, x)
    }

    /// Human-readable report.
    pub fn report_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "model: {}", self.model);
        for k in 0..self.params.len() {
            let _ = writeln!(
                out,
                "  {:<7} = {:>14.6e} +/- {:.3e}",
                self.names[k], self.params[k], self.std_errors[k]
            );
        }
        let _ = writeln!(out, "chi2_reduced: {:.4} (dof {})", self.chi2_reduced, self.dof);
        let _ = writeln!(
            out,
            "converged: {} after {} iterations",
            self.converged, self.iterations
        );
        out
    }

    /// CSV with columns parameter, value, std_error plus chi2 and status rows.
    pub fn report_csv(&self) -> String {
        let mut out = format!("{FIT_REPORT_HEADER}\n# model={}\nparameter,value,std_error\n", self.model.name());
        for k in 0..self.params.len() {
            let _ = writeln!(out, "{},{:e},{:e}", self.names[k], self.params[k], self.std_errors[k]);
        }
        if let FitModel::EchoDecay { t1: Some(t1) } = self.model {
            let _ = writeln!(out, "t1_fixed,{t1:e},0");
        }
        let _ = writeln!(out, "chi2_reduced,{:e},", self.chi2_reduced);
        let _ = writeln!(out, "converged,{},", u8::from(self.converged));
        let _ = writeln!(out, "iterations,{},", self.iterations);
        out
    }
}

/// Fit with automatic starting point and default bounds.
pub fn fit_auto(model: &FitModel, data: &FitData) -> Result<FitResult> {
    data.validate()?;
    let bounds = model.default_bounds(&data.x);
    let init = initial_guess(model, data, &bounds);
    fit(model, data, &init, &bounds)
}
