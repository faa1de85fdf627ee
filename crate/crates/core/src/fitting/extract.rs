//! Physical-parameter extraction from experiment curves.

use super::{fit_auto, FitData, FitModel, FitResult};
use crate::error::{Error, Result};

/// Recovery time from a pump-probe curve. Parameter `t1` in seconds.
pub fn extract_t1(delays: &[f64], ratios: &[f64], sigmas: &[f64]) -> Result<FitResult> {
    if delays.len() < 4 {
        return Err(Error::InsufficientData {
            needed: 4,
            got: delays.len(),
        });
    }
    let data = FitData::new(delays.to_vec(), ratios.to_vec(), sigmas.to_vec())?;
    let lo = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi - lo <= 0.0 {
        return Err(Error::Degenerate("recovery curve has no contrast".into()));
    }
    let res = fit_auto(&FitModel::ExpRecovery, &data)?;
    let contrast = res.value("y_inf") - res.value("y0");
    let c = &res.covariance;
    let var = c[(0, 0)] + c[(1, 1)] - 2.0 * c[(0, 1)];
    if !(var.is_finite()) || contrast.abs() <= 2.0 * var.max(0.0).sqrt() {
        return Err(Error::Degenerate(format!(
            "recovery contrast {contrast:e} is not resolved (std error {:e})",
            var.max(0.0).sqrt()
        )));
    }
    Ok(res)
}

/// Rabi oscillation: `omega` (rad/s) and `t2` (s).
pub fn extract_rabi(data: &FitData) -> Result<FitResult> {
    fit_auto(&FitModel::DampedCosine, data)
}

/// Ramsey fringe: `delta` (rad/s), `phi` and `t2` (T₂*).
pub fn extract_ramsey(data: &FitData) -> Result<FitResult> {
    fit_auto(&FitModel::DetunedDampedCosine, data)
}

/// Echo or CPMG envelope; `t1 = Some(_)` holds the relaxation time fixed.
pub fn extract_cpmg(data: &FitData, t1: Option<f64>) -> Result<FitResult> {
    fit_auto(&FitModel::EchoDecay { t1 }, data)
}

/// Spectral line: `center` and `fwhm` in the abscissa unit.
pub fn extract_oder(data: &FitData) -> Result<FitResult> {
    fit_auto(&FitModel::GaussianPeak, data)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_err: f64,
    pub intercept_err: f64,
    pub r_squared: f64,
}

/// Ordinary least-squares line through (x, y).
pub fn linear_regression(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    if x.len() != y.len() {
        return Err(Error::invalid("data", "x and y lengths differ"));
    }
    let n = x.len();
    if n < 3 {
        return Err(Error::InsufficientData { needed: 3, got: n });
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    if sxx == 0.0 {
        return Err(Error::Degenerate("all x values are equal".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum();
    let s2 = sse / (nf - 2.0);
    let r_squared = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    Ok(LinearFit {
        slope,
        intercept,
        slope_err: (s2 / sxx).sqrt(),
        intercept_err: (s2 * (1.0 / nf + mx * mx / sxx)).sqrt(),
        r_squared,
    })
}
