//! Damped least squares (Levenberg-Marquardt) with box constraints.

use nalgebra::{DMatrix, DVector};

use super::models::{Bounds, FitModel};
use super::{FitData, FitResult};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub max_iterations: usize,
    /// Stop when an accepted step lowers χ² by less than this fraction.
    pub rel_chi2_tol: f64,
    /// Stop when every scaled gradient component falls below this.
    pub grad_tol: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            rel_chi2_tol: 1e-10,
            grad_tol: 1e-12,
        }
    }
}

const LAMBDA_START: f64 = 1e-3;
const LAMBDA_MAX: f64 = 1e20;
const SINGULAR_RCOND: f64 = 1e-14;

struct Problem<'a> {
    model: &'a FitModel,
    data: &'a FitData,
    steps: Vec<f64>,
}

impl Problem<'_> {
    fn residuals(&self, p: &[f64]) -> DVector<f64> {
        let d = self.data;
        DVector::from_iterator(
            d.len(),
            (0..d.len()).map(|i| (d.y[i] - self.model.value(p, d.x[i])) / d.sigma[i]),
        )
    }

    /// ∂r/∂p by central differences.
    fn jacobian(&self, p: &[f64]) -> DMatrix<f64> {
        let d = self.data;
        let mut jac = DMatrix::zeros(d.len(), p.len());
        let mut work = p.to_vec();
        for j in 0..p.len() {
            let h = self.steps[j].max(1e-6 * p[j].abs());
            work[j] = p[j] + h;
            let plus: Vec<f64> = d.x.iter().map(|&x| self.model.value(&work, x)).collect();
            work[j] = p[j] - h;
            for i in 0..d.len() {
                let minus = self.model.value(&work, d.x[i]);
                jac[(i, j)] = -(plus[i] - minus) / (2.0 * h * d.sigma[i]);
            }
            work[j] = p[j];
        }
        jac
    }
}

/// Characteristic magnitude of each parameter, used to size difference steps.
fn param_scales(model: &FitModel, data: &FitData, p0: &[f64]) -> Vec<f64> {
    let (lo, hi) = super::models::extent(&data.x);
    let span = (hi - lo).abs().max(f64::MIN_POSITIVE);
    let yscale = data
        .y
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()))
        .max(f64::MIN_POSITIVE);
    let names = model.param_names();
    names
        .iter()
        .enumerate()
        .map(|(k, name)| {
            let typical = match *name {
                "omega" | "delta" => 1.0 / span,
                "phi" => 1.0,
                "center" | "fwhm" => span,
                _ if model.time_params().contains(&k) => span,
                _ => yscale,
            };
            1e-6 * typical.max(p0[k].abs())
        })
        .collect()
}

/// Weighted fit of `model` to `data`, starting at `init` and constrained to `bounds`.
///
/// Hitting the iteration limit is not an error: the best parameters so far
/// are returned with `converged = false`.
pub fn fit(model: &FitModel, data: &FitData, init: &[f64], bounds: &Bounds) -> Result<FitResult> {
    fit_with(model, data, init, bounds, &FitOptions::default())
}

pub fn fit_with(
    model: &FitModel,
    data: &FitData,
    init: &[f64],
    bounds: &Bounds,
    opts: &FitOptions,
) -> Result<FitResult> {
    data.validate()?;
    let np = model.n_params();
    if init.len() != np || bounds.lower.len() != np || bounds.upper.len() != np {
        return Err(Error::invalid(
            "init",
            format!("{} expects {np} parameters", model.name()),
        ));
    }
    if data.len() < np + 1 {
        return Err(Error::InsufficientData {
            needed: np + 1,
            got: data.len(),
        });
    }
    if init.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("init", "non-finite starting value"));
    }
    let mut p = init.to_vec();
    bounds.clamp(&mut p);

    let problem = Problem {
        model,
        data,
        steps: param_scales(model, data, &p),
    };
    let mut r = problem.residuals(&p);
    let mut chi2 = r.norm_squared();
    if !chi2.is_finite() {
        return Err(Error::Domain("model is not finite at the starting point".into()));
    }

    let mut lambda = LAMBDA_START;
    let mut converged = false;
    let mut iterations = 0;
    let mut jac = problem.jacobian(&p);

    while iterations < opts.max_iterations {
        iterations += 1;
        let (n, g, scale, live) = normal_equations(&jac, &r)?;
        if chi2 <= 1e-28 * data.len() as f64 {
            converged = true;
            break;
        }
        let grad_max = (0..np)
            .filter(|&j| live[j])
            .map(|j| g[j].abs())
            .fold(0.0, f64::max)
            / chi2.sqrt();
        if grad_max < opts.grad_tol {
            converged = true;
            break;
        }

        let mut accepted = false;
        while lambda <= LAMBDA_MAX {
            let mut a = n.clone();
            for j in 0..np {
                a[(j, j)] += lambda;
            }
            let step = match a.clone().cholesky() {
                Some(ch) => ch.solve(&(-&g)),
                None => match a.lu().solve(&(-&g)) {
                    Some(s) => s,
                    None => {
                        lambda *= 10.0;
                        continue;
                    }
                },
            };
            let mut trial = p.clone();
            for j in 0..np {
                if live[j] {
                    trial[j] += step[j] / scale[j];
                }
            }
            bounds.clamp(&mut trial);
            let r_trial = problem.residuals(&trial);
            let chi2_trial = r_trial.norm_squared();
            if chi2_trial.is_finite() && chi2_trial < chi2 {
                let rel = (chi2 - chi2_trial) / chi2;
                p = trial;
                r = r_trial;
                chi2 = chi2_trial;
                lambda = (lambda / 10.0).max(1e-12);
                accepted = true;
                if rel < opts.rel_chi2_tol {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if !accepted {
            // No downhill step exists at working precision.
            converged = true;
            break;
        }
        jac = problem.jacobian(&p);
        if converged {
            break;
        }
    }

    let jac = problem.jacobian(&p);
    let dof = data.len() - np;
    let chi2_reduced = chi2 / dof as f64;
    let covariance = covariance(&jac, chi2_reduced)?;
    let std_errors = (0..np).map(|j| covariance[(j, j)].sqrt()).collect();
    Ok(FitResult {
        model: *model,
        names: model.param_names().to_vec(),
        params: p,
        std_errors,
        covariance,
        chi2,
        chi2_reduced,
        dof,
        converged,
        iterations,
    })
}

/// Column-scaled normal equations. Returns (scaled JᵀJ, scaled Jᵀr, column norms, live mask).
#[allow(clippy::type_complexity)]
fn normal_equations(
    jac: &DMatrix<f64>,
    r: &DVector<f64>,
) -> Result<(DMatrix<f64>, DVector<f64>, Vec<f64>, Vec<bool>)> {
    let np = jac.ncols();
    let mut scale = vec![1.0; np];
    let mut live = vec![false; np];
    for j in 0..np {
        let norm = jac.column(j).norm();
        if norm.is_finite() && norm > 0.0 {
            scale[j] = norm;
            live[j] = true;
        } else if !norm.is_finite() {
            return Err(Error::SingularJacobian(format!(
                "column {j} of the jacobian is not finite"
            )));
        }
    }
    if !live.iter().any(|&l| l) {
        return Err(Error::SingularJacobian(
            "model does not depend on any parameter at this point".into(),
        ));
    }
    let mut js = jac.clone();
    for j in 0..np {
        let s = if live[j] { 1.0 / scale[j] } else { 0.0 };
        js.column_mut(j).scale_mut(s);
    }
    let mut n = js.transpose() * &js;
    for j in 0..np {
        if !live[j] {
            n[(j, j)] = 1.0;
        }
    }
    let g = js.transpose() * r;
    Ok((n, g, scale, live))
}

/// χ²_red·(JᵀWJ)⁻¹. Parameters the data cannot determine get infinite variance.
fn covariance(jac: &DMatrix<f64>, chi2_reduced: f64) -> Result<DMatrix<f64>> {
    let np = jac.ncols();
    let mut scale = vec![0.0; np];
    for j in 0..np {
        scale[j] = jac.column(j).norm();
    }
    let live: Vec<usize> = (0..np).filter(|&j| scale[j] > 0.0 && scale[j].is_finite()).collect();
    let mut cov = DMatrix::zeros(np, np);
    for j in 0..np {
        if !live.contains(&j) {
            cov[(j, j)] = f64::INFINITY;
        }
    }
    if live.is_empty() {
        return Ok(cov);
    }
    let mut js = DMatrix::zeros(jac.nrows(), live.len());
    for (c, &j) in live.iter().enumerate() {
        js.set_column(c, &(jac.column(j) / scale[j]));
    }
    let n = js.transpose() * &js;
    let svd = n.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let flagged: Vec<bool> = {
        let mut f = vec![false; live.len()];
        let v_t = svd.v_t.as_ref().expect("svd computed with v");
        for (k, &s) in svd.singular_values.iter().enumerate() {
            if s <= SINGULAR_RCOND * smax {
                for c in 0..live.len() {
                    if v_t[(k, c)].abs() > 1e-6 {
                        f[c] = true;
                    }
                }
            }
        }
        f
    };
    let inv = svd
        .pseudo_inverse(SINGULAR_RCOND * smax)
        .map_err(|e| Error::SingularJacobian(e.to_string()))?;
    for (a, &ja) in live.iter().enumerate() {
        for (b, &jb) in live.iter().enumerate() {
            cov[(ja, jb)] = if flagged[a] || flagged[b] {
                if a == b {
                    f64::INFINITY
                } else {
                    0.0
                }
            } else {
                chi2_reduced * inv[(a, b)] / (scale[ja] * scale[jb])
            };
        }
    }
    Ok(cov)
}
