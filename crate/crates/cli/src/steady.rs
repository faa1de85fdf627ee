use std::fmt::Write as _;

use nv0_core::bloch::{steady_state_analytic, steady_state_linear, steady_state_numeric, Drives};
use nv0_core::physics::{angular, ordinary};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::output::emit;

pub const STEADY_HEADER: &str = "# nv0 steady v1";

/// Largest population difference accepted as agreement.
pub const AGREEMENT_TOL: f64 = 1e-6;

pub fn run(c: &RunConfig) -> Result<(), CliError> {
    c.validate()?;
    let rates = c.model().rates(c.temperature, 0.0)?;
    let omega = angular(c.physics.opt_rabi.hz());
    if !(omega >= 0.0) {
        return Err(CliError::Config("physics.opt_rabi must be >= 0".into()));
    }
    let drives = Drives::optical(omega, 0.0);
    let numeric = steady_state_numeric(&rates, &drives)?.populations();
    let linear = steady_state_linear(&rates, &drives)?.populations();
    let kappa = rates.kappa_down + rates.kappa_up;
    let (a0, a1, a2) = steady_state_analytic(rates.gamma, kappa, omega)?;
    let analytic = [a0, a1, a2];
    let dev = numeric
        .iter()
        .zip(&analytic)
        .map(|(n, a)| (n - a).abs())
        .fold(0.0, f64::max);

    let mut out = format!(
        "{STEADY_HEADER}\n# temperature_k={:e} gamma_hz={:e} kappa_down_hz={:e} kappa_up_hz={:e} opt_rabi_hz={:e}\n",
        c.temperature,
        c.physics.gamma.hz(),
        ordinary(rates.kappa_down),
        ordinary(rates.kappa_up),
        c.physics.opt_rabi.hz()
    );
    let _ = writeln!(
        out,
        "# agreement numeric_vs_analytic={} max_deviation={dev:.3e} tolerance={AGREEMENT_TOL:e}",
        dev <= AGREEMENT_TOL
    );
    out.push_str("method,rho00,rho11,rho22\n");
    // Round-off below the printed precision would show up as "-0.000000000".
    let clean = |v: f64| if v.abs() < 5e-10 { 0.0 } else { v };
    for (name, p) in [("numeric", numeric), ("linear", linear), ("analytic", analytic)] {
        let _ = writeln!(out, "{name},{:.9},{:.9},{:.9}", clean(p[0]), clean(p[1]), clean(p[2]));
    }
    emit(&out, c.output.as_deref())
}
