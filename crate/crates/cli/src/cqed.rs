use nv0_core::cqed::{assess, sweep, sweep_csv};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::output::emit;

pub const CQED_REPORT_HEADER: &str = "# nv0 cqed-report v1";

pub fn run(c: &RunConfig, csv: bool) -> Result<(), CliError> {
    let q = &c.cqed;
    let base = q.resonator()?;
    let emitter = q.emitter()?;
    let grid = q.impedances.is_some() || q.gaps.is_some() || q.qs.is_some();
    let text = if grid || csv {
        let zs = q.impedances.clone().unwrap_or_else(|| vec![base.impedance]);
        let ds = q.gaps.clone().unwrap_or_else(|| vec![base.gap]);
        let qs = q.qs.clone().unwrap_or_else(|| vec![base.quality_factor()]);
        if zs.is_empty() || ds.is_empty() || qs.is_empty() {
            return Err(CliError::Config("cqed: sweep lists must not be empty".into()));
        }
        let rows = sweep(&base, &emitter, &zs, &ds, &qs).map_err(|e| CliError::Config(format!("cqed: {e}")))?;
        sweep_csv(&rows)
    } else {
        let report = assess(&base, &emitter)?;
        format!(
            "{CQED_REPORT_HEADER}\nresonator: f = {:e} Hz, Z = {:e} ohm, Q = {:e}, gap = {:e} m\nemitter: {:e} Hz per V/m, T1 = {:e} s\n{}",
            base.frequency,
            base.impedance,
            base.quality_factor(),
            base.gap,
            emitter.field_sensitivity,
            emitter.t1_orbital,
            report.to_text()
        )
    };
    emit(&text, c.output.as_deref())
}
