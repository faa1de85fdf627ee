//! Coupling budget for the orbital transition inside a microwave resonator.

use std::f64::consts::PI;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::physics::PhysConstants;

pub const CQED_SWEEP_HEADER: &str = "# nv0 cqed-sweep v1";

/// Resonator mode; frequencies in Hz, impedance in Ω, gap in m.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResonatorSpec {
    pub frequency: f64,
    pub impedance: f64,
    /// κ/2π.
    pub linewidth: f64,
    pub gap: f64,
}

impl ResonatorSpec {
    pub fn new(frequency: f64, impedance: f64, linewidth: f64, gap: f64) -> Result<Self> {
        let r = Self {
            frequency,
            impedance,
            linewidth,
            gap,
        };
        r.validate()?;
        Ok(r)
    }

    /// Linewidth from a loaded quality factor.
    pub fn with_quality_factor(frequency: f64, impedance: f64, q: f64, gap: f64) -> Result<Self> {
        if !(q > 0.0 && q.is_finite()) {
            return Err(Error::invalid("q", "must be finite and > 0"));
        }
        Self::new(frequency, impedance, frequency / q, gap)
    }

    pub fn quality_factor(&self) -> f64 {
        self.frequency / self.linewidth
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("frequency", self.frequency),
            ("impedance", self.impedance),
            ("linewidth", self.linewidth),
            ("gap", self.gap),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(name, "must be finite and > 0"));
            }
        }
        Ok(())
    }
}

impl Default for ResonatorSpec {
    fn default() -> Self {
        Self {
            frequency: 13e9,
            impedance: 4e3,
            linewidth: 100e3,
            gap: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmitterSpec {
    /// Stark shift per applied field, Hz per V/m.
    pub field_sensitivity: f64,
    /// Orbital relaxation time, s. May be infinite.
    pub t1_orbital: f64,
}

impl EmitterSpec {
    pub fn new(field_sensitivity: f64, t1_orbital: f64) -> Result<Self> {
        let e = Self {
            field_sensitivity,
            t1_orbital,
        };
        e.validate()?;
        Ok(e)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.field_sensitivity > 0.0 && self.field_sensitivity.is_finite()) {
            return Err(Error::invalid("field_sensitivity", "must be finite and > 0"));
        }
        if !(self.t1_orbital > 0.0) {
            return Err(Error::invalid("t1_orbital", "must be > 0"));
        }
        Ok(())
    }

    /// γ/2π = 1/(2πT₁), Hz.
    pub fn linewidth(&self) -> f64 {
        1.0 / (2.0 * PI * self.t1_orbital)
    }
}

impl Default for EmitterSpec {
    fn default() -> Self {
        Self {
            field_sensitivity: 1e4,
            t1_orbital: 4.7e-6,
        }
    }
}

/// Zero-point voltage ω√(ħZ/2), V.
pub fn single_photon_voltage(res: &ResonatorSpec) -> f64 {
    2.0 * PI * res.frequency * (PhysConstants::HBAR * res.impedance / 2.0).sqrt()
}

/// Field across the gap, 2V/d, V/m.
pub fn gap_field(voltage: f64, gap: f64) -> Result<f64> {
    if !(gap > 0.0) {
        return Err(Error::invalid("gap", "must be > 0"));
    }
    Ok(2.0 * voltage / gap)
}

/// g/2π in Hz.
pub fn coupling_strength(field: f64, emitter: &EmitterSpec) -> f64 {
    emitter.field_sensitivity * field
}

/// 4g²/(γκ). Any consistent frequency unit.
///
/// A vanishing emitter linewidth gives an infinite cooperativity when g ≠ 0.
pub fn cooperativity(g: f64, gamma: f64, kappa: f64) -> Result<f64> {
    if !(kappa > 0.0 && kappa.is_finite()) {
        return Err(Error::invalid("kappa", "must be finite and > 0"));
    }
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return Err(Error::invalid("gamma", "must be finite and >= 0"));
    }
    if gamma == 0.0 {
        if g == 0.0 {
            return Err(Error::Degenerate("g and gamma are both zero".into()));
        }
        return Ok(f64::INFINITY);
    }
    Ok(4.0 * g * g / (gamma * kappa))
}

/// g beats both loss channels.
pub fn is_strong(g: f64, gamma: f64, kappa: f64) -> bool {
    g > gamma.max(kappa)
}

/// One evaluation of the coupling chain. Frequencies in Hz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CouplingChain {
    pub photon_voltage: f64,
    pub gap_field: f64,
    pub g: f64,
    pub gamma_emitter: f64,
    pub kappa_resonator: f64,
    pub strong_coupling: bool,
    pub cooperativity: f64,
}

impl CouplingChain {
    fn from_parts(photon_voltage: f64, gap: f64, emitter: &EmitterSpec, gamma: f64, kappa: f64) -> Result<Self> {
        let field = gap_field(photon_voltage, gap)?;
        let g = coupling_strength(field, emitter);
        Ok(Self {
            photon_voltage,
            gap_field: field,
            g,
            gamma_emitter: gamma,
            kappa_resonator: kappa,
            strong_coupling: is_strong(g, gamma, kappa),
            cooperativity: cooperativity(g, gamma, kappa)?,
        })
    }
}

/// Full-precision chain plus the variant built from two-digit intermediates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CouplingReport {
    pub exact: CouplingChain,
    /// Voltage truncated and γ rounded to two significant digits.
    pub rounded: CouplingChain,
}

impl std::ops::Deref for CouplingReport {
    type Target = CouplingChain;
    fn deref(&self) -> &CouplingChain {
        &self.exact
    }
}

fn scale_of(x: f64) -> f64 {
    10f64.powi(x.abs().log10().floor() as i32 - 1)
}

fn truncate_2(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    let s = scale_of(x);
    (x / s).trunc() * s
}

fn round_2(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    let s = scale_of(x);
    (x / s).round() * s
}

pub fn assess(res: &ResonatorSpec, emitter: &EmitterSpec) -> Result<CouplingReport> {
    res.validate()?;
    emitter.validate()?;
    let v = single_photon_voltage(res);
    let gamma = emitter.linewidth();
    Ok(CouplingReport {
        exact: CouplingChain::from_parts(v, res.gap, emitter, gamma, res.linewidth)?,
        rounded: CouplingChain::from_parts(truncate_2(v), res.gap, emitter, round_2(gamma), res.linewidth)?,
    })
}

impl CouplingReport {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (label, c) in [("full precision", &self.exact), ("two-digit chain", &self.rounded)] {
            let _ = writeln!(out, "[{label}]");
            let _ = writeln!(out, "photon_voltage_uV  = {:.4}", c.photon_voltage * 1e6);
            let _ = writeln!(out, "gap_field_V_per_m  = {:.4}", c.gap_field);
            let _ = writeln!(out, "g_kHz              = {:.3}", c.g * 1e-3);
            let _ = writeln!(out, "gamma_kHz          = {:.3}", c.gamma_emitter * 1e-3);
            let _ = writeln!(out, "kappa_kHz          = {:.3}", c.kappa_resonator * 1e-3);
            let _ = writeln!(out, "cooperativity      = {:.2}", c.cooperativity);
            let _ = writeln!(out, "strong_coupling    = {}", c.strong_coupling);
        }
        out
    }
}

/// Grid evaluation over impedance, gap and quality factor, in that nesting order.
pub fn sweep(
    base: &ResonatorSpec,
    emitter: &EmitterSpec,
    impedances: &[f64],
    gaps: &[f64],
    qs: &[f64],
) -> Result<Vec<(ResonatorSpec, CouplingReport)>> {
    let mut rows = Vec::with_capacity(impedances.len() * gaps.len() * qs.len());
    for &z in impedances {
        for &d in gaps {
            for &q in qs {
                let r = ResonatorSpec::with_quality_factor(base.frequency, z, q, d)?;
                rows.push((r, assess(&r, emitter)?));
            }
        }
    }
    Ok(rows)
}

pub fn sweep_csv(rows: &[(ResonatorSpec, CouplingReport)]) -> String {
    let mut out = format!(
        "{CQED_SWEEP_HEADER}\nimpedance_ohm,gap_m,q,photon_voltage_v,gap_field_v_per_m,g_hz,gamma_hz,kappa_hz,cooperativity,strong\n"
    );
    for (r, rep) in rows {
        let c = &rep.exact;
        let _ = writeln!(
            out,
            "{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{}",
            r.impedance,
            r.gap,
            r.quality_factor(),
            c.photon_voltage,
            c.gap_field,
            c.g,
            c.gamma_emitter,
            c.kappa_resonator,
            c.cooperativity,
            u8::from(c.strong_coupling)
        );
    }
    out
}
