//! Ground-state energy structure and the single-phonon relaxation laws.
//!
//! Formulas take angular frequencies (rad/s). Configuration values quoted as
//! ordinary frequencies are converted with [`angular`] at the boundary.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// CODATA 2018 exact/recommended values.
#[derive(Debug, Clone, Copy)]
pub struct PhysConstants;

impl PhysConstants {
    /// Reduced Planck constant, J·s.
    pub const HBAR: f64 = 1.054_571_817e-34;
    /// Boltzmann constant, J/K.
    pub const K_B: f64 = 1.380_649e-23;
}

/// Sample temperature assumed when a measured T₁ exceeds the zero-temperature limit.
pub const DEFAULT_FLOOR_TEMPERATURE: f64 = 0.012;

const BISECTION_LOW: f64 = 1e-3;
const BISECTION_HIGH: f64 = 300.0;
const BISECTION_TOL: f64 = 1e-9;

/// Ordinary frequency (Hz) to angular frequency (rad/s).
#[inline]
pub fn angular(hz: f64) -> f64 {
    2.0 * PI * hz
}

/// Angular frequency (rad/s) to ordinary frequency (Hz).
#[inline]
pub fn ordinary(rad_per_s: f64) -> f64 {
    rad_per_s / (2.0 * PI)
}

/// Spin-orbit coupling and transverse strain, both as ordinary frequencies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundStateParams {
    /// λ/2π in Hz.
    pub lambda: f64,
    /// ε⊥/2π in Hz.
    pub eps_perp: f64,
}

impl GroundStateParams {
    pub fn new(lambda: f64, eps_perp: f64) -> Result<Self> {
        if !(lambda >= 0.0) {
            return Err(Error::invalid("lambda", "must be >= 0"));
        }
        if !(eps_perp >= 0.0) {
            return Err(Error::invalid("eps_perp", "must be >= 0"));
        }
        Ok(Self { lambda, eps_perp })
    }
}

/// Ground-state splitting 2√(λ² + ε⊥²), in the frequency convention of the inputs.
pub fn ground_state_splitting(p: &GroundStateParams) -> f64 {
    2.0 * p.lambda.hypot(p.eps_perp)
}

/// Phonon bath seen by the orbital doublet.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhononBath {
    /// Coupling constant A, s² (rad/s)⁻³.
    pub coupling_a: f64,
    /// Ground-state splitting Δ_gs in rad/s.
    pub delta_gs: f64,
    /// Bath temperature in K.
    pub temperature: f64,
}

impl PhononBath {
    pub fn new(coupling_a: f64, delta_gs: f64, temperature: f64) -> Result<Self> {
        if !(coupling_a > 0.0) {
            return Err(Error::invalid("coupling_a", "must be > 0"));
        }
        if !(delta_gs > 0.0) {
            return Err(Error::invalid("delta_gs", "must be > 0"));
        }
        if !(temperature >= 0.0) {
            return Err(Error::invalid("temperature", "must be >= 0"));
        }
        Ok(Self {
            coupling_a,
            delta_gs,
            temperature,
        })
    }

    /// Zero-temperature rate AΔ³.
    pub fn spontaneous_rate(&self) -> f64 {
        self.coupling_a * self.delta_gs.powi(3)
    }

    fn occupation(&self) -> f64 {
        // Constructor guarantees delta_gs > 0.
        bose_einstein(self.delta_gs, self.temperature).unwrap_or(0.0)
    }

    pub fn with_temperature(&self, temperature: f64) -> Self {
        Self {
            temperature,
            ..*self
        }
    }
}

/// Reduced energy ħΔ/k_BT.
fn reduced_energy(delta: f64, temperature: f64) -> f64 {
    PhysConstants::HBAR * delta / (PhysConstants::K_B * temperature)
}

/// Temperature scale ħΔ/k_B of the splitting, in K.
pub fn crossover_temperature(delta: f64) -> f64 {
    PhysConstants::HBAR * delta / PhysConstants::K_B
}

/// Bose-Einstein occupation 1/(exp(ħΔ/k_BT) − 1); exactly zero at T = 0.
pub fn bose_einstein(delta: f64, temperature: f64) -> Result<f64> {
    if !(delta > 0.0) {
        return Err(Error::Domain(format!(
            "Bose-Einstein occupation needs delta > 0, got {delta:e}"
        )));
    }
    if !(temperature >= 0.0) {
        return Err(Error::Domain(format!(
            "temperature must be >= 0, got {temperature:e}"
        )));
    }
    if temperature == 0.0 {
        return Ok(0.0);
    }
    Ok(1.0 / reduced_energy(delta, temperature).exp_m1())
}

/// 1/T₁ of the orbital doublet, AΔ³(2n + 1).
pub fn orbital_relaxation_rate(bath: &PhononBath) -> f64 {
    bath.spontaneous_rate() * (2.0 * bath.occupation() + 1.0)
}

/// 1/T₁ of the spin, AΔ³n.
pub fn spin_relaxation_rate(bath: &PhononBath) -> f64 {
    bath.spontaneous_rate() * bath.occupation()
}

/// Detailed-balance split of the orbital rate into emission (down) and absorption (up).
pub fn phonon_updown_rates(bath: &PhononBath) -> (f64, f64) {
    let n = bath.occupation();
    let r = bath.spontaneous_rate();
    (r * (n + 1.0), r * n)
}

/// Coupling constant that reproduces `t1_ref` at `t_ref`.
pub fn calibrate_coupling_a(t1_ref: f64, t_ref: f64, delta: f64) -> Result<f64> {
    if !(t1_ref > 0.0) {
        return Err(Error::invalid("t1_ref", "must be > 0"));
    }
    let n = bose_einstein(delta, t_ref)?;
    Ok(1.0 / (t1_ref * delta.powi(3) * (2.0 * n + 1.0)))
}

/// Invert the orbital law for the sample temperature.
///
/// A `t1` longer than the zero-temperature maximum 1/(AΔ³) maps to `floor_t`,
/// as does any solution colder than `floor_t`. Solutions hotter than 300 K
/// are clamped there.
pub fn temperature_from_t1(t1: f64, coupling_a: f64, delta: f64, floor_t: f64) -> Result<f64> {
    if !(t1 > 0.0) {
        return Err(Error::invalid("t1", "must be > 0"));
    }
    let bath = PhononBath::new(coupling_a, delta, 0.0)?;
    let target = 1.0 / t1;
    if target <= bath.spontaneous_rate() {
        return Ok(floor_t);
    }
    let rate_at = |t: f64| orbital_relaxation_rate(&bath.with_temperature(t));
    let (mut lo, mut hi) = (BISECTION_LOW, BISECTION_HIGH);
    if rate_at(hi) <= target {
        return Ok(hi);
    }
    if rate_at(lo) >= target {
        return Ok(floor_t.max(lo));
    }
    while hi - lo > BISECTION_TOL {
        let mid = 0.5 * (lo + hi);
        if rate_at(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(floor_t.max(0.5 * (lo + hi)))
}


#[cfg(test)]
mod proptests {
    use super::*;
    use proptest::prelude::*;

    const DELTA: f64 = 8.194_45e10;

    proptest! {
        #[test]
        fn splitting_monotone(l in 0.0..1e10f64, e in 0.0..1e10f64, dl in 0.0..1e9f64, de in 0.0..1e9f64) {
            let base = ground_state_splitting(&GroundStateParams { lambda: l, eps_perp: e });
            let more_l = ground_state_splitting(&GroundStateParams { lambda: l + dl, eps_perp: e });
            let more_e = ground_state_splitting(&GroundStateParams { lambda: l, eps_perp: e + de });
            prop_assert!(more_l >= base);
            prop_assert!(more_e >= base);
        }

        #[test]
        fn occupation_monotone(t in 0.01..50.0f64, f in 1.001..2.0f64) {
            let n = bose_einstein(DELTA, t).unwrap();
            prop_assert!(bose_einstein(DELTA, t * f).unwrap() > n);
            prop_assert!(bose_einstein(DELTA * f, t).unwrap() < n);
        }

        #[test]
        fn orbital_ratio_is_two_n_plus_one(t in 0.0..20.0f64) {
            let bath = PhononBath::new(3.9e-28, DELTA, t).unwrap();
            let n = bose_einstein(DELTA, t).unwrap();
            let ratio = orbital_relaxation_rate(&bath) / orbital_relaxation_rate(&bath.with_temperature(0.0));
            prop_assert!((ratio - (2.0 * n + 1.0)).abs() <= 1e-12 * ratio);
            prop_assert!(spin_relaxation_rate(&bath) < orbital_relaxation_rate(&bath));
        }

        #[test]
        fn detailed_balance(t in 0.01..20.0f64) {
            let bath = PhononBath::new(3.9e-28, DELTA, t).unwrap();
            let (down, up) = phonon_updown_rates(&bath);
            let total = orbital_relaxation_rate(&bath);
            prop_assert!(((down + up) - total).abs() <= 1e-12 * total);
            let boltzmann = (-PhysConstants::HBAR * DELTA / (PhysConstants::K_B * t)).exp();
            prop_assert!((up / down - boltzmann).abs() <= 1e-12 * boltzmann.max(1e-300));
        }

        // f64 T₁ resolves n_BE to ~1e-16/n relative, which is below 1e-6 in T only above ~30 mK.
        #[test]
        fn thermometry_inverts_forward_law(t in 0.03..10.0f64) {
            let bath = PhononBath::new(3.9e-28, DELTA, t).unwrap();
            let t1 = 1.0 / orbital_relaxation_rate(&bath);
            let back = temperature_from_t1(t1, 3.9e-28, DELTA, 0.001).unwrap();
            prop_assert!(((back - t) / t).abs() <= 1e-6, "{} vs {}", back, t);
        }

        #[test]
        fn thermometry_monotone(t1 in 1e-8..1e-5f64, f in 1.0..3.0f64) {
            let a = temperature_from_t1(t1, 3.9e-28, DELTA, 0.012).unwrap();
            let b = temperature_from_t1(t1 * f, 3.9e-28, DELTA, 0.012).unwrap();
            prop_assert!(b <= a);
        }
    }
}
