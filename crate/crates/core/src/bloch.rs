//! Density-matrix dynamics of the effective three-level system.
//!
//! Basis order is (|0⟩, |1⟩, |2⟩): the two orbital ground levels and the
//! optically excited level. The frame rotates with both drives, so the
//! Hamiltonian is
//!
//! ```text
//!     | 0                 Ω_mw/2·e^{-iφ}   Ω_opt/2 |
//! H = | Ω_mw/2·e^{iφ}     Δ_mw             0       |
//!     | Ω_opt/2           0                δ_opt   |
//! ```
//!
//! with detunings defined as transition minus drive frequency. Dissipation is
//! Lindblad: |2⟩ decays at γ split evenly into |0⟩ and |1⟩, phonons move
//! population |1⟩→|0⟩ at κ↓ and back at κ↑, and a projector on |1⟩ dephases
//! the 0–1 coherence at γ_φ.

use std::ops::{Add, Index, Mul};

use nalgebra::{SMatrix, SVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Raw 3×3 complex matrix, used for derivatives and propagator algebra.
pub type Mat3 = [[C64; 3]; 3];

const ZERO: C64 = C64::new(0.0, 0.0);
const I: C64 = C64::new(0.0, 1.0);

pub const HERMITICITY_TOL: f64 = 1e-12;
pub const TRACE_TOL: f64 = 1e-9;
pub const POSITIVITY_TOL: f64 = 1e-9;

/// Steps per fastest timescale required by the fixed-step integrator.
pub const STEPS_PER_RATE: f64 = 50.0;

/// Hermitian, unit-trace, positive semidefinite 3×3 state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityMatrix3 {
    m: Mat3,
}

impl DensityMatrix3 {
    /// Validate and wrap a raw matrix.
    pub fn from_matrix(m: Mat3) -> Result<Self> {
        let rho = Self { m };
        rho.check(0.0)?;
        Ok(rho)
    }

    #[cfg(test)]
    pub(crate) fn from_matrix_unchecked(m: Mat3) -> Self {
        Self { m }
    }

    /// Pure basis state |k⟩⟨k|.
    pub fn basis(k: usize) -> Self {
        assert!(k < 3, "basis index out of range");
        let mut m = [[ZERO; 3]; 3];
        m[k][k] = C64::new(1.0, 0.0);
        Self { m }
    }

    pub fn ground() -> Self {
        Self::basis(0)
    }

    /// Incoherent mixture with the given populations.
    pub fn diagonal(p0: f64, p1: f64, p2: f64) -> Result<Self> {
        let mut m = [[ZERO; 3]; 3];
        m[0][0] = p0.into();
        m[1][1] = p1.into();
        m[2][2] = p2.into();
        Self::from_matrix(m)
    }

    pub fn matrix(&self) -> &Mat3 {
        &self.m
    }

    pub fn population(&self, k: usize) -> f64 {
        self.m[k][k].re
    }

    pub fn populations(&self) -> [f64; 3] {
        [self.m[0][0].re, self.m[1][1].re, self.m[2][2].re]
    }

    /// Element ρ_ij.
    pub fn element(&self, i: usize, j: usize) -> C64 {
        self.m[i][j]
    }

    pub fn trace(&self) -> C64 {
        self.m[0][0] + self.m[1][1] + self.m[2][2]
    }

    /// max |ρ_ij − conj(ρ_ji)|
    pub fn hermiticity_error(&self) -> f64 {
        let mut err = 0.0f64;
        for i in 0..3 {
            for j in i..3 {
                err = err.max((self.m[i][j] - self.m[j][i].conj()).norm());
            }
        }
        err
    }

    /// Eigenvalues of the Hermitian part, ascending.
    pub fn eigenvalues(&self) -> [f64; 3] {
        hermitian_eigenvalues(&self.m)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues()[0]
    }

    /// Fail if any density-matrix invariant is violated.
    pub fn check(&self, t: f64) -> Result<()> {
        if self.m.iter().flatten().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvariantViolation {
                t,
                what: "non-finite element".into(),
            });
        }
        let herm = self.hermiticity_error();
        if herm > HERMITICITY_TOL {
            return Err(Error::InvariantViolation {
                t,
                what: format!("hermiticity error {herm:e}"),
            });
        }
        let tr = self.trace();
        if (tr - 1.0).norm() > TRACE_TOL {
            return Err(Error::InvariantViolation {
                t,
                what: format!("trace {tr}"),
            });
        }
        if !shifted_cholesky_ok(&self.m, POSITIVITY_TOL) {
            let min_eig = self.min_eigenvalue();
            return Err(Error::InvariantViolation {
                t,
                what: format!("negative eigenvalue {min_eig:e}"),
            });
        }
        Ok(())
    }
}

impl Index<(usize, usize)> for DensityMatrix3 {
    type Output = C64;
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.m[i][j]
    }
}

/// Eigenvalues of a 3×3 Hermitian matrix, ascending.
///
/// Uses the real 6×6 symmetric embedding [[Re, −Im], [Im, Re]], whose spectrum
/// is the Hermitian spectrum with every eigenvalue doubled.
fn hermitian_eigenvalues(m: &Mat3) -> [f64; 3] {
    let mut r = SMatrix::<f64, 6, 6>::zeros();
    for i in 0..3 {
        for j in 0..3 {
            let z = 0.5 * (m[i][j] + m[j][i].conj());
            r[(i, j)] = z.re;
            r[(i + 3, j + 3)] = z.re;
            r[(i, j + 3)] = -z.im;
            r[(i + 3, j)] = z.im;
        }
    }
    let mut ev: Vec<f64> = r.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    [ev[0], ev[2], ev[4]]
}

/// True when ρ + shift·1 admits a Cholesky factorization.
fn shifted_cholesky_ok(m: &Mat3, shift: f64) -> bool {
    let a00 = m[0][0].re + shift;
    if !(a00 > 0.0) {
        return false;
    }
    let l00 = a00.sqrt();
    let l10 = m[1][0] / l00;
    let l20 = m[2][0] / l00;
    let a11 = m[1][1].re + shift - l10.norm_sqr();
    if !(a11 > 0.0) {
        return false;
    }
    let l11 = a11.sqrt();
    let l21 = (m[2][1] - l20 * l10.conj()) / l11;
    let a22 = m[2][2].re + shift - l20.norm_sqr() - l21.norm_sqr();
    a22 > 0.0
}

/// Relaxation and dephasing rates, all in s⁻¹ (angular-rate convention).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SystemRates {
    /// Total decay of |2⟩, split γ/2 into each ground level.
    pub gamma: f64,
    /// Phonon emission |1⟩ → |0⟩.
    pub kappa_down: f64,
    /// Phonon absorption |0⟩ → |1⟩.
    pub kappa_up: f64,
    /// Pure dephasing of the 0–1 coherence.
    pub gamma_phi: f64,
}

impl SystemRates {
    pub fn new(gamma: f64, kappa_down: f64, kappa_up: f64, gamma_phi: f64) -> Result<Self> {
        for (name, v) in [
            ("gamma", gamma),
            ("kappa_down", kappa_down),
            ("kappa_up", kappa_up),
            ("gamma_phi", gamma_phi),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::invalid(name, "must be finite and >= 0"));
            }
        }
        Ok(Self {
            gamma,
            kappa_down,
            kappa_up,
            gamma_phi,
        })
    }

    fn fastest(&self) -> f64 {
        self.gamma
            .max(self.kappa_down)
            .max(self.kappa_up)
            .max(2.0 * self.gamma_phi)
    }
}

/// Drive amplitudes and detunings, in rad/s (phase in rad).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Drives {
    /// Ω_opt on 0 ↔ 2.
    pub opt_rabi: f64,
    /// δ_opt = ω_02 − ω_laser.
    pub opt_detuning: f64,
    /// Ω_mw on 0 ↔ 1.
    pub mw_rabi: f64,
    /// Δ = ω_01 − ω_mw.
    pub mw_detuning: f64,
    /// φ, selects the rotation axis in the 0–1 plane.
    pub mw_phase: f64,
}

impl Drives {
    pub fn dark() -> Self {
        Self::default()
    }

    pub fn optical(rabi: f64, detuning: f64) -> Self {
        Self {
            opt_rabi: rabi,
            opt_detuning: detuning,
            ..Self::default()
        }
    }

    pub fn microwave(rabi: f64, detuning: f64, phase: f64) -> Self {
        Self {
            mw_rabi: rabi,
            mw_detuning: detuning,
            mw_phase: phase,
            ..Self::default()
        }
    }

    pub fn is_driven(&self) -> bool {
        self.opt_rabi != 0.0 || self.mw_rabi != 0.0
    }

    fn fastest(&self, mw_offset: f64) -> f64 {
        self.opt_rabi
            .abs()
            .max(self.opt_detuning.abs())
            .max(self.mw_rabi.abs())
            .max((self.mw_detuning + mw_offset).abs())
    }
}

/// Largest step the fixed-step integrator accepts for these rates and drives.
pub fn stability_limit(rates: &SystemRates, drives: &Drives, mw_offset: f64) -> f64 {
    let fastest = rates.fastest().max(drives.fastest(mw_offset));
    if fastest > 0.0 {
        1.0 / (STEPS_PER_RATE * fastest)
    } else {
        f64::INFINITY
    }
}

/// Jump b → a at `rate`: D[ρ] = rate·(ρ_bb|a⟩⟨a| − ½{|b⟩⟨b|, ρ}).
#[inline]
fn add_jump(out: &mut Mat3, rho: &Mat3, a: usize, b: usize, rate: f64) {
    if rate == 0.0 {
        return;
    }
    out[a][a] += rate * rho[b][b];
    let h = 0.5 * rate;
    for j in 0..3 {
        out[b][j] -= h * rho[b][j];
        out[j][b] -= h * rho[j][b];
    }
}

fn hamiltonian(drives: &Drives, mw_offset: f64) -> Mat3 {
    let mw = 0.5 * drives.mw_rabi * C64::from_polar(1.0, -drives.mw_phase);
    let opt = C64::new(0.5 * drives.opt_rabi, 0.0);
    [
        [ZERO, mw, opt],
        [mw.conj(), C64::new(drives.mw_detuning + mw_offset, 0.0), ZERO],
        [opt, ZERO, C64::new(drives.opt_detuning, 0.0)],
    ]
}

fn rhs_with_hamiltonian(rho: &Mat3, h: &Mat3, rates: &SystemRates) -> Mat3 {
    let mut out = [[ZERO; 3]; 3];
    // −i[H, ρ]
    for i in 0..3 {
        for j in i..3 {
            let mut acc = ZERO;
            for k in 0..3 {
                acc += h[i][k] * rho[k][j] - rho[i][k] * h[k][j];
            }
            out[i][j] = -I * acc;
        }
    }
    let mut diss = [[ZERO; 3]; 3];
    add_jump(&mut diss, rho, 0, 2, 0.5 * rates.gamma);
    add_jump(&mut diss, rho, 1, 2, 0.5 * rates.gamma);
    add_jump(&mut diss, rho, 0, 1, rates.kappa_down);
    add_jump(&mut diss, rho, 1, 0, rates.kappa_up);
    if rates.gamma_phi != 0.0 {
        // L = √(2γ_φ)|1⟩⟨1| damps every coherence touching |1⟩ at γ_φ.
        let g = rates.gamma_phi;
        diss[0][1] -= g * rho[0][1];
        diss[1][0] -= g * rho[1][0];
        diss[1][2] -= g * rho[1][2];
        diss[2][1] -= g * rho[2][1];
    }
    // The generator maps Hermitian to Hermitian; fill the lower triangle from the upper.
    for i in 0..3 {
        for j in i..3 {
            out[i][j] += diss[i][j];
        }
        out[i][i].im = 0.0;
        for j in 0..i {
            out[i][j] = out[j][i].conj();
        }
    }
    out
}

/// dρ/dt for the given state, rates and drives.
pub fn rhs(rho: &DensityMatrix3, rates: &SystemRates, drives: &Drives) -> Mat3 {
    rhs_with_hamiltonian(&rho.m, &hamiltonian(drives, 0.0), rates)
}

fn axpy(a: f64, x: &Mat3, y: &Mat3) -> Mat3 {
    let mut out = *y;
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] += a * x[i][j];
        }
    }
    out
}

fn rk4_step(rho: &Mat3, h_op: &Mat3, rates: &SystemRates, h: f64) -> Mat3 {
    let k1 = rhs_with_hamiltonian(rho, h_op, rates);
    let k2 = rhs_with_hamiltonian(&axpy(0.5 * h, &k1, rho), h_op, rates);
    let k3 = rhs_with_hamiltonian(&axpy(0.5 * h, &k2, rho), h_op, rates);
    let k4 = rhs_with_hamiltonian(&axpy(h, &k3, rho), h_op, rates);
    let mut out = *rho;
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] += h / 6.0 * (k1[i][j] + 2.0 * k2[i][j] + 2.0 * k3[i][j] + k4[i][j]);
        }
    }
    out
}

/// Instantaneous rotation by `angle` about cos(φ)σ_x + sin(φ)σ_y on span{|0⟩,|1⟩}.
///
/// Same axis convention as a microwave drive with phase φ.
pub fn apply_ideal_pulse(rho: &DensityMatrix3, axis_phase: f64, angle: f64) -> DensityMatrix3 {
    let c = C64::new((0.5 * angle).cos(), 0.0);
    let s = (0.5 * angle).sin();
    // U = cos(θ/2)·1 − i sin(θ/2)(e^{-iφ}|0⟩⟨1| + e^{iφ}|1⟩⟨0|)
    let u01 = -I * s * C64::from_polar(1.0, -axis_phase);
    let u10 = -I * s * C64::from_polar(1.0, axis_phase);
    let u: Mat3 = [
        [c, u01, ZERO],
        [u10, c, ZERO],
        [ZERO, ZERO, C64::new(1.0, 0.0)],
    ];
    let m = &rho.m;
    let mut tmp = [[ZERO; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            for k in 0..3 {
                tmp[i][j] += u[i][k] * m[k][j];
            }
        }
    }
    let mut out = [[ZERO; 3]; 3];
    for i in 0..3 {
        for j in i..3 {
            for k in 0..3 {
                out[i][j] += tmp[i][k] * u[j][k].conj();
            }
        }
        out[i][i].im = 0.0;
        for j in 0..i {
            out[i][j] = out[j][i].conj();
        }
    }
    DensityMatrix3 { m: out }
}

/// Instantaneous pulse placed at the center of a timeline entry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdealRotation {
    pub phase: f64,
    pub angle: f64,
}

/// One piecewise-constant interval of the drive timeline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimelineEntry {
    pub duration: f64,
    pub drives: Drives,
    pub readout: bool,
    /// When set, the microwave acts as an instantaneous rotation at the entry
    /// midpoint and `drives.mw_rabi` is ignored.
    pub ideal_rotation: Option<IdealRotation>,
}

impl TimelineEntry {
    pub fn new(duration: f64, drives: Drives) -> Self {
        Self {
            duration,
            drives,
            readout: false,
            ideal_rotation: None,
        }
    }

    fn effective_drives(&self) -> Drives {
        let mut d = self.drives;
        if self.ideal_rotation.is_some() {
            d.mw_rabi = 0.0;
        }
        d
    }

    pub fn has_microwave(&self) -> bool {
        self.ideal_rotation.is_some() || self.drives.mw_rabi != 0.0
    }
}

pub type DrivesTimeline = Vec<TimelineEntry>;

/// Total duration of a timeline.
pub fn timeline_duration(timeline: &[TimelineEntry]) -> f64 {
    timeline.iter().map(|e| e.duration).sum()
}

/// Extra microwave detuning (rad/s) as a function of absolute time.
///
/// Implemented by the stochastic noise processes; the integrator never
/// samples randomness itself.
pub trait DetuningOffset {
    fn offset_at(&self, t: f64) -> f64;
    /// ∫ offset dt over [t0, t1].
    fn phase(&self, t0: f64, t1: f64) -> f64;
    /// Times strictly inside (t0, t1) where the offset jumps.
    fn breakpoints(&self, t0: f64, t1: f64) -> Vec<f64>;
}

/// No extra detuning.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoOffset;

impl DetuningOffset for NoOffset {
    fn offset_at(&self, _t: f64) -> f64 {
        0.0
    }
    fn phase(&self, _t0: f64, _t1: f64) -> f64 {
        0.0
    }
    fn breakpoints(&self, _t0: f64, _t1: f64) -> Vec<f64> {
        Vec::new()
    }
}

/// Constant extra detuning.
#[derive(Debug, Clone, Copy)]
pub struct ConstantOffset(pub f64);

impl DetuningOffset for ConstantOffset {
    fn offset_at(&self, _t: f64) -> f64 {
        self.0
    }
    fn phase(&self, t0: f64, t1: f64) -> f64 {
        self.0 * (t1 - t0)
    }
    fn breakpoints(&self, _t0: f64, _t1: f64) -> Vec<f64> {
        Vec::new()
    }
}

/// (e^z − 1)/z, continuous at 0.
fn phi1(z: f64) -> f64 {
    if z.abs() < 1e-12 {
        1.0 + 0.5 * z
    } else {
        z.exp_m1() / z
    }
}

/// Exact propagation with both drives off over `h`, given the accumulated
/// microwave phase ∫(Δ + offset) dt over the interval.
fn free_step(rho: &Mat3, rates: &SystemRates, opt_detuning: f64, mw_phase: f64, h: f64) -> Mat3 {
    let g = rates.gamma;
    let k = rates.kappa_down + rates.kappa_up;
    let tr = rho[0][0].re + rho[1][1].re + rho[2][2].re;
    let p2 = rho[2][2].re;
    let p1 = rho[1][1].re;

    let e_k = (-k * h).exp();
    let p2_new = p2 * (-g * h).exp();
    let p1_new = p1 * e_k
        + rates.kappa_up * tr * h * phi1(-k * h)
        + (0.5 * g - rates.kappa_up) * p2 * e_k * h * phi1((k - g) * h);
    let p0_new = tr - p1_new - p2_new;

    let c01 = rho[0][1] * C64::from_polar((-(0.5 * k + rates.gamma_phi) * h).exp(), mw_phase);
    let c02 = rho[0][2]
        * C64::from_polar((-(0.5 * g + 0.5 * rates.kappa_up) * h).exp(), opt_detuning * h);
    let c12 = rho[1][2]
        * C64::from_polar(
            (-(0.5 * g + 0.5 * rates.kappa_down + rates.gamma_phi) * h).exp(),
            opt_detuning * h - mw_phase,
        );
    [
        [C64::new(p0_new, 0.0), c01, c02],
        [c01.conj(), C64::new(p1_new, 0.0), c12],
        [c02.conj(), c12.conj(), C64::new(p2_new, 0.0)],
    ]
}

/// Callback receiving (t, ρ) after every step.
pub type Observer<'o> = &'o mut dyn FnMut(f64, &DensityMatrix3);

/// Piecewise-constant propagation of a state through a drive timeline.
///
/// Driven intervals use classical fixed-step RK4. With `exact_free` set,
/// intervals with both drives off use the closed-form solution of the same
/// equations, and skip stepping entirely when no observer is attached.
pub struct Evolver<'a> {
    rates: SystemRates,
    dt: f64,
    strict: bool,
    exact_free: bool,
    check_every_step: bool,
    offset: &'a dyn DetuningOffset,
}

impl<'a> Evolver<'a> {
    /// Step size `dt` is capped per interval at the stability limit.
    pub fn new(rates: SystemRates, dt: f64) -> Self {
        Self {
            rates,
            dt,
            strict: false,
            exact_free: true,
            check_every_step: true,
            offset: &NoOffset,
        }
    }

    /// Reject (instead of shrink) a `dt` above the stability limit, and use RK4 everywhere.
    pub fn strict(mut self) -> Self {
        self.strict = true;
        self.exact_free = false;
        self
    }

    pub fn with_offset(mut self, offset: &'a dyn DetuningOffset) -> Self {
        self.offset = offset;
        self
    }

    /// Only validate the state at interval boundaries.
    pub fn check_boundaries_only(mut self) -> Self {
        self.check_every_step = false;
        self
    }

    pub fn rates(&self) -> &SystemRates {
        &self.rates
    }

    fn step_for(&self, drives: &Drives, offset: f64, span: f64) -> Result<(usize, f64)> {
        let limit = stability_limit(&self.rates, drives, offset);
        if self.strict && self.dt > limit * (1.0 + 1e-12) {
            return Err(Error::StepTooLarge {
                dt: self.dt,
                limit,
            });
        }
        let h_max = self.dt.min(limit);
        let n = ((span / h_max) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
        Ok((n, span / n as f64))
    }

    /// Propagate `rho` through `timeline`, whose first entry starts at absolute time `t0`.
    pub fn propagate(
        &self,
        rho: &DensityMatrix3,
        timeline: &[TimelineEntry],
        t0: f64,
        mut observer: Option<Observer<'_>>,
    ) -> Result<DensityMatrix3> {
        let mut state = *rho;
        let mut t = t0;
        for entry in timeline {
            if !(entry.duration > 0.0) {
                return Err(Error::Sequence(format!(
                    "timeline entry duration must be > 0, got {:e}",
                    entry.duration
                )));
            }
            let drives = entry.effective_drives();
            match entry.ideal_rotation {
                Some(rot) => {
                    let half = 0.5 * entry.duration;
                    state = self.evolve_constant(&state, &drives, t, half, &mut observer)?;
                    state = apply_ideal_pulse(&state, rot.phase, rot.angle);
                    state = self.evolve_constant(&state, &drives, t + half, half, &mut observer)?;
                }
                None => {
                    state =
                        self.evolve_constant(&state, &drives, t, entry.duration, &mut observer)?;
                }
            }
            t += entry.duration;
            state.check(t)?;
        }
        Ok(state)
    }

    fn evolve_constant(
        &self,
        rho: &DensityMatrix3,
        drives: &Drives,
        t0: f64,
        duration: f64,
        observer: &mut Option<Observer<'_>>,
    ) -> Result<DensityMatrix3> {
        let t_end = t0 + duration;
        let mut cuts = self.offset.breakpoints(t0, t_end);
        cuts.retain(|&c| c > t0 && c < t_end);
        cuts.push(t_end);
        let mut state = rho.m;
        let mut start = t0;
        for stop in cuts {
            let span = stop - start;
            if span <= 0.0 {
                continue;
            }
            let offset = self.offset.offset_at(0.5 * (start + stop));
            let free = self.exact_free && !drives.is_driven();
            if free && observer.is_none() {
                let phase = drives.mw_detuning * span + self.offset.phase(start, stop);
                state = free_step(&state, &self.rates, drives.opt_detuning, phase, span);
            } else {
                let (n, h) = self.step_for(drives, offset, span)?;
                let h_op = hamiltonian(drives, offset);
                for s in 0..n {
                    let ts = start + s as f64 * h;
                    state = if free {
                        let phase = drives.mw_detuning * h + self.offset.phase(ts, ts + h);
                        free_step(&state, &self.rates, drives.opt_detuning, phase, h)
                    } else {
                        rk4_step(&state, &h_op, &self.rates, h)
                    };
                    let t_now = if s + 1 == n { stop } else { ts + h };
                    let current = DensityMatrix3 { m: state };
                    if self.check_every_step {
                        current.check(t_now)?;
                    }
                    if let Some(obs) = observer.as_mut() {
                        obs(t_now, &current);
                    }
                }
            }
            start = stop;
        }
        Ok(DensityMatrix3 { m: state })
    }
}

/// Sampled trajectory (t, ρ).
#[derive(Debug, Clone, Default)]
pub struct Trajectory {
    pub points: Vec<(f64, DensityMatrix3)>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn last(&self) -> Option<&DensityMatrix3> {
        self.points.last().map(|(_, r)| r)
    }

    /// (t, ρ₂₂) pairs.
    pub fn excited_population(&self) -> Vec<(f64, f64)> {
        self.points.iter().map(|(t, r)| (*t, r.population(2))).collect()
    }

    /// CSV with columns t_s, p0, p1, p2, re01, im01.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("# nv0 trajectory v1\nt_s,p0,p1,p2,re01,im01\n");
        for (t, r) in &self.points {
            let [p0, p1, p2] = r.populations();
            let c = r.element(0, 1);
            out.push_str(&format!("{t:e},{p0:e},{p1:e},{p2:e},{:e},{:e}\n", c.re, c.im));
        }
        out
    }
}

/// Fixed-step RK4 integration through a drive timeline starting at t = 0.
///
/// `dt` must respect the stability limit of every entry; the returned
/// trajectory contains the initial state and every step.
pub fn integrate(
    rho0: &DensityMatrix3,
    rates: &SystemRates,
    timeline: &[TimelineEntry],
    dt: f64,
) -> Result<Trajectory> {
    if !(dt > 0.0) {
        return Err(Error::invalid("dt", "must be > 0"));
    }
    rho0.check(0.0)?;
    let mut traj = Trajectory {
        points: vec![(0.0, *rho0)],
    };
    let evolver = Evolver::new(*rates, dt).strict();
    let mut push = |t: f64, r: &DensityMatrix3| traj.points.push((t, *r));
    evolver.propagate(rho0, timeline, 0.0, Some(&mut push))?;
    Ok(traj)
}

/// Residual ‖dρ/dt‖_max in units of the slowest nonzero rate in the problem.
fn scaled_residual(rho: &Mat3, h_op: &Mat3, rates: &SystemRates, slow: f64) -> f64 {
    let d = rhs_with_hamiltonian(rho, h_op, rates);
    d.iter().flatten().map(|z| z.norm()).fold(0.0, f64::max) / slow
}

fn slowest_rate(rates: &SystemRates, drives: &Drives) -> f64 {
    [
        rates.gamma,
        rates.kappa_down + rates.kappa_up,
        drives.opt_rabi.abs(),
        drives.mw_rabi.abs(),
    ]
    .into_iter()
    .filter(|&r| r > 0.0)
    .fold(f64::INFINITY, f64::min)
}

pub const STEADY_STATE_TOL: f64 = 1e-10;
const STEADY_STATE_MAX_STEPS: usize = 50_000_000;

/// Steady state by long-time integration from the maximally mixed state.
pub fn steady_state_numeric(rates: &SystemRates, drives: &Drives) -> Result<DensityMatrix3> {
    let mixed = DensityMatrix3::diagonal(1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0)?;
    steady_state_numeric_from(&mixed, rates, drives)
}

/// Long-time RK4 integration until ‖dρ/dt‖ ≤ 1e-10 × the slowest rate.
pub fn steady_state_numeric_from(
    rho0: &DensityMatrix3,
    rates: &SystemRates,
    drives: &Drives,
) -> Result<DensityMatrix3> {
    if !(rates.gamma > 0.0 || rates.kappa_down + rates.kappa_up > 0.0) {
        return Err(Error::Degenerate(
            "steady state needs gamma > 0 or kappa > 0".into(),
        ));
    }
    let h = stability_limit(rates, drives, 0.0);
    let h_op = hamiltonian(drives, 0.0);
    let slow = slowest_rate(rates, drives);
    let mut state = rho0.m;
    let mut residual = scaled_residual(&state, &h_op, rates, slow);
    let mut steps = 0usize;
    while residual > STEADY_STATE_TOL {
        if steps >= STEADY_STATE_MAX_STEPS {
            return Err(Error::NonConvergence {
                iterations: steps,
                residual,
            });
        }
        for _ in 0..256 {
            state = rk4_step(&state, &h_op, rates, h);
        }
        steps += 256;
        residual = scaled_residual(&state, &h_op, rates, slow);
    }
    let rho = DensityMatrix3 { m: state };
    rho.check(steps as f64 * h)?;
    Ok(rho)
}

/// Real parameterization (p0, p1, p2, Re ρ01, Im ρ01, Re ρ02, Im ρ02, Re ρ12, Im ρ12).
fn to_real(m: &Mat3) -> SVector<f64, 9> {
    SVector::<f64, 9>::from_column_slice(&[
        m[0][0].re, m[1][1].re, m[2][2].re, m[0][1].re, m[0][1].im, m[0][2].re, m[0][2].im,
        m[1][2].re, m[1][2].im,
    ])
}

fn from_real(x: &SVector<f64, 9>) -> Mat3 {
    let c01 = C64::new(x[3], x[4]);
    let c02 = C64::new(x[5], x[6]);
    let c12 = C64::new(x[7], x[8]);
    [
        [C64::new(x[0], 0.0), c01, c02],
        [c01.conj(), C64::new(x[1], 0.0), c12],
        [c02.conj(), c12.conj(), C64::new(x[2], 0.0)],
    ]
}

/// Real 9×9 generator matrix of the dynamics.
pub fn liouvillian(rates: &SystemRates, drives: &Drives) -> SMatrix<f64, 9, 9> {
    let h_op = hamiltonian(drives, 0.0);
    let mut l = SMatrix::<f64, 9, 9>::zeros();
    for j in 0..9 {
        let mut e = SVector::<f64, 9>::zeros();
        e[j] = 1.0;
        let col = to_real(&rhs_with_hamiltonian(&from_real(&e), &h_op, rates));
        l.set_column(j, &col);
    }
    l
}

/// Steady state from the null space of the generator (trace row replaces the first equation).
pub fn steady_state_linear(rates: &SystemRates, drives: &Drives) -> Result<DensityMatrix3> {
    let mut a = liouvillian(rates, drives);
    let mut b = SVector::<f64, 9>::zeros();
    for j in 0..9 {
        a[(0, j)] = if j < 3 { 1.0 } else { 0.0 };
    }
    b[0] = 1.0;
    let scale = a.abs().max();
    let x = (a / scale)
        .lu()
        .solve(&(b / scale))
        .ok_or_else(|| Error::Degenerate("steady state is not unique".into()))?;
    DensityMatrix3::from_matrix(from_real(&x))
}

/// Closed-form steady populations of the optically pumped system at T = 0.
///
/// Ω = 0 returns the dark ground state; κ = 0 has no unique answer.
pub fn steady_state_analytic(gamma: f64, kappa: f64, omega_opt: f64) -> Result<(f64, f64, f64)> {
    if !(gamma > 0.0) {
        return Err(Error::Degenerate("gamma must be > 0".into()));
    }
    if omega_opt == 0.0 {
        return Ok((1.0, 0.0, 0.0));
    }
    if !(kappa > 0.0) {
        return Err(Error::Degenerate(
            "kappa = 0 pumps all population into |1>; no unique steady state".into(),
        ));
    }
    let r0 = gamma * gamma / (omega_opt * omega_opt) + 1.0;
    let r1 = gamma / (2.0 * kappa);
    let p2 = 1.0 / (r0 + r1 + 1.0);
    let p0 = r0 * p2;
    let p1 = r1 * p2;
    // normalize exactly
    let s = p0 + p1 + p2;
    Ok((p0 / s, p1 / s, p2 / s))
}

impl Add for DensityMatrix3 {
    type Output = Mat3;
    fn add(self, rhs: Self) -> Mat3 {
        let mut out = self.m;
        for i in 0..3 {
            for j in 0..3 {
                out[i][j] += rhs.m[i][j];
            }
        }
        out
    }
}

impl Mul<f64> for DensityMatrix3 {
    type Output = Mat3;
    fn mul(self, s: f64) -> Mat3 {
        let mut out = self.m;
        for row in out.iter_mut() {
            for z in row.iter_mut() {
                *z *= s;
            }
        }
        out
    }
}

/// Weighted average of states (weights must sum to one).
pub fn mixture<'r>(states: impl IntoIterator<Item = (&'r DensityMatrix3, f64)>) -> Result<DensityMatrix3> {
    let mut acc = [[ZERO; 3]; 3];
    for (rho, w) in states {
        for i in 0..3 {
            for j in 0..3 {
                acc[i][j] += w * rho.m[i][j];
            }
        }
    }
    DensityMatrix3::from_matrix(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;
    use crate::physics::angular;
    use approx::assert_relative_eq;

    fn nominal_rates() -> SystemRates {
        SystemRates::new(angular(7.2e6), angular(0.034e6), 0.0, 0.0).unwrap()
    }

    fn max_abs(m: &Mat3) -> f64 {
        m.iter().flatten().map(|z| z.norm()).fold(0.0, f64::max)
    }

    #[test]
    fn dark_ground_state_is_stationary() {
        let d = rhs(&DensityMatrix3::ground(), &nominal_rates(), &Drives::dark());
        assert_eq!(max_abs(&d), 0.0);
    }

    #[test]
    fn excited_state_decays_evenly() {
        let r = nominal_rates();
        let d = rhs(&DensityMatrix3::basis(2), &r, &Drives::dark());
        assert_relative_eq!(d[0][0].re, r.gamma / 2.0, max_relative = 1e-15);
        assert_relative_eq!(d[1][1].re, r.gamma / 2.0, max_relative = 1e-15);
        assert_relative_eq!(d[2][2].re, -r.gamma, max_relative = 1e-15);
    }

    #[test]
    fn optical_coherence_matches_bloch_equations() {
        // dρ00/dt, dρ22/dt from the optical terms and decay of ρ02 at γ/2.
        let r = nominal_rates();
        let omega = angular(8e6);
        let mut m = [[ZERO; 3]; 3];
        m[0][0] = C64::new(0.6, 0.0);
        m[1][1] = C64::new(0.3, 0.0);
        m[2][2] = C64::new(0.1, 0.0);
        m[0][2] = C64::new(0.05, 0.1);
        m[2][0] = m[0][2].conj();
        let rho = DensityMatrix3::from_matrix(m).unwrap();
        let d = rhs(&rho, &r, &Drives::optical(omega, 0.0));
        let (r00, r11, r22, r02, r20) = (m[0][0], m[1][1], m[2][2], m[0][2], m[2][0]);
        let e00 = r.gamma / 2.0 * r22 + r.kappa_down * r11 + I * omega / 2.0 * (r02 - r20);
        let e11 = -r.kappa_down * r11 + r.gamma / 2.0 * r22;
        let e22 = -r.gamma * r22 + I * omega / 2.0 * (r20 - r02);
        let e02 = -r.gamma / 2.0 * r02 + I * omega / 2.0 * (r00 - r22);
        for (got, want) in [(d[0][0], e00), (d[1][1], e11), (d[2][2], e22), (d[0][2], e02)] {
            assert!((got - want).norm() <= 1e-9 * want.norm().max(1.0), "{got} vs {want}");
        }
    }

    #[test]
    fn ideal_pulse_identities() {
        let rho = DensityMatrix3::diagonal(0.2, 0.7, 0.1).unwrap();
        let full = apply_ideal_pulse(&rho, 0.3, 2.0 * PI);
        for i in 0..3 {
            for j in 0..3 {
                assert!((full[(i, j)] - rho[(i, j)]).norm() < 1e-12);
            }
        }
        let twice = apply_ideal_pulse(&apply_ideal_pulse(&rho, 0.0, PI), 0.0, PI);
        for i in 0..3 {
            for j in 0..3 {
                assert!((twice[(i, j)] - rho[(i, j)]).norm() < 1e-12);
            }
        }
        let flipped = apply_ideal_pulse(&DensityMatrix3::basis(1), 0.0, PI);
        assert!((flipped.population(0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn ideal_sequence_matches_fast_finite_pulses() {
        // π/2_x · π_x · π/2_x on |1⟩ against finite pulses with Ω ≫ γ.
        let rates = nominal_rates();
        let ideal = [PI / 2.0, PI, PI / 2.0]
            .iter()
            .fold(DensityMatrix3::basis(1), |r, &a| apply_ideal_pulse(&r, 0.0, a));
        let omega = angular(5e9);
        let timeline: Vec<_> = [PI / 2.0, PI, PI / 2.0]
            .iter()
            .map(|&a| TimelineEntry::new(a / omega, Drives::microwave(omega, 0.0, 0.0)))
            .collect();
        let dt = stability_limit(&rates, &timeline[0].drives, 0.0);
        let traj = integrate(&DensityMatrix3::basis(1), &rates, &timeline, dt).unwrap();
        let fin = traj.last().unwrap();
        for k in 0..3 {
            assert!((fin.population(k) - ideal.population(k)).abs() < 1e-3);
        }
    }

    #[test]
    fn resonant_pi_pulse_flips() {
        let rates = SystemRates::default();
        let omega = angular(27e6);
        let timeline = vec![TimelineEntry::new(PI / omega, Drives::microwave(omega, 0.0, 0.0))];
        let dt = stability_limit(&rates, &timeline[0].drives, 0.0);
        let traj = integrate(&DensityMatrix3::basis(1), &rates, &timeline, dt).unwrap();
        assert!(traj.last().unwrap().population(0) >= 0.9999);
    }

    #[test]
    fn optical_pumping_empties_ground_state() {
        let rates = nominal_rates();
        let timeline = vec![TimelineEntry::new(3e-6, Drives::optical(angular(8e6), 0.0))];
        let dt = stability_limit(&rates, &timeline[0].drives, 0.0);
        let traj = integrate(&DensityMatrix3::ground(), &rates, &timeline, dt).unwrap();
        assert!(traj.last().unwrap().population(0) <= 0.03);
    }

    #[test]
    fn free_precession_phase_advances_with_detuning() {
        let rates = SystemRates::default();
        let delta = angular(22e6);
        let start = apply_ideal_pulse(&DensityMatrix3::basis(1), 0.0, PI / 2.0);
        let t = 100e-9;
        let timeline = vec![TimelineEntry::new(t, Drives::microwave(0.0, delta, 0.0))];
        let dt = stability_limit(&rates, &timeline[0].drives, 0.0);
        let traj = integrate(&start, &rates, &timeline, dt).unwrap();
        let before = start.element(0, 1).arg();
        let after = traj.last().unwrap().element(0, 1).arg();
        let advance = (after - before - delta * t).rem_euclid(2.0 * PI);
        let err = advance.min(2.0 * PI - advance);
        assert!(err < 1e-6, "phase error {err:e}");
    }

    #[test]
    fn step_too_large_is_rejected() {
        let rates = nominal_rates();
        let timeline = vec![TimelineEntry::new(1e-6, Drives::optical(angular(8e6), 0.0))];
        let limit = stability_limit(&rates, &timeline[0].drives, 0.0);
        let err = integrate(&DensityMatrix3::ground(), &rates, &timeline, 2.0 * limit);
        assert!(matches!(err, Err(Error::StepTooLarge { .. })));
    }

    #[test]
    fn exact_free_step_matches_rk4() {
        let rates = SystemRates::new(angular(7.2e6), 3e5, 1e5, 2e6).unwrap();
        let mut m = [[ZERO; 3]; 3];
        m[0][0] = C64::new(0.4, 0.0);
        m[1][1] = C64::new(0.4, 0.0);
        m[2][2] = C64::new(0.2, 0.0);
        m[0][1] = C64::new(0.2, -0.1);
        m[0][2] = C64::new(0.05, 0.08);
        m[1][2] = C64::new(-0.03, 0.04);
        for i in 0..3 {
            for j in 0..i {
                m[i][j] = m[j][i].conj();
            }
        }
        let rho = DensityMatrix3::from_matrix(m).unwrap();
        let drives = Drives {
            opt_detuning: angular(3e6),
            mw_detuning: angular(11e6),
            ..Drives::default()
        };
        let timeline = vec![TimelineEntry::new(400e-9, drives)];
        let dt = stability_limit(&rates, &drives, 0.0) / 8.0;
        let rk = integrate(&rho, &rates, &timeline, dt).unwrap();
        let exact = Evolver::new(rates, dt).propagate(&rho, &timeline, 0.0, None).unwrap();
        let rk = rk.last().unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert!((rk[(i, j)] - exact[(i, j)]).norm() < 1e-10, "({i},{j})");
            }
        }
    }

    #[test]
    fn steady_state_reproduces_pumped_populations() {
        let r = nominal_rates();
        let drives = Drives::optical(angular(8e6), 0.0);
        let numeric = steady_state_numeric(&r, &drives).unwrap();
        let [p0, p1, p2] = numeric.populations();
        assert!((p0 - 0.017).abs() <= 0.002);
        assert!((p1 - 0.97).abs() <= 0.002 + 0.005);
        assert!((p2 - 0.0093).abs() <= 0.002);
        let (a0, a1, a2) = steady_state_analytic(r.gamma, r.kappa_down, drives.opt_rabi).unwrap();
        assert!((p0 - a0).abs() < 1e-6 && (p1 - a1).abs() < 1e-6 && (p2 - a2).abs() < 1e-6);
    }

    #[test]
    fn analytic_examples() {
        let (p0, p1, p2) =
            steady_state_analytic(angular(7.2e6), angular(0.034e6), angular(8e6)).unwrap();
        assert!((p0 - 0.0167).abs() < 5e-4);
        assert!((p1 - 0.974).abs() < 5e-4);
        assert!((p2 - 0.0092).abs() < 5e-4);
        let (q0, _, q2) = steady_state_analytic(2.0, 0.1, 2.0).unwrap();
        assert_relative_eq!(q0, 2.0 * q2, max_relative = 1e-14);
        assert_eq!(steady_state_analytic(1.0, 1.0, 0.0).unwrap(), (1.0, 0.0, 0.0));
        assert!(steady_state_analytic(1.0, 0.0, 1.0).is_err());
        assert!(steady_state_analytic(0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn dark_zero_temperature_steady_state_is_ground() {
        let rho = steady_state_numeric(&nominal_rates(), &Drives::dark()).unwrap();
        assert!((rho.population(0) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn steady_state_independent_of_start() {
        let r = SystemRates::new(angular(7.2e6), angular(0.034e6), angular(0.004e6), 1e6).unwrap();
        let drives = Drives::optical(angular(8e6), angular(1e6));
        let a = steady_state_numeric_from(&DensityMatrix3::basis(0), &r, &drives).unwrap();
        let b = steady_state_numeric_from(&DensityMatrix3::basis(1), &r, &drives).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert!((a[(i, j)] - b[(i, j)]).norm() < 1e-8);
            }
        }
        let lin = steady_state_linear(&r, &drives).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert!((a[(i, j)] - lin[(i, j)]).norm() < 1e-8);
            }
        }
    }

    #[test]
    fn thermal_steady_state_obeys_detailed_balance() {
        let r = SystemRates::new(angular(7.2e6), 2e5, 5e4, 0.0).unwrap();
        let rho = steady_state_numeric(&r, &Drives::dark()).unwrap();
        let ratio = rho.population(1) / rho.population(0);
        assert!((ratio - 0.25).abs() < 1e-6);
    }

    #[test]
    fn degenerate_steady_state_rejected() {
        let r = SystemRates::default();
        assert!(steady_state_numeric(&r, &Drives::dark()).is_err());
    }

    #[test]
    fn eigenvalues_of_known_matrix() {
        // [[2, i, 0], [-i, 2, 0], [0, 0, 1]] has eigenvalues 1, 1, 3
        let mut m = [[ZERO; 3]; 3];
        m[0][0] = C64::new(2.0, 0.0);
        m[1][1] = C64::new(2.0, 0.0);
        m[2][2] = C64::new(1.0, 0.0);
        m[0][1] = I;
        m[1][0] = -I;
        let e = hermitian_eigenvalues(&m);
        assert!((e[0] - 1.0).abs() < 1e-12 && (e[1] - 1.0).abs() < 1e-12 && (e[2] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn invalid_states_rejected() {
        assert!(DensityMatrix3::diagonal(0.5, 0.6, 0.0).is_err());
        assert!(DensityMatrix3::diagonal(1.2, -0.2, 0.0).is_err());
        let mut m = [[ZERO; 3]; 3];
        m[0][0] = C64::new(0.5, 0.0);
        m[1][1] = C64::new(0.5, 0.0);
        m[0][1] = C64::new(0.6, 0.0);
        m[1][0] = C64::new(0.6, 0.0);
        assert!(DensityMatrix3::from_matrix(m).is_err());
    }

    #[test]
    fn trajectory_csv_header() {
        let rates = nominal_rates();
        let timeline = vec![TimelineEntry::new(10e-9, Drives::optical(angular(8e6), 0.0))];
        let dt = stability_limit(&rates, &timeline[0].drives, 0.0);
        let csv = integrate(&DensityMatrix3::ground(), &rates, &timeline, dt).unwrap().to_csv();
        let mut lines = csv.lines();
        assert!(lines.next().unwrap().starts_with('#'));
        assert_eq!(lines.next().unwrap(), "t_s,p0,p1,p2,re01,im01");
    }
}

#[cfg(test)]
mod proptests {
    use super::*;
    use proptest::prelude::*;

    fn random_state() -> impl Strategy<Value = DensityMatrix3> {
        // ρ = A A† / tr(A A†)
        proptest::collection::vec(-1.0..1.0f64, 18).prop_map(|v| {
            let a: Vec<C64> = v.chunks(2).map(|c| C64::new(c[0], c[1])).collect();
            let mut m = [[ZERO; 3]; 3];
            for i in 0..3 {
                for j in 0..3 {
                    for k in 0..3 {
                        m[i][j] += a[3 * i + k] * a[3 * j + k].conj();
                    }
                }
            }
            let tr = (m[0][0] + m[1][1] + m[2][2]).re;
            for row in m.iter_mut() {
                for z in row.iter_mut() {
                    *z /= tr;
                }
            }
            DensityMatrix3::from_matrix_unchecked(m)
        })
    }

    fn random_rates() -> impl Strategy<Value = SystemRates> {
        (0.0..5e7f64, 0.0..1e6f64, 0.0..1e6f64, 0.0..1e7f64)
            .prop_map(|(g, kd, ku, gp)| SystemRates::new(g, kd, ku, gp).unwrap())
    }

    fn random_drives() -> impl Strategy<Value = Drives> {
        (0.0..1e8f64, -1e8..1e8f64, 0.0..2e8f64, -2e8..2e8f64, -3.2..3.2f64).prop_map(
            |(or, od, mr, md, ph)| Drives {
                opt_rabi: or,
                opt_detuning: od,
                mw_rabi: mr,
                mw_detuning: md,
                mw_phase: ph,
            },
        )
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn generator_is_traceless(rho in random_state(), rates in random_rates(), drives in random_drives()) {
            let d = rhs(&rho, &rates, &drives);
            let tr = d[0][0] + d[1][1] + d[2][2];
            let scale = rates.fastest().max(drives.fastest(0.0)).max(1.0);
            prop_assert!(tr.norm() <= 1e-12 * scale);
        }

        #[test]
        fn ideal_pulse_preserves_spectrum(rho in random_state(), phase in -3.2..3.2f64, angle in 0.0..6.3f64) {
            let out = apply_ideal_pulse(&rho, phase, angle);
            let (a, b) = (rho.eigenvalues(), out.eigenvalues());
            for k in 0..3 {
                prop_assert!((a[k] - b[k]).abs() < 1e-12);
            }
            prop_assert!((out.trace() - rho.trace()).norm() < 1e-14);
            prop_assert!((out.population(2) - rho.population(2)).abs() < 1e-15);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn integration_keeps_invariants(rho in random_state(), rates in random_rates(), drives in random_drives()) {
            let h = stability_limit(&rates, &drives, 0.0);
            let timeline = vec![TimelineEntry::new(100.0 * h, drives)];
            let traj = integrate(&rho, &rates, &timeline, h);
            prop_assert!(traj.is_ok(), "{:?}", traj.err());
            for (t, r) in &traj.unwrap().points {
                prop_assert!(r.check(*t).is_ok());
            }
        }
    }
}
