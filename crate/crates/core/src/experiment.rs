//! Running pulse sequences on the three-level model: ensemble averaging over
//! detuning noise, binned emission, photon counts and B/A readout.
//!
//! The master equation is linear, so the ensemble-averaged state is obtained by
//! averaging the state at the end of the microwave section over noise
//! realizations. Everything before the first microwave entry and after the last
//! one is evolved once. Detuning noise only acts on the 0–1 and 1–2
//! coherences, which never feed back into the populations without a microwave
//! drive, so the split is exact for the recorded emission.

use rayon::prelude::*;

use crate::bloch::{mixture, DensityMatrix3, Evolver, Observer, SystemRates, TimelineEntry};
use crate::detection::{
    expected_counts, synthesize_counts, BinAccumulator, CountTrace, DetectorModel,
    PopulationTrace, Ratio, ReadoutChain,
};
use crate::error::{Error, Result};
use crate::noise::{sample_detuning, NoiseModel};
use crate::physics::{
    angular, calibrate_coupling_a, ground_state_splitting, orbital_relaxation_rate,
    phonon_updown_rates, GroundStateParams, PhononBath,
};
use crate::sequence::{expand_to_drives, PulseSequence};

/// Samples per bin used when the emission in a dark stretch is known in closed form.
const ANALYTIC_SAMPLES_PER_BIN: f64 = 4.0;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSetup {
    /// Markovian dephasing from `noise` is added to `rates.gamma_phi`.
    pub rates: SystemRates,
    pub initial: DensityMatrix3,
    pub noise: NoiseModel,
    /// Noise realizations averaged per sequence; ignored for deterministic noise.
    pub realizations: usize,
    /// Upper bound on the integration step, s.
    pub dt: f64,
    pub detector: DetectorModel,
}

impl ExperimentSetup {
    pub fn new(rates: SystemRates, initial: DensityMatrix3) -> Self {
        Self {
            rates,
            initial,
            noise: NoiseModel::default(),
            realizations: 1,
            dt: f64::INFINITY,
            detector: DetectorModel::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.noise.validate()?;
        self.detector.validate()?;
        if self.realizations == 0 {
            return Err(Error::invalid("realizations", "must be >= 1"));
        }
        if !(self.dt > 0.0) {
            return Err(Error::invalid("dt", "must be > 0"));
        }
        Ok(())
    }

    pub fn effective_rates(&self) -> Result<SystemRates> {
        let r = self.rates;
        SystemRates::new(
            r.gamma,
            r.kappa_down,
            r.kappa_up,
            r.gamma_phi + self.noise.gamma_phi(),
        )
    }

    fn realization_count(&self) -> usize {
        if self.noise.is_stochastic() {
            self.realizations
        } else {
            1
        }
    }
}

/// Level structure and relaxation of the defect. Frequencies in Hz.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrbitalModel {
    pub lambda: f64,
    pub eps_perp: f64,
    /// Radiative linewidth γ/2π.
    pub gamma: f64,
    /// Explicit phonon coupling A; calibrated from (t1_ref, t_ref) when absent.
    pub coupling_a: Option<f64>,
    pub t1_ref: f64,
    pub t_ref: f64,
}

impl Default for OrbitalModel {
    fn default() -> Self {
        Self {
            lambda: 4.9e9,
            eps_perp: 4.3e9,
            gamma: 7.2e6,
            coupling_a: None,
            t1_ref: 4.7e-6,
            t_ref: 0.012,
        }
    }
}

impl OrbitalModel {
    /// Δ_gs in rad/s.
    pub fn delta_gs(&self) -> Result<f64> {
        let p = GroundStateParams::new(self.lambda, self.eps_perp)?;
        let d = angular(ground_state_splitting(&p));
        if !(d > 0.0) {
            return Err(Error::invalid("lambda", "splitting must be > 0"));
        }
        Ok(d)
    }

    pub fn coupling(&self) -> Result<f64> {
        match self.coupling_a {
            Some(a) if a > 0.0 && a.is_finite() => Ok(a),
            Some(_) => Err(Error::invalid("coupling_a", "must be finite and > 0")),
            None => calibrate_coupling_a(self.t1_ref, self.t_ref, self.delta_gs()?),
        }
    }

    pub fn bath(&self, temperature: f64) -> Result<PhononBath> {
        PhononBath::new(self.coupling()?, self.delta_gs()?, temperature)
    }

    pub fn t1(&self, temperature: f64) -> Result<f64> {
        Ok(1.0 / orbital_relaxation_rate(&self.bath(temperature)?))
    }

    /// Rates at `temperature` with extra pure dephasing `gamma_phi` (rad/s).
    pub fn rates(&self, temperature: f64, gamma_phi: f64) -> Result<SystemRates> {
        if !(self.gamma >= 0.0) {
            return Err(Error::invalid("gamma", "must be >= 0"));
        }
        let (down, up) = phonon_updown_rates(&self.bath(temperature)?);
        SystemRates::new(angular(self.gamma), down, up, gamma_phi)
    }
}

/// Thermal mixture of the two ground levels for the given phonon rates.
pub fn thermal_state(rates: &SystemRates) -> Result<DensityMatrix3> {
    let total = rates.kappa_down + rates.kappa_up;
    if total == 0.0 {
        return Ok(DensityMatrix3::ground());
    }
    let p1 = rates.kappa_up / total;
    DensityMatrix3::diagonal(1.0 - p1, p1, 0.0)
}

/// Ensemble-averaged outcome of one sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedPoint {
    pub label: String,
    pub population: PopulationTrace,
    pub final_state: DensityMatrix3,
    /// Readout windows in time order.
    pub windows: Vec<(f64, f64)>,
}

impl SimulatedPoint {
    /// Mean counts with Poisson standard errors.
    pub fn expected_trace(&self, det: &DetectorModel, gamma: f64) -> Result<CountTrace> {
        let mean = expected_counts(&self.population, det, gamma);
        let sigma = mean.iter().map(|m| m.max(0.0).sqrt()).collect();
        CountTrace::new(det.bin_width, self.population.t.clone(), mean, sigma)
    }

    pub fn sample_trace(&self, det: &DetectorModel, gamma: f64, seed: u64, stream: u64) -> Result<CountTrace> {
        synthesize_counts(&self.population, det, gamma, seed, stream)
    }

    /// First and last readout windows.
    pub fn ab_windows(&self) -> Result<((f64, f64), (f64, f64))> {
        match (self.windows.first(), self.windows.last()) {
            (Some(&a), Some(&b)) if self.windows.len() >= 2 => Ok((a, b)),
            _ => Err(Error::Sequence(format!(
                "{}: B/A needs two readout windows, found {}",
                self.label,
                self.windows.len()
            ))),
        }
    }

    pub fn ratio(&self, trace: &CountTrace, chain: &ReadoutChain) -> Result<Ratio> {
        let (a, b) = self.ab_windows()?;
        chain.ratio(trace, a, b)
    }
}

fn microwave_span(timeline: &[TimelineEntry]) -> Option<(usize, usize)> {
    let first = timeline.iter().position(|e| e.has_microwave())?;
    let last = timeline.iter().rposition(|e| e.has_microwave())?;
    Some((first, last + 1))
}

/// Evolve `seq` from the setup's initial state. `point_index` selects the
/// noise realizations: realization r uses shot index `point_index·R + r`.
pub fn simulate_point(setup: &ExperimentSetup, seq: &PulseSequence, point_index: u64) -> Result<SimulatedPoint> {
    setup.validate()?;
    let timeline = expand_to_drives(seq)?;
    let rates = setup.effective_rates()?;
    let total = seq.total_duration();
    let mut acc = BinAccumulator::new(0.0, total, setup.detector.bin_width);

    let (mid_start, mid_end) = microwave_span(&timeline).unwrap_or((timeline.len(), timeline.len()));
    let t_mid0: f64 = timeline[..mid_start].iter().map(|e| e.duration).sum();
    let t_mid1: f64 = t_mid0 + timeline[mid_start..mid_end].iter().map(|e| e.duration).sum::<f64>();

    let plain = Evolver::new(rates, setup.dt);
    acc.push(0.0, setup.initial.population(2));
    let mut rho = plain.propagate(
        &setup.initial,
        &timeline[..mid_start],
        0.0,
        Some(&mut |t, r: &DensityMatrix3| acc.push(t, r.population(2))),
    )?;

    if mid_start < mid_end {
        let middle = &timeline[mid_start..mid_end];
        let optical = middle.iter().any(|e| e.drives.opt_rabi != 0.0);
        let n = setup.realization_count();
        let weight = 1.0 / n as f64;
        let start = rho;
        let run = |r: usize, observer: Option<Observer<'_>>| -> Result<DensityMatrix3> {
            if setup.noise.is_stochastic() {
                let path = sample_detuning(&setup.noise, point_index * n as u64 + r as u64, total)?;
                Evolver::new(rates, setup.dt)
                    .with_offset(&path)
                    .check_boundaries_only()
                    .propagate(&start, middle, t_mid0, observer)
            } else {
                Evolver::new(rates, setup.dt).propagate(&start, middle, t_mid0, observer)
            }
        };
        let finals: Vec<DensityMatrix3> = if optical {
            acc.set_weight(weight);
            let mut out = Vec::with_capacity(n);
            for r in 0..n {
                acc.restart();
                acc.push(t_mid0, start.population(2));
                out.push(run(r, Some(&mut |t, s: &DensityMatrix3| acc.push(t, s.population(2))))?);
            }
            acc.set_weight(1.0);
            out
        } else {
            let p2 = start.population(2);
            let g = rates.gamma;
            let mut h = setup.detector.bin_width / ANALYTIC_SAMPLES_PER_BIN;
            if g > 0.0 {
                h = h.min(0.1 / g);
            }
            let steps = ((t_mid1 - t_mid0) / h).ceil().max(1.0) as usize;
            let h = (t_mid1 - t_mid0) / steps as f64;
            for k in 1..=steps {
                acc.push(t_mid0 + k as f64 * h, p2 * (-g * k as f64 * h).exp());
            }
            (0..n).into_par_iter().map(|r| run(r, None)).collect::<Result<_>>()?
        };
        rho = mixture(finals.iter().map(|f| (f, weight)))?;
        acc.restart();
        acc.push(t_mid1, rho.population(2));
    }

    rho = plain.propagate(
        &rho,
        &timeline[mid_end..],
        t_mid1,
        Some(&mut |t, r: &DensityMatrix3| acc.push(t, r.population(2))),
    )?;

    Ok(SimulatedPoint {
        label: seq.label.clone(),
        population: acc.finish(),
        final_state: rho,
        windows: seq.readout_windows(),
    })
}

/// Every sequence of a sweep, evaluated concurrently; results keep input order.
pub fn simulate_sweep(setup: &ExperimentSetup, seqs: &[PulseSequence]) -> Result<Vec<SimulatedPoint>> {
    seqs.par_iter()
        .enumerate()
        .map(|(i, s)| simulate_point(setup, s, i as u64))
        .collect()
}

/// B/A for every point. With `seed = None` the noise-free expected counts are
/// used; otherwise point `i` draws counts from stream `i`.
pub fn readout_ratios(
    points: &[SimulatedPoint],
    det: &DetectorModel,
    gamma: f64,
    seed: Option<u64>,
) -> Result<Vec<Ratio>> {
    let chain = ReadoutChain {
        dark_rate: det.dark_rate,
    };
    points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let trace = match seed {
                Some(s) => p.sample_trace(det, gamma, s, i as u64)?,
                None => p.expected_trace(det, gamma)?,
            };
            p.ratio(&trace, &chain)
        })
        .collect()
}
