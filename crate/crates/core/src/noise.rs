//! Stochastic detuning processes for the 0–1 transition.
//!
//! Randomness is counter-based: every draw comes from a ChaCha8 stream keyed
//! by `(seed, domain)` and selected by `stream` (for example a shot index), so
//! results do not depend on which thread or in which order shots run.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::bloch::DetuningOffset;
use crate::error::{Error, Result};

/// Domain tag for detuning realizations.
pub const DOMAIN_DETUNING: u64 = 0x6465_7475_6e65;
/// Domain tag for photon-count sampling.
pub const DOMAIN_COUNTS: u64 = 0x636f_756e_7473;

/// OU grid points per correlation time.
pub const OU_STEPS_PER_TAU: f64 = 50.0;
const MAX_PATH_POINTS: usize = 5_000_000;

/// ChaCha8 generator for `(seed, domain, stream)`.
///
/// The 256-bit key is `seed` (LE) ‖ `domain` (LE) ‖ zeros, and `stream`
/// selects the ChaCha stream.
pub fn rng_for(seed: u64, domain: u64, stream: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&domain.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(stream);
    rng
}

/// Dephasing and spectral-diffusion parameters. Magnitudes are ordinary
/// frequencies (Hz), times in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseModel {
    /// γ_φ/2π of the Markovian channel.
    pub markovian_dephasing: f64,
    /// Standard deviation of the per-shot constant detuning.
    pub quasi_static_sigma: f64,
    pub ou_tau_c: f64,
    /// Stationary standard deviation of the Ornstein-Uhlenbeck detuning.
    pub ou_sigma: f64,
    /// Hops draw a new level uniformly from ±hop_magnitude.
    pub hop_magnitude: f64,
    pub hop_interval_mean: f64,
    pub seed: u64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            markovian_dephasing: 0.0,
            quasi_static_sigma: 0.0,
            ou_tau_c: 10e-6,
            ou_sigma: 0.0,
            hop_magnitude: 0.0,
            hop_interval_mean: 1.0,
            seed: 0,
        }
    }
}

impl NoiseModel {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("markovian_dephasing", self.markovian_dephasing),
            ("quasi_static_sigma", self.quasi_static_sigma),
            ("ou_sigma", self.ou_sigma),
            ("hop_magnitude", self.hop_magnitude),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::invalid(name, "must be finite and >= 0"));
            }
        }
        if self.ou_sigma > 0.0 && !(self.ou_tau_c > 0.0) {
            return Err(Error::invalid("ou_tau_c", "must be > 0 when ou_sigma > 0"));
        }
        if self.hop_magnitude > 0.0 && !(self.hop_interval_mean > 0.0) {
            return Err(Error::invalid(
                "hop_interval_mean",
                "must be > 0 when hop_magnitude > 0",
            ));
        }
        Ok(())
    }

    /// Markovian dephasing rate in rad/s.
    pub fn gamma_phi(&self) -> f64 {
        2.0 * PI * self.markovian_dephasing
    }

    /// Whether any component varies from shot to shot.
    pub fn is_stochastic(&self) -> bool {
        self.quasi_static_sigma > 0.0 || self.ou_sigma > 0.0 || self.hop_magnitude > 0.0
    }
}

/// Piecewise-constant detuning offset (rad/s) on [0, duration].
///
/// Level `values[k]` holds on [knots[k], knots[k+1]); the last level extends
/// past the end.
#[derive(Debug, Clone, PartialEq)]
pub struct DetuningPath {
    knots: Vec<f64>,
    values: Vec<f64>,
    cumulative: Vec<f64>,
}

impl DetuningPath {
    pub fn constant(value: f64) -> Self {
        Self::from_levels(vec![0.0], vec![value])
    }

    fn from_levels(knots: Vec<f64>, values: Vec<f64>) -> Self {
        let mut cumulative = Vec::with_capacity(knots.len());
        let mut acc = 0.0;
        cumulative.push(0.0);
        for k in 1..knots.len() {
            acc += values[k - 1] * (knots[k] - knots[k - 1]);
            cumulative.push(acc);
        }
        Self {
            knots,
            values,
            cumulative,
        }
    }

    fn level_index(&self, t: f64) -> usize {
        self.knots.partition_point(|&k| k <= t).saturating_sub(1)
    }

    fn integral_to(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return self.values[0] * t;
        }
        let k = self.level_index(t);
        self.cumulative[k] + self.values[k] * (t - self.knots[k])
    }

    /// Sampled offset in Hz (not rad/s) at time t.
    pub fn offset_hz(&self, t: f64) -> f64 {
        self.offset_at(t) / (2.0 * PI)
    }

    pub fn levels(&self) -> (&[f64], &[f64]) {
        (&self.knots, &self.values)
    }
}

impl DetuningOffset for DetuningPath {
    fn offset_at(&self, t: f64) -> f64 {
        self.values[self.level_index(t)]
    }

    fn phase(&self, t0: f64, t1: f64) -> f64 {
        self.integral_to(t1) - self.integral_to(t0)
    }

    fn breakpoints(&self, t0: f64, t1: f64) -> Vec<f64> {
        let lo = self.knots.partition_point(|&k| k <= t0);
        let hi = self.knots.partition_point(|&k| k < t1);
        self.knots[lo..hi].to_vec()
    }
}

/// One realization of the detuning process for shot `shot_index` over [0, duration].
///
/// The quasi-static part is one Gaussian draw per shot. The OU part is the
/// exact discretization on a grid of τ_c/50 started from its stationary
/// distribution. Hops occur at exponential intervals.
pub fn sample_detuning(noise: &NoiseModel, shot_index: u64, duration: f64) -> Result<DetuningPath> {
    noise.validate()?;
    if !(duration >= 0.0) || !duration.is_finite() {
        return Err(Error::invalid("duration", "must be finite and >= 0"));
    }
    let mut rng = rng_for(noise.seed, DOMAIN_DETUNING, shot_index);
    let std = Normal::new(0.0, 1.0).expect("unit normal");
    let qs = 2.0 * PI * noise.quasi_static_sigma * std.sample(&mut rng);

    let mut knots = vec![0.0];
    let mut values = vec![qs];

    if noise.ou_sigma > 0.0 {
        let h = noise.ou_tau_c / OU_STEPS_PER_TAU;
        let n = (duration / h).ceil() as usize + 1;
        if n > MAX_PATH_POINTS {
            return Err(Error::invalid(
                "ou_tau_c",
                format!("path needs {n} grid points; correlation time too short for duration"),
            ));
        }
        let sigma = 2.0 * PI * noise.ou_sigma;
        let decay = (-h / noise.ou_tau_c).exp();
        let kick = sigma * (-(-2.0 * h / noise.ou_tau_c).exp_m1()).sqrt();
        let mut x = sigma * std.sample(&mut rng);
        let mut ou_knots = Vec::with_capacity(n);
        let mut ou_values = Vec::with_capacity(n);
        for k in 0..n {
            ou_knots.push(k as f64 * h);
            ou_values.push(x);
            x = x * decay + kick * std.sample(&mut rng);
        }
        (knots, values) = merge(&knots, &values, &ou_knots, &ou_values);
    }

    if noise.hop_magnitude > 0.0 {
        let level = Uniform::new_inclusive(-noise.hop_magnitude, noise.hop_magnitude)
            .map_err(|e| Error::invalid("hop_magnitude", e.to_string()))?;
        let wait = Exp::new(1.0 / noise.hop_interval_mean)
            .map_err(|e| Error::invalid("hop_interval_mean", e.to_string()))?;
        let mut hop_knots = vec![0.0];
        let mut hop_values = vec![2.0 * PI * level.sample(&mut rng)];
        let mut t: f64 = wait.sample(&mut rng);
        while t < duration {
            if hop_knots.len() >= MAX_PATH_POINTS {
                return Err(Error::invalid("hop_interval_mean", "too many hops for duration"));
            }
            hop_knots.push(t);
            hop_values.push(2.0 * PI * level.sample(&mut rng));
            t += wait.sample(&mut rng);
        }
        (knots, values) = merge(&knots, &values, &hop_knots, &hop_values);
    }

    Ok(DetuningPath::from_levels(knots, values))
}

/// Sum of two piecewise-constant functions that both start at 0.
fn merge(ka: &[f64], va: &[f64], kb: &[f64], vb: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut knots = Vec::with_capacity(ka.len() + kb.len());
    let mut values = Vec::with_capacity(ka.len() + kb.len());
    let (mut i, mut j) = (0, 0);
    loop {
        let t = ka[i].max(kb[j]);
        knots.push(t);
        values.push(va[i] + vb[j]);
        let next_a = ka.get(i + 1).copied().unwrap_or(f64::INFINITY);
        let next_b = kb.get(j + 1).copied().unwrap_or(f64::INFINITY);
        if next_a.is_infinite() && next_b.is_infinite() {
            break;
        }
        if next_a <= next_b {
            i += 1;
        }
        if next_b <= next_a {
            j += 1;
        }
    }
    (knots, values)
}

/// Uniform draw in [0, 1) from a counter-based stream, for callers that need ad-hoc randomness.
pub fn uniform01(seed: u64, domain: u64, stream: u64) -> f64 {
    rng_for(seed, domain, stream).random::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stats(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, var.sqrt())
    }

    #[test]
    fn silent_model_is_zero() {
        let path = sample_detuning(&NoiseModel::default(), 3, 1e-6).unwrap();
        for t in [0.0, 1e-7, 5e-7, 2e-6] {
            assert_eq!(path.offset_at(t), 0.0);
        }
        assert_eq!(path.phase(0.0, 1e-6), 0.0);
    }

    #[test]
    fn quasi_static_std_matches() {
        let noise = NoiseModel {
            quasi_static_sigma: 3e6,
            seed: 11,
            ..NoiseModel::default()
        };
        let xs: Vec<f64> = (0..10_000)
            .map(|i| sample_detuning(&noise, i, 1e-6).unwrap().offset_hz(0.5e-6))
            .collect();
        let (_, s) = stats(&xs);
        assert!((s / 3e6 - 1.0).abs() < 0.03, "std {s}");
    }

    #[test]
    fn quasi_static_constant_within_shot() {
        let noise = NoiseModel {
            quasi_static_sigma: 3e6,
            ..NoiseModel::default()
        };
        let p = sample_detuning(&noise, 0, 1e-6).unwrap();
        assert_eq!(p.offset_at(0.0), p.offset_at(0.9e-6));
        assert!(p.breakpoints(0.0, 1e-6).is_empty());
    }

    #[test]
    fn ou_autocorrelation_at_tau_c() {
        let tau = 1e-6;
        let noise = NoiseModel {
            ou_tau_c: tau,
            ou_sigma: 1e6,
            seed: 5,
            ..NoiseModel::default()
        };
        let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
        for i in 0..40_000 {
            let p = sample_detuning(&noise, i, 1.5 * tau).unwrap();
            let (x, y) = (p.offset_at(0.0), p.offset_at(tau + 1e-12));
            sxy += x * y;
            sxx += x * x;
            syy += y * y;
        }
        let rho = sxy / (sxx * syy).sqrt();
        assert!((rho / (-1.0f64).exp() - 1.0).abs() < 0.05, "rho {rho}");
    }

    #[test]
    fn ou_stationary_std() {
        let noise = NoiseModel {
            ou_tau_c: 1e-6,
            ou_sigma: 2e6,
            seed: 1,
            ..NoiseModel::default()
        };
        let xs: Vec<f64> = (0..10_000)
            .map(|i| sample_detuning(&noise, i, 3e-6).unwrap().offset_hz(2.9e-6))
            .collect();
        let (_, s) = stats(&xs);
        assert!((s / 2e6 - 1.0).abs() < 0.03);
    }

    #[test]
    fn reproducible_per_shot() {
        let noise = NoiseModel {
            quasi_static_sigma: 1e6,
            ou_sigma: 1e5,
            ou_tau_c: 1e-7,
            hop_magnitude: 1e6,
            hop_interval_mean: 2e-7,
            seed: 42,
            ..NoiseModel::default()
        };
        let a = sample_detuning(&noise, 17, 2e-6).unwrap();
        let b = sample_detuning(&noise, 17, 2e-6).unwrap();
        let c = sample_detuning(&noise, 18, 2e-6).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn phase_integrates_levels() {
        let noise = NoiseModel {
            hop_magnitude: 5e6,
            hop_interval_mean: 1e-7,
            seed: 9,
            ..NoiseModel::default()
        };
        let p = sample_detuning(&noise, 0, 1e-6).unwrap();
        let n = 200_000;
        let h = 1e-6 / n as f64;
        let riemann: f64 = (0..n).map(|k| p.offset_at((k as f64 + 0.5) * h) * h).sum();
        assert!((p.phase(0.0, 1e-6) - riemann).abs() < 1e-3);
        let mid = p.phase(0.0, 0.4e-6) + p.phase(0.4e-6, 1e-6);
        assert!((mid - p.phase(0.0, 1e-6)).abs() < 1e-9);
    }

    #[test]
    fn hops_stay_in_bounds() {
        let noise = NoiseModel {
            hop_magnitude: 10e6,
            hop_interval_mean: 5e-8,
            seed: 2,
            ..NoiseModel::default()
        };
        let p = sample_detuning(&noise, 0, 1e-6).unwrap();
        let (knots, values) = p.levels();
        assert!(knots.len() > 5);
        assert!(values.iter().all(|v| v.abs() <= 2.0 * PI * 10e6));
    }

    #[test]
    fn invalid_models_rejected() {
        let bad = NoiseModel {
            quasi_static_sigma: -1.0,
            ..NoiseModel::default()
        };
        assert!(sample_detuning(&bad, 0, 1e-6).is_err());
        let bad = NoiseModel {
            ou_sigma: 1.0,
            ou_tau_c: 0.0,
            ..NoiseModel::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn streams_are_independent_of_order() {
        let a: Vec<f64> = (0..8).map(|i| uniform01(1, 2, i)).collect();
        let b: Vec<f64> = (0..8).rev().map(|i| uniform01(1, 2, i)).collect();
        let b: Vec<f64> = b.into_iter().rev().collect();
        assert_eq!(a, b);
    }
}
