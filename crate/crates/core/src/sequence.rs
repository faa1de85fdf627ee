//! Declarative pulse sequences and builders for the standard experiments.
//!
//! Frequencies in segments are ordinary (Hz); detunings are transition minus
//! drive frequency. Sequences serialize to TOML:
//!
//! ```toml
//! label = "rabi"
//!
//! [[segments]]
//! duration = 1e-6
//! readout = true
//! optical = { rabi = 8e6, detuning = 0.0 }
//!
//! [[segments]]
//! duration = 18.5e-9
//! microwave = { rabi = 27e6, detuning = 0.0, phase = 0.0, ideal = false }
//! ```

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::bloch::{Drives, IdealRotation, TimelineEntry};
use crate::error::{Error, Result};
use crate::physics::angular;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OpticalDrive {
    pub rabi: f64,
    #[serde(default)]
    pub detuning: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MicrowaveDrive {
    pub rabi: f64,
    #[serde(default)]
    pub detuning: f64,
    #[serde(default)]
    pub phase: f64,
    /// Apply as an instantaneous rotation of angle 2π·rabi·duration at the segment midpoint.
    #[serde(default)]
    pub ideal: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Segment {
    pub duration: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optical: Option<OpticalDrive>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub microwave: Option<MicrowaveDrive>,
    #[serde(default)]
    pub readout: bool,
}

impl Segment {
    pub fn dark(duration: f64) -> Self {
        Self {
            duration,
            optical: None,
            microwave: None,
            readout: false,
        }
    }

    pub fn optical(duration: f64, rabi: f64, detuning: f64, readout: bool) -> Self {
        Self {
            duration,
            optical: Some(OpticalDrive { rabi, detuning }),
            microwave: None,
            readout,
        }
    }

    pub fn microwave(duration: f64, mw: MicrowaveDrive) -> Self {
        Self {
            duration,
            optical: None,
            microwave: Some(mw),
            readout: false,
        }
    }

    fn validate(&self, index: usize) -> Result<()> {
        if !(self.duration > 0.0) || !self.duration.is_finite() {
            return Err(Error::Sequence(format!(
                "segment {index}: duration must be finite and > 0, got {:e}",
                self.duration
            )));
        }
        if let Some(o) = self.optical {
            if !(o.rabi >= 0.0) || !o.detuning.is_finite() {
                return Err(Error::Sequence(format!(
                    "segment {index}: optical rabi must be >= 0 and detuning finite"
                )));
            }
        }
        if let Some(m) = self.microwave {
            if !(m.rabi >= 0.0) || !m.detuning.is_finite() || !m.phase.is_finite() {
                return Err(Error::Sequence(format!(
                    "segment {index}: microwave rabi must be >= 0, detuning and phase finite"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseSequence {
    pub label: String,
    pub segments: Vec<Segment>,
}

impl PulseSequence {
    pub fn new(label: impl Into<String>, segments: Vec<Segment>) -> Result<Self> {
        let seq = Self {
            label: label.into(),
            segments,
        };
        seq.validate()?;
        Ok(seq)
    }

    pub fn validate(&self) -> Result<()> {
        if self.segments.is_empty() {
            return Err(Error::Sequence("sequence has no segments".into()));
        }
        for (i, s) in self.segments.iter().enumerate() {
            s.validate(i)?;
        }
        Ok(())
    }

    pub fn total_duration(&self) -> f64 {
        self.segments.iter().map(|s| s.duration).sum()
    }

    /// Start times of every segment.
    pub fn segment_starts(&self) -> Vec<f64> {
        let mut t = 0.0;
        self.segments
            .iter()
            .map(|s| {
                let start = t;
                t += s.duration;
                start
            })
            .collect()
    }

    /// [start, end) of every readout segment in order.
    pub fn readout_windows(&self) -> Vec<(f64, f64)> {
        self.segment_starts()
            .into_iter()
            .zip(&self.segments)
            .filter(|(_, s)| s.readout)
            .map(|(t, s)| (t, t + s.duration))
            .collect()
    }

    /// Midpoints of microwave segments.
    pub fn microwave_centers(&self) -> Vec<f64> {
        self.segment_starts()
            .into_iter()
            .zip(&self.segments)
            .filter(|(_, s)| s.microwave.is_some_and(|m| m.rabi > 0.0))
            .map(|(t, s)| t + 0.5 * s.duration)
            .collect()
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let seq: Self = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        seq.validate()?;
        Ok(seq)
    }
}

/// Piecewise-constant drive timeline, with frequencies converted to rad/s.
pub fn expand_to_drives(seq: &PulseSequence) -> Result<Vec<TimelineEntry>> {
    seq.validate()?;
    Ok(seq
        .segments
        .iter()
        .map(|s| {
            let mut drives = Drives::default();
            if let Some(o) = s.optical {
                drives.opt_rabi = angular(o.rabi);
                drives.opt_detuning = angular(o.detuning);
            }
            let mut ideal_rotation = None;
            if let Some(m) = s.microwave {
                drives.mw_detuning = angular(m.detuning);
                drives.mw_phase = m.phase;
                if m.ideal {
                    ideal_rotation = Some(IdealRotation {
                        phase: m.phase,
                        angle: angular(m.rabi) * s.duration,
                    });
                } else {
                    drives.mw_rabi = angular(m.rabi);
                }
            }
            TimelineEntry {
                duration: s.duration,
                drives,
                readout: s.readout,
                ideal_rotation,
            }
        })
        .collect())
}

/// Shared settings of the sequence builders. Frequencies in Hz, times in s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SequenceConfig {
    /// ω_01/2π used to turn a drive frequency into a detuning.
    pub transition_frequency: f64,
    pub mw_rabi: f64,
    pub opt_rabi: f64,
    pub opt_detuning: f64,
    pub init_width: f64,
    pub readout_width: f64,
    /// Dark gap between the last microwave pulse and the readout pulse.
    pub readout_delay: f64,
    /// Use instantaneous microwave rotations.
    pub ideal_pulses: bool,
}

impl Default for SequenceConfig {
    fn default() -> Self {
        Self {
            transition_frequency: 13.042e9,
            mw_rabi: 27e6,
            opt_rabi: 8e6,
            opt_detuning: 0.0,
            init_width: 1e-6,
            readout_width: 1e-6,
            readout_delay: 10e-9,
            ideal_pulses: false,
        }
    }
}

impl SequenceConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("init_width", self.init_width),
            ("readout_width", self.readout_width),
            ("mw_rabi", self.mw_rabi),
            ("transition_frequency", self.transition_frequency),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::invalid(name, "must be finite and > 0"));
            }
        }
        if !(self.opt_rabi >= 0.0) {
            return Err(Error::invalid("opt_rabi", "must be >= 0"));
        }
        if !(self.readout_delay >= 0.0) {
            return Err(Error::invalid("readout_delay", "must be >= 0"));
        }
        Ok(())
    }

    /// Duration of a rotation by `angle` at the configured Rabi frequency.
    pub fn pulse_width(&self, angle: f64) -> f64 {
        angle / angular(self.mw_rabi)
    }

    fn init(&self, width: f64) -> Segment {
        Segment::optical(width, self.opt_rabi, self.opt_detuning, true)
    }

    fn readout(&self) -> Segment {
        Segment::optical(self.readout_width, self.opt_rabi, self.opt_detuning, true)
    }

    fn rotation(&self, angle: f64, phase: f64, detuning: f64) -> Segment {
        Segment::microwave(
            self.pulse_width(angle),
            MicrowaveDrive {
                rabi: self.mw_rabi,
                detuning,
                phase,
                ideal: self.ideal_pulses,
            },
        )
    }

    fn push_readout(&self, segments: &mut Vec<Segment>) {
        if self.readout_delay > 0.0 {
            segments.push(Segment::dark(self.readout_delay));
        }
        segments.push(self.readout());
    }
}

/// Single optical pumping pulse with its emission recorded.
pub fn build_orbital_init(width: f64, opt_rabi: f64) -> Result<PulseSequence> {
    if !(width > 0.0) {
        return Err(Error::invalid("width", "must be > 0"));
    }
    PulseSequence::new("orbital-init", vec![Segment::optical(width, opt_rabi, 0.0, true)])
}

/// Init (window A) → microwave at `mw_freq` → readout (window B).
pub fn build_oder(cfg: &SequenceConfig, mw_freq: f64, mw_width: f64) -> Result<PulseSequence> {
    cfg.validate()?;
    if !(mw_width > 0.0) {
        return Err(Error::invalid("mw_width", "must be > 0"));
    }
    let mw = MicrowaveDrive {
        rabi: cfg.mw_rabi,
        detuning: cfg.transition_frequency - mw_freq,
        phase: 0.0,
        ideal: cfg.ideal_pulses,
    };
    let mut segments = vec![cfg.init(cfg.init_width), Segment::microwave(mw_width, mw)];
    cfg.push_readout(&mut segments);
    PulseSequence::new(format!("oder f={mw_freq:e}"), segments)
}

/// Init → dark wait → readout for every delay.
pub fn build_t1_pump_probe(cfg: &SequenceConfig, delays: &[f64]) -> Result<Vec<PulseSequence>> {
    cfg.validate()?;
    check_delays(delays, true)?;
    delays
        .iter()
        .map(|&d| {
            let mut segments = vec![cfg.init(cfg.init_width)];
            if d > 0.0 {
                segments.push(Segment::dark(d));
            }
            segments.push(cfg.readout());
            PulseSequence::new(format!("t1 delay={d:e}"), segments)
        })
        .collect()
}

/// Init → resonant microwave of each width → readout. Width 0 omits the pulse.
pub fn build_rabi(cfg: &SequenceConfig, widths: &[f64]) -> Result<Vec<PulseSequence>> {
    cfg.validate()?;
    check_delays(widths, false)?;
    widths
        .iter()
        .map(|&w| {
            let mut segments = vec![cfg.init(cfg.init_width)];
            if w > 0.0 {
                segments.push(Segment::microwave(
                    w,
                    MicrowaveDrive {
                        rabi: cfg.mw_rabi,
                        detuning: 0.0,
                        phase: 0.0,
                        ideal: cfg.ideal_pulses,
                    },
                ));
            }
            cfg.push_readout(&mut segments);
            PulseSequence::new(format!("rabi width={w:e}"), segments)
        })
        .collect()
}

/// Init → π/2_x → wait → π/2_x → readout, all microwave at the given detuning (Hz).
pub fn build_ramsey(cfg: &SequenceConfig, delays: &[f64], detuning: f64) -> Result<Vec<PulseSequence>> {
    cfg.validate()?;
    check_delays(delays, false)?;
    delays
        .iter()
        .map(|&d| {
            let mut segments = vec![cfg.init(cfg.init_width), cfg.rotation(PI / 2.0, 0.0, detuning)];
            if d > 0.0 {
                segments.push(Segment::microwave(
                    d,
                    MicrowaveDrive {
                        rabi: 0.0,
                        detuning,
                        phase: 0.0,
                        ideal: false,
                    },
                ));
            }
            segments.push(cfg.rotation(PI / 2.0, 0.0, detuning));
            cfg.push_readout(&mut segments);
            PulseSequence::new(format!("ramsey delay={d:e}"), segments)
        })
        .collect()
}

fn decoupling(
    cfg: &SequenceConfig,
    m: usize,
    total: f64,
    flip_phase: f64,
    label: &str,
) -> Result<PulseSequence> {
    let half = cfg.pulse_width(PI / 2.0);
    let pi = cfg.pulse_width(PI);
    let spacing = total / m as f64;
    let edge = 0.5 * spacing - 0.5 * pi - 0.5 * half;
    let inner = spacing - pi;
    let tol = 1e-12 * total;
    if edge < -tol || inner < -tol {
        return Err(Error::Sequence(format!(
            "{label}: total time {total:e} s too short for {m} pulses"
        )));
    }
    let wait = |d: f64| {
        Segment::microwave(
            d,
            MicrowaveDrive {
                rabi: 0.0,
                detuning: 0.0,
                phase: 0.0,
                ideal: false,
            },
        )
    };
    let mut segments = vec![cfg.init(cfg.init_width), cfg.rotation(PI / 2.0, 0.0, 0.0)];
    for k in 0..m {
        let gap = if k == 0 { edge } else { inner };
        if gap > tol {
            segments.push(wait(gap));
        }
        segments.push(cfg.rotation(PI, flip_phase, 0.0));
    }
    if edge > tol {
        segments.push(wait(edge));
    }
    segments.push(cfg.rotation(PI / 2.0, 0.0, 0.0));
    cfg.push_readout(&mut segments);
    PulseSequence::new(format!("{label} total={total:e}"), segments)
}

/// π/2_x, then [τ/2M, π_y, τ/2M] repeated M times, then π/2_x; τ runs between the π/2 centers.
pub fn build_cpmg(cfg: &SequenceConfig, m: usize, total_times: &[f64]) -> Result<Vec<PulseSequence>> {
    cfg.validate()?;
    if m == 0 {
        return Err(Error::invalid("M", "must be >= 1"));
    }
    if total_times.iter().any(|&t| !(t > 0.0)) {
        return Err(Error::invalid("total_times", "must be > 0"));
    }
    total_times
        .iter()
        .map(|&t| decoupling(cfg, m, t, PI / 2.0, &format!("cpmg-{m}")))
        .collect()
}

/// CPMG-1 with an x-phase flip pulse.
pub fn build_hahn_echo(cfg: &SequenceConfig, total_times: &[f64]) -> Result<Vec<PulseSequence>> {
    cfg.validate()?;
    if total_times.iter().any(|&t| !(t > 0.0)) {
        return Err(Error::invalid("total_times", "must be > 0"));
    }
    total_times
        .iter()
        .map(|&t| decoupling(cfg, 1, t, 0.0, "echo"))
        .collect()
}

fn check_delays(delays: &[f64], increasing: bool) -> Result<()> {
    if delays.iter().any(|&d| !(d >= 0.0) || !d.is_finite()) {
        return Err(Error::invalid("delays", "must be finite and >= 0"));
    }
    if increasing && delays.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("delays", "must be strictly increasing"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bloch::timeline_duration;

    #[test]
    fn init_builder() {
        let s = build_orbital_init(1e-6, 8e6).unwrap();
        assert_eq!(s.segments.len(), 1);
        assert!(s.segments[0].readout);
        assert!(build_orbital_init(0.0, 8e6).is_err());
    }

    #[test]
    fn oder_structure() {
        let cfg = SequenceConfig {
            readout_delay: 0.0,
            ..SequenceConfig::default()
        };
        let s = build_oder(&cfg, 13.03e9, 30e-9).unwrap();
        let tl = expand_to_drives(&s).unwrap();
        assert_eq!(tl.len(), 3);
        assert!(!tl[0].has_microwave() && tl[1].has_microwave() && !tl[2].has_microwave());
        assert!((tl[1].drives.mw_detuning - angular(12e6)).abs() < 1e-3);
        assert_eq!(s.readout_windows().len(), 2);
    }

    #[test]
    fn oder_without_drive_is_t1_probe() {
        let cfg = SequenceConfig {
            mw_rabi: 1e-300,
            ..SequenceConfig::default()
        };
        let s = build_oder(&cfg, 13.042e9, 30e-9).unwrap();
        let tl = expand_to_drives(&s).unwrap();
        assert!(tl[1].drives.mw_rabi < 1e-290);
    }

    #[test]
    fn pump_probe_delays() {
        let cfg = SequenceConfig::default();
        let seqs = build_t1_pump_probe(&cfg, &[0.0, 1e-6]).unwrap();
        assert_eq!(seqs[0].segments.len(), 2);
        assert_eq!(seqs[1].segments.len(), 3);
        assert!(build_t1_pump_probe(&cfg, &[1e-6, 1e-7]).is_err());
        assert!(build_t1_pump_probe(&cfg, &[-1.0]).is_err());
    }

    #[test]
    fn ramsey_zero_delay_is_pi_pulse() {
        let cfg = SequenceConfig::default();
        let s = &build_ramsey(&cfg, &[0.0], 0.0).unwrap()[0];
        let area: f64 = s
            .segments
            .iter()
            .filter_map(|seg| seg.microwave.map(|m| angular(m.rabi) * seg.duration))
            .sum();
        assert!((area - PI).abs() < 1e-12);
    }

    #[test]
    fn cpmg_pulse_centers() {
        let cfg = SequenceConfig::default();
        for m in [1, 2, 4, 8] {
            let tau = 2e-6;
            let s = &build_cpmg(&cfg, m, &[tau]).unwrap()[0];
            let centers = s.microwave_centers();
            assert_eq!(centers.len(), m + 2);
            let origin = centers[0];
            for k in 1..=m {
                let want = tau * (2 * k - 1) as f64 / (2 * m) as f64;
                assert!((centers[k] - origin - want).abs() <= 1e-12 * tau, "m={m} k={k}");
            }
            assert!((centers[m + 1] - origin - tau).abs() <= 1e-12 * tau);
        }
    }

    #[test]
    fn echo_is_cpmg1_with_x_flip() {
        let cfg = SequenceConfig::default();
        let echo = &build_hahn_echo(&cfg, &[1e-6]).unwrap()[0];
        let cpmg = &build_cpmg(&cfg, 1, &[1e-6]).unwrap()[0];
        assert_eq!(echo.segments.len(), cpmg.segments.len());
        let pulses: Vec<usize> = (0..echo.segments.len())
            .filter(|&i| echo.segments[i].microwave.is_some_and(|m| m.rabi > 0.0))
            .collect();
        assert_eq!(pulses.len(), 3);
        for (i, (a, b)) in echo.segments.iter().zip(&cpmg.segments).enumerate() {
            if i == pulses[1] {
                assert_eq!(a.microwave.unwrap().phase, 0.0);
                assert_eq!(b.microwave.unwrap().phase, PI / 2.0);
                assert_eq!(a.duration, b.duration);
            } else {
                assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn cpmg_too_short_rejected() {
        let cfg = SequenceConfig::default();
        assert!(build_cpmg(&cfg, 8, &[50e-9]).is_err());
        assert!(build_cpmg(&cfg, 0, &[1e-6]).is_err());
    }

    #[test]
    fn expansion_is_lossless() {
        let cfg = SequenceConfig::default();
        let s = &build_cpmg(&cfg, 4, &[3e-6]).unwrap()[0];
        let tl = expand_to_drives(s).unwrap();
        assert_eq!(tl.len(), s.segments.len());
        assert_eq!(timeline_duration(&tl), s.total_duration());
        for (e, seg) in tl.iter().zip(&s.segments) {
            assert_eq!(e.duration, seg.duration);
        }
    }

    #[test]
    fn ideal_mode_sets_rotation() {
        let cfg = SequenceConfig {
            ideal_pulses: true,
            ..SequenceConfig::default()
        };
        let s = &build_hahn_echo(&cfg, &[1e-6]).unwrap()[0];
        let tl = expand_to_drives(s).unwrap();
        let rots: Vec<_> = tl.iter().filter_map(|e| e.ideal_rotation).collect();
        assert_eq!(rots.len(), 3);
        assert!((rots[1].angle - PI).abs() < 1e-12);
        assert!(tl.iter().all(|e| e.drives.mw_rabi == 0.0));
    }

    #[test]
    fn toml_round_trip() {
        let cfg = SequenceConfig::default();
        let s = build_ramsey(&cfg, &[40e-9], 22e6).unwrap().remove(0);
        let text = s.to_toml().unwrap();
        assert_eq!(PulseSequence::from_toml(&text).unwrap(), s);
        let bad = "label = \"x\"\nsegments = []\nextra = 1\n";
        assert!(PulseSequence::from_toml(bad).is_err());
        let zero = "label = \"x\"\n[[segments]]\nduration = 0.0\n";
        assert!(PulseSequence::from_toml(zero).is_err());
    }
}

#[cfg(test)]
mod proptests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn builders_emit_valid_sequences(
            delays in proptest::collection::vec(0.0..5e-6f64, 1..8),
            m in 1usize..9,
            extra in 0.0..5e-6f64,
        ) {
            let cfg = SequenceConfig::default();
            let mut sorted = delays.clone();
            sorted.sort_by(f64::total_cmp);
            sorted.dedup();
            for s in build_t1_pump_probe(&cfg, &sorted).unwrap() {
                prop_assert!(s.validate().is_ok());
                prop_assert_eq!(s.readout_windows().len(), 2);
            }
            for s in build_rabi(&cfg, &delays).unwrap() {
                prop_assert!(s.validate().is_ok());
            }
            for s in build_ramsey(&cfg, &delays, 22e6).unwrap() {
                prop_assert!(s.validate().is_ok());
            }
            let min_total = m as f64 * cfg.pulse_width(PI) + cfg.pulse_width(PI / 2.0);
            let s = build_cpmg(&cfg, m, &[min_total + extra]).unwrap();
            let tl = expand_to_drives(&s[0]).unwrap();
            let total: f64 = tl.iter().map(|e| e.duration).sum();
            prop_assert_eq!(total, s[0].total_duration());
        }
    }
}
