//! Run configuration. Values come from built-in defaults, then the TOML
//! file, then command-line flags.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use nv0_core::{
    cqed::{EmitterSpec, ResonatorSpec},
    DetectorModel, NoiseModel, OrbitalModel, SequenceConfig,
};

use crate::error::CliError;
use crate::units::Freq;

pub const CONFIG_ENV: &str = "NV0SIM_CONFIG";

/// Shot count used when neither file nor flags set one.
pub const DEFAULT_SHOTS: u64 = 10_000_000;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    /// Sample temperature, K.
    pub temperature: f64,
    pub output: Option<PathBuf>,
    pub physics: Physics,
    pub noise: Noise,
    pub detector: Detector,
    pub sequence: Sequence,
    pub experiment: Experiment,
    pub sweep: Sweep,
    pub cqed: Cqed,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            temperature: 0.05,
            output: None,
            physics: Physics::default(),
            noise: Noise::default(),
            detector: Detector::default(),
            sequence: Sequence::default(),
            experiment: Experiment::default(),
            sweep: Sweep::default(),
            cqed: Cqed::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Physics {
    pub lambda: Freq,
    pub eps_perp: Freq,
    /// Radiative linewidth γ/2π.
    pub gamma: Freq,
    pub opt_rabi: Freq,
    /// Phonon coupling A in s²·(rad/s)⁻³; calibrated from t1_ref at t_ref when absent.
    pub coupling_a: Option<f64>,
    pub t1_ref: f64,
    pub t_ref: f64,
}

impl Default for Physics {
    fn default() -> Self {
        let m = OrbitalModel::default();
        Self {
            lambda: Freq(m.lambda),
            eps_perp: Freq(m.eps_perp),
            gamma: Freq(m.gamma),
            opt_rabi: Freq(8e6),
            coupling_a: m.coupling_a,
            t1_ref: m.t1_ref,
            t_ref: m.t_ref,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Noise {
    pub markovian_dephasing: Freq,
    pub quasi_static_sigma: Freq,
    pub ou_sigma: Freq,
    pub ou_tau_c: f64,
    pub hop_magnitude: Freq,
    pub hop_interval_mean: f64,
    pub realizations: usize,
}

impl Default for Noise {
    fn default() -> Self {
        let n = NoiseModel::default();
        Self {
            markovian_dephasing: Freq(n.markovian_dephasing),
            quasi_static_sigma: Freq(n.quasi_static_sigma),
            ou_sigma: Freq(n.ou_sigma),
            ou_tau_c: n.ou_tau_c,
            hop_magnitude: Freq(n.hop_magnitude),
            hop_interval_mean: n.hop_interval_mean,
            realizations: 200,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Counts {
    /// Poisson-sampled photon counts.
    Sampled,
    /// Noise-free mean counts.
    Expected,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Detector {
    pub bin_width: f64,
    pub collection_efficiency: f64,
    /// Background counts per second.
    pub dark_rate: Freq,
    pub shots: u64,
    pub counts: Counts,
}

impl Default for Detector {
    fn default() -> Self {
        let d = DetectorModel::default();
        Self {
            bin_width: d.bin_width,
            collection_efficiency: d.collection_efficiency,
            dark_rate: Freq(d.dark_rate),
            shots: DEFAULT_SHOTS,
            counts: Counts::Sampled,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Sequence {
    pub transition_frequency: Freq,
    pub mw_rabi: Freq,
    pub opt_detuning: Freq,
    pub init_width: f64,
    pub readout_width: f64,
    pub readout_delay: f64,
    pub ideal_pulses: bool,
}

impl Default for Sequence {
    fn default() -> Self {
        let s = SequenceConfig::default();
        Self {
            transition_frequency: Freq(s.transition_frequency),
            mw_rabi: Freq(s.mw_rabi),
            opt_detuning: Freq(s.opt_detuning),
            init_width: s.init_width,
            readout_width: s.readout_width,
            readout_delay: s.readout_delay,
            ideal_pulses: s.ideal_pulses,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    T1,
    Rabi,
    Ramsey,
    Echo,
    Cpmg,
    Oder,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::T1 => "t1",
            Kind::Rabi => "rabi",
            Kind::Ramsey => "ramsey",
            Kind::Echo => "echo",
            Kind::Cpmg => "cpmg",
            Kind::Oder => "oder",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Spacing {
    Linear,
    Log,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Experiment {
    pub kind: Kind,
    /// Explicit sweep values: delays, widths or total times in s, or
    /// microwave frequencies for `oder`.
    pub points: Option<Vec<Freq>>,
    pub start: Option<Freq>,
    pub stop: Option<Freq>,
    pub count: usize,
    pub spacing: Spacing,
    /// Ramsey detuning.
    pub detuning: Freq,
    /// π pulses per CPMG train.
    pub pulses: usize,
    /// Microwave pulse width for `oder`, s.
    pub mw_width: f64,
    /// Exponential time held fixed in echo and CPMG fits, s. Defaults to the
    /// coherence lifetime set by relaxation and Markovian dephasing.
    pub t1_fixed: Option<f64>,
    pub fit: bool,
    /// Upper bound on the integration step, s.
    pub dt: Option<f64>,
}

impl Default for Experiment {
    fn default() -> Self {
        Self {
            kind: Kind::T1,
            points: None,
            start: None,
            stop: None,
            count: 16,
            spacing: Spacing::Linear,
            detuning: Freq(25e6),
            pulses: 2,
            mw_width: 30e-9,
            t1_fixed: None,
            fit: true,
            dt: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    Temperature,
    Power,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Sweep {
    pub axis: Axis,
    /// Temperatures in K, or microwave powers relative to the one giving `sequence.mw_rabi`.
    pub values: Option<Vec<f64>>,
}

impl Default for Sweep {
    fn default() -> Self {
        Self {
            axis: Axis::Temperature,
            values: None,
        }
    }
}

/// Resonator and emitter. Inside an explicit `[cqed]` table the gap is required.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Cqed {
    #[serde(default = "defaults::frequency")]
    pub frequency: Freq,
    #[serde(default = "defaults::impedance")]
    pub impedance: f64,
    #[serde(default)]
    pub linewidth: Option<Freq>,
    #[serde(default)]
    pub q: Option<f64>,
    pub gap: f64,
    /// Hz per V/m.
    #[serde(default = "defaults::field_sensitivity")]
    pub field_sensitivity: f64,
    #[serde(default = "defaults::t1_orbital")]
    pub t1_orbital: f64,
    #[serde(default)]
    pub impedances: Option<Vec<f64>>,
    #[serde(default)]
    pub gaps: Option<Vec<f64>>,
    #[serde(default)]
    pub qs: Option<Vec<f64>>,
}

mod defaults {
    use super::*;

    pub fn frequency() -> Freq {
        Freq(ResonatorSpec::default().frequency)
    }
    pub fn impedance() -> f64 {
        ResonatorSpec::default().impedance
    }
    pub fn field_sensitivity() -> f64 {
        EmitterSpec::default().field_sensitivity
    }
    pub fn t1_orbital() -> f64 {
        EmitterSpec::default().t1_orbital
    }
}

impl Default for Cqed {
    fn default() -> Self {
        Self {
            frequency: defaults::frequency(),
            impedance: defaults::impedance(),
            linewidth: None,
            q: None,
            gap: ResonatorSpec::default().gap,
            field_sensitivity: defaults::field_sensitivity(),
            t1_orbital: defaults::t1_orbital(),
            impedances: None,
            gaps: None,
            qs: None,
        }
    }
}

impl Cqed {
    pub fn resonator(&self) -> Result<ResonatorSpec, CliError> {
        let spec = match (self.linewidth, self.q) {
            (Some(_), Some(_)) => {
                return Err(CliError::Config("cqed: set either linewidth or q, not both".into()))
            }
            (None, Some(q)) => ResonatorSpec::with_quality_factor(self.frequency.hz(), self.impedance, q, self.gap),
            (lw, None) => ResonatorSpec::new(
                self.frequency.hz(),
                self.impedance,
                lw.map_or(ResonatorSpec::default().linewidth, Freq::hz),
                self.gap,
            ),
        };
        spec.map_err(|e| CliError::Config(format!("cqed: {e}")))
    }

    pub fn emitter(&self) -> Result<EmitterSpec, CliError> {
        EmitterSpec::new(self.field_sensitivity, self.t1_orbital).map_err(|e| CliError::Config(format!("cqed: {e}")))
    }
}

impl RunConfig {
    pub fn parse(text: &str, origin: &Path) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(format!("{}: {e}", origin.display())))
    }

    /// Defaults, overlaid by the file at `path` when given.
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Io(format!("cannot read config {}: {e}", p.display())))?;
                Self::parse(&text, p)
            }
        }
    }

    pub fn model(&self) -> OrbitalModel {
        OrbitalModel {
            lambda: self.physics.lambda.hz(),
            eps_perp: self.physics.eps_perp.hz(),
            gamma: self.physics.gamma.hz(),
            coupling_a: self.physics.coupling_a,
            t1_ref: self.physics.t1_ref,
            t_ref: self.physics.t_ref,
        }
    }

    pub fn noise_model(&self) -> NoiseModel {
        NoiseModel {
            markovian_dephasing: self.noise.markovian_dephasing.hz(),
            quasi_static_sigma: self.noise.quasi_static_sigma.hz(),
            ou_tau_c: self.noise.ou_tau_c,
            ou_sigma: self.noise.ou_sigma.hz(),
            hop_magnitude: self.noise.hop_magnitude.hz(),
            hop_interval_mean: self.noise.hop_interval_mean,
            seed: self.seed,
        }
    }

    pub fn detector_model(&self) -> DetectorModel {
        DetectorModel {
            bin_width: self.detector.bin_width,
            collection_efficiency: self.detector.collection_efficiency,
            dark_rate: self.detector.dark_rate.hz(),
            shots: self.detector.shots,
        }
    }

    pub fn sequence_config(&self) -> SequenceConfig {
        SequenceConfig {
            transition_frequency: self.sequence.transition_frequency.hz(),
            mw_rabi: self.sequence.mw_rabi.hz(),
            opt_rabi: self.physics.opt_rabi.hz(),
            opt_detuning: self.sequence.opt_detuning.hz(),
            init_width: self.sequence.init_width,
            readout_width: self.sequence.readout_width,
            readout_delay: self.sequence.readout_delay,
            ideal_pulses: self.sequence.ideal_pulses,
        }
    }

    /// Checks that do not depend on the subcommand.
    pub fn validate(&self) -> Result<(), CliError> {
        let cfg = |e: nv0_core::Error| CliError::Config(e.to_string());
        if !(self.temperature >= 0.0) || !self.temperature.is_finite() {
            return Err(CliError::Config("temperature must be finite and >= 0".into()));
        }
        self.model().delta_gs().map_err(cfg)?;
        self.model().coupling().map_err(cfg)?;
        self.noise_model().validate().map_err(cfg)?;
        self.detector_model().validate().map_err(cfg)?;
        self.sequence_config().validate().map_err(cfg)?;
        if self.noise.realizations == 0 {
            return Err(CliError::Config("noise.realizations must be >= 1".into()));
        }
        if let Some(dt) = self.experiment.dt {
            if !(dt > 0.0) {
                return Err(CliError::Config("experiment.dt must be > 0".into()));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<RunConfig, CliError> {
        RunConfig::parse(text, Path::new("test.toml"))
    }

    #[test]
    fn empty_file_is_defaults() {
        assert_eq!(parse("").unwrap(), RunConfig::default());
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = parse("[physics]\nlamda = \"4.9 GHz\"\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("lamda") && msg.contains("line 2"), "{msg}");
        assert!(parse("colour = 1").is_err());
    }

    #[test]
    fn units_in_sections() {
        let c = parse("[physics]\nopt_rabi = \"2 MHz\"\n[sequence]\ntransition_frequency = \"13.04 GHz\"\n").unwrap();
        assert_eq!(c.physics.opt_rabi.hz(), 2e6);
        assert_eq!(c.sequence_config().transition_frequency, 13.04e9);
        assert_eq!(c.physics.lambda, Physics::default().lambda);
    }

    #[test]
    fn cqed_table_requires_gap() {
        assert!(parse("[cqed]\nimpedance = 50\n").is_err());
        let c = parse("[cqed]\ngap = 2e-6\n").unwrap();
        assert_eq!(c.cqed.gap, 2e-6);
        assert_eq!(c.cqed.impedance, 4e3);
    }

    #[test]
    fn zero_shots_invalid() {
        let c = parse("[detector]\nshots = 0\n").unwrap();
        assert!(matches!(c.validate(), Err(CliError::Config(_))));
    }

    #[test]
    fn linewidth_and_q_conflict() {
        let c = parse("[cqed]\ngap = 1e-6\nq = 1e5\nlinewidth = \"100 kHz\"\n").unwrap();
        assert!(c.cqed.resonator().is_err());
    }
}
