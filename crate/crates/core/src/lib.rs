//! Simulation and parameter estimation for the orbital qubit of the neutral
//! nitrogen-vacancy center.

pub mod bloch;
pub mod cqed;
pub mod detection;
pub mod error;
pub mod experiment;
pub mod fitting;
pub mod noise;
pub mod physics;
pub mod sequence;

pub use error::{Error, Result};

pub use bloch::{DensityMatrix3, Drives, Evolver, SystemRates, TimelineEntry};
pub use cqed::{CouplingReport, EmitterSpec, ResonatorSpec};
pub use detection::{CountTrace, DetectorModel, PopulationTrace, ReadoutChain};
pub use experiment::{ExperimentSetup, OrbitalModel, SimulatedPoint};
pub use fitting::{FitData, FitModel, FitResult};
pub use noise::NoiseModel;
pub use physics::{GroundStateParams, PhononBath, PhysConstants};
pub use sequence::{PulseSequence, SequenceConfig};
