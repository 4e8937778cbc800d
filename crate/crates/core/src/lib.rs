//! Simulation, reconstruction and analysis toolkit for backward sensing with
//! reconfigurable intelligent surfaces (RIS).
//!
//! The crate is organised bottom-up:
//!
//! * [`em`] holds geometry, steering vectors, path loss and phase schedules.
//! * [`forward`] assembles sensing operators and simulates measurements.
//! * [`solvers`] recovers source fields from phased or magnitude-only data.
//! * [`spectral`] covers singular spectra, rank bounds and error bounds.
//! * [`metrics`] scores reconstructions.
//! * [`harness`] builds scenarios, runs the experiment studies and writes CSV.

pub mod em;
pub mod error;
pub mod forward;
pub mod harness;
pub mod metrics;
pub mod solvers;
pub mod spectral;

/// Complex double used for every field quantity.
pub type C64 = nalgebra::Complex<f64>;

pub use em::{DirectionAngles, ElementArray, PhaseConfigMatrix, Pose, WaveContext, SPEED_OF_LIGHT};
pub use error::{Error, Result};
pub use forward::{
    MeasurementSet, NoiseModel, NoiseReference, OperatorMode, Panel, ReceiverSpec, SceneGrid, SensingOperator,
};
pub use harness::config::ScenarioConfig;
pub use harness::ExperimentResult;
pub use metrics::SsimParams;
pub use solvers::{LsSolution, PhaselessInit, PhaselessParams};
pub use spectral::{BoundInputs, BoundVariant, SpectrumReport};
