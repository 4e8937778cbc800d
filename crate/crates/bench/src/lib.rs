//! Fixtures shared by the criterion benches.

use nalgebra::DVector;
use risense_core::em::{random_phase_config, DirectionAngles, ElementArray, WaveContext};
use risense_core::forward::{single_ris_operator, ReceiverSpec, SensingOperator};
use risense_core::harness::config::ScenarioConfig;
use risense_core::harness::{scenario_operator, Experiment};
use risense_core::{Result, C64};

/// Rank-sweep configuration with `measurements` per panel.
pub fn rank_sweep_config(measurements: usize) -> ScenarioConfig {
    let mut cfg = ScenarioConfig::preset(Experiment::RankSweep);
    cfg.ris.measurements = measurements;
    cfg
}

/// Four-panel stacked operator of the rank-sweep scene.
pub fn multi_panel_operator(measurements: usize) -> Result<SensingOperator> {
    scenario_operator(&rank_sweep_config(measurements), 0)
}

/// Single 16-element panel seen over an angular grid of `cells` directions.
pub fn angular_operator(measurements: usize, cells: usize, seed: u64) -> Result<SensingOperator> {
    let ctx = WaveContext::new(5.8e9)?;
    let tau = ElementArray::default_tau(&ctx);
    let array = ElementArray::centered_linear("bench", 16, 0.025, tau)?;
    let config = random_phase_config(measurements, 16, seed)?;
    let receiver = ReceiverSpec::new(1.0, DirectionAngles::broadside(40f64.to_radians())?)?;
    let grid: Vec<DirectionAngles> = (0..cells)
        .map(|i| DirectionAngles::broadside((-60.0 + 120.0 * i as f64 / (cells - 1) as f64).to_radians()))
        .collect::<Result<_>>()?;
    single_ris_operator(&array, &config, &receiver, &grid, &ctx)
}

/// Field of a unit source on cell `cell`.
pub fn point_field(op: &SensingOperator, cell: usize) -> DVector<C64> {
    op.matrix.column(cell).into_owned()
}
