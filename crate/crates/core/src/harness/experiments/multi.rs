//! Multi-panel studies on the Cartesian RoI: rank sweep, deployment
//! strategies and panel distance.

use nalgebra::{DVector, Vector3};
use rayon::prelude::*;

use super::sweep_points;
use crate::em::WaveContext;
use crate::error::{Error, Result};
use crate::forward::{
    multi_ris_stacked_operator, multi_ris_summed_operator, simulate_measurements_with, NoiseModel, SceneGrid,
    SensingOperator,
};
use crate::harness::config::{GridSampling, MapName, ReceiverMode, ScenarioConfig};
use crate::harness::layout::{
    build_panels, landmark_layout_with, scaled_tau, split_evenly, truth_amplitudes, Landmark, PanelSpec, TruthMap,
};
use crate::harness::seeds::{monte_carlo_seed, SeedStream};
use crate::harness::{Experiment, ExperimentResult, PointResult, Provenance, Table, TrialRecord};
use crate::metrics::{amplitude_ssim, relative_error};
use crate::solvers::OperatorSvd;
use crate::C64;

/// The configured RoI with its ground-truth amplitudes.
pub(crate) fn roi_scene(cfg: &ScenarioConfig) -> Result<SceneGrid> {
    let center = Vector3::new(cfg.roi.center[0], cfg.roi.center[1], 0.0);
    let shape = (cfg.roi.cells[0], cfg.roi.cells[1]);
    // Span sampling is a centre grid whose outer pixels overhang the RoI by
    // half a pitch.
    let widen = |e: f64, n: usize| match cfg.roi.sampling {
        GridSampling::Centers => e,
        GridSampling::Span => e * n as f64 / (n as f64 - 1.0),
    };
    let extent = (widen(cfg.roi.extent[0], shape.0), widen(cfg.roi.extent[1], shape.1));
    let blank = SceneGrid::cartesian(center, extent, shape, DVector::zeros(shape.0 * shape.1))?;
    let map = match cfg.roi.map {
        MapName::Blocks => TruthMap::Blocks,
        MapName::Point => {
            let p = Vector3::new(cfg.roi.point[0], cfg.roi.point[1], 0.0);
            let cell = blank.cell_containing(&p).ok_or_else(|| {
                Error::Config(vec![crate::harness::config::ConfigIssue {
                    key: "roi.point".into(),
                    message: "point lies outside the RoI".into(),
                }])
            })?;
            TruthMap::Point(cell)
        }
    };
    blank.with_amplitudes(truth_amplitudes(map, shape)?)
}

/// Fixed inputs shared by every trial at one sweep point.
struct Setup<'a> {
    cfg: &'a ScenarioConfig,
    ctx: WaveContext,
    landmarks: Vec<Landmark>,
    specs: Vec<PanelSpec>,
    scene: &'a SceneGrid,
}

impl Setup<'_> {
    fn operator(&self, trial: u64) -> Result<SensingOperator> {
        let cfg = self.cfg;
        let tau = scaled_tau(&self.ctx, cfg.ris.tau_scale);
        let panels = build_panels(
            &self.landmarks,
            &self.specs,
            cfg.ris.spacing,
            tau,
            cfg.ris.receiver_distance,
            cfg.master_seed,
            trial,
        )?;
        match cfg.mode {
            ReceiverMode::Stacked => multi_ris_stacked_operator(&panels, self.scene, &self.ctx),
            ReceiverMode::Summed => multi_ris_summed_operator(&panels, self.scene, &self.ctx),
        }
    }

    fn run_trial(&self, trial: u64) -> Result<(TrialRecord, Vec<f64>, DVector<C64>)> {
        let cfg = self.cfg;
        let op = self.operator(trial)?;
        let svd = OperatorSvd::new(&op.matrix)?;
        let report = svd.spectrum(cfg.rank_tolerance)?;
        if cfg.validate_rank {
            let bound = op.rank_bound()?;
            if report.numeric_rank > bound {
                return Err(Error::Numerical {
                    rows: op.rows(),
                    cols: op.cols(),
                    cond: report.condition_number_full,
                    reason: format!("numeric rank {} exceeds bound {bound}", report.numeric_rank),
                });
            }
        }
        let truth = self.scene.amplitudes();
        let noise = NoiseModel { snr: cfg.linear_snr(), reference: cfg.noise_reference(), variance_override: None };
        let meas = simulate_measurements_with(
            &op,
            truth,
            &noise,
            monte_carlo_seed(cfg.master_seed, trial, SeedStream::Noise),
        )?;
        let sol = svd.solve_refined(&op.matrix, &meas.values, cfg.rank_tolerance)?;
        let record = TrialRecord {
            rel_error: relative_error(&sol.estimate, truth)?,
            ssim: Some(amplitude_ssim(&sol.estimate, truth)?),
            rank: Some(report.numeric_rank),
            cond_number: Some(report.condition_number_full),
            sigma_min: Some(report.sigma_min()),
        };
        Ok((record, report.singular_values, sol.estimate))
    }

    /// All trials, the first trial's spectrum and its reconstruction.
    fn run(&self, label: String, value: f64) -> Result<(PointResult, DVector<C64>)> {
        let trials: Vec<_> =
            (0..self.cfg.trials as u64).into_par_iter().map(|t| self.run_trial(t)).collect::<Result<_>>()?;
        let spectrum = trials[0].1.clone();
        let estimate = trials[0].2.clone();
        let point = PointResult {
            label,
            value,
            bound: None,
            trials: trials.into_iter().map(|t| t.0).collect(),
            spectrum: Some(spectrum),
        };
        Ok((point, estimate))
    }
}

fn specs_for(labels: &[char], elements: &[usize], measurements: &[usize]) -> Vec<PanelSpec> {
    labels
        .iter()
        .zip(elements.iter().zip(measurements))
        .map(|(&label, (&n, &t))| PanelSpec { label, elements: n, measurements: t })
        .collect()
}

fn landmarks_at(cfg: &ScenarioConfig, distance: f64) -> Result<Vec<Landmark>> {
    let center = Vector3::new(cfg.roi.center[0], cfg.roi.center[1], 0.0);
    landmark_layout_with(distance, center, &cfg.landmark_convention())
}

/// Magnitude map of a reconstruction, one row per cell.
fn map_table(name: String, scene: &SceneGrid, estimate: &DVector<C64>) -> Table {
    let centers = scene.centers().unwrap_or_default();
    let (nx, _) = scene.shape().unwrap_or((1, 1));
    Table {
        name,
        header: ["ix", "iy", "x", "y", "truth", "estimate"].map(String::from).to_vec(),
        rows: centers
            .iter()
            .enumerate()
            .map(|(m, c)| {
                vec![
                    (m % nx).to_string(),
                    (m / nx).to_string(),
                    crate::harness::output::format_float(c.x),
                    crate::harness::output::format_float(c.y),
                    crate::harness::output::format_float(scene.amplitudes()[m].norm()),
                    crate::harness::output::format_float(estimate[m].norm()),
                ]
            })
            .collect(),
    }
}

fn finish(
    experiment: Experiment,
    cfg: &ScenarioConfig,
    sweep_param: String,
    points: Vec<PointResult>,
    tables: Vec<Table>,
) -> ExperimentResult {
    ExperimentResult { experiment, sweep_param, points, tables, provenance: Provenance::for_config(experiment, cfg) }
}

/// Numeric rank, spectrum and noiseless reconstruction quality as the
/// per-panel element or measurement count varies.
pub fn run_rank_sweep(cfg: &ScenarioConfig) -> Result<ExperimentResult> {
    let points = sweep_points(cfg, Experiment::RankSweep)?;
    let scene = roi_scene(cfg)?;
    let labels = cfg.landmark_labels();
    let landmarks = landmarks_at(cfg, cfg.layout.distance)?;
    let mut out = Vec::new();
    let mut tables = Vec::new();
    for (label, value) in points {
        let mut n = cfg.ris.elements;
        let mut t = cfg.ris.measurements;
        match cfg.sweep.param.as_str() {
            "elements" => n = value as usize,
            "measurements" => t = value as usize,
            _ => {}
        }
        let setup = Setup {
            cfg,
            ctx: WaveContext::new(cfg.wave.frequency)?,
            landmarks: landmarks.clone(),
            specs: specs_for(&labels, &vec![n; labels.len()], &vec![t; labels.len()]),
            scene: &scene,
        };
        let (point, estimate) = setup.run(label, value)?;
        tables.push(map_table(format!("map_{}_{}", cfg.sweep.param, point.label), &scene, &estimate));
        out.push(point);
    }
    Ok(finish(Experiment::RankSweep, cfg, cfg.sweep.param.clone(), out, tables))
}

/// Operator of one trial of the configured layout, with `ris.elements` and
/// `ris.measurements` on every selected landmark.
pub fn scenario_operator(cfg: &ScenarioConfig, trial: u64) -> Result<SensingOperator> {
    let issues = cfg.validate(None);
    if !issues.is_empty() {
        return Err(Error::Config(issues));
    }
    let scene = roi_scene(cfg)?;
    let labels = cfg.landmark_labels();
    let setup = Setup {
        cfg,
        ctx: WaveContext::new(cfg.wave.frequency)?,
        landmarks: landmarks_at(cfg, cfg.layout.distance)?,
        specs: specs_for(&labels, &vec![cfg.ris.elements; labels.len()], &vec![cfg.ris.measurements; labels.len()]),
        scene: &scene,
    };
    setup.operator(trial)
}

/// Setup for `labels` sharing the topology totals evenly.
fn split_setup<'a>(cfg: &'a ScenarioConfig, scene: &'a SceneGrid, labels: &[char], distance: f64) -> Result<Setup<'a>> {
    let n = split_evenly(cfg.topology.total_elements, labels.len())?;
    let t = split_evenly(cfg.topology.total_measurements, labels.len())?;
    Ok(Setup {
        cfg,
        ctx: WaveContext::new(cfg.wave.frequency)?,
        landmarks: landmarks_at(cfg, distance)?,
        specs: specs_for(labels, &n, &t),
        scene,
    })
}

/// Reconstruction quality and conditioning for each deployment strategy at
/// fixed total element and measurement budgets.
pub fn run_topology_study(cfg: &ScenarioConfig) -> Result<ExperimentResult> {
    sweep_points(cfg, Experiment::Topology)?;
    let scene = roi_scene(cfg)?;
    let mut out = Vec::new();
    let mut tables = Vec::new();
    for &strategy in &cfg.topology.strategies {
        let setup = split_setup(cfg, &scene, strategy.landmarks(), cfg.layout.distance)?;
        let (point, estimate) = setup.run(strategy.name().to_string(), strategy.ordinal() as f64)?;
        tables.push(map_table(format!("map_strategy_{}", strategy.name()), &scene, &estimate));
        out.push(point);
    }
    Ok(finish(Experiment::Topology, cfg, "strategy".into(), out, tables))
}

/// The configured landmark selection moved to each swept distance.
pub fn run_distance_study(cfg: &ScenarioConfig) -> Result<ExperimentResult> {
    let points = sweep_points(cfg, Experiment::Distance)?;
    let scene = roi_scene(cfg)?;
    let labels = cfg.landmark_labels();
    let mut out = Vec::new();
    let mut tables = Vec::new();
    for (label, value) in points {
        let distance = if value.is_nan() { cfg.layout.distance } else { value };
        let setup = split_setup(cfg, &scene, &labels, distance)?;
        let (point, estimate) = setup.run(label, value)?;
        tables.push(map_table(format!("map_distance_{}", point.label), &scene, &estimate));
        out.push(point);
    }
    Ok(finish(Experiment::Distance, cfg, cfg.sweep.param.clone(), out, tables))
}
