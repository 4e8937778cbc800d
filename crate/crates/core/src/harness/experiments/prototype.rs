//! Two-panel magnitude-only study: per-panel DoA spectra and joint 2D
//! localization from stacked magnitudes.

use nalgebra::{DVector, Vector3};
use rayon::prelude::*;

use super::sweep_points;
use crate::em::{random_phase_config, DirectionAngles, ElementArray, Pose, WaveContext};
use crate::error::{invalid, Result};
use crate::forward::{
    multi_ris_stacked_operator, simulate_measurements_with, single_ris_operator, NoiseModel, Panel, ReceiverSpec,
    SceneGrid, SensingOperator,
};
use crate::harness::config::ScenarioConfig;
use crate::harness::layout::scaled_tau;
use crate::harness::output::format_float;
use crate::harness::seeds::{monte_carlo_seed, panel_seed, SeedStream};
use crate::harness::{Experiment, ExperimentResult, PointResult, Provenance, Table, TrialRecord};
use crate::metrics::{amplitude_ssim, doa_peaks, relative_error_mod_phase};
use crate::solvers::{phaseless_solve, resolve_conjugate_twin, OperatorSvd};
use crate::C64;

/// Prototype results beyond the CSV rows.
#[derive(Debug, Clone, PartialEq)]
pub struct PrototypeOutcome {
    pub result: ExperimentResult,
    /// Strongest DoA peak per panel, degrees (left, right).
    pub doa_peaks_deg: [f64; 2],
    pub doa_truth_deg: [f64; 2],
    pub true_cell: usize,
    /// `argmax |Ê|` of each localization run.
    pub argmax_cells: Vec<usize>,
}

impl PrototypeOutcome {
    pub fn localization_hits(&self) -> usize {
        self.argmax_cells.iter().filter(|&&c| c == self.true_cell).count()
    }
}

/// Panel whose normal is turned so `source` appears at `doa` (radians,
/// positive toward local `+x`).
fn facing_panel(center: Vector3<f64>, source: &Vector3<f64>, doa: f64) -> Result<Pose> {
    let to_source = source - center;
    let bearing = to_source.y.atan2(to_source.x);
    let normal_angle = bearing + doa;
    let (s, c) = normal_angle.sin_cos();
    Pose::from_axes(center, Vector3::new(s, -c, 0.0), Vector3::new(c, s, 0.0))
}

fn doa_grid_deg(cfg: &ScenarioConfig) -> Vec<f64> {
    let p = &cfg.prototype;
    let steps = ((p.grid_max_deg - p.grid_min_deg) / p.grid_step_deg + 1e-9).floor() as usize;
    (0..=steps).map(|i| p.grid_min_deg + i as f64 * p.grid_step_deg).collect()
}

fn magnitudes(op: &SensingOperator, truth: &DVector<C64>, cfg: &ScenarioConfig, seed: u64) -> Result<DVector<f64>> {
    let noise = NoiseModel { snr: cfg.linear_snr(), reference: cfg.noise_reference(), variance_override: None };
    Ok(simulate_measurements_with(op, truth, &noise, seed)?.magnitudes())
}

fn recover(op: &SensingOperator, y: &DVector<f64>, cfg: &ScenarioConfig, seed: u64) -> Result<DVector<C64>> {
    let sigma_max = OperatorSvd::new(&op.matrix)?.sigma_max();
    let est = phaseless_solve(op, y, &cfg.phaseless_params(sigma_max, seed))?;
    if cfg.prototype.resolve_twin {
        resolve_conjugate_twin(op, &est, cfg.rank_tolerance)
    } else {
        Ok(est)
    }
}

fn argmax(v: &DVector<C64>) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, z)| if z.norm() > best.1 { (i, z.norm()) } else { best })
        .0
}

/// Chamber layout shared by the DoA and localization halves.
struct Chamber {
    ctx: WaveContext,
    tau: C64,
    source: Vector3<f64>,
    truth_doa: [f64; 2],
    poses: [Pose; 2],
    receiver: ReceiverSpec,
}

const PANEL_IDS: [&str; 2] = ["left", "right"];

impl Chamber {
    fn new(cfg: &ScenarioConfig) -> Result<Self> {
        let p = &cfg.prototype;
        let ctx = WaveContext::new(cfg.wave.frequency)?;
        let tau = scaled_tau(&ctx, cfg.ris.tau_scale);
        let source = Vector3::new(p.source[0], p.source[1], 0.0);
        let truth_doa = [p.left_doa_deg, p.right_doa_deg];
        let centers = [Vector3::new(-p.separation / 2.0, 0.0, 0.0), Vector3::new(p.separation / 2.0, 0.0, 0.0)];
        let poses = [
            facing_panel(centers[0], &source, truth_doa[0].to_radians())?,
            facing_panel(centers[1], &source, truth_doa[1].to_radians())?,
        ];
        let receiver =
            ReceiverSpec::new(p.receiver_distance, DirectionAngles::broadside(p.receiver_angle_deg.to_radians())?)?;
        Ok(Self { ctx, tau, source, truth_doa, poses, receiver })
    }

    fn panel(&self, cfg: &ScenarioConfig, k: usize, trial: u64) -> Result<Panel> {
        let p = &cfg.prototype;
        Ok(Panel {
            array: ElementArray::centered_linear(PANEL_IDS[k], p.elements, p.spacing, self.tau)?,
            config: random_phase_config(p.measurements, p.elements, panel_seed(cfg.master_seed, trial, k as u64))?,
            receiver: self.receiver,
            pose: self.poses[k].clone(),
        })
    }
}

/// Per-panel DoA spectra and their strongest peaks.
#[derive(Debug, Clone, PartialEq)]
pub struct DoaOutcome {
    /// `doa_spectrum` and `doa_peaks`.
    pub tables: Vec<Table>,
    pub grid_deg: Vec<f64>,
    /// Recovered magnitude per grid angle, one vector per panel.
    pub spectra: [Vec<f64>; 2],
    /// Strongest peak per panel, degrees (left, right).
    pub peaks_deg: [f64; 2],
    pub truth_deg: [f64; 2],
}

fn doa_study(cfg: &ScenarioConfig, chamber: &Chamber) -> Result<DoaOutcome> {
    let grid_deg = doa_grid_deg(cfg);
    let grid: Vec<DirectionAngles> =
        grid_deg.iter().map(|d| DirectionAngles::broadside(d.to_radians())).collect::<Result<_>>()?;
    let point_scene =
        SceneGrid::cartesian(chamber.source, (1e-3, 1e-3), (1, 1), DVector::from_element(1, C64::new(1.0, 0.0)))?;
    let spectra: Vec<Vec<f64>> = (0..2usize)
        .into_par_iter()
        .map(|k| -> Result<Vec<f64>> {
            let panel = chamber.panel(cfg, k, 0)?;
            let field = multi_ris_stacked_operator(std::slice::from_ref(&panel), &point_scene, &chamber.ctx)?;
            let y = magnitudes(
                &field,
                point_scene.amplitudes(),
                cfg,
                monte_carlo_seed(cfg.master_seed, k as u64, SeedStream::Noise),
            )?;
            let op = single_ris_operator(&panel.array, &panel.config, &chamber.receiver, &grid, &chamber.ctx)?;
            let est = recover(&op, &y, cfg, monte_carlo_seed(cfg.master_seed, k as u64, SeedStream::Init))?;
            Ok(est.iter().map(|z| z.norm()).collect())
        })
        .collect::<Result<_>>()?;
    let mut peaks = [f64::NAN; 2];
    for k in 0..2 {
        if let Some(&(angle, _)) = doa_peaks(&grid_deg, &spectra[k], 1)?.peaks.first() {
            peaks[k] = angle;
        }
    }
    let tables = vec![
        Table {
            name: "doa_spectrum".into(),
            header: ["angle_deg", "left", "right"].map(String::from).to_vec(),
            rows: grid_deg
                .iter()
                .enumerate()
                .map(|(i, a)| vec![format_float(*a), format_float(spectra[0][i]), format_float(spectra[1][i])])
                .collect(),
        },
        Table {
            name: "doa_peaks".into(),
            header: ["panel", "truth_deg", "peak_deg"].map(String::from).to_vec(),
            rows: (0..2)
                .map(|k| vec![PANEL_IDS[k].to_string(), format_float(chamber.truth_doa[k]), format_float(peaks[k])])
                .collect(),
        },
    ];
    let [left, right]: [Vec<f64>; 2] = spectra.try_into().expect("two panels");
    Ok(DoaOutcome { tables, grid_deg, spectra: [left, right], peaks_deg: peaks, truth_deg: chamber.truth_doa })
}

/// DoA spectra of both prototype panels from simulated magnitudes.
pub fn run_doa_study(cfg: &ScenarioConfig) -> Result<DoaOutcome> {
    sweep_points(cfg, Experiment::Prototype)?;
    doa_study(cfg, &Chamber::new(cfg)?)
}

/// DoA spectra of both panels and repeated joint localization runs.
pub fn run_prototype_study(cfg: &ScenarioConfig) -> Result<PrototypeOutcome> {
    sweep_points(cfg, Experiment::Prototype)?;
    let p = &cfg.prototype;
    let chamber = Chamber::new(cfg)?;
    let roi = SceneGrid::cartesian(
        Vector3::new(p.roi_center[0], p.roi_center[1], 0.0),
        (p.roi_extent[0], p.roi_extent[1]),
        (p.roi_cells[0], p.roi_cells[1]),
        DVector::zeros(p.roi_cells[0] * p.roi_cells[1]),
    )?;
    let true_cell = roi
        .cell_containing(&chamber.source)
        .ok_or_else(|| invalid("prototype.source", "source lies outside the RoI"))?;
    let doa = doa_study(cfg, &chamber)?;

    // Joint localization: both panels stacked on the Cartesian RoI.
    let truth = DVector::from_fn(roi.cell_count(), |m, _| C64::new(f64::from(u8::from(m == true_cell)), 0.0));
    let runs: Vec<(TrialRecord, DVector<C64>)> = (0..p.runs as u64)
        .into_par_iter()
        .map(|run| -> Result<(TrialRecord, DVector<C64>)> {
            let panels = [chamber.panel(cfg, 0, run)?, chamber.panel(cfg, 1, run)?];
            let op = multi_ris_stacked_operator(&panels, &roi, &chamber.ctx)?;
            let y = magnitudes(&op, &truth, cfg, monte_carlo_seed(cfg.master_seed, run, SeedStream::Noise))?;
            let (solve_op, target) = if p.gain_equalized {
                let (unit, norms) = op.column_normalized()?;
                let scaled = DVector::from_fn(truth.len(), |m, _| truth[m] * norms[m]);
                (unit, scaled)
            } else {
                (op, truth.clone())
            };
            let est = recover(&solve_op, &y, cfg, monte_carlo_seed(cfg.master_seed, run, SeedStream::Init))?;
            let record = TrialRecord {
                rel_error: relative_error_mod_phase(&est, &target)?,
                ssim: Some(amplitude_ssim(&est, &target)?),
                rank: None,
                cond_number: None,
                sigma_min: None,
            };
            Ok((record, est))
        })
        .collect::<Result<_>>()?;
    let argmax_cells: Vec<usize> = runs.iter().map(|(_, e)| argmax(e)).collect();

    let mut tables = doa.tables;
    tables.extend([
        Table {
            name: "localization".into(),
            header: ["run", "true_cell", "argmax_cell", "hit"].map(String::from).to_vec(),
            rows: argmax_cells
                .iter()
                .enumerate()
                .map(|(r, &c)| {
                    vec![r.to_string(), true_cell.to_string(), c.to_string(), u8::from(c == true_cell).to_string()]
                })
                .collect(),
        },
        Table {
            name: "localization_map".into(),
            header: ["ix", "iy", "x", "y", "amplitude"].map(String::from).to_vec(),
            rows: roi
                .centers()
                .unwrap_or_default()
                .iter()
                .enumerate()
                .map(|(m, c)| {
                    vec![
                        (m % p.roi_cells[0]).to_string(),
                        (m / p.roi_cells[0]).to_string(),
                        format_float(c.x),
                        format_float(c.y),
                        format_float(runs[0].1[m].norm()),
                    ]
                })
                .collect(),
        },
    ]);

    let result = ExperimentResult {
        experiment: Experiment::Prototype,
        sweep_param: "none".into(),
        points: vec![PointResult {
            label: "localization".into(),
            value: f64::NAN,
            bound: None,
            trials: runs.into_iter().map(|(r, _)| r).collect(),
            spectrum: None,
        }],
        tables,
        provenance: Provenance::for_config(Experiment::Prototype, cfg),
    };
    Ok(PrototypeOutcome { result, doa_peaks_deg: doa.peaks_deg, doa_truth_deg: doa.truth_deg, true_cell, argmax_cells })
}
