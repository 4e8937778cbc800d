//! Two-source LS error against the cross-range error bound.

use nalgebra::DVector;
use rayon::prelude::*;

use super::sweep_points;
use crate::em::{random_phase_config, DirectionAngles, ElementArray, WaveContext};
use crate::error::Result;
use crate::forward::{simulate_measurements_with, single_ris_operator, NoiseModel, ReceiverSpec};
use crate::harness::config::{ScenarioConfig, SnrUnit};
use crate::harness::seeds::{monte_carlo_seed, SeedStream};
use crate::harness::{Experiment, ExperimentResult, PointResult, Provenance, TrialRecord};
use crate::metrics::relative_error;
use crate::solvers::OperatorSvd;
use crate::spectral::{relative_error_bound, BoundInputs, BoundVariant};
use crate::C64;

/// Two-source parameters at one sweep point.
#[derive(Debug, Clone, Copy)]
struct Point {
    elements: usize,
    measurements: usize,
    spacing: f64,
    delta_cr: f64,
    theta_i: f64,
    snr: f64,
}

fn base_point(cfg: &ScenarioConfig) -> Point {
    let ts = &cfg.two_source;
    Point {
        elements: ts.elements,
        measurements: ts.measurements,
        spacing: ts.spacing,
        delta_cr: ts.delta_cr,
        theta_i: ts.theta_i_deg.to_radians(),
        snr: cfg.linear_snr(),
    }
}

fn apply(cfg: &ScenarioConfig, mut p: Point, param: &str, v: f64) -> Point {
    match param {
        "elements" => p.elements = v as usize,
        "measurements" => p.measurements = v as usize,
        "spacing" => p.spacing = v,
        "delta_cr" => p.delta_cr = v,
        "theta_i" => p.theta_i = v.to_radians(),
        "snr" => {
            p.snr = match cfg.snr_unit {
                SnrUnit::Linear => v,
                SnrUnit::Db => 10f64.powf(v / 10.0),
            }
        }
        _ => {}
    }
    p
}

fn bound_inputs(cfg: &ScenarioConfig, ctx: &WaveContext, p: &Point) -> BoundInputs {
    let ts = &cfg.two_source;
    BoundInputs {
        elements: p.elements,
        measurements: p.measurements,
        spacing: p.spacing,
        wavelength: ctx.wavelength(),
        receiver_distance: ts.receiver_distance,
        source_distance: ts.source_distance,
        tau_mag: ts.tau_scale * ctx.wavelength(),
        theta_i: p.theta_i,
        delta: p.delta_cr / ts.source_distance,
        delta_cr: p.delta_cr,
        snr: p.snr,
    }
}

fn run_trial(cfg: &ScenarioConfig, ctx: &WaveContext, p: &Point, trial: u64) -> Result<(TrialRecord, Vec<f64>)> {
    let ts = &cfg.two_source;
    let tau = C64::new(ts.tau_scale * ctx.wavelength(), 0.0);
    let array = ElementArray::uniform_linear("ris", p.elements, p.spacing, tau)?;
    let config =
        random_phase_config(p.measurements, p.elements, monte_carlo_seed(cfg.master_seed, trial, SeedStream::Phase))?;
    let receiver = ReceiverSpec::on_normal(ts.receiver_distance)?;
    let delta = p.delta_cr / ts.source_distance;
    let angles = [DirectionAngles::broadside(p.theta_i)?, DirectionAngles::broadside(p.theta_i + delta)?];
    let op = single_ris_operator(&array, &config, &receiver, &angles, ctx)?;
    let truth = DVector::from_element(2, C64::new(1.0, 0.0));
    let noise = NoiseModel { snr: p.snr, reference: cfg.noise_reference(), variance_override: None };
    let meas =
        simulate_measurements_with(&op, &truth, &noise, monte_carlo_seed(cfg.master_seed, trial, SeedStream::Noise))?;
    let svd = OperatorSvd::new(&op.matrix)?;
    let report = svd.spectrum(cfg.rank_tolerance)?;
    let sol = svd.solve_refined(&op.matrix, &meas.values, cfg.rank_tolerance)?;
    let record = TrialRecord {
        rel_error: relative_error(&sol.estimate, &truth)?,
        ssim: None,
        rank: Some(report.numeric_rank),
        cond_number: Some(report.condition_number),
        sigma_min: Some(report.sigma_min()),
    };
    Ok((record, report.singular_values))
}

/// Mean LS relative error and the cross-range bound at every sweep point of
/// the two-source scene.
pub fn run_bound_sweep(cfg: &ScenarioConfig) -> Result<ExperimentResult> {
    let points = sweep_points(cfg, Experiment::BoundSweep)?;
    let ctx = WaveContext::new(cfg.wave.frequency)?;
    let base = base_point(cfg);
    let mut out = Vec::with_capacity(points.len());
    for (label, value) in points {
        let p = apply(cfg, base, &cfg.sweep.param, value);
        let bound = relative_error_bound(BoundVariant::CrossRange, &bound_inputs(cfg, &ctx, &p))?;
        let trials: Vec<(TrialRecord, Vec<f64>)> =
            (0..cfg.trials as u64).into_par_iter().map(|t| run_trial(cfg, &ctx, &p, t)).collect::<Result<_>>()?;
        let spectrum = trials.first().map(|t| t.1.clone());
        out.push(PointResult {
            label,
            value,
            bound: Some(bound),
            trials: trials.into_iter().map(|t| t.0).collect(),
            spectrum,
        });
    }
    Ok(ExperimentResult {
        experiment: Experiment::BoundSweep,
        sweep_param: cfg.sweep.param.clone(),
        points: out,
        tables: Vec::new(),
        provenance: Provenance::for_config(Experiment::BoundSweep, cfg),
    })
}

/// The cross-range bound for the two-source section of `cfg`.
pub fn configured_bound(cfg: &ScenarioConfig) -> Result<f64> {
    let ctx = WaveContext::new(cfg.wave.frequency)?;
    relative_error_bound(BoundVariant::CrossRange, &bound_inputs(cfg, &ctx, &base_point(cfg)))
}
