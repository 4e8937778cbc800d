//! Experiment runners.

mod bound;
mod multi;
mod prototype;

pub use bound::{configured_bound, run_bound_sweep};
pub use multi::{run_distance_study, run_rank_sweep, run_topology_study, scenario_operator};
pub use prototype::{run_doa_study, run_prototype_study, DoaOutcome, PrototypeOutcome};

use crate::error::{Error, Result};
use crate::harness::config::{sweep_params, ConfigIssue, ScenarioConfig};
use crate::harness::Experiment;

/// Sweep points as `(label, value)`; a single unlabelled point when the
/// configuration has no sweep.
fn sweep_points(cfg: &ScenarioConfig, experiment: Experiment) -> Result<Vec<(String, f64)>> {
    let issues = cfg.validate(Some(experiment));
    if !issues.is_empty() {
        return Err(Error::Config(issues));
    }
    if cfg.sweep.param == "none" {
        return Ok(vec![("none".into(), f64::NAN)]);
    }
    if !sweep_params(experiment).contains(&cfg.sweep.param.as_str()) {
        return Err(Error::Config(vec![ConfigIssue {
            key: "sweep.param".into(),
            message: format!("unsupported for {experiment}"),
        }]));
    }
    Ok(cfg.sweep.values.iter().map(|&v| (format_value(v), v)).collect())
}

/// Shortest round-trip text for a sweep value.
fn format_value(v: f64) -> String {
    format!("{v}")
}
