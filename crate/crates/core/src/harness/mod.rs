//! Scenario construction and the experiment runners.
//!
//! Trials run in parallel on the ambient rayon pool. Every random draw is
//! keyed by `(master_seed, trial, stream)` and results are assembled by
//! index, so thread count never changes the output.

pub mod config;
pub mod experiments;
pub mod layout;
pub mod output;
pub mod seeds;

use std::fmt;

pub use experiments::{
    configured_bound, run_bound_sweep, run_distance_study, run_doa_study, run_prototype_study, run_rank_sweep,
    run_topology_study, scenario_operator, DoaOutcome, PrototypeOutcome,
};

/// The experiment studies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Experiment {
    BoundSweep,
    RankSweep,
    Topology,
    Distance,
    Prototype,
}

impl Experiment {
    pub const ALL: [Experiment; 5] = [
        Experiment::BoundSweep,
        Experiment::RankSweep,
        Experiment::Topology,
        Experiment::Distance,
        Experiment::Prototype,
    ];

    /// File stem and CLI name.
    pub fn name(self) -> &'static str {
        match self {
            Experiment::BoundSweep => "bound-sweep",
            Experiment::RankSweep => "rank-sweep",
            Experiment::Topology => "topology",
            Experiment::Distance => "distance",
            Experiment::Prototype => "prototype",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Per-trial numbers at one sweep point.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub rel_error: f64,
    pub ssim: Option<f64>,
    pub rank: Option<usize>,
    pub cond_number: Option<f64>,
    pub sigma_min: Option<f64>,
}

/// Everything measured at one sweep point.
#[derive(Debug, Clone, PartialEq)]
pub struct PointResult {
    /// Text written to the `sweep_value` column.
    pub label: String,
    pub value: f64,
    pub bound: Option<f64>,
    pub trials: Vec<TrialRecord>,
    /// Sorted singular values of the first trial's operator, if recorded.
    pub spectrum: Option<Vec<f64>>,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

impl PointResult {
    pub fn mean_rel_error(&self) -> f64 {
        mean(self.trials.iter().map(|t| t.rel_error)).unwrap_or(f64::NAN)
    }

    pub fn mean_ssim(&self) -> Option<f64> {
        mean(self.trials.iter().filter_map(|t| t.ssim))
    }

    pub fn mean_cond_number(&self) -> Option<f64> {
        mean(self.trials.iter().filter_map(|t| t.cond_number))
    }

    pub fn mean_sigma_min(&self) -> Option<f64> {
        mean(self.trials.iter().filter_map(|t| t.sigma_min))
    }

    pub fn mean_rank(&self) -> Option<f64> {
        mean(self.trials.iter().filter_map(|t| t.rank.map(|r| r as f64)))
    }

    /// The rank if every trial agrees on it.
    pub fn common_rank(&self) -> Option<usize> {
        let first = self.trials.first()?.rank?;
        self.trials.iter().all(|t| t.rank == Some(first)).then_some(first)
    }
}

/// Extra plot-ready table written next to the main CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

/// Provenance sidecar contents.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub struct Provenance {
    pub experiment: String,
    pub config_sha256: String,
    pub master_seed: u64,
    pub tool_version: String,
    pub seed_scheme: String,
}

impl Provenance {
    pub fn for_config(experiment: Experiment, cfg: &config::ScenarioConfig) -> Self {
        Self::named(experiment.name(), cfg)
    }

    /// Provenance for a run that is not one of the [`Experiment`] studies.
    pub fn named(name: &str, cfg: &config::ScenarioConfig) -> Self {
        Self {
            experiment: name.to_string(),
            config_sha256: cfg.hash(),
            master_seed: cfg.master_seed,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            seed_scheme: "splitmix64(master, trial*4+stream); chacha8 per draw".to_string(),
        }
    }
}

/// Output of one experiment run.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub experiment: Experiment,
    pub sweep_param: String,
    pub points: Vec<PointResult>,
    pub tables: Vec<Table>,
    pub provenance: Provenance,
}

impl ExperimentResult {
    pub fn point(&self, label: &str) -> Option<&PointResult> {
        self.points.iter().find(|p| p.label == label)
    }
}

/// Runs an experiment by kind.
pub fn run_experiment(experiment: Experiment, cfg: &config::ScenarioConfig) -> crate::Result<ExperimentResult> {
    match experiment {
        Experiment::BoundSweep => run_bound_sweep(cfg),
        Experiment::RankSweep => run_rank_sweep(cfg),
        Experiment::Topology => run_topology_study(cfg),
        Experiment::Distance => run_distance_study(cfg),
        Experiment::Prototype => run_prototype_study(cfg).map(|o| o.result),
    }
}
