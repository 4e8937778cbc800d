//! `risense`: batch front end for the experiment studies and the analysis
//! helpers. Results go to `--out` as CSV plus a provenance sidecar; failures
//! print one `error kind=...` line per problem on stderr.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use risense_core::harness::config::{self, ConfigIssue, ScenarioConfig};
use risense_core::harness::output::{format_float, spectrum_table, write_result, write_tables};
use risense_core::harness::{
    configured_bound, run_doa_study, run_experiment, run_prototype_study, scenario_operator, Experiment,
    ExperimentResult, Provenance, Table,
};
use risense_core::spectral::spectrum;
use risense_core::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Command {
    /// Two-source LS error against the cross-range bound.
    BoundSweep,
    /// Numeric rank and spectrum versus per-panel N or T.
    RankSweep,
    /// Deployment strategies at fixed total budget.
    Topology,
    /// Panel distance sweep.
    Distance,
    /// Two-panel magnitude-only DoA and localization.
    Prototype,
    /// Singular spectrum of one trial's operator.
    Spectrum,
    /// Cross-range error bound for the two-source section.
    Bounds,
    /// Per-panel DoA spectra of the prototype chamber.
    Doa,
}

impl Command {
    /// Preset the configuration starts from.
    fn preset(self) -> Experiment {
        match self {
            Command::BoundSweep | Command::Bounds => Experiment::BoundSweep,
            Command::RankSweep | Command::Spectrum => Experiment::RankSweep,
            Command::Topology => Experiment::Topology,
            Command::Distance => Experiment::Distance,
            Command::Prototype | Command::Doa => Experiment::Prototype,
        }
    }
}

/// Simulation and reconstruction studies for RIS backward sensing.
#[derive(Debug, Parser)]
#[command(name = "risense", version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// Scenario file (TOML). Without it the command's preset is used.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, value_name = "DIR", default_value = "results")]
    out: PathBuf,
    /// Master seed, replacing `master_seed` from the file.
    #[arg(long, value_name = "INT")]
    seed: Option<u64>,
    /// Dotted-key override such as `ris.elements=90`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Worker threads; 0 picks one per core.
    #[arg(long, value_name = "INT", default_value_t = 0)]
    threads: usize,
}

/// A failure with its exit status and stderr lines.
struct Failure {
    code: u8,
    lines: Vec<String>,
}

impl Failure {
    fn config(issues: &[ConfigIssue]) -> Self {
        Self {
            code: 2,
            lines: issues.iter().map(|i| format!("error kind=config key={} message={:?}", i.key, i.message)).collect(),
        }
    }

    fn other(message: impl std::fmt::Display) -> Self {
        Self { code: 1, lines: vec![format!("error kind=other message={:?}", message.to_string())] }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(issues) => Failure::config(&issues),
            Error::Numerical { rows, cols, cond, reason } => Failure {
                code: 3,
                lines: vec![format!("error kind=numerical rows={rows} cols={cols} cond={cond:e} message={reason:?}")],
            },
            other => Failure::other(other),
        }
    }
}

fn load_config(cli: &Cli) -> Result<ScenarioConfig, Failure> {
    let mut issues = Vec::new();
    let mut overrides = Vec::new();
    for spec in &cli.overrides {
        match config::parse_override(spec) {
            Ok(o) => overrides.push(o),
            Err(issue) => issues.push(issue),
        }
    }
    let document = match &cli.config {
        Some(path) => match std::fs::read_to_string(path) {
            Ok(text) => Some(text),
            Err(e) => {
                issues.push(ConfigIssue {
                    key: "--config".into(),
                    message: format!("cannot read {}: {e}", path.display()),
                });
                None
            }
        },
        None => None,
    };
    // Resolve even after earlier problems so every issue is reported at once.
    let resolved = config::resolve(Some(cli.command.preset()), document.as_deref(), &overrides);
    let mut cfg = match resolved {
        Ok(cfg) if issues.is_empty() => cfg,
        Ok(_) => return Err(Failure::config(&issues)),
        Err(more) => {
            issues.extend(more);
            return Err(Failure::config(&issues));
        }
    };
    if let Some(seed) = cli.seed {
        cfg.master_seed = seed;
    }
    Ok(cfg)
}

fn opt(name: &str, v: Option<f64>) -> String {
    v.map(|x| format!(" {name}={}", format_float(x))).unwrap_or_default()
}

fn print_points(result: &ExperimentResult) {
    for p in &result.points {
        let rank = p.common_rank().map(|r| format!(" rank={r}")).unwrap_or_default();
        println!(
            "{}={} rel_error={}{}{}{}{}{}",
            result.sweep_param,
            p.label,
            format_float(p.mean_rel_error()),
            opt("ssim", p.mean_ssim()),
            opt("bound", p.bound),
            rank,
            opt("cond_number", p.mean_cond_number()),
            opt("sigma_min", p.mean_sigma_min()),
        );
    }
}

fn report_written(out: &Path, count: usize) {
    println!("wrote {count} files to {}", out.display());
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let cfg = load_config(cli)?;
    rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global().map_err(Failure::other)?;
    let out = &cli.out;
    match cli.command {
        Command::Prototype => {
            let outcome = run_prototype_study(&cfg)?;
            let files = write_result(&outcome.result, out)?;
            for (k, panel) in ["left", "right"].iter().enumerate() {
                println!(
                    "doa panel={panel} truth_deg={} peak_deg={}",
                    outcome.doa_truth_deg[k], outcome.doa_peaks_deg[k]
                );
            }
            println!(
                "localization true_cell={} hits={}/{}",
                outcome.true_cell,
                outcome.localization_hits(),
                outcome.argmax_cells.len()
            );
            report_written(out, files.len());
        }
        Command::Doa => {
            let outcome = run_doa_study(&cfg)?;
            let files = write_tables(out, &outcome.tables, &Provenance::named("doa", &cfg))?;
            for (k, panel) in ["left", "right"].iter().enumerate() {
                println!("doa panel={panel} truth_deg={} peak_deg={}", outcome.truth_deg[k], outcome.peaks_deg[k]);
            }
            report_written(out, files.len());
        }
        Command::Spectrum => {
            let op = scenario_operator(&cfg, 0)?;
            let report = spectrum(&op, cfg.rank_tolerance)?;
            let table = spectrum_table("spectrum", &report.singular_values);
            let files = write_tables(out, &[table], &Provenance::named("spectrum", &cfg))?;
            println!(
                "rows={} cols={} rank={} rank_bound={} cond_number={} sigma_max={} sigma_min={}",
                op.rows(),
                op.cols(),
                report.numeric_rank,
                op.rank_bound()?,
                format_float(report.condition_number_full),
                format_float(report.sigma_max()),
                format_float(report.sigma_min()),
            );
            report_written(out, files.len());
        }
        Command::Bounds => {
            let bound = configured_bound(&cfg)?;
            let table = Table {
                name: "bounds".into(),
                header: vec!["variant".into(), "bound".into()],
                rows: vec![vec!["cross_range".into(), format_float(bound)]],
            };
            write_tables(out, &[table], &Provenance::named("bounds", &cfg))?;
            println!("bound={}", format_float(bound));
        }
        experiment_command => {
            let result = run_experiment(experiment_command.preset(), &cfg)?;
            let files = write_result(&result, out)?;
            print_points(&result);
            report_written(out, files.len());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            for line in &f.lines {
                eprintln!("{line}");
            }
            ExitCode::from(f.code)
        }
    }
}
