use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use risense_core::harness::config::ScenarioConfig;
use risense_core::harness::output::write_result;
use risense_core::harness::{run_experiment, Experiment};

fn written(experiment: Experiment, cfg: &ScenarioConfig, threads: usize, dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
    let result = pool.install(|| run_experiment(experiment, cfg)).unwrap();
    write_result(&result, dir).unwrap();
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect()
}

fn assert_stable(experiment: Experiment, cfg: &ScenarioConfig) {
    let tmp = tempfile::tempdir().unwrap();
    let first = written(experiment, cfg, 3, &tmp.path().join("a"));
    assert!(first.contains_key("provenance.json"));
    assert_eq!(written(experiment, cfg, 3, &tmp.path().join("b")), first, "rerun differs");
    assert_eq!(written(experiment, cfg, 1, &tmp.path().join("c")), first, "serial run differs");
}

#[test]
fn bound_sweep_output_is_byte_stable() {
    let mut cfg = ScenarioConfig::preset(Experiment::BoundSweep);
    cfg.trials = 12;
    cfg.sweep.values = vec![1000.0, 4000.0];
    assert_stable(Experiment::BoundSweep, &cfg);
}

#[test]
fn rank_sweep_output_is_byte_stable() {
    let mut cfg = ScenarioConfig::preset(Experiment::RankSweep);
    cfg.trials = 3;
    cfg.roi.cells = [10, 10];
    cfg.ris.elements = 40;
    cfg.sweep.values = vec![20.0, 30.0];
    assert_stable(Experiment::RankSweep, &cfg);
}

#[test]
fn master_seed_changes_the_draws() {
    let mut cfg = ScenarioConfig::preset(Experiment::BoundSweep);
    cfg.trials = 4;
    cfg.sweep.values = vec![1000.0];
    let a = run_experiment(Experiment::BoundSweep, &cfg).unwrap();
    cfg.master_seed += 1;
    let b = run_experiment(Experiment::BoundSweep, &cfg).unwrap();
    assert_ne!(a.points[0].mean_rel_error(), b.points[0].mean_rel_error());
    assert_eq!(a.points[0].bound, b.points[0].bound);
}
