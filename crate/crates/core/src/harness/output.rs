//! CSV and provenance writers. Output depends only on the result contents,
//! so re-running an experiment rewrites byte-identical files.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::harness::{ExperimentResult, PointResult, Provenance, Table};

pub const RESULT_HEADER: [&str; 9] =
    ["sweep_param", "sweep_value", "trial", "rel_error", "ssim", "bound", "rank", "cond_number", "sigma_min"];

/// 17 significant digits.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

fn opt_float(v: Option<f64>) -> String {
    v.map(format_float).unwrap_or_default()
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io { path: path.to_path_buf(), source }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> Error + '_ {
    move |e| Error::Io { path: path.to_path_buf(), source: std::io::Error::other(e) }
}

fn write_rows<I, R>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w =
        csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(path).map_err(csv_err(path))?;
    w.write_record(header).map_err(csv_err(path))?;
    for row in rows {
        w.write_record(row.into_iter().collect::<Vec<_>>()).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

fn trial_rows<'a>(param: &'a str, p: &'a PointResult) -> impl Iterator<Item = Vec<String>> + 'a {
    p.trials.iter().enumerate().map(move |(i, t)| {
        vec![
            param.to_string(),
            p.label.clone(),
            i.to_string(),
            format_float(t.rel_error),
            opt_float(t.ssim),
            opt_float(p.bound),
            t.rank.map(|r| r.to_string()).unwrap_or_default(),
            opt_float(t.cond_number),
            opt_float(t.sigma_min),
        ]
    })
}

fn summary_row(param: &str, p: &PointResult) -> Vec<String> {
    let rank = match p.common_rank() {
        Some(r) => r.to_string(),
        None => opt_float(p.mean_rank()),
    };
    vec![
        param.to_string(),
        p.label.clone(),
        "mean".to_string(),
        format_float(p.mean_rel_error()),
        opt_float(p.mean_ssim()),
        opt_float(p.bound),
        rank,
        opt_float(p.mean_cond_number()),
        opt_float(p.mean_sigma_min()),
    ]
}

fn sanitize(label: &str) -> String {
    label.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' }).collect()
}

/// Writes one extra table as `<name>.csv`.
pub fn write_table(dir: &Path, table: &Table) -> Result<PathBuf> {
    let path = dir.join(format!("{}.csv", table.name));
    let header: Vec<&str> = table.header.iter().map(String::as_str).collect();
    write_rows(&path, &header, table.rows.iter().cloned())?;
    Ok(path)
}

/// Writes the experiment CSV, `summary.csv`, spectra, extra tables and
/// `provenance.json` into `dir`. Returns the written paths.
pub fn write_result(result: &ExperimentResult, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut written = Vec::new();
    let param = result.sweep_param.as_str();

    let main = dir.join(format!("{}.csv", result.experiment.name()));
    write_rows(&main, &RESULT_HEADER, result.points.iter().flat_map(|p| trial_rows(param, p)))?;
    written.push(main);

    let summary = dir.join("summary.csv");
    write_rows(&summary, &RESULT_HEADER, result.points.iter().map(|p| summary_row(param, p)))?;
    written.push(summary);

    for p in &result.points {
        if let Some(sv) = &p.spectrum {
            let path = dir.join(format!("spectrum_{}_{}.csv", sanitize(param), sanitize(&p.label)));
            write_rows(
                &path,
                &["index", "sigma"],
                sv.iter().enumerate().map(|(i, s)| vec![i.to_string(), format_float(*s)]),
            )?;
            written.push(path);
        }
    }
    written.extend(write_tables(dir, &result.tables, &result.provenance)?);
    Ok(written)
}

/// Writes free-standing tables plus `provenance.json` into `dir`.
pub fn write_tables(dir: &Path, tables: &[Table], provenance: &Provenance) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut written = Vec::new();
    for table in tables {
        written.push(write_table(dir, table)?);
    }
    let prov = dir.join("provenance.json");
    let mut text = serde_json::to_string_pretty(provenance).expect("provenance serialises");
    text.push('\n');
    fs::write(&prov, text).map_err(io_err(&prov))?;
    written.push(prov);
    Ok(written)
}

/// Spectrum table `index,sigma`, values in the given order.
pub fn spectrum_table(name: impl Into<String>, values: &[f64]) -> Table {
    Table {
        name: name.into(),
        header: vec!["index".into(), "sigma".into()],
        rows: values.iter().enumerate().map(|(i, s)| vec![i.to_string(), format_float(*s)]).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{Experiment, Provenance, TrialRecord};

    fn sample() -> ExperimentResult {
        let trial = |e: f64, r: usize| TrialRecord {
            rel_error: e,
            ssim: Some(0.5),
            rank: Some(r),
            cond_number: None,
            sigma_min: Some(1.0),
        };
        ExperimentResult {
            experiment: Experiment::RankSweep,
            sweep_param: "measurements".into(),
            points: vec![PointResult {
                label: "50".into(),
                value: 50.0,
                bound: None,
                trials: vec![trial(0.25, 200), trial(0.75, 200)],
                spectrum: Some(vec![3.0, 1.0]),
            }],
            tables: vec![],
            provenance: Provenance {
                experiment: "rank-sweep".into(),
                config_sha256: "00".into(),
                master_seed: 1,
                tool_version: "0".into(),
                seed_scheme: "x".into(),
            },
        }
    }

    #[test]
    fn writes_expected_files() {
        let dir = tempfile::tempdir().unwrap();
        let files = write_result(&sample(), dir.path()).unwrap();
        assert_eq!(files.len(), 4);
        let main = fs::read_to_string(dir.path().join("rank-sweep.csv")).unwrap();
        let mut lines = main.lines();
        assert_eq!(lines.next().unwrap(), RESULT_HEADER.join(","));
        assert_eq!(
            lines.next().unwrap(),
            "measurements,50,0,2.5000000000000000e-1,5.0000000000000000e-1,,200,,1.0000000000000000e0"
        );
        let summary = fs::read_to_string(dir.path().join("summary.csv")).unwrap();
        assert!(summary.lines().nth(1).unwrap().starts_with("measurements,50,mean,5.0000000000000000e-1"));
        assert!(summary.contains(",200,"));
        let spec = fs::read_to_string(dir.path().join("spectrum_measurements_50.csv")).unwrap();
        assert_eq!(spec, "index,sigma\n0,3.0000000000000000e0\n1,1.0000000000000000e0\n");
    }

    #[test]
    fn seventeen_significant_digits() {
        let s = format_float(std::f64::consts::PI);
        let mantissa = s.split('e').next().unwrap().replace(['.', '-'], "");
        assert_eq!(mantissa.len(), 17);
        assert_eq!(s.parse::<f64>().unwrap(), std::f64::consts::PI);
    }
}
