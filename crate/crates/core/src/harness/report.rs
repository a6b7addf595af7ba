//! CSV and sidecar output.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::ExperimentConfig;
use super::experiments::{ExperimentOutcome, ReportRow};
use crate::error::Result;

pub const CSV_HEADER: &str =
    "step,ode_time,primary_residual,dist_to_set,subspace_error,window_sup_distance";

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

pub fn render_csv(rows: &[ReportRow]) -> String {
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{:e},{},{},{},{}",
            r.step,
            r.ode_time,
            cell(r.primary_residual),
            cell(r.dist_to_set),
            cell(r.subspace_error),
            cell(r.window_sup_distance)
        );
    }
    out
}

/// `<output>.meta.json`
pub fn sidecar_path(output: &Path) -> PathBuf {
    let mut name = output.as_os_str().to_owned();
    name.push(".meta.json");
    PathBuf::from(name)
}

#[derive(Debug, Serialize)]
pub struct Sidecar<'a> {
    pub experiment: &'a str,
    pub config_sha256: String,
    pub seed: u64,
    pub n_steps: usize,
    pub library_version: &'static str,
    pub summary: &'a BTreeMap<String, f64>,
}

/// Writes the CSV and its sidecar, creating parent directories as needed.
pub fn write_outputs(cfg: &ExperimentConfig, outcome: &ExperimentOutcome) -> Result<()> {
    if let Some(dir) = cfg.output_path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    std::fs::write(&cfg.output_path, render_csv(&outcome.rows))?;
    let meta = Sidecar {
        experiment: cfg.experiment.name(),
        config_sha256: cfg.hash(),
        seed: cfg.seed,
        n_steps: cfg.n_steps,
        library_version: env!("CARGO_PKG_VERSION"),
        summary: &outcome.summary,
    };
    let json = serde_json::to_string_pretty(&meta).expect("sidecar serialises");
    std::fs::write(sidecar_path(&cfg.output_path), json + "\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_cells_and_header() {
        let rows = vec![ReportRow {
            step: 3,
            ode_time: 0.25,
            primary_residual: Some(1e-7),
            dist_to_set: None,
            subspace_error: None,
            window_sup_distance: Some(0.5),
        }];
        let csv = render_csv(&rows);
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some(CSV_HEADER));
        assert_eq!(lines.next(), Some("3,2.5e-1,1e-7,,,5e-1"));
    }

    #[test]
    fn sidecar_name() {
        assert_eq!(sidecar_path(Path::new("out/run.csv")), PathBuf::from("out/run.csv.meta.json"));
    }
}
