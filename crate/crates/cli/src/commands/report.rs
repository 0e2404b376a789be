//! Seed-averaged tables from the metric files other commands wrote.

use std::collections::BTreeMap;
use std::path::Path;

use accsurf_core::metrics::MetricRow;
use serde::Serialize;

use super::{out_dir, write_rows};
use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};

const SOURCES: [&str; 2] = ["estimate", "explore"];

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SummaryRow {
    pub source: String,
    pub world: String,
    pub method: String,
    pub budget: usize,
    pub seeds: usize,
    pub macro_mse_x100: f64,
    pub macro_mse_sd: f64,
    pub micro_mse_x100: f64,
    pub worst_mse_x100: f64,
    pub worst_mse_sd: f64,
    pub infreq_mse_x100: f64,
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (m, 0.0);
    }
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, var.sqrt())
}

fn read_rows(path: &Path) -> CliResult<Vec<MetricRow>> {
    let csv_err = |source| CliError::Csv {
        path: path.display().to_string(),
        source,
    };
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    r.deserialize().collect::<Result<_, _>>().map_err(csv_err)
}

/// Groups rows by (world, method, budget) in sorted order.
pub fn summarize(source: &str, rows: &[MetricRow]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(&str, &str, usize), Vec<&MetricRow>> = BTreeMap::new();
    for r in rows {
        groups
            .entry((&r.world, &r.method, r.budget))
            .or_default()
            .push(r);
    }
    groups
        .into_iter()
        .map(|((world, method, budget), g)| {
            let col =
                |f: fn(&MetricRow) -> f64| mean_sd(&g.iter().map(|r| f(r)).collect::<Vec<_>>());
            let (macro_m, macro_sd) = col(|r| r.macro_mse_x100);
            let (worst_m, worst_sd) = col(|r| r.worst_mse_x100);
            SummaryRow {
                source: source.to_string(),
                world: world.to_string(),
                method: method.to_string(),
                budget,
                seeds: g.len(),
                macro_mse_x100: macro_m,
                macro_mse_sd: macro_sd,
                micro_mse_x100: col(|r| r.micro_mse_x100).0,
                worst_mse_x100: worst_m,
                worst_mse_sd: worst_sd,
                infreq_mse_x100: col(|r| r.infreq_mse_x100).0,
            }
        })
        .collect()
}

/// Reads whichever of `estimate/metrics.csv` and `explore/metrics.csv`
/// exist and writes `report/report.csv`.
pub fn report(cfg: &ExperimentConfig) -> CliResult<Vec<SummaryRow>> {
    let mut out = Vec::new();
    for source in SOURCES {
        let path = cfg.output_dir.join(source).join("metrics.csv");
        if path.exists() {
            out.extend(summarize(source, &read_rows(&path)?));
        }
    }
    if out.is_empty() {
        return Err(CliError::Config(format!(
            "no metrics.csv under {}; run estimate or explore first",
            cfg.output_dir.display()
        )));
    }
    let dir = out_dir(cfg, "report")?;
    write_rows(&dir.join("report.csv"), &out)?;
    Ok(out)
}
