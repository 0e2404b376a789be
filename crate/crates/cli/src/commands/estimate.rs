//! Fixed labeled budget, no exploration.

use accsurf_core::estimators::{fit_estimator, EstimatorKind, PosteriorSummary};
use accsurf_core::metrics::{MetricRow, MetricSuite};
use accsurf_core::space::{ArmCounts, GoldSurface};
use accsurf_core::world::Instance;

use super::{
    core_err, out_dir, par_cells, pool_tag, tag, world, write_config, write_rows, write_text,
    RunOptions,
};
use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};

#[derive(Clone, Debug)]
pub struct EstimateCell {
    pub method: EstimatorKind,
    pub seed: u64,
    pub summary: PosteriorSummary,
    pub metrics: MetricSuite,
}

#[derive(Clone, Debug)]
pub struct EstimateReport {
    pub gold: GoldSurface,
    pub cells: Vec<EstimateCell>,
}

impl EstimateReport {
    /// Seed mean of `f` for one method.
    pub fn mean_of(&self, method: EstimatorKind, f: impl Fn(&MetricSuite) -> f64) -> f64 {
        let v: Vec<f64> = self
            .cells
            .iter()
            .filter(|c| c.method == method)
            .map(|c| f(&c.metrics))
            .collect();
        v.iter().sum::<f64>() / v.len() as f64
    }

    pub fn rows(&self, world: &str, budget: usize) -> Vec<MetricRow> {
        self.cells
            .iter()
            .map(|c| MetricRow::new(world, c.method.name(), budget, c.seed, &c.metrics))
            .collect()
    }
}

/// Warm start at the observed accuracy, then every labeled instance at its
/// true arm.
pub fn labeled_counts(
    labeled: &[Instance],
    arms: usize,
    strength: f64,
) -> accsurf_core::Result<ArmCounts> {
    let kappa = labeled.iter().filter(|x| x.correct).count() as f64 / labeled.len() as f64;
    let mut counts = ArmCounts::warm_start(arms, kappa, strength)?;
    for x in labeled {
        counts.add_observation(x.true_arm, x.correct);
    }
    Ok(counts)
}

pub fn estimate(cfg: &ExperimentConfig, opts: &RunOptions) -> CliResult<EstimateReport> {
    let w = world(cfg)?;
    let gold = w.gold(&w.sample_pool(cfg.data.eval_size, tag::EVAL));
    let cells: Vec<(EstimatorKind, u64)> = cfg
        .seeds
        .iter()
        .flat_map(|&s| cfg.estimators.iter().map(move |&k| (k, s)))
        .collect();
    let results = par_cells(opts.jobs, &cells, |&(method, seed)| {
        let cell = format!("estimate {method} seed {seed}");
        let err = core_err(&cell);
        let labeled = w.sample_pool(cfg.data.labeled, pool_tag(seed, tag::LABELED));
        let counts =
            labeled_counts(&labeled, w.space.arm_count(), cfg.prior_strength).map_err(&err)?;
        let model = fit_estimator(method, &counts, &w.space, &cfg.gp, seed).map_err(&err)?;
        let summary = model.summary().map_err(&err)?;
        let metrics = MetricSuite::compute(&summary.mean, &gold).map_err(&err)?;
        Ok(EstimateCell {
            method,
            seed,
            summary,
            metrics,
        })
    })?;
    let report = EstimateReport {
        gold,
        cells: results,
    };

    let dir = out_dir(cfg, "estimate")?;
    write_config(cfg, &dir)?;
    write_text(
        &dir.join("world.json"),
        &w.to_json().map_err(|e| CliError::in_cell("world", e))?,
    )?;
    let gold_path = dir.join("gold.csv");
    report
        .gold
        .write_csv(&w.space, super::create(&gold_path)?)
        .map_err(|e| CliError::in_cell("gold", e))?;
    write_rows(
        &dir.join("metrics.csv"),
        report.rows(&cfg.name, cfg.data.labeled),
    )?;
    Ok(report)
}
