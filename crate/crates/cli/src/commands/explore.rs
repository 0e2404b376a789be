//! Active exploration runs with per-round metric curves.

use std::path::Path;

use accsurf_core::calibration::fit_calibration;
use accsurf_core::estimators::EstimatorKind;
use accsurf_core::exploration::{
    write_log_jsonl, ExplorationConfig, ExplorationContext, Explorer, Strategy,
};
use accsurf_core::metrics::{MetricRow, REPORT_SCALE};
use accsurf_core::space::GoldSurface;
use accsurf_core::world::Instance;
use serde::Serialize;

use super::{
    core_err, create, out_dir, par_cells, pool_tag, tag, world, write_config, write_rows,
    write_text, RunOptions,
};
use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};

struct SeedSetup {
    seed_data: Vec<Instance>,
    pool: Vec<Instance>,
    affiliations: Vec<Vec<f64>>,
    gold: GoldSurface,
}

#[derive(Clone, Debug)]
pub struct ExploreRun {
    pub seed: u64,
    pub method: EstimatorKind,
    pub strategy: Strategy,
    pub explorer: Explorer,
}

impl ExploreRun {
    pub fn label(&self) -> String {
        format!("{}-{}", self.method, strategy_name(self.strategy))
    }

    pub fn final_macro_mse(&self) -> f64 {
        self.explorer
            .log
            .last()
            .map_or(f64::NAN, |r| r.metrics.macro_mse)
    }
}

fn strategy_name(s: Strategy) -> &'static str {
    match s {
        Strategy::Variance => "variance",
        Strategy::Random => "random",
    }
}

#[derive(Serialize)]
struct CurveRow {
    method: String,
    strategy: &'static str,
    seed: u64,
    round: usize,
    labels_used: usize,
    macro_mse_x100: f64,
    micro_mse_x100: f64,
    worst_mse_x100: f64,
    infreq_mse_x100: f64,
}

fn cell_stem(seed: u64, method: EstimatorKind, strategy: Strategy) -> String {
    format!("seed{seed}_{}_{}", method.name(), strategy_name(strategy))
}

fn save_state(dir: &Path, stem: &str, ex: &Explorer) -> CliResult<()> {
    let json = ex.to_json().map_err(|e| CliError::in_cell(stem, e))?;
    write_text(&dir.join(format!("{stem}.state.json")), &json)?;
    let path = dir.join(format!("{stem}.jsonl"));
    write_log_jsonl(&ex.log, create(&path)?).map_err(|e| CliError::in_cell(stem, e))
}

fn load_state(dir: &Path, stem: &str, config: &ExplorationConfig) -> CliResult<Option<Explorer>> {
    let path = dir.join(format!("{stem}.state.json"));
    if !path.exists() {
        return Ok(None);
    }
    let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
    let ex = Explorer::from_json(&text).map_err(|e| CliError::in_cell(stem, e))?;
    if &ex.config != config {
        return Err(CliError::Config(format!(
            "{} was written with a different exploration config",
            path.display()
        )));
    }
    Ok(Some(ex))
}

pub fn explore(cfg: &ExperimentConfig, opts: &RunOptions) -> CliResult<Vec<ExploreRun>> {
    let w = world(cfg)?;
    let dir = out_dir(cfg, "explore")?;
    write_config(cfg, &dir)?;
    let mode = cfg.exploration.calibration;
    let setups = par_cells(opts.jobs, &cfg.seeds, |&seed| {
        let cell = format!("explore setup seed {seed}");
        let err = core_err(&cell);
        let seed_data = w.sample_pool(cfg.data.seed_size, pool_tag(seed, tag::SEED_SET));
        let pool = w.sample_pool(cfg.data.pool_size, pool_tag(seed, tag::POOL));
        let cal = fit_calibration(&seed_data, &pool, &w.space, mode, &cfg.calibration, seed)
            .map_err(&err)?;
        let affiliations = cal.affiliations(&pool).map_err(&err)?;
        let gold = w.gold(&pool);
        Ok(SeedSetup {
            seed_data,
            pool,
            affiliations,
            gold,
        })
    })?;

    let mut cells: Vec<(usize, EstimatorKind, Strategy)> = Vec::new();
    for i in 0..cfg.seeds.len() {
        for &k in &cfg.estimators {
            cells.push((i, k, Strategy::Variance));
        }
        if cfg.random_baseline {
            cells.push((i, EstimatorKind::BetaI, Strategy::Random));
        }
    }
    let runs = par_cells(opts.jobs, &cells, |&(i, method, strategy)| {
        let seed = cfg.seeds[i];
        let s = &setups[i];
        let stem = cell_stem(seed, method, strategy);
        let err = core_err(&stem);
        let config = ExplorationConfig {
            estimator: method,
            strategy,
            seed,
            ..cfg.exploration.clone()
        };
        let ctx = ExplorationContext::new(&w.space, &s.pool, &s.affiliations, &s.gold, &cfg.gp)
            .map_err(&err)?;
        let resumed = if opts.resume {
            load_state(&dir, &stem, &config)?
        } else {
            None
        };
        let mut ex = match resumed {
            Some(ex) => ex,
            None => {
                let ex = Explorer::start(config, &s.seed_data, &ctx).map_err(&err)?;
                save_state(&dir, &stem, &ex)?;
                ex
            }
        };
        let mut budget = opts.max_rounds.unwrap_or(usize::MAX);
        while !ex.is_done() && budget > 0 {
            ex.step(&ctx).map_err(&err)?;
            budget -= 1;
            save_state(&dir, &stem, &ex)?;
        }
        Ok(ExploreRun {
            seed,
            method,
            strategy,
            explorer: ex,
        })
    })?;

    write_rows(
        &dir.join("curves.csv"),
        runs.iter().flat_map(|r| {
            r.explorer.log.iter().map(move |rec| CurveRow {
                method: r.method.to_string(),
                strategy: strategy_name(r.strategy),
                seed: r.seed,
                round: rec.round,
                labels_used: rec.labels_used,
                macro_mse_x100: rec.metrics.macro_mse * REPORT_SCALE,
                micro_mse_x100: rec.metrics.micro_mse * REPORT_SCALE,
                worst_mse_x100: rec.metrics.worst_mse * REPORT_SCALE,
                infreq_mse_x100: rec.metrics.infreq_mse * REPORT_SCALE,
            })
        }),
    )?;
    write_rows(
        &dir.join("metrics.csv"),
        runs.iter().filter_map(|r| {
            let last = r.explorer.log.last()?;
            Some(MetricRow::new(
                &cfg.name,
                &r.label(),
                last.labels_used,
                r.seed,
                &last.metrics,
            ))
        }),
    )?;
    Ok(runs)
}
