//! Calibration fits per mode, scored by held-out arm NLL.

use accsurf_core::calibration::{fit_calibration, CalibrationMode};
use serde::Serialize;

use super::{
    core_err, create, out_dir, par_cells, pool_tag, tag, world, write_config, write_rows,
    RunOptions,
};
use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};

#[derive(Clone, Debug, Serialize)]
pub struct CalibrationRow {
    pub seed: u64,
    pub mode: CalibrationMode,
    pub test_nll: f64,
    pub steps: usize,
    pub mean_temperature: f64,
}

#[derive(Clone, Debug)]
pub struct CalibrationReport {
    pub rows: Vec<CalibrationRow>,
}

impl CalibrationReport {
    pub fn nll(&self, seed: u64, mode: CalibrationMode) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.seed == seed && r.mode == mode)
            .map(|r| r.test_nll)
    }

    /// Seeds on which the NLLs of `modes` strictly decrease in order.
    pub fn seeds_ordered(&self, modes: &[CalibrationMode]) -> Vec<u64> {
        let mut seeds: Vec<u64> = self.rows.iter().map(|r| r.seed).collect();
        seeds.dedup();
        seeds
            .into_iter()
            .filter(|&s| {
                let v: Option<Vec<f64>> = modes.iter().map(|&m| self.nll(s, m)).collect();
                v.is_some_and(|v| v.windows(2).all(|w| w[0] > w[1]))
            })
            .collect()
    }
}

pub fn calibrate(cfg: &ExperimentConfig, opts: &RunOptions) -> CliResult<CalibrationReport> {
    let w = world(cfg)?;
    let dir = out_dir(cfg, "calibrate")?;
    write_config(cfg, &dir)?;
    let cells: Vec<(u64, CalibrationMode)> = cfg
        .seeds
        .iter()
        .flat_map(|&s| cfg.calibration_modes.iter().map(move |&m| (s, m)))
        .collect();
    let rows = par_cells(opts.jobs, &cells, |&(seed, mode)| {
        let cell = format!("calibrate {mode} seed {seed}");
        let err = core_err(&cell);
        let seed_data = w.sample_pool(cfg.data.seed_size, pool_tag(seed, tag::SEED_SET));
        let pool = w.sample_pool(cfg.data.pool_size, pool_tag(seed, tag::POOL));
        let test = w.sample_pool(cfg.data.test_size, pool_tag(seed, tag::TEST));
        let model = fit_calibration(&seed_data, &pool, &w.space, mode, &cfg.calibration, seed)
            .map_err(&err)?;
        let path = dir.join(format!("temperatures_seed{seed}_{}.csv", mode.name()));
        model
            .write_temperatures_csv(create(&path)?)
            .map_err(|e| CliError::in_cell(&cell, e))?;
        let t = model.temperature_values();
        Ok(CalibrationRow {
            seed,
            mode,
            test_nll: model.true_arm_nll(&test).map_err(&err)?,
            steps: model.steps,
            mean_temperature: t.iter().sum::<f64>() / t.len() as f64,
        })
    })?;
    write_rows(&dir.join("calibration.csv"), &rows)?;
    Ok(CalibrationReport { rows })
}
