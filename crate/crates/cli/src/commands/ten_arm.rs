//! The fixed 10-arm setting: scale tables, bias-variance and kernel lengths.

use accsurf_core::estimators::{fit_estimator, EstimatorKind, FittedModel, PosteriorSummary};
use accsurf_core::kernel::KernelSlot;
use accsurf_core::metrics::{bias_variance, BiasVariance};
use accsurf_core::world::make_ten_arm_world;
use serde::Serialize;

use super::{core_err, out_dir, par_cells, write_config, write_rows, RunOptions};
use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};

#[derive(Clone, Debug)]
pub struct TenArmRun {
    pub method: EstimatorKind,
    pub seed: u64,
    pub summary: PosteriorSummary,
    /// Length of the mean kernel K1.
    pub kernel_length: f64,
}

/// Per-method aggregates over seeds.
#[derive(Clone, Debug)]
pub struct MethodSummary {
    pub method: EstimatorKind,
    /// Seed mean of the fitted ψ per arm.
    pub psi: Vec<f64>,
    /// Seed mean of E(ρ | a) per arm.
    pub mean: Vec<f64>,
    /// Scaled by 100.
    pub bias_variance: BiasVariance,
    pub kernel_length: f64,
}

impl MethodSummary {
    /// max ψ / min ψ over arms.
    pub fn psi_ratio(&self) -> f64 {
        let max = self.psi.iter().cloned().fold(f64::MIN, f64::max);
        let min = self.psi.iter().cloned().fold(f64::MAX, f64::min);
        max / min
    }

    /// Mean ψ over arms with `support >= dense_at` divided by the mean over
    /// the rest.
    pub fn dense_sparse_ratio(&self, support: &[usize], dense_at: usize) -> f64 {
        let mean = |dense: bool| {
            let v: Vec<f64> = self
                .psi
                .iter()
                .zip(support)
                .filter(|(_, &n)| (n >= dense_at) == dense)
                .map(|(p, _)| *p)
                .collect();
            v.iter().sum::<f64>() / v.len() as f64
        };
        mean(true) / mean(false)
    }
}

#[derive(Clone, Debug)]
pub struct TenArmReport {
    pub support: Vec<usize>,
    pub gamma: Vec<f64>,
    pub runs: Vec<TenArmRun>,
    pub methods: Vec<MethodSummary>,
}

impl TenArmReport {
    pub fn method(&self, kind: EstimatorKind) -> Option<&MethodSummary> {
        self.methods.iter().find(|m| m.method == kind)
    }
}

#[derive(Serialize)]
struct EstimateRow {
    method: String,
    seed: u64,
    arm_index: usize,
    support: usize,
    gamma: f64,
    mean: f64,
    variance: f64,
    phi: f64,
    psi: f64,
}

#[derive(Serialize)]
struct ScaleRow {
    method: String,
    arm_index: usize,
    support: usize,
    gamma: f64,
    psi: f64,
    mean: f64,
}

#[derive(Serialize)]
struct BiasVarianceRow {
    method: String,
    bias2_x100: f64,
    variance_x100: f64,
    mse_x100: f64,
    kernel_length: f64,
}

/// Fits every configured estimator on every seed's resampled counts.
pub fn replicate_ten_arm(cfg: &ExperimentConfig, opts: &RunOptions) -> CliResult<TenArmReport> {
    let world = make_ten_arm_world();
    let gold = world.gold();
    let mut gp = cfg.gp.clone();
    gp.schedule.warm_steps = cfg.ten_arm.warm_steps;
    let cells: Vec<(EstimatorKind, u64)> = cfg
        .ten_arm
        .estimators
        .iter()
        .flat_map(|&k| cfg.ten_arm.seeds.iter().map(move |&s| (k, s)))
        .collect();
    let runs = par_cells(opts.jobs, &cells, |&(method, seed)| {
        let cell = format!("ten-arm {method} seed {seed}");
        let err = core_err(&cell);
        let counts = world
            .sample_counts(seed, cfg.prior_strength)
            .map_err(&err)?;
        let model = fit_estimator(method, &counts, &world.space, &gp, seed).map_err(&err)?;
        let kernel_length = match &model {
            FittedModel::Gp(m) => m.kernel_length(KernelSlot::K1),
            _ => f64::NAN,
        };
        Ok(TenArmRun {
            method,
            seed,
            summary: model.summary().map_err(&err)?,
            kernel_length,
        })
    })?;

    let arms = world.gamma.len();
    let mut methods = Vec::new();
    for &method in &cfg.ten_arm.estimators {
        let mine: Vec<&TenArmRun> = runs.iter().filter(|r| r.method == method).collect();
        let n = mine.len() as f64;
        let avg = |f: &dyn Fn(&PosteriorSummary) -> &Vec<f64>| -> Vec<f64> {
            (0..arms)
                .map(|a| mine.iter().map(|r| f(&r.summary)[a]).sum::<f64>() / n)
                .collect()
        };
        let per_seed: Vec<Vec<f64>> = mine.iter().map(|r| r.summary.mean.clone()).collect();
        let bv = if per_seed.len() >= 2 {
            bias_variance(&per_seed, &gold)
                .map_err(|e| CliError::in_cell(format!("ten-arm {method}"), e))?
                .scaled()
        } else {
            BiasVariance {
                bias2: f64::NAN,
                variance: f64::NAN,
                mse: f64::NAN,
            }
        };
        methods.push(MethodSummary {
            method,
            psi: avg(&|s| &s.psi),
            mean: avg(&|s| &s.mean),
            bias_variance: bv,
            kernel_length: mine.iter().map(|r| r.kernel_length).sum::<f64>() / n,
        });
    }
    let report = TenArmReport {
        support: world.support.clone(),
        gamma: world.gamma.clone(),
        runs,
        methods,
    };
    write_report(cfg, &report)?;
    Ok(report)
}

fn write_report(cfg: &ExperimentConfig, report: &TenArmReport) -> CliResult<()> {
    let dir = out_dir(cfg, "ten_arm")?;
    write_config(cfg, &dir)?;
    let arms = report.gamma.len();
    write_rows(
        &dir.join("estimates.csv"),
        report.runs.iter().flat_map(|r| {
            (0..arms).map(move |a| EstimateRow {
                method: r.method.to_string(),
                seed: r.seed,
                arm_index: a,
                support: report.support[a],
                gamma: report.gamma[a],
                mean: r.summary.mean[a],
                variance: r.summary.variance[a],
                phi: r.summary.phi[a],
                psi: r.summary.psi[a],
            })
        }),
    )?;
    write_rows(
        &dir.join("scale.csv"),
        report.methods.iter().flat_map(|m| {
            (0..arms).map(move |a| ScaleRow {
                method: m.method.to_string(),
                arm_index: a,
                support: report.support[a],
                gamma: report.gamma[a],
                psi: m.psi[a],
                mean: m.mean[a],
            })
        }),
    )?;
    write_rows(
        &dir.join("bias_variance.csv"),
        report.methods.iter().map(|m| BiasVarianceRow {
            method: m.method.to_string(),
            bias2_x100: m.bias_variance.bias2,
            variance_x100: m.bias_variance.variance,
            mse_x100: m.bias_variance.mse,
            kernel_length: m.kernel_length,
        }),
    )
}
