//! Error metrics of estimated accuracy surfaces against gold.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::space::GoldSurface;

/// Arms considered by the worst and infrequent metrics.
pub const TAIL_ARMS: usize = 50;
pub const QUANTILE_LEVELS: [f64; 7] = [0.0, 0.1, 0.3, 0.5, 0.7, 0.9, 1.0];
/// Tables report squared errors multiplied by this.
pub const REPORT_SCALE: f64 = 100.0;

fn check(estimates: &[f64], gold: &GoldSurface) -> Result<Vec<usize>> {
    if estimates.len() != gold.gamma.len() {
        return Err(Error::Shape(format!(
            "{} estimates for {} arms",
            estimates.len(),
            gold.gamma.len()
        )));
    }
    let active = gold.active_arms();
    if active.is_empty() {
        return Err(Error::InvalidArgument(
            "gold surface has no active arms".into(),
        ));
    }
    Ok(active)
}

fn mean_sq(estimates: &[f64], gold: &GoldSurface, arms: &[usize]) -> f64 {
    arms.iter()
        .map(|&a| (estimates[a] - gold.gamma[a]).powi(2))
        .sum::<f64>()
        / arms.len() as f64
}

/// Mean squared error over active arms.
pub fn macro_mse(estimates: &[f64], gold: &GoldSurface) -> Result<f64> {
    let active = check(estimates, gold)?;
    Ok(mean_sq(estimates, gold, &active))
}

/// Support-weighted mean squared error over active arms.
pub fn micro_mse(estimates: &[f64], gold: &GoldSurface) -> Result<f64> {
    let active = check(estimates, gold)?;
    let total: f64 = active.iter().map(|&a| gold.support[a] as f64).sum();
    if !(total > 0.0) {
        return Err(Error::InvalidArgument("active arms have no support".into()));
    }
    Ok(active
        .iter()
        .map(|&a| gold.support[a] as f64 * (estimates[a] - gold.gamma[a]).powi(2))
        .sum::<f64>()
        / total)
}

/// Active arms sorted by `key`, then by index; the first `TAIL_ARMS`.
fn tail(active: Vec<usize>, key: impl Fn(usize) -> f64) -> Vec<usize> {
    let mut arms = active;
    arms.sort_by(|&a, &b| key(a).total_cmp(&key(b)).then(a.cmp(&b)));
    arms.truncate(TAIL_ARMS);
    arms
}

/// MSE over the lowest-accuracy active arms.
pub fn worst_mse(estimates: &[f64], gold: &GoldSurface) -> Result<f64> {
    let active = check(estimates, gold)?;
    let arms = tail(active, |a| gold.gamma[a]);
    Ok(mean_sq(estimates, gold, &arms))
}

/// MSE over the least-supported active arms.
pub fn infreq_mse(estimates: &[f64], gold: &GoldSurface) -> Result<f64> {
    let active = check(estimates, gold)?;
    let arms = tail(active, |a| gold.support[a] as f64);
    Ok(mean_sq(estimates, gold, &arms))
}

/// Lower (type-1) quantile: the smallest value whose empirical CDF is ≥ p.
pub fn lower_quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let k = ((p * n as f64).ceil() as usize).clamp(1, n);
    sorted[k - 1]
}

/// Quantiles of γ over active arms at `QUANTILE_LEVELS`.
pub fn quantile_report(gold: &GoldSurface) -> Result<[f64; 7]> {
    let mut v: Vec<f64> = gold.active_arms().iter().map(|&a| gold.gamma[a]).collect();
    if v.is_empty() {
        return Err(Error::InvalidArgument(
            "gold surface has no active arms".into(),
        ));
    }
    v.sort_by(f64::total_cmp);
    Ok(QUANTILE_LEVELS.map(|p| lower_quantile(&v, p)))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiasVariance {
    pub bias2: f64,
    pub variance: f64,
    pub mse: f64,
}

/// Macro-averaged decomposition of squared error across seeds, over active
/// arms. Variance uses the population (1/S) form, so `mse = bias² + variance`.
pub fn bias_variance(per_seed: &[Vec<f64>], gold: &GoldSurface) -> Result<BiasVariance> {
    if per_seed.len() < 2 {
        return Err(Error::InvalidArgument(
            "bias-variance needs at least two seeds".into(),
        ));
    }
    let mut active = None;
    for e in per_seed {
        active = Some(check(e, gold)?);
    }
    let active = active.expect("non-empty");
    let s = per_seed.len() as f64;
    let mut out = BiasVariance {
        bias2: 0.0,
        variance: 0.0,
        mse: 0.0,
    };
    for &a in &active {
        let mean = per_seed.iter().map(|e| e[a]).sum::<f64>() / s;
        out.bias2 += (mean - gold.gamma[a]).powi(2);
        out.variance += per_seed.iter().map(|e| (e[a] - mean).powi(2)).sum::<f64>() / s;
        out.mse += per_seed
            .iter()
            .map(|e| (e[a] - gold.gamma[a]).powi(2))
            .sum::<f64>()
            / s;
    }
    let n = active.len() as f64;
    out.bias2 /= n;
    out.variance /= n;
    out.mse /= n;
    Ok(out)
}

impl BiasVariance {
    pub fn scaled(self) -> Self {
        Self {
            bias2: self.bias2 * REPORT_SCALE,
            variance: self.variance * REPORT_SCALE,
            mse: self.mse * REPORT_SCALE,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSuite {
    pub macro_mse: f64,
    pub micro_mse: f64,
    pub worst_mse: f64,
    pub infreq_mse: f64,
    pub quantiles: [f64; 7],
    pub active_arms: usize,
}

impl MetricSuite {
    pub fn compute(estimates: &[f64], gold: &GoldSurface) -> Result<Self> {
        Ok(Self {
            macro_mse: macro_mse(estimates, gold)?,
            micro_mse: micro_mse(estimates, gold)?,
            worst_mse: worst_mse(estimates, gold)?,
            infreq_mse: infreq_mse(estimates, gold)?,
            quantiles: quantile_report(gold)?,
            active_arms: gold.active_arms().len(),
        })
    }
}

/// One CSV row of a metric table; squared errors are scaled by 100.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub world: String,
    pub method: String,
    pub budget: usize,
    pub seed: u64,
    pub macro_mse_x100: f64,
    pub micro_mse_x100: f64,
    pub worst_mse_x100: f64,
    pub infreq_mse_x100: f64,
    pub active_arms: usize,
    pub q00: f64,
    pub q10: f64,
    pub q30: f64,
    pub q50: f64,
    pub q70: f64,
    pub q90: f64,
    pub q100: f64,
}

impl MetricRow {
    pub fn new(world: &str, method: &str, budget: usize, seed: u64, m: &MetricSuite) -> Self {
        let q = m.quantiles;
        Self {
            world: world.to_string(),
            method: method.to_string(),
            budget,
            seed,
            macro_mse_x100: m.macro_mse * REPORT_SCALE,
            micro_mse_x100: m.micro_mse * REPORT_SCALE,
            worst_mse_x100: m.worst_mse * REPORT_SCALE,
            infreq_mse_x100: m.infreq_mse * REPORT_SCALE,
            active_arms: m.active_arms,
            q00: q[0],
            q10: q[1],
            q30: q[2],
            q50: q[3],
            q70: q[4],
            q90: q[5],
            q100: q[6],
        }
    }
}

pub fn write_metric_csv<W: Write>(rows: &[MetricRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::make_ten_arm_world;
    use proptest::prelude::*;

    fn exact(gamma: Vec<f64>, support: Vec<usize>) -> GoldSurface {
        GoldSurface::exact(gamma, support)
    }

    #[test]
    fn macro_examples() {
        let g = exact(vec![0.5, 0.5], vec![1, 1]);
        assert_eq!(macro_mse(&[0.5, 0.5], &g).unwrap(), 0.0);
        assert!((macro_mse(&[0.6, 0.8], &g).unwrap() - 0.05).abs() < 1e-15);
    }

    #[test]
    fn cpredictor_on_ten_arm() {
        let w = make_ten_arm_world();
        let n: f64 = w.support.iter().sum::<usize>() as f64;
        let global: f64 = w
            .gamma
            .iter()
            .zip(&w.support)
            .map(|(g, s)| g * *s as f64)
            .sum::<f64>()
            / n;
        assert!((global - 0.718_604_651).abs() < 1e-8);
        let est = vec![global; 10];
        let direct: f64 = w.gamma.iter().map(|g| (global - g).powi(2)).sum::<f64>() / 10.0;
        assert!((macro_mse(&est, &w.gold()).unwrap() - direct).abs() < 1e-15);
    }

    #[test]
    fn micro_examples() {
        let g = exact(vec![0.2, 0.4, 0.9], vec![3, 3, 3]);
        let e = [0.1, 0.6, 0.85];
        assert!((micro_mse(&e, &g).unwrap() - macro_mse(&e, &g).unwrap()).abs() < 1e-15);
        let g = exact(vec![0.2, 0.4, 0.9], vec![0, 0, 7]);
        assert!((micro_mse(&e, &g).unwrap() - 0.0025).abs() < 1e-15);
        let g = exact(vec![0.2, 0.4, 0.9], vec![1, 2, 5]);
        let direct = (0.01 + 2.0 * 0.04 + 5.0 * 0.0025) / 8.0;
        assert!((micro_mse(&e, &g).unwrap() - direct).abs() < 1e-15);
    }

    #[test]
    fn tails_and_ties() {
        // 60 arms with identical γ: worst picks the 50 lowest indices
        let mut e = vec![0.5; 60];
        for a in 50..60 {
            e[a] = 1.0;
        }
        let g = exact(vec![0.5; 60], vec![1; 60]);
        assert_eq!(worst_mse(&e, &g).unwrap(), 0.0);
        assert_eq!(infreq_mse(&e, &g).unwrap(), 0.0);
        let w = make_ten_arm_world();
        let est = vec![0.5; 10];
        assert_eq!(
            worst_mse(&est, &w.gold()).unwrap(),
            macro_mse(&est, &w.gold()).unwrap()
        );
        // inactive arms are skipped
        let g = GoldSurface {
            gamma: vec![0.1, 0.9],
            support: vec![10, 2],
            min_support: 5,
        };
        assert!((macro_mse(&[0.2, 0.0], &g).unwrap() - 0.01).abs() < 1e-15);
    }

    #[test]
    fn quantiles() {
        let g = exact(vec![0.4; 5], vec![1; 5]);
        assert_eq!(quantile_report(&g).unwrap(), [0.4; 7]);
        let q = quantile_report(&make_ten_arm_world().gold()).unwrap();
        assert_eq!(q[0], 0.1);
        assert_eq!(q[6], 0.9);
        // sorted: .1 .2 .3 .3 .4 .5 .6 .7 .8 .9; lower median is the 5th value
        assert_eq!(q[3], 0.4);
        assert_eq!(q[1], 0.1);
    }

    #[test]
    fn bias_variance_examples() {
        let g = exact(vec![0.3, 0.6], vec![1, 1]);
        let same = vec![vec![0.4, 0.6]; 3];
        let bv = bias_variance(&same, &g).unwrap();
        assert!(bv.variance < 1e-30);
        assert!((bv.mse - bv.bias2).abs() < 1e-15);
        let d = 0.05;
        let pm = vec![vec![0.3 + d, 0.6 + d], vec![0.3 - d, 0.6 - d]];
        let bv = bias_variance(&pm, &g).unwrap();
        assert!(bv.bias2 < 1e-30);
        assert!((bv.variance - d * d).abs() < 1e-15);
        assert!(bias_variance(&same[..1], &g).is_err());
    }

    #[test]
    fn csv_row_scaling() {
        let g = exact(vec![0.5, 0.5], vec![1, 1]);
        let m = MetricSuite::compute(&[0.6, 0.6], &g).unwrap();
        let row = MetricRow::new("w", "BetaI", 0, 1, &m);
        assert!((row.macro_mse_x100 - 1.0).abs() < 1e-12);
        let mut buf = Vec::new();
        write_metric_csv(&[row], &mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("world,method,budget,seed,macro_mse_x100,"));
    }

    proptest! {
        #[test]
        fn decomposition_identity(
            ests in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 6), 2..6),
            gamma in prop::collection::vec(0.0f64..1.0, 6),
        ) {
            let g = exact(gamma, vec![1; 6]);
            let bv = bias_variance(&ests, &g).unwrap();
            prop_assert!((bv.bias2 + bv.variance - bv.mse).abs() < 1e-9);
        }

        #[test]
        fn permutation_invariance(
            pairs in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0, 1usize..20), 2..80),
            rot in 0usize..80,
        ) {
            let n = pairs.len();
            let est: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let g = exact(pairs.iter().map(|p| p.1).collect(), pairs.iter().map(|p| p.2).collect());
            let m = MetricSuite::compute(&est, &g).unwrap();
            let perm: Vec<usize> = (0..n).map(|i| (i + rot) % n).collect();
            let est2: Vec<f64> = perm.iter().map(|&i| est[i]).collect();
            let g2 = exact(perm.iter().map(|&i| g.gamma[i]).collect(), perm.iter().map(|&i| g.support[i]).collect());
            let m2 = MetricSuite::compute(&est2, &g2).unwrap();
            prop_assert!((m.macro_mse - m2.macro_mse).abs() < 1e-12);
            prop_assert!((m.micro_mse - m2.micro_mse).abs() < 1e-12);
            prop_assert_eq!(m.quantiles, m2.quantiles);
            // continuous random γ and support ties: tails agree when the cut is unambiguous
            if n <= TAIL_ARMS {
                prop_assert!((m.worst_mse - m2.worst_mse).abs() < 1e-12);
                prop_assert!((m.infreq_mse - m2.infreq_mse).abs() < 1e-12);
            }
        }
    }
}
