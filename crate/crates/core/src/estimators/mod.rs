//! Per-arm accuracy estimators and their posterior summaries.

mod gp;
mod likelihood;
mod summary;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use gp::{ArmEncoding, GpConfig, GpModel, TrainCounts};
pub use likelihood::{
    bernoulli_gp_loglik, bernoulli_node, beta_binomial_ab_node, beta_binomial_loglik,
    beta_binomial_node, dirichlet_node, dirichlet_scale_loglik, pool_counts, support_proportions,
    PHI_MAX, PHI_MIN, PROPORTION_FLOOR, PSI_MAX, PSI_MIN,
};
pub use summary::{
    beta_moments, stratified_normals, summarize_gaussians, write_estimates_csv, PosteriorSummary,
};

use crate::error::{Error, Result};
use crate::space::{ArmCounts, AttributeSpace};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EstimatorKind {
    CPredictor,
    BetaI,
    BernGP,
    BetaGP,
    #[serde(rename = "BetaGP_SL")]
    BetaGpSl,
    #[serde(rename = "BetaGP_SLP")]
    BetaGpSlp,
    #[serde(rename = "BetaGP_AB")]
    BetaGpAb,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 7] = [
        EstimatorKind::CPredictor,
        EstimatorKind::BetaI,
        EstimatorKind::BernGP,
        EstimatorKind::BetaGP,
        EstimatorKind::BetaGpSl,
        EstimatorKind::BetaGpSlp,
        EstimatorKind::BetaGpAb,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::CPredictor => "CPredictor",
            EstimatorKind::BetaI => "BetaI",
            EstimatorKind::BernGP => "BernGP",
            EstimatorKind::BetaGP => "BetaGP",
            EstimatorKind::BetaGpSl => "BetaGP_SL",
            EstimatorKind::BetaGpSlp => "BetaGP_SLP",
            EstimatorKind::BetaGpAb => "BetaGP_AB",
        }
    }

    pub fn is_gp(self) -> bool {
        !matches!(self, EstimatorKind::CPredictor | EstimatorKind::BetaI)
    }

    /// Uses a second GP for the scale (or β).
    pub fn has_scale_gp(self) -> bool {
        self.is_gp() && self != EstimatorKind::BernGP
    }

    pub fn uses_dirichlet(self) -> bool {
        matches!(self, EstimatorKind::BetaGpSl | EstimatorKind::BetaGpSlp)
    }

    pub fn uses_pooling(self) -> bool {
        self == EstimatorKind::BetaGpSlp
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EstimatorKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let key = s.to_ascii_lowercase().replace(['-', '_'], "");
        Self::ALL
            .into_iter()
            .find(|k| k.name().to_ascii_lowercase().replace('_', "") == key)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown estimator kind {s:?}")))
    }
}

/// A fitted estimator of any kind.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum FittedModel {
    CPredictor { accuracy: f64, arm_count: usize },
    BetaI { counts: ArmCounts },
    Gp(Box<GpModel>),
}

impl FittedModel {
    pub fn kind(&self) -> EstimatorKind {
        match self {
            FittedModel::CPredictor { .. } => EstimatorKind::CPredictor,
            FittedModel::BetaI { .. } => EstimatorKind::BetaI,
            FittedModel::Gp(m) => m.kind,
        }
    }

    /// Refits on new counts. Closed-form models are rebuilt; GP models run
    /// `steps` more updates from their current state.
    pub fn update(&mut self, counts: &ArmCounts, steps: usize) -> Result<()> {
        match self {
            FittedModel::CPredictor { .. } | FittedModel::BetaI { .. } => {
                *self = closed_form(self.kind(), counts)?;
                Ok(())
            }
            FittedModel::Gp(m) => m.train(counts, steps).map(|_| ()),
        }
    }

    pub fn summary(&self) -> Result<PosteriorSummary> {
        match self {
            FittedModel::CPredictor {
                accuracy,
                arm_count,
            } => Ok(PosteriorSummary {
                mean: vec![*accuracy; *arm_count],
                variance: vec![0.0; *arm_count],
                phi: vec![*accuracy; *arm_count],
                psi: vec![f64::INFINITY; *arm_count],
            }),
            FittedModel::BetaI { counts } => {
                let mut s = PosteriorSummary::with_capacity(counts.arm_count());
                for a in 0..counts.arm_count() {
                    let (m, v) = beta_moments(counts.c1[a], counts.c0[a]);
                    s.push(m, v, m, counts.n(a));
                }
                Ok(s)
            }
            FittedModel::Gp(m) => m.summary(),
        }
    }
}

fn closed_form(kind: EstimatorKind, counts: &ArmCounts) -> Result<FittedModel> {
    match kind {
        EstimatorKind::CPredictor => {
            let total = counts.total_mass();
            if !(total > 0.0) {
                return Err(Error::InvalidArgument("no observations".into()));
            }
            Ok(FittedModel::CPredictor {
                accuracy: counts.total_correct() / total,
                arm_count: counts.arm_count(),
            })
        }
        EstimatorKind::BetaI => Ok(FittedModel::BetaI {
            counts: counts.clone(),
        }),
        other => Err(Error::InvalidArgument(format!(
            "{other} is not closed-form"
        ))),
    }
}

/// Fits `kind` on `counts`. GP kinds train for the warm-start step count.
pub fn fit_estimator(
    kind: EstimatorKind,
    counts: &ArmCounts,
    space: &AttributeSpace,
    config: &GpConfig,
    seed: u64,
) -> Result<FittedModel> {
    if counts.arm_count() != space.arm_count() {
        return Err(Error::Shape(format!(
            "{} count entries for {} arms",
            counts.arm_count(),
            space.arm_count()
        )));
    }
    if !kind.is_gp() {
        return closed_form(kind, counts);
    }
    let mut model = GpModel::new(kind, space, config.clone(), seed)?;
    model.train(counts, config.schedule.warm_steps)?;
    Ok(FittedModel::Gp(Box::new(model)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kind_names_round_trip() {
        for k in EstimatorKind::ALL {
            assert_eq!(k.name().parse::<EstimatorKind>().unwrap(), k);
            let j = serde_json::to_string(&k).unwrap();
            assert_eq!(j, format!("\"{}\"", k.name()));
        }
        assert_eq!(
            "betagp-slp".parse::<EstimatorKind>().unwrap(),
            EstimatorKind::BetaGpSlp
        );
        assert!("Beta".parse::<EstimatorKind>().is_err());
    }

    #[test]
    fn cpredictor_uses_global_accuracy() {
        let space = AttributeSpace::unnamed(vec![2, 2]).unwrap();
        let counts = ArmCounts {
            c1: vec![4.0, 5.0, 0.0, 0.0],
            c0: vec![1.0, 0.0, 0.0, 0.0],
        };
        let m = fit_estimator(
            EstimatorKind::CPredictor,
            &counts,
            &space,
            &GpConfig::default(),
            0,
        )
        .unwrap();
        let s = m.summary().unwrap();
        assert!(s.mean.iter().all(|&x| (x - 0.9).abs() < 1e-15));
        assert!(s.variance.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn beta_i_prior_only_moments() {
        let space = AttributeSpace::unnamed(vec![2]).unwrap();
        let counts = ArmCounts::warm_start(2, 0.5, 0.1).unwrap();
        let m = fit_estimator(
            EstimatorKind::BetaI,
            &counts,
            &space,
            &GpConfig::default(),
            0,
        )
        .unwrap();
        let s = m.summary().unwrap();
        assert!((s.mean[0] - 0.5).abs() < 1e-15);
        assert!((s.variance[0] - 0.25 / 1.1).abs() < 1e-12);
    }

    #[test]
    fn beta_i_matches_bayesian_update() {
        // Start from Beta(0.1·κ, 0.1·(1−κ)) and add 3 correct, 1 wrong.
        let mut counts = ArmCounts::warm_start(1, 0.7, 0.1).unwrap();
        for c in [true, true, false, true] {
            counts.add_observation(0, c);
        }
        let (a, b) = (0.07 + 3.0, 0.03 + 1.0);
        let s = closed_form(EstimatorKind::BetaI, &counts)
            .unwrap()
            .summary()
            .unwrap();
        assert!((s.mean[0] - a / (a + b)).abs() < 1e-15);
    }
}
