//! Budgeted active labeling: pick arms, pick the instance most affiliated
//! with each arm, reveal its correctness, spread it over arms, refit.

use std::io::Write;

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::calibration::{CalibrationMode, CalibrationModel};
use crate::error::{Error, Result};
use crate::estimators::{fit_estimator, EstimatorKind, FittedModel, GpConfig, PosteriorSummary};
use crate::metrics::MetricSuite;
use crate::rng::{derive_rng, stream};
use crate::space::{ArmCounts, AttributeSpace, GoldSurface};
use crate::world::{oracle_label, Instance};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Highest posterior variance, unexplored arms first.
    Variance,
    /// Uniform over arms that are active in the gold surface.
    Random,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplorationConfig {
    pub budget: usize,
    pub arms_per_round: usize,
    pub labels_per_arm: usize,
    pub warm_steps: usize,
    pub round_steps: usize,
    /// Warm-start pseudo-observation mass λ.
    pub prior_strength: f64,
    pub estimator: EstimatorKind,
    pub calibration: CalibrationMode,
    pub strategy: Strategy,
    pub seed: u64,
}

impl Default for ExplorationConfig {
    fn default() -> Self {
        Self {
            budget: 500,
            arms_per_round: 12,
            labels_per_arm: 1,
            warm_steps: 1000,
            round_steps: 50,
            prior_strength: 0.1,
            estimator: EstimatorKind::BetaGpSlp,
            calibration: CalibrationMode::Full,
            strategy: Strategy::Variance,
            seed: 0,
        }
    }
}

impl ExplorationConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(format!("exploration config: {m}")));
        if self.arms_per_round == 0 || self.labels_per_arm == 0 {
            return bad("arms_per_round and labels_per_arm must be positive".into());
        }
        if self.budget != 0 && self.budget < self.arms_per_round {
            return bad(format!(
                "budget {} is below arms_per_round {}",
                self.budget, self.arms_per_round
            ));
        }
        if !(self.prior_strength > 0.0 && self.prior_strength.is_finite()) {
            return bad("prior_strength must be positive".into());
        }
        Ok(())
    }

    fn labels_per_round(&self) -> usize {
        self.arms_per_round * self.labels_per_arm
    }

    /// Rounds needed to spend the budget.
    pub fn rounds(&self) -> usize {
        self.budget.div_ceil(self.labels_per_round())
    }
}

/// The `batch` arms to label next: unexplored arms by decreasing variance,
/// then explored ones by decreasing variance. Ties go to the lower index.
pub fn select_arms(variances: &[f64], explicit: &[usize], batch: usize) -> Result<Vec<usize>> {
    if variances.len() != explicit.len() {
        return Err(Error::Shape(format!(
            "{} variances for {} label counts",
            variances.len(),
            explicit.len()
        )));
    }
    if batch > variances.len() {
        return Err(Error::InvalidArgument(format!(
            "batch {batch} exceeds {} arms",
            variances.len()
        )));
    }
    let mut order: Vec<usize> = (0..variances.len()).collect();
    order.sort_by(|&a, &b| {
        (explicit[a] > 0)
            .cmp(&(explicit[b] > 0))
            .then(variances[b].total_cmp(&variances[a]))
            .then(a.cmp(&b))
    });
    order.truncate(batch);
    Ok(order)
}

/// Unexplored instance with the highest affiliation to `arm`; ties go to
/// the lowest instance id. `None` once every instance is explored.
pub fn select_instance(
    pool: &[Instance],
    affiliations: &[Vec<f64>],
    arm: usize,
    explored: &[bool],
) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, x) in pool.iter().enumerate() {
        if explored[i] {
            continue;
        }
        let p = affiliations[i][arm];
        best = match best {
            Some(j) if affiliations[j][arm] > p => Some(j),
            Some(j) if affiliations[j][arm] == p && pool[j].id < x.id => Some(j),
            _ => Some(i),
        };
    }
    best
}

/// One round of the log. Round 0 is the warm-start fit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub arms: Vec<usize>,
    pub instance_ids: Vec<usize>,
    pub correct: Vec<bool>,
    /// Arms for which the pool had no unexplored instance left.
    pub skipped: Vec<usize>,
    pub labels_used: usize,
    pub metrics: MetricSuite,
}

/// Everything needed to continue a run from a round boundary.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Explorer {
    pub config: ExplorationConfig,
    pub counts: ArmCounts,
    pub model: FittedModel,
    pub summary: PosteriorSummary,
    pub explored: Vec<bool>,
    /// Labels requested per arm.
    pub explicit: Vec<usize>,
    /// Budget spent, skips included.
    pub spent: usize,
    pub log: Vec<RoundRecord>,
}

/// Read-only inputs shared by every round.
pub struct ExplorationContext<'a> {
    pub space: &'a AttributeSpace,
    pub pool: &'a [Instance],
    /// `P(a | x)` per pool instance.
    pub affiliations: &'a [Vec<f64>],
    pub gold: &'a GoldSurface,
    pub gp: &'a GpConfig,
}

impl<'a> ExplorationContext<'a> {
    pub fn new(
        space: &'a AttributeSpace,
        pool: &'a [Instance],
        affiliations: &'a [Vec<f64>],
        gold: &'a GoldSurface,
        gp: &'a GpConfig,
    ) -> Result<Self> {
        if affiliations.len() != pool.len()
            || affiliations.iter().any(|r| r.len() != space.arm_count())
            || gold.gamma.len() != space.arm_count()
        {
            return Err(Error::Shape("exploration inputs disagree on sizes".into()));
        }
        Ok(Self {
            space,
            pool,
            affiliations,
            gold,
            gp,
        })
    }
}

impl Explorer {
    /// Warm start at the seed accuracy κ, add the seed instances at their
    /// gold arms, and fit for `warm_steps`.
    pub fn start(
        config: ExplorationConfig,
        seed_data: &[Instance],
        ctx: &ExplorationContext,
    ) -> Result<Self> {
        config.validate()?;
        if seed_data.is_empty() {
            return Err(Error::InvalidArgument("exploration needs seed data".into()));
        }
        let arms = ctx.space.arm_count();
        let kappa = seed_data.iter().filter(|x| x.correct).count() as f64 / seed_data.len() as f64;
        let mut counts = ArmCounts::warm_start(arms, kappa, config.prior_strength)?;
        for x in seed_data {
            counts.add_observation(x.true_arm, x.correct);
        }
        let mut gp = ctx.gp.clone();
        gp.schedule.warm_steps = config.warm_steps;
        gp.schedule.round_steps = config.round_steps;
        let model = fit_estimator(config.estimator, &counts, ctx.space, &gp, config.seed)?;
        let summary = model.summary()?;
        let metrics = MetricSuite::compute(&summary.mean, ctx.gold)?;
        Ok(Self {
            counts,
            model,
            summary,
            explored: vec![false; ctx.pool.len()],
            explicit: vec![0; arms],
            spent: 0,
            log: vec![RoundRecord {
                round: 0,
                arms: Vec::new(),
                instance_ids: Vec::new(),
                correct: Vec::new(),
                skipped: Vec::new(),
                labels_used: 0,
                metrics,
            }],
            config,
        })
    }

    pub fn is_done(&self) -> bool {
        self.spent >= self.config.budget
    }

    pub fn rounds_done(&self) -> usize {
        self.log.len() - 1
    }

    pub fn labels_used(&self) -> usize {
        self.log.last().map_or(0, |r| r.labels_used)
    }

    fn choose_arms(&self, batch: usize, ctx: &ExplorationContext) -> Result<Vec<usize>> {
        match self.config.strategy {
            Strategy::Variance => select_arms(&self.summary.variance, &self.explicit, batch),
            Strategy::Random => {
                let active = ctx.gold.active_arms();
                if active.is_empty() {
                    return Err(Error::InvalidArgument(
                        "gold surface has no active arms".into(),
                    ));
                }
                let mut rng = derive_rng(
                    self.config.seed,
                    &[stream::EXPLORATION, self.log.len() as u64],
                );
                let mut picked: Vec<usize> =
                    sample(&mut rng, active.len(), batch.min(active.len()))
                        .into_iter()
                        .map(|i| active[i])
                        .collect();
                picked.sort_unstable();
                Ok(picked)
            }
        }
    }

    /// Labels one batch of arms and refits for `round_steps`.
    pub fn step(&mut self, ctx: &ExplorationContext) -> Result<&RoundRecord> {
        if self.is_done() {
            return Err(Error::InvalidArgument("budget already spent".into()));
        }
        if self.explored.len() != ctx.pool.len() {
            return Err(Error::Shape(
                "pool does not match the explorer state".into(),
            ));
        }
        let left = self.config.budget - self.spent;
        let batch = self
            .config
            .arms_per_round
            .min(left.div_ceil(self.config.labels_per_arm))
            .min(ctx.space.arm_count());
        let arms = self.choose_arms(batch, ctx)?;
        let mut record = RoundRecord {
            round: self.log.len(),
            arms: arms.clone(),
            instance_ids: Vec::new(),
            correct: Vec::new(),
            skipped: Vec::new(),
            labels_used: self.labels_used(),
            metrics: self.log[0].metrics.clone(),
        };
        let mut budget_left = left;
        for &arm in &arms {
            for _ in 0..self.config.labels_per_arm {
                if budget_left == 0 {
                    break;
                }
                budget_left -= 1;
                self.spent += 1;
                self.explicit[arm] += 1;
                let Some(i) = select_instance(ctx.pool, ctx.affiliations, arm, &self.explored)
                else {
                    record.skipped.push(arm);
                    continue;
                };
                self.explored[i] = true;
                let correct = oracle_label(&ctx.pool[i]);
                self.counts.accumulate(&ctx.affiliations[i], correct)?;
                record.instance_ids.push(ctx.pool[i].id);
                record.correct.push(correct);
                record.labels_used += 1;
            }
        }
        self.model.update(&self.counts, self.config.round_steps)?;
        self.summary = self.model.summary()?;
        record.metrics = MetricSuite::compute(&self.summary.mean, ctx.gold)?;
        self.log.push(record);
        Ok(self.log.last().expect("just pushed"))
    }

    /// Runs rounds until the budget is spent.
    pub fn finish(&mut self, ctx: &ExplorationContext) -> Result<()> {
        while !self.is_done() {
            self.step(ctx)?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Affiliations for a pool under a fitted calibration model.
pub fn pool_affiliations(model: &CalibrationModel, pool: &[Instance]) -> Result<Vec<Vec<f64>>> {
    model.affiliations(pool)
}

/// Fresh run from warm start to spent budget.
pub fn run_exploration(
    config: ExplorationConfig,
    seed_data: &[Instance],
    ctx: &ExplorationContext,
) -> Result<Explorer> {
    let mut ex = Explorer::start(config, seed_data, ctx)?;
    ex.finish(ctx)?;
    Ok(ex)
}

/// One JSON object per round.
pub fn write_log_jsonl<W: Write>(log: &[RoundRecord], mut out: W) -> Result<()> {
    for r in log {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}
