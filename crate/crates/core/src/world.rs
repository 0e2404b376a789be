//! Synthetic ground truth: accuracy surfaces, attribute priors, noisy
//! attribute predictors and a labeling oracle.

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive_rng, stream};
use crate::space::{ArmCounts, AttributeSpace, GoldSurface, GOLD_MIN_SUPPORT};
use crate::special::sigmoid;

/// Probabilities in predictor outputs never drop below this.
pub const PROB_FLOOR: f64 = 1e-12;

/// Favors arms whose values of two attributes agree.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Coupling {
    pub first: usize,
    pub second: usize,
    /// Log-potential added when the two values are equal.
    pub strength: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldSpec {
    pub attribute_names: Option<Vec<String>>,
    pub cardinalities: Vec<usize>,
    /// Correlation length of the latent accuracy field; `None` gives a
    /// constant surface.
    pub smoothness: Option<f64>,
    /// Logit of the typical accuracy.
    pub accuracy_offset: f64,
    /// Spread of the accuracy logits.
    pub accuracy_amplitude: f64,
    /// Dimension of each attribute value's random embedding.
    pub value_dim: usize,
    /// Random Fourier features approximating the field.
    pub features: usize,
    /// Symmetric Dirichlet concentration of the arm prior.
    pub prior_concentration: f64,
    pub couplings: Vec<Coupling>,
    /// Mean per-attribute predictor error rate.
    pub error_rates: Vec<f64>,
    /// Logit temperature per attribute; below 1 sharpens.
    pub temperatures: Vec<f64>,
}

impl Default for WorldSpec {
    fn default() -> Self {
        Self {
            attribute_names: None,
            cardinalities: vec![2, 2, 2, 2, 2, 10],
            smoothness: Some(4.0),
            accuracy_offset: 1.0,
            accuracy_amplitude: 2.0,
            value_dim: 3,
            features: 256,
            prior_concentration: 0.5,
            couplings: Vec::new(),
            error_rates: vec![0.1; 6],
            temperatures: vec![1.0; 6],
        }
    }
}

impl WorldSpec {
    pub fn validate(&self) -> Result<()> {
        let k = self.cardinalities.len();
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.error_rates.len() != k || self.temperatures.len() != k {
            return bad(format!("need {k} error rates and temperatures"));
        }
        if let Some(names) = &self.attribute_names {
            if names.len() != k {
                return bad(format!("{} names for {k} attributes", names.len()));
            }
        }
        if let Some(l) = self.smoothness {
            if !(l > 0.0) {
                return bad(format!("smoothness must be positive, got {l}"));
            }
        }
        for (i, (&e, &c)) in self.error_rates.iter().zip(&self.cardinalities).enumerate() {
            let cap = (c as f64 - 1.0) / c as f64;
            if !(0.0..=cap / 2.0).contains(&e) {
                return bad(format!(
                    "error rate {e} of attribute {i} outside [0, {}]",
                    cap / 2.0
                ));
            }
        }
        if self.temperatures.iter().any(|t| !(*t > 0.0)) {
            return bad("temperatures must be positive".into());
        }
        if !(self.prior_concentration > 0.0) {
            return bad("prior concentration must be positive".into());
        }
        if self.value_dim == 0 || self.features == 0 {
            return bad("value_dim and features must be positive".into());
        }
        for c in &self.couplings {
            if c.first >= k || c.second >= k || c.first == c.second {
                return bad(format!("bad coupling between {} and {}", c.first, c.second));
            }
        }
        Ok(())
    }

    pub fn space(&self) -> Result<AttributeSpace> {
        match &self.attribute_names {
            Some(n) => AttributeSpace::new(n.clone(), self.cardinalities.clone()),
            None => AttributeSpace::unnamed(self.cardinalities.clone()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticWorld {
    pub space: AttributeSpace,
    /// True accuracy per arm.
    pub gamma: Vec<f64>,
    /// Probability of each arm.
    pub prior: Vec<f64>,
    pub error_rates: Vec<f64>,
    pub temperatures: Vec<f64>,
    pub seed: u64,
}

/// One unlabeled example as seen through the attribute predictors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub id: usize,
    /// Per-attribute log-probabilities over values.
    pub log_probs: Vec<Vec<f64>>,
    /// Hidden from estimators except for seed data.
    pub true_arm: usize,
    /// Hidden until labeled.
    pub correct: bool,
}

impl Instance {
    /// Per-attribute argmax values as an arm index.
    pub fn predicted_arm(&self, space: &AttributeSpace) -> usize {
        let mut idx = 0;
        for (k, lp) in self.log_probs.iter().enumerate() {
            let v = argmax(lp);
            idx = idx * space.cardinalities()[k] + v;
        }
        idx
    }
}

fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

fn sample_dirichlet(alpha: &[f64], rng: &mut impl Rng) -> Result<Vec<f64>> {
    let mut v = Vec::with_capacity(alpha.len());
    for &a in alpha {
        let g = Gamma::new(a, 1.0).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        v.push(g.sample(rng).max(f64::MIN_POSITIVE));
    }
    let s: f64 = v.iter().sum();
    Ok(v.into_iter().map(|x| x / s).collect())
}

/// Draws a world from `spec`.
pub fn sample_world(spec: &WorldSpec, seed: u64) -> Result<SyntheticWorld> {
    spec.validate()?;
    let space = spec.space()?;
    let mut rng = derive_rng(seed, &[stream::WORLD]);
    let k = spec.cardinalities.len();
    let d = spec.value_dim;

    // Fixed random embedding of every attribute value.
    let value_emb: Vec<Vec<Vec<f64>>> = spec
        .cardinalities
        .iter()
        .map(|&c| {
            (0..c)
                .map(|_| {
                    (0..d)
                        .map(|_| rng.sample::<f64, _>(StandardNormal))
                        .collect()
                })
                .collect()
        })
        .collect();
    let arm_vec = |a: usize| -> Vec<f64> {
        (0..k)
            .flat_map(|j| value_emb[j][space.value_at(a, j)].iter().copied())
            .collect()
    };

    let n = space.arm_count();
    let field: Vec<f64> = match spec.smoothness {
        None => vec![0.0; n],
        Some(len) => {
            // exp(−‖x − y‖² / len) has spectral density N(0, 2/len · I).
            let sd = (2.0 / len).sqrt();
            let dim = k * d;
            let feats: Vec<(Vec<f64>, f64, f64)> = (0..spec.features)
                .map(|_| {
                    let w = (0..dim)
                        .map(|_| sd * rng.sample::<f64, _>(StandardNormal))
                        .collect();
                    let b = rng.random_range(0.0..std::f64::consts::TAU);
                    let c: f64 = rng.sample(StandardNormal);
                    (w, b, c)
                })
                .collect();
            let norm = (2.0 / spec.features as f64).sqrt();
            (0..n)
                .map(|a| {
                    let x = arm_vec(a);
                    norm * feats
                        .iter()
                        .map(|(w, b, c)| {
                            let dot: f64 = w.iter().zip(&x).map(|(p, q)| p * q).sum();
                            c * (dot + b).cos()
                        })
                        .sum::<f64>()
                })
                .collect()
        }
    };
    let gamma = field
        .iter()
        .map(|f| sigmoid(spec.accuracy_offset + spec.accuracy_amplitude * f))
        .collect();

    let base = sample_dirichlet(&vec![spec.prior_concentration; n], &mut rng)?;
    let mut prior: Vec<f64> = (0..n)
        .map(|a| {
            let bonus: f64 = spec
                .couplings
                .iter()
                .filter(|c| space.value_at(a, c.first) == space.value_at(a, c.second))
                .map(|c| c.strength)
                .sum();
            base[a] * bonus.exp()
        })
        .collect();
    let z: f64 = prior.iter().sum();
    prior.iter_mut().for_each(|p| *p /= z);

    Ok(SyntheticWorld {
        space,
        gamma,
        prior,
        error_rates: spec.error_rates.clone(),
        temperatures: spec.temperatures.clone(),
        seed,
    })
}

fn sample_index(weights: &[f64], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.random::<f64>() * weights.iter().sum::<f64>();
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    weights.len() - 1
}

/// Confusion row centered on `v`: `1 − e` there, `e / (c − 1)` elsewhere.
fn confusion_row(v: usize, c: usize, e: f64) -> Vec<f64> {
    (0..c)
        .map(|j| {
            if j == v {
                1.0 - e
            } else {
                e / (c as f64 - 1.0)
            }
        })
        .collect()
}

impl SyntheticWorld {
    /// True arm from the prior; each attribute is observed through a
    /// confusion matrix whose error rate is drawn per instance uniformly in
    /// `[0, 2e_k]`, and reported as the temperature-scaled log of the
    /// confusion row of the observed value.
    pub fn sample_instance(&self, id: usize, rng: &mut impl Rng) -> Instance {
        let arm = sample_index(&self.prior, rng);
        let correct = rng.random::<f64>() < self.gamma[arm];
        let log_probs = self.predict(arm, rng);
        Instance {
            id,
            log_probs,
            true_arm: arm,
            correct,
        }
    }

    fn predict(&self, arm: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
        let cards = self.space.cardinalities();
        (0..cards.len())
            .map(|k| {
                let c = cards[k];
                let e = rng.random::<f64>() * 2.0 * self.error_rates[k];
                let truth = self.space.value_at(arm, k);
                let seen = sample_index(&confusion_row(truth, c, e), rng);
                let t = self.temperatures[k];
                let logits: Vec<f64> = confusion_row(seen, c, e)
                    .into_iter()
                    .map(|p| p.max(PROB_FLOOR).ln() / t)
                    .collect();
                let lse = crate::special::log_sum_exp(&logits);
                logits.into_iter().map(|l| l - lse).collect()
            })
            .collect()
    }

    /// A reproducible pool of `size` instances for `tag`.
    pub fn sample_pool(&self, size: usize, tag: u64) -> Vec<Instance> {
        let mut rng = derive_rng(self.seed, &[stream::LABELS, tag]);
        (0..size)
            .map(|i| self.sample_instance(i, &mut rng))
            .collect()
    }

    /// Exact γ on arms with at least `GOLD_MIN_SUPPORT` instances in `pool`.
    pub fn gold(&self, pool: &[Instance]) -> GoldSurface {
        let mut support = vec![0; self.space.arm_count()];
        for x in pool {
            support[x.true_arm] += 1;
        }
        GoldSurface {
            gamma: self.gamma.clone(),
            support,
            min_support: GOLD_MIN_SUPPORT,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let w: Self = serde_json::from_str(s)?;
        if w.gamma.len() != w.space.arm_count() || w.prior.len() != w.space.arm_count() {
            return Err(Error::InvalidArgument(
                "world vectors do not match its space".into(),
            ));
        }
        Ok(w)
    }
}

/// The oracle reveals correctness, never the arm.
pub fn oracle_label(instance: &Instance) -> bool {
    instance.correct
}

pub const TEN_ARM_GAMMA: [f64; 10] = [0.1, 0.3, 0.5, 0.7, 0.8, 0.9, 0.6, 0.4, 0.3, 0.2];
pub const TEN_ARM_SUPPORT: [usize; 10] = [1, 1, 1, 20, 20, 20, 20, 1, 1, 1];

/// The 10-arm setting with fixed per-arm observation counts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TenArmWorld {
    pub space: AttributeSpace,
    pub gamma: Vec<f64>,
    pub support: Vec<usize>,
}

pub fn make_ten_arm_world() -> TenArmWorld {
    TenArmWorld {
        space: AttributeSpace::new(vec!["arm".into()], vec![10]).expect("valid space"),
        gamma: TEN_ARM_GAMMA.to_vec(),
        support: TEN_ARM_SUPPORT.to_vec(),
    }
}

impl TenArmWorld {
    /// Correct/incorrect counts with correctness resampled from γ, on top of
    /// a warm start of λ pseudo-observations at the observed accuracy.
    pub fn sample_counts(&self, seed: u64, strength: f64) -> Result<ArmCounts> {
        let mut rng = derive_rng(seed, &[stream::LABELS]);
        let mut obs = ArmCounts::zeros(self.gamma.len());
        for (a, (&g, &n)) in self.gamma.iter().zip(&self.support).enumerate() {
            for _ in 0..n {
                obs.add_observation(a, rng.random::<f64>() < g);
            }
        }
        let kappa = obs.total_correct() / obs.total_mass();
        let mut counts = ArmCounts::warm_start(self.gamma.len(), kappa, strength)?;
        for a in 0..self.gamma.len() {
            counts.c1[a] += obs.c1[a];
            counts.c0[a] += obs.c0[a];
        }
        Ok(counts)
    }

    pub fn gold(&self) -> GoldSurface {
        GoldSurface::exact(self.gamma.clone(), self.support.clone())
    }

    /// The same arms as an instance-generating world: arm frequencies follow
    /// the observation counts and the predictor is exact.
    pub fn synthetic(&self, seed: u64) -> SyntheticWorld {
        let total: usize = self.support.iter().sum();
        SyntheticWorld {
            space: self.space.clone(),
            gamma: self.gamma.clone(),
            prior: self
                .support
                .iter()
                .map(|&n| n as f64 / total as f64)
                .collect(),
            error_rates: vec![0.0],
            temperatures: vec![1.0],
            seed,
        }
    }
}
