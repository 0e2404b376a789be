//! Joint arm model `P(a | x)` from per-attribute predictor outputs.
//!
//! `log P(a | x) = Σ_k t_k · log M_k(a_k | x) + N(a) − log Z_x`, with the
//! partition function summed exactly over every arm.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Adam, Bound, Graph, Mat, ParamId, ParamStore, Var};
use crate::error::{Error, Result};
use crate::kernel::EmbeddingNet;
use crate::rng::{derive_rng, stream};
use crate::space::AttributeSpace;
use crate::special::{log_sum_exp, softplus, softplus_inv};
use crate::world::Instance;

/// Probability floor used when scoring held-out arms.
pub const NLL_FLOOR: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CalibrationMode {
    /// Per-attribute argmax, as a one-hot arm.
    Raw,
    /// Temperatures only.
    Temp,
    /// Temperatures and the joint potential.
    Full,
}

impl CalibrationMode {
    pub const ALL: [CalibrationMode; 3] = [
        CalibrationMode::Raw,
        CalibrationMode::Temp,
        CalibrationMode::Full,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CalibrationMode::Raw => "Raw",
            CalibrationMode::Temp => "Temp",
            CalibrationMode::Full => "Full",
        }
    }
}

impl fmt::Display for CalibrationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CalibrationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown calibration mode '{s}'")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationConfig {
    pub batch_size: usize,
    /// Width of the potential network's hidden layer.
    pub hidden: usize,
    pub lr: f64,
    pub max_steps: usize,
    /// Steps between held-out evaluations.
    pub eval_every: usize,
    /// Evaluations without improvement before stopping.
    pub patience: usize,
    pub holdout_fraction: f64,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            batch_size: 64,
            hidden: 32,
            lr: 1e-2,
            max_steps: 3000,
            eval_every: 5,
            patience: 20,
            holdout_fraction: 0.1,
        }
    }
}

impl CalibrationConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(format!("calibration config: {m}")));
        if self.batch_size < 2 {
            return bad("batch_size must be at least 2");
        }
        if self.hidden == 0 {
            return bad("hidden must be positive");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr must be positive");
        }
        if self.eval_every == 0 || self.patience == 0 {
            return bad("eval_every and patience must be positive");
        }
        if !(0.0..1.0).contains(&self.holdout_fraction) {
            return bad("holdout_fraction must lie in [0, 1)");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationModel {
    pub mode: CalibrationMode,
    pub space: AttributeSpace,
    pub store: ParamStore,
    /// Softplus-reparameterized temperature per attribute.
    pub temperatures: Vec<ParamId>,
    /// Joint potential N over the one-hot arm encoding.
    pub net: EmbeddingNet,
    /// Optimizer steps taken by the last fit.
    pub steps: usize,
}

impl CalibrationModel {
    /// Unit temperatures and a potential that starts at zero.
    pub fn new(
        space: &AttributeSpace,
        mode: CalibrationMode,
        config: &CalibrationConfig,
        seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        let mut store = ParamStore::new();
        let temperatures = (0..space.attribute_count())
            .map(|k| store.add(format!("t{k}"), Mat::from_element(1, 1, softplus_inv(1.0))))
            .collect();
        let mut rng = derive_rng(seed, &[stream::CALIBRATION, stream::INIT]);
        let net = EmbeddingNet::new(
            &mut store,
            "n",
            space.encoding_width(),
            &[config.hidden],
            1,
            &mut rng,
        );
        store.get_mut(net.layers[1].weight).fill(0.0);
        Ok(Self {
            mode,
            space: space.clone(),
            store,
            temperatures,
            net,
            steps: 0,
        })
    }

    pub fn temperature_values(&self) -> Vec<f64> {
        self.temperatures
            .iter()
            .map(|&id| softplus(self.store.get(id)[0]))
            .collect()
    }

    /// N(a) for every arm; zero unless the mode is Full.
    pub fn potential(&self) -> Vec<f64> {
        if self.mode != CalibrationMode::Full {
            return vec![0.0; self.space.arm_count()];
        }
        self.net
            .embed(&self.store, &self.space.one_hot_matrix())
            .iter()
            .copied()
            .collect()
    }

    fn check(&self, log_probs: &[Vec<f64>]) -> Result<()> {
        let cards = self.space.cardinalities();
        if log_probs.len() != cards.len()
            || log_probs.iter().zip(cards).any(|(row, &c)| row.len() != c)
        {
            return Err(Error::Shape(format!(
                "predictor outputs do not match cardinalities {cards:?}"
            )));
        }
        Ok(())
    }

    fn scores(&self, temps: &[f64], potential: &[f64], log_probs: &[Vec<f64>]) -> Vec<f64> {
        (0..self.space.arm_count())
            .map(|a| {
                let mut s = potential[a];
                for (k, lp) in log_probs.iter().enumerate() {
                    s += temps[k] * lp[self.space.value_at(a, k)];
                }
                s
            })
            .collect()
    }

    /// `log P(a | x)` for every arm. Raw mode puts all mass on the
    /// per-attribute argmax arm (−∞ elsewhere).
    pub fn joint_logprob(&self, log_probs: &[Vec<f64>]) -> Result<Vec<f64>> {
        self.check(log_probs)?;
        if self.mode == CalibrationMode::Raw {
            let arm = raw_arm(&self.space, log_probs);
            let mut out = vec![f64::NEG_INFINITY; self.space.arm_count()];
            out[arm] = 0.0;
            return Ok(out);
        }
        let scores = self.scores(&self.temperature_values(), &self.potential(), log_probs);
        let z = log_sum_exp(&scores);
        Ok(scores.into_iter().map(|s| s - z).collect())
    }

    /// `P(a | x)` rows for many instances, evaluating N once.
    pub fn affiliations(&self, instances: &[Instance]) -> Result<Vec<Vec<f64>>> {
        if self.mode == CalibrationMode::Raw {
            return instances
                .iter()
                .map(|x| {
                    self.check(&x.log_probs)?;
                    let mut p = vec![0.0; self.space.arm_count()];
                    p[raw_arm(&self.space, &x.log_probs)] = 1.0;
                    Ok(p)
                })
                .collect();
        }
        let temps = self.temperature_values();
        let pot = self.potential();
        instances
            .iter()
            .map(|x| {
                self.check(&x.log_probs)?;
                let s = self.scores(&temps, &pot, &x.log_probs);
                let z = log_sum_exp(&s);
                Ok(s.into_iter().map(|v| (v - z).exp()).collect())
            })
            .collect()
    }

    /// Mean `−log max(P(a_i | x_i), NLL_FLOOR)` over `(instance, arm)` pairs.
    pub fn nll(&self, labeled: &[(&Instance, usize)]) -> Result<f64> {
        if labeled.is_empty() {
            return Err(Error::InvalidArgument("no instances to score".into()));
        }
        let xs: Vec<Instance> = labeled.iter().map(|(x, _)| (*x).clone()).collect();
        let p = self.affiliations(&xs)?;
        let total: f64 = p
            .iter()
            .zip(labeled)
            .map(|(row, &(_, a))| -row[a].max(NLL_FLOOR).ln())
            .sum();
        Ok(total / labeled.len() as f64)
    }

    /// Held-out NLL against the hidden true arms.
    pub fn true_arm_nll(&self, instances: &[Instance]) -> Result<f64> {
        let labeled: Vec<(&Instance, usize)> = instances.iter().map(|x| (x, x.true_arm)).collect();
        self.nll(&labeled)
    }

    /// Mean negative log-likelihood of a batch as a graph node. The
    /// potential is left out entirely when `use_potential` is false.
    pub fn batch_loss(
        &self,
        g: &mut Graph,
        bound: &Bound,
        batch: &[(&Instance, usize)],
        use_potential: bool,
    ) -> Result<Var> {
        let arms = self.space.arm_count();
        let b = batch.len();
        if b == 0 {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        for (x, _) in batch {
            self.check(&x.log_probs)?;
        }
        let mut scores: Option<Var> = None;
        for (k, &tid) in self.temperatures.iter().enumerate() {
            let lk = Mat::from_fn(b, arms, |i, a| {
                batch[i].0.log_probs[k][self.space.value_at(a, k)]
            });
            let lk = g.input(lk);
            let t = g.softplus(bound[tid]);
            let term = g.scale_by(lk, t);
            scores = Some(match scores {
                Some(s) => g.add(s, term),
                None => term,
            });
        }
        let mut scores = scores.ok_or_else(|| Error::InvalidSpace("no attributes".into()))?;
        if use_potential {
            let enc = g.input(self.space.one_hot_matrix());
            let n = self.net.forward(g, bound, enc);
            let n = g.transpose(n);
            scores = g.add_row(scores, n);
        }
        let z = g.log_sum_exp_rows(scores);
        let picked = g.pick(scores, batch.iter().map(|&(_, a)| a).collect());
        let nll = g.sub(z, picked);
        let total = g.sum(nll);
        Ok(g.scale(total, 1.0 / b as f64))
    }

    fn set_potential_frozen(&mut self, frozen: bool) {
        for l in &self.net.layers {
            for id in [l.weight, l.bias] {
                if frozen {
                    self.store.freeze(id);
                } else {
                    self.store.unfreeze(id);
                }
            }
        }
    }

    /// Writes `attribute, temperature`.
    pub fn write_temperatures_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["attribute", "temperature"])?;
        for (name, t) in self
            .space
            .attribute_names()
            .iter()
            .zip(self.temperature_values())
        {
            w.write_record([name.clone(), t.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Writes `instance_id, arm_index, probability` for every arm of each
    /// instance.
    pub fn write_affiliations_csv<W: Write>(&self, instances: &[Instance], out: W) -> Result<()> {
        let rows = self.affiliations(instances)?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["instance_id", "arm_index", "probability"])?;
        for (x, row) in instances.iter().zip(rows) {
            for (a, p) in row.into_iter().enumerate() {
                w.write_record([x.id.to_string(), a.to_string(), p.to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

fn raw_arm(space: &AttributeSpace, log_probs: &[Vec<f64>]) -> usize {
    let mut idx = 0;
    for (k, lp) in log_probs.iter().enumerate() {
        let mut best = 0;
        for (v, &x) in lp.iter().enumerate() {
            if x > lp[best] {
                best = v;
            }
        }
        idx = idx * space.cardinalities()[k] + best;
    }
    idx
}

/// Maximum-likelihood fit on seed instances (true arms) mixed half and half
/// with unlabeled instances (predicted arms as pseudo-labels). In Full mode
/// the potential is masked on every other step. Stops early on the NLL of a
/// held-out slice of the seed data and keeps the best parameters.
pub fn fit_calibration(
    seed_data: &[Instance],
    unlabeled: &[Instance],
    space: &AttributeSpace,
    mode: CalibrationMode,
    config: &CalibrationConfig,
    seed: u64,
) -> Result<CalibrationModel> {
    if seed_data.is_empty() {
        return Err(Error::InvalidArgument("calibration needs seed data".into()));
    }
    let mut model = CalibrationModel::new(space, mode, config, seed)?;
    if mode == CalibrationMode::Raw {
        return Ok(model);
    }
    if mode == CalibrationMode::Temp {
        model.set_potential_frozen(true);
    }
    let mut rng = derive_rng(seed, &[stream::CALIBRATION]);
    let mut order: Vec<usize> = (0..seed_data.len()).collect();
    rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut rng);
    let held = ((seed_data.len() as f64 * config.holdout_fraction).round() as usize)
        .min(seed_data.len() - 1);
    let (held_idx, train_idx) = order.split_at(held);
    let train: Vec<(&Instance, usize)> = train_idx
        .iter()
        .map(|&i| (&seed_data[i], seed_data[i].true_arm))
        .collect();
    let holdout: Vec<(&Instance, usize)> = if held_idx.is_empty() {
        train.clone()
    } else {
        held_idx
            .iter()
            .map(|&i| (&seed_data[i], seed_data[i].true_arm))
            .collect()
    };
    let pseudo: Vec<(&Instance, usize)> = unlabeled
        .iter()
        .map(|x| (x, x.predicted_arm(space)))
        .collect();

    let mut adam = Adam::new(config.lr);
    let mut best = (model.nll(&holdout)?, model.store.clone(), 0);
    let mut stale = 0;
    let half = if pseudo.is_empty() {
        config.batch_size
    } else {
        config.batch_size / 2
    };
    let mut steps = 0;
    for step in 0..config.max_steps {
        let mut batch = Vec::with_capacity(config.batch_size);
        for _ in 0..half {
            batch.push(train[rng.random_range(0..train.len())]);
        }
        while batch.len() < config.batch_size {
            batch.push(pseudo[rng.random_range(0..pseudo.len())]);
        }
        let use_potential = mode == CalibrationMode::Full && step % 2 == 0;
        if mode == CalibrationMode::Full {
            model.set_potential_frozen(!use_potential);
        }
        let mut g = Graph::new();
        let bound = model.store.bind(&mut g);
        let loss = model.batch_loss(&mut g, &bound, &batch, use_potential)?;
        let grads = g.backward(loss)?;
        adam.step(&mut model.store, &bound.grads(&grads))?;
        steps = step + 1;
        if steps % config.eval_every == 0 {
            let nll = model.nll(&holdout)?;
            if nll < best.0 {
                best = (nll, model.store.clone(), steps);
                stale = 0;
            } else {
                stale += 1;
                if stale >= config.patience {
                    break;
                }
            }
        }
    }
    model.store = best.1;
    model.set_potential_frozen(false);
    model.steps = steps;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{max_relative_error, numeric_gradient};
    use crate::world::{sample_world, Coupling, WorldSpec};

    fn instance(id: usize, probs: &[&[f64]], true_arm: usize) -> Instance {
        Instance {
            id,
            log_probs: probs
                .iter()
                .map(|r| r.iter().map(|p| p.ln()).collect())
                .collect(),
            true_arm,
            correct: true,
        }
    }

    fn with_temps(model: &mut CalibrationModel, t: &[f64]) {
        for (&id, &v) in model.temperatures.iter().zip(t) {
            model.store.get_mut(id)[0] = softplus_inv(v);
        }
    }

    #[test]
    fn single_attribute_identity() {
        let space = AttributeSpace::unnamed(vec![3]).unwrap();
        let m = CalibrationModel::new(
            &space,
            CalibrationMode::Full,
            &CalibrationConfig::default(),
            0,
        )
        .unwrap();
        let x = instance(0, &[&[0.2, 0.5, 0.3]], 0);
        let lp = m.joint_logprob(&x.log_probs).unwrap();
        for (a, p) in [0.2, 0.5, 0.3].iter().enumerate() {
            assert!((lp[a].exp() - p).abs() < 1e-12);
        }
    }

    #[test]
    fn temperature_two_sharpens() {
        let space = AttributeSpace::unnamed(vec![2]).unwrap();
        let mut m = CalibrationModel::new(
            &space,
            CalibrationMode::Temp,
            &CalibrationConfig::default(),
            0,
        )
        .unwrap();
        with_temps(&mut m, &[2.0]);
        let lp = m
            .joint_logprob(&instance(0, &[&[0.8, 0.2]], 0).log_probs)
            .unwrap();
        // 0.64 / 0.68 and 0.04 / 0.68
        assert!((lp[0].exp() - 0.64 / 0.68).abs() < 1e-12);
        assert!((lp[1].exp() - 0.04 / 0.68).abs() < 1e-12);
    }

    #[test]
    fn normalized_and_shift_invariant() {
        let space = AttributeSpace::unnamed(vec![2, 3, 2]).unwrap();
        let mut m = CalibrationModel::new(
            &space,
            CalibrationMode::Full,
            &CalibrationConfig::default(),
            4,
        )
        .unwrap();
        let mut rng = derive_rng(9, &[]);
        for id in m.store.ids().collect::<Vec<_>>() {
            m.store
                .get_mut(id)
                .apply(|v| *v += rng.random_range(-0.5..0.5));
        }
        let x = instance(0, &[&[0.3, 0.7], &[0.1, 0.6, 0.3], &[0.5, 0.5]], 0);
        let lp = m.joint_logprob(&x.log_probs).unwrap();
        let total: f64 = lp.iter().map(|v| v.exp()).sum();
        assert!((total - 1.0).abs() < 1e-9);
        let mut shifted = x.clone();
        shifted.log_probs[1].iter_mut().for_each(|v| *v += 3.7);
        let lp2 = m.joint_logprob(&shifted.log_probs).unwrap();
        for (a, b) in lp.iter().zip(&lp2) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn raw_is_one_hot_argmax() {
        let space = AttributeSpace::unnamed(vec![2, 3]).unwrap();
        let m = CalibrationModel::new(
            &space,
            CalibrationMode::Raw,
            &CalibrationConfig::default(),
            0,
        )
        .unwrap();
        let x = instance(0, &[&[0.3, 0.7], &[0.1, 0.6, 0.3]], 0);
        let p = m.affiliations(std::slice::from_ref(&x)).unwrap().remove(0);
        assert_eq!(
            p.iter().position(|&v| v == 1.0),
            Some(x.predicted_arm(&space))
        );
        assert_eq!(p.iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let space = AttributeSpace::unnamed(vec![2, 3]).unwrap();
        let m = CalibrationModel::new(
            &space,
            CalibrationMode::Temp,
            &CalibrationConfig::default(),
            0,
        )
        .unwrap();
        assert!(m.joint_logprob(&[vec![0.0, 0.0]]).is_err());
        assert!(fit_calibration(
            &[],
            &[],
            &space,
            CalibrationMode::Temp,
            &CalibrationConfig::default(),
            0
        )
        .is_err());
    }

    #[test]
    fn loss_gradient_matches_finite_differences() {
        let space = AttributeSpace::unnamed(vec![2, 3]).unwrap();
        let cfg = CalibrationConfig {
            hidden: 4,
            ..Default::default()
        };
        let mut m = CalibrationModel::new(&space, CalibrationMode::Full, &cfg, 1).unwrap();
        let mut rng = derive_rng(2, &[]);
        for id in m.store.ids().collect::<Vec<_>>() {
            m.store
                .get_mut(id)
                .apply(|v| *v += rng.random_range(-0.3..0.3));
        }
        let xs = [
            instance(0, &[&[0.3, 0.7], &[0.1, 0.6, 0.3]], 1),
            instance(1, &[&[0.9, 0.1], &[0.2, 0.2, 0.6]], 4),
            instance(2, &[&[0.5, 0.5], &[0.7, 0.2, 0.1]], 2),
        ];
        let batch: Vec<(&Instance, usize)> = xs.iter().map(|x| (x, x.true_arm)).collect();
        for use_potential in [true, false] {
            let mut g = Graph::new();
            let bound = m.store.bind(&mut g);
            let loss = m.batch_loss(&mut g, &bound, &batch, use_potential).unwrap();
            let analytic = bound.grads(&g.backward(loss).unwrap());
            let numeric = numeric_gradient(&m.store, 1e-5, |s| {
                let probe = CalibrationModel {
                    store: s.clone(),
                    ..m.clone()
                };
                let mut g = Graph::new();
                let b = probe.store.bind(&mut g);
                let l = probe.batch_loss(&mut g, &b, &batch, use_potential).unwrap();
                g.scalar_value(l)
            });
            let err = max_relative_error(&analytic, &numeric, 1e-6);
            assert!(err < 1e-4, "use_potential={use_potential}: {err}");
        }
    }

    fn world(temps: f64, couple: bool, conc: f64, seed: u64) -> crate::world::SyntheticWorld {
        let spec = WorldSpec {
            cardinalities: vec![2, 2, 3],
            error_rates: vec![0.15; 3],
            temperatures: vec![temps; 3],
            prior_concentration: conc,
            couplings: if couple {
                vec![Coupling {
                    first: 0,
                    second: 1,
                    strength: 3.0,
                }]
            } else {
                Vec::new()
            },
            ..Default::default()
        };
        sample_world(&spec, seed).unwrap()
    }

    #[test]
    fn calibrated_predictors_keep_unit_temperature() {
        for seed in 0..5 {
            let w = world(1.0, false, 1e6, seed);
            let seed_data = w.sample_pool(3000, 1);
            let unlabeled = w.sample_pool(3000, 2);
            let m = fit_calibration(
                &seed_data,
                &unlabeled,
                &w.space,
                CalibrationMode::Full,
                &CalibrationConfig::default(),
                seed,
            )
            .unwrap();
            for t in m.temperature_values() {
                assert!((t - 1.0).abs() < 0.2, "seed {seed}: t = {t}");
            }
            let n = m.potential();
            let spread = n.iter().cloned().fold(f64::MIN, f64::max)
                - n.iter().cloned().fold(f64::MAX, f64::min);
            assert!(spread <= 0.5, "seed {seed}: spread {spread}");
        }
    }

    #[test]
    fn sharpened_predictors_are_flattened() {
        let w = world(0.5, false, 1e6, 3);
        let m = fit_calibration(
            &w.sample_pool(1000, 1),
            &w.sample_pool(2000, 2),
            &w.space,
            CalibrationMode::Temp,
            &CalibrationConfig::default(),
            0,
        )
        .unwrap();
        assert!(
            m.temperature_values().iter().all(|&t| t < 1.0),
            "{:?}",
            m.temperature_values()
        );
    }

    #[test]
    fn potential_learns_deterministic_correlation() {
        // a2 always equals a1; the second predictor says nothing.
        let space = AttributeSpace::unnamed(vec![2, 2]).unwrap();
        let mut rng = derive_rng(5, &[]);
        let data: Vec<Instance> = (0..600)
            .map(|i| {
                let v = rng.random_range(0..2);
                let p = rng.random_range(0.6..0.95);
                let row = if v == 0 { [p, 1.0 - p] } else { [1.0 - p, p] };
                instance(i, &[&row, &[0.5, 0.5]], v * 2 + v)
            })
            .collect();
        let consistent = |p: &[f64]| p[0] + p[3];
        let full = fit_calibration(
            &data[..400],
            &[],
            &space,
            CalibrationMode::Full,
            &CalibrationConfig::default(),
            0,
        )
        .unwrap();
        let temp = fit_calibration(
            &data[..400],
            &[],
            &space,
            CalibrationMode::Temp,
            &CalibrationConfig::default(),
            0,
        )
        .unwrap();
        let pf = full.affiliations(&data[400..]).unwrap();
        let pt = temp.affiliations(&data[400..]).unwrap();
        assert!(pf.iter().all(|p| consistent(p) >= 0.9), "full");
        assert!(pt.iter().any(|p| consistent(p) < 0.9), "temp");
    }

    #[test]
    fn fit_does_not_increase_seed_loss() {
        let w = world(0.5, true, 0.5, 7);
        let seed_data = w.sample_pool(500, 1);
        let labeled: Vec<(&Instance, usize)> = seed_data.iter().map(|x| (x, x.true_arm)).collect();
        let cfg = CalibrationConfig::default();
        let before = CalibrationModel::new(&w.space, CalibrationMode::Full, &cfg, 0)
            .unwrap()
            .nll(&labeled)
            .unwrap();
        let m = fit_calibration(
            &seed_data,
            &w.sample_pool(500, 2),
            &w.space,
            CalibrationMode::Full,
            &cfg,
            0,
        )
        .unwrap();
        assert!(m.nll(&labeled).unwrap() <= before);
    }

    #[test]
    fn fit_is_deterministic() {
        let w = world(0.5, true, 0.5, 2);
        let s = w.sample_pool(300, 1);
        let u = w.sample_pool(300, 2);
        let cfg = CalibrationConfig {
            max_steps: 100,
            ..Default::default()
        };
        let a = fit_calibration(&s, &u, &w.space, CalibrationMode::Full, &cfg, 11).unwrap();
        let b = fit_calibration(&s, &u, &w.space, CalibrationMode::Full, &cfg, 11).unwrap();
        assert_eq!(a, b);
    }
}
