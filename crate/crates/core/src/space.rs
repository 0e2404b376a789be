//! Attribute universe, arms, and the soft correctness accumulators.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::autodiff::Mat;
use crate::error::{Error, Result};

/// Largest arm count that may be enumerated exactly.
pub const DEFAULT_ARM_CAP: usize = 1_000_000;

/// One attribute combination. Values are indices into each attribute's domain.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Arm(pub Vec<usize>);

impl Arm {
    pub fn values(&self) -> &[usize] {
        &self.0
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct SpaceRepr {
    attribute_names: Vec<String>,
    cardinalities: Vec<usize>,
}

/// Cartesian product of discrete attribute domains.
///
/// Arms are indexed lexicographically by their value tuples (the last
/// attribute varies fastest); every per-arm vector in the crate uses this
/// order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "SpaceRepr", into = "SpaceRepr")]
pub struct AttributeSpace {
    names: Vec<String>,
    cardinalities: Vec<usize>,
    strides: Vec<usize>,
    offsets: Vec<usize>,
    arm_count: usize,
}

impl TryFrom<SpaceRepr> for AttributeSpace {
    type Error = Error;
    fn try_from(r: SpaceRepr) -> Result<Self> {
        AttributeSpace::new(r.attribute_names, r.cardinalities)
    }
}

impl From<AttributeSpace> for SpaceRepr {
    fn from(s: AttributeSpace) -> Self {
        SpaceRepr {
            attribute_names: s.names,
            cardinalities: s.cardinalities,
        }
    }
}

impl AttributeSpace {
    pub fn new(names: Vec<String>, cardinalities: Vec<usize>) -> Result<Self> {
        Self::with_cap(names, cardinalities, DEFAULT_ARM_CAP)
    }

    /// Attributes named `a0, a1, …`.
    pub fn unnamed(cardinalities: Vec<usize>) -> Result<Self> {
        let names = (0..cardinalities.len()).map(|k| format!("a{k}")).collect();
        Self::new(names, cardinalities)
    }

    pub fn with_cap(names: Vec<String>, cardinalities: Vec<usize>, cap: usize) -> Result<Self> {
        if cardinalities.is_empty() {
            return Err(Error::InvalidSpace(
                "at least one attribute is required".into(),
            ));
        }
        if names.len() != cardinalities.len() {
            return Err(Error::InvalidSpace(format!(
                "{} names for {} attributes",
                names.len(),
                cardinalities.len()
            )));
        }
        if let Some(k) = cardinalities.iter().position(|&c| c < 2) {
            return Err(Error::InvalidSpace(format!(
                "attribute '{}' has cardinality {} (< 2)",
                names[k], cardinalities[k]
            )));
        }
        let count = cardinalities
            .iter()
            .fold(1u128, |acc, &c| acc.saturating_mul(c as u128));
        if count > cap as u128 {
            return Err(Error::SpaceTooLarge { count, cap });
        }
        let k = cardinalities.len();
        let mut strides = vec![1usize; k];
        for i in (0..k - 1).rev() {
            strides[i] = strides[i + 1] * cardinalities[i + 1];
        }
        let mut offsets = vec![0usize; k];
        for i in 1..k {
            offsets[i] = offsets[i - 1] + cardinalities[i - 1];
        }
        Ok(Self {
            names,
            cardinalities,
            strides,
            offsets,
            arm_count: count as usize,
        })
    }

    pub fn attribute_names(&self) -> &[String] {
        &self.names
    }

    pub fn cardinalities(&self) -> &[usize] {
        &self.cardinalities
    }

    /// Number of attributes K.
    pub fn attribute_count(&self) -> usize {
        self.cardinalities.len()
    }

    /// |𝒜|.
    pub fn arm_count(&self) -> usize {
        self.arm_count
    }

    /// Width of the concatenated one-hot encoding, Σ_k cardinality_k.
    pub fn encoding_width(&self) -> usize {
        self.cardinalities.iter().sum()
    }

    /// Column where attribute `k` starts in the one-hot encoding.
    pub fn encoding_offset(&self, k: usize) -> usize {
        self.offsets[k]
    }

    pub fn contains(&self, arm: &Arm) -> bool {
        arm.0.len() == self.cardinalities.len()
            && arm.0.iter().zip(&self.cardinalities).all(|(v, c)| v < c)
    }

    pub fn index_of(&self, arm: &Arm) -> Result<usize> {
        if !self.contains(arm) {
            return Err(Error::ArmOutOfRange(arm.0.clone()));
        }
        Ok(arm.0.iter().zip(&self.strides).map(|(v, s)| v * s).sum())
    }

    pub fn arm_at(&self, index: usize) -> Arm {
        assert!(index < self.arm_count, "arm index {index} out of range");
        Arm(self
            .strides
            .iter()
            .zip(&self.cardinalities)
            .map(|(s, c)| (index / s) % c)
            .collect())
    }

    /// Value of attribute `k` for the arm at `index`, without allocating.
    pub fn value_at(&self, index: usize, k: usize) -> usize {
        (index / self.strides[k]) % self.cardinalities[k]
    }

    /// Every arm, in index order.
    pub fn arms(&self) -> Vec<Arm> {
        (0..self.arm_count).map(|i| self.arm_at(i)).collect()
    }

    /// |𝒜| × Σ cardinalities matrix of concatenated one-hots.
    pub fn one_hot_matrix(&self) -> Mat {
        let mut m = Mat::zeros(self.arm_count, self.encoding_width());
        for i in 0..self.arm_count {
            for k in 0..self.cardinalities.len() {
                m[(i, self.offsets[k] + self.value_at(i, k))] = 1.0;
            }
        }
        m
    }
}

/// Free-standing form of [`AttributeSpace::arms`].
pub fn enumerate_arms(space: &AttributeSpace) -> Vec<Arm> {
    space.arms()
}

/// Fractional correct (`c1`) and incorrect (`c0`) observation weights per arm.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArmCounts {
    pub c1: Vec<f64>,
    pub c0: Vec<f64>,
}

impl ArmCounts {
    pub fn zeros(arm_count: usize) -> Self {
        Self {
            c1: vec![0.0; arm_count],
            c0: vec![0.0; arm_count],
        }
    }

    /// Every arm starts with λ pseudo-observations at prior accuracy κ.
    pub fn warm_start(arm_count: usize, prior_accuracy: f64, strength: f64) -> Result<Self> {
        if !(strength > 0.0) || !strength.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "prior strength must be positive, got {strength}"
            )));
        }
        if !(0.0..=1.0).contains(&prior_accuracy) {
            return Err(Error::InvalidArgument(format!(
                "prior accuracy must lie in [0, 1], got {prior_accuracy}"
            )));
        }
        Ok(Self {
            c1: vec![strength * prior_accuracy; arm_count],
            c0: vec![strength * (1.0 - prior_accuracy); arm_count],
        })
    }

    pub fn arm_count(&self) -> usize {
        self.c1.len()
    }

    /// n[a] = c0[a] + c1[a].
    pub fn n(&self, arm: usize) -> f64 {
        self.c0[arm] + self.c1[arm]
    }

    pub fn totals(&self) -> Vec<f64> {
        self.c0.iter().zip(&self.c1).map(|(a, b)| a + b).collect()
    }

    pub fn total_mass(&self) -> f64 {
        self.c0.iter().sum::<f64>() + self.c1.iter().sum::<f64>()
    }

    pub fn total_correct(&self) -> f64 {
        self.c1.iter().sum()
    }

    /// Spreads one labeled instance across arms by `arm_dist`.
    pub fn accumulate(&mut self, arm_dist: &[f64], correct: bool) -> Result<()> {
        if arm_dist.len() != self.arm_count() {
            return Err(Error::Shape(format!(
                "arm distribution has {} entries for {} arms",
                arm_dist.len(),
                self.arm_count()
            )));
        }
        if let Some(p) = arm_dist.iter().find(|p| !(**p >= 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "arm distribution has a negative or NaN entry {p}"
            )));
        }
        let total: f64 = arm_dist.iter().sum();
        if (total - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidArgument(format!(
                "arm distribution sums to {total}, expected 1"
            )));
        }
        let target = if correct { &mut self.c1 } else { &mut self.c0 };
        for (t, p) in target.iter_mut().zip(arm_dist) {
            *t += p;
        }
        Ok(())
    }

    /// Point assignment of one labeled instance.
    pub fn add_observation(&mut self, arm: usize, correct: bool) {
        if correct {
            self.c1[arm] += 1.0;
        } else {
            self.c0[arm] += 1.0;
        }
    }
}

/// Ground-truth accuracy per arm, estimated from a fully labeled pool.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GoldSurface {
    /// Mean correctness per arm (0 where the arm has no support).
    pub gamma: Vec<f64>,
    pub support: Vec<usize>,
    pub min_support: usize,
}

/// Arms with fewer labeled pool examples than this are not evaluated.
pub const GOLD_MIN_SUPPORT: usize = 5;

impl GoldSurface {
    pub fn is_active(&self, arm: usize) -> bool {
        self.support[arm] >= self.min_support
    }

    pub fn active_arms(&self) -> Vec<usize> {
        (0..self.gamma.len())
            .filter(|&a| self.is_active(a))
            .collect()
    }

    /// Every arm is active with the given accuracies and unit support; for
    /// settings where γ is known exactly.
    pub fn exact(gamma: Vec<f64>, support: Vec<usize>) -> Self {
        Self {
            gamma,
            support,
            min_support: 0,
        }
    }

    /// CSV with columns `arm_index, <attribute names>..., gamma, support`;
    /// `gamma` is empty for inactive arms.
    pub fn write_csv<W: Write>(&self, space: &AttributeSpace, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["arm_index".to_string()];
        header.extend(space.attribute_names().iter().cloned());
        header.push("gamma".into());
        header.push("support".into());
        w.write_record(&header)?;
        for a in 0..self.gamma.len() {
            let mut row = vec![a.to_string()];
            row.extend(space.arm_at(a).0.iter().map(|v| v.to_string()));
            row.push(if self.is_active(a) {
                self.gamma[a].to_string()
            } else {
                String::new()
            });
            row.push(self.support[a].to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Empirical accuracy per arm from `(arm index, correct)` pairs.
pub fn gold_surface(
    labeled: impl IntoIterator<Item = (usize, bool)>,
    space: &AttributeSpace,
) -> GoldSurface {
    let n = space.arm_count();
    let mut hits = vec![0usize; n];
    let mut support = vec![0usize; n];
    for (arm, correct) in labeled {
        support[arm] += 1;
        hits[arm] += correct as usize;
    }
    let gamma = hits
        .iter()
        .zip(&support)
        .map(|(&h, &s)| if s > 0 { h as f64 / s as f64 } else { 0.0 })
        .collect();
    GoldSurface {
        gamma,
        support,
        min_support: GOLD_MIN_SUPPORT,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn enumerates_single_binary_attribute() {
        let s = AttributeSpace::unnamed(vec![2]).unwrap();
        assert_eq!(s.arms(), vec![Arm(vec![0]), Arm(vec![1])]);
    }

    #[test]
    fn enumerates_lexicographically() {
        let s = AttributeSpace::unnamed(vec![2, 3]).unwrap();
        let arms = enumerate_arms(&s);
        assert_eq!(arms.len(), 6);
        assert_eq!(arms[0], Arm(vec![0, 0]));
        assert_eq!(arms[1], Arm(vec![0, 1]));
        assert_eq!(arms[5], Arm(vec![1, 2]));
        assert!(arms.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn twelve_binary_attributes_give_4096_arms() {
        let s = AttributeSpace::unnamed(vec![2; 12]).unwrap();
        assert_eq!(s.arms().len(), 4096);
    }

    #[test]
    fn rejects_oversized_and_degenerate_spaces() {
        assert!(matches!(
            AttributeSpace::unnamed(vec![10; 7]),
            Err(Error::SpaceTooLarge { .. })
        ));
        assert!(AttributeSpace::unnamed(vec![]).is_err());
        assert!(AttributeSpace::unnamed(vec![2, 1]).is_err());
        assert!(AttributeSpace::with_cap(vec!["x".into()], vec![5], 4).is_err());
    }

    #[test]
    fn one_hot_rows_mark_each_attribute() {
        let s = AttributeSpace::unnamed(vec![2, 3]).unwrap();
        let m = s.one_hot_matrix();
        assert_eq!(m.shape(), (6, 5));
        // arm (1, 2) → columns 1 and 2 + 2
        let row: Vec<f64> = m.row(5).iter().copied().collect();
        assert_eq!(row, vec![0.0, 1.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn space_serde_validates() {
        let s = AttributeSpace::new(vec!["x".into(), "y".into()], vec![2, 4]).unwrap();
        let js = serde_json::to_string(&s).unwrap();
        let back: AttributeSpace = serde_json::from_str(&js).unwrap();
        assert_eq!(back, s);
        let bad = r#"{"attribute_names":["x"],"cardinalities":[1]}"#;
        assert!(serde_json::from_str::<AttributeSpace>(bad).is_err());
    }

    #[test]
    fn accumulate_point_and_soft() {
        let mut c = ArmCounts::zeros(2);
        c.accumulate(&[1.0, 0.0], true).unwrap();
        assert_eq!(c.c1, vec![1.0, 0.0]);
        c.accumulate(&[0.8, 0.2], true).unwrap();
        assert_eq!(c.c1, vec![1.8, 0.2]);
        assert_eq!(c.c0, vec![0.0, 0.0]);
        c.accumulate(&[0.5, 0.5], false).unwrap();
        assert_eq!(c.c0, vec![0.5, 0.5]);
        assert!((c.total_mass() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn accumulate_rejects_bad_distributions() {
        let mut c = ArmCounts::zeros(2);
        assert!(c.accumulate(&[1.2, -0.2], true).is_err());
        assert!(c.accumulate(&[0.5, 0.4], true).is_err());
        assert!(c.accumulate(&[1.0], true).is_err());
    }

    #[test]
    fn warm_start_values() {
        let c = ArmCounts::warm_start(3, 0.5, 0.1).unwrap();
        assert!(c.c0.iter().chain(&c.c1).all(|&v| (v - 0.05).abs() < 1e-15));
        let c = ArmCounts::warm_start(1, 0.9, 0.1).unwrap();
        assert!((c.c0[0] - 0.01).abs() < 1e-15 && (c.c1[0] - 0.09).abs() < 1e-15);
        let c = ArmCounts::warm_start(1, 1.0, 0.1).unwrap();
        assert_eq!((c.c0[0], c.c1[0]), (0.0, 0.1));
        assert!(ArmCounts::warm_start(1, 0.5, 0.0).is_err());
        assert!(ArmCounts::warm_start(1, 0.5, -1.0).is_err());
    }

    #[test]
    fn gold_surface_support_rule() {
        let s = AttributeSpace::unnamed(vec![3]).unwrap();
        let mut pool: Vec<(usize, bool)> = [1, 1, 0, 1, 0].iter().map(|&c| (0, c == 1)).collect();
        pool.extend([(1, true), (1, true), (1, true), (1, false)]);
        let g = gold_surface(pool, &s);
        assert!((g.gamma[0] - 0.6).abs() < 1e-15);
        assert_eq!(g.support[0], 5);
        assert!(g.is_active(0));
        assert!(!g.is_active(1));
        assert!(!g.is_active(2));
        assert_eq!(g.active_arms(), vec![0]);

        let empty = gold_surface(std::iter::empty(), &s);
        assert!(empty.active_arms().is_empty());
    }

    #[test]
    fn gold_surface_csv_layout() {
        let s = AttributeSpace::new(vec!["hat".into(), "glasses".into()], vec![2, 2]).unwrap();
        let g = gold_surface((0..5).map(|i| (3, i % 2 == 0)), &s);
        let mut buf = Vec::new();
        g.write_csv(&s, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "arm_index,hat,glasses,gamma,support");
        assert_eq!(lines[1], "0,0,0,,0");
        assert_eq!(lines[4], "3,1,1,0.6,5");
    }

    proptest! {
        #[test]
        fn index_bijection(cards in proptest::collection::vec(2usize..5, 1..5), pick in 0usize..10_000) {
            let s = AttributeSpace::unnamed(cards).unwrap();
            let i = pick % s.arm_count();
            let arm = s.arm_at(i);
            prop_assert_eq!(s.index_of(&arm).unwrap(), i);
            for k in 0..s.attribute_count() {
                prop_assert_eq!(s.value_at(i, k), arm.0[k]);
            }
        }

        #[test]
        fn one_hot_accumulation_is_integer_counting(obs in proptest::collection::vec((0usize..6, any::<bool>()), 0..60)) {
            let mut soft = ArmCounts::zeros(6);
            let mut hard = ArmCounts::zeros(6);
            for &(a, c) in &obs {
                let mut d = vec![0.0; 6];
                d[a] = 1.0;
                soft.accumulate(&d, c).unwrap();
                hard.add_observation(a, c);
            }
            prop_assert_eq!(soft, hard);
        }

        #[test]
        fn mass_is_conserved(dists in proptest::collection::vec(proptest::collection::vec(0.0f64..1.0, 5), 1..40)) {
            let mut c = ArmCounts::warm_start(5, 0.7, 0.1).unwrap();
            for (i, raw) in dists.iter().enumerate() {
                let total: f64 = raw.iter().sum::<f64>() + 1e-9;
                let d: Vec<f64> = raw.iter().map(|x| (x + 1e-9 / 5.0) / total).collect();
                c.accumulate(&d, i % 3 == 0).unwrap();
            }
            let expected = 0.1 * 5.0 + dists.len() as f64;
            prop_assert!((c.total_mass() - expected).abs() < 1e-9 * dists.len() as f64 + 1e-12);
        }
    }
}
