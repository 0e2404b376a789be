use serde::{Deserialize, Serialize};

use super::graph::{Gradients, Graph, Mat, Var};
use crate::error::{Error, Result};

/// Index of a trainable matrix inside a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named trainable matrices.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Mat>,
    #[serde(default)]
    frozen: Vec<bool>,
}

/// Graph leaves for every parameter of a store, valid for one graph.
#[derive(Clone, Debug)]
pub struct Bound {
    vars: Vec<Var>,
}

impl std::ops::Index<ParamId> for Bound {
    type Output = Var;
    fn index(&self, id: ParamId) -> &Var {
        &self.vars[id.0]
    }
}

impl Bound {
    /// Gradients of every parameter, in store order.
    pub fn grads(&self, grads: &Gradients) -> Vec<Mat> {
        self.vars.iter().map(|v| grads.wrt(*v)).collect()
    }
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Mat) -> ParamId {
        self.names.push(name.into());
        self.values.push(value);
        self.frozen.push(false);
        ParamId(self.values.len() - 1)
    }

    /// Excludes a parameter from optimizer updates.
    pub fn freeze(&mut self, id: ParamId) {
        self.frozen[id.0] = true;
    }

    pub fn unfreeze(&mut self, id: ParamId) {
        self.frozen[id.0] = false;
    }

    pub fn is_frozen(&self, id: ParamId) -> bool {
        self.frozen.get(id.0).copied().unwrap_or(false)
    }

    pub fn get(&self, id: ParamId) -> &Mat {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Mat {
        &mut self.values[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    /// Number of scalar entries across all parameters.
    pub fn scalar_count(&self) -> usize {
        self.values.iter().map(|m| m.len()).sum()
    }

    /// Registers every parameter as a leaf of `g`.
    pub fn bind(&self, g: &mut Graph) -> Bound {
        Bound {
            vars: self.values.iter().map(|v| g.input(v.clone())).collect(),
        }
    }
}

/// Adam with bias correction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    first: Vec<Mat>,
    second: Vec<Mat>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    /// One descent step on `params` along `grads` (gradients of the loss to
    /// be minimized). Parameters are left untouched if any gradient entry is
    /// not finite.
    pub fn step(&mut self, params: &mut ParamStore, grads: &[Mat]) -> Result<()> {
        if grads.len() != params.len() {
            return Err(Error::Shape(format!(
                "{} gradients for {} parameters",
                grads.len(),
                params.len()
            )));
        }
        for (id, g) in params.ids().zip(grads) {
            if g.shape() != params.get(id).shape() {
                return Err(Error::Shape(format!(
                    "gradient for '{}' has shape {:?}, parameter {:?}",
                    params.name(id),
                    g.shape(),
                    params.get(id).shape()
                )));
            }
            if g.iter().any(|x| !x.is_finite()) {
                return Err(Error::Numerical(format!(
                    "non-finite gradient for '{}' at step {}",
                    params.name(id),
                    self.step + 1
                )));
            }
        }
        if self.first.len() != params.len() {
            self.first = params
                .values
                .iter()
                .map(|m| Mat::zeros(m.nrows(), m.ncols()))
                .collect();
            self.second = self.first.clone();
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (k, g) in grads.iter().enumerate() {
            if params.is_frozen(ParamId(k)) {
                continue;
            }
            let m = &mut self.first[k];
            let v = &mut self.second[k];
            let p = &mut params.values[k];
            for i in 0..g.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let mhat = m[i] / c1;
                let vhat = v[i] / c2;
                p[i] -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

/// Central finite-difference gradient of `loss` with respect to every entry
/// of every parameter in `params`.
pub fn numeric_gradient(
    params: &ParamStore,
    h: f64,
    mut loss: impl FnMut(&ParamStore) -> f64,
) -> Vec<Mat> {
    let mut work = params.clone();
    let mut out = Vec::with_capacity(params.len());
    for k in 0..params.len() {
        let mut g = Mat::zeros(params.values[k].nrows(), params.values[k].ncols());
        for i in 0..g.len() {
            let orig = work.values[k][i];
            work.values[k][i] = orig + h;
            let up = loss(&work);
            work.values[k][i] = orig - h;
            let down = loss(&work);
            work.values[k][i] = orig;
            g[i] = (up - down) / (2.0 * h);
        }
        out.push(g);
    }
    out
}

/// Largest relative discrepancy `|a − b| / max(|a|, |b|, floor)` between two
/// gradient lists.
pub fn max_relative_error(a: &[Mat], b: &[Mat], floor: f64) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| x.iter().zip(y.iter()))
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
        .fold(0.0, f64::max)
}
