//! Sparse variational GP over the learned arm embedding.
//!
//! Unwhitened: `q(u) = N(μ, Σ)` with `Σ = L Lᵀ`, prior `p(u) = N(0, K_mm)`.

use std::io::Write;

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::autodiff::{lower_cholesky, Adam, Bound, Graph, Mat, ParamId, ParamStore, Var};
use crate::error::{Error, Result};
use crate::kernel::{KernelParams, KernelSlot};
use crate::special::softplus_inv;

/// Jitter starts at this fraction of the mean kernel diagonal.
pub const JITTER_START: f64 = 1e-6;
/// Last relative jitter tried before giving up.
pub const JITTER_MAX: f64 = 1e-2;
pub const VARIANCE_FLOOR: f64 = 1e-12;

/// Smallest `j` in `JITTER_START · mean(diag) · 10^k` (capped at
/// `JITTER_MAX · mean(diag)`) for which `k + j I` factors.
pub fn find_jitter(k: &Mat) -> Result<(f64, Mat)> {
    let n = k.nrows();
    let mean_diag = (k.trace() / n as f64).max(f64::MIN_POSITIVE);
    let mut rel = JITTER_START;
    loop {
        let j = rel * mean_diag;
        let mut kj = k.clone();
        for i in 0..n {
            kj[(i, i)] += j;
        }
        if let Some(l) = lower_cholesky(&kj) {
            return Ok((j, l));
        }
        if rel >= JITTER_MAX * (1.0 - 1e-9) {
            return Err(Error::NotPositiveDefinite { jitter: j });
        }
        rel = (rel * 10.0).min(JITTER_MAX);
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvgpState {
    /// m × e inducing locations in embedding space.
    pub z: ParamId,
    /// m × 1
    pub mu: ParamId,
    /// m × m; only the strict lower triangle is used.
    pub l_lower: ParamId,
    /// m × 1, softplus gives the diagonal of L.
    pub l_diag: ParamId,
    pub slot: KernelSlot,
    pub m: usize,
}

/// Graph nodes for the prior factor, shared by the predictive and KL terms.
pub struct Prior {
    pub chol: Var,
    pub jitter: f64,
}

/// Per-arm predictive moments as n × 1 nodes.
pub struct Predictive {
    pub mean: Var,
    pub var: Var,
}

/// Indices of `m` arms drawn without replacement, or all arms if there are
/// no more than `m`.
pub fn choose_inducing(arm_count: usize, m: usize, rng: &mut impl Rng) -> Vec<usize> {
    if arm_count <= m {
        return (0..arm_count).collect();
    }
    let mut idx = sample(rng, arm_count, m).into_vec();
    idx.sort_unstable();
    idx
}

impl SvgpState {
    /// μ = 0 and Σ equal to the prior covariance at `z0`, so the KL starts
    /// at zero.
    pub fn new(
        store: &mut ParamStore,
        prefix: &str,
        slot: KernelSlot,
        z0: Mat,
        kernel_scale: f64,
        kernel_length: f64,
    ) -> Result<Self> {
        let m = z0.nrows();
        if m == 0 {
            return Err(Error::InvalidArgument(
                "at least one inducing point required".into(),
            ));
        }
        let k = crate::kernel::rbf(kernel_scale, kernel_length, &z0, &z0);
        let (_, l) = find_jitter(&k)?;
        let lower = Mat::from_fn(m, m, |i, j| if i > j { l[(i, j)] } else { 0.0 });
        let diag = Mat::from_fn(m, 1, |i, _| softplus_inv(l[(i, i)]));
        Ok(Self {
            z: store.add(format!("{prefix}.z"), z0),
            mu: store.add(format!("{prefix}.mu"), Mat::zeros(m, 1)),
            l_lower: store.add(format!("{prefix}.l_lower"), lower),
            l_diag: store.add(format!("{prefix}.l_diag"), diag),
            slot,
            m,
        })
    }

    /// Lower factor of Σ as a graph node.
    pub fn sigma_factor(&self, g: &mut Graph, bound: &Bound) -> Var {
        let strict = g.tril_strict(bound[self.l_lower]);
        let d = g.softplus(bound[self.l_diag]);
        let dm = g.diag_embed(d);
        g.add(strict, dm)
    }

    /// Σ = L Lᵀ, by value.
    pub fn sigma(&self, store: &ParamStore) -> Mat {
        let mut l = store.get(self.l_lower).clone();
        let d = store.get(self.l_diag);
        for i in 0..self.m {
            for j in i..self.m {
                l[(i, j)] = 0.0;
            }
            l[(i, i)] = crate::special::softplus(d[i]);
        }
        &l * l.transpose()
    }

    /// Factor of `K_mm + jitter·I`.
    pub fn prior(&self, g: &mut Graph, bound: &Bound, kernel: &KernelParams) -> Result<Prior> {
        let z = bound[self.z];
        let kmm = kernel.matrix(g, bound, z, z);
        let (jitter, _) = find_jitter(g.value(kmm))?;
        // The jitter scales with mean(diag K), so it stays on the tape.
        let mean_diag = g.value(kmm).trace() / self.m as f64;
        let rel = if mean_diag > 0.0 {
            jitter / mean_diag
        } else {
            0.0
        };
        let d = g.diag(kmm);
        let total = g.sum(d);
        let amount = g.scale(total, rel / self.m as f64);
        let eye = g.input(Mat::identity(self.m, self.m));
        let eye = g.scale_by(eye, amount);
        let kj = g.add(kmm, eye);
        let chol = g
            .cholesky(kj)
            .map_err(|_| Error::NotPositiveDefinite { jitter })?;
        Ok(Prior { chol, jitter })
    }

    /// `mean = A μ`, `var = diag(K_nn + A(Σ − K_mm)Aᵀ)` with `A = K_nm K_mm⁻¹`,
    /// computed as `diag K_nn − ‖L_k⁻¹ K_mn‖² + ‖Aᵀ-weighted L_Σ‖²` column-wise.
    pub fn predictive(
        &self,
        g: &mut Graph,
        bound: &Bound,
        kernel: &KernelParams,
        prior: &Prior,
        embeds: Var,
    ) -> Result<Predictive> {
        let n = g.value(embeds).nrows();
        let knm = kernel.matrix(g, bound, embeds, bound[self.z]);
        let kmn = g.transpose(knm);
        let w = g.solve_lower(prior.chol, kmn)?; // m × n
        let at = g.solve_lower_t(prior.chol, w)?; // m × n, equals Aᵀ
        let a = g.transpose(at);
        let mean = g.matmul(a, bound[self.mu]);

        let ls = self.sigma_factor(g, bound);
        let als = g.matmul(a, ls);
        let als2 = g.square(als);
        let explained = g.sum_rows(als2);
        let w2 = g.square(w);
        let reduced = g.sum_cols(w2);
        let reduced = g.transpose(reduced);
        let s = g.softplus(bound[kernel.scale_raw]);
        let knn = g.broadcast(s, n, 1);
        let v = g.sub(knn, reduced);
        let v = g.add(v, explained);
        let var = g.clamp(v, VARIANCE_FLOOR, f64::INFINITY);
        Ok(Predictive { mean, var })
    }

    /// KL(q(u) ‖ p(u)) as a 1×1 node.
    pub fn kl(&self, g: &mut Graph, bound: &Bound, prior: &Prior) -> Result<Var> {
        let ls = self.sigma_factor(g, bound);
        kl_node(g, prior.chol, bound[self.mu], ls)
    }
}

/// ½[‖L_k⁻¹L_Σ‖²_F + ‖L_k⁻¹μ‖² − m + 2Σ log diag L_k − 2Σ log diag L_Σ].
pub fn kl_node(g: &mut Graph, lk: Var, mu: Var, ls: Var) -> Result<Var> {
    let m = g.value(lk).nrows() as f64;
    let t = g.solve_lower(lk, ls)?;
    let t2 = g.square(t);
    let trace = g.sum(t2);
    let a = g.solve_lower(lk, mu)?;
    let a2 = g.square(a);
    let maha = g.sum(a2);
    let dk = g.diag(lk);
    let dk = g.log(dk);
    let ldk = g.sum(dk);
    let ds = g.diag(ls);
    let ds = g.log(ds);
    let lds = g.sum(ds);
    let logdet = g.sub(ldk, lds);
    let logdet = g.scale(logdet, 2.0);
    let r = g.add(trace, maha);
    let r = g.add(r, logdet);
    let r = g.offset(r, -m);
    Ok(g.scale(r, 0.5))
}

/// KL(N(μ, Σ) ‖ N(0, K)) by value.
pub fn gaussian_kl(mu: &[f64], sigma: &Mat, k: &Mat) -> Result<f64> {
    let m = mu.len();
    if sigma.shape() != (m, m) || k.shape() != (m, m) {
        return Err(Error::Shape(format!(
            "mean of length {m} with covariances {:?} and {:?}",
            sigma.shape(),
            k.shape()
        )));
    }
    let not_spd = || Error::InvalidArgument("covariance is not positive definite".into());
    let ls = lower_cholesky(sigma).ok_or_else(not_spd)?;
    let lk = lower_cholesky(k).ok_or_else(not_spd)?;
    let mut g = Graph::new();
    let lk = g.input(lk);
    let mu = g.input(Mat::from_column_slice(m, 1, mu));
    let ls = g.input(ls);
    let kl = kl_node(&mut g, lk, mu, ls)?;
    Ok(g.scalar_value(kl).max(0.0))
}

/// Draws `mean + chol(cov) ε` for each column of `eps` (m × S). Returns m × S.
pub fn sample_full(mean: &[f64], cov: &Mat, eps: &Mat) -> Result<Mat> {
    let (_, l) = find_jitter(cov)?;
    let mut out = &l * eps;
    for mut c in out.column_iter_mut() {
        for (x, m) in c.iter_mut().zip(mean) {
            *x += m;
        }
    }
    Ok(out)
}

/// S × n standard normal matrix.
pub fn standard_normal(rows: usize, cols: usize, rng: &mut impl Rng) -> Mat {
    Mat::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// Marginal reparameterized draws `mean_i + sqrt(var_i) ε_si` as S × n.
pub fn reparameterize(g: &mut Graph, pred: &Predictive, eps: &Mat) -> Var {
    let eps = g.input(eps.clone());
    let sd = g.sqrt(pred.var);
    let sd = g.transpose(sd);
    let mean = g.transpose(pred.mean);
    let scaled = g.mul_row(eps, sd);
    g.add_row(scaled, mean)
}

/// The pieces of one ELBO evaluation.
pub struct ElboParts {
    pub elbo: Var,
    pub loglik: Var,
    pub kl_f: Var,
    pub kl_g: Option<Var>,
}

/// `(1/S) Σ_s loglik(f_s, g_s) − KL_f − KL_g`. `loglik` receives S × n
/// sample matrices and must return the sum over samples and arms.
#[allow(clippy::too_many_arguments)]
pub fn elbo(
    g: &mut Graph,
    bound: &Bound,
    k_f: &KernelParams,
    k_g: Option<&KernelParams>,
    embeds: Var,
    f: &SvgpState,
    h: Option<&SvgpState>,
    eps_f: &Mat,
    eps_g: Option<&Mat>,
    loglik: impl FnOnce(&mut Graph, Var, Option<Var>) -> Result<Var>,
) -> Result<ElboParts> {
    let samples = eps_f.nrows();
    let prior_f = f.prior(g, bound, k_f)?;
    let pred_f = f.predictive(g, bound, k_f, &prior_f, embeds)?;
    let kl_f = f.kl(g, bound, &prior_f)?;
    let fs = reparameterize(g, &pred_f, eps_f);

    let (gs, kl_g) = match (h, k_g, eps_g) {
        (Some(h), Some(kg), Some(eg)) => {
            let prior_g = h.prior(g, bound, kg)?;
            let pred_g = h.predictive(g, bound, kg, &prior_g, embeds)?;
            let kl = h.kl(g, bound, &prior_g)?;
            (Some(reparameterize(g, &pred_g, eg)), Some(kl))
        }
        (None, _, _) => (None, None),
        _ => {
            return Err(Error::InvalidArgument(
                "second GP requires its kernel and noise".into(),
            ))
        }
    };

    let ll = loglik(g, fs, gs)?;
    let llv = g.scalar_value(ll);
    if !llv.is_finite() {
        return Err(Error::Numerical(format!("non-finite log-likelihood {llv}")));
    }
    let ll = g.scale(ll, 1.0 / samples as f64);
    let mut e = g.sub(ll, kl_f);
    if let Some(kg) = kl_g {
        e = g.sub(e, kg);
    }
    Ok(ElboParts {
        elbo: e,
        loglik: ll,
        kl_f,
        kl_g,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub warm_steps: usize,
    pub round_steps: usize,
    pub lr: f64,
    pub mc_samples: usize,
}

impl Default for Schedule {
    fn default() -> Self {
        Self {
            warm_steps: 1000,
            round_steps: 50,
            lr: 1e-3,
            mc_samples: 16,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: usize,
    pub elbo: f64,
    pub kl_f: f64,
    pub kl_g: f64,
    pub loglik: f64,
}

/// Runs `steps` Adam updates on −ELBO. `objective` builds the ELBO for a
/// global step index, which it should use to seed its noise.
pub fn fit(
    store: &mut ParamStore,
    adam: &mut Adam,
    first_step: usize,
    steps: usize,
    mut objective: impl FnMut(&mut Graph, &Bound, usize) -> Result<ElboParts>,
) -> Result<Vec<TraceRow>> {
    let mut trace = Vec::with_capacity(steps);
    for step in first_step..first_step + steps {
        let mut g = Graph::new();
        let bound = store.bind(&mut g);
        let parts = objective(&mut g, &bound, step)?;
        let row = TraceRow {
            step,
            elbo: g.scalar_value(parts.elbo),
            kl_f: g.scalar_value(parts.kl_f),
            kl_g: parts.kl_g.map_or(0.0, |v| g.scalar_value(v)),
            loglik: g.scalar_value(parts.loglik),
        };
        if !row.elbo.is_finite() {
            return Err(Error::Numerical(format!("ELBO diverged at step {step}")));
        }
        let loss = g.neg(parts.elbo);
        let grads = bound.grads(&g.backward(loss)?);
        adam.step(store, &grads)
            .map_err(|e| Error::Numerical(format!("step {step}: {e}")))?;
        trace.push(row);
    }
    Ok(trace)
}

/// CSV with columns `step, elbo, kl_f, kl_g, loglik`.
pub fn write_trace_csv<W: Write>(trace: &[TraceRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in trace {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}
