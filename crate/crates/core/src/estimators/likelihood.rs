//! Per-arm likelihood terms, by value and as graph nodes.

use crate::autodiff::{Graph, Mat, Var};
use crate::error::{Error, Result};
use crate::kernel::kernel_neighbors;
use crate::space::ArmCounts;
use crate::special::{ln_gamma, log_sum_exp};

pub const PHI_MIN: f64 = 1e-4;
pub const PHI_MAX: f64 = 1.0 - 1e-4;
pub const PSI_MIN: f64 = 1e-3;
pub const PSI_MAX: f64 = 1e4;
/// Floor for zero support proportions in the Dirichlet term.
pub const PROPORTION_FLOOR: f64 = 1e-8;

fn check_counts(c: f64, n: f64) -> Result<()> {
    if !(c >= 0.0) || !(n >= c - 1e-12) || !n.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "need 0 ≤ c ≤ n, got c={c}, n={n}"
        )));
    }
    Ok(())
}

/// `log B(φψ + c, (1−φ)ψ + n − c) − log B(φψ, (1−φ)ψ)` after clamping φ and ψ.
pub fn beta_binomial_loglik(phi: f64, psi: f64, c: f64, n: f64) -> Result<f64> {
    check_counts(c, n)?;
    if n == 0.0 {
        return Ok(0.0);
    }
    let phi = phi.clamp(PHI_MIN, PHI_MAX);
    let psi = psi.clamp(PSI_MIN, PSI_MAX);
    Ok(beta_binomial_ab(
        phi * psi,
        (1.0 - phi) * psi,
        c,
        (n - c).max(0.0),
    ))
}

fn beta_binomial_ab(a: f64, b: f64, c1: f64, c0: f64) -> f64 {
    ln_gamma(a + c1) + ln_gamma(b + c0) - ln_gamma(a + b + c1 + c0) - ln_gamma(a) - ln_gamma(b)
        + ln_gamma(a + b)
}

/// `c log σ(f) + (n − c) log σ(−f)`.
pub fn bernoulli_gp_loglik(f: f64, c: f64, n: f64) -> Result<f64> {
    check_counts(c, n)?;
    let log_sig = |x: f64| -log_sum_exp(&[0.0, -x]);
    Ok(c * log_sig(f) + (n - c) * log_sig(-f))
}

/// Support proportions `n_a / Σ n` with zeros floored and renormalized.
pub fn support_proportions(n: &[f64]) -> Result<Vec<f64>> {
    let total: f64 = n.iter().sum();
    if !(total > 0.0) {
        return Err(Error::InvalidArgument(
            "total support must be positive".into(),
        ));
    }
    let floored: Vec<f64> = n
        .iter()
        .map(|x| (x / total).max(PROPORTION_FLOOR))
        .collect();
    let z: f64 = floored.iter().sum();
    Ok(floored.into_iter().map(|p| p / z).collect())
}

/// Dirichlet log-density of the support proportions under concentration ψ.
pub fn dirichlet_scale_loglik(psi: &[f64], n: &[f64]) -> Result<f64> {
    if psi.len() != n.len() {
        return Err(Error::Shape(format!(
            "{} scales for {} arms",
            psi.len(),
            n.len()
        )));
    }
    let p = support_proportions(n)?;
    let mut out = ln_gamma(psi.iter().sum());
    for (s, q) in psi.iter().zip(&p) {
        out += (s - 1.0) * q.ln() - ln_gamma(*s);
    }
    Ok(out)
}

fn row(values: &[f64]) -> Mat {
    Mat::from_row_slice(1, values.len(), values)
}

/// Σ over samples and arms of the Beta-binomial term with shape parameters
/// `a`, `b` (S × n nodes).
pub fn beta_binomial_ab_node(g: &mut Graph, a: Var, b: Var, c1: &[f64], c0: &[f64]) -> Var {
    let n: Vec<f64> = c1.iter().zip(c0).map(|(x, y)| x + y).collect();
    let c1 = g.input(row(c1));
    let c0 = g.input(row(c0));
    let nr = g.input(row(&n));
    let ab = g.add(a, b);
    let t1 = g.add_row(a, c1);
    let t1 = g.lgamma(t1);
    let t2 = g.add_row(b, c0);
    let t2 = g.lgamma(t2);
    let t3 = g.add_row(ab, nr);
    let t3 = g.lgamma(t3);
    let t4 = g.lgamma(a);
    let t5 = g.lgamma(b);
    let t6 = g.lgamma(ab);
    let s = g.add(t1, t2);
    let s = g.sub(s, t3);
    let s = g.sub(s, t4);
    let s = g.sub(s, t5);
    let s = g.add(s, t6);
    g.sum(s)
}

/// Beta-binomial over mean/scale samples, clamped.
pub fn beta_binomial_node(g: &mut Graph, phi: Var, psi: Var, c1: &[f64], c0: &[f64]) -> Var {
    let phi = g.clamp(phi, PHI_MIN, PHI_MAX);
    let psi = g.clamp(psi, PSI_MIN, PSI_MAX);
    let a = g.mul(phi, psi);
    let b = g.sub(psi, a);
    beta_binomial_ab_node(g, a, b, c1, c0)
}

/// Σ over samples and arms of `c1 log σ(f) + c0 log σ(−f)`.
pub fn bernoulli_node(g: &mut Graph, f: Var, c1: &[f64], c0: &[f64]) -> Var {
    let w1 = g.input(row(c1));
    let w0 = g.input(row(c0));
    let pos = g.log_sigmoid(f);
    let nf = g.neg(f);
    let neg = g.log_sigmoid(nf);
    let a = g.mul_row(pos, w1);
    let b = g.mul_row(neg, w0);
    let s = g.add(a, b);
    g.sum(s)
}

/// Σ over samples of the Dirichlet log-density; `psi` is S × n (clamped here).
pub fn dirichlet_node(g: &mut Graph, psi: Var, proportions: &[f64]) -> Var {
    let psi = g.clamp(psi, PSI_MIN, PSI_MAX);
    let logp: Vec<f64> = proportions.iter().map(|p| p.ln()).collect();
    let lp = g.input(row(&logp));
    let shifted = g.offset(psi, -1.0);
    let t1 = g.mul_row(shifted, lp);
    let t1 = g.sum(t1);
    let t2 = g.lgamma(psi);
    let t2 = g.sum(t2);
    let total = g.sum_rows(psi);
    let t3 = g.lgamma(total);
    let t3 = g.sum(t3);
    let r = g.sub(t1, t2);
    g.add(r, t3)
}

/// Replaces the counts of arms with support below `threshold` by the
/// kernel-weighted mean of their `k` nearest arms' counts.
pub fn pool_counts(
    counts: &ArmCounts,
    embeddings: &Mat,
    length: f64,
    threshold: f64,
    k: usize,
) -> Result<ArmCounts> {
    let n = counts.arm_count();
    if embeddings.nrows() != n {
        return Err(Error::Shape(format!(
            "{} embeddings for {n} arms",
            embeddings.nrows()
        )));
    }
    if k >= n {
        return Err(Error::InvalidArgument(format!(
            "k = {k} needs more than {n} arms"
        )));
    }
    let mut out = counts.clone();
    for a in 0..n {
        if counts.n(a) >= threshold {
            continue;
        }
        let (mut c1, mut c0) = (0.0, 0.0);
        for (j, w) in kernel_neighbors(a, embeddings, length, k)? {
            c1 += w * counts.c1[j];
            c0 += w * counts.c0[j];
        }
        out.c1[a] = c1;
        out.c0[a] = c0;
    }
    Ok(out)
}
