//! Posterior mean and variance of per-arm accuracy.

use std::io::Write;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::likelihood::{PHI_MAX, PHI_MIN, PSI_MAX, PSI_MIN};
use crate::error::Result;
use crate::rng::{derive_rng, stream};
use crate::special::{normal_quantile, sigmoid, softplus};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    /// E(ρ | a)
    pub mean: Vec<f64>,
    /// V(ρ | a)
    pub variance: Vec<f64>,
    /// Plug-in Beta mean at the posterior mean of the latent functions.
    pub phi: Vec<f64>,
    /// Plug-in Beta scale at the posterior mean of the latent functions.
    pub psi: Vec<f64>,
}

impl PosteriorSummary {
    pub fn with_capacity(n: usize) -> Self {
        Self {
            mean: Vec::with_capacity(n),
            variance: Vec::with_capacity(n),
            phi: Vec::with_capacity(n),
            psi: Vec::with_capacity(n),
        }
    }

    pub fn push(&mut self, mean: f64, variance: f64, phi: f64, psi: f64) {
        self.mean.push(mean);
        self.variance.push(variance);
        self.phi.push(phi);
        self.psi.push(psi);
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }
}

/// Mean and variance of Beta(α, β), with a uniform fallback for empty arms.
pub fn beta_moments(alpha: f64, beta: f64) -> (f64, f64) {
    let s = alpha + beta;
    if !(s > 0.0) {
        return (0.5, 1.0 / 12.0);
    }
    let m = alpha / s;
    (m, m * (1.0 - m) / (s + 1.0))
}

/// `Φ⁻¹((i + ½) / S)` for `i < S`: one standard normal point per
/// equal-probability stratum.
pub fn stratified_normals(samples: usize) -> Vec<f64> {
    (0..samples)
        .map(|i| normal_quantile((i as f64 + 0.5) / samples as f64))
        .collect()
}

/// How latent draws map to Beta parameters.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Link {
    /// φ = σ(f); no scale function.
    Bernoulli,
    /// φ = σ(f), ψ = softplus(g).
    MeanScale,
    /// α = softplus(f), β = softplus(g).
    AlphaBeta,
}

fn beta_params(link: Link, f: f64, g: f64) -> (f64, f64) {
    match link {
        Link::Bernoulli => (sigmoid(f).clamp(PHI_MIN, PHI_MAX), f64::INFINITY),
        Link::MeanScale => (
            sigmoid(f).clamp(PHI_MIN, PHI_MAX),
            softplus(g).clamp(PSI_MIN, PSI_MAX),
        ),
        Link::AlphaBeta => {
            let a = softplus(f).clamp(PHI_MIN, PSI_MAX);
            let b = softplus(g).clamp(PHI_MIN, PSI_MAX);
            (a / (a + b), a + b)
        }
    }
}

/// Summaries from independent Gaussian marginals `(mean, var)` of f and g.
///
/// `E = E_f[φ]`, `V = E_{f,g}[φ(1−φ)/(ψ+1) + (φ − E)²]`. Expectations use
/// stratified quantiles; the g strata are randomly paired with the f strata.
pub fn summarize_gaussians(
    link: Link,
    f: &[(f64, f64)],
    g: Option<&[(f64, f64)]>,
    samples: usize,
    seed: u64,
) -> PosteriorSummary {
    let zf = stratified_normals(samples);
    let mut zg = zf.clone();
    zg.shuffle(&mut derive_rng(seed, &[stream::SUMMARY]));
    let mut out = PosteriorSummary::with_capacity(f.len());
    let mut draws = Vec::with_capacity(samples);
    for (a, &(mf, vf)) in f.iter().enumerate() {
        let (mg, vg) = g.map_or((0.0, 0.0), |g| g[a]);
        let (sf, sg) = (vf.max(0.0).sqrt(), vg.max(0.0).sqrt());
        draws.clear();
        draws.extend(
            zf.iter()
                .zip(&zg)
                .map(|(u, w)| beta_params(link, mf + sf * u, mg + sg * w)),
        );
        let e = draws.iter().map(|d| d.0).sum::<f64>() / samples as f64;
        let v = draws
            .iter()
            .map(|&(p, s)| {
                let within = if s.is_finite() {
                    p * (1.0 - p) / (s + 1.0)
                } else {
                    0.0
                };
                within + (p - e).powi(2)
            })
            .sum::<f64>()
            / samples as f64;
        let (phi, psi) = beta_params(link, mf, mg);
        out.push(e, v.min(0.25), phi, psi);
    }
    out
}

/// CSV with columns `arm_index, mean, variance, phi, psi`.
pub fn write_estimates_csv<W: Write>(summary: &PosteriorSummary, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["arm_index", "mean", "variance", "phi", "psi"])?;
    for a in 0..summary.len() {
        w.write_record(&[
            a.to_string(),
            summary.mean[a].to_string(),
            summary.variance[a].to_string(),
            summary.phi[a].to_string(),
            summary.psi[a].to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn degenerate_posterior() {
        // f = 0 → φ = 0.5; softplus(g) = 1 → g = ln(e − 1)
        let g0 = (std::f64::consts::E - 1.0).ln();
        let s = summarize_gaussians(Link::MeanScale, &[(0.0, 0.0)], Some(&[(g0, 0.0)]), 256, 0);
        assert!((s.mean[0] - 0.5).abs() < 1e-15);
        assert!((s.variance[0] - 0.125).abs() < 1e-12);
        let s = summarize_gaussians(Link::MeanScale, &[(0.0, 0.0)], Some(&[(1e5, 0.0)]), 256, 0);
        assert!(s.variance[0] < 1e-4);
    }

    #[test]
    fn diffuse_posterior_matches_monte_carlo() {
        let cases = [
            ((0.3, 4.0), (1.0, 1.0)),
            ((-1.5, 0.5), (3.0, 2.0)),
            ((2.0, 1.0), (0.0, 0.3)),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for ((mf, vf), (mg, vg)) in cases {
            let s = summarize_gaussians(Link::MeanScale, &[(mf, vf)], Some(&[(mg, vg)]), 256, 5);
            let n = 100_000;
            let draws: Vec<(f64, f64)> = (0..n)
                .map(|_| {
                    let u: f64 = rng.sample(StandardNormal);
                    let w: f64 = rng.sample(StandardNormal);
                    beta_params(Link::MeanScale, mf + vf.sqrt() * u, mg + vg.sqrt() * w)
                })
                .collect();
            let e = draws.iter().map(|d| d.0).sum::<f64>() / n as f64;
            let v = draws
                .iter()
                .map(|&(p, q)| p * (1.0 - p) / (q + 1.0) + (p - e).powi(2))
                .sum::<f64>()
                / n as f64;
            assert!((s.mean[0] - e).abs() / e < 0.02, "{} vs {e}", s.mean[0]);
            assert!(
                (s.variance[0] - v).abs() / v < 0.02,
                "{} vs {v}",
                s.variance[0]
            );
        }
    }

    #[test]
    fn variance_is_bounded() {
        let s = summarize_gaussians(Link::Bernoulli, &[(0.0, 100.0)], None, 256, 0);
        assert!(s.variance[0] <= 0.25);
        assert!(s.variance[0] > 0.2);
    }

    #[test]
    fn stratified_points_are_symmetric() {
        let z = stratified_normals(4);
        assert!((z[0] + z[3]).abs() < 1e-12);
        assert!((z[1] + z[2]).abs() < 1e-12);
        assert!(z.windows(2).all(|w| w[0] < w[1]));
    }
}
