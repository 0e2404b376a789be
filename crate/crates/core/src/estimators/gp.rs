use serde::{Deserialize, Serialize};

use super::likelihood::{
    bernoulli_node, beta_binomial_ab_node, beta_binomial_node, dirichlet_node, pool_counts,
    support_proportions, PHI_MIN, PSI_MAX,
};
use super::summary::{summarize_gaussians, Link, PosteriorSummary};
use super::EstimatorKind;
use crate::autodiff::{Adam, Bound, Graph, Mat, ParamStore, Var};
use crate::error::{Error, Result};
use crate::kernel::{DeepKernel, EmbeddingNet, KernelParams, KernelSlot};
use crate::rng::{derive_rng, stream};
use crate::space::{ArmCounts, AttributeSpace};
use crate::svgp::{
    self, choose_inducing, standard_normal, ElboParts, Schedule, SvgpState, TraceRow,
};

/// How arms are presented to the embedding network.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArmEncoding {
    /// Concatenated one-hot attribute values.
    OneHot,
    /// The arm's integer index as a single feature.
    Index,
}

impl ArmEncoding {
    pub fn encode(self, space: &AttributeSpace) -> Mat {
        match self {
            ArmEncoding::OneHot => space.one_hot_matrix(),
            ArmEncoding::Index => Mat::from_fn(space.arm_count(), 1, |i, _| i as f64),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GpConfig {
    pub hidden: Vec<usize>,
    pub embedding_dim: usize,
    pub inducing: usize,
    pub schedule: Schedule,
    pub dirichlet_weight: f64,
    pub pool_threshold: f64,
    pub pool_neighbors: usize,
    /// Pooled counts are recomputed from the current embedding this often.
    pub neighbor_refresh: usize,
    pub summary_samples: usize,
    pub encoding: ArmEncoding,
    /// When false the encoding is used as the embedding, unchanged.
    pub learn_embedding: bool,
    pub init_scale: f64,
    pub init_length: f64,
}

impl Default for GpConfig {
    fn default() -> Self {
        Self {
            hidden: vec![32, 32],
            embedding_dim: 20,
            inducing: 50,
            schedule: Schedule::default(),
            dirichlet_weight: 1.0,
            pool_threshold: 5.0,
            pool_neighbors: 3,
            neighbor_refresh: 50,
            summary_samples: 256,
            encoding: ArmEncoding::OneHot,
            learn_embedding: true,
            init_scale: 1.0,
            init_length: 1.0,
        }
    }
}

impl GpConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if self.inducing == 0 {
            return bad("inducing must be positive");
        }
        if self.schedule.mc_samples == 0 || self.summary_samples == 0 {
            return bad("sample counts must be positive");
        }
        if !(self.schedule.lr > 0.0) {
            return bad("learning rate must be positive");
        }
        if self.neighbor_refresh == 0 || self.pool_neighbors == 0 {
            return bad("pooling parameters must be positive");
        }
        if !(self.init_scale > 0.0 && self.init_length > 0.0) {
            return bad("initial kernel scale and length must be positive");
        }
        if !(self.dirichlet_weight >= 0.0) {
            return bad("dirichlet weight must be non-negative");
        }
        Ok(())
    }
}

/// Counts as seen by one training step.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainCounts {
    /// Counts for the data likelihood (pooled for SLP).
    pub c1: Vec<f64>,
    pub c0: Vec<f64>,
    /// Support proportions from the raw counts, for the Dirichlet term.
    pub proportions: Vec<f64>,
}

/// A GP-based estimator: shared embedding, one or two SVGPs, optimizer state.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GpModel {
    pub kind: EstimatorKind,
    pub config: GpConfig,
    pub seed: u64,
    pub store: ParamStore,
    pub adam: Adam,
    pub kernel: DeepKernel,
    pub f: SvgpState,
    pub g: Option<SvgpState>,
    pub encodings: Mat,
    /// Global step counter; also keys the ELBO noise.
    pub step: usize,
}

impl GpModel {
    pub fn new(
        kind: EstimatorKind,
        space: &AttributeSpace,
        config: GpConfig,
        seed: u64,
    ) -> Result<Self> {
        if !kind.is_gp() {
            return Err(Error::InvalidArgument(format!(
                "{kind} is not a GP estimator"
            )));
        }
        config.validate()?;
        let mut rng = derive_rng(seed, &[stream::INIT]);
        let mut store = ParamStore::new();
        let encodings = config.encoding.encode(space);
        let width = encodings.ncols();
        let net = if config.learn_embedding {
            EmbeddingNet::new(
                &mut store,
                "net",
                width,
                &config.hidden,
                config.embedding_dim,
                &mut rng,
            )
        } else {
            let net = EmbeddingNet::identity(&mut store, "net", width);
            net.freeze(&mut store);
            net
        };
        let k1 = KernelParams::new(&mut store, "k1", config.init_scale, config.init_length);
        let k2 = KernelParams::new(&mut store, "k2", config.init_scale, config.init_length);
        let emb = net.embed(&store, &encodings);
        let n = space.arm_count();
        let rows = |idx: Vec<usize>| Mat::from_fn(idx.len(), emb.ncols(), |i, j| emb[(idx[i], j)]);
        let zf = rows(choose_inducing(n, config.inducing, &mut rng));
        let f = SvgpState::new(
            &mut store,
            "f",
            KernelSlot::K1,
            zf,
            config.init_scale,
            config.init_length,
        )?;
        let g = if kind.has_scale_gp() {
            let zg = rows(choose_inducing(n, config.inducing, &mut rng));
            Some(SvgpState::new(
                &mut store,
                "g",
                KernelSlot::K2,
                zg,
                config.init_scale,
                config.init_length,
            )?)
        } else {
            None
        };
        Ok(Self {
            kind,
            adam: Adam::new(config.schedule.lr),
            config,
            seed,
            store,
            kernel: DeepKernel { net, k1, k2 },
            f,
            g,
            encodings,
            step: 0,
        })
    }

    pub fn arm_count(&self) -> usize {
        self.encodings.nrows()
    }

    pub fn embeddings(&self) -> Mat {
        self.kernel.net.embed(&self.store, &self.encodings)
    }

    pub fn kernel_length(&self, slot: KernelSlot) -> f64 {
        self.kernel.kernel(slot).length(&self.store)
    }

    pub fn kernel_scale(&self, slot: KernelSlot) -> f64 {
        self.kernel.kernel(slot).scale(&self.store)
    }

    /// Likelihood counts for the current parameters.
    pub fn train_counts(&self, counts: &ArmCounts) -> Result<TrainCounts> {
        if counts.arm_count() != self.arm_count() {
            return Err(Error::Shape(format!(
                "{} count entries for {} arms",
                counts.arm_count(),
                self.arm_count()
            )));
        }
        let proportions = support_proportions(&counts.totals())?;
        let used = if self.kind.uses_pooling() {
            pool_counts(
                counts,
                &self.embeddings(),
                self.kernel_length(KernelSlot::K1),
                self.config.pool_threshold,
                self.config.pool_neighbors,
            )?
        } else {
            counts.clone()
        };
        Ok(TrainCounts {
            c1: used.c1,
            c0: used.c0,
            proportions,
        })
    }

    fn loglik(&self, g: &mut Graph, fs: Var, gs: Option<Var>, tc: &TrainCounts) -> Result<Var> {
        let need_g = || Error::InvalidArgument("scale GP samples missing".into());
        Ok(match self.kind {
            EstimatorKind::BernGP => bernoulli_node(g, fs, &tc.c1, &tc.c0),
            EstimatorKind::BetaGpAb => {
                let gs = gs.ok_or_else(need_g)?;
                let a = g.softplus(fs);
                let a = g.clamp(a, PHI_MIN, PSI_MAX);
                let b = g.softplus(gs);
                let b = g.clamp(b, PHI_MIN, PSI_MAX);
                beta_binomial_ab_node(g, a, b, &tc.c1, &tc.c0)
            }
            _ => {
                let gs = gs.ok_or_else(need_g)?;
                let phi = g.sigmoid(fs);
                let psi = g.softplus(gs);
                let ll = beta_binomial_node(g, phi, psi, &tc.c1, &tc.c0);
                if self.kind.uses_dirichlet() {
                    let d = dirichlet_node(g, psi, &tc.proportions);
                    let d = g.scale(d, self.config.dirichlet_weight);
                    g.add(ll, d)
                } else {
                    ll
                }
            }
        })
    }

    /// The ELBO at `step`, whose noise depends only on the seed and the step.
    pub fn objective(
        &self,
        g: &mut Graph,
        bound: &Bound,
        tc: &TrainCounts,
        step: usize,
    ) -> Result<ElboParts> {
        let n = self.arm_count();
        let samples = self.config.schedule.mc_samples;
        let mut rng = derive_rng(self.seed, &[stream::ELBO_NOISE, step as u64]);
        let eps_f = standard_normal(samples, n, &mut rng);
        let eps_g = self
            .g
            .as_ref()
            .map(|_| standard_normal(samples, n, &mut rng));
        let enc = g.input(self.encodings.clone());
        let emb = self.kernel.net.forward(g, bound, enc);
        svgp::elbo(
            g,
            bound,
            &self.kernel.k1,
            self.g.as_ref().map(|_| &self.kernel.k2),
            emb,
            &self.f,
            self.g.as_ref(),
            &eps_f,
            eps_g.as_ref(),
            |g, fs, gs| self.loglik(g, fs, gs, tc),
        )
    }

    /// Runs `steps` Adam updates, refreshing pooled counts periodically.
    pub fn train(&mut self, counts: &ArmCounts, steps: usize) -> Result<Vec<TraceRow>> {
        let mut trace = Vec::with_capacity(steps);
        let mut done = 0;
        while done < steps {
            let chunk = self.config.neighbor_refresh.min(steps - done);
            let tc = self.train_counts(counts)?;
            let mut store = std::mem::take(&mut self.store);
            let mut adam = self.adam.clone();
            let result = svgp::fit(&mut store, &mut adam, self.step, chunk, |g, b, step| {
                self.objective(g, b, &tc, step)
            });
            self.store = store;
            self.adam = adam;
            let rows = result?;
            self.step += chunk;
            done += chunk;
            trace.extend(rows);
        }
        Ok(trace)
    }

    /// Predictive `(mean, var)` per arm for f, and for g when present.
    #[allow(clippy::type_complexity)]
    pub fn predictive(&self) -> Result<(Vec<(f64, f64)>, Option<Vec<(f64, f64)>>)> {
        let mut g = Graph::new();
        let b = self.store.bind(&mut g);
        let enc = g.input(self.encodings.clone());
        let emb = self.kernel.net.forward(&mut g, &b, enc);
        let mut one = |state: &SvgpState, kp: &KernelParams| -> Result<Vec<(f64, f64)>> {
            let prior = state.prior(&mut g, &b, kp)?;
            let p = state.predictive(&mut g, &b, kp, &prior, emb)?;
            Ok(g.value(p.mean)
                .iter()
                .copied()
                .zip(g.value(p.var).iter().copied())
                .collect())
        };
        let f = one(&self.f, &self.kernel.k1)?;
        let h = match &self.g {
            Some(s) => Some(one(s, &self.kernel.k2)?),
            None => None,
        };
        Ok((f, h))
    }

    pub fn summary(&self) -> Result<PosteriorSummary> {
        let (f, g) = self.predictive()?;
        let link = match self.kind {
            EstimatorKind::BernGP => Link::Bernoulli,
            EstimatorKind::BetaGpAb => Link::AlphaBeta,
            _ => Link::MeanScale,
        };
        Ok(summarize_gaussians(
            link,
            &f,
            g.as_deref(),
            self.config.summary_samples,
            self.seed,
        ))
    }
}
