//! Learned arm embeddings and the two RBF kernels over them.
//!
//! `K(a, b) = s · exp(−‖V(a) − V(b)‖² / l)`, with `s` and `l` kept positive
//! through softplus of free parameters. The mean kernel K1 and the scale
//! kernel K2 share one embedding network but own separate `(s, l)`.

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{sq_dist, Bound, Graph, Mat, ParamId, ParamStore, Var};
use crate::error::{Error, Result};
use crate::special::{softplus, softplus_inv};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Tanh,
    Identity,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    /// in × out
    pub weight: ParamId,
    /// 1 × out
    pub bias: ParamId,
    pub activation: Activation,
}

/// Multilayer perceptron mapping an arm encoding to an embedding vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingNet {
    pub layers: Vec<DenseLayer>,
    pub input_width: usize,
    pub output_width: usize,
}

/// Uniform Glorot initialization, `±sqrt(6 / (fan_in + fan_out))`.
pub fn glorot(rows: usize, cols: usize, rng: &mut impl Rng) -> Mat {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    Mat::from_fn(rows, cols, |_, _| rng.random_range(-bound..bound))
}

impl EmbeddingNet {
    /// Tanh hidden layers followed by a linear output layer.
    pub fn new(
        store: &mut ParamStore,
        prefix: &str,
        input_width: usize,
        hidden: &[usize],
        output_width: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let mut layers = Vec::with_capacity(hidden.len() + 1);
        let mut fan_in = input_width;
        let widths = hidden.iter().copied().chain(std::iter::once(output_width));
        let last = hidden.len();
        for (i, width) in widths.enumerate() {
            let weight = store.add(format!("{prefix}.w{i}"), glorot(fan_in, width, rng));
            let bias = store.add(format!("{prefix}.b{i}"), Mat::zeros(1, width));
            let activation = if i == last {
                Activation::Identity
            } else {
                Activation::Tanh
            };
            layers.push(DenseLayer {
                weight,
                bias,
                activation,
            });
            fan_in = width;
        }
        Self {
            layers,
            input_width,
            output_width,
        }
    }

    /// A single linear layer with identity weights and zero bias.
    pub fn identity(store: &mut ParamStore, prefix: &str, width: usize) -> Self {
        let weight = store.add(format!("{prefix}.w0"), Mat::identity(width, width));
        let bias = store.add(format!("{prefix}.b0"), Mat::zeros(1, width));
        Self {
            layers: vec![DenseLayer {
                weight,
                bias,
                activation: Activation::Identity,
            }],
            input_width: width,
            output_width: width,
        }
    }

    /// Stops the optimizer from touching the network (fixed embedding).
    pub fn freeze(&self, store: &mut ParamStore) {
        for l in &self.layers {
            store.freeze(l.weight);
            store.freeze(l.bias);
        }
    }

    /// Embeds every row of `inputs` (n × input_width) → n × output_width.
    pub fn forward(&self, g: &mut Graph, bound: &Bound, inputs: Var) -> Var {
        let mut h = inputs;
        for layer in &self.layers {
            let z = g.matmul(h, bound[layer.weight]);
            let z = g.add_row(z, bound[layer.bias]);
            h = match layer.activation {
                Activation::Tanh => g.tanh(z),
                Activation::Identity => z,
            };
        }
        h
    }

    /// Graph-free evaluation.
    pub fn embed(&self, store: &ParamStore, inputs: &Mat) -> Mat {
        let mut h = inputs.clone();
        for layer in &self.layers {
            let mut z = &h * store.get(layer.weight);
            let b = store.get(layer.bias);
            for mut r in z.row_iter_mut() {
                r += b;
            }
            if layer.activation == Activation::Tanh {
                z.apply(|x| *x = x.tanh());
            }
            h = z;
        }
        h
    }
}

/// Scale and length of one RBF kernel, stored as softplus-inverse values.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub scale_raw: ParamId,
    pub length_raw: ParamId,
}

impl KernelParams {
    pub fn new(store: &mut ParamStore, prefix: &str, scale: f64, length: f64) -> Self {
        Self {
            scale_raw: store.add(
                format!("{prefix}.scale"),
                Mat::from_element(1, 1, softplus_inv(scale)),
            ),
            length_raw: store.add(
                format!("{prefix}.length"),
                Mat::from_element(1, 1, softplus_inv(length)),
            ),
        }
    }

    pub fn scale(&self, store: &ParamStore) -> f64 {
        softplus(store.get(self.scale_raw)[0])
    }

    pub fn length(&self, store: &ParamStore) -> f64 {
        softplus(store.get(self.length_raw)[0])
    }

    /// Kernel matrix between the rows of `a` and `b` as a graph node.
    pub fn matrix(&self, g: &mut Graph, bound: &Bound, a: Var, b: Var) -> Var {
        let d = g.sq_dist(a, b);
        let s = g.softplus(bound[self.scale_raw]);
        let l = g.softplus(bound[self.length_raw]);
        let inv_l = g.recip(l);
        let scaled = g.scale_by(d, inv_l);
        let neg = g.neg(scaled);
        let e = g.exp(neg);
        g.scale_by(e, s)
    }

    /// Graph-free kernel matrix.
    pub fn matrix_values(&self, store: &ParamStore, a: &Mat, b: &Mat) -> Mat {
        rbf(self.scale(store), self.length(store), a, b)
    }
}

/// `s · exp(−‖a_i − b_j‖² / l)` for all row pairs.
pub fn rbf(scale: f64, length: f64, a: &Mat, b: &Mat) -> Mat {
    sq_dist(a, b).map(|d| scale * (-d / length).exp())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum KernelSlot {
    K1,
    K2,
}

/// The shared embedding plus both kernels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeepKernel {
    pub net: EmbeddingNet,
    pub k1: KernelParams,
    pub k2: KernelParams,
}

impl DeepKernel {
    pub fn kernel(&self, slot: KernelSlot) -> &KernelParams {
        match slot {
            KernelSlot::K1 => &self.k1,
            KernelSlot::K2 => &self.k2,
        }
    }
}

/// The `k` arms most similar to `query` under an RBF of the given length,
/// excluding the query itself, with similarity weights normalized to sum to
/// one. Ties go to the lower arm index.
pub fn kernel_neighbors(
    query: usize,
    embeddings: &Mat,
    length: f64,
    k: usize,
) -> Result<Vec<(usize, f64)>> {
    let n = embeddings.nrows();
    if query >= n {
        return Err(Error::InvalidArgument(format!(
            "query arm {query} out of range"
        )));
    }
    if k == 0 || k >= n {
        return Err(Error::InvalidArgument(format!(
            "neighbor count {k} must lie in [1, {n})"
        )));
    }
    let q = embeddings.row(query);
    // Log-similarities up to the shared scale, which cancels on normalization.
    let mut cand: Vec<(usize, f64)> = (0..n)
        .filter(|&j| j != query)
        .map(|j| {
            let d = (embeddings.row(j) - q).norm_squared();
            (j, -d / length)
        })
        .collect();
    cand.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    cand.truncate(k);
    let top = cand[0].1;
    let total: f64 = cand.iter().map(|(_, s)| (s - top).exp()).sum();
    Ok(cand
        .into_iter()
        .map(|(j, s)| (j, (s - top).exp() / total))
        .collect())
}

/// CSV with columns `arm_index, v_1..v_e`.
pub fn write_embeddings_csv<W: Write>(embeddings: &Mat, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["arm_index".to_string()];
    header.extend((1..=embeddings.ncols()).map(|i| format!("v_{i}")));
    w.write_record(&header)?;
    for (i, row) in embeddings.row_iter().enumerate() {
        let mut rec = vec![i.to_string()];
        rec.extend(row.iter().map(|x| x.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
