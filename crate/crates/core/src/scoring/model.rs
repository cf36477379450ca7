//! Order-1 graph network that maps a sub-graph to a predicted improvement.
//!
//! Pipeline:
//!
//! ```text
//! features -> input projection -> L x GraphConv (residual) -> node embeddings
//!   SG nodes      -> per-node feed-forward stack -> {sum, max} pool -> w_g
//!   all instance nodes, pooled {sum, std} after every conv layer, summed -> w_s
//!   [w_g ; w_s] -> decoder stack -> scalar
//! ```
//!
//! One conv layer computes
//! `act(root(h_i) + rel(sum_{j in H(i)} e_ji * h_j))`, optionally followed by
//! layer normalisation. Linear weights are stored row-major as
//! `[out_dim, in_dim]`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::features::{SgFeatures, NODE_FEATURES};
use crate::error::{Error, Result};

pub const LAYER_NORM_EPS: f32 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f32) -> f32 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Identity => x,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Identity => "identity",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "relu" => Ok(Activation::Relu),
            "identity" => Ok(Activation::Identity),
            other => Err(Error::Format(format!("unknown activation `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pooling {
    Sum,
    Mean,
    Max,
    Std,
}

impl Pooling {
    pub fn name(self) -> &'static str {
        match self {
            Pooling::Sum => "sum",
            Pooling::Mean => "mean",
            Pooling::Max => "max",
            Pooling::Std => "std",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "sum" => Ok(Pooling::Sum),
            "mean" => Ok(Pooling::Mean),
            "max" => Ok(Pooling::Max),
            "std" => Ok(Pooling::Std),
            other => Err(Error::Format(format!("unknown pooling `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Architecture {
    pub input_dim: usize,
    pub d_emb: usize,
    pub node_layers: usize,
    pub sg_layers: usize,
    pub sg_hidden: usize,
    /// Number of linear layers in the decoder; the last one outputs the score.
    pub decoder_layers: usize,
    pub decoder_hidden: usize,
    pub activation: Activation,
    pub node_pooling: Vec<Pooling>,
    pub sg_pooling: Vec<Pooling>,
    pub knn: usize,
    pub layer_norm: bool,
    pub residual: bool,
    /// Training-time only; inference never drops units.
    pub dropout: f32,
}

impl Default for Architecture {
    fn default() -> Self {
        Self {
            input_dim: NODE_FEATURES,
            d_emb: 128,
            node_layers: 4,
            sg_layers: 3,
            sg_hidden: 128,
            decoder_layers: 3,
            decoder_hidden: 256,
            activation: Activation::Relu,
            node_pooling: vec![Pooling::Sum, Pooling::Std],
            sg_pooling: vec![Pooling::Sum, Pooling::Max],
            knn: 25,
            layer_norm: true,
            residual: true,
            dropout: 0.1,
        }
    }
}

impl Architecture {
    pub fn context_dim(&self) -> usize {
        self.d_emb * self.node_pooling.len()
    }

    pub fn sg_out_dim(&self) -> usize {
        if self.sg_layers == 0 {
            self.d_emb
        } else {
            self.sg_hidden
        }
    }

    pub fn decoder_in_dim(&self) -> usize {
        self.sg_out_dim() * self.sg_pooling.len() + self.context_dim()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Model(m.to_string()));
        if self.input_dim != NODE_FEATURES {
            return bad("input_dim must equal the node feature count (3)");
        }
        if self.d_emb == 0 || self.decoder_layers == 0 {
            return bad("d_emb and decoder_layers must be positive");
        }
        if self.sg_layers > 0 && self.sg_hidden == 0 {
            return bad("sg_hidden must be positive");
        }
        if self.decoder_layers > 1 && self.decoder_hidden == 0 {
            return bad("decoder_hidden must be positive");
        }
        if self.node_pooling.is_empty() || self.sg_pooling.is_empty() {
            return bad("pooling lists must be nonempty");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weight: Vec<f32>,
    pub bias: Vec<f32>,
}

impl Linear {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            in_dim,
            out_dim,
            weight: vec![0.0; in_dim * out_dim],
            bias: vec![0.0; out_dim],
        }
    }

    /// Uniform(-1/sqrt(in), 1/sqrt(in)) for weights and biases.
    pub fn random(in_dim: usize, out_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = 1.0 / (in_dim.max(1) as f32).sqrt();
        let mut draw = |len| (0..len).map(|_| rng.random_range(-bound..bound)).collect();
        let weight = draw(in_dim * out_dim);
        let bias = draw(out_dim);
        Self {
            in_dim,
            out_dim,
            weight,
            bias,
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut l = Self::zeros(dim, dim);
        for i in 0..dim {
            l.weight[i * dim + i] = 1.0;
        }
        l
    }

    #[inline]
    pub fn forward_into(&self, x: &[f32], out: &mut [f32]) {
        debug_assert_eq!(x.len(), self.in_dim);
        for (o, (row, b)) in out
            .iter_mut()
            .zip(self.weight.chunks_exact(self.in_dim).zip(&self.bias))
        {
            *o = b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f32>();
        }
    }

    pub fn forward(&self, x: &[f32]) -> Vec<f32> {
        let mut out = vec![0.0; self.out_dim];
        self.forward_into(x, &mut out);
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm {
    pub weight: Vec<f32>,
    pub bias: Vec<f32>,
}

impl LayerNorm {
    pub fn new(dim: usize) -> Self {
        Self {
            weight: vec![1.0; dim],
            bias: vec![0.0; dim],
        }
    }

    pub fn apply(&self, x: &mut [f32]) {
        let n = x.len() as f32;
        let mean = x.iter().sum::<f32>() / n;
        let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f32>() / n;
        let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
        for ((v, w), b) in x.iter_mut().zip(&self.weight).zip(&self.bias) {
            *v = (*v - mean) * inv * w + b;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphConv {
    pub root: Linear,
    pub rel: Linear,
    pub norm: LayerNorm,
}

impl GraphConv {
    /// One message-passing step over the valid rows of `h` (row-major,
    /// `d` columns). Invalid rows stay zero.
    pub fn forward(
        &self,
        h: &[f32],
        feats: &SgFeatures,
        activation: Activation,
        layer_norm: bool,
    ) -> Vec<f32> {
        let d = self.root.in_dim;
        let n = feats.width();
        let mut out = vec![0.0; n * self.root.out_dim];
        let mut agg = vec![0.0f32; d];
        let mut a = vec![0.0f32; self.root.out_dim];
        let mut b = vec![0.0f32; self.root.out_dim];
        for i in (0..n).filter(|&i| feats.valid[i]) {
            agg.iter_mut().for_each(|v| *v = 0.0);
            for &(j, e) in &feats.neighbors[i] {
                for (acc, v) in agg.iter_mut().zip(&h[j * d..(j + 1) * d]) {
                    *acc += e * v;
                }
            }
            self.root.forward_into(&h[i * d..(i + 1) * d], &mut a);
            self.rel.forward_into(&agg, &mut b);
            let row = &mut out[i * self.root.out_dim..(i + 1) * self.root.out_dim];
            for ((o, x), y) in row.iter_mut().zip(&a).zip(&b) {
                *o = activation.apply(x + y);
            }
            if layer_norm {
                self.norm.apply(row);
            }
        }
        out
    }
}

/// Per-channel affine normalisation applied to raw node features.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalization {
    pub mean: Vec<f32>,
    pub std: Vec<f32>,
}

impl Normalization {
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoringModel {
    pub arch: Architecture,
    pub normalization: Normalization,
    pub input: Linear,
    pub convs: Vec<GraphConv>,
    pub sg: Vec<Linear>,
    pub sg_norms: Vec<LayerNorm>,
    pub decoder: Vec<Linear>,
    pub decoder_norms: Vec<LayerNorm>,
}

/// Node encoder output: final embeddings and the per-layer pooled summary.
#[derive(Debug, Clone)]
pub struct NodeEncoding {
    pub dim: usize,
    pub h: Vec<f32>,
    pub pooled: Vec<f32>,
}

impl ScoringModel {
    pub fn random(arch: Architecture, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = arch.d_emb;
        let input = Linear::random(arch.input_dim, d, &mut rng);
        let convs = (0..arch.node_layers)
            .map(|_| GraphConv {
                root: Linear::random(d, d, &mut rng),
                rel: Linear::random(d, d, &mut rng),
                norm: LayerNorm::new(d),
            })
            .collect();
        let mut sg = Vec::new();
        let mut sg_norms = Vec::new();
        let mut in_dim = d;
        for _ in 0..arch.sg_layers {
            sg.push(Linear::random(in_dim, arch.sg_hidden, &mut rng));
            sg_norms.push(LayerNorm::new(arch.sg_hidden));
            in_dim = arch.sg_hidden;
        }
        let mut decoder = Vec::new();
        let mut decoder_norms = Vec::new();
        let mut in_dim = arch.decoder_in_dim();
        for l in 0..arch.decoder_layers {
            let out = if l + 1 == arch.decoder_layers {
                1
            } else {
                arch.decoder_hidden
            };
            decoder.push(Linear::random(in_dim, out, &mut rng));
            if l + 1 < arch.decoder_layers {
                decoder_norms.push(LayerNorm::new(out));
            }
            in_dim = out;
        }
        Ok(Self {
            normalization: Normalization::identity(arch.input_dim),
            arch,
            input,
            convs,
            sg,
            sg_norms,
            decoder,
            decoder_norms,
        })
    }

    /// Flat list of named parameter tensors with their shapes.
    pub fn tensors(&self) -> Vec<(String, Vec<usize>, &[f32])> {
        fn lin<'a>(out: &mut Vec<(String, Vec<usize>, &'a [f32])>, name: String, l: &'a Linear) {
            out.push((format!("{name}.weight"), vec![l.out_dim, l.in_dim], &l.weight[..]));
            out.push((format!("{name}.bias"), vec![l.out_dim], &l.bias[..]));
        }
        let mut out: Vec<(String, Vec<usize>, &[f32])> = Vec::new();
        lin(&mut out, "input".into(), &self.input);
        for (i, c) in self.convs.iter().enumerate() {
            lin(&mut out, format!("conv.{i}.root"), &c.root);
            lin(&mut out, format!("conv.{i}.rel"), &c.rel);
            out.push((format!("conv.{i}.norm.weight"), vec![c.norm.weight.len()], &c.norm.weight));
            out.push((format!("conv.{i}.norm.bias"), vec![c.norm.bias.len()], &c.norm.bias));
        }
        for (i, l) in self.sg.iter().enumerate() {
            lin(&mut out, format!("sg.{i}"), l);
            let n = &self.sg_norms[i];
            out.push((format!("sg.{i}.norm.weight"), vec![n.weight.len()], &n.weight));
            out.push((format!("sg.{i}.norm.bias"), vec![n.bias.len()], &n.bias));
        }
        for (i, l) in self.decoder.iter().enumerate() {
            lin(&mut out, format!("decoder.{i}"), l);
            if let Some(n) = self.decoder_norms.get(i) {
                out.push((format!("decoder.{i}.norm.weight"), vec![n.weight.len()], &n.weight));
                out.push((format!("decoder.{i}.norm.bias"), vec![n.bias.len()], &n.bias));
            }
        }
        out
    }

    /// Mutable view of every parameter in [`Self::tensors`] order.
    pub fn tensors_mut(&mut self) -> Vec<&mut Vec<f32>> {
        let mut out: Vec<&mut Vec<f32>> = Vec::new();
        out.push(&mut self.input.weight);
        out.push(&mut self.input.bias);
        for c in &mut self.convs {
            out.push(&mut c.root.weight);
            out.push(&mut c.root.bias);
            out.push(&mut c.rel.weight);
            out.push(&mut c.rel.bias);
            out.push(&mut c.norm.weight);
            out.push(&mut c.norm.bias);
        }
        for (l, n) in self.sg.iter_mut().zip(&mut self.sg_norms) {
            out.push(&mut l.weight);
            out.push(&mut l.bias);
            out.push(&mut n.weight);
            out.push(&mut n.bias);
        }
        let mut norms = self.decoder_norms.iter_mut();
        for l in &mut self.decoder {
            out.push(&mut l.weight);
            out.push(&mut l.bias);
            if let Some(n) = norms.next() {
                out.push(&mut n.weight);
                out.push(&mut n.bias);
            }
        }
        out
    }

    pub fn check_finite(&self) -> Result<()> {
        for (name, _, data) in self.tensors() {
            if data.iter().any(|v| !v.is_finite()) {
                return Err(Error::Model(format!("non-finite value in `{name}`")));
            }
        }
        Ok(())
    }

    /// Runs the node encoder over every valid row of `feats`.
    pub fn encode(&self, feats: &SgFeatures) -> Result<NodeEncoding> {
        let arch = &self.arch;
        let d = arch.d_emb;
        let n = feats.width();
        if feats.neighbors.len() != n || feats.valid.len() != n || feats.customer.len() != n {
            return Err(Error::Model("inconsistent feature arrays".into()));
        }
        if self.normalization.mean.len() != arch.input_dim
            || self.normalization.std.len() != arch.input_dim
        {
            return Err(Error::Model("normalization width differs from input_dim".into()));
        }
        let mut h = vec![0.0f32; n * d];
        let mut x = vec![0.0f32; arch.input_dim];
        for i in (0..n).filter(|&i| feats.valid[i]) {
            for (c, v) in x.iter_mut().enumerate() {
                *v = (feats.nodes[i][c] - self.normalization.mean[c]) / self.normalization.std[c];
            }
            self.input.forward_into(&x, &mut h[i * d..(i + 1) * d]);
        }
        let mut pooled = vec![0.0f32; arch.context_dim()];
        for conv in &self.convs {
            let out = conv.forward(&h, feats, arch.activation, arch.layer_norm);
            if arch.residual {
                for (a, b) in h.iter_mut().zip(&out) {
                    *a += b;
                }
            } else {
                h = out;
            }
            let p = pool(&arch.node_pooling, &h, d, |i| feats.valid[i]);
            for (acc, v) in pooled.iter_mut().zip(&p) {
                *acc += v;
            }
        }
        Ok(NodeEncoding { dim: d, h, pooled })
    }

    /// The solution-level embedding: encoder run over the whole instance.
    pub fn context(&self, full: &SgFeatures) -> Result<Vec<f32>> {
        Ok(self.encode(full)?.pooled)
    }

    /// Predicted improvement of the sub-graph described by `feats`, given
    /// the solution context from [`Self::context`].
    pub fn forward(&self, feats: &SgFeatures, context: &[f32]) -> Result<f32> {
        let arch = &self.arch;
        if context.len() != arch.context_dim() {
            return Err(Error::Model(format!(
                "context has {} values, expected {}",
                context.len(),
                arch.context_dim()
            )));
        }
        let enc = self.encode(feats)?;
        let rows: Vec<usize> = (0..feats.width())
            .filter(|&i| feats.valid[i] && feats.customer[i])
            .collect();
        if rows.is_empty() {
            return Err(Error::Model("sub-graph has no customer nodes".into()));
        }
        let out_dim = arch.sg_out_dim();
        let mut z = vec![0.0f32; rows.len() * out_dim];
        let mut cur: Vec<f32>;
        for (r, &i) in rows.iter().enumerate() {
            cur = enc.h[i * enc.dim..(i + 1) * enc.dim].to_vec();
            for (lin, norm) in self.sg.iter().zip(&self.sg_norms) {
                let mut next = lin.forward(&cur);
                next.iter_mut().for_each(|v| *v = arch.activation.apply(*v));
                if arch.layer_norm {
                    norm.apply(&mut next);
                }
                cur = next;
            }
            z[r * out_dim..(r + 1) * out_dim].copy_from_slice(&cur);
        }
        let mut y = pool(&arch.sg_pooling, &z, out_dim, |_| true);
        y.extend_from_slice(context);
        let last = self.decoder.len() - 1;
        for (l, lin) in self.decoder.iter().enumerate() {
            if lin.in_dim != y.len() {
                return Err(Error::Model(format!(
                    "decoder layer {l} expects {} inputs, got {}",
                    lin.in_dim,
                    y.len()
                )));
            }
            let mut next = lin.forward(&y);
            if l < last {
                next.iter_mut().for_each(|v| *v = arch.activation.apply(*v));
                if arch.layer_norm {
                    self.decoder_norms[l].apply(&mut next);
                }
            }
            y = next;
        }
        Ok(y[0])
    }
}

/// Pools the selected rows of a row-major matrix, concatenating one block of
/// `dim` values per operator. Empty selections pool to zero.
pub fn pool(ops: &[Pooling], m: &[f32], dim: usize, keep: impl Fn(usize) -> bool) -> Vec<f32> {
    let rows: Vec<&[f32]> = m
        .chunks_exact(dim)
        .enumerate()
        .filter(|(i, _)| keep(*i))
        .map(|(_, r)| r)
        .collect();
    let mut out = Vec::with_capacity(dim * ops.len());
    for op in ops {
        for c in 0..dim {
            out.push(pool_column(*op, rows.iter().map(|r| r[c]), rows.len()));
        }
    }
    out
}

fn pool_column(op: Pooling, col: impl Iterator<Item = f32> + Clone, n: usize) -> f32 {
    if n == 0 {
        return 0.0;
    }
    match op {
        Pooling::Sum => col.sum(),
        Pooling::Mean => col.sum::<f32>() / n as f32,
        Pooling::Max => col.fold(f32::NEG_INFINITY, f32::max),
        Pooling::Std => {
            // Shift by the first value so constant columns give exactly zero.
            let first = col.clone().next().unwrap_or(0.0);
            let mean = col.clone().map(|v| v - first).sum::<f32>() / n as f32;
            let var = col.map(|v| (v - first - mean).powi(2)).sum::<f32>() / n as f32;
            var.sqrt()
        }
    }
}
