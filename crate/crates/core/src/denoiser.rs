//! The DiT-style noise predictor `ε_θ(x_t, t)`.
//!
//! A cell's expression vector of length `n` is zero-padded to a multiple of
//! the patch size `p`, cut into `L = ⌈n/p⌉` patches and linearly embedded into
//! `L` tokens of width `h`, to which learned positional embeddings are added.
//! The timestep goes through a sinusoidal encoding and a two-layer GELU MLP to
//! give the conditioning vector `c`.
//!
//! Each of the `N` blocks uses adaLN-Zero conditioning: a linear map of
//! `gelu(c)` yields `(shift, scale, gate)` for the attention branch and again
//! for the MLP branch, and
//!
//! ```text
//! x = x + gate₁ ⊙ attn(LN(x) ⊙ (1 + scale₁) + shift₁)
//! x = x + gate₂ ⊙ mlp(LN(x) ⊙ (1 + scale₂) + shift₂)
//! ```
//!
//! The modulation maps start at zero, so every block is the identity at
//! initialization. The final layer modulates `LN(x)` with its own
//! `(shift, scale)` and projects each token back to `p` values; the padding is
//! dropped on output.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;
use crate::rng::Rng;
use crate::tensor::{Graph, Parameter, Tensor, Var};

const LN_EPS: f64 = 1e-6;
const POS_INIT_STD: f64 = 0.02;

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DenoiserConfig {
    pub n_genes: usize,
    pub patch_size: usize,
    pub hidden_size: usize,
    pub n_blocks: usize,
    pub n_heads: usize,
    pub mlp_ratio: f64,
    /// Width of the sinusoidal timestep encoding.
    pub t_embed_dim: usize,
}

impl DenoiserConfig {
    /// Full-run defaults: `p = 4`, `h = 128`, `N = 6`, 8 heads.
    pub fn new(n_genes: usize) -> Self {
        DenoiserConfig {
            n_genes,
            patch_size: 4,
            hidden_size: 128,
            n_blocks: 6,
            n_heads: 8,
            mlp_ratio: 4.0,
            t_embed_dim: 128,
        }
    }

    /// The small configuration used by tests: `p = 2`, `h = 8`, `N = 1`.
    pub fn tiny(n_genes: usize) -> Self {
        DenoiserConfig {
            n_genes,
            patch_size: 2,
            hidden_size: 8,
            n_blocks: 1,
            n_heads: 2,
            mlp_ratio: 4.0,
            t_embed_dim: 8,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.n_genes == 0 || self.patch_size == 0 || self.hidden_size == 0 {
            return bad("n_genes, patch_size and hidden_size must be positive".into());
        }
        if self.n_heads == 0 || self.hidden_size % self.n_heads != 0 {
            return bad(format!(
                "hidden_size {} must be divisible by n_heads {}",
                self.hidden_size, self.n_heads
            ));
        }
        if self.t_embed_dim == 0 {
            return bad("t_embed_dim must be positive".into());
        }
        if !(self.mlp_ratio > 0.0) || self.mlp_hidden() == 0 {
            return bad(format!("mlp_ratio {} gives an empty MLP", self.mlp_ratio));
        }
        Ok(())
    }

    /// Number of tokens `⌈n / p⌉`.
    pub fn n_tokens(&self) -> usize {
        self.n_genes.div_ceil(self.patch_size)
    }

    pub fn padded_len(&self) -> usize {
        self.n_tokens() * self.patch_size
    }

    pub fn mlp_hidden(&self) -> usize {
        math::round(self.hidden_size as f64 * self.mlp_ratio) as usize
    }

    pub fn head_dim(&self) -> usize {
        self.hidden_size / self.n_heads
    }

    /// Shapes of all parameters, in storage order.
    pub fn parameter_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let (p, h, l, d, m) = (
            self.patch_size,
            self.hidden_size,
            self.n_tokens(),
            self.t_embed_dim,
            self.mlp_hidden(),
        );
        let mut out = vec![
            ("patch_embed.weight".into(), vec![p, h]),
            ("patch_embed.bias".into(), vec![h]),
            ("pos_embed".into(), vec![l, h]),
            ("t_embed.fc1.weight".into(), vec![d, h]),
            ("t_embed.fc1.bias".into(), vec![h]),
            ("t_embed.fc2.weight".into(), vec![h, h]),
            ("t_embed.fc2.bias".into(), vec![h]),
        ];
        for i in 0..self.n_blocks {
            let b = |s: &str| format!("blocks.{i}.{s}");
            out.extend([
                (b("ada.weight"), vec![h, 6 * h]),
                (b("ada.bias"), vec![6 * h]),
                (b("attn.qkv.weight"), vec![h, 3 * h]),
                (b("attn.qkv.bias"), vec![3 * h]),
                (b("attn.proj.weight"), vec![h, h]),
                (b("attn.proj.bias"), vec![h]),
                (b("mlp.fc1.weight"), vec![h, m]),
                (b("mlp.fc1.bias"), vec![m]),
                (b("mlp.fc2.weight"), vec![m, h]),
                (b("mlp.fc2.bias"), vec![h]),
            ]);
        }
        out.extend([
            ("final.ada.weight".into(), vec![h, 2 * h]),
            ("final.ada.bias".into(), vec![2 * h]),
            ("final.linear.weight".into(), vec![h, p]),
            ("final.linear.bias".into(), vec![p]),
        ]);
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.parameter_shapes()
            .iter()
            .map(|(_, s)| s.iter().product::<usize>())
            .sum()
    }
}

const BLOCK_PARAMS: usize = 10;
const HEAD_PARAMS: usize = 7;

/// Sinusoidal encoding of `t`: `sin(t·f_i)` for the first half of the
/// components and `cos(t·f_i)` for the second, `f_i = 10000^(−2i/dim)`.
/// An odd `dim` leaves the last component at zero.
pub fn sinusoidal_embedding(t: usize, dim: usize) -> Vec<f64> {
    let half = dim / 2;
    let mut out = vec![0.0; dim];
    for i in 0..half {
        let freq = math::powf(10000.0, -2.0 * i as f64 / dim as f64);
        let arg = t as f64 * freq;
        out[i] = math::sin(arg);
        out[half + i] = math::cos(arg);
    }
    out
}

/// Zero-pads every row of a `[batch, n]` tensor to `[batch, padded]`.
pub fn pad_rows(x: &Tensor, padded: usize) -> Tensor {
    let n = x.cols();
    if n == padded {
        return x.clone();
    }
    let rows = x.rows();
    let mut out = vec![0.0; rows * padded];
    for r in 0..rows {
        out[r * padded..r * padded + n].copy_from_slice(x.row(r));
    }
    Tensor::new(vec![rows, padded], out).expect("padded shape")
}

/// Inverse of patching: `[batch·L, p]` tokens to `[batch, n]`, dropping the
/// padded tail.
pub fn unpatchify(g: &mut Graph, tokens: Var, batch: usize, n: usize) -> Result<Var> {
    let padded = g.value(tokens).numel() / batch;
    let flat = g.reshape(tokens, &[batch, padded])?;
    if padded == n {
        Ok(flat)
    } else {
        g.slice_cols(flat, 0, n)
    }
}

/// The noise predictor with all its parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct DenoiserModel {
    config: DenoiserConfig,
    timesteps: usize,
    params: Vec<Parameter>,
}

/// Hidden states recorded by [`DenoiserModel::forward_trace`].
#[derive(Debug)]
pub struct Trace {
    pub output: Var,
    /// Tokens after patch and positional embedding.
    pub embedded: Var,
    /// Tokens after each block.
    pub blocks: Vec<Var>,
    pub cond: Var,
}

impl DenoiserModel {
    /// Random initialization: Xavier-uniform linear weights, zero biases,
    /// `N(0, 0.02²)` positional embeddings and zero block modulation maps.
    pub fn new(config: DenoiserConfig, timesteps: usize, seed: u64) -> Result<Self> {
        config.validate()?;
        if timesteps == 0 {
            return Err(Error::InvalidConfig("timesteps must be positive".into()));
        }
        let mut rng = Rng::seed_from_u64(seed);
        let params = config
            .parameter_shapes()
            .into_iter()
            .map(|(name, shape)| {
                let numel: usize = shape.iter().product();
                let mut data = vec![0.0; numel];
                if name == "pos_embed" {
                    for v in &mut data {
                        *v = POS_INIT_STD * rng.normal();
                    }
                } else if name.ends_with(".weight") && !name.contains(".ada.") || name == "final.ada.weight" {
                    let limit = math::sqrt(6.0 / (shape[0] + shape[1]) as f64);
                    for v in &mut data {
                        *v = limit * (2.0 * rng.uniform() - 1.0);
                    }
                }
                Parameter::new(name, Tensor::new(shape, data).expect("parameter shape"))
            })
            .collect();
        Ok(DenoiserModel {
            config,
            timesteps,
            params,
        })
    }

    /// Rebuilds a model from named tensors, which must match the
    /// configuration's names and shapes in order.
    pub fn from_parameters(
        config: DenoiserConfig,
        timesteps: usize,
        tensors: Vec<(String, Tensor)>,
    ) -> Result<Self> {
        config.validate()?;
        let shapes = config.parameter_shapes();
        if shapes.len() != tensors.len() {
            return Err(Error::InvalidConfig(format!(
                "expected {} parameter tensors, found {}",
                shapes.len(),
                tensors.len()
            )));
        }
        let mut params = Vec::with_capacity(tensors.len());
        for ((want_name, want_shape), (name, t)) in shapes.into_iter().zip(tensors) {
            if want_name != name || want_shape != t.shape() {
                return Err(Error::InvalidConfig(format!(
                    "parameter `{name}` {:?} does not match expected `{want_name}` {want_shape:?}",
                    t.shape()
                )));
            }
            t.ensure_finite("parameter")?;
            params.push(Parameter::new(name, t));
        }
        Ok(DenoiserModel {
            config,
            timesteps,
            params,
        })
    }

    pub fn config(&self) -> &DenoiserConfig {
        &self.config
    }

    pub fn timesteps(&self) -> usize {
        self.timesteps
    }

    pub fn parameters(&self) -> &[Parameter] {
        &self.params
    }

    pub fn parameters_mut(&mut self) -> &mut [Parameter] {
        &mut self.params
    }

    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(|p| p.value.numel()).sum()
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.zero_grad();
        }
    }

    /// Adds every parameter to `g` as a leaf; trainable unless `g` is a
    /// no-grad graph.
    pub fn bind(&self, g: &mut Graph) -> Vec<Var> {
        self.params
            .iter()
            .map(|p| g.leaf(p.value.clone(), p.requires_grad))
            .collect()
    }

    fn check_t(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.timesteps {
            Err(Error::StepOutOfRange {
                t,
                max: self.timesteps,
            })
        } else {
            Ok(())
        }
    }

    /// Embeds a patched `[batch·L, p]` input into `[batch·L, h]` tokens and
    /// adds the positional embedding.
    pub fn patchify(&self, g: &mut Graph, vars: &[Var], patches: Var, batch: usize) -> Result<Var> {
        let (l, h) = (self.config.n_tokens(), self.config.hidden_size);
        let tok = g.linear(patches, vars[0], vars[1])?;
        let tok = g.reshape(tok, &[batch, l, h])?;
        let tok = g.add(tok, vars[2])?;
        g.reshape(tok, &[batch * l, h])
    }

    /// Patch tokens of one expression vector, without positional embedding.
    pub fn patch_tokens(&self, x: &[f64]) -> Result<Tensor> {
        if x.len() != self.config.n_genes {
            return Err(Error::DimensionMismatch {
                left: x.len(),
                right: self.config.n_genes,
            });
        }
        let mut g = Graph::no_grad();
        let vars = self.bind(&mut g);
        let row = Tensor::new(vec![1, x.len()], x.to_vec())?;
        let padded = pad_rows(&row, self.config.padded_len());
        let patches = padded.reshaped(&[self.config.n_tokens(), self.config.patch_size])?;
        let p = g.constant(patches);
        let tok = g.linear(p, vars[0], vars[1])?;
        Ok(g.value(tok).clone())
    }

    fn embed_timesteps(&self, g: &mut Graph, vars: &[Var], t: &[usize]) -> Result<Var> {
        let d = self.config.t_embed_dim;
        let mut data = Vec::with_capacity(t.len() * d);
        for &ti in t {
            self.check_t(ti)?;
            data.extend(sinusoidal_embedding(ti, d));
        }
        let enc = g.constant(Tensor::new(vec![t.len(), d], data)?);
        let hdn = g.linear(enc, vars[3], vars[4])?;
        let hdn = g.gelu(hdn)?;
        g.linear(hdn, vars[5], vars[6])
    }

    /// The conditioning vector for a single timestep.
    pub fn embed_timestep(&self, t: usize) -> Result<Vec<f64>> {
        let mut g = Graph::no_grad();
        let vars = self.bind(&mut g);
        let c = self.embed_timesteps(&mut g, &vars, &[t])?;
        Ok(g.value(c).data().to_vec())
    }

    /// Splits a `[batch, k·h]` modulation into `k` chunks, each repeated over
    /// the `L` tokens of its sample.
    fn modulation(&self, g: &mut Graph, m: Var, k: usize) -> Result<Vec<Var>> {
        let (l, h) = (self.config.n_tokens(), self.config.hidden_size);
        (0..k)
            .map(|i| {
                let part = g.slice_cols(m, i * h, h)?;
                g.repeat_rows(part, l)
            })
            .collect()
    }

    fn modulate(&self, g: &mut Graph, x: Var, shift: Var, scale: Var) -> Result<Var> {
        let n = g.layernorm_lastdim(x, None, None, LN_EPS)?;
        let scaled = g.mul(n, scale)?;
        let y = g.add(n, scaled)?;
        g.add(y, shift)
    }

    fn attention(&self, g: &mut Graph, bv: &[Var], x: Var, batch: usize) -> Result<Var> {
        let h = self.config.hidden_size;
        let heads = self.config.n_heads;
        let qkv = g.linear(x, bv[2], bv[3])?;
        let q = g.slice_cols(qkv, 0, h)?;
        let k = g.slice_cols(qkv, h, h)?;
        let v = g.slice_cols(qkv, 2 * h, h)?;
        let q = g.split_heads(q, batch, heads)?;
        let k = g.split_heads(k, batch, heads)?;
        let v = g.split_heads(v, batch, heads)?;
        let scores = g.bmm(q, k, true)?;
        let scores = g.scale(scores, 1.0 / math::sqrt(self.config.head_dim() as f64))?;
        let att = g.softmax_lastdim(scores)?;
        let out = g.bmm(att, v, false)?;
        let out = g.merge_heads(out, batch, heads)?;
        g.linear(out, bv[4], bv[5])
    }

    fn block(&self, g: &mut Graph, bv: &[Var], x: Var, cond: Var, batch: usize) -> Result<Var> {
        let m = g.linear(cond, bv[0], bv[1])?;
        let md = self.modulation(g, m, 6)?;
        let (shift1, scale1, gate1, shift2, scale2, gate2) =
            (md[0], md[1], md[2], md[3], md[4], md[5]);

        let a_in = self.modulate(g, x, shift1, scale1)?;
        let a = self.attention(g, bv, a_in, batch)?;
        let a = g.mul(a, gate1)?;
        let x = g.add(x, a)?;

        let f_in = self.modulate(g, x, shift2, scale2)?;
        let f = g.linear(f_in, bv[6], bv[7])?;
        let f = g.gelu(f)?;
        let f = g.linear(f, bv[8], bv[9])?;
        let f = g.mul(f, gate2)?;
        g.add(x, f)
    }

    /// Runs the network on `x_t` (`[batch, n_genes]`) at timesteps `t` and
    /// records every hidden state.
    pub fn forward_trace(
        &self,
        g: &mut Graph,
        vars: &[Var],
        x_t: &Tensor,
        t: &[usize],
    ) -> Result<Trace> {
        let cfg = &self.config;
        if x_t.shape().len() != 2 || x_t.cols() != cfg.n_genes || x_t.rows() != t.len() {
            return Err(Error::ShapeMismatch {
                op: "denoiser.forward",
                left: x_t.shape().to_vec(),
                right: vec![t.len(), cfg.n_genes],
            });
        }
        if vars.len() != self.params.len() {
            return Err(Error::InvalidConfig("parameters not bound to graph".into()));
        }
        x_t.ensure_finite("denoiser input")?;
        let batch = t.len();
        let (l, p) = (cfg.n_tokens(), cfg.patch_size);

        let patches = pad_rows(x_t, cfg.padded_len()).reshaped(&[batch * l, p])?;
        let patches = g.constant(patches);
        let embedded = self.patchify(g, vars, patches, batch)?;

        let c = self.embed_timesteps(g, vars, t)?;
        let cond = g.gelu(c)?;

        let mut x = embedded;
        let mut blocks = Vec::with_capacity(cfg.n_blocks);
        for i in 0..cfg.n_blocks {
            let start = HEAD_PARAMS + i * BLOCK_PARAMS;
            x = self.block(g, &vars[start..start + BLOCK_PARAMS], x, cond, batch)?;
            blocks.push(x);
        }

        let fin = HEAD_PARAMS + cfg.n_blocks * BLOCK_PARAMS;
        let m = g.linear(cond, vars[fin], vars[fin + 1])?;
        let md = self.modulation(g, m, 2)?;
        let y = self.modulate(g, x, md[0], md[1])?;
        let y = g.linear(y, vars[fin + 2], vars[fin + 3])?;
        let output = unpatchify(g, y, batch, cfg.n_genes)?;
        Ok(Trace {
            output,
            embedded,
            blocks,
            cond,
        })
    }

    /// `ε_θ(x_t, t)` as a graph node of shape `[batch, n_genes]`.
    pub fn forward(&self, g: &mut Graph, vars: &[Var], x_t: &Tensor, t: &[usize]) -> Result<Var> {
        Ok(self.forward_trace(g, vars, x_t, t)?.output)
    }

    /// Inference-only forward pass.
    pub fn predict(&self, x_t: &Tensor, t: &[usize]) -> Result<Tensor> {
        let mut g = Graph::no_grad();
        let vars = self.bind(&mut g);
        let out = self.forward(&mut g, &vars, x_t, t)?;
        Ok(g.value(out).clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(n: usize) -> DenoiserModel {
        DenoiserModel::new(DenoiserConfig::tiny(n), 100, 3).unwrap()
    }

    #[test]
    fn parameter_count_is_pinned() {
        // 24 patch + 32 pos + 144 timestep MLP + 1272 block + 162 final
        let cfg = DenoiserConfig::tiny(8);
        assert_eq!(cfg.parameter_count(), 1634);
        assert_eq!(tiny(8).parameter_count(), 1634);
    }

    #[test]
    fn token_counts() {
        let mut cfg = DenoiserConfig::tiny(8);
        cfg.patch_size = 4;
        assert_eq!(cfg.n_tokens(), 2);
        cfg.n_genes = 6;
        assert_eq!(cfg.n_tokens(), 2);
        assert_eq!(cfg.padded_len(), 8);
    }

    #[test]
    fn padded_input_round_trips_through_unpatchify() {
        let mut cfg = DenoiserConfig::tiny(6);
        cfg.patch_size = 4;
        let m = DenoiserModel::new(cfg, 10, 0).unwrap();
        let toks = m.patch_tokens(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        assert_eq!(toks.shape(), &[2, 8]);

        let mut g = Graph::no_grad();
        let x = Tensor::new(vec![1, 6], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let p = g.constant(pad_rows(&x, 8).reshaped(&[2, 4]).unwrap());
        let back = unpatchify(&mut g, p, 1, 6).unwrap();
        assert_eq!(g.value(back), &x);

        let x = Tensor::new(vec![3, 6], vec![0.5; 18]).unwrap();
        let out = m.predict(&x, &[1, 5, 10]).unwrap();
        assert_eq!(out.shape(), &[3, 6]);
    }

    #[test]
    fn zero_patch_weights_give_zero_tokens() {
        let mut m = tiny(8);
        for p in m.parameters_mut().iter_mut().take(2) {
            p.value.data_mut().fill(0.0);
        }
        let toks = m.patch_tokens(&[1.0, -2.0, 3.0, 0.5, 7.0, 1.0, 2.0, 3.0]).unwrap();
        assert!(toks.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn timestep_embedding_properties() {
        let m = tiny(8);
        assert_eq!(m.embed_timestep(7).unwrap(), m.embed_timestep(7).unwrap());
        let a = m.embed_timestep(1).unwrap();
        let b = m.embed_timestep(100).unwrap();
        let dot: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!(dot / (na * nb) < 0.999);
        assert_eq!(
            m.embed_timestep(0),
            Err(Error::StepOutOfRange { t: 0, max: 100 })
        );
        assert!(m.embed_timestep(101).is_err());
        for t in [1, 50, 1000, 123_456] {
            assert!(sinusoidal_embedding(t, 16).iter().all(|v| v.abs() <= 1.0));
        }
    }

    #[test]
    fn blocks_are_identity_at_init() {
        let m = tiny(8);
        let x = Tensor::new(vec![2, 8], (0..16).map(|v| v as f64 * 0.3 - 2.0).collect()).unwrap();
        let mut g = Graph::no_grad();
        let vars = m.bind(&mut g);
        let tr = m.forward_trace(&mut g, &vars, &x, &[3, 90]).unwrap();
        assert_eq!(g.value(tr.blocks[0]), g.value(tr.embedded));
    }

    #[test]
    fn conditioning_is_live() {
        let mut m = tiny(8);
        // Give the modulation maps non-zero weights so t reaches the blocks.
        let mut rng = Rng::seed_from_u64(9);
        for p in m.parameters_mut() {
            if p.name.contains(".ada.") {
                for v in p.value.data_mut() {
                    *v = 0.1 * rng.normal();
                }
            }
        }
        let x = Tensor::new(vec![2, 8], vec![0.7; 16]).unwrap();
        let out = m.predict(&x, &[1, 60]).unwrap();
        assert_ne!(out.row(0), out.row(1));
        let fresh = tiny(8);
        let out = fresh.predict(&x, &[1, 60]).unwrap();
        assert_ne!(out.row(0), out.row(1));
    }

    #[test]
    fn shuffling_patches_is_not_equivariant() {
        let m = tiny(8);
        let x: Vec<f64> = (0..8).map(|v| v as f64 * 0.25 - 1.0).collect();
        // swap patch 0 and patch 1
        let mut y = x.clone();
        y.swap(0, 2);
        y.swap(1, 3);
        let ox = m.predict(&Tensor::new(vec![1, 8], x).unwrap(), &[5]).unwrap();
        let oy = m.predict(&Tensor::new(vec![1, 8], y).unwrap(), &[5]).unwrap();
        let mut ox_swapped = ox.data().to_vec();
        ox_swapped.swap(0, 2);
        ox_swapped.swap(1, 3);
        let diff: f64 = ox_swapped
            .iter()
            .zip(oy.data())
            .map(|(a, b)| (a - b).abs())
            .sum();
        assert!(diff > 1e-6, "diff {diff}");
    }

    #[test]
    fn shape_errors() {
        let m = tiny(8);
        let x = Tensor::zeros(&[2, 7]);
        assert!(matches!(
            m.predict(&x, &[1, 1]),
            Err(Error::ShapeMismatch { .. })
        ));
        let x = Tensor::zeros(&[2, 8]);
        assert!(m.predict(&x, &[1]).is_err());
    }

    #[test]
    fn config_validation() {
        let mut cfg = DenoiserConfig::tiny(8);
        cfg.n_heads = 3;
        assert!(DenoiserModel::new(cfg, 10, 0).is_err());
        assert!(DenoiserModel::new(DenoiserConfig::tiny(8), 0, 0).is_err());
    }

    #[test]
    fn from_parameters_round_trip() {
        let m = tiny(8);
        let tensors = m
            .parameters()
            .iter()
            .map(|p| (p.name.clone(), p.value.clone()))
            .collect();
        let back = DenoiserModel::from_parameters(m.config().clone(), 100, tensors).unwrap();
        assert_eq!(back, m);
    }
}
