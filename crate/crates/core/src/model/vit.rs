//! 1-D vision transformer: patch embedding, class token, learned positions,
//! pre-norm multi-head self-attention blocks and a linear head on the final
//! class token.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::config::ViTConfig;
use crate::model::{Classifier, Trainable};
use crate::numerics::{Tape, Tensor, Var};
use crate::seed;

const TOKEN_INIT: f64 = 0.02;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerParams {
    pub w_q: Tensor,
    pub w_k: Tensor,
    pub w_v: Tensor,
    pub w_o: Tensor,
    pub ln1_gain: Tensor,
    pub ln1_bias: Tensor,
    pub ln2_gain: Tensor,
    pub ln2_bias: Tensor,
    pub ffn_w1: Tensor,
    pub ffn_b1: Tensor,
    pub ffn_w2: Tensor,
    pub ffn_b2: Tensor,
}

const LAYER_FIELDS: [&str; 12] = [
    "w_q", "w_k", "w_v", "w_o", "ln1_gain", "ln1_bias", "ln2_gain", "ln2_bias", "ffn_w1", "ffn_b1",
    "ffn_w2", "ffn_b2",
];

impl LayerParams {
    fn fields(&self) -> [&Tensor; 12] {
        [
            &self.w_q,
            &self.w_k,
            &self.w_v,
            &self.w_o,
            &self.ln1_gain,
            &self.ln1_bias,
            &self.ln2_gain,
            &self.ln2_bias,
            &self.ffn_w1,
            &self.ffn_b1,
            &self.ffn_w2,
            &self.ffn_b2,
        ]
    }

    fn fields_mut(&mut self) -> [&mut Tensor; 12] {
        [
            &mut self.w_q,
            &mut self.w_k,
            &mut self.w_v,
            &mut self.w_o,
            &mut self.ln1_gain,
            &mut self.ln1_bias,
            &mut self.ln2_gain,
            &mut self.ln2_bias,
            &mut self.ffn_w1,
            &mut self.ffn_b1,
            &mut self.ffn_w2,
            &mut self.ffn_b2,
        ]
    }
}

/// Every learnable tensor of the encoder and classifier head.
///
/// Linear maps are stored out×in and applied as `x·Wᵀ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViTParams {
    pub w_p: Tensor,
    pub b_p: Tensor,
    pub z_cls: Tensor,
    pub pos: Tensor,
    pub layers: Vec<LayerParams>,
    pub head_w: Tensor,
    pub head_b: Tensor,
}

fn uniform<R: Rng>(rng: &mut R, shape: &[usize], scale: f64) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-scale..=scale)).collect();
    Tensor::new(shape.to_vec(), data).expect("shape matches")
}

impl ViTParams {
    /// Uniform(−1/√fan_in, 1/√fan_in) for linear maps, ±0.02 for the class
    /// token and position table, unit gain / zero bias for layer norms.
    pub fn init(config: &ViTConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = seed::rng(seed);
        let (d, p, m, c) = (config.embed_dim, config.patch_size, config.mlp_dim, config.num_classes);
        let n = config.num_patches();
        let s = |fan_in: usize| 1.0 / (fan_in as f64).sqrt();
        let w_p = uniform(&mut rng, &[d, p], s(p));
        let b_p = uniform(&mut rng, &[d], s(p));
        let z_cls = uniform(&mut rng, &[d], TOKEN_INIT);
        let pos = uniform(&mut rng, &[n + 1, d], TOKEN_INIT);
        let layers = (0..config.num_layers)
            .map(|_| LayerParams {
                w_q: uniform(&mut rng, &[d, d], s(d)),
                w_k: uniform(&mut rng, &[d, d], s(d)),
                w_v: uniform(&mut rng, &[d, d], s(d)),
                w_o: uniform(&mut rng, &[d, d], s(d)),
                ln1_gain: Tensor::full(&[d], 1.0),
                ln1_bias: Tensor::zeros(&[d]),
                ln2_gain: Tensor::full(&[d], 1.0),
                ln2_bias: Tensor::zeros(&[d]),
                ffn_w1: uniform(&mut rng, &[m, d], s(d)),
                ffn_b1: uniform(&mut rng, &[m], s(d)),
                ffn_w2: uniform(&mut rng, &[d, m], s(m)),
                ffn_b2: uniform(&mut rng, &[d], s(m)),
            })
            .collect();
        let head_w = uniform(&mut rng, &[c, d], s(d));
        let head_b = uniform(&mut rng, &[c], s(d));
        Ok(Self {
            w_p,
            b_p,
            z_cls,
            pos,
            layers,
            head_w,
            head_b,
        })
    }

    /// All-zero parameters (layer-norm gains included).
    pub fn zeros(config: &ViTConfig) -> Result<Self> {
        let mut p = Self::init(config, 0)?;
        for t in p.tensors_mut() {
            t.data_mut().fill(0.0);
        }
        Ok(p)
    }

    /// Parameter names in canonical order.
    pub fn names(&self) -> Vec<String> {
        let mut names: Vec<String> = ["w_p", "b_p", "z_cls", "pos"].iter().map(|s| s.to_string()).collect();
        for i in 0..self.layers.len() {
            names.extend(LAYER_FIELDS.iter().map(|f| format!("layers.{i}.{f}")));
        }
        names.push("head_w".into());
        names.push("head_b".into());
        names
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut out = vec![&self.w_p, &self.b_p, &self.z_cls, &self.pos];
        for l in &self.layers {
            out.extend(l.fields());
        }
        out.push(&self.head_w);
        out.push(&self.head_b);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = vec![&mut self.w_p, &mut self.b_p, &mut self.z_cls, &mut self.pos];
        for l in &mut self.layers {
            out.extend(l.fields_mut());
        }
        out.push(&mut self.head_w);
        out.push(&mut self.head_b);
        out
    }

    /// Checks every tensor against the shapes implied by `config`.
    pub fn check_shapes(&self, config: &ViTConfig) -> Result<()> {
        let reference = Self::init(config, 0)?;
        if reference.layers.len() != self.layers.len() {
            return Err(Error::Config(format!(
                "expected {} layers, found {}",
                reference.layers.len(),
                self.layers.len()
            )));
        }
        for ((name, a), b) in self.names().iter().zip(self.tensors()).zip(reference.tensors()) {
            if a.shape() != b.shape() {
                return Err(Error::Config(format!(
                    "parameter {name} has shape {:?}, expected {:?}",
                    a.shape(),
                    b.shape()
                )));
            }
        }
        Ok(())
    }

    pub fn register(&self, tape: &mut Tape, requires_grad: bool) -> ViTVars {
        let mut leaf = |t: &Tensor| tape.leaf(t.clone(), requires_grad);
        let w_p = leaf(&self.w_p);
        let b_p = leaf(&self.b_p);
        let z_cls = leaf(&self.z_cls);
        let pos = leaf(&self.pos);
        let layers = self
            .layers
            .iter()
            .map(|l| {
                let f = l.fields().map(&mut leaf);
                LayerVars {
                    w_q: f[0],
                    w_k: f[1],
                    w_v: f[2],
                    w_o: f[3],
                    ln1_gain: f[4],
                    ln1_bias: f[5],
                    ln2_gain: f[6],
                    ln2_bias: f[7],
                    ffn_w1: f[8],
                    ffn_b1: f[9],
                    ffn_w2: f[10],
                    ffn_b2: f[11],
                }
            })
            .collect();
        let head_w = leaf(&self.head_w);
        let head_b = leaf(&self.head_b);
        ViTVars {
            w_p,
            b_p,
            z_cls,
            pos,
            layers,
            head_w,
            head_b,
        }
    }
}

/// Tape handles for one transformer layer.
#[derive(Clone, Debug)]
pub struct LayerVars {
    pub w_q: Var,
    pub w_k: Var,
    pub w_v: Var,
    pub w_o: Var,
    pub ln1_gain: Var,
    pub ln1_bias: Var,
    pub ln2_gain: Var,
    pub ln2_bias: Var,
    pub ffn_w1: Var,
    pub ffn_b1: Var,
    pub ffn_w2: Var,
    pub ffn_b2: Var,
}

/// Tape handles mirroring [`ViTParams`].
#[derive(Clone, Debug)]
pub struct ViTVars {
    pub w_p: Var,
    pub b_p: Var,
    pub z_cls: Var,
    pub pos: Var,
    pub layers: Vec<LayerVars>,
    pub head_w: Var,
    pub head_b: Var,
}

impl ViTVars {
    /// Handles in [`ViTParams::tensors`] order.
    pub fn ordered(&self) -> Vec<Var> {
        let mut out = vec![self.w_p, self.b_p, self.z_cls, self.pos];
        for l in &self.layers {
            out.extend([
                l.w_q, l.w_k, l.w_v, l.w_o, l.ln1_gain, l.ln1_bias, l.ln2_gain, l.ln2_bias, l.ffn_w1,
                l.ffn_b1, l.ffn_w2, l.ffn_b2,
            ]);
        }
        out.push(self.head_w);
        out.push(self.head_b);
        out
    }
}

/// Residual-branch behaviour of one layer.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DepthMode {
    /// Both branches always applied, unscaled.
    Eval,
    /// Stochastic depth: a kept branch is scaled by `1 / survival_prob`, a
    /// dropped branch is skipped.
    Train {
        keep_attn: bool,
        keep_ffn: bool,
        survival_prob: f64,
    },
}

/// Splits the window into `N = L / P` patches and projects each one:
/// token_i = W_p · patch_i + b_p.
pub fn patch_embed(tape: &mut Tape, window: &[f64], vars: &ViTVars, config: &ViTConfig) -> Result<Var> {
    if window.len() != config.window_len || config.window_len % config.patch_size != 0 {
        return Err(Error::Config(format!(
            "window of {} samples does not fit window_len {} / patch_size {}",
            window.len(),
            config.window_len,
            config.patch_size
        )));
    }
    let patches = tape.constant(Tensor::new(
        vec![config.num_patches(), config.patch_size],
        window.to_vec(),
    )?);
    let projected = tape.matmul_nt(patches, vars.w_p)?;
    tape.add_row(projected, vars.b_p)
}

/// Prepends the class token and adds the position table.
pub fn add_cls_and_positions(tape: &mut Tape, tokens: Var, vars: &ViTVars) -> Result<Var> {
    let seq = tape.concat_rows(vars.z_cls, tokens)?;
    tape.add(seq, vars.pos)
}

/// Multi-head self-attention. Returns the projected output and each head's
/// attention matrix.
pub fn mhsa(tape: &mut Tape, z: Var, layer: &LayerVars, num_heads: usize) -> Result<(Var, Vec<Var>)> {
    let d = tape.value(z).matrix_dims().1;
    if num_heads == 0 || d % num_heads != 0 {
        return Err(Error::Config(format!("embed dim {d} not divisible by {num_heads} heads")));
    }
    let dk = d / num_heads;
    let q = tape.matmul_nt(z, layer.w_q)?;
    let k = tape.matmul_nt(z, layer.w_k)?;
    let v = tape.matmul_nt(z, layer.w_v)?;
    let inv_sqrt = 1.0 / (dk as f64).sqrt();
    let mut heads = Vec::with_capacity(num_heads);
    let mut attention = Vec::with_capacity(num_heads);
    for h in 0..num_heads {
        let qh = tape.slice_cols(q, h * dk, dk)?;
        let kh = tape.slice_cols(k, h * dk, dk)?;
        let vh = tape.slice_cols(v, h * dk, dk)?;
        let scores = tape.matmul_nt(qh, kh)?;
        let scores = tape.scale(scores, inv_sqrt);
        let a = tape.softmax_rows(scores);
        heads.push(tape.matmul(a, vh)?);
        attention.push(a);
    }
    let concat = if heads.len() == 1 { heads[0] } else { tape.concat_cols(&heads)? };
    Ok((tape.matmul_nt(concat, layer.w_o)?, attention))
}

fn residual(tape: &mut Tape, z: Var, branch: Var, keep: bool, scale: f64) -> Result<Var> {
    if !keep {
        return Ok(z);
    }
    let branch = if scale == 1.0 { branch } else { tape.scale(branch, scale) };
    tape.add(z, branch)
}

/// Pre-norm block: `Z1 = Z + drop(MHSA(LN(Z)))`, `Z' = Z1 + drop(FFN(LN(Z1)))`,
/// with a GELU feedforward.
pub fn transformer_layer(
    tape: &mut Tape,
    z: Var,
    layer: &LayerVars,
    num_heads: usize,
    mode: DepthMode,
) -> Result<(Var, Vec<Var>)> {
    let (keep_attn, keep_ffn, scale) = match mode {
        DepthMode::Eval => (true, true, 1.0),
        DepthMode::Train {
            keep_attn,
            keep_ffn,
            survival_prob,
        } => (keep_attn, keep_ffn, 1.0 / survival_prob),
    };
    let h = tape.layer_norm(z, layer.ln1_gain, layer.ln1_bias)?;
    let (attn, maps) = mhsa(tape, h, layer, num_heads)?;
    let z1 = residual(tape, z, attn, keep_attn, scale)?;

    let h = tape.layer_norm(z1, layer.ln2_gain, layer.ln2_bias)?;
    let f = tape.matmul_nt(h, layer.ffn_w1)?;
    let f = tape.add_row(f, layer.ffn_b1)?;
    let f = tape.gelu(f);
    let f = tape.matmul_nt(f, layer.ffn_w2)?;
    let f = tape.add_row(f, layer.ffn_b2)?;
    Ok((residual(tape, z1, f, keep_ffn, scale)?, maps))
}

/// Tape handles produced by one forward pass.
#[derive(Clone, Debug)]
pub struct ForwardOutput {
    /// 1×C logits.
    pub logits: Var,
    /// Final class-token embedding, 1×d.
    pub cls: Var,
    /// `attention[layer][head]`, each (N+1)×(N+1).
    pub attention: Vec<Vec<Var>>,
}

/// Full forward pass. `training = Some(rng)` enables stochastic depth.
pub fn vit_forward<R: Rng + ?Sized>(
    tape: &mut Tape,
    window: &[f64],
    vars: &ViTVars,
    config: &ViTConfig,
    mut training: Option<&mut R>,
) -> Result<ForwardOutput> {
    let tokens = patch_embed(tape, window, vars, config)?;
    let mut z = add_cls_and_positions(tape, tokens, vars)?;
    if !tape.value(z).is_finite() {
        return Err(Error::Numerical("non-finite activation in patch embedding".into()));
    }
    let mut attention = Vec::with_capacity(vars.layers.len());
    for (i, layer) in vars.layers.iter().enumerate() {
        let mode = match training.as_deref_mut() {
            None => DepthMode::Eval,
            Some(rng) => {
                let p = config.survival_prob;
                DepthMode::Train {
                    keep_attn: rng.random::<f64>() < p,
                    keep_ffn: rng.random::<f64>() < p,
                    survival_prob: p,
                }
            }
        };
        let (next, maps) = transformer_layer(tape, z, layer, config.num_heads, mode)?;
        if !tape.value(next).is_finite() {
            return Err(Error::Numerical(format!("non-finite activation in transformer layer {i}")));
        }
        z = next;
        attention.push(maps);
    }
    let cls = tape.select_row(z, 0)?;
    let logits = tape.matmul_nt(cls, vars.head_w)?;
    let logits = tape.add_row(logits, vars.head_b)?;
    if !tape.value(logits).is_finite() {
        return Err(Error::Numerical("non-finite activation in classifier head".into()));
    }
    Ok(ForwardOutput {
        logits,
        cls,
        attention,
    })
}

/// Evaluation-mode activations of one window.
#[derive(Clone, Debug)]
pub struct ForwardTrace {
    pub logits: Vec<f64>,
    pub embedding: Vec<f64>,
    pub attention: Vec<Vec<Tensor>>,
}

/// A configured transformer with its parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VitModel {
    pub config: ViTConfig,
    pub params: ViTParams,
}

impl VitModel {
    pub fn new(config: ViTConfig, seed: u64) -> Result<Self> {
        let params = ViTParams::init(&config, seed)?;
        Ok(Self { config, params })
    }

    pub fn from_parts(config: ViTConfig, params: ViTParams) -> Result<Self> {
        config.validate()?;
        params.check_shapes(&config)?;
        Ok(Self { config, params })
    }

    pub fn trace(&self, window: &[f64]) -> Result<ForwardTrace> {
        if window.len() != self.config.window_len {
            return Err(Error::Input(format!(
                "window has {} samples, model expects {}",
                window.len(),
                self.config.window_len
            )));
        }
        let mut tape = Tape::new();
        let vars = self.params.register(&mut tape, false);
        let out = vit_forward::<rand_chacha::ChaCha8Rng>(&mut tape, window, &vars, &self.config, None)?;
        Ok(ForwardTrace {
            logits: tape.value(out.logits).data().to_vec(),
            embedding: tape.value(out.cls).data().to_vec(),
            attention: out
                .attention
                .iter()
                .map(|l| l.iter().map(|a| tape.value(*a).clone()).collect())
                .collect(),
        })
    }

    /// Training-mode forward with stochastic depth seeded by `seed`.
    pub fn train_logits(&self, window: &[f64], seed: u64) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let vars = self.params.register(&mut tape, false);
        let mut rng = seed::rng(seed);
        let out = vit_forward(&mut tape, window, &vars, &self.config, Some(&mut rng))?;
        Ok(tape.value(out.logits).data().to_vec())
    }
}

impl Classifier for VitModel {
    fn num_classes(&self) -> usize {
        self.config.num_classes
    }

    fn window_len(&self) -> usize {
        self.config.window_len
    }

    fn logits(&self, window: &[f64]) -> Result<Vec<f64>> {
        Ok(self.trace(window)?.logits)
    }

    fn embedding(&self, window: &[f64]) -> Result<Vec<f64>> {
        Ok(self.trace(window)?.embedding)
    }
}

impl Trainable for VitModel {
    fn parameters(&self) -> Vec<&Tensor> {
        self.params.tensors()
    }

    fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        self.params.tensors_mut()
    }

    fn loss_and_grads(&self, window: &[f64], target: usize, stochastic_seed: u64) -> Result<(f64, Vec<Vec<f64>>)> {
        let mut tape = Tape::new();
        let vars = self.params.register(&mut tape, true);
        let mut rng = seed::rng(stochastic_seed);
        let out = vit_forward(&mut tape, window, &vars, &self.config, Some(&mut rng))?;
        let loss = tape.cross_entropy(out.logits, &[target])?;
        tape.backward(loss)?;
        let value = tape.scalar(loss);
        let grads = vars
            .ordered()
            .into_iter()
            .map(|v| tape.take_grad(v).unwrap_or_else(|| vec![0.0; tape.value(v).len()]))
            .collect();
        Ok((value, grads))
    }
}
