//! The multi-branch hyperbolic network: per-neighborhood embedding stacks
//! (feature transform, tangent-space aggregation, activation with trainable
//! curvature) over the `4K` proximity branches, fused by hyperbolic
//! neighborhood collaboration, plus the mass and classifier heads.
//!
//! Branch weights and biases are separate per branch; the per-layer
//! curvatures are shared across branches. Biases are stored as unconstrained
//! tangent vectors and realized on the ball with the current layer's
//! exponential map, which keeps every trainable in flat space.
//!
//! The fused embedding is a Möbius average: a canonical left-fold of the
//! branch outputs (diffusion-in k=1..K, diffusion-out, common-in,
//! common-out) scaled by `1/(4K)`. Möbius addition is neither associative
//! nor commutative, so the fold order is fixed for determinism. The fold is
//! then aggregated with the branch outputs in the tangent space with equal
//! weights `1/(4K+1)`. (A tangent-space average for the fold itself would be
//! a defensible alternative reading; only the Möbius fold is implemented.)

use std::path::Path;
use std::rc::Rc;

use rand::Rng;
use rand_chacha::ChaCha20Rng;

use crate::digraph::proximity::{push_u32, push_u64, Reader};
use crate::digraph::ProximityStack;
use crate::error::{Error, Result};
use crate::hgeom::{self, Curv};
use crate::tensor::{Tape, Tensor, TensorId};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Identity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerConfig {
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
}

/// Architecture: feature dimension, per-layer output sizes (the last entry
/// is the embedding dimension), and the proximity order `K`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub feature_dim: usize,
    pub layer_dims: Vec<usize>,
    pub k_max: usize,
}

impl ModelConfig {
    pub fn layers(&self) -> Vec<LayerConfig> {
        let mut out = Vec::with_capacity(self.layer_dims.len());
        let mut prev = self.feature_dim;
        for (i, &d) in self.layer_dims.iter().enumerate() {
            out.push(LayerConfig {
                in_dim: prev,
                out_dim: d,
                activation: if i + 1 == self.layer_dims.len() {
                    Activation::Identity
                } else {
                    Activation::Relu
                },
            });
            prev = d;
        }
        out
    }

    pub fn embed_dim(&self) -> usize {
        *self.layer_dims.last().expect("at least one layer")
    }

    pub fn branch_count(&self) -> usize {
        4 * self.k_max
    }

    fn validate(&self) -> Result<()> {
        if self.layer_dims.is_empty() {
            return Err(Error::config("model needs at least one layer".to_string()));
        }
        if self.feature_dim == 0 || self.layer_dims.contains(&0) {
            return Err(Error::config("layer dimensions must be positive".to_string()));
        }
        if self.k_max == 0 {
            return Err(Error::config("K must be >= 1".to_string()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierParams {
    pub input_dim: usize,
    pub classes: usize,
    /// `(input_dim, classes)` row-major.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

/// All trainable state. Parameter arrays are enumerated in one fixed order
/// (branch-major weights and biases, curvatures, mass head, classifier) so
/// the optimizer, gradients, and checkpoints always agree.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    /// `[branch][layer]`, `(in_dim, out_dim)` row-major.
    pub weights: Vec<Vec<Vec<f64>>>,
    /// `[branch][layer]`, tangent vector of length `out_dim`.
    pub biases: Vec<Vec<Vec<f64>>>,
    /// Raw scalars, one per layer plus one for the input lift; the live
    /// curvature is `softplus(raw)`.
    pub raw_curvatures: Vec<f64>,
    /// `(embed_dim, 1)` mass head weight.
    pub mass_weight: Vec<f64>,
    pub mass_bias: Vec<f64>,
    pub classifier: Option<ClassifierParams>,
}

/// Raw value such that `softplus(raw) = 1`.
pub const RAW_CURVATURE_ONE: f64 = 0.541324854612918;

fn glorot(rng: &mut ChaCha20Rng, fan_in: usize, fan_out: usize) -> Vec<f64> {
    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
    (0..fan_in * fan_out)
        .map(|_| rng.random_range(-a..a))
        .collect()
}

impl ModelParams {
    /// Glorot-uniform weights, zero bias tangents, unit initial curvatures.
    /// `classifier` is `(input_width_multiplier, classes)`: 1 for node-level
    /// heads, 2 for the concatenated pair head.
    pub fn init(
        config: ModelConfig,
        classifier: Option<(usize, usize)>,
        rng: &mut ChaCha20Rng,
    ) -> Result<Self> {
        config.validate()?;
        let layers = config.layers();
        let branches = config.branch_count();
        let mut weights = Vec::with_capacity(branches);
        let mut biases = Vec::with_capacity(branches);
        for _ in 0..branches {
            let mut ws = Vec::with_capacity(layers.len());
            let mut bs = Vec::with_capacity(layers.len());
            for l in &layers {
                ws.push(glorot(rng, l.in_dim, l.out_dim));
                bs.push(vec![0.0; l.out_dim]);
            }
            weights.push(ws);
            biases.push(bs);
        }
        let d = config.embed_dim();
        let mass_weight = glorot(rng, d, 1);
        let classifier = classifier
            .map(|(mult, classes)| -> Result<ClassifierParams> {
                if classes < 2 {
                    return Err(Error::config(format!(
                        "classifier needs at least 2 classes, got {classes}"
                    )));
                }
                let input_dim = mult * d;
                Ok(ClassifierParams {
                    input_dim,
                    classes,
                    weight: glorot(rng, input_dim, classes),
                    bias: vec![0.0; classes],
                })
            })
            .transpose()?;
        Ok(ModelParams {
            raw_curvatures: vec![RAW_CURVATURE_ONE; layers.len() + 1],
            weights,
            biases,
            mass_weight,
            mass_bias: vec![0.0],
            classifier,
            config,
        })
    }

    pub fn num_layers(&self) -> usize {
        self.config.layer_dims.len()
    }

    pub fn embed_dim(&self) -> usize {
        self.config.embed_dim()
    }

    /// `(name, rows, cols)` for every parameter array, in the fixed order.
    pub fn entries(&self) -> Vec<(String, usize, usize)> {
        let layers = self.config.layers();
        let mut out = Vec::new();
        for b in 0..self.config.branch_count() {
            for (l, lc) in layers.iter().enumerate() {
                out.push((format!("branch{b}.layer{l}.weight"), lc.in_dim, lc.out_dim));
                out.push((format!("branch{b}.layer{l}.bias"), 1, lc.out_dim));
            }
        }
        out.push(("raw_curvatures".to_string(), layers.len() + 1, 1));
        out.push(("mass.weight".to_string(), self.embed_dim(), 1));
        out.push(("mass.bias".to_string(), 1, 1));
        if let Some(c) = &self.classifier {
            out.push(("classifier.weight".to_string(), c.input_dim, c.classes));
            out.push(("classifier.bias".to_string(), 1, c.classes));
        }
        out
    }

    pub fn arrays(&self) -> Vec<&Vec<f64>> {
        let mut out = Vec::new();
        for b in 0..self.weights.len() {
            for l in 0..self.weights[b].len() {
                out.push(&self.weights[b][l]);
                out.push(&self.biases[b][l]);
            }
        }
        out.push(&self.raw_curvatures);
        out.push(&self.mass_weight);
        out.push(&self.mass_bias);
        if let Some(c) = &self.classifier {
            out.push(&c.weight);
            out.push(&c.bias);
        }
        out
    }

    pub fn arrays_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let mut out = Vec::new();
        for (ws, bs) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            for (w, b) in ws.iter_mut().zip(bs.iter_mut()) {
                out.push(w);
                out.push(b);
            }
        }
        out.push(&mut self.raw_curvatures);
        out.push(&mut self.mass_weight);
        out.push(&mut self.mass_bias);
        if let Some(c) = &mut self.classifier {
            out.push(&mut c.weight);
            out.push(&mut c.bias);
        }
        out
    }

    pub fn all_finite(&self) -> bool {
        self.arrays()
            .iter()
            .all(|a| a.iter().all(|v| v.is_finite()))
    }
}

/// Parameter tensors staged on a tape for one forward/backward pass, in the
/// same fixed order as [`ModelParams::arrays`].
pub struct StagedParams {
    pub weights: Vec<Vec<TensorId>>,
    pub biases: Vec<Vec<TensorId>>,
    pub raw_curvatures: TensorId,
    pub mass_weight: TensorId,
    pub mass_bias: TensorId,
    pub classifier: Option<(TensorId, TensorId)>,
    /// Every staged leaf in enumeration order, for gradient collection.
    pub leaves: Vec<TensorId>,
}

pub fn stage_params(tape: &mut Tape, params: &ModelParams, trainable: bool) -> StagedParams {
    let layers = params.config.layers();
    let mut leaves = Vec::new();
    let mut stage = |tape: &mut Tape, rows: usize, cols: usize, data: &[f64]| -> TensorId {
        let mut t = Tensor::new(rows, cols, data.to_vec()).expect("params stay finite");
        t.requires_grad = trainable;
        let id = tape.leaf(t);
        leaves.push(id);
        id
    };

    let mut weights = Vec::with_capacity(params.weights.len());
    let mut biases = Vec::with_capacity(params.biases.len());
    for b in 0..params.weights.len() {
        let mut ws = Vec::new();
        let mut bs = Vec::new();
        for (l, lc) in layers.iter().enumerate() {
            ws.push(stage(tape, lc.in_dim, lc.out_dim, &params.weights[b][l]));
            bs.push(stage(tape, 1, lc.out_dim, &params.biases[b][l]));
        }
        weights.push(ws);
        biases.push(bs);
    }
    let raw_curvatures = stage(tape, params.raw_curvatures.len(), 1, &params.raw_curvatures);
    let mass_weight = stage(tape, params.embed_dim(), 1, &params.mass_weight);
    let mass_bias = stage(tape, 1, 1, &params.mass_bias);
    let classifier = params.classifier.as_ref().map(|c| {
        let w = stage(tape, c.input_dim, c.classes, &c.weight);
        let b = stage(tape, 1, c.classes, &c.bias);
        (w, b)
    });
    StagedParams {
        weights,
        biases,
        raw_curvatures,
        mass_weight,
        mass_bias,
        classifier,
        leaves,
    }
}

/// Per-pass behavior switches. Dropout only fires in training mode, on the
/// tangent-space activations.
#[derive(Debug, Clone, Copy)]
pub struct ForwardSettings {
    pub dropout: f64,
    pub training: bool,
}

impl ForwardSettings {
    pub fn eval() -> Self {
        ForwardSettings {
            dropout: 0.0,
            training: false,
        }
    }
}

/// Handles to the forward pass outputs still living on the tape.
pub struct ModelOutput {
    pub branch_outputs: Vec<TensorId>,
    pub z_fuse: TensorId,
    pub z_hyper: TensorId,
    pub z_tangent: TensorId,
    pub mass: TensorId,
    pub curv: Curv,
}

/// The forward outputs extracted to plain tensors for evaluation and export.
#[derive(Debug, Clone)]
pub struct EmbeddingOutput {
    pub z_hyper: Tensor,
    pub z_tangent: Tensor,
    pub mass: Vec<f64>,
    pub curvature: f64,
}

/// Row-wise lift of Euclidean features onto the ball at curvature `c0`.
pub fn lift_features(tape: &mut Tape, features: TensorId, c0: &Curv) -> Result<TensorId> {
    hgeom::exp_map_origin(tape, features, c0)
}

/// One hyperbolic layer: Möbius feature transform with ball-realized bias,
/// tangent-space neighbor aggregation under `agg`, then activation with the
/// curvature hand-off from `c_prev` to `c_next`.
#[allow(clippy::too_many_arguments)]
pub fn hyp_layer(
    tape: &mut Tape,
    x: TensorId,
    weight: TensorId,
    bias: TensorId,
    agg: Rc<crate::tensor::SparseMatrix>,
    c_prev: &Curv,
    c_next: &Curv,
    activation: Activation,
    dropout_mask: Option<TensorId>,
) -> Result<TensorId> {
    let transformed = hgeom::mobius_matvec(tape, x, weight, c_prev)?;
    let bias_ball = hgeom::exp_map_origin(tape, bias, c_prev)?;
    let m = hgeom::mobius_add(tape, transformed, bias_ball, c_prev)?;

    let m_tan = hgeom::log_map_origin(tape, m, c_prev)?;
    let agg_tan = tape.sparse_matmul(agg, m_tan)?;
    let h = hgeom::exp_map_origin(tape, agg_tan, c_prev)?;

    let mut u = hgeom::log_map_origin(tape, h, c_prev)?;
    if activation == Activation::Relu {
        u = tape.relu(u)?;
    }
    if let Some(mask) = dropout_mask {
        u = tape.mul(u, mask)?;
    }
    hgeom::exp_map_origin(tape, u, c_next)
}

/// Stages `softplus` curvatures for the lift plus every layer.
pub fn stage_curvatures(tape: &mut Tape, staged: &StagedParams, num_layers: usize) -> Result<Vec<Curv>> {
    let mut out = Vec::with_capacity(num_layers + 1);
    for l in 0..=num_layers {
        let raw = tape.gather_rows(staged.raw_curvatures, Rc::new(vec![l]))?;
        let c = tape.softplus(raw)?;
        out.push(hgeom::curv(tape, c)?);
    }
    Ok(out)
}

/// Runs every proximity branch through its own layer stack. Returns the `4K`
/// branch outputs (all at the final curvature) and the staged curvatures.
pub fn forward_branches(
    tape: &mut Tape,
    features: TensorId,
    stack: &ProximityStack,
    staged: &StagedParams,
    params: &ModelParams,
    settings: ForwardSettings,
    rng: &mut ChaCha20Rng,
) -> Result<(Vec<TensorId>, Vec<Curv>)> {
    let branches = params.config.branch_count();
    if stack.branch_count() != branches {
        return Err(Error::contract(format!(
            "proximity stack has K = {} but the model expects K = {}",
            stack.k_max(),
            params.config.k_max
        )));
    }
    let n = tape.value(features).rows;
    if stack.n() != n {
        return Err(Error::contract(format!(
            "proximity stack covers {} nodes, features have {n} rows",
            stack.n()
        )));
    }
    let layers = params.config.layers();
    let curvs = stage_curvatures(tape, staged, layers.len())?;
    let lifted = lift_features(tape, features, &curvs[0])?;

    let mut outputs = Vec::with_capacity(branches);
    for b in 0..branches {
        let agg = stack.weights_for(b);
        let mut x = lifted;
        for (l, lc) in layers.iter().enumerate() {
            let mask = if settings.training && settings.dropout > 0.0 {
                Some(dropout_mask(tape, rng, n, lc.out_dim, settings.dropout))
            } else {
                None
            };
            x = hyp_layer(
                tape,
                x,
                staged.weights[b][l],
                staged.biases[b][l],
                Rc::clone(&agg),
                &curvs[l],
                &curvs[l + 1],
                lc.activation,
                mask,
            )?;
        }
        outputs.push(x);
    }
    Ok((outputs, curvs))
}

fn dropout_mask(tape: &mut Tape, rng: &mut ChaCha20Rng, rows: usize, cols: usize, p: f64) -> TensorId {
    let keep = 1.0 - p;
    let data: Vec<f64> = (0..rows * cols)
        .map(|_| {
            if rng.random::<f64>() < p {
                0.0
            } else {
                1.0 / keep
            }
        })
        .collect();
    tape.constant(Tensor {
        rows,
        cols,
        data,
        requires_grad: false,
    })
}

/// Hyperbolic neighborhood collaboration: the Möbius mean of the branch
/// outputs (`z_fuse`) aggregated with them in the tangent space with equal
/// weights `1/(4K+1)`. Returns `(z_fuse, z_hyper)`.
pub fn collaborate(
    tape: &mut Tape,
    branch_outputs: &[TensorId],
    c_last: &Curv,
) -> Result<(TensorId, TensorId)> {
    if branch_outputs.is_empty() {
        return Err(Error::contract("collaborate needs at least one branch".to_string()));
    }
    let mut fold = branch_outputs[0];
    for &v in &branch_outputs[1..] {
        fold = hgeom::mobius_add(tape, fold, v, c_last)?;
    }
    let z_fuse = hgeom::mobius_scalar_mul(tape, 1.0 / branch_outputs.len() as f64, fold, c_last)?;

    let w = 1.0 / (branch_outputs.len() + 1) as f64;
    let mut acc = {
        let lt = hgeom::log_map_origin(tape, z_fuse, c_last)?;
        tape.mul_scalar(lt, w)?
    };
    for &v in branch_outputs {
        let lt = hgeom::log_map_origin(tape, v, c_last)?;
        let term = tape.mul_scalar(lt, w)?;
        acc = tape.add(acc, term)?;
    }
    let z_hyper = hgeom::exp_map_origin(tape, acc, c_last)?;
    Ok((z_fuse, z_hyper))
}

/// The mass head: a Euclidean linear layer on the tangent embedding.
pub fn node_mass(
    tape: &mut Tape,
    z_tangent: TensorId,
    mass_weight: TensorId,
    mass_bias: TensorId,
) -> Result<TensorId> {
    let mw = tape.matmul(z_tangent, mass_weight)?;
    tape.add(mw, mass_bias)
}

/// Full forward pass: branches, collaboration, tangent embedding, mass.
pub fn forward_full(
    tape: &mut Tape,
    features: TensorId,
    stack: &ProximityStack,
    staged: &StagedParams,
    params: &ModelParams,
    settings: ForwardSettings,
    rng: &mut ChaCha20Rng,
) -> Result<ModelOutput> {
    let (branch_outputs, curvs) = forward_branches(tape, features, stack, staged, params, settings, rng)?;
    let c_last = curvs[curvs.len() - 1];
    let (z_fuse, z_hyper) = collaborate(tape, &branch_outputs, &c_last)?;
    let z_tangent = hgeom::log_map_origin(tape, z_hyper, &c_last)?;
    let mass = node_mass(tape, z_tangent, staged.mass_weight, staged.mass_bias)?;
    Ok(ModelOutput {
        branch_outputs,
        z_fuse,
        z_hyper,
        z_tangent,
        mass,
        curv: c_last,
    })
}

/// Evaluation-mode forward on a fresh tape, extracting plain tensors.
pub fn compute_embedding(
    features: &Tensor,
    stack: &ProximityStack,
    params: &ModelParams,
) -> Result<EmbeddingOutput> {
    let mut tape = Tape::new();
    let mut rng = rand_chacha::rand_core::SeedableRng::seed_from_u64(0);
    let f = tape.constant(features.clone());
    let staged = stage_params(&mut tape, params, false);
    let out = forward_full(
        &mut tape,
        f,
        stack,
        &staged,
        params,
        ForwardSettings::eval(),
        &mut rng,
    )?;
    Ok(EmbeddingOutput {
        z_hyper: tape.value(out.z_hyper).clone(),
        z_tangent: tape.value(out.z_tangent).clone(),
        mass: tape.value(out.mass).data.clone(),
        curvature: tape.value(out.curv.c).data[0],
    })
}

const CHECKPOINT_MAGIC: &[u8] = b"DHYPRCKP";
const CHECKPOINT_VERSION: u32 = 1;

/// Writes a versioned binary checkpoint: a config echo (arbitrary JSON
/// produced by the caller), the architecture, and every parameter array
/// tagged with its name and shape. Reload is bit-exact.
pub fn save_checkpoint(path: &Path, config_echo: &str, params: &ModelParams) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    push_u32(&mut buf, CHECKPOINT_VERSION);
    let echo = config_echo.as_bytes();
    push_u64(&mut buf, echo.len() as u64);
    buf.extend_from_slice(echo);

    push_u64(&mut buf, params.config.feature_dim as u64);
    push_u32(&mut buf, params.config.layer_dims.len() as u32);
    for &d in &params.config.layer_dims {
        push_u64(&mut buf, d as u64);
    }
    push_u32(&mut buf, params.config.k_max as u32);
    match &params.classifier {
        Some(c) => {
            buf.push(1);
            push_u64(&mut buf, c.input_dim as u64);
            push_u64(&mut buf, c.classes as u64);
        }
        None => buf.push(0),
    }

    let entries = params.entries();
    let arrays = params.arrays();
    push_u32(&mut buf, entries.len() as u32);
    for ((name, rows, cols), data) in entries.iter().zip(arrays) {
        push_u32(&mut buf, name.len() as u32);
        buf.extend_from_slice(name.as_bytes());
        push_u64(&mut buf, *rows as u64);
        push_u64(&mut buf, *cols as u64);
        for &v in data.iter() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    std::fs::write(path, buf)?;
    Ok(())
}

/// Reads a checkpoint back; returns the config echo and the parameters.
pub fn load_checkpoint(path: &Path) -> Result<(String, ModelParams)> {
    let buf = std::fs::read(path)?;
    let mut r = Reader::new(&buf);
    if r.take(CHECKPOINT_MAGIC.len())? != CHECKPOINT_MAGIC {
        return Err(Error::Format("not a checkpoint file".to_string()));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!(
            "unsupported checkpoint version {version}"
        )));
    }
    let echo_len = r.u64()? as usize;
    let echo = String::from_utf8(r.take(echo_len)?.to_vec())
        .map_err(|_| Error::Format("config echo is not UTF-8".to_string()))?;

    let feature_dim = r.u64()? as usize;
    let n_layers = r.u32()? as usize;
    let mut layer_dims = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        layer_dims.push(r.u64()? as usize);
    }
    let k_max = r.u32()? as usize;
    let config = ModelConfig {
        feature_dim,
        layer_dims,
        k_max,
    };
    let classifier_dims = match r.u8()? {
        0 => None,
        1 => Some((r.u64()? as usize, r.u64()? as usize)),
        t => return Err(Error::Format(format!("bad classifier tag {t}"))),
    };

    // construct an empty shell, then fill arrays by name
    let layers = config.layers();
    let mut params = ModelParams {
        weights: vec![vec![Vec::new(); layers.len()]; config.branch_count()],
        biases: vec![vec![Vec::new(); layers.len()]; config.branch_count()],
        raw_curvatures: Vec::new(),
        mass_weight: Vec::new(),
        mass_bias: Vec::new(),
        classifier: classifier_dims.map(|(input_dim, classes)| ClassifierParams {
            input_dim,
            classes,
            weight: Vec::new(),
            bias: Vec::new(),
        }),
        config,
    };

    let expected = params.entries();
    let count = r.u32()? as usize;
    if count != expected.len() {
        return Err(Error::Format(format!(
            "checkpoint stores {count} arrays, architecture implies {}",
            expected.len()
        )));
    }
    {
        let mut arrays = params.arrays_mut();
        for (slot, (name, rows, cols)) in arrays.iter_mut().zip(&expected) {
            let name_len = r.u32()? as usize;
            let got = String::from_utf8(r.take(name_len)?.to_vec())
                .map_err(|_| Error::Format("array name is not UTF-8".to_string()))?;
            if &got != name {
                return Err(Error::Format(format!(
                    "array order mismatch: expected `{name}`, found `{got}`"
                )));
            }
            let (gr, gc) = (r.u64()? as usize, r.u64()? as usize);
            if gr != *rows || gc != *cols {
                return Err(Error::Format(format!(
                    "array `{name}` has shape ({gr}, {gc}), expected ({rows}, {cols})"
                )));
            }
            let mut data = Vec::with_capacity(gr * gc);
            for _ in 0..gr * gc {
                data.push(r.f64()?);
            }
            **slot = data;
        }
    }
    r.finish()?;
    if !params.all_finite() {
        return Err(Error::Format("checkpoint holds non-finite values".to_string()));
    }
    Ok((echo, params))
}
