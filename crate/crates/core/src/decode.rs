//! Edge decoders and loss compositions.
//!
//! The Fermi-Dirac decoder scores a pair by squared hyperbolic distance and
//! is symmetric; the gravity decoder uses the *target* node's learned mass,
//! `sigmoid(m_j - λ·log d²)`, so it is direction-sensitive. Both feed a
//! binary cross-entropy over positive edges and sampled negatives; the
//! classification tasks add the same pair as a self-supervised regularizer.

use std::collections::HashSet;
use std::rc::Rc;

use rand::Rng;
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::geometry::{self, Curvature};
use crate::hgeom::{self, Curv};
use crate::model::ModelOutput;
use crate::tensor::{Tape, Tensor, TensorId};

/// Probabilities are clamped to `[PROB_EPS, 1 - PROB_EPS]` before any log.
pub const PROB_EPS: f64 = 1e-12;
/// Distance floor inside the gravity decoder's `log(d²)`.
pub const DIST_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecoderConfig {
    /// Fermi-Dirac radius.
    pub radius: f64,
    /// Fermi-Dirac temperature, `> 0`.
    pub temperature: f64,
    /// Gravity distance weight, `> 0`.
    pub lambda: f64,
    /// Weight of the gravity term against the Fermi-Dirac term.
    pub w_g: f64,
    /// Weight of the whole self-supervised pair in classification losses.
    pub w_r: f64,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        DecoderConfig {
            radius: 2.0,
            temperature: 1.0,
            lambda: 1.0,
            w_g: 1.0,
            w_r: 0.5,
        }
    }
}

impl DecoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.temperature <= 0.0 || self.temperature.is_nan() {
            return Err(Error::config(format!(
                "temperature must be positive, got {}",
                self.temperature
            )));
        }
        if self.lambda <= 0.0 || self.lambda.is_nan() {
            return Err(Error::config(format!(
                "lambda must be positive, got {}",
                self.lambda
            )));
        }
        if self.w_g < 0.0 || self.w_r < 0.0 {
            return Err(Error::config("w_g and w_r must be nonnegative".to_string()));
        }
        Ok(())
    }
}

fn scalar_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `1 / (exp((d² - r)/t) + 1)` on plain coordinates; symmetric in `(i, j)`.
pub fn fermi_dirac_score(
    zi: &[f64],
    zj: &[f64],
    c: Curvature,
    cfg: &DecoderConfig,
) -> Result<f64> {
    let d = geometry::distance(zi, zj, c)?;
    Ok(scalar_sigmoid((cfg.radius - d * d) / cfg.temperature))
}

/// `sigmoid(m_j - λ·log d²)` on plain coordinates; uses the target mass.
pub fn gravity_score(
    zi: &[f64],
    zj: &[f64],
    mass_j: f64,
    c: Curvature,
    cfg: &DecoderConfig,
) -> Result<f64> {
    let d = geometry::distance(zi, zj, c)?.max(DIST_FLOOR);
    Ok(scalar_sigmoid(mass_j - cfg.lambda * 2.0 * d.ln()))
}

fn pair_indices(pairs: &[(u32, u32)]) -> (Rc<Vec<usize>>, Rc<Vec<usize>>) {
    let src = pairs.iter().map(|&(i, _)| i as usize).collect();
    let dst = pairs.iter().map(|&(_, j)| j as usize).collect();
    (Rc::new(src), Rc::new(dst))
}

/// Hyperbolic distances for a pair list, shape `(|pairs|, 1)`.
pub fn pair_distances(
    tape: &mut Tape,
    z: TensorId,
    pairs: &[(u32, u32)],
    c: &Curv,
) -> Result<TensorId> {
    let (src, dst) = pair_indices(pairs);
    let zi = tape.gather_rows(z, src)?;
    let zj = tape.gather_rows(z, dst)?;
    hgeom::distance(tape, zi, zj, c)
}

/// Traced Fermi-Dirac scores for a pair list.
pub fn fermi_dirac_scores(
    tape: &mut Tape,
    z: TensorId,
    pairs: &[(u32, u32)],
    c: &Curv,
    cfg: &DecoderConfig,
) -> Result<TensorId> {
    let d = pair_distances(tape, z, pairs, c)?;
    let d2 = tape.mul(d, d)?;
    let neg_d2 = tape.neg(d2)?;
    let shifted = tape.add_scalar(neg_d2, cfg.radius)?;
    let u = tape.mul_scalar(shifted, 1.0 / cfg.temperature)?;
    tape.sigmoid(u)
}

/// Traced gravity scores for a pair list; `mass` is the `(n, 1)` mass head.
pub fn gravity_scores(
    tape: &mut Tape,
    z: TensorId,
    mass: TensorId,
    pairs: &[(u32, u32)],
    c: &Curv,
    cfg: &DecoderConfig,
) -> Result<TensorId> {
    let (_, dst) = pair_indices(pairs);
    let mj = tape.gather_rows(mass, dst)?;
    let d = pair_distances(tape, z, pairs, c)?;
    let df = tape.clamp_min(d, DIST_FLOOR)?;
    let logd = tape.log(df)?;
    let logd2 = tape.mul_scalar(logd, 2.0)?;
    let pull = tape.mul_scalar(logd2, cfg.lambda)?;
    let u = tape.sub(mj, pull)?;
    tape.sigmoid(u)
}

/// Mean binary cross-entropy over positives scored toward 1 and negatives
/// toward 0, with probability clamping so the loss is always finite.
pub fn bce_with_negatives(
    tape: &mut Tape,
    pos_scores: TensorId,
    neg_scores: TensorId,
) -> Result<TensorId> {
    let n_pos = tape.value(pos_scores).len();
    let n_neg = tape.value(neg_scores).len();
    if n_pos == 0 {
        return Err(Error::contract(
            "bce_with_negatives: empty positive set".to_string(),
        ));
    }
    let p = tape.clamp(pos_scores, PROB_EPS, 1.0 - PROB_EPS)?;
    let log_p = tape.log(p)?;
    let pos_sum = tape.sum(log_p)?;
    let pos_term = tape.neg(pos_sum)?;

    let total = if n_neg > 0 {
        let q = tape.clamp(neg_scores, PROB_EPS, 1.0 - PROB_EPS)?;
        let neg_q = tape.neg(q)?;
        let one_minus = tape.add_scalar(neg_q, 1.0)?;
        let log_q = tape.log(one_minus)?;
        let neg_sum = tape.sum(log_q)?;
        let neg_term = tape.neg(neg_sum)?;
        tape.add(pos_term, neg_term)?
    } else {
        pos_term
    };
    tape.mul_scalar(total, 1.0 / (n_pos + n_neg) as f64)
}

/// Link-prediction objective: Fermi-Dirac BCE plus `w_g` times gravity BCE,
/// both over the same edge sets.
pub fn lp_loss(
    tape: &mut Tape,
    emb: &ModelOutput,
    pos: &[(u32, u32)],
    neg: &[(u32, u32)],
    cfg: &DecoderConfig,
) -> Result<TensorId> {
    let f_pos = fermi_dirac_scores(tape, emb.z_hyper, pos, &emb.curv, cfg)?;
    let f_neg = fermi_dirac_scores(tape, emb.z_hyper, neg, &emb.curv, cfg)?;
    let loss_f = bce_with_negatives(tape, f_pos, f_neg)?;

    let g_pos = gravity_scores(tape, emb.z_hyper, emb.mass, pos, &emb.curv, cfg)?;
    let g_neg = gravity_scores(tape, emb.z_hyper, emb.mass, neg, &emb.curv, cfg)?;
    let loss_g = bce_with_negatives(tape, g_pos, g_neg)?;

    let weighted = tape.mul_scalar(loss_g, cfg.w_g)?;
    tape.add(loss_f, weighted)
}

/// Affine map plus log-softmax over classes.
pub fn classifier_logprobs(
    tape: &mut Tape,
    input: TensorId,
    weight: TensorId,
    bias: TensorId,
) -> Result<TensorId> {
    let logits = tape.matmul(input, weight)?;
    let shifted = tape.add(logits, bias)?;
    tape.log_softmax_rows(shifted)
}

/// Mean negative log-likelihood of the given classes.
pub fn nll_loss(tape: &mut Tape, logprobs: TensorId, classes: &[usize]) -> Result<TensorId> {
    let lp = tape.value(logprobs);
    let (rows, cols) = lp.shape();
    if classes.len() != rows {
        return Err(Error::contract(format!(
            "nll_loss: {} class labels for {rows} rows",
            classes.len()
        )));
    }
    let mut mask = vec![0.0; rows * cols];
    for (i, &c) in classes.iter().enumerate() {
        if c >= cols {
            return Err(Error::contract(format!(
                "nll_loss: class {c} out of range ({cols} classes)"
            )));
        }
        mask[i * cols + c] = 1.0;
    }
    let mask = tape.constant(Tensor {
        rows,
        cols,
        data: mask,
        requires_grad: false,
    });
    let picked = tape.mul(logprobs, mask)?;
    let per_item = tape.row_sum(picked)?;
    let s = tape.mean(per_item)?;
    tape.neg(s)
}

/// Classification objective: class loss plus `w_r` times the self-supervised
/// link term `L_f + w_g·L_g`.
pub fn nc_sp_loss(
    tape: &mut Tape,
    class_loss: TensorId,
    emb: &ModelOutput,
    pos: &[(u32, u32)],
    neg: &[(u32, u32)],
    cfg: &DecoderConfig,
) -> Result<TensorId> {
    if cfg.w_r == 0.0 {
        return Ok(class_loss);
    }
    let reg = lp_loss(tape, emb, pos, neg, cfg)?;
    let weighted = tape.mul_scalar(reg, cfg.w_r)?;
    tape.add(class_loss, weighted)
}

/// Uniform ordered-pair negatives avoiding `edges` (and self-pairs),
/// resampled every epoch from the run's seeded stream.
pub fn sample_training_negatives(
    rng: &mut ChaCha20Rng,
    n: usize,
    edges: &HashSet<(u32, u32)>,
    count: usize,
) -> Result<Vec<(u32, u32)>> {
    if n < 2 {
        return Err(Error::contract(
            "cannot sample negatives on a graph with fewer than 2 nodes".to_string(),
        ));
    }
    let mut out = Vec::with_capacity(count);
    let mut attempts = 0usize;
    let max_attempts = 1000 + 200 * count;
    while out.len() < count {
        attempts += 1;
        if attempts > max_attempts {
            return Err(Error::config(
                "training negative sampling stalled; graph too dense".to_string(),
            ));
        }
        let i = rng.random_range(0..n) as u32;
        let j = rng.random_range(0..n) as u32;
        if i == j || edges.contains(&(i, j)) {
            continue;
        }
        out.push((i, j));
    }
    Ok(out)
}
