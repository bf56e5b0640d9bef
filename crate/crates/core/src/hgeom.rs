//! The Poincaré-ball kernel mirrored onto tape tensors, row-wise over
//! `(n, d)` matrices, so gradients flow through every hyperbolic step.
//!
//! Formulas and guards match [`crate::geometry`] exactly; the agreement is
//! pinned by tests comparing both paths on random inputs.

use crate::error::Result;
use crate::geometry::{BALL_EPS, MIN_NORM, TANH_BOUND};
use crate::tensor::{Tape, TensorId};

/// A curvature staged on the tape: the scalar `c` and its square root.
#[derive(Debug, Clone, Copy)]
pub struct Curv {
    pub c: TensorId,
    pub sqrt_c: TensorId,
}

/// Stages an already-positive curvature value `c` (shape `(1,1)`).
pub fn curv(tape: &mut Tape, c: TensorId) -> Result<Curv> {
    let sqrt_c = tape.sqrt(c)?;
    Ok(Curv { c, sqrt_c })
}

/// Stages a constant curvature.
pub fn curv_const(tape: &mut Tape, c: f64) -> Result<Curv> {
    let id = tape.scalar(c);
    curv(tape, id)
}

/// Row norms floored at `MIN_NORM`, the denominator guard.
fn guarded_norm(tape: &mut Tape, x: TensorId) -> Result<TensorId> {
    let n = tape.l2_norm_rows(x)?;
    tape.clamp_min(n, MIN_NORM)
}

/// Rescales rows onto the `BALL_EPS` shell when they reach it; identity
/// (with zero gradient through the scale) otherwise.
pub fn project(tape: &mut Tape, x: TensorId, c: &Curv) -> Result<TensorId> {
    let norm = guarded_norm(tape, x)?;
    let shell = tape.scalar(1.0 - BALL_EPS);
    let max_norm = tape.div(shell, c.sqrt_c)?;
    let ratio = tape.div(max_norm, norm)?;
    let scale = tape.clamp(ratio, 0.0, 1.0)?;
    tape.mul(x, scale)
}

/// Row-wise `exp_0^c`: `tanh(sqrt(c)·|v|) · v / (sqrt(c)·|v|)`, projected.
pub fn exp_map_origin(tape: &mut Tape, v: TensorId, c: &Curv) -> Result<TensorId> {
    let vn = guarded_norm(tape, v)?;
    let scn = tape.mul(c.sqrt_c, vn)?;
    let arg = tape.clamp(scn, -TANH_BOUND, TANH_BOUND)?;
    let th = tape.tanh(arg)?;
    let factor = tape.div(th, scn)?;
    let scaled = tape.mul(v, factor)?;
    project(tape, scaled, c)
}

/// Row-wise `log_0^c`: `atanh(sqrt(c)·|x|) · x / (sqrt(c)·|x|)`.
pub fn log_map_origin(tape: &mut Tape, x: TensorId, c: &Curv) -> Result<TensorId> {
    let xn = guarded_norm(tape, x)?;
    let scn = tape.mul(c.sqrt_c, xn)?;
    let at = tape.atanh(scn)?;
    let factor = tape.div(at, scn)?;
    tape.mul(x, factor)
}

/// Row-wise Möbius addition, projected. Shapes broadcast like elementwise
/// ops, so a `(1, d)` bias adds against `(n, d)` rows.
pub fn mobius_add(tape: &mut Tape, x: TensorId, y: TensorId, c: &Curv) -> Result<TensorId> {
    let xx = tape.mul(x, x)?;
    let x2 = tape.row_sum(xx)?;
    let yy = tape.mul(y, y)?;
    let y2 = tape.row_sum(yy)?;
    let xy_full = tape.mul(x, y)?;
    let xy = tape.row_sum(xy_full)?;

    let cxy = tape.mul(c.c, xy)?;
    let cxy2 = tape.mul_scalar(cxy, 2.0)?;
    let cy2 = tape.mul(c.c, y2)?;
    let cx2 = tape.mul(c.c, x2)?;

    // 1 + 2c<x,y> + c|y|²
    let ax_t = tape.add(cxy2, cy2)?;
    let ax = tape.add_scalar(ax_t, 1.0)?;
    // 1 - c|x|²
    let negcx2 = tape.neg(cx2)?;
    let ay = tape.add_scalar(negcx2, 1.0)?;
    // 1 + 2c<x,y> + c²|x|²|y|²
    let cc = tape.mul(c.c, c.c)?;
    let x2y2 = tape.mul(x2, y2)?;
    let ccx2y2 = tape.mul(cc, x2y2)?;
    let den_t = tape.add(cxy2, ccx2y2)?;
    let den_raw = tape.add_scalar(den_t, 1.0)?;
    let den = tape.clamp_min(den_raw, MIN_NORM)?;

    let xs = tape.mul(x, ax)?;
    let ys = tape.mul(y, ay)?;
    let num = tape.add(xs, ys)?;
    let out = tape.div(num, den)?;
    project(tape, out, c)
}

/// Row-wise Möbius matrix product `x ↦ (xW) ⊗`-rescaled, projected.
/// `x` is `(n, in)`, `w` is `(in, out)`.
pub fn mobius_matvec(tape: &mut Tape, x: TensorId, w: TensorId, c: &Curv) -> Result<TensorId> {
    let mx = tape.matmul(x, w)?;
    let xn = guarded_norm(tape, x)?;
    let mxn = guarded_norm(tape, mx)?;
    let scxn = tape.mul(c.sqrt_c, xn)?;
    let at = tape.atanh(scxn)?;
    let ratio = tape.div(mxn, xn)?;
    let arg_raw = tape.mul(ratio, at)?;
    let arg = tape.clamp(arg_raw, -TANH_BOUND, TANH_BOUND)?;
    let th = tape.tanh(arg)?;
    let scmxn = tape.mul(c.sqrt_c, mxn)?;
    let factor = tape.div(th, scmxn)?;
    let out = tape.mul(mx, factor)?;
    project(tape, out, c)
}

/// Row-wise Möbius scalar multiplication by a fixed real `r`.
pub fn mobius_scalar_mul(tape: &mut Tape, r: f64, x: TensorId, c: &Curv) -> Result<TensorId> {
    let xn = guarded_norm(tape, x)?;
    let scn = tape.mul(c.sqrt_c, xn)?;
    let at = tape.atanh(scn)?;
    let rat = tape.mul_scalar(at, r)?;
    let arg = tape.clamp(rat, -TANH_BOUND, TANH_BOUND)?;
    let th = tape.tanh(arg)?;
    let factor = tape.div(th, scn)?;
    let out = tape.mul(x, factor)?;
    project(tape, out, c)
}

/// Row-wise induced distance `(2/sqrt(c)) · atanh(sqrt(c)·|(-x) ⊕ y|)`,
/// shape `(n, 1)`.
pub fn distance(tape: &mut Tape, x: TensorId, y: TensorId, c: &Curv) -> Result<TensorId> {
    let nx = tape.neg(x)?;
    let diff = mobius_add(tape, nx, y, c)?;
    let dn = tape.l2_norm_rows(diff)?;
    let scn = tape.mul(c.sqrt_c, dn)?;
    let at = tape.atanh(scn)?;
    let two = tape.mul_scalar(at, 2.0)?;
    tape.div(two, c.sqrt_c)
}
