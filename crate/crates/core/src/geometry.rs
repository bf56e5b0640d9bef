//! Poincaré-ball kernel: Möbius gyrovector operations, origin exp/log maps,
//! the induced distance, and the ball projection guard.
//!
//! Every function works on raw `&[f64]` coordinate slices plus an explicit
//! [`Curvature`], so the same formulas can be mirrored one-to-one by the
//! tensor engine in [`crate::hgeom`]. The [`PoincarePoint`] and
//! [`TangentVector`] wrappers carry the invariants at module boundaries.
//!
//! Numerical guards (values chosen here, not forced by the math):
//! - `BALL_EPS = 1e-5`: ball-valued results are clamped to norm
//!   `<= (1 - BALL_EPS) / sqrt(c)`, since `atanh` and the conformal factor
//!   blow up at the boundary.
//! - `atanh` arguments are clamped to `±(1 - 1e-15)`, `tanh` arguments to
//!   `±15`, and norms in denominators are floored at `1e-15`.
//! - The origin extensions `r ⊗ 0 = 0` and `M ⊗ x = 0` when `Mx = 0` fill in
//!   the points the closed forms exclude.

use crate::error::{Error, Result};

/// Relative width of the shell kept between points and the ball boundary.
pub const BALL_EPS: f64 = 1e-5;
/// Floor applied to norms that appear in denominators.
pub const MIN_NORM: f64 = 1e-15;
/// `atanh` arguments are clamped to `±ATANH_BOUND`.
pub const ATANH_BOUND: f64 = 1.0 - 1e-15;
/// `tanh` arguments are clamped to `±TANH_BOUND`.
pub const TANH_BOUND: f64 = 15.0;

/// `tanh` with the argument clamp used everywhere in this crate.
#[inline]
pub fn clamped_tanh(x: f64) -> f64 {
    x.clamp(-TANH_BOUND, TANH_BOUND).tanh()
}

/// `atanh` with the argument clamp used everywhere in this crate.
#[inline]
pub fn clamped_atanh(x: f64) -> f64 {
    x.clamp(-ATANH_BOUND, ATANH_BOUND).atanh()
}

/// Ball parameter `c > 0`; the manifold curvature is `-c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Curvature(f64);

impl Curvature {
    pub fn new(c: f64) -> Result<Self> {
        if !(c.is_finite() && c > 0.0) {
            return Err(Error::contract(format!(
                "curvature parameter must be a positive finite real, got {c}"
            )));
        }
        Ok(Curvature(c))
    }

    /// Trainable parameterization: `c = softplus(raw)` keeps `c > 0` for any
    /// unconstrained raw scalar.
    pub fn from_raw(raw: f64) -> Self {
        Curvature(softplus(raw))
    }

    #[inline]
    pub fn get(self) -> f64 {
        self.0
    }

    #[inline]
    pub fn sqrt(self) -> f64 {
        self.0.sqrt()
    }

    /// Largest norm a point under this curvature may have after projection.
    #[inline]
    pub fn max_norm(self) -> f64 {
        (1.0 - BALL_EPS) / self.sqrt()
    }
}

/// `softplus(x) = ln(1 + e^x)` with the usual overflow guard.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

#[inline]
fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

#[inline]
fn norm(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

fn check_dims(op: &str, a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::contract(format!(
            "{op}: dimension mismatch ({a} vs {b})"
        )));
    }
    Ok(())
}

/// A point strictly inside the radius-`1/sqrt(c)` ball.
#[derive(Debug, Clone, PartialEq)]
pub struct PoincarePoint {
    coords: Vec<f64>,
    c: Curvature,
}

impl PoincarePoint {
    /// Wraps raw coordinates, projecting onto the `BALL_EPS` shell if needed.
    pub fn new(coords: Vec<f64>, c: Curvature) -> Result<Self> {
        let coords = project_to_ball(&coords, c)?;
        Ok(PoincarePoint { coords, c })
    }

    pub fn origin(dim: usize, c: Curvature) -> Self {
        PoincarePoint {
            coords: vec![0.0; dim],
            c,
        }
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn curvature(&self) -> Curvature {
        self.c
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn mobius_add(&self, other: &PoincarePoint) -> Result<PoincarePoint> {
        let coords = mobius_add(&self.coords, &other.coords, self.c)?;
        Ok(PoincarePoint { coords, c: self.c })
    }

    pub fn distance_to(&self, other: &PoincarePoint) -> Result<f64> {
        distance(&self.coords, &other.coords, self.c)
    }

    pub fn log_origin(&self) -> TangentVector {
        TangentVector {
            coords: log_map_origin(&self.coords, self.c),
        }
    }
}

/// A vector in the tangent space at the origin (the only base point used).
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector {
    coords: Vec<f64>,
}

impl TangentVector {
    pub fn new(coords: Vec<f64>) -> Self {
        TangentVector { coords }
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn exp_origin(&self, c: Curvature) -> PoincarePoint {
        PoincarePoint {
            coords: exp_map_origin(&self.coords, c),
            c,
        }
    }
}

/// Rescales `x` onto the `BALL_EPS` shell when its norm reaches or exceeds
/// `(1 - BALL_EPS)/sqrt(c)`; identity otherwise.
pub fn project_to_ball(x: &[f64], c: Curvature) -> Result<Vec<f64>> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::contract(
            "project_to_ball: non-finite input coordinates".to_string(),
        ));
    }
    let n = norm(x);
    let max_norm = c.max_norm();
    if n >= max_norm {
        let scale = max_norm / n.max(MIN_NORM);
        Ok(x.iter().map(|v| v * scale).collect())
    } else {
        Ok(x.to_vec())
    }
}

/// Möbius addition `x ⊕_c y`, projected back into the ball.
pub fn mobius_add(x: &[f64], y: &[f64], c: Curvature) -> Result<Vec<f64>> {
    check_dims("mobius_add", x.len(), y.len())?;
    let cv = c.get();
    let x2 = dot(x, x);
    let y2 = dot(y, y);
    let xy = dot(x, y);
    let ax = 1.0 + 2.0 * cv * xy + cv * y2;
    let ay = 1.0 - cv * x2;
    let den = (1.0 + 2.0 * cv * xy + cv * cv * x2 * y2).max(MIN_NORM);
    let out: Vec<f64> = x
        .iter()
        .zip(y)
        .map(|(xi, yi)| (ax * xi + ay * yi) / den)
        .collect();
    project_to_ball(&out, c)
}

/// Möbius scalar multiplication `r ⊗_c x`, extended with `r ⊗ 0 = 0`.
pub fn mobius_scalar_mul(r: f64, x: &[f64], c: Curvature) -> Vec<f64> {
    let xn = norm(x);
    if xn < MIN_NORM {
        return vec![0.0; x.len()];
    }
    let sc = c.sqrt();
    let factor = clamped_tanh(r * clamped_atanh(sc * xn)) / (sc * xn);
    let out: Vec<f64> = x.iter().map(|v| v * factor).collect();
    // factor keeps the result strictly inside, but guard anyway
    project_to_ball(&out, c).expect("finite by construction")
}

/// Möbius matrix multiplication `M ⊗_c x` where `m` is `out_dim` rows of
/// `x.len()` columns in row-major order. `Mx = 0` maps to the origin.
pub fn mobius_matvec(m: &[f64], out_dim: usize, x: &[f64], c: Curvature) -> Result<Vec<f64>> {
    let in_dim = x.len();
    if m.len() != out_dim * in_dim {
        return Err(Error::contract(format!(
            "mobius_matvec: matrix of {} entries is not {out_dim}x{in_dim}",
            m.len()
        )));
    }
    let mx: Vec<f64> = (0..out_dim)
        .map(|i| dot(&m[i * in_dim..(i + 1) * in_dim], x))
        .collect();
    let xn = norm(x).max(MIN_NORM);
    let mxn = norm(&mx);
    if mxn < MIN_NORM {
        return Ok(vec![0.0; out_dim]);
    }
    let sc = c.sqrt();
    let factor = clamped_tanh(mxn / xn * clamped_atanh(sc * xn)) / (sc * mxn);
    let out: Vec<f64> = mx.iter().map(|v| v * factor).collect();
    project_to_ball(&out, c)
}

/// Exponential map at the origin: `tanh(sqrt(c)·|v|) · v / (sqrt(c)·|v|)`.
pub fn exp_map_origin(v: &[f64], c: Curvature) -> Vec<f64> {
    let vn = norm(v);
    if vn < MIN_NORM {
        return v.to_vec();
    }
    let sc = c.sqrt();
    let factor = clamped_tanh(sc * vn) / (sc * vn);
    let out: Vec<f64> = v.iter().map(|x| x * factor).collect();
    project_to_ball(&out, c).expect("finite by construction")
}

/// Logarithmic map at the origin: `atanh(sqrt(c)·|x|) · x / (sqrt(c)·|x|)`.
pub fn log_map_origin(x: &[f64], c: Curvature) -> Vec<f64> {
    let xn = norm(x);
    if xn < MIN_NORM {
        return x.to_vec();
    }
    let sc = c.sqrt();
    let factor = clamped_atanh(sc * xn) / (sc * xn);
    x.iter().map(|v| v * factor).collect()
}

/// Induced distance `(2/sqrt(c)) · atanh(sqrt(c)·|(-x) ⊕_c y|)`.
pub fn distance(x: &[f64], y: &[f64], c: Curvature) -> Result<f64> {
    check_dims("distance", x.len(), y.len())?;
    let neg_x: Vec<f64> = x.iter().map(|v| -v).collect();
    let diff = mobius_add(&neg_x, y, c)?;
    let sc = c.sqrt();
    Ok(2.0 / sc * clamped_atanh(sc * norm(&diff)))
}
