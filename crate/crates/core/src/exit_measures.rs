//! Exit distributions of planar Brownian motion from the quadrant
//! `(0, ∞)²` and from the square `(0, K)²`.
//!
//! The quadrant harmonic measure is sampled exactly: `z ↦ z²` maps the
//! quadrant conformally onto the upper half-plane, whose harmonic measure
//! from `a + ib` is Cauchy with location `a` and scale `b`. Mapping the
//! Cauchy draw back with the principal square root lands on the positive
//! real axis (type-1 survives) or on the positive imaginary axis (type-2).
//!
//! The square uses walk-on-spheres. Inside the shell of width
//! [`SHELL_FRACTION`]`·K` the walk is finished with a one-dimensional
//! gambler's-ruin move in the normal direction, which keeps both
//! coordinates exact martingales (a plain snap to the nearest edge would
//! bias the smaller coordinate downwards).

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Walk-on-spheres stops once within `SHELL_FRACTION · K` of the boundary.
pub const SHELL_FRACTION: f64 = 1e-6;

/// Default truncation tolerance for the exit-time series.
pub const V_TOLERANCE: f64 = 1e-8;

/// A point of `[0, ∞)²`: `u` is the type-1 mass and `v` the type-2 mass.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadrantPoint {
    pub u: f64,
    pub v: f64,
}

impl QuadrantPoint {
    pub fn new(u: f64, v: f64) -> Result<Self> {
        if !(u.is_finite() && v.is_finite()) || u < 0.0 || v < 0.0 {
            return Err(Error::arg(format!(
                "({u}, {v}) is not a finite point of [0, ∞)²"
            )));
        }
        Ok(QuadrantPoint { u, v })
    }

    pub fn is_interior(&self) -> bool {
        self.u > 0.0 && self.v > 0.0
    }

    /// Whether the point lies on `E`, the union of the two axes.
    pub fn is_on_axes(&self) -> bool {
        self.u == 0.0 || self.v == 0.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    /// `(m, 0)`: only type 1 present.
    Horizontal,
    /// `(0, m)`: only type 2 present.
    Vertical,
}

/// A point of `E = [0, ∞)² \ (0, ∞)²`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EPoint {
    pub axis: Axis,
    pub magnitude: f64,
}

impl EPoint {
    pub fn horizontal(magnitude: f64) -> Self {
        EPoint {
            axis: Axis::Horizontal,
            magnitude,
        }
    }

    pub fn vertical(magnitude: f64) -> Self {
        EPoint {
            axis: Axis::Vertical,
            magnitude,
        }
    }

    /// `None` if both coordinates are positive.
    pub fn from_coords(u: f64, v: f64) -> Option<Self> {
        if v == 0.0 {
            Some(EPoint::horizontal(u))
        } else if u == 0.0 {
            Some(EPoint::vertical(v))
        } else {
            None
        }
    }

    pub fn coords(&self) -> (f64, f64) {
        match self.axis {
            Axis::Horizontal => (self.magnitude, 0.0),
            Axis::Vertical => (0.0, self.magnitude),
        }
    }

    /// Position on the real line: positive on the horizontal axis, negative
    /// on the vertical one.
    pub fn signed(&self) -> f64 {
        match self.axis {
            Axis::Horizontal => self.magnitude,
            Axis::Vertical => -self.magnitude,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Edge {
    /// `u = 0`.
    Left,
    /// `v = 0`.
    Bottom,
    /// `u = K`.
    Right,
    /// `v = K`.
    Top,
}

/// A point on `∂[0, K]²`, given by an edge and the free coordinate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SquareBoundaryPoint {
    pub edge: Edge,
    pub position: f64,
    pub side: f64,
}

impl SquareBoundaryPoint {
    pub fn coords(&self) -> (f64, f64) {
        match self.edge {
            Edge::Left => (0.0, self.position),
            Edge::Bottom => (self.position, 0.0),
            Edge::Right => (self.side, self.position),
            Edge::Top => (self.position, self.side),
        }
    }

    /// On the left or bottom edge, i.e. in `E ∩ [0, K)²` (up to the corners).
    pub fn on_axes(&self) -> bool {
        matches!(self.edge, Edge::Left | Edge::Bottom)
    }
}

/// Density of the quadrant harmonic measure `Q_x` at `y ∈ E`, with respect
/// to arc length on the axis carrying `y`.
pub fn quadrant_density(x: QuadrantPoint, y: EPoint) -> Result<f64> {
    if !x.is_interior() {
        return Err(Error::arg(format!(
            "start ({}, {}) is not interior; the exit law is a point mass there",
            x.u, x.v
        )));
    }
    let (u, v) = (x.u, x.v);
    let (along, this, other) = match y.axis {
        Axis::Horizontal => (y.magnitude, u, v),
        Axis::Vertical => (y.magnitude, v, u),
    };
    let shift = along * along + other * other - this * this;
    Ok(4.0 / PI * u * v * along / (4.0 * u * u * v * v + shift * shift))
}

/// Exact draw from `Q_(u,v)`, returned as coordinates in `E`.
///
/// Points already on the axes are returned unchanged.
#[inline]
pub fn quadrant_exit_coords<R: Rng + ?Sized>(rng: &mut R, u: f64, v: f64) -> (f64, f64) {
    if u == 0.0 || v == 0.0 {
        return (u, v);
    }
    let location = (u - v) * (u + v);
    let scale = 2.0 * u * v;
    let w = location + scale * (PI * (rng.random::<f64>() - 0.5)).tan();
    if w >= 0.0 {
        (w.sqrt(), 0.0)
    } else {
        (0.0, (-w).sqrt())
    }
}

/// Exact draw from the exit law of the quadrant started at `x`.
pub fn sample_quadrant_exit<R: Rng + ?Sized>(rng: &mut R, x: QuadrantPoint) -> Result<EPoint> {
    let (u, v) = quadrant_exit_coords(rng, x.u, x.v);
    Ok(EPoint::from_coords(u, v).expect("quadrant exit lies on the axes"))
}

fn nearest_edge(x: f64, y: f64, side: f64) -> (Edge, f64) {
    let mut best = (Edge::Left, x);
    for cand in [
        (Edge::Bottom, y),
        (Edge::Right, side - x),
        (Edge::Top, side - y),
    ] {
        if cand.1 < best.1 {
            best = cand;
        }
    }
    best
}

fn boundary_point(edge: Edge, x: f64, y: f64, side: f64) -> SquareBoundaryPoint {
    let position = match edge {
        Edge::Left | Edge::Right => y,
        Edge::Bottom | Edge::Top => x,
    };
    SquareBoundaryPoint {
        edge,
        position: position.clamp(0.0, side),
        side,
    }
}

/// Walk-on-spheres draw from the exit law of `(0, K)²` started at `(u, v)`.
///
/// The caller guarantees `(u, v) ∈ [0, K]²`.
pub fn square_exit_point<R: Rng + ?Sized>(
    rng: &mut R,
    u: f64,
    v: f64,
    side: f64,
) -> SquareBoundaryPoint {
    let shell = SHELL_FRACTION * side;
    let depth = 2.0 * shell;
    let (mut x, mut y) = (u, v);
    loop {
        let (edge, dist) = nearest_edge(x, y, side);
        if dist <= 0.0 {
            return boundary_point(edge, x, y, side);
        }
        if dist < shell {
            // gambler's ruin for the normal coordinate between the edge and `depth`
            if rng.random::<f64>() * depth >= dist {
                return boundary_point(edge, x, y, side);
            }
            match edge {
                Edge::Left => x = depth,
                Edge::Bottom => y = depth,
                Edge::Right => x = side - depth,
                Edge::Top => y = side - depth,
            }
            continue;
        }
        let (s, c) = (2.0 * PI * rng.random::<f64>()).sin_cos();
        x = (x + dist * c).clamp(0.0, side);
        y = (y + dist * s).clamp(0.0, side);
    }
}

/// Draw from the exit law of the square `[0, K]²` started at `x`.
pub fn sample_square_exit<R: Rng + ?Sized>(
    rng: &mut R,
    x: QuadrantPoint,
    side: f64,
) -> Result<SquareBoundaryPoint> {
    if !(side.is_finite() && side > 0.0) {
        return Err(Error::arg(format!("box size must be positive, got {side}")));
    }
    if x.u > side || x.v > side {
        return Err(Error::arg(format!(
            "({}, {}) lies outside [0, {side}]²",
            x.u, x.v
        )));
    }
    Ok(square_exit_point(rng, x.u, x.v, side))
}

/// Coefficient of `sin((2m+1)πu) sin((2n+1)πv)` in the series for `V`.
pub fn v_coefficient(m: usize, n: usize) -> f64 {
    let p = (2 * m + 1) as f64;
    let q = (2 * n + 1) as f64;
    32.0 / PI.powi(4) / (p * q) / (p * p + q * q)
}

/// Upper bound for `Σ a_{m,n}` over all `(m, n)` with `max(m, n) > cutoff`.
pub fn v_series_remainder(cutoff: usize) -> f64 {
    // For fixed odd p: Σ_q 1/(pq(p²+q²)) ≤ (2 + ½ ln p)/p³ (split q ≤ p, q > p);
    // sum over odd p ≥ p0 by first term plus integral.
    let p0 = (2 * cutoff + 3) as f64;
    let g = 2.0 + 0.5 * p0.ln();
    let tail = g / p0.powi(3) + 0.5 * (g / (2.0 * p0 * p0) + 1.0 / (8.0 * p0 * p0));
    2.0 * 32.0 / PI.powi(4) * tail
}

/// Smallest cutoff whose remainder bound is at most `tol`.
pub fn v_series_cutoff(tol: f64) -> usize {
    let mut hi = 1usize;
    while v_series_remainder(hi) > tol {
        hi *= 2;
    }
    let mut lo = 0usize;
    while lo < hi {
        let mid = (lo + hi) / 2;
        if v_series_remainder(mid) <= tol {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    lo
}

/// Mean exit time `V(u, v) = E_(u,v)[τ]` of the unit square, summed from
/// the double sine series to within `tol`.
pub fn exit_time_mean(u: f64, v: f64, tol: f64) -> Result<f64> {
    if !(tol.is_finite() && tol > 0.0) {
        return Err(Error::arg(format!("tolerance must be positive, got {tol}")));
    }
    if !(0.0..=1.0).contains(&u) || !(0.0..=1.0).contains(&v) {
        return Err(Error::arg(format!("({u}, {v}) lies outside [0, 1]²")));
    }
    if u == 0.0 || v == 0.0 || u == 1.0 || v == 1.0 {
        return Ok(0.0);
    }
    let cutoff = v_series_cutoff(tol);
    let su: Vec<f64> = (0..=cutoff)
        .map(|m| ((2 * m + 1) as f64 * PI * u).sin())
        .collect();
    let sv: Vec<f64> = (0..=cutoff)
        .map(|n| ((2 * n + 1) as f64 * PI * v).sin())
        .collect();
    let mut total = 0.0;
    for (m, &a) in su.iter().enumerate() {
        let p = (2 * m + 1) as f64;
        let mut row = 0.0;
        for (n, &b) in sv.iter().enumerate() {
            let q = (2 * n + 1) as f64;
            row += b / (q * (p * p + q * q));
        }
        total += a / p * row;
    }
    Ok(32.0 / PI.powi(4) * total)
}

/// Exit-time mean of the square `[0, K]²`: `K² V(u/K, v/K)`.
pub fn exit_time_mean_scaled(u: f64, v: f64, side: f64, tol: f64) -> Result<f64> {
    Ok(side * side * exit_time_mean(u / side, v / side, tol / (side * side))?)
}

/// `h_K(u) = 8 K u (1 + log(K/u))`, with `h_K(0) = 0`.
#[inline]
pub fn h_k(u: f64, side: f64) -> f64 {
    if u <= 0.0 {
        0.0
    } else {
        8.0 * side * u * (1.0 + (side / u).ln())
    }
}

/// Lower and upper bounds for the per-coordinate exit variance of the square.
///
/// The lower bound `uv/2` only holds on the half box `u, v ≤ K/2`; outside
/// it we report 0. The upper bound degenerates to `0 · ∞` on the axes and is
/// defined as 0 there, matching the immediate exit.
pub fn covariance_envelope(u: f64, v: f64, side: f64) -> (f64, f64) {
    let lower = if u <= side / 2.0 && v <= side / 2.0 {
        0.5 * u * v
    } else {
        0.0
    };
    let upper = if u == 0.0 || v == 0.0 {
        0.0
    } else {
        8.0 * u * v * (1.0 + side.ln() + (1.0 / u).ln().min((1.0 / v).ln()))
    };
    (lower, upper)
}
