//! Model Φ-manifold with trivial fibration, its radial collar grid and the
//! divergence-form Φ-Laplacian acting on radial functions.
//!
//! Near the boundary the model metric is `dx²/x⁴ + g_Y/x² + g_Z` with `g_Y`,
//! `g_Z` of constant scalar curvature. For functions of `x` alone the
//! Laplace-Beltrami operator reduces to
//!
//! ```text
//! Δu = x^{2+b} ∂x( x^{2-b} ∂x u ) = x⁴ u'' + (2-b) x³ u'
//! ```
//!
//! which is discretized here in conservative form so that the weighted sum
//! `Σ (Δu)_i w_i` telescopes to zero for every field.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("dimension m = {0} must be at least 3")]
    DimensionTooSmall(usize),
    #[error("base dimension b = {b} leaves no room for a fiber in dimension m = {m}")]
    BaseTooLarge { m: usize, b: usize },
    #[error("fiber scalar curvature must be negative, got scal(g_Z) = {0}")]
    FiberCurvatureNotNegative(f64),
    #[error("scal(g_Φ) = {value} at x = {x} is not negative; need x_max²(scal(g_Y) + b(b-1)) + scal(g_Z) < 0")]
    CurvatureNotNegative { x: f64, value: f64 },
    #[error("x_max must be positive and finite, got {0}")]
    InvalidExtent(f64),
    #[error("x_min must be positive (the coordinate degenerates at the boundary face), got {0}")]
    DegenerateInnerEdge(f64),
    #[error("need x_min < x_max, got [{x_min}, {x_max}]")]
    EmptyInterval { x_min: f64, x_max: f64 },
    #[error("grid x_max = {grid} exceeds the manifold collar x_max = {manifold}")]
    OutsideCollar { grid: f64, manifold: f64 },
    #[error("grid needs at least {min} intervals, got {n}")]
    TooFewIntervals { n: usize, min: usize },
}

/// Model Φ-manifold `(0, x_max] × Y^b × Z^f` with the product Φ-metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelPhiManifold {
    pub m: usize,
    pub b: usize,
    pub fdim: usize,
    pub scal_y: f64,
    pub scal_z: f64,
    pub x_max: f64,
    /// `(m - 2) / 4`; the conformal factor enters as `g = u^{1/η} g_Φ`.
    pub eta: f64,
    /// `sup |scal(g_Φ)|` over `[0, x_max]`.
    pub a1: f64,
    /// `inf |scal(g_Φ)|` over `[0, x_max]`.
    pub a2: f64,
}

impl ModelPhiManifold {
    pub fn new(m: usize, b: usize, scal_y: f64, scal_z: f64, x_max: f64) -> Result<Self, GeometryError> {
        if m < 3 {
            return Err(GeometryError::DimensionTooSmall(m));
        }
        if b + 1 > m {
            return Err(GeometryError::BaseTooLarge { m, b });
        }
        if !(x_max > 0.0 && x_max.is_finite()) {
            return Err(GeometryError::InvalidExtent(x_max));
        }
        if !(scal_z < 0.0) {
            return Err(GeometryError::FiberCurvatureNotNegative(scal_z));
        }
        let coeff = scal_y + (b * b.saturating_sub(1)) as f64;
        let at = |x: f64| x * x * coeff + scal_z;
        // scal is monotone in x², so both extremes sit at the ends of [0, x_max].
        let (s0, s1) = (at(0.0), at(x_max));
        if !(s1 < 0.0) {
            return Err(GeometryError::CurvatureNotNegative { x: x_max, value: s1 });
        }
        let a1 = s0.abs().max(s1.abs());
        let a2 = s0.abs().min(s1.abs());
        Ok(Self {
            m,
            b,
            fdim: m - 1 - b,
            scal_y,
            scal_z,
            x_max,
            eta: (m as f64 - 2.0) / 4.0,
            a1,
            a2,
        })
    }

    /// `scal(g_Φ)(x) = x²(scal(g_Y) + b(b-1)) + scal(g_Z)`.
    pub fn scal_phi(&self, x: f64) -> f64 {
        x * x * self.base_coefficient() + self.scal_z
    }

    fn base_coefficient(&self) -> f64 {
        self.scal_y + (self.b * self.b.saturating_sub(1)) as f64
    }

    /// True when `scal(g_Φ)` does not depend on `x`.
    pub fn is_homogeneous(&self) -> bool {
        self.base_coefficient() == 0.0
    }

    /// `inf_M scal(g_Φ) = -a1`.
    pub fn scal_phi_inf(&self) -> f64 {
        -self.a1
    }

    /// `sup_M scal(g_Φ) = -a2`.
    pub fn scal_phi_sup(&self) -> f64 {
        -self.a2
    }

    pub fn dim(&self) -> usize {
        self.m
    }
}

/// Uniform grid on the collar `[x_min, x_max]` with Φ-volume weights.
///
/// Node `i` owns the control volume `[x_{i-1/2}, x_{i+1/2}]` clipped to the
/// domain, and its weight is `x_i^{-(2+b)}` times the control-volume length.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialGrid {
    nodes: Vec<f64>,
    h: f64,
    b: usize,
    vol_weights: Vec<f64>,
    /// `x_{i+1/2}^{2-b} / h` for the `n` interior faces.
    face_coeffs: Vec<f64>,
    /// `x_i^4`, the inverse metric coefficient `g^{xx}`.
    gxx: Vec<f64>,
}

pub const MIN_INTERVALS: usize = 16;

impl RadialGrid {
    /// Grid with `n` uniform intervals (`n + 1` nodes). Any `n ≥ 2` is
    /// accepted; [`build_grid`] additionally enforces the working resolution.
    pub fn uniform(b: usize, n: usize, x_min: f64, x_max: f64) -> Result<Self, GeometryError> {
        if !(x_min > 0.0) {
            return Err(GeometryError::DegenerateInnerEdge(x_min));
        }
        if !(x_max > x_min) || !x_max.is_finite() {
            return Err(GeometryError::EmptyInterval { x_min, x_max });
        }
        if n < 2 {
            return Err(GeometryError::TooFewIntervals { n, min: 2 });
        }
        let h = (x_max - x_min) / n as f64;
        let mut nodes: Vec<f64> = (0..=n).map(|i| x_min + i as f64 * h).collect();
        nodes[n] = x_max;
        let p = -(2.0 + b as f64);
        let vol_weights = nodes
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let len = if i == 0 || i == n { 0.5 * h } else { h };
                x.powf(p) * len
            })
            .collect();
        let q = 2.0 - b as f64;
        let face_coeffs = nodes
            .windows(2)
            .map(|w| (0.5 * (w[0] + w[1])).powf(q) / h)
            .collect();
        let gxx = nodes.iter().map(|x| x.powi(4)).collect();
        Ok(Self {
            nodes,
            h,
            b,
            vol_weights,
            face_coeffs,
            gxx,
        })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    pub fn base_dim(&self) -> usize {
        self.b
    }

    pub fn x_min(&self) -> f64 {
        self.nodes[0]
    }

    pub fn x_max(&self) -> f64 {
        self.nodes[self.nodes.len() - 1]
    }

    pub fn vol_weights(&self) -> &[f64] {
        &self.vol_weights
    }

    pub fn total_volume(&self) -> f64 {
        self.vol_weights.iter().sum()
    }

    /// `x_{i+1/2}^{2-b} / h` at the interior faces.
    pub fn face_coeffs(&self) -> &[f64] {
        &self.face_coeffs
    }

    /// Inverse metric coefficient `g_Φ^{xx} = x⁴` at each node.
    pub fn gxx(&self) -> &[f64] {
        &self.gxx
    }

    /// Φ-Laplacian with zero flux at both ends.
    pub fn laplacian(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        self.laplacian_into(u, &mut out);
        out
    }

    pub fn laplacian_into(&self, u: &[f64], out: &mut [f64]) {
        self.laplacian_from_differences(|i| u[i + 1] - u[i], out);
    }

    /// Divergence-form Laplacian given the forward differences
    /// `u_{i+1} - u_i` for every face `i`.
    pub fn laplacian_from_differences(&self, diff: impl Fn(usize) -> f64, out: &mut [f64]) {
        let n = self.len();
        assert_eq!(out.len(), n, "field length does not match the grid");
        let mut left = 0.0;
        for i in 0..n {
            let right = if i + 1 < n { self.face_coeffs[i] * diff(i) } else { 0.0 };
            out[i] = (right - left) / self.vol_weights[i];
            left = right;
        }
    }

    /// First derivative: central differences inside, one-sided at the ends.
    pub fn gradient(&self, u: &[f64]) -> Vec<f64> {
        let n = self.len();
        assert_eq!(u.len(), n, "field length does not match the grid");
        let h = self.h;
        (0..n)
            .map(|i| {
                if i == 0 {
                    (u[1] - u[0]) / h
                } else if i + 1 == n {
                    (u[n - 1] - u[n - 2]) / h
                } else {
                    (u[i + 1] - u[i - 1]) / (2.0 * h)
                }
            })
            .collect()
    }

    /// Volume-weighted sum `Σ f_i w_i`.
    pub fn integrate(&self, f: &[f64]) -> f64 {
        f.iter().zip(&self.vol_weights).map(|(a, w)| a * w).sum()
    }
}

/// Grid over `[x_min, x_max]` for the given manifold, with at least
/// [`MIN_INTERVALS`] intervals.
pub fn build_grid(
    manifold: &ModelPhiManifold,
    n: usize,
    x_min: f64,
    x_max: f64,
) -> Result<RadialGrid, GeometryError> {
    if n < MIN_INTERVALS {
        return Err(GeometryError::TooFewIntervals { n, min: MIN_INTERVALS });
    }
    if x_max > manifold.x_max * (1.0 + 1e-12) {
        return Err(GeometryError::OutsideCollar {
            grid: x_max,
            manifold: manifold.x_max,
        });
    }
    RadialGrid::uniform(manifold.b, n, x_min, x_max)
}

/// `scal(g_Φ)` sampled at the grid nodes.
pub fn scal_phi_field(manifold: &ModelPhiManifold, grid: &RadialGrid) -> Vec<f64> {
    grid.nodes().iter().map(|&x| manifold.scal_phi(x)).collect()
}

/// Point in collar coordinates `(x, y, z)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhiPoint {
    pub x: f64,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
}

impl PhiPoint {
    pub fn new(x: f64, y: Vec<f64>, z: Vec<f64>) -> Self {
        assert!(x > 0.0, "boundary defining coordinate must be positive");
        Self { x, y, z }
    }

    pub fn radial(x: f64) -> Self {
        Self::new(x, Vec::new(), Vec::new())
    }
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "coordinate dimensions differ");
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt()
}

/// Local expression of the distance induced by `g_Φ` in the collar:
/// `sqrt( ((x-x')/(x+x')²)² + (|y-y'|/(x+x'))² + |z-z'|² )`.
pub fn phi_distance(p: &PhiPoint, q: &PhiPoint) -> f64 {
    let s = p.x + q.x;
    let dx = (p.x - q.x) / (s * s);
    let dy = euclid(&p.y, &q.y) / s;
    let dz = euclid(&p.z, &q.z);
    (dx * dx + dy * dy + dz * dz).sqrt()
}

/// [`phi_distance`] between two radial points.
pub fn radial_distance(x: f64, x2: f64) -> f64 {
    let s = x + x2;
    (x - x2).abs() / (s * s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inhomogeneous() -> ModelPhiManifold {
        ModelPhiManifold::new(6, 2, -4.0, -3.0, 1.0).unwrap()
    }

    #[test]
    fn manifold_constants() {
        let m = inhomogeneous();
        assert_eq!(m.eta, 1.0);
        assert_eq!(m.fdim, 3);
        assert_eq!(m.a1, 5.0);
        assert_eq!(m.a2, 3.0);

        let m = ModelPhiManifold::new(3, 0, 0.0, -1.0, 1.0).unwrap();
        assert_eq!(m.eta, 0.25);
        assert_eq!((m.a1, m.a2), (1.0, 1.0));
        assert!(m.is_homogeneous());
        for x in [0.0, 0.3, 1.0] {
            assert_eq!(m.scal_phi(x), -1.0);
        }
    }

    #[test]
    fn rejects_bad_manifolds() {
        assert_eq!(
            ModelPhiManifold::new(6, 2, 2.0, -1.0, 1.0),
            Err(GeometryError::CurvatureNotNegative { x: 1.0, value: 3.0 })
        );
        assert!(matches!(
            ModelPhiManifold::new(6, 2, -4.0, 0.0, 1.0),
            Err(GeometryError::FiberCurvatureNotNegative(_))
        ));
        assert!(matches!(
            ModelPhiManifold::new(6, 2, -4.0, 1.0, 1.0),
            Err(GeometryError::FiberCurvatureNotNegative(_))
        ));
        assert!(matches!(ModelPhiManifold::new(2, 0, 0.0, -1.0, 1.0), Err(GeometryError::DimensionTooSmall(2))));
        assert!(matches!(ModelPhiManifold::new(4, 4, 0.0, -1.0, 1.0), Err(GeometryError::BaseTooLarge { .. })));
        assert!(matches!(ModelPhiManifold::new(4, 1, 0.0, -1.0, 0.0), Err(GeometryError::InvalidExtent(_))));
    }

    #[test]
    fn scal_phi_values() {
        let m = inhomogeneous();
        assert_eq!(m.scal_phi(0.0), -3.0);
        assert_eq!(m.scal_phi(1.0), -5.0);
        assert_eq!(m.scal_phi(0.5), -3.5);
    }

    #[test]
    fn extremes_at_endpoints() {
        for (sy, sz, xm) in [(-4.0, -3.0, 1.0), (-1.0, -2.0, 0.7), (0.5, -4.0, 1.2), (-10.0, -0.5, 0.3)] {
            let m = ModelPhiManifold::new(6, 2, sy, sz, xm).unwrap();
            let ends = [m.scal_phi(0.0).abs(), m.scal_phi(xm).abs()];
            assert_eq!(m.a1, ends[0].max(ends[1]));
            assert_eq!(m.a2, ends[0].min(ends[1]));
            assert!(m.a2 > 0.0 && m.a2 <= m.a1);
        }
    }

    #[test]
    fn small_uniform_grid() {
        let g = RadialGrid::uniform(2, 4, 0.2, 1.0).unwrap();
        let expected = [0.2, 0.4, 0.6, 0.8, 1.0];
        for (a, b) in g.nodes().iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!((g.spacing() - 0.2).abs() < 1e-15);
    }

    #[test]
    fn weights_for_flat_base() {
        let g = RadialGrid::uniform(0, 20, 0.1, 1.0).unwrap();
        let h = g.spacing();
        for (i, (&x, &w)) in g.nodes().iter().zip(g.vol_weights()).enumerate() {
            let len = if i == 0 || i == 20 { h / 2.0 } else { h };
            assert!((w - len / (x * x)).abs() <= 1e-14 * w);
        }
    }

    #[test]
    fn rejects_degenerate_grids() {
        let m = inhomogeneous();
        assert!(matches!(build_grid(&m, 32, 0.0, 1.0), Err(GeometryError::DegenerateInnerEdge(_))));
        assert!(matches!(build_grid(&m, 32, -0.1, 1.0), Err(GeometryError::DegenerateInnerEdge(_))));
        assert!(matches!(build_grid(&m, 8, 0.1, 1.0), Err(GeometryError::TooFewIntervals { .. })));
        assert!(matches!(build_grid(&m, 32, 0.5, 0.5), Err(GeometryError::EmptyInterval { .. })));
        assert!(matches!(build_grid(&m, 32, 0.1, 2.0), Err(GeometryError::OutsideCollar { .. })));
    }

    #[test]
    fn laplacian_kills_constants() {
        let g = RadialGrid::uniform(2, 50, 0.05, 1.0).unwrap();
        let lap = g.laplacian(&vec![3.7; g.len()]);
        assert!(lap.iter().all(|&v| v == 0.0));
    }

    fn interior_error(b: usize, n: usize, u: fn(f64) -> f64, exact: impl Fn(f64) -> f64) -> f64 {
        let g = RadialGrid::uniform(b, n, 0.1, 1.0).unwrap();
        let vals: Vec<f64> = g.nodes().iter().map(|&x| u(x)).collect();
        let lap = g.laplacian(&vals);
        (1..g.len() - 1)
            .map(|i| (lap[i] - exact(g.nodes()[i])).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn laplacian_on_quadratic() {
        // x⁴·2 + (2-b)x³·2x; exact up to rounding for some b
        for b in [0usize, 1, 2, 3] {
            let exact = move |x: f64| 2.0 * x.powi(4) + (2.0 - b as f64) * 2.0 * x.powi(4);
            let e1 = interior_error(b, 40, |x| x * x, exact);
            let e2 = interior_error(b, 80, |x| x * x, exact);
            assert!(e1 < 1e-12 || e1 / e2 >= 3.6, "b={b}: {e1:e} -> {e2:e}");
        }
        let e = interior_error(2, 40, |x| x * x, |x| 2.0 * x.powi(4));
        assert!(e < 1e-12);
    }

    #[test]
    fn laplacian_second_order() {
        for b in [0usize, 1, 2, 3, 5] {
            let exact = move |x: f64| {
                let (d1, d2) = (3.0 * (3.0 * x).cos(), -9.0 * (3.0 * x).sin());
                x.powi(4) * d2 + (2.0 - b as f64) * x.powi(3) * d1
            };
            let e1 = interior_error(b, 50, |x| (3.0 * x).sin(), exact);
            let e2 = interior_error(b, 100, |x| (3.0 * x).sin(), exact);
            assert!(e1 / e2 >= 3.6, "b={b}: ratio {}", e1 / e2);
        }
    }

    #[test]
    fn mass_conservation() {
        let g = RadialGrid::uniform(3, 64, 0.05, 1.0).unwrap();
        let u: Vec<f64> = g.nodes().iter().map(|x| (7.0 * x).sin() + x.powi(3)).collect();
        let total = g.integrate(&g.laplacian(&u));
        let scale = u.iter().fold(0.0_f64, |a, v| a.max(v.abs())) * g.total_volume();
        assert!(total.abs() <= 1e-12 * scale);
    }

    #[test]
    fn distance_examples() {
        let p = PhiPoint::new(0.3, vec![1.0], vec![0.0, 0.0]);
        assert_eq!(phi_distance(&p, &p), 0.0);
        let q = PhiPoint::new(0.3, vec![1.0], vec![3.0, 4.0]);
        assert!((phi_distance(&p, &q) - 5.0).abs() < 1e-15);
        let a = PhiPoint::radial(0.2);
        let b = PhiPoint::radial(0.4);
        assert!((phi_distance(&a, &b) - 0.2 / 0.36).abs() < 1e-15);
        assert_eq!(radial_distance(0.2, 0.4), phi_distance(&a, &b));
    }
}
