//! Conformal geometry of `g = u^{1/η} g_Φ` for radial conformal factors.
//!
//! With `Δ` the Φ-Laplacian (nonpositive spectrum),
//!
//! ```text
//! scal(u^{1/η} g_Φ) = -u^{-(1+1/η)} [ ((m-1)/η) Δu - scal(g_Φ) u ]
//! ```

use crate::geometry::{scal_phi_field, ModelPhiManifold, RadialGrid};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConformalError {
    #[error("conformal factor must be positive, found u[{index}] = {value}")]
    NotPositive { index: usize, value: f64 },
    #[error("field has {got} values but the grid has {expected} nodes")]
    LengthMismatch { expected: usize, got: usize },
}

/// Positive conformal factor sampled on the grid at time `time`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConformalFactor {
    values: Vec<f64>,
    pub time: f64,
}

impl ConformalFactor {
    pub fn new(values: Vec<f64>, time: f64) -> Result<Self, ConformalError> {
        check_positive(&values)?;
        Ok(Self { values, time })
    }

    pub fn constant(n: usize, value: f64) -> Result<Self, ConformalError> {
        Self::new(vec![value; n], 0.0)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub(crate) fn from_checked(values: Vec<f64>, time: f64) -> Self {
        Self { values, time }
    }

    pub(crate) fn take_values(&mut self) -> Vec<f64> {
        std::mem::take(&mut self.values)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

pub(crate) fn check_positive(values: &[f64]) -> Result<(), ConformalError> {
    match values.iter().position(|&v| !(v > 0.0)) {
        Some(index) => Err(ConformalError::NotPositive {
            index,
            value: values[index],
        }),
        None => Ok(()),
    }
}

fn check_len(grid: &RadialGrid, n: usize) -> Result<(), ConformalError> {
    if grid.len() != n {
        return Err(ConformalError::LengthMismatch {
            expected: grid.len(),
            got: n,
        });
    }
    Ok(())
}

/// Scalar curvature on the nodes together with its exact node extremes.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalField {
    pub values: Vec<f64>,
    pub sup: f64,
    pub inf: f64,
}

impl ScalField {
    pub fn from_values(values: Vec<f64>) -> Self {
        let (inf, sup) = extremes(&values);
        Self { values, sup, inf }
    }

    pub fn gap(&self) -> f64 {
        self.sup - self.inf
    }
}

pub(crate) fn extremes(values: &[f64]) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in values {
        if v < lo {
            lo = v;
        }
        if v > hi {
            hi = v;
        }
    }
    (lo, hi)
}

fn integer_exponent(p: f64) -> Option<i32> {
    (p.fract() == 0.0 && p.abs() <= 32.0).then_some(p as i32)
}

/// `u^p`, with integer exponents routed through `powi`.
#[inline]
pub(crate) fn pow(u: f64, p: f64) -> f64 {
    if p == -1.0 {
        1.0 / u
    } else if p.fract() == 0.0 && p.abs() <= 32.0 {
        u.powi(p as i32)
    } else {
        u.powf(p)
    }
}

/// Node extremes of a curvature evaluation, plus the largest diffusion
/// coefficient `u^{-1/η} x⁴` seen on the way.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvatureSummary {
    pub inf: f64,
    pub sup: f64,
    pub stiffness: f64,
}

/// Precomputed data for repeated curvature evaluations on one grid.
#[derive(Debug, Clone)]
pub struct CurvatureKernel {
    /// `(m - 1) / η`
    lap_coeff: f64,
    inv_eta: f64,
    scal_phi: Vec<f64>,
    face_coeffs: Vec<f64>,
    inv_weights: Vec<f64>,
    gxx: Vec<f64>,
    flux: Vec<f64>,
}

impl CurvatureKernel {
    pub fn new(manifold: &ModelPhiManifold, grid: &RadialGrid) -> Self {
        Self {
            lap_coeff: (manifold.m as f64 - 1.0) / manifold.eta,
            inv_eta: 1.0 / manifold.eta,
            scal_phi: scal_phi_field(manifold, grid),
            face_coeffs: grid.face_coeffs().to_vec(),
            inv_weights: grid.vol_weights().iter().map(|w| 1.0 / w).collect(),
            gxx: grid.gxx().to_vec(),
            flux: vec![0.0; grid.len().saturating_sub(1)],
        }
    }

    pub fn scal_phi(&self) -> &[f64] {
        &self.scal_phi
    }

    /// Curvature of `u = hi + lo` written into `out`.
    ///
    /// `lo` is a low-order correction to `hi` (zero for plain fields); it
    /// enters the face differences so that the Laplacian of a compensated
    /// field keeps its full accuracy.
    pub fn evaluate(&mut self, hi: &[f64], lo: Option<&[f64]>, out: &mut [f64]) -> CurvatureSummary {
        let n = hi.len();
        assert!(n == self.scal_phi.len() && out.len() == n, "field length does not match the grid");
        match lo {
            Some(lo) => {
                for i in 0..n - 1 {
                    let d = (hi[i + 1] - hi[i]) + (lo[i + 1] - lo[i]);
                    self.flux[i] = self.face_coeffs[i] * d;
                }
            }
            None => {
                for i in 0..n - 1 {
                    self.flux[i] = self.face_coeffs[i] * (hi[i + 1] - hi[i]);
                }
            }
        }
        let inv_eta = self.inv_eta;
        match integer_exponent(inv_eta) {
            Some(1) => self.node_pass(hi, out, |_, r| r),
            Some(k) => self.node_pass(hi, out, |_, r| r.powi(k)),
            None => self.node_pass(hi, out, |u, _| u.powf(-inv_eta)),
        }
    }

    /// Node loop given `u ↦ u^{-1/η}` (called with `u` and `1/u`).
    #[inline(always)]
    fn node_pass(&self, hi: &[f64], out: &mut [f64], weight: impl Fn(f64, f64) -> f64) -> CurvatureSummary {
        let n = hi.len();
        let (flux, phi, inv_w, gxx) = (&self.flux, &self.scal_phi, &self.inv_weights, &self.gxx);
        let c = self.lap_coeff;
        let mut inf = f64::INFINITY;
        let mut sup = f64::NEG_INFINITY;
        let mut stiffness = 0.0;
        for i in 0..n {
            let right = if i + 1 < n { flux[i] } else { 0.0 };
            let left = if i > 0 { flux[i - 1] } else { 0.0 };
            let u = hi[i];
            let r = 1.0 / u;
            let a = weight(u, r);
            let s = a * (phi[i] - c * (right - left) * inv_w[i] * r);
            out[i] = s;
            inf = if s < inf { s } else { inf };
            sup = if s > sup { s } else { sup };
            let k = a * gxx[i];
            stiffness = if k > stiffness { k } else { stiffness };
        }
        let summary = CurvatureSummary { inf, sup, stiffness };
        summary
    }
}

/// `scal(u^{1/η} g_Φ)` at the grid nodes.
pub fn scal_conformal(
    manifold: &ModelPhiManifold,
    grid: &RadialGrid,
    u: &ConformalFactor,
) -> Result<ScalField, ConformalError> {
    scal_of_values(manifold, grid, u.values())
}

pub fn scal_of_values(
    manifold: &ModelPhiManifold,
    grid: &RadialGrid,
    u: &[f64],
) -> Result<ScalField, ConformalError> {
    check_len(grid, u.len())?;
    check_positive(u)?;
    let mut kernel = CurvatureKernel::new(manifold, grid);
    let mut values = vec![0.0; u.len()];
    let CurvatureSummary { inf, sup, .. } = kernel.evaluate(u, None, &mut values);
    Ok(ScalField { values, sup, inf })
}

/// Laplacian of `f` for the metric `u^{1/η} g_Φ`:
/// `u^{-1/η} Δ_Φ f + 2 u^{-1-1/η} x⁴ f' u'`.
pub fn conformal_laplacian(
    manifold: &ModelPhiManifold,
    grid: &RadialGrid,
    u: &ConformalFactor,
    f: &[f64],
) -> Result<Vec<f64>, ConformalError> {
    conformal_laplacian_of_values(manifold, grid, u.values(), f)
}

pub fn conformal_laplacian_of_values(
    manifold: &ModelPhiManifold,
    grid: &RadialGrid,
    u: &[f64],
    f: &[f64],
) -> Result<Vec<f64>, ConformalError> {
    check_len(grid, u.len())?;
    check_len(grid, f.len())?;
    check_positive(u)?;
    let inv_eta = 1.0 / manifold.eta;
    let lap = grid.laplacian(f);
    let df = grid.gradient(f);
    let du = grid.gradient(u);
    Ok((0..u.len())
        .map(|i| {
            pow(u[i], -inv_eta) * lap[i] + 2.0 * pow(u[i], -1.0 - inv_eta) * grid.gxx()[i] * df[i] * du[i]
        })
        .collect())
}

/// Defect of the constant-curvature equation
/// `((m-1)/η) Δ_Φ u - scal(g_Φ) u + S* u^{1+1/η}`.
pub fn yamabe_residual(
    manifold: &ModelPhiManifold,
    grid: &RadialGrid,
    u: &ConformalFactor,
    target: f64,
) -> Vec<f64> {
    let u = u.values();
    let lap = grid.laplacian(u);
    let lap_coeff = (manifold.m as f64 - 1.0) / manifold.eta;
    let p = 1.0 + 1.0 / manifold.eta;
    u.iter()
        .zip(&lap)
        .zip(grid.nodes())
        .map(|((&u, &l), &x)| lap_coeff * l - manifold.scal_phi(x) * u + target * pow(u, p))
        .collect()
}
