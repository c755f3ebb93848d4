//! Φ-Hölder seminorms and weighted sup-norms of sampled space-time fields.
//!
//! The Hölder quotient of a pair of samples is
//!
//! ```text
//! |u(p,t) - u(p',t')| / (d(p,p')^α + |t - t'|^{α/2})
//! ```
//!
//! with `d` the Φ-distance. Exact suprema cost O((NT)²); above
//! [`ALL_PAIRS_LIMIT`] pairs a fixed, seeded subset is used instead. The
//! local and global seminorms always share the same pair set.

use crate::flow::Snapshot;
use crate::geometry::{radial_distance, RadialGrid};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest number of pairs evaluated exhaustively.
pub const ALL_PAIRS_LIMIT: usize = 10_000;

/// Random partners drawn per sample point when subsampling.
const PARTNERS_PER_POINT: usize = 64;

const SAMPLE_SEED: u64 = 0x5eed_f1a0_0c0d_e001;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HolderError {
    #[error("alpha must lie in (0, 1), got {0}")]
    InvalidAlpha(f64),
    #[error("delta must be positive, got {0}")]
    InvalidDelta(f64),
    #[error("gamma must be nonnegative, got {0}")]
    InvalidGamma(f64),
    #[error("field has {got} values, expected {expected}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("sample times must be strictly increasing")]
    UnorderedTimes,
    #[error("reference has {got} values, expected {expected}")]
    ReferenceMismatch { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HolderParams {
    pub alpha: f64,
    /// Locality threshold.
    pub delta: f64,
    /// Weight exponent.
    pub gamma: f64,
}

impl HolderParams {
    pub fn new(alpha: f64, delta: f64, gamma: f64) -> Result<Self, HolderError> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(HolderError::InvalidAlpha(alpha));
        }
        if !(delta > 0.0) {
            return Err(HolderError::InvalidDelta(delta));
        }
        if !(gamma >= 0.0) {
            return Err(HolderError::InvalidGamma(gamma));
        }
        Ok(Self { alpha, delta, gamma })
    }
}

/// Values of a radial field at every node of a grid and at a list of times,
/// stored time-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledField {
    nodes: Vec<f64>,
    times: Vec<f64>,
    values: Vec<f64>,
}

impl SampledField {
    pub fn new(grid: &RadialGrid, times: Vec<f64>, values: Vec<f64>) -> Result<Self, HolderError> {
        let expected = grid.len() * times.len();
        if values.len() != expected {
            return Err(HolderError::ShapeMismatch {
                expected,
                got: values.len(),
            });
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(HolderError::UnorderedTimes);
        }
        Ok(Self {
            nodes: grid.nodes().to_vec(),
            times,
            values,
        })
    }

    /// Single time slice.
    pub fn at_time(grid: &RadialGrid, t: f64, values: Vec<f64>) -> Result<Self, HolderError> {
        Self::new(grid, vec![t], values)
    }

    pub fn from_snapshots(grid: &RadialGrid, snapshots: &[Snapshot]) -> Result<Self, HolderError> {
        let times = snapshots.iter().map(|s| s.t).collect();
        let values = snapshots.iter().flat_map(|s| s.u.iter().copied()).collect();
        Self::new(grid, times, values)
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    fn point(&self, p: usize) -> (f64, f64, f64) {
        let n = self.nodes.len();
        (self.nodes[p % n], self.times[p / n], self.values[p])
    }

    /// Number of pairs examined by the seminorms.
    pub fn pair_count(&self) -> usize {
        let n = self.len();
        let all = n * n.saturating_sub(1) / 2;
        if all <= ALL_PAIRS_LIMIT {
            all
        } else {
            (0..n).map(|p| self.partners(p).len()).sum()
        }
    }

    /// Partners `q > p` of point `p`. Exhaustive under the pair limit;
    /// otherwise the spatial and temporal neighbours plus one random partner
    /// from each of up to [`PARTNERS_PER_POINT`] equal strata of `(p, n)`.
    fn partners(&self, p: usize) -> Vec<usize> {
        let n = self.len();
        let rest = n - p - 1;
        if n * (n - 1) / 2 <= ALL_PAIRS_LIMIT || rest <= PARTNERS_PER_POINT {
            return (p + 1..n).collect();
        }
        let nodes = self.nodes.len();
        let mut out = Vec::with_capacity(PARTNERS_PER_POINT + 2);
        if (p + 1) % nodes != 0 {
            out.push(p + 1);
        }
        if p + nodes < n {
            out.push(p + nodes);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(SAMPLE_SEED ^ p as u64);
        for s in 0..PARTNERS_PER_POINT {
            let lo = p + 1 + s * rest / PARTNERS_PER_POINT;
            let hi = p + 1 + (s + 1) * rest / PARTNERS_PER_POINT;
            out.push(rng.gen_range(lo..hi));
        }
        out
    }

    /// Max Hölder quotient over the pair set, keeping pairs whose
    /// denominator passes `keep`.
    fn max_quotient(&self, alpha: f64, keep: impl Fn(f64) -> bool + Sync) -> f64 {
        (0..self.len())
            .into_par_iter()
            .map(|p| {
                let (x, t, u) = self.point(p);
                self.partners(p)
                    .into_iter()
                    .map(|q| {
                        let (x2, t2, u2) = self.point(q);
                        let denom = radial_distance(x, x2).powf(alpha) + (t - t2).abs().powf(0.5 * alpha);
                        if denom > 0.0 && keep(denom) {
                            (u - u2).abs() / denom
                        } else {
                            0.0
                        }
                    })
                    .fold(0.0, f64::max)
            })
            .reduce(|| 0.0, f64::max)
    }
}

/// `[u]_α` over the deterministic pair set of the field.
pub fn holder_seminorm(field: &SampledField, alpha: f64) -> f64 {
    field.max_quotient(alpha, |_| true)
}

/// `[u]_α` restricted to pairs with `d^α + |Δt|^{α/2} ≤ δ`.
pub fn local_holder_seminorm(field: &SampledField, alpha: f64, delta: f64) -> f64 {
    field.max_quotient(alpha, |d| d <= delta)
}

/// `‖u‖_α = sup|u| + [u]_α`
pub fn holder_norm(field: &SampledField, alpha: f64) -> f64 {
    field.sup_norm() + holder_seminorm(field, alpha)
}

/// `‖u‖'_α = sup|u| + [u]'_α` with the local seminorm.
pub fn local_holder_norm(field: &SampledField, alpha: f64, delta: f64) -> f64 {
    field.sup_norm() + local_holder_seminorm(field, alpha, delta)
}

/// `[u]_α` over every pair, regardless of size.
pub fn holder_seminorm_exhaustive(field: &SampledField, alpha: f64) -> f64 {
    let n = field.len();
    (0..n)
        .into_par_iter()
        .map(|p| {
            let (x, t, u) = field.point(p);
            (p + 1..n)
                .map(|q| {
                    let (x2, t2, u2) = field.point(q);
                    let denom = radial_distance(x, x2).powf(alpha) + (t - t2).abs().powf(0.5 * alpha);
                    if denom > 0.0 {
                        (u - u2).abs() / denom
                    } else {
                        0.0
                    }
                })
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max)
}

/// `sup_i x_i^γ |u_i - ref_i|`, with a zero reference by default.
pub fn weighted_sup_norm(
    nodes: &[f64],
    values: &[f64],
    gamma: f64,
    reference: Option<&[f64]>,
) -> Result<f64, HolderError> {
    if !(gamma >= 0.0) {
        return Err(HolderError::InvalidGamma(gamma));
    }
    if values.len() != nodes.len() {
        return Err(HolderError::ShapeMismatch {
            expected: nodes.len(),
            got: values.len(),
        });
    }
    if let Some(r) = reference {
        if r.len() != nodes.len() {
            return Err(HolderError::ReferenceMismatch {
                expected: nodes.len(),
                got: r.len(),
            });
        }
    }
    let mut sup = 0.0f64;
    for (i, (&x, &u)) in nodes.iter().zip(values).enumerate() {
        let r = reference.map_or(0.0, |r| r[i]);
        let w = if gamma == 0.0 { 1.0 } else { x.powf(gamma) };
        sup = sup.max(w * (u - r).abs());
    }
    Ok(sup)
}
