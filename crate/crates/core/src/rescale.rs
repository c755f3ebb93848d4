//! Time reparametrization taking a solution of the unnormalized Yamabe flow
//! to a solution of CYF⁺.
//!
//! Given `g(t) = u(t)^{1/η} g_Φ` along the unnormalized flow, set
//!
//! ```text
//! f(t) = exp( ∫₀ᵗ η S_sup(θ) dθ ),   F(t) = ∫₀ᵗ f(θ)^{1/η} dθ,
//! ũ(τ) = (f u)(F⁻¹(τ)).
//! ```
//!
//! Then `ũ^{1/η} g_Φ` satisfies `∂τ g̃ = (S̃_sup - S̃) g̃`. Since
//! `scal(c u) = c^{-1/η} scal(u)` for constants `c`, the time change must be
//! `dτ/dt = f^{1/η}`; for `η = 1` this coincides with `f^η`.

use crate::conformal::{scal_of_values, ConformalError, ConformalFactor};
use crate::flow::{run_flow, FlowConfig, FlowError, FlowTrace, FlowVariant, Snapshot, TraceRecord};
use crate::geometry::{ModelPhiManifold, RadialGrid};
use crate::interp::MonotoneCubic;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RescaleError {
    #[error("F is not strictly increasing at t = {t}")]
    NonmonotoneF { t: f64 },
    #[error("τ = {tau} lies outside the reparametrized range [0, {max}]")]
    OutOfRange { tau: f64, max: f64 },
    #[error("need at least 3 samples, got {0}")]
    InsufficientSamples(usize),
    #[error("time reparametrization expects an unnormalized trace, got {0}")]
    WrongVariant(FlowVariant),
    #[error(transparent)]
    Conformal(#[from] ConformalError),
    #[error(transparent)]
    Flow(#[from] FlowError),
}

/// Sampled monotone maps `t ↦ f(t)`, `t ↦ F(t)` and the inverse `τ ↦ F⁻¹(τ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReparamMap {
    eta: f64,
    /// `t ↦ ln f(t)`
    log_f: MonotoneCubic,
    /// `t ↦ F(t)`
    big_f: MonotoneCubic,
}

impl ReparamMap {
    /// Builds the map from samples of `S_sup` along an unnormalized run.
    pub fn from_samples(eta: f64, t: &[f64], s_sup: &[f64]) -> Result<Self, RescaleError> {
        assert_eq!(t.len(), s_sup.len());
        if t.len() < 2 {
            return Err(RescaleError::InsufficientSamples(t.len()));
        }
        let n = t.len();
        let t0 = t[0];
        let ts: Vec<f64> = t.iter().map(|v| v - t0).collect();
        let mut log_f = vec![0.0; n];
        let mut big_f = vec![0.0; n];
        for k in 1..n {
            let h = ts[k] - ts[k - 1];
            if !(h > 0.0) {
                return Err(RescaleError::NonmonotoneF { t: t[k] });
            }
            log_f[k] = log_f[k - 1] + 0.5 * h * eta * (s_sup[k - 1] + s_sup[k]);
            let (a, b) = ((log_f[k - 1] / eta).exp(), (log_f[k] / eta).exp());
            big_f[k] = big_f[k - 1] + 0.5 * h * (a + b);
            if !(big_f[k] > big_f[k - 1]) {
                return Err(RescaleError::NonmonotoneF { t: t[k] });
            }
        }
        Ok(Self {
            eta,
            log_f: MonotoneCubic::new(ts.clone(), log_f),
            big_f: MonotoneCubic::new(ts, big_f),
        })
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    /// Sample times, shifted so that the first is 0.
    pub fn t_samples(&self) -> &[f64] {
        self.big_f.xs()
    }

    pub fn f_values(&self) -> Vec<f64> {
        self.log_f.ys().iter().map(|v| v.exp()).collect()
    }

    pub fn big_f_values(&self) -> &[f64] {
        self.big_f.ys()
    }

    pub fn t_max(&self) -> f64 {
        self.big_f.domain().1
    }

    pub fn tau_max(&self) -> f64 {
        *self.big_f.ys().last().expect("map has samples")
    }

    pub fn f(&self, t: f64) -> f64 {
        self.log_f.eval(t).exp()
    }

    #[allow(non_snake_case)]
    pub fn F(&self, t: f64) -> f64 {
        self.big_f.eval(t)
    }

    pub fn inverse(&self, tau: f64) -> Result<f64, RescaleError> {
        let max = self.tau_max();
        if !(tau >= 0.0 && tau <= max * (1.0 + 1e-14)) {
            return Err(RescaleError::OutOfRange { tau, max });
        }
        Ok(self.big_f.invert(tau.min(max)))
    }
}

/// Reparametrization map from the records of an unnormalized run.
pub fn build_reparam(eta: f64, trace: &FlowTrace) -> Result<ReparamMap, RescaleError> {
    if trace.variant != FlowVariant::Unnormalized {
        return Err(RescaleError::WrongVariant(trace.variant));
    }
    let t: Vec<f64> = trace.records.iter().map(|r| r.t).collect();
    let s: Vec<f64> = trace.records.iter().map(|r| r.s_sup).collect();
    ReparamMap::from_samples(eta, &t, &s)
}

/// A trace in normalized time `τ`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedTrace {
    /// Samples `(τ, ũ(τ))`.
    pub snapshots: Vec<Snapshot>,
}

impl NormalizedTrace {
    /// Per-sample monitors in the flow-trace layout (`t` holds `τ`).
    pub fn records(&self, manifold: &ModelPhiManifold, grid: &RadialGrid) -> Result<Vec<TraceRecord>, RescaleError> {
        self.snapshots
            .iter()
            .map(|s| {
                let scal = scal_of_values(manifold, grid, &s.u)?;
                let dtu_norm = s
                    .u
                    .iter()
                    .zip(&scal.values)
                    .map(|(u, v)| (manifold.eta * (scal.sup - v) * u).abs())
                    .fold(0.0, f64::max);
                let (u_min, u_max) = crate::conformal::extremes(&s.u);
                Ok(TraceRecord {
                    t: s.t,
                    s_sup: scal.sup,
                    s_inf: scal.inf,
                    gap: scal.sup - scal.inf,
                    u_min,
                    u_max,
                    dtu_norm,
                })
            })
            .collect()
    }
}

/// `ũ(τ) = f(F⁻¹(τ)) · u(F⁻¹(τ))` at the requested `τ`, interpolating the
/// snapshots of `u` in `t` with monotone cubics node by node.
pub fn apply_reparam(trace: &FlowTrace, map: &ReparamMap, taus: &[f64]) -> Result<NormalizedTrace, RescaleError> {
    let snaps = &trace.snapshots;
    if snaps.len() < 2 {
        return Err(RescaleError::InsufficientSamples(snaps.len()));
    }
    let t0 = trace.records[0].t;
    let times: Vec<f64> = snaps.iter().map(|s| s.t - t0).collect();
    let nodes = snaps[0].u.len();
    let per_node: Vec<MonotoneCubic> = (0..nodes)
        .map(|i| MonotoneCubic::new(times.clone(), snaps.iter().map(|s| s.u[i]).collect()))
        .collect();
    let t_last = *times.last().expect("at least two snapshots");
    let snapshots = taus
        .iter()
        .map(|&tau| {
            let t = map.inverse(tau)?;
            if t > t_last * (1.0 + 1e-12) {
                return Err(RescaleError::OutOfRange {
                    tau,
                    max: map.F(t_last),
                });
            }
            let f = map.f(t);
            let k = per_node[0].interval(t);
            Ok(Snapshot {
                t: tau,
                u: per_node.iter().map(|p| f * p.eval_in(k, t)).collect(),
            })
        })
        .collect::<Result<_, _>>()?;
    Ok(NormalizedTrace { snapshots })
}

/// `ũ` at `τ_k = F(t_k)` for every snapshot time `t_k`; no interpolation of
/// `u` is involved.
pub fn reparam_snapshots(trace: &FlowTrace, map: &ReparamMap) -> NormalizedTrace {
    let t0 = trace.records[0].t;
    let snapshots = trace
        .snapshots
        .iter()
        .map(|s| {
            let t = s.t - t0;
            let f = map.f(t);
            Snapshot {
                t: map.F(t),
                u: s.u.iter().map(|u| f * u).collect(),
            }
        })
        .collect();
    NormalizedTrace { snapshots }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CyfResidual {
    /// `max_{τ, i} |∂τ ũ - η (S̃_sup - S̃) ũ|`
    pub max: f64,
    /// Residual per interior sample.
    pub series: Vec<(f64, f64)>,
}

/// Checks that a normalized trace solves CYF⁺, using a centered difference
/// in `τ` against `η (S̃_sup - S̃) ũ`.
pub fn verify_cyf(
    manifold: &ModelPhiManifold,
    grid: &RadialGrid,
    trace: &NormalizedTrace,
) -> Result<CyfResidual, RescaleError> {
    let snaps = &trace.snapshots;
    if snaps.len() < 3 {
        return Err(RescaleError::InsufficientSamples(snaps.len()));
    }
    let eta = manifold.eta;
    let mut series = Vec::with_capacity(snaps.len() - 2);
    for k in 1..snaps.len() - 1 {
        let h1 = snaps[k].t - snaps[k - 1].t;
        let h2 = snaps[k + 1].t - snaps[k].t;
        let (wa, wb, wc) = (
            -h2 / (h1 * (h1 + h2)),
            (h2 - h1) / (h1 * h2),
            h1 / (h2 * (h1 + h2)),
        );
        let u = &snaps[k].u;
        let scal = scal_of_values(manifold, grid, u)?;
        let r = (0..u.len())
            .map(|i| {
                let d = wa * snaps[k - 1].u[i] + wb * u[i] + wc * snaps[k + 1].u[i];
                (d - eta * (scal.sup - scal.values[i]) * u[i]).abs()
            })
            .fold(0.0, f64::max);
        series.push((snaps[k].t, r));
    }
    let max = series.iter().map(|s| s.1).fold(0.0, f64::max);
    Ok(CyfResidual { max, series })
}

/// Largest sup-norm difference between two normalized traces sampled at
/// the same `τ` values.
pub fn max_difference(a: &NormalizedTrace, b: &NormalizedTrace) -> f64 {
    a.snapshots
        .iter()
        .zip(&b.snapshots)
        .map(|(x, y)| {
            debug_assert!((x.t - y.t).abs() <= 1e-12 * (1.0 + x.t.abs()));
            x.u.iter().zip(&y.u).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max)
        })
        .fold(0.0, f64::max)
}

/// Direct CYF⁺ snapshots viewed as a normalized trace (interpolated to `taus`).
pub fn normalized_from_direct(trace: &FlowTrace, taus: &[f64]) -> Result<NormalizedTrace, RescaleError> {
    let snaps = &trace.snapshots;
    if snaps.len() < 2 {
        return Err(RescaleError::InsufficientSamples(snaps.len()));
    }
    let times: Vec<f64> = snaps.iter().map(|s| s.t).collect();
    let nodes = snaps[0].u.len();
    let per_node: Vec<MonotoneCubic> = (0..nodes)
        .map(|i| MonotoneCubic::new(times.clone(), snaps.iter().map(|s| s.u[i]).collect()))
        .collect();
    let (lo, hi) = per_node[0].domain();
    let snapshots = taus
        .iter()
        .map(|&tau| {
            if tau < lo || tau > hi {
                return Err(RescaleError::OutOfRange { tau, max: hi });
            }
            let k = per_node[0].interval(tau);
            Ok(Snapshot {
                t: tau,
                u: per_node.iter().map(|p| p.eval_in(k, tau)).collect(),
            })
        })
        .collect::<Result<_, _>>()?;
    Ok(NormalizedTrace { snapshots })
}

/// Discrepancy between the two routes to CYF⁺ at a set of checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoRouteReport {
    /// Checkpoints `τ_k = F(t_k)`.
    pub taus: Vec<f64>,
    /// `‖ũ_direct(τ_k) - (f u)(t_k)‖_∞`
    pub discrepancy: Vec<f64>,
    pub max: f64,
}

/// Runs the unnormalized flow from `u0` to `t_end` and a direct CYF⁺ flow
/// from the same `u0`, comparing them at `segments` checkpoints
/// `t_k = k t_end / segments`.
///
/// Both runs are split at the checkpoints so that no interpolation in time
/// is involved; `template` supplies the step and record settings.
pub fn two_route_comparison(
    manifold: &ModelPhiManifold,
    grid: &RadialGrid,
    u0: &ConformalFactor,
    t_end: f64,
    segments: usize,
    template: &FlowConfig,
) -> Result<TwoRouteReport, RescaleError> {
    if segments == 0 {
        return Err(RescaleError::InsufficientSamples(0));
    }
    let seg_len = t_end / segments as f64;
    let mut config = template.clone();
    config.variant = FlowVariant::Unnormalized;
    config.t_end = seg_len;
    config.snapshot_every = usize::MAX;

    let mut times = vec![u0.time];
    let mut s_sup = Vec::new();
    let mut checkpoints = Vec::with_capacity(segments);
    let mut u = u0.clone();
    for _ in 0..segments {
        let trace = run_flow(manifold, grid, &config, u)?;
        if s_sup.is_empty() {
            s_sup.push(trace.records[0].s_sup);
        }
        for r in &trace.records[1..] {
            times.push(r.t);
            s_sup.push(r.s_sup);
        }
        u = trace.final_state.u;
        u.time = trace.final_state.t;
        checkpoints.push((times.len() - 1, u.clone()));
    }
    let map = ReparamMap::from_samples(manifold.eta, &times, &s_sup)?;
    let t_samples = map.t_samples();

    let mut direct = template.clone();
    direct.variant = FlowVariant::CyfPlus;
    direct.snapshot_every = usize::MAX;
    let mut v = u0.clone();
    v.time = 0.0;
    let mut taus = Vec::with_capacity(segments);
    let mut discrepancy = Vec::with_capacity(segments);
    for (k, u_k) in &checkpoints {
        let t = t_samples[*k];
        let tau = map.big_f_values()[*k];
        direct.t_end = tau - v.time;
        let trace = run_flow(manifold, grid, &direct, v)?;
        v = trace.final_state.u;
        v.time = trace.final_state.t;
        let f = map.f(t);
        let d = v
            .values()
            .iter()
            .zip(u_k.values())
            .map(|(a, b)| (a - f * b).abs())
            .fold(0.0, f64::max);
        taus.push(tau);
        discrepancy.push(d);
    }
    let max = discrepancy.iter().copied().fold(0.0, f64::max);
    Ok(TwoRouteReport {
        taus,
        discrepancy,
        max,
    })
}
