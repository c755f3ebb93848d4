//! Explicit time integration of the Yamabe flow and the curvature-normalized
//! flows CYF⁺ / CYF⁻ for the conformal factor, plus the monitors used to
//! check their qualitative behaviour.
//!
//! All three variants share the form
//!
//! ```text
//! ∂t u = (m-1) u^{-1/η} Δ_Φ u - η scal(g_Φ) u^{1-1/η} + η S_ext u
//!      = η (S_ext - scal(u^{1/η} g_Φ)) u
//! ```
//!
//! with `S_ext = 0` (unnormalized), `sup scal` (CYF⁺) or `inf scal` (CYF⁻).

use crate::conformal::{
    check_positive, conformal_laplacian_of_values, pow, scal_of_values, yamabe_residual, ConformalError,
    ConformalFactor, CurvatureKernel, ScalField,
};
use crate::geometry::{ModelPhiManifold, RadialGrid};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FlowError {
    #[error("conformal factor lost positivity at t = {t}: u[{index}] = {value}")]
    PositivityLost { t: f64, index: usize, value: f64 },
    #[error("time step {dt:e} at t = {t} exceeds the stability bound {bound:e}")]
    StabilityViolation { t: f64, dt: f64, bound: f64 },
    #[error("need at least 3 snapshots, trace has {0}")]
    InsufficientSnapshots(usize),
    #[error("gap {gap:e} at t = {t} is below the fit floor; shorten the fit window")]
    GapUnderflow { t: f64, gap: f64 },
    #[error("fit window [{t_lo}, {t_hi}] holds {count} records, need at least 5")]
    InsufficientRecords { t_lo: f64, t_hi: f64, count: usize },
    #[error("invalid flow configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Conformal(#[from] ConformalError),
}

impl FlowError {
    /// Simulation time at which the flow failed, when known.
    pub fn failure_time(&self) -> Option<f64> {
        match self {
            FlowError::PositivityLost { t, .. } | FlowError::StabilityViolation { t, .. } => Some(*t),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowVariant {
    Unnormalized,
    CyfPlus,
    CyfMinus,
}

impl FlowVariant {
    /// Normalizing curvature `S_ext` for a curvature field with the given extremes.
    pub fn normalization(self, inf: f64, sup: f64) -> f64 {
        match self {
            FlowVariant::Unnormalized => 0.0,
            FlowVariant::CyfPlus => sup,
            FlowVariant::CyfMinus => inf,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FlowVariant::Unnormalized => "unnormalized",
            FlowVariant::CyfPlus => "cyf_plus",
            FlowVariant::CyfMinus => "cyf_minus",
        }
    }
}

impl std::fmt::Display for FlowVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

fn default_snapshot_every() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowConfig {
    pub variant: FlowVariant,
    pub t_end: f64,
    pub cfl_safety: f64,
    /// A final step shorter than this is merged into the previous one.
    pub tol_step: f64,
    pub tol_converge: f64,
    /// Steps between trace records.
    pub record_every: usize,
    /// Records between full `u` snapshots.
    #[serde(default = "default_snapshot_every")]
    pub snapshot_every: usize,
}

impl FlowConfig {
    pub fn new(variant: FlowVariant, t_end: f64) -> Self {
        Self {
            variant,
            t_end,
            cfl_safety: 0.9,
            tol_step: 1e-12,
            tol_converge: 1e-3,
            record_every: 100,
            snapshot_every: 1,
        }
    }

    pub fn validate(&self) -> Result<(), FlowError> {
        let bad = |msg: String| Err(FlowError::InvalidConfig(msg));
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return bad(format!("t_end must be positive, got {}", self.t_end));
        }
        if !(self.cfl_safety > 0.0 && self.cfl_safety < 1.0) {
            return bad(format!("cfl_safety must lie in (0, 1), got {}", self.cfl_safety));
        }
        if !(self.tol_step > 0.0) || !(self.tol_converge > 0.0) {
            return bad("tolerances must be positive".into());
        }
        if self.record_every == 0 || self.snapshot_every == 0 {
            return bad("record_every and snapshot_every must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowState {
    pub t: f64,
    pub u: ConformalFactor,
    pub scal: ScalField,
    /// `max_i |∂t u_i|` over the last step.
    pub dtu_norm: f64,
    /// Rounding residue of `u`: the integrated factor is `u + carry`.
    carry: Vec<f64>,
    /// `max_i u_i^{-1/η} x_i⁴` for the current `u`.
    stiffness: f64,
}

impl FlowState {
    pub fn initial(
        manifold: &ModelPhiManifold,
        grid: &RadialGrid,
        variant: FlowVariant,
        u0: ConformalFactor,
    ) -> Result<Self, FlowError> {
        if u0.len() != grid.len() {
            return Err(ConformalError::LengthMismatch {
                expected: grid.len(),
                got: u0.len(),
            }
            .into());
        }
        let mut kernel = CurvatureKernel::new(manifold, grid);
        let mut values = vec![0.0; grid.len()];
        let summary = kernel.evaluate(u0.values(), None, &mut values);
        let ext = variant.normalization(summary.inf, summary.sup);
        let eta = manifold.eta;
        let dtu_norm = u0
            .values()
            .iter()
            .zip(&values)
            .map(|(u, s)| (eta * (ext - s) * u).abs())
            .fold(0.0, f64::max);
        Ok(Self {
            t: u0.time,
            carry: vec![0.0; u0.len()],
            u: u0,
            scal: ScalField {
                values,
                sup: summary.sup,
                inf: summary.inf,
            },
            dtu_norm,
            stiffness: summary.stiffness,
        })
    }

    /// Stability bound for an explicit step from this state.
    pub fn cfl_bound(&self, manifold: &ModelPhiManifold, grid: &RadialGrid) -> f64 {
        let h = grid.spacing();
        h * h / (2.0 * (manifold.m as f64 - 1.0) * self.stiffness)
    }
}

/// Right-hand side of the flow for the given variant.
pub fn rhs(
    manifold: &ModelPhiManifold,
    grid: &RadialGrid,
    u: &ConformalFactor,
    variant: FlowVariant,
) -> Result<Vec<f64>, FlowError> {
    let scal = scal_of_values(manifold, grid, u.values())?;
    let ext = variant.normalization(scal.inf, scal.sup);
    Ok(u
        .values()
        .iter()
        .zip(&scal.values)
        .map(|(u, s)| manifold.eta * (ext - s) * u)
        .collect())
}

/// Largest stable explicit step for the current factor:
/// `h² / (2 (m-1) max_i u_i^{-1/η} x_i⁴)`.
pub fn cfl_bound(manifold: &ModelPhiManifold, grid: &RadialGrid, u: &[f64]) -> f64 {
    let inv_eta = 1.0 / manifold.eta;
    let coeff = u
        .iter()
        .zip(grid.gxx())
        .map(|(&u, &g)| pow(u, -inv_eta) * g)
        .fold(0.0, f64::max);
    let h = grid.spacing();
    h * h / (2.0 * (manifold.m as f64 - 1.0) * coeff)
}

/// `a + b` as an unevaluated sum `(s, e)` with `s = fl(a + b)`.
#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

/// Reusable midpoint Runge–Kutta integrator for one grid.
///
/// The factor is carried as `u + carry` with compensated updates: late in a
/// converging run the increments `dt ∂t u` fall far below the rounding unit
/// of `u`, and plain accumulation would stall the curvature gap at the
/// rounding floor of the Laplacian.
#[derive(Debug, Clone)]
pub struct Integrator<'a> {
    manifold: &'a ModelPhiManifold,
    grid: &'a RadialGrid,
    variant: FlowVariant,
    kernel: CurvatureKernel,
    stage_hi: Vec<f64>,
    stage_lo: Vec<f64>,
    stage_scal: Vec<f64>,
    slope: Vec<f64>,
}

impl<'a> Integrator<'a> {
    pub fn new(manifold: &'a ModelPhiManifold, grid: &'a RadialGrid, variant: FlowVariant) -> Self {
        let n = grid.len();
        Self {
            manifold,
            grid,
            variant,
            kernel: CurvatureKernel::new(manifold, grid),
            stage_hi: vec![0.0; n],
            stage_lo: vec![0.0; n],
            stage_scal: vec![0.0; n],
            slope: vec![0.0; n],
        }
    }

    pub fn variant(&self) -> FlowVariant {
        self.variant
    }

    /// Advances `state` by `dt` in place.
    pub fn advance(&mut self, state: &mut FlowState, dt: f64) -> Result<(), FlowError> {
        let bound = state.cfl_bound(self.manifold, self.grid);
        if dt > bound {
            return Err(FlowError::StabilityViolation { t: state.t, dt, bound });
        }
        let eta = self.manifold.eta;
        let n = state.u.len();

        // stage 1 reuses the curvature held by the state
        let ext = self.variant.normalization(state.scal.inf, state.scal.sup);
        {
            let u = state.u.values();
            for i in 0..n {
                let k1 = eta * (ext - state.scal.values[i]) * u[i];
                let (hi, lo) = two_sum(u[i], 0.5 * dt * k1 + state.carry[i]);
                self.stage_hi[i] = hi;
                self.stage_lo[i] = lo;
            }
        }
        check_stage(&self.stage_hi, state.t + 0.5 * dt)?;
        let mid = self
            .kernel
            .evaluate(&self.stage_hi, Some(&self.stage_lo), &mut self.stage_scal);
        let ext = self.variant.normalization(mid.inf, mid.sup);
        let mut dtu_norm: f64 = 0.0;
        for i in 0..n {
            let k2 = eta * (ext - self.stage_scal[i]) * self.stage_hi[i];
            self.slope[i] = k2;
            dtu_norm = dtu_norm.max(k2.abs());
        }

        let t_new = state.t + dt;
        let mut values = state.u.take_values();
        for i in 0..n {
            let (hi, lo) = two_sum(values[i], dt * self.slope[i] + state.carry[i]);
            values[i] = hi;
            state.carry[i] = lo;
        }
        if let Err(e) = check_stage(&values, t_new) {
            state.u = ConformalFactor::from_checked(values, state.t);
            return Err(e);
        }
        let summary = self.kernel.evaluate(&values, Some(&state.carry), &mut state.scal.values);
        state.scal.inf = summary.inf;
        state.scal.sup = summary.sup;
        state.stiffness = summary.stiffness;
        state.u = ConformalFactor::from_checked(values, t_new);
        state.t = t_new;
        state.dtu_norm = dtu_norm;
        Ok(())
    }
}

fn check_stage(values: &[f64], t: f64) -> Result<(), FlowError> {
    check_positive(values).map_err(|e| match e {
        ConformalError::NotPositive { index, value } => FlowError::PositivityLost { t, index, value },
        other => other.into(),
    })
}

/// One explicit midpoint Runge–Kutta step.
pub fn step(
    manifold: &ModelPhiManifold,
    grid: &RadialGrid,
    variant: FlowVariant,
    state: &FlowState,
    dt: f64,
) -> Result<FlowState, FlowError> {
    let mut next = state.clone();
    Integrator::new(manifold, grid, variant).advance(&mut next, dt)?;
    Ok(next)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub t: f64,
    pub s_sup: f64,
    pub s_inf: f64,
    pub gap: f64,
    pub u_min: f64,
    pub u_max: f64,
    pub dtu_norm: f64,
}

impl TraceRecord {
    pub fn of(state: &FlowState) -> Self {
        Self {
            t: state.t,
            s_sup: state.scal.sup,
            s_inf: state.scal.inf,
            gap: state.scal.sup - state.scal.inf,
            u_min: state.u.min(),
            u_max: state.u.max(),
            dtu_norm: state.dtu_norm,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub t: f64,
    pub u: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowTrace {
    pub variant: FlowVariant,
    pub records: Vec<TraceRecord>,
    pub snapshots: Vec<Snapshot>,
    /// A-priori envelope `(c1, c2)` computed from the initial factor.
    pub bounds: (f64, f64),
    pub steps: usize,
    pub final_state: FlowState,
}

impl FlowTrace {
    pub fn initial(&self) -> &TraceRecord {
        &self.records[0]
    }

    pub fn last(&self) -> &TraceRecord {
        self.records.last().expect("trace always holds the initial record")
    }

    /// Largest increase of `S_sup` between consecutive records (≤ 0 when monotone).
    pub fn max_sup_increase(&self) -> f64 {
        self.records
            .windows(2)
            .map(|w| w[1].s_sup - w[0].s_sup)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Largest decrease of `S_inf` between consecutive records (≤ 0 when monotone).
    pub fn max_inf_decrease(&self) -> f64 {
        self.records
            .windows(2)
            .map(|w| w[0].s_inf - w[1].s_inf)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Integrates from `u0` to `config.t_end` with `dt = cfl_safety · cfl_bound`.
pub fn run_flow(
    manifold: &ModelPhiManifold,
    grid: &RadialGrid,
    config: &FlowConfig,
    u0: ConformalFactor,
) -> Result<FlowTrace, FlowError> {
    config.validate()?;
    let bounds = apriori_bounds(manifold, &u0);
    let mut state = FlowState::initial(manifold, grid, config.variant, u0)?;
    let t_end = state.t + config.t_end;
    let mut integrator = Integrator::new(manifold, grid, config.variant);

    let mut records = vec![TraceRecord::of(&state)];
    let mut snapshots = vec![Snapshot {
        t: state.t,
        u: state.u.values().to_vec(),
    }];
    let mut steps = 0usize;
    while t_end - state.t > config.tol_step {
        let bound = state.cfl_bound(manifold, grid);
        let mut dt = config.cfl_safety * bound;
        let remaining = t_end - state.t;
        if dt >= remaining || remaining - dt < config.tol_step {
            dt = remaining.min(bound);
        }
        integrator.advance(&mut state, dt)?;
        steps += 1;
        let done = t_end - state.t <= config.tol_step;
        if steps % config.record_every == 0 || done {
            records.push(TraceRecord::of(&state));
            if (records.len() - 1) % config.snapshot_every == 0 || done {
                snapshots.push(Snapshot {
                    t: state.t,
                    u: state.u.values().to_vec(),
                });
            }
        }
    }
    Ok(FlowTrace {
        variant: config.variant,
        records,
        snapshots,
        bounds,
        steps,
        final_state: state,
    })
}

/// T-independent envelope `c1 ≤ u ≤ c2` along the normalized flows:
///
/// ```text
/// c1 = min(u0_min^{1/η}, a2/a1)^η,   c2 = (u0_max^{1/η} + a1/a2)^η
/// ```
///
/// `a1`, `a2` are the curvature bounds of `g_Φ`, so the envelope applies to
/// initial data whose curvature stays in `[-a1, -a2]` (e.g. `u0 ≡ 1`).
pub fn apriori_bounds(manifold: &ModelPhiManifold, u0: &ConformalFactor) -> (f64, f64) {
    let eta = manifold.eta;
    let inv_eta = 1.0 / eta;
    let ratio = manifold.a2 / manifold.a1;
    let c1 = u0.min().powf(inv_eta).min(ratio).powf(eta);
    let c2 = (u0.max().powf(inv_eta) + 1.0 / ratio).powf(eta);
    (c1, c2)
}

/// Residual of the curvature evolution equation
/// `∂t S = (m-1) Δ_g S + S (S - S_ext)` at one interior snapshot time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvolutionResidual {
    pub t: f64,
    pub max_residual: f64,
}

/// Compares a centered time difference of `scal(u)` across snapshots with the
/// right-hand side of the curvature evolution equation.
pub fn evolve_scal_check(
    manifold: &ModelPhiManifold,
    grid: &RadialGrid,
    trace: &FlowTrace,
) -> Result<Vec<EvolutionResidual>, FlowError> {
    let snaps = &trace.snapshots;
    if snaps.len() < 3 {
        return Err(FlowError::InsufficientSnapshots(snaps.len()));
    }
    let scal: Vec<ScalField> = snaps
        .iter()
        .map(|s| scal_of_values(manifold, grid, &s.u))
        .collect::<Result<_, _>>()?;
    let m1 = manifold.m as f64 - 1.0;
    let mut out = Vec::with_capacity(snaps.len() - 2);
    for k in 1..snaps.len() - 1 {
        let h1 = snaps[k].t - snaps[k - 1].t;
        let h2 = snaps[k + 1].t - snaps[k].t;
        let (wa, wb, wc) = (
            -h2 / (h1 * (h1 + h2)),
            (h2 - h1) / (h1 * h2),
            h1 / (h2 * (h1 + h2)),
        );
        let s = &scal[k];
        let ext = trace.variant.normalization(s.inf, s.sup);
        let lap = conformal_laplacian_of_values(manifold, grid, &snaps[k].u, &s.values)?;
        let max_residual = (0..grid.len())
            .map(|i| {
                let dsdt = wa * scal[k - 1].values[i] + wb * s.values[i] + wc * scal[k + 1].values[i];
                let si = s.values[i];
                (dsdt - (m1 * lap[i] + si * (si - ext))).abs()
            })
            .fold(0.0, f64::max);
        out.push(EvolutionResidual {
            t: snaps[k].t,
            max_residual,
        });
    }
    Ok(out)
}

/// Exponential model `gap(t) ≈ C e^{rate t}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapFit {
    pub c: f64,
    pub rate: f64,
    pub samples: usize,
}

pub const GAP_FLOOR: f64 = 1e-14;

/// Least-squares fit of `ln gap` against `t` over records in `[t_lo, t_hi]`.
pub fn fit_gap_rate(records: &[TraceRecord], t_lo: f64, t_hi: f64) -> Result<GapFit, FlowError> {
    let window: Vec<&TraceRecord> = records.iter().filter(|r| r.t >= t_lo && r.t <= t_hi).collect();
    if let Some(r) = window.iter().find(|r| !(r.gap > GAP_FLOOR)) {
        return Err(FlowError::GapUnderflow { t: r.t, gap: r.gap });
    }
    if window.len() < 5 {
        return Err(FlowError::InsufficientRecords {
            t_lo,
            t_hi,
            count: window.len(),
        });
    }
    let n = window.len() as f64;
    let mean_t = window.iter().map(|r| r.t).sum::<f64>() / n;
    let mean_y = window.iter().map(|r| r.gap.ln()).sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for r in &window {
        let dt = r.t - mean_t;
        sxy += dt * (r.gap.ln() - mean_y);
        sxx += dt * dt;
    }
    let rate = sxy / sxx;
    Ok(GapFit {
        c: (mean_y - rate * mean_t).exp(),
        rate,
        samples: window.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub t: f64,
    pub converged: bool,
    /// Midpoint of the final curvature bracket.
    pub s_star: f64,
    pub s_sup: f64,
    pub s_inf: f64,
    /// `(S_sup - S_inf) / |S_sup|`
    pub relative_variation: f64,
    pub dtu_norm: f64,
    pub negative: bool,
    pub within_initial_bracket: bool,
    pub initial_bracket: (f64, f64),
    /// `max_i |yamabe_residual(u, S*)_i|`
    pub residual_sup: f64,
}

/// Convergence test against the constant-curvature limit.
///
/// `initial_bracket` is `(S_inf(0), S_sup(0))`.
pub fn detect_convergence(
    manifold: &ModelPhiManifold,
    grid: &RadialGrid,
    state: &FlowState,
    initial_bracket: (f64, f64),
    tol: f64,
) -> ConvergenceReport {
    let (s_inf, s_sup) = (state.scal.inf, state.scal.sup);
    let gap = s_sup - s_inf;
    let s_star = 0.5 * (s_sup + s_inf);
    let relative_variation = gap / s_sup.abs();
    let residual_sup = yamabe_residual(manifold, grid, &state.u, s_star)
        .iter()
        .fold(0.0_f64, |a, r| a.max(r.abs()));
    let (lo, hi) = initial_bracket;
    let slack = 1e-12 * lo.abs().max(hi.abs());
    ConvergenceReport {
        t: state.t,
        converged: gap <= tol * s_sup.abs() && state.dtu_norm <= tol,
        s_star,
        s_sup,
        s_inf,
        relative_variation,
        dtu_norm: state.dtu_norm,
        negative: s_star < 0.0,
        within_initial_bracket: s_star >= lo - slack && s_star <= hi + slack,
        initial_bracket,
        residual_sup,
    }
}
