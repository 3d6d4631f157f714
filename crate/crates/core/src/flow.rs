//! Explicit integration of the normalised flow
//!
//! ```text
//!     ∂u/∂t = −θ(t) f r^{n+1} K / φ(r) + u
//! ```
//!
//! with midpoint Runge–Kutta steps, step rejection on loss of convexity,
//! positivity or entropy decrease, adaptive step size, runtime monitors and a
//! residual-based stopping rule.

use std::collections::VecDeque;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functionals::{self, FunctionalSnapshot, Problem};
use crate::geometry::{assemble_state, BodyState};
use crate::harmonics::HarmonicSeries;
use crate::orlicz::{self, CaseIIReport, CaseIReport, DensitySpec, PhiSpec};
use crate::sphere::{Resolution, ScalarField, SphereGrid};

/// Hypothesis regime.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Case {
    /// Decreasing-type φ, arbitrary density.
    I,
    /// Φ finite at 0, even density and origin-symmetric initial body.
    II,
}

impl fmt::Display for Case {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Case::I => "i",
            Case::II => "ii",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum InitialBody {
    Sphere { radius: f64 },
    /// `u = √(Σ aᵢ² xᵢ²)`; the third axis is unused on S¹.
    Ellipsoid { axes: [f64; 3] },
    Harmonic(HarmonicSeries),
    /// One support value per node.
    Tabulated(Vec<f64>),
}

impl InitialBody {
    pub fn sample(&self, grid: &SphereGrid) -> Result<ScalarField> {
        match self {
            InitialBody::Sphere { radius } => {
                if !(radius.is_finite() && *radius > 0.0) {
                    return Err(Error::InvalidSpec(format!("sphere radius {radius} must be positive")));
                }
                Ok(ScalarField::constant(grid, *radius))
            }
            InitialBody::Ellipsoid { axes } => {
                let used = &axes[..grid.dim() + 1];
                if !used.iter().all(|a| a.is_finite() && *a > 0.0) {
                    return Err(Error::InvalidSpec(format!("ellipsoid axes {used:?} must be positive")));
                }
                Ok(ScalarField::from_fn(grid, |x| {
                    (0..3).map(|k| (axes[k] * x[k]).powi(2)).sum::<f64>().sqrt()
                }))
            }
            InitialBody::Harmonic(s) => {
                s.validate(grid.dim())?;
                Ok(ScalarField::from_fn(grid, |x| s.eval(x)))
            }
            InitialBody::Tabulated(v) => {
                grid.check_len(v.len())?;
                Ok(ScalarField::new(v.clone()))
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct FlowConfig {
    pub resolution: Resolution,
    pub phi: PhiSpec,
    /// Anchor of Φ when `∫₀ φ(s)/s ds` diverges.
    pub base_point: Option<f64>,
    pub density: DensitySpec,
    pub initial: InitialBody,
    pub case: Case,
    /// Defaults to `0.1 h² ρ₀`, `ρ₀` the mean initial support value.
    pub dt0: Option<f64>,
    pub dt_min: f64,
    pub dt_max: f64,
    /// Step growth after three consecutive acceptances.
    pub growth: f64,
    /// Coefficient of the curvature-based step ceiling.
    pub c_cfl: f64,
    pub tol_stop: f64,
    pub tol_theta: f64,
    /// Number of accepted steps over which the θ drift is measured.
    pub theta_window: usize,
    pub max_steps: usize,
    /// Monitors may not leave `[initial / factor, initial · factor]`.
    pub guard_factor: f64,
    pub seed: u64,
}

impl FlowConfig {
    pub fn new(
        resolution: Resolution,
        phi: PhiSpec,
        density: DensitySpec,
        initial: InitialBody,
        case: Case,
    ) -> Self {
        Self {
            resolution,
            phi,
            base_point: None,
            density,
            initial,
            case,
            dt0: None,
            dt_min: 1e-14,
            dt_max: 1.0,
            growth: 1.25,
            c_cfl: 0.4,
            tol_stop: 1e-8,
            tol_theta: 1e-10,
            theta_window: 1,
            max_steps: 1_000_000,
            guard_factor: 10.0,
            seed: 0,
        }
    }

    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate_numbers(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.dt_min > 0.0 && self.dt_min <= self.dt_max && self.dt_max.is_finite()) {
            return bad("need 0 < dt_min <= dt_max");
        }
        if let Some(dt0) = self.dt0 {
            if !(dt0 >= self.dt_min && dt0 <= self.dt_max) {
                return bad("need dt_min <= dt0 <= dt_max");
            }
        }
        if !(self.tol_stop > 0.0 && self.tol_theta > 0.0) {
            return bad("tolerances must be positive");
        }
        if !(self.growth >= 1.0 && self.growth.is_finite()) {
            return bad("growth factor must be at least 1");
        }
        if !(self.c_cfl > 0.0 && self.c_cfl.is_finite()) {
            return bad("c_cfl must be positive");
        }
        if self.theta_window == 0 {
            return bad("theta_window must be at least 1");
        }
        if !(self.guard_factor > 1.0) {
            return bad("guard_factor must exceed 1");
        }
        Ok(())
    }
}

/// Why a trial step was refused.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum RejectReason {
    Convexity,
    NonPositive,
    EntropyIncrease,
    NonFinite,
    Domain,
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RejectReason::Convexity => "convexity lost",
            RejectReason::NonPositive => "origin not interior",
            RejectReason::EntropyIncrease => "entropy increased",
            RejectReason::NonFinite => "non-finite value",
            RejectReason::Domain => "radius outside the φ domain",
        })
    }
}

impl RejectReason {
    fn from_error(e: &Error) -> Option<Self> {
        match e {
            Error::NotConvex { .. } => Some(RejectReason::Convexity),
            Error::OriginNotInterior { .. } => Some(RejectReason::NonPositive),
            Error::NonFinite { .. } => Some(RejectReason::NonFinite),
            Error::OutsideDomain { .. } => Some(RejectReason::Domain),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct RejectionCounts {
    pub convexity: usize,
    pub non_positive: usize,
    pub entropy_increase: usize,
    pub non_finite: usize,
    pub domain: usize,
}

impl RejectionCounts {
    fn record(&mut self, r: RejectReason) {
        match r {
            RejectReason::Convexity => self.convexity += 1,
            RejectReason::NonPositive => self.non_positive += 1,
            RejectReason::EntropyIncrease => self.entropy_increase += 1,
            RejectReason::NonFinite => self.non_finite += 1,
            RejectReason::Domain => self.domain += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.convexity + self.non_positive + self.entropy_increase + self.non_finite + self.domain
    }
}

/// `−θ f r^{n+1} K / φ(r) + u` on the state, together with the θ used.
pub fn rhs(state: &BodyState, problem: &Problem) -> Result<(ScalarField, f64)> {
    let theta = functionals::theta(state, problem)?;
    let n1 = state.dim() as i32 + 1;
    let (u, r) = (state.u(), state.r());
    let f = &problem.density.values;
    let v: Vec<f64> = (0..u.len())
        .map(|i| -theta * f[i] * r[i].powi(n1) / (problem.phi.eval(r[i]) * state.det_b(i)) + u[i])
        .collect();
    Ok((v.into(), theta))
}

/// Largest step allowed by the parabolic ceiling
/// `c · h² · min φ(r) λ_min(b) / (θ f r^{n+1} K)`.
pub fn step_ceiling(state: &BodyState, problem: &Problem, theta: f64, c_cfl: f64) -> f64 {
    let n1 = state.dim() as i32 + 1;
    let (r, lo) = (state.r(), state.min_eig_b());
    let f = &problem.density.values;
    let h2 = state.grid().stability_h2();
    let mut m = f64::INFINITY;
    for i in 0..r.len() {
        let inv_rate = problem.phi.eval(r[i]) * state.det_b(i) * lo[i] / (theta * f[i] * r[i].powi(n1));
        m = m.min(inv_rate);
    }
    c_cfl * h2 * m
}

/// Result of one trial step.
#[derive(Clone, Debug)]
#[allow(clippy::large_enum_variant)]
pub enum StepAttempt {
    Accepted { state: BodyState, j_phi: f64 },
    Rejected(RejectReason),
}

#[allow(clippy::neg_cmp_op_on_partial_ord)]
fn admissible(state: &BodyState, problem: &Problem) -> Option<RejectReason> {
    let eps = 1e-8 * state.max_eig_b().max();
    if !(state.min_eig_b().min() > eps) {
        return Some(RejectReason::Convexity);
    }
    if state.r().iter().any(|&s| !problem.phi.in_domain(s)) {
        return Some(RejectReason::Domain);
    }
    if state.gauss_k().iter().chain(state.r().iter()).any(|v| !v.is_finite()) {
        return Some(RejectReason::NonFinite);
    }
    None
}

fn assemble_checked(
    grid: &Arc<SphereGrid>,
    u: Vec<f64>,
    problem: &Problem,
) -> Result<std::result::Result<BodyState, RejectReason>> {
    match assemble_state(grid.clone(), u.into()) {
        Ok(s) => Ok(match admissible(&s, problem) {
            Some(r) => Err(r),
            None => Ok(s),
        }),
        Err(e) => match RejectReason::from_error(&e) {
            Some(r) => Ok(Err(r)),
            None => Err(e),
        },
    }
}

/// One explicit midpoint step of size `dt`, θ re-evaluated at the midpoint.
///
/// `j_prev` is the entropy of `state`; the step is refused if the entropy
/// grows by more than `1e-10 · max(1, |J|)`.
pub fn midpoint_step(
    state: &BodyState,
    problem: &Problem,
    dt: f64,
    j_prev: f64,
) -> Result<StepAttempt> {
    let grid = state.grid();
    let k1 = match rhs(state, problem) {
        Ok((k, _)) => k,
        Err(e) => {
            return RejectReason::from_error(&e)
                .map(StepAttempt::Rejected)
                .ok_or(e)
        }
    };
    let u = state.u();
    let half: Vec<f64> = (0..u.len()).map(|i| u[i] + 0.5 * dt * k1[i]).collect();
    let mid = match assemble_checked(grid, half, problem)? {
        Ok(s) => s,
        Err(r) => return Ok(StepAttempt::Rejected(r)),
    };
    let k2 = match rhs(&mid, problem) {
        Ok((k, _)) => k,
        Err(e) => {
            return RejectReason::from_error(&e)
                .map(StepAttempt::Rejected)
                .ok_or(e)
        }
    };
    let next: Vec<f64> = (0..u.len()).map(|i| u[i] + dt * k2[i]).collect();
    let new = match assemble_checked(grid, next, problem)? {
        Ok(s) => s,
        Err(r) => return Ok(StepAttempt::Rejected(r)),
    };
    let j = functionals::j_phi(&new, &problem.density);
    if !j.is_finite() {
        return Ok(StepAttempt::Rejected(RejectReason::NonFinite));
    }
    if j - j_prev > 1e-10 * j_prev.abs().max(1.0) {
        return Ok(StepAttempt::Rejected(RejectReason::EntropyIncrease));
    }
    Ok(StepAttempt::Accepted { state: new, j_phi: j })
}

/// Monitored quantities of one accepted state.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub t: f64,
    /// Step that produced this state (0 for the initial state).
    pub dt: f64,
    pub snapshot: FunctionalSnapshot,
    pub u_min: f64,
    pub u_max: f64,
    pub grad_ratio_max: f64,
    pub k_max: f64,
    pub min_eig_b_min: f64,
    pub max_eig_b_max: f64,
    /// Trial steps refused since the previous accepted state.
    pub rejected: usize,
    /// `sup |u(x) − u(−x)|`.
    pub odd_part: f64,
}

impl StepRecord {
    fn new(step: usize, t: f64, dt: f64, snapshot: FunctionalSnapshot, s: &BodyState, rejected: usize) -> Self {
        Self {
            step,
            t,
            dt,
            snapshot,
            u_min: s.u().min(),
            u_max: s.u().max(),
            grad_ratio_max: s.grad_ratio_max(),
            k_max: s.gauss_k().max(),
            min_eig_b_min: s.min_eig_b().min(),
            max_eig_b_max: s.max_eig_b().max(),
            rejected,
            odd_part: s.odd_part_sup(),
        }
    }
}

/// Bounds derived from the initial state.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GuardRails {
    pub theta: (f64, f64),
    pub u_min_floor: f64,
    pub u_max_ceiling: f64,
    pub grad_ratio_ceiling: f64,
    pub k_max_ceiling: f64,
    pub max_eig_b_ceiling: f64,
}

impl GuardRails {
    fn from_initial(rec: &StepRecord, factor: f64) -> Self {
        let th = rec.snapshot.theta;
        Self {
            theta: (th / factor, th * factor),
            u_min_floor: rec.u_min / factor,
            u_max_ceiling: rec.u_max * factor,
            grad_ratio_ceiling: factor * rec.grad_ratio_max.max(0.1),
            k_max_ceiling: factor * rec.k_max,
            max_eig_b_ceiling: factor * rec.max_eig_b_max,
        }
    }

    /// Name of the first violated monitor.
    pub fn violation(&self, rec: &StepRecord) -> Option<String> {
        let th = rec.snapshot.theta;
        if !(th >= self.theta.0 && th <= self.theta.1) {
            return Some(format!("theta = {th:e} left [{:e}, {:e}]", self.theta.0, self.theta.1));
        }
        if rec.u_min < self.u_min_floor {
            return Some(format!("u_min = {:e} below {:e}", rec.u_min, self.u_min_floor));
        }
        if rec.u_max > self.u_max_ceiling {
            return Some(format!("u_max = {:e} above {:e}", rec.u_max, self.u_max_ceiling));
        }
        if rec.grad_ratio_max > self.grad_ratio_ceiling {
            return Some(format!(
                "|Du|/u = {:e} above {:e}",
                rec.grad_ratio_max, self.grad_ratio_ceiling
            ));
        }
        if rec.k_max > self.k_max_ceiling {
            return Some(format!("K_max = {:e} above {:e}", rec.k_max, self.k_max_ceiling));
        }
        if rec.max_eig_b_max > self.max_eig_b_ceiling {
            return Some(format!(
                "largest principal radius {:e} above {:e}",
                rec.max_eig_b_max, self.max_eig_b_ceiling
            ));
        }
        None
    }
}

/// Hypothesis checks performed before stepping.
#[derive(Clone, Debug, PartialEq)]
pub struct HypothesisReport {
    pub case: Case,
    pub case_i: CaseIReport,
    pub case_ii: CaseIIReport,
    /// `sup |u₀(x) − u₀(−x)|`.
    pub initial_odd_part: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowStatus {
    Converged,
    MaxSteps,
    GuardTripped,
}

impl fmt::Display for FlowStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FlowStatus::Converged => "converged",
            FlowStatus::MaxSteps => "max_steps",
            FlowStatus::GuardTripped => "guard_tripped",
        })
    }
}

#[derive(Clone, Debug)]
pub struct FlowResult {
    pub status: FlowStatus,
    /// θ of the final state.
    pub lambda0: f64,
    pub state: BodyState,
    pub steps: usize,
    pub t: f64,
    pub diagnostics: Vec<StepRecord>,
    pub rejections: RejectionCounts,
    /// Trial steps attempted, accepted or not.
    pub attempts: usize,
    pub guard_reason: Option<String>,
    pub guards: GuardRails,
    pub hypothesis: HypothesisReport,
    /// `max_t |V(t) − V(0)| / max(|V(0)|, 1)`.
    pub v_drift: f64,
}

/// Outcome of [`Flow::advance`].
#[derive(Clone, Debug)]
pub enum Advance {
    Accepted(StepRecord),
    /// The step was accepted but a monitor left its guard rail.
    GuardTripped { record: StepRecord, reason: String },
    /// Rejections drove the step below `dt_min`.
    Stalled { reason: String },
}

/// Checks the hypotheses of the configured case on an already sampled body.
pub fn check_hypotheses(config: &FlowConfig, grid: &SphereGrid, u0: &[f64]) -> Result<HypothesisReport> {
    let case_i = orlicz::check_case_i(&config.phi);
    let case_ii = orlicz::check_case_ii(&config.phi, &config.density);
    let initial_odd_part = orlicz::odd_part_sup(grid, u0);
    match config.case {
        Case::I if !case_i.pass => {
            return Err(Error::Hypothesis(format!(
                "case (i) hypothesis failed: sup sφ'/φ = {}",
                case_i.sup
            )))
        }
        Case::II if !case_ii.phi_integrable_at_zero => {
            return Err(Error::Hypothesis(format!(
                "case (ii) hypothesis failed: Φ is not finite at 0 for φ = {}",
                config.phi
            )))
        }
        Case::II if !case_ii.density_even => {
            return Err(Error::Hypothesis(
                "case (ii) hypothesis failed: density is not declared even".into(),
            ))
        }
        Case::II if initial_odd_part > 1e-12 => {
            return Err(Error::Hypothesis(format!(
                "case (ii) hypothesis failed: initial body is not origin-symmetric (odd part {initial_odd_part:e})"
            )))
        }
        _ => {}
    }
    Ok(HypothesisReport {
        case: config.case,
        case_i,
        case_ii,
        initial_odd_part,
    })
}

/// Running flow.
pub struct Flow {
    config: FlowConfig,
    grid: Arc<SphereGrid>,
    problem: Problem,
    state: BodyState,
    record: StepRecord,
    initial: StepRecord,
    dt: f64,
    streak: usize,
    thetas: VecDeque<f64>,
    rejections: RejectionCounts,
    attempts: usize,
    guards: GuardRails,
    hypothesis: HypothesisReport,
}

impl Flow {
    /// Validates the configuration and hypotheses and assembles the initial state.
    pub fn new(config: FlowConfig) -> Result<Self> {
        config.validate_numbers()?;
        let grid = Arc::new(SphereGrid::new(config.resolution.dim(), config.resolution)?);
        let density = config.density.sample(&grid)?;
        let u0 = config.initial.sample(&grid)?;
        let hypothesis = check_hypotheses(&config, &grid, &u0)?;
        let problem = Problem::new(config.phi.clone(), config.base_point, density)?;
        let state = assemble_state(grid.clone(), u0)?;
        state.require_convex()?;
        let snapshot = functionals::snapshot(&state, &problem, 0.0)?;
        let record = StepRecord::new(0, 0.0, 0.0, snapshot, &state, 0);
        let h = grid.spacing();
        let rho0 = state.u().iter().sum::<f64>() / state.u().len() as f64;
        let dt = config
            .dt0
            .unwrap_or(0.1 * h * h * rho0)
            .clamp(config.dt_min, config.dt_max);
        let guards = GuardRails::from_initial(&record, config.guard_factor);
        let mut thetas = VecDeque::with_capacity(config.theta_window + 1);
        thetas.push_back(snapshot.theta);
        Ok(Self {
            config,
            grid,
            problem,
            state,
            record,
            initial: record,
            dt,
            streak: 0,
            thetas,
            rejections: RejectionCounts::default(),
            attempts: 0,
            guards,
            hypothesis,
        })
    }

    pub fn grid(&self) -> &Arc<SphereGrid> {
        &self.grid
    }

    pub fn problem(&self) -> &Problem {
        &self.problem
    }

    pub fn state(&self) -> &BodyState {
        &self.state
    }

    pub fn record(&self) -> &StepRecord {
        &self.record
    }

    pub fn initial(&self) -> &StepRecord {
        &self.initial
    }

    pub fn rejections(&self) -> &RejectionCounts {
        &self.rejections
    }

    /// Trial steps attempted so far.
    pub fn attempts(&self) -> usize {
        self.attempts
    }

    pub fn hypothesis(&self) -> &HypothesisReport {
        &self.hypothesis
    }

    /// Stopping rule: small residual and stationary θ over the window.
    pub fn converged(&self) -> bool {
        let w = self.config.theta_window;
        self.record.snapshot.residual_sup <= self.config.tol_stop
            && self.thetas.len() > w
            && (self.thetas[self.thetas.len() - 1] - self.thetas[self.thetas.len() - 1 - w]).abs()
                <= self.config.tol_theta
    }

    /// Takes one accepted step, retrying with halved `dt` after rejections.
    pub fn advance(&mut self) -> Result<Advance> {
        let mut rejected = 0;
        loop {
            let ceiling = step_ceiling(
                &self.state,
                &self.problem,
                self.record.snapshot.theta,
                self.config.c_cfl,
            );
            let dt = self.dt.min(ceiling).min(self.config.dt_max).max(self.config.dt_min);
            self.attempts += 1;
            match midpoint_step(&self.state, &self.problem, dt, self.record.snapshot.j_phi)? {
                StepAttempt::Accepted { state, .. } => {
                    let t = self.record.t + dt;
                    let snapshot = match functionals::snapshot(&state, &self.problem, t) {
                        Ok(s) => s,
                        Err(e) => match RejectReason::from_error(&e) {
                            Some(reason) => {
                                if let Some(adv) = self.reject(reason, dt, &mut rejected) {
                                    return Ok(adv);
                                }
                                continue;
                            }
                            None => return Err(e),
                        },
                    };
                    let record = StepRecord::new(self.record.step + 1, t, dt, snapshot, &state, rejected);
                    self.state = state;
                    self.record = record;
                    self.thetas.push_back(snapshot.theta);
                    if self.thetas.len() > self.config.theta_window + 1 {
                        self.thetas.pop_front();
                    }
                    self.dt = dt;
                    self.streak += 1;
                    if self.streak >= 3 {
                        self.dt = (self.dt * self.config.growth).min(self.config.dt_max);
                        self.streak = 0;
                    }
                    if let Some(reason) = self.guards.violation(&record) {
                        return Ok(Advance::GuardTripped { record, reason });
                    }
                    return Ok(Advance::Accepted(record));
                }
                StepAttempt::Rejected(reason) => {
                    if let Some(adv) = self.reject(reason, dt, &mut rejected) {
                        return Ok(adv);
                    }
                }
            }
        }
    }

    fn reject(&mut self, reason: RejectReason, dt: f64, rejected: &mut usize) -> Option<Advance> {
        self.rejections.record(reason);
        *rejected += 1;
        self.streak = 0;
        if dt <= self.config.dt_min {
            return Some(Advance::Stalled {
                reason: format!("{reason} at dt_min = {:e}", self.config.dt_min),
            });
        }
        self.dt = (0.5 * dt).max(self.config.dt_min);
        None
    }

    /// Steps until convergence, `max_steps`, or a tripped guard, passing every
    /// record (including the initial one) and its state to `observer`.
    pub fn run_with(mut self, mut observer: impl FnMut(&StepRecord, &BodyState)) -> Result<FlowResult> {
        let mut diagnostics = vec![self.record];
        observer(&self.record, &self.state);
        let mut guard_reason = None;
        let status = loop {
            if self.converged() {
                break FlowStatus::Converged;
            }
            if self.record.step >= self.config.max_steps {
                break FlowStatus::MaxSteps;
            }
            match self.advance()? {
                Advance::Accepted(rec) => {
                    observer(&rec, &self.state);
                    diagnostics.push(rec);
                }
                Advance::GuardTripped { record, reason } => {
                    observer(&record, &self.state);
                    diagnostics.push(record);
                    guard_reason = Some(reason);
                    break FlowStatus::GuardTripped;
                }
                Advance::Stalled { reason } => {
                    guard_reason = Some(reason);
                    break FlowStatus::GuardTripped;
                }
            }
        };
        let v0 = self.initial.snapshot.v_phi;
        let scale = v0.abs().max(1.0);
        let v_drift = diagnostics
            .iter()
            .map(|r| (r.snapshot.v_phi - v0).abs() / scale)
            .fold(0.0, f64::max);
        Ok(FlowResult {
            status,
            lambda0: self.record.snapshot.theta,
            steps: self.record.step,
            t: self.record.t,
            state: self.state,
            diagnostics,
            rejections: self.rejections,
            attempts: self.attempts,
            guard_reason,
            guards: self.guards,
            hypothesis: self.hypothesis,
            v_drift,
        })
    }

    pub fn run(self) -> Result<FlowResult> {
        self.run_with(|_, _| {})
    }
}

/// Builds and runs a flow.
pub fn run(config: FlowConfig) -> Result<FlowResult> {
    Flow::new(config)?.run()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn circle_config(n: usize, phi: PhiSpec, f: DensitySpec, u0: InitialBody, case: Case) -> FlowConfig {
        FlowConfig::new(Resolution::Circle(n), phi, f, u0, case)
    }

    fn perturbed(c: f64) -> InitialBody {
        InitialBody::Harmonic(HarmonicSeries::constant(1.0).with_term(2, 2, c))
    }

    #[test]
    fn spheres_are_fixed_points_of_rhs() {
        for (phi, rho) in [(PhiSpec::power(-1.0), 1.0), (PhiSpec::power(2.0), 1.7), (PhiSpec::power(-2.0), 0.6)] {
            let grid = Arc::new(SphereGrid::circle(64).unwrap());
            let density = DensitySpec::constant(1.0).sample(&grid).unwrap();
            let problem = Problem::new(phi, None, density).unwrap();
            let state = assemble_state(grid.clone(), ScalarField::constant(&grid, rho)).unwrap();
            let (v, theta) = rhs(&state, &problem).unwrap();
            assert!(v.iter().all(|x| x.abs() < 1e-13));
            assert!((theta - problem.phi.eval(rho)).abs() < 1e-13);
        }
    }

    #[test]
    fn rhs_of_even_data_is_even() {
        let grid = Arc::new(SphereGrid::circle(128).unwrap());
        let density = DensitySpec::constant(1.0).sample(&grid).unwrap();
        let problem = Problem::new(PhiSpec::power(2.0), None, density).unwrap();
        let u = perturbed(0.1).sample(&grid).unwrap();
        let state = assemble_state(grid.clone(), u).unwrap();
        let (v, _) = rhs(&state, &problem).unwrap();
        assert_eq!(orlicz::odd_part_sup(&grid, &v), 0.0);
    }

    #[test]
    fn unit_sphere_step_is_stationary() {
        let grid = Arc::new(SphereGrid::circle(64).unwrap());
        let density = DensitySpec::constant(1.0).sample(&grid).unwrap();
        let problem = Problem::new(PhiSpec::power(2.0), None, density).unwrap();
        let state = assemble_state(grid.clone(), ScalarField::constant(&grid, 1.0)).unwrap();
        match midpoint_step(&state, &problem, 0.01, 0.0).unwrap() {
            StepAttempt::Accepted { state, .. } => {
                assert!(state.u().iter().all(|v| (v - 1.0).abs() < 1e-14))
            }
            StepAttempt::Rejected(r) => panic!("rejected: {r}"),
        }
    }

    #[test]
    fn nonconvex_state_is_rejected() {
        let grid = Arc::new(SphereGrid::circle(64).unwrap());
        let density = DensitySpec::constant(1.0).sample(&grid).unwrap();
        let problem = Problem::new(PhiSpec::power(2.0), None, density).unwrap();
        let u = ScalarField::from_fn(&grid, |x| 1.0 + 0.8 * (x[0] * x[0] - x[1] * x[1]));
        let state = assemble_state(grid.clone(), u).unwrap();
        match midpoint_step(&state, &problem, 1e-4, 0.0).unwrap() {
            StepAttempt::Rejected(r) => assert_eq!(r.to_string(), "convexity lost"),
            StepAttempt::Accepted { .. } => panic!("accepted a non-convex state"),
        }
    }

    #[test]
    fn entropy_decreases_over_first_steps() {
        let cfg = circle_config(128, PhiSpec::power(2.0), DensitySpec::constant(1.0), perturbed(0.1), Case::II);
        let mut flow = Flow::new(cfg).unwrap();
        let mut j = flow.record().snapshot.j_phi;
        for _ in 0..10 {
            match flow.advance().unwrap() {
                Advance::Accepted(rec) => {
                    assert!(rec.snapshot.j_phi <= j);
                    j = rec.snapshot.j_phi;
                }
                other => panic!("{other:?}"),
            }
        }
    }

    #[test]
    fn unit_sphere_converges_immediately() {
        let mut cfg = circle_config(
            64,
            PhiSpec::power(-1.0),
            DensitySpec::constant(1.0),
            InitialBody::Sphere { radius: 1.0 },
            Case::I,
        );
        cfg.tol_stop = 1e-8;
        let res = run(cfg).unwrap();
        assert_eq!(res.status, FlowStatus::Converged);
        assert_eq!(res.steps, 1);
        assert!((res.lambda0 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn hypothesis_failures_are_configuration_errors() {
        let cfg = circle_config(64, PhiSpec::power(2.0), DensitySpec::constant(1.0), perturbed(0.1), Case::I);
        let err = Flow::new(cfg).err().unwrap().to_string();
        assert_eq!(err, "case (i) hypothesis failed: sup sφ'/φ = 2");

        let odd_f = DensitySpec::harmonic(HarmonicSeries::constant(1.0).with_term(1, 1, 0.2), false);
        let cfg = circle_config(64, PhiSpec::power(2.0), odd_f, perturbed(0.1), Case::II);
        assert!(Flow::new(cfg).is_err());

        let lying = DensitySpec::harmonic(HarmonicSeries::constant(1.0).with_term(1, 1, 0.2), true);
        let cfg = circle_config(64, PhiSpec::power(2.0), lying, perturbed(0.1), Case::II);
        assert!(Flow::new(cfg).is_err());

        let odd_u = InitialBody::Harmonic(HarmonicSeries::constant(1.0).with_term(3, 3, 0.02));
        let cfg = circle_config(64, PhiSpec::power(2.0), DensitySpec::constant(1.0), odd_u, Case::II);
        assert!(Flow::new(cfg).err().unwrap().to_string().contains("origin-symmetric"));
    }

    #[test]
    fn short_run_keeps_evenness_and_volume() {
        let mut cfg = circle_config(128, PhiSpec::power(2.0), DensitySpec::constant(1.0), perturbed(0.1), Case::II);
        cfg.max_steps = 300;
        let res = run(cfg).unwrap();
        assert_eq!(res.status, FlowStatus::MaxSteps);
        assert!(res.diagnostics.iter().all(|r| r.odd_part == 0.0));
        assert!(res.v_drift < 1e-6, "{}", res.v_drift);
    }
}
