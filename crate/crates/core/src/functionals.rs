//! Normalisation ratio θ, Orlicz volume V_φ, entropy J_φ and the
//! Monge–Ampère residual.
//!
//! Integrals over ray directions are evaluated on the normal grid through the
//! pushforward weight `w = u det b / r^{n+1}`.

use crate::error::Result;
use crate::geometry::BodyState;
use crate::orlicz::{CapitalPhi, DensityField, PhiSpec};
use crate::sphere::ScalarField;

/// φ, its primitive and the sampled density for one grid.
#[derive(Clone, Debug)]
pub struct Problem {
    pub phi: PhiSpec,
    pub capital: CapitalPhi,
    pub density: DensityField,
}

impl Problem {
    pub fn new(phi: PhiSpec, base_point: Option<f64>, density: DensityField) -> Result<Self> {
        let capital = CapitalPhi::new(&phi, base_point)?;
        Ok(Self {
            phi,
            capital,
            density,
        })
    }
}

/// Functionals of one state.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FunctionalSnapshot {
    pub t: f64,
    pub theta: f64,
    pub v_phi: f64,
    pub j_phi: f64,
    pub residual_sup: f64,
    pub residual_l2: f64,
    pub lambda_est: f64,
}

/// Per-node residual with its norms.
#[derive(Clone, Debug)]
pub struct Residual {
    pub field: ScalarField,
    pub sup: f64,
    pub l2: f64,
}

fn check_radii(state: &BodyState, phi: &PhiSpec) -> Result<()> {
    for &r in state.r().iter() {
        phi.check_domain(r)?;
    }
    Ok(())
}

/// `Σ ωᵢ g(rᵢ) wᵢ`, the ray integral of `g ∘ r`.
fn ray_integral(state: &BodyState, g: impl Fn(f64) -> f64) -> f64 {
    let grid = state.grid();
    let n1 = state.dim() as i32 + 1;
    let (u, r) = (state.u(), state.r());
    let mut acc = 0.0;
    for (i, w) in grid.weights().iter().enumerate() {
        acc += w * g(r[i]) * u[i] * state.det_b(i) / r[i].powi(n1);
    }
    acc
}

/// `θ = ∫ φ(r) dξ / ∫ f dx`.
pub fn theta(state: &BodyState, problem: &Problem) -> Result<f64> {
    state.require_convex()?;
    check_radii(state, &problem.phi)?;
    Ok(ray_integral(state, |s| problem.phi.eval(s)) / problem.density.integral)
}

/// `V_φ = ∫ Φ(r) dξ`, carrying the base-point offset when Φ is anchored away from 0.
pub fn v_phi(state: &BodyState, capital: &CapitalPhi, phi: &PhiSpec) -> Result<f64> {
    state.require_convex()?;
    check_radii(state, phi)?;
    Ok(ray_integral(state, |s| capital.eval_unchecked(s)))
}

/// `J_φ = ∫ log u · f dx`.
pub fn j_phi(state: &BodyState, density: &DensityField) -> f64 {
    let grid = state.grid();
    let u = state.u();
    let mut acc = 0.0;
    for (i, w) in grid.weights().iter().enumerate() {
        acc += w * u[i].ln() * density.values[i];
    }
    acc
}

/// `R = u φ(r) det b / r^{n+1} − λ f`.
pub fn ma_residual(state: &BodyState, problem: &Problem, lambda: f64) -> Result<Residual> {
    state.require_convex()?;
    check_radii(state, &problem.phi)?;
    let grid = state.grid();
    let n1 = state.dim() as i32 + 1;
    let (u, r) = (state.u(), state.r());
    let f = &problem.density.values;
    let field: Vec<f64> = (0..grid.len())
        .map(|i| u[i] * problem.phi.eval(r[i]) * state.det_b(i) / r[i].powi(n1) - lambda * f[i])
        .collect();
    let sup = field.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let sq: Vec<f64> = field.iter().map(|v| v * v).collect();
    let l2 = grid.weighted_sum(&sq).sqrt();
    Ok(Residual {
        field: field.into(),
        sup,
        l2,
    })
}

/// All functionals at flow time `t`, with λ taken as the current θ.
pub fn snapshot(state: &BodyState, problem: &Problem, t: f64) -> Result<FunctionalSnapshot> {
    let theta = theta(state, problem)?;
    let res = ma_residual(state, problem, theta)?;
    Ok(FunctionalSnapshot {
        t,
        theta,
        v_phi: v_phi(state, &problem.capital, &problem.phi)?,
        j_phi: j_phi(state, &problem.density),
        residual_sup: res.sup,
        residual_l2: res.l2,
        lambda_est: theta,
    })
}
