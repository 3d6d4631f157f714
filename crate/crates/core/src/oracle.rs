//! Reference solutions on S¹.
//!
//! [`newton_solve`] solves the discrete stationary equation
//!
//! ```text
//!     u φ(r) / r² · (u'' + u) = λ f,     V_φ(u) = V_target
//! ```
//!
//! for `(u, λ)` by damped Newton iteration with an analytic Jacobian, using the
//! same difference operators as the flow. [`ellipse_oracle`] gives closed-form
//! fields of an origin-centred ellipse.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::functionals::Problem;
use crate::geometry::assemble_state;
use crate::sphere::{ScalarField, SphereGrid};

#[derive(Clone, Debug)]
pub struct NewtonProblem {
    pub grid: Arc<SphereGrid>,
    pub problem: Problem,
    pub v_target: f64,
    pub res_tol: f64,
    pub max_iter: usize,
}

#[derive(Clone, Debug)]
pub struct NewtonSolution {
    pub u: ScalarField,
    pub lambda: f64,
    pub iterations: usize,
    /// Sup norm of the residual before each iteration and at the end.
    pub residual_history: Vec<f64>,
}

impl NewtonProblem {
    pub fn new(grid: Arc<SphereGrid>, problem: Problem, v_target: f64) -> Result<Self> {
        if grid.dim() != 1 {
            return Err(Error::Oracle("oracle is n=1 only".into()));
        }
        Ok(Self {
            grid,
            problem,
            v_target,
            res_tol: 1e-12,
            max_iter: 100,
        })
    }
}

/// Pointwise quantities shared by the residual and the Jacobian.
struct Local {
    p: Vec<f64>,
    b: Vec<f64>,
    r: Vec<f64>,
}

fn local(grid: &SphereGrid, u: &[f64]) -> Result<Local> {
    let (du, hess) = grid.derivatives(u)?;
    let p: Vec<f64> = du.iter().map(|g| g[0]).collect();
    let b: Vec<f64> = hess.iter().zip(u).map(|(h, u)| h.xx + u).collect();
    let r = u.iter().zip(&p).map(|(u, p)| (u * u + p * p).sqrt()).collect();
    Ok(Local { p, b, r })
}

/// Residual `G(u, λ)` of length `N + 1`.
pub fn residual(np: &NewtonProblem, u: &[f64], lambda: f64) -> Result<Vec<f64>> {
    let l = local(&np.grid, u)?;
    let phi = &np.problem.phi;
    let f = &np.problem.density.values;
    let mut g = Vec::with_capacity(u.len() + 1);
    let mut v = 0.0;
    for i in 0..u.len() {
        let r2 = l.r[i] * l.r[i];
        g.push(u[i] * phi.eval(l.r[i]) * l.b[i] / r2 - lambda * f[i]);
        v += np.grid.weights()[i] * np.problem.capital.eval_unchecked(l.r[i]) * u[i] * l.b[i] / r2;
    }
    g.push(v - np.v_target);
    Ok(g)
}

/// Columns of the first and second difference operators.
fn difference_matrices(grid: &SphereGrid) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = grid.len();
    let mut a = DMatrix::zeros(n, n);
    let mut bm = DMatrix::zeros(n, n);
    let mut e = vec![0.0; n];
    for k in 0..n {
        e[k] = 1.0;
        let (du, hess) = grid.derivatives(&e)?;
        for i in 0..n {
            a[(i, k)] = du[i][0];
            bm[(i, k)] = hess[i].xx;
        }
        e[k] = 0.0;
    }
    Ok((a, bm))
}

/// Analytic Jacobian of [`residual`] with respect to `(u, λ)`.
pub fn jacobian(np: &NewtonProblem, u: &[f64]) -> Result<DMatrix<f64>> {
    let n = u.len();
    let l = local(&np.grid, u)?;
    let (a, bm) = difference_matrices(&np.grid)?;
    let phi = &np.problem.phi;
    let cap = &np.problem.capital;
    let w = np.grid.weights();
    let f = &np.problem.density.values;
    let mut jac = DMatrix::zeros(n + 1, n + 1);
    for i in 0..n {
        let (ui, bi, ri, pi) = (u[i], l.b[i], l.r[i], l.p[i]);
        let r2 = ri * ri;
        let r3 = r2 * ri;
        let ph = phi.eval(ri);
        let dph = phi.prime(ri);
        let cap_i = cap.eval_unchecked(ri);
        // ∂g/∂r and ∂v/∂r at fixed u, b
        let g_r = ui * bi * (dph / r2 - 2.0 * ph / r3);
        let v_r = w[i] * (ph / ri * ui * bi / r2 - 2.0 * cap_i * ui * bi / r3);
        let g_b = ui * ph / r2;
        let v_b = w[i] * cap_i * ui / r2;
        for k in 0..n {
            let delta = if i == k { 1.0 } else { 0.0 };
            let dr = (ui * delta + pi * a[(i, k)]) / ri;
            let db = bm[(i, k)] + delta;
            jac[(i, k)] = ph * bi / r2 * delta + g_r * dr + g_b * db;
            jac[(n, k)] += w[i] * cap_i * bi / r2 * delta + v_r * dr + v_b * db;
        }
        jac[(i, n)] = -f[i];
    }
    Ok(jac)
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn admissible(grid: &Arc<SphereGrid>, u: &[f64]) -> bool {
    match assemble_state(grid.clone(), u.to_vec().into()) {
        Ok(s) => s.is_strictly_convex(),
        Err(_) => false,
    }
}

/// Damped Newton iteration from `u_init`; λ starts at θ(u_init).
pub fn newton_solve(np: &NewtonProblem, u_init: &ScalarField) -> Result<NewtonSolution> {
    np.grid.check_len(u_init.len())?;
    let n = u_init.len();
    let init_state = assemble_state(np.grid.clone(), u_init.clone())?;
    init_state.require_convex()?;
    let mut lambda = crate::functionals::theta(&init_state, &np.problem)?;
    let mut u = u_init.to_vec();
    let mut g = residual(np, &u, lambda)?;
    let mut history = vec![sup(&g)];
    for it in 0..np.max_iter {
        if history[history.len() - 1] <= np.res_tol {
            return Ok(NewtonSolution {
                u: u.into(),
                lambda,
                iterations: it,
                residual_history: history,
            });
        }
        let jac = jacobian(np, &u)?;
        let rhs = DVector::from_iterator(n + 1, g.iter().map(|v| -v));
        let step = jac
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Oracle("singular Jacobian".into()))?;
        let current = history[history.len() - 1];
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let trial: Vec<f64> = (0..n).map(|i| u[i] + alpha * step[i]).collect();
            let trial_lambda = lambda + alpha * step[n];
            if admissible(&np.grid, &trial) {
                let tg = residual(np, &trial, trial_lambda)?;
                let ts = sup(&tg);
                if ts.is_finite() && (ts < current || ts <= np.res_tol) {
                    accepted = Some((trial, trial_lambda, tg, ts));
                    break;
                }
            }
            alpha *= 0.5;
        }
        match accepted {
            Some((nu, nl, ng, ns)) => {
                u = nu;
                lambda = nl;
                g = ng;
                history.push(ns);
            }
            None => {
                return Err(Error::Oracle(format!(
                    "line search failed at iteration {it} with residual {current:e}"
                )))
            }
        }
    }
    let last = history[history.len() - 1];
    if last <= np.res_tol {
        return Ok(NewtonSolution {
            u: u.into(),
            lambda,
            iterations: np.max_iter,
            residual_history: history,
        });
    }
    Err(Error::Oracle(format!(
        "no convergence after {} iterations, residual {last:e}",
        np.max_iter
    )))
}

/// Radius of the origin-centred sphere whose Orlicz volume is `v`.
pub fn sphere_radius_for_volume(grid: &SphereGrid, problem: &Problem, v: f64) -> Result<f64> {
    let (lo, hi) = problem.phi.domain();
    let g = |s: f64| grid.area() * problem.capital.eval_unchecked(s) - v;
    let (mut a, mut b) = (lo.ln(), hi.ln());
    if g(lo) > 0.0 || g(hi) < 0.0 {
        return Err(Error::Oracle(format!("no sphere in the φ domain has volume {v}")));
    }
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if g(m.exp()) < 0.0 {
            a = m;
        } else {
            b = m;
        }
    }
    Ok((0.5 * (a + b)).exp())
}

/// Directional central difference `(G(x + εv) − G(x − εv)) / 2ε` in `u`.
pub fn directional_difference(
    np: &NewtonProblem,
    u: &[f64],
    lambda: f64,
    v: &[f64],
    eps: f64,
) -> Result<Vec<f64>> {
    let plus: Vec<f64> = u.iter().zip(v).map(|(a, b)| a + eps * b).collect();
    let minus: Vec<f64> = u.iter().zip(v).map(|(a, b)| a - eps * b).collect();
    let gp = residual(np, &plus, lambda)?;
    let gm = residual(np, &minus, lambda)?;
    Ok(gp.iter().zip(&gm).map(|(p, m)| (p - m) / (2.0 * eps)).collect())
}

/// Largest relative entrywise gap between the analytic Jacobian and central
/// differences with step `1e-6 · max|u|`. Entries are compared relative to
/// `max(|J_ij|, 1e-6 · max|J|)`.
pub fn jacobian_fd_check(np: &NewtonProblem, u: &ScalarField, lambda: f64) -> Result<f64> {
    let n = u.len();
    let jac = jacobian(np, u)?;
    let eps = 1e-6 * u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let floor = 1e-6 * jac.amax();
    let mut worst: f64 = 0.0;
    let mut e = vec![0.0; n];
    for k in 0..n {
        e[k] = 1.0;
        let col = directional_difference(np, u, lambda, &e, eps)?;
        e[k] = 0.0;
        for (i, fd) in col.iter().enumerate() {
            let an = jac[(i, k)];
            worst = worst.max((an - fd).abs() / an.abs().max(floor));
        }
    }
    // λ column is exact: ∂G/∂λ = (−f, 0)
    Ok(worst)
}

/// Closed-form fields of the ellipse with semi-axes `a` (along x) and `b`.
#[derive(Clone, Debug)]
pub struct EllipseReference {
    pub u: ScalarField,
    /// `a² b² / u³`.
    pub curvature_radius: ScalarField,
    pub r: ScalarField,
    /// Boundary points `(a² cos θ, b² sin θ) / u`.
    pub positions: Vec<[f64; 3]>,
}

pub fn ellipse_oracle(a: f64, b: f64, grid: &SphereGrid) -> Result<EllipseReference> {
    if grid.dim() != 1 {
        return Err(Error::Oracle("ellipse oracle lives on S¹".into()));
    }
    if !(a > 0.0 && b > 0.0) {
        return Err(Error::InvalidSpec("ellipse semi-axes must be positive".into()));
    }
    let mut u = Vec::with_capacity(grid.len());
    let mut rad = Vec::with_capacity(grid.len());
    let mut r = Vec::with_capacity(grid.len());
    let mut pos = Vec::with_capacity(grid.len());
    for x in grid.nodes() {
        let ui = (a * a * x[0] * x[0] + b * b * x[1] * x[1]).sqrt();
        let p = [a * a * x[0] / ui, b * b * x[1] / ui, 0.0];
        u.push(ui);
        rad.push(a * a * b * b / (ui * ui * ui));
        r.push(p[0].hypot(p[1]));
        pos.push(p);
    }
    Ok(EllipseReference {
        u: u.into(),
        curvature_radius: rad.into(),
        r: r.into(),
        positions: pos,
    })
}
