//! Geometric state of a convex body parametrised by its outward normal.
//!
//! Given the support function `u` on the grid, the boundary point with normal
//! `x` is `X = u x + Du`, its distance to the origin is `r = √(u² + |Du|²)`,
//! and the principal radii are the eigenvalues of `b = D²u + u I`.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::sphere::{ScalarField, SphereGrid, SymMatrixField, VectorField};

/// Support function together with every derived field.
#[derive(Clone, Debug)]
pub struct BodyState {
    grid: Arc<SphereGrid>,
    u: ScalarField,
    du: VectorField,
    b: SymMatrixField,
    gauss_k: ScalarField,
    positions: Vec<[f64; 3]>,
    r: ScalarField,
    min_eig_b: ScalarField,
    max_eig_b: ScalarField,
}

/// Builds the body state from a support function.
///
/// Fails when `u` is not finite or not positive; non-convex data is accepted
/// and reported through [`BodyState::is_strictly_convex`].
pub fn assemble_state(grid: Arc<SphereGrid>, u: ScalarField) -> Result<BodyState> {
    grid.check_len(u.len())?;
    if let Some(node) = u.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { node });
    }
    if let Some(node) = u.iter().position(|&v| v <= 0.0) {
        return Err(Error::OriginNotInterior { node, value: u[node] });
    }
    let dim = grid.dim();
    let (du, hess) = grid.derivatives(&u)?;
    let n = u.len();
    let mut b = Vec::with_capacity(n);
    let mut gauss_k = Vec::with_capacity(n);
    let mut positions = Vec::with_capacity(n);
    let mut r = Vec::with_capacity(n);
    let mut lo = Vec::with_capacity(n);
    let mut hi = Vec::with_capacity(n);
    for i in 0..n {
        let bi = hess[i].add_identity(dim, u[i]);
        let (e0, e1) = bi.eigen_range(dim);
        let x = grid.nodes()[i];
        let t = grid.tangent_to_cartesian(i, du[i]);
        let g2 = du[i][0] * du[i][0] + du[i][1] * du[i][1];
        b.push(bi);
        gauss_k.push(1.0 / bi.det(dim));
        positions.push([u[i] * x[0] + t[0], u[i] * x[1] + t[1], u[i] * x[2] + t[2]]);
        r.push((u[i] * u[i] + g2).sqrt());
        lo.push(e0);
        hi.push(e1);
    }
    Ok(BodyState {
        grid,
        u,
        du,
        b: b.into(),
        gauss_k: gauss_k.into(),
        positions,
        r: r.into(),
        min_eig_b: lo.into(),
        max_eig_b: hi.into(),
    })
}

impl BodyState {
    pub fn grid(&self) -> &Arc<SphereGrid> {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    pub fn u(&self) -> &ScalarField {
        &self.u
    }

    pub fn du(&self) -> &VectorField {
        &self.du
    }

    pub fn b(&self) -> &SymMatrixField {
        &self.b
    }

    pub fn gauss_k(&self) -> &ScalarField {
        &self.gauss_k
    }

    pub fn positions(&self) -> &[[f64; 3]] {
        &self.positions
    }

    pub fn r(&self) -> &ScalarField {
        &self.r
    }

    pub fn min_eig_b(&self) -> &ScalarField {
        &self.min_eig_b
    }

    pub fn max_eig_b(&self) -> &ScalarField {
        &self.max_eig_b
    }

    /// `det b` at node `i`.
    pub fn det_b(&self, i: usize) -> f64 {
        self.b[i].det(self.dim())
    }

    pub fn is_strictly_convex(&self) -> bool {
        self.min_eig_b.min() > 0.0
    }

    pub fn require_convex(&self) -> Result<()> {
        let node = self.min_eig_b.argmin();
        let min_eig = self.min_eig_b[node];
        if min_eig > 0.0 {
            Ok(())
        } else {
            Err(Error::NotConvex { node, min_eig })
        }
    }

    /// `max |Du| / u`.
    pub fn grad_ratio_max(&self) -> f64 {
        self.du
            .iter()
            .zip(self.u.iter())
            .map(|(g, u)| g[0].hypot(g[1]) / u)
            .fold(0.0, f64::max)
    }

    /// `sup |u(x) − u(−x)|`.
    pub fn odd_part_sup(&self) -> f64 {
        crate::orlicz::odd_part_sup(&self.grid, &self.u)
    }

    /// Unit ray direction `X / |X|` at node `i`.
    pub fn ray(&self, i: usize) -> [f64; 3] {
        let p = self.positions[i];
        let r = self.r[i];
        [p[0] / r, p[1] / r, p[2] / r]
    }
}

/// `w = u / (r^{n+1} K)`, the density of ray measure against normal measure.
pub fn pushforward_weight(state: &BodyState) -> Result<ScalarField> {
    state.require_convex()?;
    let n1 = state.dim() as i32 + 1;
    Ok((0..state.u.len())
        .map(|i| state.u[i] * state.det_b(i) / state.r[i].powi(n1))
        .collect::<Vec<_>>()
        .into())
}

/// Extremal identities and support-plane inequalities for a convex state.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LemmaReport {
    /// `|max u − max r|`.
    pub max_gap: f64,
    /// `|min u − min r|`.
    pub min_gap: f64,
    /// `min_i [u(xᵢ) − xᵢ · X(x*)]`, `x*` the node of largest `u`.
    pub support_residual: f64,
    /// `min_j [u(x†) − x† · X(xⱼ)]`, `x†` the node of smallest `r`.
    pub radial_residual: f64,
}

impl LemmaReport {
    /// Inequalities within `-tol`, extremal gaps within `eq_tol`.
    pub fn passes(&self, tol: f64, eq_tol: f64) -> bool {
        self.support_residual >= -tol
            && self.radial_residual >= -tol
            && self.max_gap <= eq_tol
            && self.min_gap <= eq_tol
    }
}

/// Extremes of `u` and `r` coincide, and the body lies below the support
/// planes at the farthest point and at the closest point.
///
/// At the closest boundary point the normal is the ray itself, so the plane
/// `{y · ξ_min = r_min}` supports the body and every boundary point satisfies
/// `X · ξ_min ≤ r_min`. Both inequalities are written as `u(x) ≥ x · X`
/// against the discrete positions.
pub fn lemma_ur_check(state: &BodyState) -> LemmaReport {
    let u = state.u();
    let r = state.r();
    let nodes = state.grid.nodes();
    let pos = state.positions();
    let dot = |a: &[f64; 3], b: &[f64; 3]| a[0] * b[0] + a[1] * b[1] + a[2] * b[2];

    let i_max = u.argmax();
    let support_residual = (0..u.len())
        .map(|i| u[i] - dot(&nodes[i], &pos[i_max]))
        .fold(f64::INFINITY, f64::min);
    let j_min = r.argmin();
    let radial_residual = (0..u.len())
        .map(|j| u[j_min] - dot(&nodes[j_min], &pos[j]))
        .fold(f64::INFINITY, f64::min);
    LemmaReport {
        max_gap: (u.max() - r.max()).abs(),
        min_gap: (u.min() - r.min()).abs(),
        support_residual,
        radial_residual,
    }
}

/// Interpolated boundary point with normal `x`.
fn position_at(grid: &SphereGrid, xyz: &[Vec<f64>; 3], x: [f64; 3]) -> Result<[f64; 3]> {
    Ok([
        grid.interpolate(&xyz[0], x)?,
        grid.interpolate(&xyz[1], x)?,
        grid.interpolate(&xyz[2], x)?,
    ])
}

fn normalize(v: [f64; 3]) -> [f64; 3] {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

fn tangent_basis(d: [f64; 3]) -> [[f64; 3]; 2] {
    let a = if d[2].abs() < 0.9 { [0.0, 0.0, 1.0] } else { [1.0, 0.0, 0.0] };
    let k = a[0] * d[0] + a[1] * d[1] + a[2] * d[2];
    let t1 = normalize([a[0] - k * d[0], a[1] - k * d[1], a[2] - k * d[2]]);
    let t2 = [
        d[1] * t1[2] - d[2] * t1[1],
        d[2] * t1[0] - d[0] * t1[2],
        d[0] * t1[1] - d[1] * t1[0],
    ];
    [t1, t2]
}

/// Normal `x` whose boundary point lies on the ray through `d`.
fn inverse_ray(
    state: &BodyState,
    xyz: &[Vec<f64>; 3],
    d: [f64; 3],
) -> Result<[f64; 3]> {
    let grid = state.grid.as_ref();
    let dot = |a: &[f64; 3], b: &[f64; 3]| a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
    let start = (0..grid.len())
        .max_by(|&a, &b| dot(&state.ray(a), &d).total_cmp(&dot(&state.ray(b), &d)))
        .unwrap_or(0);
    if grid.dim() == 1 {
        // the ray angle is increasing in the normal angle
        let target = d[1].atan2(d[0]);
        let offset = |alpha: f64| -> Result<f64> {
            let p = position_at(grid, xyz, [alpha.cos(), alpha.sin(), 0.0])?;
            let diff = p[1].atan2(p[0]) - target;
            Ok((diff + std::f64::consts::PI).rem_euclid(2.0 * std::f64::consts::PI)
                - std::f64::consts::PI)
        };
        let a0 = grid.angles()[start][0];
        let h = grid.spacing();
        let (mut lo, mut hi) = (a0 - 2.0 * h, a0 + 2.0 * h);
        let (mut flo, fhi) = (offset(lo)?, offset(hi)?);
        if flo > 0.0 || fhi < 0.0 {
            return Err(Error::InvalidSpec("ray search failed to bracket".into()));
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let fm = offset(mid)?;
            if (fm < 0.0) == (flo < 0.0) {
                lo = mid;
                flo = fm;
            } else {
                hi = mid;
            }
        }
        let a = 0.5 * (lo + hi);
        return Ok([a.cos(), a.sin(), 0.0]);
    }
    let [t1, t2] = tangent_basis(d);
    let residual = |x: [f64; 3]| -> Result<[f64; 2]> {
        let xi = normalize(position_at(grid, xyz, x)?);
        Ok([dot(&xi, &t1), dot(&xi, &t2)])
    };
    let mut x = grid.nodes()[start];
    let eps = 1e-6;
    for _ in 0..50 {
        let f = residual(x)?;
        if f[0].hypot(f[1]) < 1e-14 {
            break;
        }
        let [e1, e2] = tangent_basis(x);
        let shift = |e: [f64; 3], s: f64| normalize([x[0] + s * e[0], x[1] + s * e[1], x[2] + s * e[2]]);
        let fp1 = residual(shift(e1, eps))?;
        let fm1 = residual(shift(e1, -eps))?;
        let fp2 = residual(shift(e2, eps))?;
        let fm2 = residual(shift(e2, -eps))?;
        let j = [
            [(fp1[0] - fm1[0]) / (2.0 * eps), (fp2[0] - fm2[0]) / (2.0 * eps)],
            [(fp1[1] - fm1[1]) / (2.0 * eps), (fp2[1] - fm2[1]) / (2.0 * eps)],
        ];
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        if det.abs() < 1e-300 {
            return Err(Error::InvalidSpec("singular ray Jacobian".into()));
        }
        let s1 = -(j[1][1] * f[0] - j[0][1] * f[1]) / det;
        let s2 = -(-j[1][0] * f[0] + j[0][0] * f[1]) / det;
        x = normalize([
            x[0] + s1 * e1[0] + s2 * e2[0],
            x[1] + s1 * e1[1] + s2 * e2[1],
            x[2] + s1 * e1[2] + s2 * e2[2],
        ]);
    }
    Ok(x)
}

/// Consistency of the radial description with the support description.
///
/// The radial function is resampled onto the grid directions (taken as
/// rays) by inverting the ray map with cubic interpolation. From `r` and
/// `Dr` the support value `r²/√(r² + |Dr|²)` and the normal
/// `(r ξ − Dr)/√(r² + |Dr|²)` are formed, and the support value is compared
/// with `u` interpolated at that normal. Returns the sup-norm mismatch.
pub fn support_from_radial_roundtrip(state: &BodyState) -> Result<f64> {
    state.require_convex()?;
    let grid = state.grid.as_ref();
    let xyz = [0, 1, 2].map(|c| state.positions.iter().map(|p| p[c]).collect::<Vec<f64>>());
    let mut radial = Vec::with_capacity(grid.len());
    for &d in grid.nodes() {
        let x = inverse_ray(state, &xyz, d)?;
        let p = position_at(grid, &xyz, x)?;
        radial.push((p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt());
    }
    let dr = grid.gradient(&radial)?;
    let mut worst: f64 = 0.0;
    for (i, &d) in grid.nodes().iter().enumerate() {
        let g = grid.tangent_to_cartesian(i, dr[i]);
        let r = radial[i];
        let norm = (r * r + g[0] * g[0] + g[1] * g[1] + g[2] * g[2]).sqrt();
        let support = r * r / norm;
        let nu = [
            (r * d[0] - g[0]) / norm,
            (r * d[1] - g[1]) / norm,
            (r * d[2] - g[2]) / norm,
        ];
        let u_nu = grid.interpolate(&state.u, normalize(nu))?;
        worst = worst.max((support - u_nu).abs());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harmonics::HarmonicSeries;
    use proptest::prelude::*;

    fn ellipse(a: f64, b: f64) -> impl Fn(&[f64; 3]) -> f64 {
        move |x| (a * a * x[0] * x[0] + b * b * x[1] * x[1]).sqrt()
    }

    fn body(grid: &Arc<SphereGrid>, f: impl Fn(&[f64; 3]) -> f64) -> BodyState {
        assemble_state(grid.clone(), ScalarField::from_fn(grid, f)).unwrap()
    }

    #[test]
    fn round_spheres() {
        for grid in [SphereGrid::circle(64).unwrap(), SphereGrid::lat_lon(16, 32).unwrap()] {
            let grid = Arc::new(grid);
            let n = grid.dim() as i32;
            let s = body(&grid, |_| 2.0);
            for i in 0..grid.len() {
                assert!((s.min_eig_b()[i] - 2.0).abs() < 1e-12);
                assert!((s.max_eig_b()[i] - 2.0).abs() < 1e-12);
                assert!((s.gauss_k()[i] - 2f64.powi(-n)).abs() < 1e-12);
                assert!((s.r()[i] - 2.0).abs() < 1e-12);
            }
            let w = pushforward_weight(&s).unwrap();
            assert!(w.iter().all(|v| (v - 1.0).abs() < 1e-11));
            let rep = lemma_ur_check(&s);
            assert!(rep.max_gap < 1e-12 && rep.min_gap < 1e-12);
            assert!(rep.support_residual.abs() < 1e-12 && rep.radial_residual.abs() < 1e-12);
            assert!(support_from_radial_roundtrip(&s).unwrap() < 1e-12);
        }
    }

    #[test]
    fn translated_ball_touching_origin_is_rejected() {
        let grid = Arc::new(SphereGrid::circle(64).unwrap());
        // node 32 is exactly −e₁, where u vanishes
        let u = ScalarField::from_fn(&grid, |x| 1.0 + x[0]);
        let err = assemble_state(grid, u).unwrap_err();
        assert!(err.to_string().contains("origin not interior"), "{err}");
    }

    #[test]
    fn ellipse_vertex_radius() {
        let grid = Arc::new(SphereGrid::circle(256).unwrap());
        let s = body(&grid, ellipse(1.5, 0.7));
        assert!((s.b()[0].xx - 0.49 / 1.5).abs() < 1e-6);
        let w = pushforward_weight(&s).unwrap();
        assert!(w.iter().all(|&v| v > 0.0));
        let rep = lemma_ur_check(&s);
        assert!(rep.max_gap < 1e-10 && rep.min_gap < 1e-10);
        assert!(rep.passes(1e-8, 1e-10));
    }

    #[test]
    fn nonconvex_state_is_representable() {
        let grid = Arc::new(SphereGrid::circle(128).unwrap());
        let s = body(&grid, |x| 1.0 + 0.8 * (x[0] * x[0] - x[1] * x[1]));
        assert!(!s.is_strictly_convex());
        assert!((s.min_eig_b().min() - (1.0 - 3.0 * 0.8)).abs() < 1e-9);
        let err = pushforward_weight(&s).unwrap_err().to_string();
        assert!(err.contains("convexity lost"), "{err}");
    }

    #[test]
    fn roundtrip_converges() {
        let run = |n: usize| {
            let grid = Arc::new(SphereGrid::circle(n).unwrap());
            support_from_radial_roundtrip(&body(&grid, ellipse(1.2, 0.9))).unwrap()
        };
        let (a, b) = (run(256), run(512));
        assert!(a < 1e-6 && a / b >= 3.0, "{a} {b}");

        let grid = Arc::new(SphereGrid::circle(256).unwrap());
        let s = body(&grid, |x| 1.0 + 0.05 * crate::harmonics::harmonic(3, 3, x));
        assert!(support_from_radial_roundtrip(&s).unwrap() <= 1e-3);

        let grid = Arc::new(SphereGrid::lat_lon(16, 32).unwrap());
        let s = body(&grid, |x| {
            (1.44 * x[0] * x[0] + 0.81 * x[1] * x[1] + x[2] * x[2]).sqrt()
        });
        assert!(support_from_radial_roundtrip(&s).unwrap() < 1e-3);
    }

    #[test]
    fn pushforward_weight_integrates_to_area() {
        let grid = Arc::new(SphereGrid::lat_lon(32, 64).unwrap());
        let s = body(&grid, |x| {
            (1.44 * x[0] * x[0] + 0.81 * x[1] * x[1] + x[2] * x[2]).sqrt()
        });
        let w = pushforward_weight(&s).unwrap();
        let total = grid.quadrature(&w).unwrap();
        let h = grid.spacing();
        assert!((total / grid.area() - 1.0).abs() <= 5.0 * h * h, "{total}");
    }

    fn even_series(c: &[f64]) -> HarmonicSeries {
        HarmonicSeries::constant(1.0)
            .with_term(2, 0, c[0])
            .with_term(2, 1, c[1])
            .with_term(2, -2, c[2])
            .with_term(4, 3, c[3])
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn translation_leaves_curvature_unchanged(
            c in prop::array::uniform4(-0.03f64..0.03),
            v in prop::array::uniform3(-0.2f64..0.2),
        ) {
            let grid = Arc::new(SphereGrid::lat_lon(16, 32).unwrap());
            let series = even_series(&c);
            let base = body(&grid, |x| series.eval(x));
            let moved = body(&grid, |x| series.eval(x) + v[0] * x[0] + v[1] * x[1] + v[2] * x[2]);
            for i in 0..grid.len() {
                prop_assert!((base.min_eig_b()[i] - moved.min_eig_b()[i]).abs() < 1e-10);
                prop_assert!((base.max_eig_b()[i] - moved.max_eig_b()[i]).abs() < 1e-10);
                let rel = moved.gauss_k()[i] / base.gauss_k()[i] - 1.0;
                prop_assert!(rel.abs() < 1e-10);
            }
        }

        #[test]
        fn lemma_inequalities_on_even_bodies(c in prop::array::uniform4(-0.03f64..0.03)) {
            let grid = Arc::new(SphereGrid::lat_lon(16, 32).unwrap());
            let series = even_series(&c);
            let s = body(&grid, |x| series.eval(x));
            prop_assume!(s.is_strictly_convex());
            let rep = lemma_ur_check(&s);
            prop_assert!(rep.support_residual >= -1e-8 && rep.radial_residual >= -1e-8);
            let h = grid.spacing();
            prop_assert!(rep.max_gap <= 10.0 * h * h && rep.min_gap <= 10.0 * h * h);
        }

        #[test]
        fn principal_radii_are_lipschitz_in_u(
            seed_coefs in prop::array::uniform3(-0.05f64..0.05),
            delta in 1e-8f64..1e-4,
            phase in 0.0f64..std::f64::consts::TAU,
        ) {
            // C = sum of |fitted second-difference weights| · h² plus 1
            const C: f64 = 6.5;
            let grid = Arc::new(SphereGrid::circle(128).unwrap());
            let base_fn = |x: &[f64; 3]| {
                1.0 + seed_coefs[0] * (x[0] * x[0] - x[1] * x[1])
                    + seed_coefs[1] * crate::harmonics::harmonic(3, 3, x)
                    + seed_coefs[2] * crate::harmonics::harmonic(4, -4, x)
            };
            let base = body(&grid, base_fn);
            let pert = body(&grid, |x| {
                base_fn(x) + delta * (17.0 * x[1].atan2(x[0]) + phase).sin()
            });
            let h = grid.spacing();
            let diff = (base.min_eig_b().min() - pert.min_eig_b().min()).abs();
            prop_assert!(diff <= C * delta / (h * h));
        }
    }
}
