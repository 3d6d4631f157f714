//! Grids on S¹ and S², quadrature, and covariant finite differences.
//!
//! Both grids are built antipodally symmetric: node `antipode[i]` is exactly
//! `-nodes[i]`, bit for bit. Difference stencils are symmetric, so the
//! gradient of an even field is odd and its Hessian even with no rounding
//! asymmetry, which is what lets origin-symmetric flows stay symmetric.
//!
//! Derivatives use five-point stencils whose weights are fitted so that the
//! trigonometric modes of frequency 0, 1 and 2 are differentiated exactly.
//! They are fourth-order accurate on smooth data, and restrictions of linear
//! functions (support functions of points) have vanishing `b_ij` to rounding.

use std::f64::consts::PI;
use std::ops::Deref;

use crate::error::{Error, Result};

/// Five-point centred difference weights on a uniform periodic line.
///
/// `d1 = [a1, a2]` gives `u' ≈ a1 (u₊₁ − u₋₁) + a2 (u₊₂ − u₋₂)` and
/// `d2 = [c1, c2]` gives `u'' ≈ c1 ((u₊₁ − u₀) + (u₋₁ − u₀)) + c2 ((u₊₂ − u₀) + (u₋₂ − u₀))`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Stencil {
    pub spacing: f64,
    pub d1: [f64; 2],
    pub d2: [f64; 2],
}

impl Stencil {
    /// Weights exact for `1, cos kθ, sin kθ` with `k ∈ {1, 2}`.
    pub fn fitted(h: f64) -> Self {
        let (s, c) = h.sin_cos();
        let half = (0.5 * h).sin();
        // 1 − cos h without cancellation
        let p = 2.0 * half * half;
        let q = 2.0 * c + 1.0;
        Self {
            spacing: h,
            d1: [(c + 1.0) / (s * q), -1.0 / (4.0 * s * c * q)],
            d2: [(1.0 + c) / (p * q), -1.0 / (4.0 * p * (1.0 + c) * q)],
        }
    }

    #[inline]
    pub fn first(&self, m2: f64, m1: f64, p1: f64, p2: f64) -> f64 {
        self.d1[0] * (p1 - m1) + self.d1[1] * (p2 - m2)
    }

    #[inline]
    pub fn second(&self, m2: f64, m1: f64, c: f64, p1: f64, p2: f64) -> f64 {
        self.d2[0] * ((p1 - c) + (m1 - c)) + self.d2[1] * ((p2 - c) + (m2 - c))
    }

    /// Largest magnitude of the second-difference symbol over all frequencies.
    pub fn spectral_radius(&self) -> f64 {
        (0..=512)
            .map(|i| {
                let k = PI * i as f64 / 512.0;
                self.d2[0] * (2.0 - 2.0 * k.cos()) + self.d2[1] * (2.0 - 2.0 * (2.0 * k).cos())
            })
            .fold(0.0, f64::max)
    }
}

/// Grid resolution request.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Resolution {
    /// `N` equally spaced nodes on S¹.
    Circle(usize),
    /// `lat × lon` nodes on S², latitudes strictly interior.
    LatLon { lat: usize, lon: usize },
}

impl Resolution {
    pub fn dim(&self) -> usize {
        match self {
            Resolution::Circle(_) => 1,
            Resolution::LatLon { .. } => 2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Row {
    colat: f64,
    sin: f64,
    cos: f64,
}

#[derive(Clone, Debug)]
enum Layout {
    Circle {
        n: usize,
        st: Stencil,
    },
    LatLon {
        lat: usize,
        lon: usize,
        st_lat: Stencil,
        st_lon: Stencil,
        rows: Vec<Row>,
    },
}

/// Discretisation of S^n for n ∈ {1, 2}.
#[derive(Clone, Debug)]
pub struct SphereGrid {
    dim: usize,
    layout: Layout,
    nodes: Vec<[f64; 3]>,
    angles: Vec<[f64; 2]>,
    weights: Vec<f64>,
    antipode: Vec<usize>,
    frames: Vec<[[f64; 3]; 2]>,
    spacing: f64,
    stability_h2: f64,
}

/// Symmetric n×n matrix in a node's orthonormal frame (n ≤ 2).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Sym2 {
    pub xx: f64,
    pub xy: f64,
    pub yy: f64,
}

impl Sym2 {
    pub fn det(&self, dim: usize) -> f64 {
        if dim == 1 {
            self.xx
        } else {
            self.xx * self.yy - self.xy * self.xy
        }
    }

    pub fn trace(&self, dim: usize) -> f64 {
        if dim == 1 {
            self.xx
        } else {
            self.xx + self.yy
        }
    }

    /// `(smallest, largest)` eigenvalue.
    pub fn eigen_range(&self, dim: usize) -> (f64, f64) {
        if dim == 1 {
            return (self.xx, self.xx);
        }
        let mean = 0.5 * (self.xx + self.yy);
        let half_diff = 0.5 * (self.xx - self.yy);
        let rad = half_diff.hypot(self.xy);
        (mean - rad, mean + rad)
    }

    pub fn add_identity(&self, dim: usize, s: f64) -> Sym2 {
        Sym2 {
            xx: self.xx + s,
            xy: self.xy,
            yy: if dim == 1 { 0.0 } else { self.yy + s },
        }
    }
}

macro_rules! field_newtype {
    ($name:ident, $elem:ty) => {
        #[derive(Clone, Debug, PartialEq)]
        pub struct $name(Vec<$elem>);

        impl $name {
            pub fn new(values: Vec<$elem>) -> Self {
                Self(values)
            }

            pub fn values(&self) -> &[$elem] {
                &self.0
            }

            pub fn into_vec(self) -> Vec<$elem> {
                self.0
            }
        }

        impl Deref for $name {
            type Target = [$elem];

            fn deref(&self) -> &[$elem] {
                &self.0
            }
        }

        impl From<Vec<$elem>> for $name {
            fn from(values: Vec<$elem>) -> Self {
                Self(values)
            }
        }
    };
}

field_newtype!(ScalarField, f64);
field_newtype!(VectorField, [f64; 2]);
field_newtype!(SymMatrixField, Sym2);

impl ScalarField {
    pub fn constant(grid: &SphereGrid, value: f64) -> Self {
        Self(vec![value; grid.len()])
    }

    /// Samples `f` at every node (unit vector in R³; the third entry is 0 on S¹).
    pub fn from_fn(grid: &SphereGrid, f: impl Fn(&[f64; 3]) -> f64) -> Self {
        Self(grid.nodes().iter().map(f).collect())
    }

    pub fn min(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn argmin(&self) -> usize {
        argext(&self.0, |a, b| a < b)
    }

    pub fn argmax(&self) -> usize {
        argext(&self.0, |a, b| a > b)
    }
}

fn argext(values: &[f64], better: impl Fn(f64, f64) -> bool) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if better(v, values[best]) {
            best = i;
        }
    }
    best
}

fn lagrange4(x: f64) -> [f64; 4] {
    [
        -x * (x - 1.0) * (x - 2.0) / 6.0,
        (x + 1.0) * (x - 1.0) * (x - 2.0) / 2.0,
        -(x + 1.0) * x * (x - 2.0) / 2.0,
        (x + 1.0) * x * (x - 1.0) / 6.0,
    ]
}

impl SphereGrid {
    /// Builds a grid on S^dim.
    ///
    /// S¹ takes an even `N ≥ 8`; S² takes even latitude and longitude counts, both `≥ 8`.
    pub fn new(dim: usize, resolution: Resolution) -> Result<Self> {
        match (dim, resolution) {
            (1, Resolution::Circle(n)) => Self::circle(n),
            (2, Resolution::LatLon { lat, lon }) => Self::lat_lon(lat, lon),
            (1 | 2, r) => Err(Error::InvalidGrid(format!(
                "resolution {r:?} does not match dimension {dim}"
            ))),
            _ => Err(Error::InvalidGrid(format!("unsupported dimension {dim}"))),
        }
    }

    pub fn circle(n: usize) -> Result<Self> {
        if !n.is_multiple_of(2) {
            return Err(Error::InvalidGrid(format!(
                "node count {n} is odd; antipodal symmetry needs an even count"
            )));
        }
        if n < 8 {
            return Err(Error::InvalidGrid(format!("node count {n} below minimum 8")));
        }
        let h = 2.0 * PI / n as f64;
        let half = n / 2;
        let mut nodes = vec![[0.0; 3]; n];
        for k in 0..half {
            let (s, c) = (h * k as f64).sin_cos();
            nodes[k] = [c, s, 0.0];
            nodes[k + half] = [-c, -s, 0.0];
        }
        let angles = (0..n).map(|k| [h * k as f64, 0.0]).collect();
        let frames = nodes
            .iter()
            .map(|x| [[-x[1], x[0], 0.0], [0.0; 3]])
            .collect();
        let st = Stencil::fitted(h);
        Ok(Self {
            dim: 1,
            stability_h2: 4.0 / st.spectral_radius(),
            layout: Layout::Circle { n, st },
            nodes,
            angles,
            weights: vec![h; n],
            antipode: (0..n).map(|k| (k + half) % n).collect(),
            frames,
            spacing: h,
        })
    }

    pub fn lat_lon(lat: usize, lon: usize) -> Result<Self> {
        for (name, v) in [("latitude", lat), ("longitude", lon)] {
            if v % 2 != 0 {
                return Err(Error::InvalidGrid(format!(
                    "{name} count {v} is odd; antipodal symmetry needs an even count"
                )));
            }
            if v < 8 {
                return Err(Error::InvalidGrid(format!("{name} count {v} below minimum 8")));
            }
        }
        let h_lat = PI / lat as f64;
        let h_lon = 2.0 * PI / lon as f64;
        let mut rows = vec![
            Row {
                colat: 0.0,
                sin: 0.0,
                cos: 0.0
            };
            lat
        ];
        for k in 0..lat / 2 {
            let colat = (k as f64 + 0.5) * h_lat;
            let (s, c) = colat.sin_cos();
            rows[k] = Row { colat, sin: s, cos: c };
            rows[lat - 1 - k] = Row {
                colat: PI - colat,
                sin: s,
                cos: -c,
            };
        }
        let n = lat * lon;
        let mut nodes = vec![[0.0; 3]; n];
        let mut angles = vec![[0.0; 2]; n];
        let band = (0.5 * h_lat).sin();
        let mut weights = vec![0.0; n];
        for (k, row) in rows.iter().enumerate() {
            for j in 0..lon {
                let lon_angle = h_lon * j as f64;
                angles[k * lon + j] = [row.colat, lon_angle];
                weights[k * lon + j] = 4.0 * PI * row.sin * band / lon as f64;
                if k < lat / 2 {
                    let (sp, cp) = lon_angle.sin_cos();
                    nodes[k * lon + j] = [row.sin * cp, row.sin * sp, row.cos];
                }
            }
        }
        let antipode: Vec<usize> = (0..n)
            .map(|i| {
                let (k, j) = (i / lon, i % lon);
                (lat - 1 - k) * lon + (j + lon / 2) % lon
            })
            .collect();
        for i in 0..n {
            if i / lon >= lat / 2 {
                let a = nodes[antipode[i]];
                nodes[i] = [-a[0], -a[1], -a[2]];
            }
        }
        let frames = nodes
            .iter()
            .enumerate()
            .map(|(i, x)| {
                let row = rows[i / lon];
                let cot = row.cos / row.sin;
                [
                    [cot * x[0], cot * x[1], -row.sin],
                    [-x[1] / row.sin, x[0] / row.sin, 0.0],
                ]
            })
            .collect();
        let st_lat = Stencil::fitted(h_lat);
        let st_lon = Stencil::fitted(h_lon);
        let sigma = rows
            .iter()
            .map(|r| st_lat.spectral_radius() + st_lon.spectral_radius() / (r.sin * r.sin))
            .fold(0.0, f64::max);
        Ok(Self {
            dim: 2,
            layout: Layout::LatLon {
                lat,
                lon,
                st_lat,
                st_lon,
                rows,
            },
            nodes,
            angles,
            weights,
            antipode,
            frames,
            spacing: h_lat,
            stability_h2: 4.0 / sigma,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[[f64; 3]] {
        &self.nodes
    }

    /// Per-node coordinates: `[θ, 0]` on S¹, `[colatitude, longitude]` on S².
    pub fn angles(&self) -> &[[f64; 2]] {
        &self.angles
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn antipode(&self) -> &[usize] {
        &self.antipode
    }

    /// Orthonormal tangent frame per node; only the first vector is used on S¹.
    pub fn frames(&self) -> &[[[f64; 3]; 2]] {
        &self.frames
    }

    /// Characteristic mesh size `h`.
    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    /// Effective `h²` for explicit diffusion limits: `4 / ρ`, with `ρ` the
    /// largest symbol magnitude of the discrete Laplace–Beltrami operator.
    pub fn stability_h2(&self) -> f64 {
        self.stability_h2
    }

    /// Area of S^n.
    pub fn area(&self) -> f64 {
        if self.dim == 1 {
            2.0 * PI
        } else {
            4.0 * PI
        }
    }

    /// Stencil of the S¹ grid (None on S²).
    pub fn circle_stencil(&self) -> Option<Stencil> {
        match self.layout {
            Layout::Circle { st, .. } => Some(st),
            Layout::LatLon { .. } => None,
        }
    }

    pub fn check_len(&self, found: usize) -> Result<()> {
        if found == self.len() {
            Ok(())
        } else {
            Err(Error::FieldLength {
                expected: self.len(),
                found,
            })
        }
    }

    /// `Σ wᵢ fᵢ` in node order.
    pub fn quadrature(&self, field: &[f64]) -> Result<f64> {
        self.check_len(field.len())?;
        Ok(self.weighted_sum(field))
    }

    pub(crate) fn weighted_sum(&self, field: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (w, f) in self.weights.iter().zip(field) {
            acc += w * f;
        }
        acc
    }

    /// Frame components of the covariant gradient.
    pub fn gradient(&self, field: &[f64]) -> Result<VectorField> {
        Ok(self.derivatives(field)?.0)
    }

    /// Frame components of the covariant Hessian `D_i D_j u`.
    pub fn covariant_hessian(&self, field: &[f64]) -> Result<SymMatrixField> {
        Ok(self.derivatives(field)?.1)
    }

    /// Gradient and covariant Hessian in one pass.
    pub fn derivatives(&self, u: &[f64]) -> Result<(VectorField, SymMatrixField)> {
        self.check_len(u.len())?;
        match &self.layout {
            Layout::Circle { n, st } => {
                let n = *n;
                let mut grad = Vec::with_capacity(n);
                let mut hess = Vec::with_capacity(n);
                for i in 0..n {
                    let m2 = u[(i + n - 2) % n];
                    let m1 = u[(i + n - 1) % n];
                    let p1 = u[(i + 1) % n];
                    let p2 = u[(i + 2) % n];
                    grad.push([st.first(m2, m1, p1, p2), 0.0]);
                    hess.push(Sym2 {
                        xx: st.second(m2, m1, u[i], p1, p2),
                        xy: 0.0,
                        yy: 0.0,
                    });
                }
                Ok((VectorField(grad), SymMatrixField(hess)))
            }
            Layout::LatLon {
                lat,
                lon,
                st_lat,
                st_lon,
                rows,
            } => {
                let (lat, lon) = (*lat, *lon);
                let idx = |k: isize, j: isize| lat_lon_index(lat, lon, k, j);
                let along_lon = |f: &[f64], k: isize, j: isize| {
                    (f[idx(k, j - 2)], f[idx(k, j - 1)], f[idx(k, j + 1)], f[idx(k, j + 2)])
                };
                let along_lat = |f: &[f64], k: isize, j: isize| {
                    (f[idx(k - 2, j)], f[idx(k - 1, j)], f[idx(k + 1, j)], f[idx(k + 2, j)])
                };
                let mut u_lon = vec![0.0; u.len()];
                for k in 0..lat as isize {
                    for j in 0..lon as isize {
                        let (m2, m1, p1, p2) = along_lon(u, k, j);
                        u_lon[idx(k, j)] = st_lon.first(m2, m1, p1, p2);
                    }
                }
                let mut grad = Vec::with_capacity(u.len());
                let mut hess = Vec::with_capacity(u.len());
                for k in 0..lat as isize {
                    let row = rows[k as usize];
                    let cot = row.cos / row.sin;
                    for j in 0..lon as isize {
                        let c = u[idx(k, j)];
                        let (m2, m1, p1, p2) = along_lat(u, k, j);
                        let u_t = st_lat.first(m2, m1, p1, p2);
                        let u_tt = st_lat.second(m2, m1, c, p1, p2);
                        let (n2, n1, q1, q2) = along_lon(u, k, j);
                        let u_pp = st_lon.second(n2, n1, c, q1, q2);
                        let u_p = u_lon[idx(k, j)];
                        let (g2, g1, h1, h2) = along_lat(&u_lon, k, j);
                        let u_tp = st_lat.first(g2, g1, h1, h2);
                        grad.push([u_t, u_p / row.sin]);
                        hess.push(Sym2 {
                            xx: u_tt,
                            xy: (u_tp - cot * u_p) / row.sin,
                            yy: u_pp / (row.sin * row.sin) + cot * u_t,
                        });
                    }
                }
                Ok((VectorField(grad), SymMatrixField(hess)))
            }
        }
    }

    /// Cartesian vector of a frame-component tangent vector at node `i`.
    pub fn tangent_to_cartesian(&self, i: usize, v: [f64; 2]) -> [f64; 3] {
        let [e1, e2] = self.frames[i];
        if self.dim == 1 {
            [v[0] * e1[0], v[0] * e1[1], 0.0]
        } else {
            [
                v[0] * e1[0] + v[1] * e2[0],
                v[0] * e1[1] + v[1] * e2[1],
                v[0] * e1[2] + v[1] * e2[2],
            ]
        }
    }

    /// Cubic Lagrange interpolation of a nodal field at an arbitrary direction.
    pub fn interpolate(&self, field: &[f64], point: [f64; 3]) -> Result<f64> {
        self.check_len(field.len())?;
        match &self.layout {
            Layout::Circle { n, st } => {
                let n = *n;
                let theta = point[1].atan2(point[0]).rem_euclid(2.0 * PI);
                let t = theta / st.spacing;
                let i0 = t.floor();
                let w = lagrange4(t - i0);
                let i0 = i0 as isize;
                Ok((0..4)
                    .map(|s| w[s] * field[(i0 - 1 + s as isize).rem_euclid(n as isize) as usize])
                    .sum())
            }
            Layout::LatLon {
                lat,
                lon,
                st_lat,
                st_lon,
                ..
            } => {
                let (lat, lon) = (*lat, *lon);
                let norm = (point[0] * point[0] + point[1] * point[1] + point[2] * point[2]).sqrt();
                let colat = (point[2] / norm).clamp(-1.0, 1.0).acos();
                let lon_angle = point[1].atan2(point[0]).rem_euclid(2.0 * PI);
                let t = colat / st_lat.spacing - 0.5;
                let k0 = t.floor();
                let wk = lagrange4(t - k0);
                let k0 = k0 as isize;
                let mut acc = 0.0;
                for (s, wks) in wk.iter().enumerate() {
                    let k = k0 - 1 + s as isize;
                    let (kr, shifted) = ghost_row(lat, k);
                    let phi = if shifted { lon_angle + PI } else { lon_angle };
                    let tp = (phi / st_lon.spacing).rem_euclid(lon as f64);
                    let j0 = tp.floor();
                    let wj = lagrange4(tp - j0);
                    let j0 = j0 as isize;
                    let row_val: f64 = (0..4)
                        .map(|q| {
                            let j = (j0 - 1 + q as isize).rem_euclid(lon as isize) as usize;
                            wj[q] * field[kr * lon + j]
                        })
                        .sum();
                    acc += wks * row_val;
                }
                Ok(acc)
            }
        }
    }
}

fn ghost_row(lat: usize, k: isize) -> (usize, bool) {
    if k < 0 {
        ((-1 - k) as usize, true)
    } else if k >= lat as isize {
        ((2 * lat as isize - 1 - k) as usize, true)
    } else {
        (k as usize, false)
    }
}

/// Node index of virtual row `k`, column `j`; rows beyond a pole continue on
/// the opposite meridian.
fn lat_lon_index(lat: usize, lon: usize, k: isize, j: isize) -> usize {
    let (kr, shifted) = ghost_row(lat, k);
    let j = if shifted { j + (lon / 2) as isize } else { j };
    kr * lon + j.rem_euclid(lon as isize) as usize
}
