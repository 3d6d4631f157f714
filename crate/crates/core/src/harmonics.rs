//! Unnormalised real harmonics on S¹ and S².
//!
//! On S² the harmonic `(l, m)` is `Q_l^{|m|}(z) · Re (x + iy)^{|m|}` for
//! `m ≥ 0` and `Q_l^{|m|}(z) · Im (x + iy)^{|m|}` for `m < 0`, where `Q` is the
//! associated Legendre function divided by `sin^{|m|}` and scaled so that
//! `Q_m^m = 1`. On S¹ only `|m| = l` exists: `(l, l) = cos lθ`, `(l, -l) = sin lθ`.
//!
//! Everything is evaluated from Cartesian coordinates with sign-symmetric
//! arithmetic, so a degree-`l` harmonic satisfies `Y(−x) = (−1)^l Y(x)` exactly
//! on antipodal node pairs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HarmonicTerm {
    pub l: u32,
    pub m: i32,
    pub coef: f64,
}

/// `c0 + Σ coef · Y_{l,m}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HarmonicSeries {
    pub c0: f64,
    #[serde(default)]
    pub terms: Vec<HarmonicTerm>,
}

impl HarmonicSeries {
    pub fn constant(c0: f64) -> Self {
        Self { c0, terms: Vec::new() }
    }

    pub fn with_term(mut self, l: u32, m: i32, coef: f64) -> Self {
        self.terms.push(HarmonicTerm { l, m, coef });
        self
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if !self.c0.is_finite() {
            return Err(Error::InvalidSpec("harmonic constant is not finite".into()));
        }
        for t in &self.terms {
            let am = t.m.unsigned_abs();
            let ok = match dim {
                1 => am == t.l,
                2 => am <= t.l,
                _ => false,
            };
            if !ok {
                return Err(Error::InvalidSpec(format!(
                    "harmonic (l={}, m={}) does not exist on S^{dim}",
                    t.l, t.m
                )));
            }
            if !t.coef.is_finite() {
                return Err(Error::InvalidSpec("harmonic coefficient is not finite".into()));
            }
        }
        Ok(())
    }

    /// True when every term has even degree.
    pub fn is_even(&self) -> bool {
        self.terms.iter().all(|t| t.l % 2 == 0)
    }

    pub fn eval(&self, x: &[f64; 3]) -> f64 {
        let mut acc = self.c0;
        for t in &self.terms {
            acc += t.coef * harmonic(t.l, t.m, x);
        }
        acc
    }
}

/// Value of the unnormalised real harmonic `(l, m)` at the unit vector `x`.
pub fn harmonic(l: u32, m: i32, x: &[f64; 3]) -> f64 {
    let am = m.unsigned_abs();
    let (mut re, mut im) = (1.0, 0.0);
    for _ in 0..am {
        let nre = re * x[0] - im * x[1];
        let nim = re * x[1] + im * x[0];
        re = nre;
        im = nim;
    }
    let azimuthal = if m >= 0 { re } else { im };
    azimuthal * reduced_legendre(l, am, x[2])
}

fn reduced_legendre(l: u32, m: u32, z: f64) -> f64 {
    if l < m {
        return 0.0;
    }
    let mut prev = 1.0;
    if l == m {
        return prev;
    }
    let mut cur = (2 * m + 1) as f64 * z * prev;
    for k in (m + 2)..=l {
        let next = ((2 * k - 1) as f64 * z * cur - (k + m - 1) as f64 * prev) / (k - m) as f64;
        prev = cur;
        cur = next;
    }
    cur
}
