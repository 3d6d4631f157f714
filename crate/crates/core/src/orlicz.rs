//! The Orlicz function φ, its primitive Φ(s) = ∫ φ(t)/t dt, the prescribed
//! density f, and the hypothesis checks that select the flow regime.

use std::fmt;

use crate::error::{Error, Result};
use crate::harmonics::HarmonicSeries;
use crate::quad;
use crate::sphere::{ScalarField, SphereGrid};

/// Smallest admissible negative margin for the decreasing-type hypothesis.
pub const CASE_I_MARGIN: f64 = 1e-8;
/// Number of log-spaced samples used by [`check_case_i`].
pub const CASE_I_SAMPLES: usize = 2048;
const PHI_QUAD_TOL: f64 = 1e-12;

/// Positive table of φ interpolated by cubic Hermite splines in log–log
/// coordinates and extended by power laws beyond both ends.
#[derive(Clone, Debug, PartialEq)]
pub struct LogLogTable {
    log_s: Vec<f64>,
    log_phi: Vec<f64>,
    slope: Vec<f64>,
}

impl LogLogTable {
    pub fn new(s: &[f64], phi: &[f64]) -> Result<Self> {
        if s.len() != phi.len() || s.len() < 2 {
            return Err(Error::InvalidSpec(
                "tabulated φ needs at least two (s, φ) pairs of equal length".into(),
            ));
        }
        if s.iter().chain(phi).any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::InvalidSpec("tabulated φ needs positive finite entries".into()));
        }
        if s.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidSpec("tabulated s values must be strictly increasing".into()));
        }
        let log_s: Vec<f64> = s.iter().map(|v| v.ln()).collect();
        let log_phi: Vec<f64> = phi.iter().map(|v| v.ln()).collect();
        let n = log_s.len();
        let secant = |i: usize| (log_phi[i + 1] - log_phi[i]) / (log_s[i + 1] - log_s[i]);
        let slope = (0..n)
            .map(|i| {
                if n == 2 || i == 0 {
                    secant(0)
                } else if i == n - 1 {
                    secant(n - 2)
                } else {
                    let (h0, h1) = (log_s[i] - log_s[i - 1], log_s[i + 1] - log_s[i]);
                    (h1 * secant(i - 1) + h0 * secant(i)) / (h0 + h1)
                }
            })
            .collect();
        Ok(Self { log_s, log_phi, slope })
    }

    pub fn s_range(&self) -> (f64, f64) {
        (self.log_s[0].exp(), self.log_s[self.log_s.len() - 1].exp())
    }

    /// `(log φ, d log φ / d log s)` at `log s = t`.
    fn eval_log(&self, t: f64) -> (f64, f64) {
        let n = self.log_s.len();
        if t <= self.log_s[0] {
            return (self.log_phi[0] + self.slope[0] * (t - self.log_s[0]), self.slope[0]);
        }
        if t >= self.log_s[n - 1] {
            return (
                self.log_phi[n - 1] + self.slope[n - 1] * (t - self.log_s[n - 1]),
                self.slope[n - 1],
            );
        }
        let i = self.log_s.partition_point(|&x| x <= t) - 1;
        let h = self.log_s[i + 1] - self.log_s[i];
        let x = (t - self.log_s[i]) / h;
        let (y0, y1) = (self.log_phi[i], self.log_phi[i + 1]);
        let (m0, m1) = (self.slope[i] * h, self.slope[i + 1] * h);
        let x2 = x * x;
        let x3 = x2 * x;
        let val = (2.0 * x3 - 3.0 * x2 + 1.0) * y0
            + (x3 - 2.0 * x2 + x) * m0
            + (-2.0 * x3 + 3.0 * x2) * y1
            + (x3 - x2) * m1;
        let der = (6.0 * x2 - 6.0 * x) * y0
            + (3.0 * x2 - 4.0 * x + 1.0) * m0
            + (-6.0 * x2 + 6.0 * x) * y1
            + (3.0 * x2 - 2.0 * x) * m1;
        (val, der / h)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum PhiKind {
    /// φ(s) = s^q
    Power { q: f64 },
    /// φ(s) = s^q e^{−a s}
    PowerExp { q: f64, a: f64 },
    Tabulated(LogLogTable),
}

/// Orlicz function together with the interval on which a run is certified.
#[derive(Clone, Debug, PartialEq)]
pub struct PhiSpec {
    kind: PhiKind,
    domain: (f64, f64),
    int_q: Option<i32>,
}

impl PhiSpec {
    pub fn new(kind: PhiKind, domain: (f64, f64)) -> Result<Self> {
        let (lo, hi) = domain;
        if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && hi > lo) {
            return Err(Error::InvalidSpec(format!(
                "φ domain [{lo}, {hi}] must be a positive interval"
            )));
        }
        let int_q = match &kind {
            PhiKind::Power { q } | PhiKind::PowerExp { q, .. } => {
                if !q.is_finite() {
                    return Err(Error::InvalidSpec("exponent q must be finite".into()));
                }
                (q.fract() == 0.0 && q.abs() <= 64.0).then_some(*q as i32)
            }
            PhiKind::Tabulated(_) => None,
        };
        if let PhiKind::PowerExp { a, .. } = &kind {
            if !a.is_finite() {
                return Err(Error::InvalidSpec("rate a must be finite".into()));
            }
        }
        Ok(Self { kind, domain, int_q })
    }

    pub fn power(q: f64) -> Self {
        Self::new(PhiKind::Power { q }, (1e-6, 1e6)).expect("finite exponent")
    }

    pub fn power_exp(q: f64, a: f64) -> Self {
        Self::new(PhiKind::PowerExp { q, a }, (1e-6, 1e6)).expect("finite parameters")
    }

    pub fn tabulated(s: &[f64], phi: &[f64]) -> Result<Self> {
        let table = LogLogTable::new(s, phi)?;
        let range = table.s_range();
        Self::new(PhiKind::Tabulated(table), range)
    }

    pub fn with_domain(self, domain: (f64, f64)) -> Result<Self> {
        Self::new(self.kind, domain)
    }

    pub fn kind(&self) -> &PhiKind {
        &self.kind
    }

    pub fn domain(&self) -> (f64, f64) {
        self.domain
    }

    pub fn in_domain(&self, s: f64) -> bool {
        s >= self.domain.0 && s <= self.domain.1
    }

    pub fn check_domain(&self, s: f64) -> Result<()> {
        if self.in_domain(s) {
            Ok(())
        } else {
            Err(Error::OutsideDomain {
                s,
                lo: self.domain.0,
                hi: self.domain.1,
            })
        }
    }

    fn pow_q(&self, s: f64, q: f64) -> f64 {
        match self.int_q {
            Some(k) => s.powi(k),
            None => s.powf(q),
        }
    }

    pub fn eval(&self, s: f64) -> f64 {
        match &self.kind {
            PhiKind::Power { q } => self.pow_q(s, *q),
            PhiKind::PowerExp { q, a } => self.pow_q(s, *q) * (-a * s).exp(),
            PhiKind::Tabulated(t) => t.eval_log(s.ln()).0.exp(),
        }
    }

    /// φ′(s).
    pub fn prime(&self, s: f64) -> f64 {
        self.eval(s) * self.log_slope(s) / s
    }

    /// `s φ′(s) / φ(s)`.
    pub fn log_slope(&self, s: f64) -> f64 {
        match &self.kind {
            PhiKind::Power { q } => *q,
            PhiKind::PowerExp { q, a } => q - a * s,
            PhiKind::Tabulated(t) => t.eval_log(s.ln()).1,
        }
    }

    /// Supremum of `s φ′/φ` over all `s > 0` when known in closed form.
    pub fn log_slope_sup_closed(&self) -> Option<f64> {
        match &self.kind {
            PhiKind::Power { q } => Some(*q),
            PhiKind::PowerExp { q, a } => Some(if *a >= 0.0 { *q } else { f64::INFINITY }),
            PhiKind::Tabulated(_) => None,
        }
    }

    /// Whether `∫_0 φ(s)/s ds` converges, when decidable in closed form.
    pub fn integrable_at_zero_closed(&self) -> Option<bool> {
        match &self.kind {
            PhiKind::Power { q } | PhiKind::PowerExp { q, .. } => Some(*q > 0.0),
            PhiKind::Tabulated(_) => None,
        }
    }
}

impl fmt::Display for PhiSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            PhiKind::Power { q } => write!(f, "s^{q}"),
            PhiKind::PowerExp { q, a } => write!(f, "s^{q}·exp(-{a}·s)"),
            PhiKind::Tabulated(t) => write!(f, "tabulated({} points)", t.log_s.len()),
        }
    }
}

/// Where Φ is anchored.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PhiOrigin {
    /// Φ(s) = ∫₀ˢ φ(t)/t dt.
    Zero,
    /// Φ(s) = ∫_{s₀}ˢ φ(t)/t dt; differs from the true primitive by a constant.
    Base(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PhiMethod {
    ClosedForm,
    Quadrature,
}

/// Primitive Φ of φ(s)/s.
#[derive(Clone, Debug)]
pub struct CapitalPhi {
    phi: PhiSpec,
    origin: PhiOrigin,
    method: PhiMethod,
}

impl CapitalPhi {
    /// Anchors at zero whenever the integral converges there, otherwise at
    /// `base_point` (default 1).
    pub fn new(phi: &PhiSpec, base_point: Option<f64>) -> Result<Self> {
        let s0 = base_point.unwrap_or(1.0);
        if !(s0.is_finite() && s0 > 0.0) {
            return Err(Error::InvalidSpec(format!("base point {s0} must be positive")));
        }
        let from_zero = match phi.integrable_at_zero_closed() {
            Some(b) => b,
            None => match &phi.kind {
                PhiKind::Tabulated(t) => t.slope[0] > 0.0,
                _ => false,
            },
        };
        let origin = if from_zero { PhiOrigin::Zero } else { PhiOrigin::Base(s0) };
        let method = match phi.kind {
            PhiKind::Power { .. } => PhiMethod::ClosedForm,
            _ => PhiMethod::Quadrature,
        };
        Ok(Self {
            phi: phi.clone(),
            origin,
            method,
        })
    }

    pub fn origin(&self) -> PhiOrigin {
        self.origin
    }

    pub fn method(&self) -> PhiMethod {
        self.method
    }

    /// Φ(s), rejecting arguments outside the certified domain.
    pub fn eval(&self, s: f64) -> Result<f64> {
        self.phi.check_domain(s)?;
        Ok(self.eval_unchecked(s))
    }

    pub(crate) fn eval_unchecked(&self, s: f64) -> f64 {
        match (&self.phi.kind, self.origin) {
            (PhiKind::Power { q }, PhiOrigin::Zero) => self.phi.pow_q(s, *q) / q,
            (PhiKind::Power { q }, PhiOrigin::Base(s0)) => {
                if *q == 0.0 {
                    (s / s0).ln()
                } else {
                    (self.phi.pow_q(s, *q) - self.phi.pow_q(s0, *q)) / q
                }
            }
            (PhiKind::PowerExp { q, a }, PhiOrigin::Zero) => {
                // w = t^q turns t^{q-1} dt into dw / q
                let (q, a) = (*q, *a);
                quad::integrate(|w: f64| (-a * w.powf(1.0 / q)).exp(), 0.0, s.powf(q), PHI_QUAD_TOL * q)
                    / q
            }
            (PhiKind::Tabulated(t), PhiOrigin::Zero) => {
                let (lo, _) = t.s_range();
                // power-law tail below the table: ∫₀^lo = φ(lo)/g₀
                self.phi.eval(lo) / t.slope[0] + self.log_integral(lo, s)
            }
            (_, PhiOrigin::Base(s0)) => self.log_integral(s0, s),
        }
    }

    /// ∫_a^b φ(t)/t dt in the variable τ = ln t.
    fn log_integral(&self, a: f64, b: f64) -> f64 {
        quad::integrate(|tau: f64| self.phi.eval(tau.exp()), a.ln(), b.ln(), PHI_QUAD_TOL)
    }
}

/// Result of the decreasing-type hypothesis check.
#[derive(Clone, Debug, PartialEq)]
pub struct CaseIReport {
    pub pass: bool,
    /// Supremum of `sφ′/φ` found (closed form when available, else sampled).
    pub sup: f64,
    pub sup_sampled: f64,
    pub sup_closed: Option<f64>,
    pub certified_domain: (f64, f64),
}

/// Checks `sup_{s>0} s φ′(s)/φ(s) < 0`.
///
/// Sampling covers only the certified domain; where the closed form is
/// known it supersedes the samples.
pub fn check_case_i(phi: &PhiSpec) -> CaseIReport {
    let (lo, hi) = phi.domain();
    let (llo, lhi) = (lo.ln(), hi.ln());
    let sup_sampled = (0..CASE_I_SAMPLES)
        .map(|i| {
            let t = llo + (lhi - llo) * i as f64 / (CASE_I_SAMPLES - 1) as f64;
            phi.log_slope(t.exp())
        })
        .fold(f64::NEG_INFINITY, f64::max);
    let sup_closed = phi.log_slope_sup_closed();
    let sup = sup_closed.map_or(sup_sampled, |c| c.max(sup_sampled));
    CaseIReport {
        pass: sup <= -CASE_I_MARGIN,
        sup,
        sup_sampled,
        sup_closed,
        certified_domain: (lo, hi),
    }
}

/// Result of the integrable-primitive / even-density check.
#[derive(Clone, Debug, PartialEq)]
pub struct CaseIIReport {
    pub pass: bool,
    pub phi_integrable_at_zero: bool,
    pub integrability_method: &'static str,
    pub density_even: bool,
}

/// Numerical Cauchy test for `∫_0^{s₀} φ(s)/s ds < ∞`: dyadic increments
/// `∫_{s₀/2^k}^{s₀/2^{k-1}}` must fall below `1e-10` while still shrinking.
pub fn cauchy_integrable_at_zero(phi: &PhiSpec, s0: f64) -> bool {
    let mut prev = f64::INFINITY;
    let mut upper = s0;
    for k in 1..=1000 {
        let lower = upper * 0.5;
        let inc = quad::integrate(|tau: f64| phi.eval(tau.exp()), lower.ln(), upper.ln(), 1e-14);
        if !inc.is_finite() {
            return false;
        }
        if inc.abs() < 1e-10 {
            return true;
        }
        if k >= 8 && inc.abs() >= prev * (1.0 - 1e-3) {
            return false;
        }
        prev = inc.abs();
        upper = lower;
    }
    false
}

/// Checks Φ finite at 0 together with the evenness flag on f. Evenness of the
/// initial body is enforced when the run is configured.
pub fn check_case_ii(phi: &PhiSpec, density: &DensitySpec) -> CaseIIReport {
    let (integrable, method) = match phi.integrable_at_zero_closed() {
        Some(b) => (b, "closed form"),
        None => (cauchy_integrable_at_zero(phi, phi.domain().0), "cauchy differences"),
    };
    CaseIIReport {
        pass: integrable && density.even,
        phi_integrable_at_zero: integrable,
        integrability_method: method,
        density_even: density.even,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum DensityKind {
    Constant(f64),
    Harmonic(HarmonicSeries),
    /// One value per grid node.
    Tabulated(Vec<f64>),
}

/// Prescribed density f together with the evenness claim.
#[derive(Clone, Debug, PartialEq)]
pub struct DensitySpec {
    pub kind: DensityKind,
    pub even: bool,
}

/// Density sampled and validated on a grid.
#[derive(Clone, Debug)]
pub struct DensityField {
    pub values: ScalarField,
    pub even: bool,
    /// `∫ f dx` by grid quadrature.
    pub integral: f64,
}

/// Largest `|g(x) − g(−x)|` over the nodes.
pub fn odd_part_sup(grid: &SphereGrid, values: &[f64]) -> f64 {
    values
        .iter()
        .zip(grid.antipode())
        .map(|(v, &a)| (v - values[a]).abs())
        .fold(0.0, f64::max)
}

impl DensitySpec {
    pub fn constant(c: f64) -> Self {
        Self {
            kind: DensityKind::Constant(c),
            even: true,
        }
    }

    pub fn harmonic(series: HarmonicSeries, even: bool) -> Self {
        Self {
            kind: DensityKind::Harmonic(series),
            even,
        }
    }

    /// Samples f on the grid and validates positivity and, when claimed, evenness.
    pub fn sample(&self, grid: &SphereGrid) -> Result<DensityField> {
        let values = match &self.kind {
            DensityKind::Constant(c) => ScalarField::constant(grid, *c),
            DensityKind::Harmonic(s) => {
                s.validate(grid.dim())?;
                ScalarField::from_fn(grid, |x| s.eval(x))
            }
            DensityKind::Tabulated(v) => {
                grid.check_len(v.len())?;
                ScalarField::new(v.clone())
            }
        };
        for (i, &f) in values.iter().enumerate() {
            if !(f.is_finite() && f > 0.0) {
                return Err(Error::InvalidSpec(format!(
                    "density must be positive: f = {f} at node {i}"
                )));
            }
        }
        if self.even {
            let odd = odd_part_sup(grid, &values);
            if odd > 1e-12 {
                return Err(Error::InvalidSpec(format!(
                    "density declared even but sup|f(x) - f(-x)| = {odd:e}"
                )));
            }
        }
        let integral = grid.weighted_sum(&values);
        Ok(DensityField {
            values,
            even: self.even,
            integral,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harmonics::HarmonicSeries;

    #[test]
    fn primitive_closed_forms() {
        let p = CapitalPhi::new(&PhiSpec::power(2.0), None).unwrap();
        assert_eq!(p.origin(), PhiOrigin::Zero);
        assert!((p.eval(1.0).unwrap() - 0.5).abs() < 1e-15);

        let p = CapitalPhi::new(&PhiSpec::power(-1.0), Some(1.0)).unwrap();
        assert_eq!(p.origin(), PhiOrigin::Base(1.0));
        assert!((p.eval(2.0).unwrap() - 0.5).abs() < 1e-15);

        let p = CapitalPhi::new(&PhiSpec::power(0.0), Some(2.0)).unwrap();
        assert!((p.eval(2.0 * std::f64::consts::E).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn primitive_by_quadrature_from_zero() {
        let p = CapitalPhi::new(&PhiSpec::power_exp(1.0, 1.0), None).unwrap();
        assert_eq!(p.origin(), PhiOrigin::Zero);
        assert_eq!(p.method(), PhiMethod::Quadrature);
        let v = p.eval(1.0).unwrap();
        assert!((v - (1.0 - (-1.0f64).exp())).abs() < 1e-12, "{v}");

        // q < 1: integrable singularity of t^{q-1}
        let p = CapitalPhi::new(&PhiSpec::power_exp(0.5, 0.0), None).unwrap();
        assert!((p.eval(4.0).unwrap() - 4.0).abs() < 1e-11);
    }

    #[test]
    fn primitive_outside_domain() {
        let phi = PhiSpec::power(2.0).with_domain((0.5, 2.0)).unwrap();
        let p = CapitalPhi::new(&phi, None).unwrap();
        assert!(matches!(p.eval(3.0), Err(Error::OutsideDomain { .. })));
        assert!(p.eval(1.0).is_ok());
    }

    #[test]
    fn primitive_is_increasing() {
        for phi in [PhiSpec::power(2.0), PhiSpec::power(-1.5), PhiSpec::power_exp(-1.0, 1.0)] {
            let p = CapitalPhi::new(&phi, None).unwrap();
            let vals: Vec<f64> = (1..40).map(|i| p.eval(0.1 * i as f64).unwrap()).collect();
            assert!(vals.windows(2).all(|w| w[1] > w[0]), "{phi}");
        }
    }

    #[test]
    fn case_i_examples() {
        let r = check_case_i(&PhiSpec::power(-2.0));
        assert!(r.pass);
        assert_eq!(r.sup, -2.0);
        let r = check_case_i(&PhiSpec::power(2.0));
        assert!(!r.pass);
        assert_eq!(r.sup, 2.0);
        // g(s) = −1 − s: sup over s > 0 is −1
        let r = check_case_i(&PhiSpec::power_exp(-1.0, 1.0));
        assert!(r.pass);
        assert_eq!(r.sup_closed, Some(-1.0));
        let lo = r.certified_domain.0;
        assert!((r.sup_sampled - (-1.0 - lo)).abs() < 1e-12);
    }

    #[test]
    fn case_i_matches_sign_of_power() {
        for q in [-3.0, -0.5, -1e-3, 0.0, 1e-3, 0.5, 4.0] {
            assert_eq!(check_case_i(&PhiSpec::power(q)).pass, q < 0.0, "q = {q}");
        }
    }

    #[test]
    fn case_ii_examples() {
        let even = DensitySpec::constant(1.0);
        assert!(check_case_ii(&PhiSpec::power(2.0), &even).pass);
        assert!(!check_case_ii(&PhiSpec::power(-1.0), &even).pass);
        let f = DensitySpec::harmonic(HarmonicSeries::constant(1.15).with_term(2, 2, 0.15), true);
        let r = check_case_ii(&PhiSpec::power_exp(1.0, 1.0), &f);
        assert!(r.pass);
        let odd = DensitySpec::harmonic(HarmonicSeries::constant(1.0).with_term(1, 1, 0.3), false);
        assert!(!check_case_ii(&PhiSpec::power(2.0), &odd).pass);
    }

    #[test]
    fn cauchy_test_agrees_with_closed_form() {
        assert!(cauchy_integrable_at_zero(&PhiSpec::power(2.0), 1.0));
        assert!(cauchy_integrable_at_zero(&PhiSpec::power_exp(1.0, 1.0), 1.0));
        assert!(!cauchy_integrable_at_zero(&PhiSpec::power(-1.0), 1.0));
        assert!(!cauchy_integrable_at_zero(&PhiSpec::power(0.0), 1.0));
    }

    #[test]
    fn tabulated_power_law_is_reproduced() {
        let s: Vec<f64> = (0..20).map(|i| 0.1 * 1.3f64.powi(i)).collect();
        let v: Vec<f64> = s.iter().map(|x| x.powf(-1.5)).collect();
        let phi = PhiSpec::tabulated(&s, &v).unwrap();
        for x in [0.2, 1.0, 3.7] {
            assert!((phi.eval(x) / x.powf(-1.5) - 1.0).abs() < 1e-12);
            assert!((phi.log_slope(x) + 1.5).abs() < 1e-12);
        }
        assert!(check_case_i(&phi).pass);
        let p = CapitalPhi::new(&phi, Some(1.0)).unwrap();
        let exact = (2.0f64.powf(-1.5) - 1.0) / -1.5;
        assert!((p.eval(2.0).unwrap() - exact).abs() < 1e-11);

        let v2: Vec<f64> = s.iter().map(|x| x * x).collect();
        let phi2 = PhiSpec::tabulated(&s, &v2).unwrap();
        let r = check_case_ii(&phi2, &DensitySpec::constant(1.0));
        assert!(r.pass && r.integrability_method == "cauchy differences");
        let p2 = CapitalPhi::new(&phi2, None).unwrap();
        assert_eq!(p2.origin(), PhiOrigin::Zero);
        assert!((p2.eval(1.0).unwrap() - 0.5).abs() < 1e-11);
    }

    #[test]
    fn density_validation() {
        let g = SphereGrid::circle(64).unwrap();
        let bad = DensitySpec::harmonic(HarmonicSeries::constant(1.0).with_term(1, 1, 1.5), false);
        let err = bad.sample(&g).unwrap_err().to_string();
        assert!(err.contains("positive"), "{err}");
        let lying = DensitySpec::harmonic(HarmonicSeries::constant(1.0).with_term(1, 1, 0.3), true);
        assert!(lying.sample(&g).is_err());
        let ok = DensitySpec::harmonic(HarmonicSeries::constant(1.0).with_term(2, 2, 0.2), true);
        let field = ok.sample(&g).unwrap();
        assert_eq!(odd_part_sup(&g, &field.values), 0.0);
        assert!((field.integral - 2.0 * std::f64::consts::PI).abs() < 1e-12);
    }
}
