//! JSON run configuration.
//!
//! ```json
//! {
//!   "grid":    { "dim": 1, "resolution": 256 },
//!   "phi":     { "kind": "power", "params": { "q": 2.0 }, "domain": [1e-6, 1e6] },
//!   "density": { "kind": "harmonic", "params": { "c0": 1.0, "terms": [ { "l": 2, "m": 2, "coef": 0.2 } ] }, "even": true },
//!   "initial": { "kind": "sphere", "params": { "radius": 1.0 } },
//!   "flow":    { "case": "ii", "tol_stop": 1e-9, "max_steps": 500000 },
//!   "output":  { "directory": "out", "emit_profiles_every": 0 }
//! }
//! ```
//!
//! Unknown keys are rejected at every level.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::flow::{Case, FlowConfig, InitialBody};
use crate::harmonics::HarmonicSeries;
use crate::orlicz::{DensityKind, DensitySpec, PhiKind, PhiSpec};
use crate::sphere::Resolution;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub grid: GridSection,
    pub phi: PhiSection,
    pub density: DensitySection,
    pub initial: InitialSection,
    pub flow: FlowSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ResolutionValue {
    Circle(usize),
    LatLon([usize; 2]),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub dim: usize,
    pub resolution: ResolutionValue,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhiSection {
    pub kind: String,
    pub params: Value,
    #[serde(default)]
    pub domain: Option<[f64; 2]>,
    #[serde(default)]
    pub base_point: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensitySection {
    pub kind: String,
    pub params: Value,
    #[serde(default)]
    pub even: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    pub kind: String,
    pub params: Value,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowSection {
    pub case: Case,
    pub dt0: Option<f64>,
    pub dt_min: Option<f64>,
    pub dt_max: Option<f64>,
    pub tol_stop: Option<f64>,
    pub tol_theta: Option<f64>,
    pub theta_window: Option<usize>,
    pub max_steps: Option<usize>,
    pub growth: Option<f64>,
    pub c_cfl: Option<f64>,
    pub guard_factor: Option<f64>,
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub directory: Option<PathBuf>,
    /// Write a profile snapshot every this many accepted steps (0 disables).
    #[serde(default)]
    pub emit_profiles_every: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PowerParams {
    q: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PowerExpParams {
    q: f64,
    a: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TableParams {
    s: Vec<f64>,
    phi: Vec<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ConstantParams {
    c: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ValuesParams {
    values: Vec<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SphereParams {
    radius: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EllipsoidParams {
    axes: Vec<f64>,
}

fn params<T: DeserializeOwned>(section: &str, kind: &str, v: &Value) -> Result<T> {
    serde_json::from_value(v.clone())
        .map_err(|e| Error::Config(format!("{section} kind '{kind}': {e}")))
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn resolution(&self) -> Result<Resolution> {
        match (self.grid.dim, &self.grid.resolution) {
            (1, ResolutionValue::Circle(n)) => Ok(Resolution::Circle(*n)),
            (2, ResolutionValue::LatLon([lat, lon])) => Ok(Resolution::LatLon { lat: *lat, lon: *lon }),
            (d, r) => Err(Error::Config(format!(
                "grid resolution {r:?} does not fit dimension {d}"
            ))),
        }
    }

    pub fn phi_spec(&self) -> Result<PhiSpec> {
        let p = &self.phi;
        let kind = match p.kind.as_str() {
            "power" => {
                let v: PowerParams = params("phi", &p.kind, &p.params)?;
                PhiKind::Power { q: v.q }
            }
            "power_exp" => {
                let v: PowerExpParams = params("phi", &p.kind, &p.params)?;
                PhiKind::PowerExp { q: v.q, a: v.a }
            }
            "tabulated" => {
                let v: TableParams = params("phi", &p.kind, &p.params)?;
                let spec = PhiSpec::tabulated(&v.s, &v.phi)?;
                return match p.domain {
                    Some([lo, hi]) => spec.with_domain((lo, hi)),
                    None => Ok(spec),
                };
            }
            other => return Err(Error::Config(format!("unknown phi kind '{other}'"))),
        };
        let domain = p.domain.map_or((1e-6, 1e6), |[lo, hi]| (lo, hi));
        PhiSpec::new(kind, domain)
    }

    pub fn density_spec(&self) -> Result<DensitySpec> {
        let d = &self.density;
        let kind = match d.kind.as_str() {
            "constant" => DensityKind::Constant(params::<ConstantParams>("density", &d.kind, &d.params)?.c),
            "harmonic" => DensityKind::Harmonic(params::<HarmonicSeries>("density", &d.kind, &d.params)?),
            "tabulated" => DensityKind::Tabulated(params::<ValuesParams>("density", &d.kind, &d.params)?.values),
            other => return Err(Error::Config(format!("unknown density kind '{other}'"))),
        };
        Ok(DensitySpec { kind, even: d.even })
    }

    pub fn initial_body(&self) -> Result<InitialBody> {
        let s = &self.initial;
        Ok(match s.kind.as_str() {
            "sphere" => InitialBody::Sphere {
                radius: params::<SphereParams>("initial", &s.kind, &s.params)?.radius,
            },
            "ellipsoid" => {
                let v: EllipsoidParams = params("initial", &s.kind, &s.params)?;
                if v.axes.len() != self.grid.dim + 1 {
                    return Err(Error::Config(format!(
                        "ellipsoid needs {} axes on S^{}",
                        self.grid.dim + 1,
                        self.grid.dim
                    )));
                }
                let mut axes = [1.0; 3];
                axes[..v.axes.len()].copy_from_slice(&v.axes);
                InitialBody::Ellipsoid { axes }
            }
            "harmonic" => InitialBody::Harmonic(params("initial", &s.kind, &s.params)?),
            "tabulated" => InitialBody::Tabulated(params::<ValuesParams>("initial", &s.kind, &s.params)?.values),
            other => return Err(Error::Config(format!("unknown initial kind '{other}'"))),
        })
    }

    /// Flow configuration with defaults filled in; hypotheses are checked
    /// later, when the flow is built.
    pub fn flow_config(&self) -> Result<FlowConfig> {
        let mut c = FlowConfig::new(
            self.resolution()?,
            self.phi_spec()?,
            self.density_spec()?,
            self.initial_body()?,
            self.flow.case,
        );
        let f = &self.flow;
        c.base_point = self.phi.base_point;
        c.dt0 = f.dt0;
        if let Some(v) = f.dt_min {
            c.dt_min = v;
        }
        if let Some(v) = f.dt_max {
            c.dt_max = v;
        }
        if let Some(v) = f.tol_stop {
            c.tol_stop = v;
        }
        if let Some(v) = f.tol_theta {
            c.tol_theta = v;
        }
        if let Some(v) = f.theta_window {
            c.theta_window = v;
        }
        if let Some(v) = f.max_steps {
            c.max_steps = v;
        }
        if let Some(v) = f.growth {
            c.growth = v;
        }
        if let Some(v) = f.c_cfl {
            c.c_cfl = v;
        }
        if let Some(v) = f.guard_factor {
            c.guard_factor = v;
        }
        if let Some(v) = f.seed {
            c.seed = v;
        }
        c.validate_numbers()?;
        Ok(c)
    }
}
