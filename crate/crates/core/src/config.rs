//! Run configuration: a flat JSON object with defaults for everything except
//! the mass.
//!
//! ```json
//! { "n": 2, "mass_sigma": 1.0, "mode": "sweep" }
//! ```

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{CmcError, Result};
use crate::foliation::Schedule;
use crate::metric::{MetricSpec, Perturbation};
use crate::solver::SolverOptions;
use crate::verification::{BasinBounds, BasinConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Sweep,
    Verify,
    OracleCheck,
}

impl std::str::FromStr for Mode {
    type Err = CmcError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sweep" => Ok(Mode::Sweep),
            "verify" => Ok(Mode::Verify),
            "oracle-check" => Ok(Mode::OracleCheck),
            other => Err(CmcError::Config(format!("unknown mode `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

/// The file as written, before validation.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default = "defaults::n")]
    n: usize,
    mass_sigma: Option<f64>,
    #[serde(default = "defaults::perturbation")]
    perturbation: Perturbation,
    #[serde(default = "defaults::r_min")]
    r_min: f64,
    #[serde(default = "defaults::mode")]
    mode: Mode,
    #[serde(default = "defaults::r_start")]
    r_start: f64,
    #[serde(default = "defaults::r_end")]
    r_end: f64,
    #[serde(default = "defaults::ratio")]
    ratio: f64,
    #[serde(default = "defaults::lmax")]
    lmax: usize,
    nlat: Option<usize>,
    nlon: Option<usize>,
    #[serde(default = "defaults::solver_tol")]
    solver_tol: f64,
    #[serde(default = "defaults::newton_tol")]
    newton_tol: f64,
    #[serde(default = "defaults::basin_tol")]
    basin_tol: f64,
    #[serde(default = "defaults::r_max_solver")]
    r_max_solver: f64,
    #[serde(default = "defaults::out_dir")]
    out_dir: PathBuf,
    #[serde(default = "defaults::formats")]
    formats: Vec<Format>,
    seed: Option<u64>,
    #[serde(default = "defaults::basin_trials")]
    basin_trials: usize,
    #[serde(default = "defaults::basin_dtau")]
    basin_dtau: f64,
    #[serde(default = "defaults::basin_dphi")]
    basin_dphi: f64,
    #[serde(default = "defaults::basin_r")]
    basin_r: f64,
    #[serde(default)]
    p0: [f64; 3],
}

mod defaults {
    use super::*;

    pub fn n() -> usize {
        2
    }
    pub fn perturbation() -> Perturbation {
        Perturbation::None
    }
    pub fn r_min() -> f64 {
        1.0
    }
    pub fn mode() -> Mode {
        Mode::Sweep
    }
    pub fn r_start() -> f64 {
        0.1
    }
    pub fn r_end() -> f64 {
        0.02
    }
    pub fn ratio() -> f64 {
        0.8
    }
    pub fn lmax() -> usize {
        16
    }
    pub fn solver_tol() -> f64 {
        1e-10
    }
    pub fn newton_tol() -> f64 {
        1e-10
    }
    pub fn basin_tol() -> f64 {
        1e-8
    }
    pub fn r_max_solver() -> f64 {
        0.15
    }
    pub fn out_dir() -> PathBuf {
        PathBuf::from("out")
    }
    pub fn formats() -> Vec<Format> {
        vec![Format::Csv, Format::Json]
    }
    pub fn basin_trials() -> usize {
        20
    }
    pub fn basin_dtau() -> f64 {
        0.1
    }
    pub fn basin_dphi() -> f64 {
        0.05
    }
    pub fn basin_r() -> f64 {
        0.05
    }
}

/// A validated run.
#[derive(Clone, Debug)]
pub struct RunSpec {
    pub metric: MetricSpec,
    pub schedule: Schedule,
    pub solver: SolverOptions,
    pub basin_tol: f64,
    pub out_dir: PathBuf,
    pub formats: Vec<Format>,
    pub mode: Mode,
    pub seed: Option<u64>,
    pub basin_trials: usize,
    pub basin_bounds: BasinBounds,
    pub basin_r: f64,
    pub p0: [f64; 3],
}

/// Command-line overrides applied before validation.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub mode: Option<Mode>,
    pub out_dir: Option<PathBuf>,
    pub seed: Option<u64>,
}

pub fn parse_config(text: &str) -> Result<RunSpec> {
    parse_config_with(text, &Overrides::default())
}

pub fn parse_config_with(text: &str, overrides: &Overrides) -> Result<RunSpec> {
    let raw: RawConfig = serde_json::from_str(text).map_err(|e| CmcError::Config(e.to_string()))?;
    let mode = overrides.mode.unwrap_or(raw.mode);
    let seed = overrides.seed.or(raw.seed);
    let sigma = raw.mass_sigma.ok_or_else(|| CmcError::Config("mass_sigma required".into()))?;
    if sigma == 0.0 && mode != Mode::OracleCheck {
        return Err(CmcError::Config("nonzero mass required".into()));
    }
    if mode == Mode::Verify && seed.is_none() {
        return Err(CmcError::Config("seed required for mode verify".into()));
    }
    if raw.lmax < 8 {
        return Err(CmcError::Config(format!("lmax = {} below 8", raw.lmax)));
    }
    let (nlat, nlon) = (raw.lmax + 2, 2 * raw.lmax + 4);
    if raw.nlat.is_some_and(|v| v != nlat) || raw.nlon.is_some_and(|v| v != nlon) {
        return Err(CmcError::Config(format!("the grid for lmax = {} is fixed at nlat = {nlat}, nlon = {nlon}", raw.lmax)));
    }
    for (name, v) in [
        ("solver_tol", raw.solver_tol),
        ("newton_tol", raw.newton_tol),
        ("basin_tol", raw.basin_tol),
        ("r_max_solver", raw.r_max_solver),
    ] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(CmcError::Config(format!("{name} must be positive, got {v}")));
        }
    }
    if !(raw.basin_dtau >= 0.0 && raw.basin_dphi >= 0.0 && raw.basin_r > 0.0) {
        return Err(CmcError::Config("basin bounds must be nonnegative and basin_r positive".into()));
    }
    let schedule = Schedule { r_start: raw.r_start, r_end: raw.r_end, ratio: raw.ratio };
    schedule.validate()?;
    let metric = MetricSpec::new(raw.n, sigma, raw.perturbation, raw.r_min).map_err(|e| CmcError::Config(e.to_string()))?;
    let solver = SolverOptions {
        lmax: raw.lmax,
        tol: raw.solver_tol,
        center_tol: raw.newton_tol,
        r_max: raw.r_max_solver,
        ..SolverOptions::default()
    };
    Ok(RunSpec {
        metric,
        schedule,
        solver,
        basin_tol: raw.basin_tol,
        out_dir: overrides.out_dir.clone().unwrap_or(raw.out_dir),
        formats: raw.formats,
        mode,
        seed,
        basin_trials: raw.basin_trials,
        basin_bounds: BasinBounds { dtau: raw.basin_dtau, dphi: raw.basin_dphi },
        basin_r: raw.basin_r,
        p0: raw.p0,
    })
}

impl RunSpec {
    pub fn basin_config(&self) -> Option<BasinConfig> {
        self.seed.map(|seed| BasinConfig {
            trials: self.basin_trials,
            bounds: self.basin_bounds,
            seed,
            tolerance: self.basin_tol,
        })
    }
}
