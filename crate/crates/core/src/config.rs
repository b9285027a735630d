//! Run configuration: one TOML file, schema versioned, validated at load.
//!
//! Randomized fixtures derive from the seed through ChaCha8 streams; stream
//! `s` of seed `x` is `ChaCha8Rng::seed_from_u64(x)` with `set_stream(s)`,
//! so a fixture is reproducible from `(seed, stream)` alone.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Dispersion, MomentumGrid, ScaleParams};
use crate::kernels::KernelNormConfig;
use crate::ladders::BubbleQuadrature;
use crate::norm_domain::Shape;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}")]
    Io { path: String, source: std::io::Error },
    #[error("parsing config")]
    Parse(#[from] toml::de::Error),
    #[error("schema_version {found} is not supported (expected {expected})")]
    Schema { found: u32, expected: u32 },
    #[error("invalid configuration: {}", .0.join("; "))]
    Invalid(Vec<String>),
}

/// Parameters of the renormalization-group flow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RGConfig {
    pub lambda0: f64,
    pub upsilon: f64,
    pub alpha: f64,
    /// Lower end `ᾱ` of the admissible `α` window.
    pub alpha_bar: f64,
    pub b_const: f64,
    /// Envelope constant used when logging the fixed-point contraction.
    pub kappa: f64,
    /// Degree of asymmetry of the dispersion.
    pub n0: u32,
    pub ell_max: usize,
    pub fixpoint_tol: f64,
    pub fixpoint_max_iter: usize,
    /// Strength of the toy interaction; defaults to `lambda0`.
    pub coupling: Option<f64>,
    pub shape: Shape,
    pub generator_cap: usize,
}

impl Default for RGConfig {
    fn default() -> Self {
        RGConfig {
            lambda0: 1e-3,
            upsilon: 0.1,
            alpha: 10.0,
            alpha_bar: 1.0,
            b_const: 1.0,
            kappa: 1.0,
            n0: 1,
            ell_max: 2,
            fixpoint_tol: 1e-12,
            fixpoint_max_iter: 20,
            coupling: None,
            shape: Shape::default(),
            generator_cap: crate::grassmann::DEFAULT_CAP,
        }
    }
}

impl RGConfig {
    pub fn kernel_norms(&self) -> KernelNormConfig {
        KernelNormConfig { lambda0: self.lambda0, upsilon: self.upsilon, b_const: self.b_const }
    }

    pub fn coupling(&self) -> f64 {
        self.coupling.unwrap_or(self.lambda0)
    }

    /// Upper end `λ0^{-υ/10}` of the `α` window.
    pub fn alpha_ceiling(&self) -> f64 {
        self.lambda0.powf(-self.upsilon / 10.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurveConfig {
    pub extent: f64,
    pub n: usize,
    pub tube: f64,
}

impl Default for CurveConfig {
    fn default() -> Self {
        CurveConfig { extent: 1.6, n: 256, tube: 0.6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometryConfig {
    pub js: Vec<i32>,
    pub grid: MomentumGrid,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        GeometryConfig { js: vec![2, 3, 4, 5], grid: MomentumGrid { extent: [0.4, 1.5, 1.5], n: 64 } }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LadderConfig {
    pub js: Vec<i32>,
    /// Contact rung strength for the bubble scan.
    pub rung: f64,
    /// Random kernels per case in the decomposition suite.
    pub samples: usize,
    pub quadrature: BubbleQuadrature,
}

impl Default for LadderConfig {
    fn default() -> Self {
        LadderConfig { js: vec![2, 3, 4], rung: 1.0, samples: 100, quadrature: BubbleQuadrature::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowConfig {
    /// Last scale reached by the driver.
    pub j_max: i32,
    /// Scales probed by the λ-scaling diagnostic.
    pub lambdas: Vec<f64>,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig { j_max: 5, lambdas: vec![1e-4, 1e-3, 1e-2] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub seed: u64,
    pub dispersion: Dispersion,
    pub scale: ScaleParams,
    pub rg: RGConfig,
    pub curve: CurveConfig,
    pub geometry: GeometryConfig,
    pub ladders: LadderConfig,
    pub flow: FlowConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            schema_version: SCHEMA_VERSION,
            seed: 0,
            dispersion: Dispersion::default(),
            scale: ScaleParams::default(),
            rg: RGConfig::default(),
            curve: CurveConfig::default(),
            geometry: GeometryConfig::default(),
            ladders: LadderConfig::default(),
            flow: FlowConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckLevel {
    Ok,
    /// Outside the regime where the bounds are proven; runs proceed and audits are diagnostic.
    Warning,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub level: CheckLevel,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn accepted(&self) -> bool {
        self.checks.iter().all(|c| c.level != CheckLevel::Error)
    }

    pub fn errors(&self) -> Vec<String> {
        self.checks.iter().filter(|c| c.level == CheckLevel::Error).map(|c| format!("{}: {}", c.name, c.message)).collect()
    }
}

fn check(name: &str, ok: bool, level_if_bad: CheckLevel, message: String) -> Check {
    Check { name: name.into(), level: if ok { CheckLevel::Ok } else { level_if_bad }, message }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text)?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(ConfigError::Schema { found: cfg.schema_version, expected: SCHEMA_VERSION });
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> ValidationReport {
        use CheckLevel::{Error, Warning};
        let s = &self.scale;
        let rg = &self.rg;
        let mut checks = vec![
            check("M", s.m * s.m >= 2.0, Error, format!("M = {} needs M^2 >= 2", s.m)),
            check("aleph", s.aleph > 0.5 && s.aleph < 2.0 / 3.0, Error, format!("aleph = {} must satisfy 1/2 < aleph < 2/3", s.aleph)),
            check("j0", s.j0 >= 2, Error, format!("j0 = {} must be at least 2", s.j0)),
            check("jbar", s.jbar >= s.j0 + 2, Error, format!("infrared cutoff jbar = {} must be at least j0 + 2 = {}", s.jbar, s.j0 + 2)),
            check("upsilon", rg.upsilon > 0.0 && rg.upsilon < 0.25, Error, format!("upsilon = {} must satisfy 0 < upsilon < 1/4", rg.upsilon)),
            check("lambda0", rg.lambda0 > 0.0 && rg.lambda0 < 1.0, Error, format!("lambda0 = {} must lie in (0, 1)", rg.lambda0)),
            check("alpha", rg.alpha > 0.0, Error, format!("alpha = {} must be positive", rg.alpha)),
            check("b_const", rg.b_const > 0.0, Error, format!("B = {} must be positive", rg.b_const)),
            check("n0", rg.n0 >= 1, Error, format!("n0 = {} must be at least 1", rg.n0)),
            check("fixpoint", rg.fixpoint_tol > 0.0 && rg.fixpoint_max_iter >= 1, Error, "fixed-point tolerance must be positive and the iteration budget at least 1".into()),
            check("j_max", self.flow.j_max >= s.j0 && self.flow.j_max < s.jbar, Error, format!("j_max = {} must lie in [j0, jbar) = [{}, {})", self.flow.j_max, s.j0, s.jbar)),
        ];
        let ceil = rg.alpha_ceiling();
        checks.push(check(
            "alpha_window",
            rg.alpha_bar < rg.alpha && rg.alpha < ceil,
            Warning,
            format!(
                "alpha = {} is {} the window alpha_bar < alpha < lambda0^(-upsilon/10), here ({}, {:.6}); norm audits are diagnostic",
                rg.alpha,
                if rg.alpha_bar < rg.alpha && rg.alpha < ceil { "inside" } else { "outside" },
                rg.alpha_bar,
                ceil
            ),
        ));
        if let Err(e) = self.dispersion.validate() {
            checks.push(check("dispersion", false, Error, e.to_string()));
        }
        ValidationReport { checks }
    }

    /// Loads and rejects configurations with an `Error`-level check.
    pub fn load_validated(path: &Path) -> Result<Self, ConfigError> {
        let cfg = Self::load(path)?;
        let report = cfg.validate();
        if !report.accepted() {
            return Err(ConfigError::Invalid(report.errors()));
        }
        Ok(cfg)
    }

    pub fn rng(&self, stream: u64) -> ChaCha8Rng {
        fixture_rng(self.seed, stream)
    }
}

pub fn fixture_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
