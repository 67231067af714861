//! Run configuration, read from TOML.
//!
//! Every table rejects unknown keys. A minimal stable run:
//!
//! ```toml
//! schema_version = 1
//! seed = 7
//!
//! [measure]
//! kind = "stable"
//! dim = 1
//! sigma = 1.5
//!
//! [scaling]
//! kind = "stable"
//! sigma = 1.5
//! alpha1 = 1.5
//! alpha2 = 1.5
//!
//! [grid]
//! n = 256
//! period = 8.0
//! ```
//!
//! Sections:
//!
//! - `measure`, `measure0`: `kind = "stable"` (`dim`, `sigma`, `scale`),
//!   `"subordinated"` (`dim`, `bernstein = { family = ... }`, `modifier`,
//!   `sphere`) or `"atomic"` (`dim`, `atoms = [[[y...], mass], ...]`).
//!   `measure0` defaults to `measure`.
//! - `scaling`: `kind = "stable"` (`sigma`, `alpha1`, `alpha2`) or
//!   `"explicit"` (`kappa`, `l`, `alpha1`, `alpha2`).
//! - `grid`: `n`, `period`, `time_steps`.
//! - `symbol`: `bounds` also runs the symbol bounds against `scaling`.
//! - `density`: `times`, `order`, `min_period`.
//! - `simulate`: `horizon`, `n_paths`, `eps_cut`.
//! - `problem`: `kind` (`parabolic` or `elliptic`), `lambda`, `horizon`,
//!   `forcing`, optional `mc` cross-check.
//! - `verify`: `items`, `bank_size`, `bank_seed`.
//! - `cz`: `input`, `alpha`, grid shape, `pad`.

use std::path::PathBuf;

use levy_lp::bernstein::BernsteinSpec;
use levy_lp::measure::{
    build_atomic, build_stable, build_subordinated, LevyMeasureSpec, Modifier, SphereMeasure,
};
use levy_lp::scaling::{ScaleFn, ScalingFunction};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub seed: Option<u64>,
    pub measure: MeasureConfig,
    #[serde(default)]
    pub measure0: Option<MeasureConfig>,
    #[serde(default)]
    pub scaling: Option<ScalingConfig>,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub symbol: SymbolConfig,
    #[serde(default)]
    pub density: Option<DensityConfig>,
    #[serde(default)]
    pub simulate: Option<SimulateConfig>,
    #[serde(default)]
    pub problem: Option<ProblemConfig>,
    #[serde(default)]
    pub verify: Option<VerifyConfig>,
    #[serde(default)]
    pub cz: Option<CzConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MeasureConfig {
    Stable {
        dim: usize,
        sigma: f64,
        #[serde(default = "one")]
        scale: f64,
    },
    Subordinated {
        dim: usize,
        bernstein: BernsteinSpec,
        #[serde(default = "unit_modifier")]
        modifier: Modifier,
        #[serde(default = "SphereMeasure::lebesgue")]
        sphere: SphereMeasure,
    },
    Atomic {
        dim: usize,
        atoms: Vec<(Vec<f64>, f64)>,
        #[serde(default)]
        order_flag: f64,
    },
}

fn one() -> f64 {
    1.0
}

fn unit_modifier() -> Modifier {
    Modifier::Unit
}

impl MeasureConfig {
    pub fn build(&self) -> levy_lp::Result<LevyMeasureSpec> {
        match self {
            MeasureConfig::Stable { dim, sigma, scale } => build_stable(*dim, *sigma, *scale),
            MeasureConfig::Subordinated {
                dim,
                bernstein,
                modifier,
                sphere,
            } => build_subordinated(*dim, bernstein.clone(), modifier.clone(), sphere.clone()),
            MeasureConfig::Atomic {
                dim,
                atoms,
                order_flag,
            } => build_atomic(*dim, atoms.clone(), *order_flag),
        }
    }

    pub fn bernstein(&self) -> Option<&BernsteinSpec> {
        match self {
            MeasureConfig::Subordinated { bernstein, .. } => Some(bernstein),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScalingConfig {
    Stable {
        sigma: f64,
        alpha1: f64,
        alpha2: f64,
    },
    Explicit {
        kappa: ScaleFn,
        l: ScaleFn,
        alpha1: f64,
        alpha2: f64,
    },
}

impl ScalingConfig {
    pub fn build(&self) -> ScalingFunction {
        match self {
            ScalingConfig::Stable {
                sigma,
                alpha1,
                alpha2,
            } => ScalingFunction::stable(*sigma, *alpha1, *alpha2),
            ScalingConfig::Explicit {
                kappa,
                l,
                alpha1,
                alpha2,
            } => {
                let mut sf = ScalingFunction::stable(1.0, *alpha1, *alpha2);
                sf.kappa = kappa.clone();
                sf.l = l.clone();
                sf
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub n: usize,
    pub period: f64,
    #[serde(default = "default_steps")]
    pub time_steps: usize,
}

fn default_steps() -> usize {
    16
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            n: 256,
            period: 8.0,
            time_steps: default_steps(),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SymbolConfig {
    #[serde(default)]
    pub bounds: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensityConfig {
    pub times: Vec<f64>,
    #[serde(default)]
    pub order: usize,
    #[serde(default)]
    pub min_period: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub horizon: f64,
    pub n_paths: usize,
    #[serde(default = "default_eps")]
    pub eps_cut: f64,
}

fn default_eps() -> f64 {
    1e-3
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    Parabolic,
    Elliptic,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ForcingConfig {
    Constant {
        value: f64,
    },
    /// Member of the seeded function bank.
    Bank {
        index: usize,
        seed: u64,
    },
    /// One value per grid point in row-major order, last column of each row.
    Csv {
        path: PathBuf,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McConfig {
    pub n_paths: usize,
    #[serde(default = "default_probes")]
    pub probes: usize,
    #[serde(default = "default_eps")]
    pub eps_cut: f64,
    /// Elliptic runs: integration horizon of the resolvent time integral.
    #[serde(default = "default_t_max")]
    pub t_max: f64,
}

fn default_probes() -> usize {
    10
}

fn default_t_max() -> f64 {
    20.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub kind: ProblemKind,
    pub lambda: f64,
    #[serde(default = "one")]
    pub horizon: f64,
    pub forcing: ForcingConfig,
    #[serde(default)]
    pub mc: Option<McConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerifyItem {
    SymbolBounds,
    ExplicitConstants,
    EnergyIdentity,
    AssumptionH,
    AssumptionD,
    TailMass,
    ScalingIdentity,
    DensityBounds,
    Ld1,
    Engulfing,
    Hormander,
}

impl VerifyItem {
    pub fn name(self) -> &'static str {
        match self {
            VerifyItem::SymbolBounds => "symbol_bounds",
            VerifyItem::ExplicitConstants => "explicit_constants",
            VerifyItem::EnergyIdentity => "energy_identity",
            VerifyItem::AssumptionH => "assumption_h",
            VerifyItem::AssumptionD => "assumption_d",
            VerifyItem::TailMass => "tail_mass",
            VerifyItem::ScalingIdentity => "scaling_identity",
            VerifyItem::DensityBounds => "density_bounds",
            VerifyItem::Ld1 => "ld1",
            VerifyItem::Engulfing => "engulfing",
            VerifyItem::Hormander => "hormander",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    pub items: Vec<VerifyItem>,
    #[serde(default = "default_bank")]
    pub bank_size: usize,
    #[serde(default)]
    pub bank_seed: u64,
    #[serde(default)]
    pub lambda: f64,
}

fn default_bank() -> usize {
    50
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CzInput {
    /// Point mass at the grid center.
    Spike { mass: f64 },
    /// Seeded heavy-tailed noise.
    Random { amplitude: f64 },
    /// Values in row-major (t, x...) order, last column of each row.
    Csv { path: PathBuf },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CzConfig {
    pub input: CzInput,
    pub alpha: f64,
    #[serde(default = "default_cells")]
    pub nt: usize,
    #[serde(default = "default_cells")]
    pub nx: usize,
    #[serde(default = "default_step")]
    pub dt: f64,
    #[serde(default = "default_step")]
    pub dx: f64,
    #[serde(default = "yes")]
    pub pad: bool,
}

fn default_cells() -> usize {
    32
}

fn default_step() -> f64 {
    1.0 / 32.0
}

fn yes() -> bool {
    true
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| CliError::Validation(e.to_string()))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(CliError::Validation(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        Ok(cfg)
    }

    pub fn scaling(&self) -> Result<ScalingFunction, CliError> {
        self.scaling
            .as_ref()
            .map(ScalingConfig::build)
            .ok_or_else(|| CliError::Validation("this run needs a [scaling] section".into()))
    }

    pub fn seed(&self) -> Result<u64, CliError> {
        self.seed.ok_or_else(|| {
            CliError::Validation("Monte Carlo steps need a seed (config or --seed)".into())
        })
    }

    pub fn measure0(&self) -> &MeasureConfig {
        self.measure0.as_ref().unwrap_or(&self.measure)
    }
}
