//! Run configuration: one JSON file describing the problem class, model
//! coefficients, vortex lists, grid, and solver knobs.
//!
//! Parsing normalizes the input: complex condensate constants A, B, C collapse
//! to their squared moduli (only those enter the equations), and defaulted
//! exponents are materialized. Serializing the normalized form is canonical,
//! so parse then serialize is the identity on canonical files and every rerun
//! of a config writes byte-identical output.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::energy::ProblemClass;
use crate::grid::{Grid, GridError};
use crate::model::{ModelError, ScalarModel, SystemModel, Vortex, VortexSet};
use crate::solver::SolverOptions;

/// Cell edge used when a periodic config omits the grid section.
pub const DEFAULT_PERIODIC_EXTENT: f64 = 2.0 * std::f64::consts::PI;
/// Node count per axis used when a grid or box section omits it.
pub const DEFAULT_PERIODIC_NODES: usize = 256;
/// Planar grids prefer 2^k - 1 interior nodes for the sine transform.
pub const DEFAULT_PLANAR_NODES: usize = 255;

#[derive(Debug, Error)]
pub enum ConfigError {
    /// Syntax or schema violation; message carries "line L column C" from the
    /// parser, and the fields repeat the location for callers that position
    /// a cursor.
    #[error("config parse error: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("class {class} needs a `{section}` section")]
    MissingSection {
        class: &'static str,
        section: &'static str,
    },
    #[error("class {class} does not use the `{section}` section")]
    ForeignSection {
        class: &'static str,
        section: &'static str,
    },
    #[error("coupling {name} given both as a squared modulus and as complex components")]
    CouplingConflict { name: &'static str },
    #[error("{name} must be positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// Problem class tag; the serialized names are the CLI-facing vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassTag {
    ScalarPeriodic,
    ScalarPlanar,
    SystemPeriodic,
    SystemPlanar,
}

impl ClassTag {
    pub fn problem_class(self) -> ProblemClass {
        match self {
            ClassTag::ScalarPeriodic => ProblemClass::ScalarPeriodic,
            ClassTag::ScalarPlanar => ProblemClass::ScalarPlanar,
            ClassTag::SystemPeriodic => ProblemClass::SystemPeriodic,
            ClassTag::SystemPlanar => ProblemClass::SystemPlanar,
        }
    }

    pub fn is_scalar(self) -> bool {
        matches!(self, ClassTag::ScalarPeriodic | ClassTag::ScalarPlanar)
    }

    pub fn is_periodic(self) -> bool {
        matches!(self, ClassTag::ScalarPeriodic | ClassTag::SystemPeriodic)
    }

    fn name(self) -> &'static str {
        match self {
            ClassTag::ScalarPeriodic => "scalar_periodic",
            ClassTag::ScalarPlanar => "scalar_planar",
            ClassTag::SystemPeriodic => "system_periodic",
            ClassTag::SystemPlanar => "system_planar",
        }
    }
}

impl fmt::Display for ClassTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn one_f64() -> f64 {
    1.0
}

fn one_u32() -> u32 {
    1
}

/// Scalar equation coefficients. Each coupling may arrive as the squared
/// modulus (`a2`) or as complex components (`A: [re, im]`); normalization
/// keeps only the squared modulus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalarSection {
    pub lambda: f64,
    pub xi: f64,
    #[serde(default = "one_f64")]
    pub m: f64,
    #[serde(default = "one_f64")]
    pub n: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b2: Option<f64>,
    #[serde(rename = "A", default, skip_serializing_if = "Option::is_none")]
    pub a: Option<[f64; 2]>,
    #[serde(rename = "B", default, skip_serializing_if = "Option::is_none")]
    pub b: Option<[f64; 2]>,
}

/// Two-field system coefficients, same coupling conventions as the scalar
/// section plus the third constant C.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub lambda1: f64,
    pub lambda2: f64,
    pub xi1: f64,
    pub xi2: f64,
    #[serde(default = "one_u32")]
    pub m: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c2: Option<f64>,
    #[serde(rename = "A", default, skip_serializing_if = "Option::is_none")]
    pub a: Option<[f64; 2]>,
    #[serde(rename = "B", default, skip_serializing_if = "Option::is_none")]
    pub b: Option<[f64; 2]>,
    #[serde(rename = "C", default, skip_serializing_if = "Option::is_none")]
    pub c: Option<[f64; 2]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VortexEntry {
    pub x: f64,
    pub y: f64,
    #[serde(default = "one_u32")]
    pub mult: u32,
}

/// Periodic cell extents and node counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub lx: f64,
    pub ly: f64,
    #[serde(default = "default_periodic_nodes")]
    pub nx: usize,
    #[serde(default = "default_periodic_nodes")]
    pub ny: usize,
}

fn default_periodic_nodes() -> usize {
    DEFAULT_PERIODIC_NODES
}

/// Planar box: half width l and interior node counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxSection {
    pub l: f64,
    #[serde(default = "default_planar_nodes")]
    pub nx: usize,
    #[serde(default = "default_planar_nodes")]
    pub ny: usize,
}

fn default_planar_nodes() -> usize {
    DEFAULT_PLANAR_NODES
}

/// Solver knob overrides; absent keys keep the built-in defaults.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grad_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_newton: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cg_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cg_max: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub armijo_c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_backtracks: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_renormalize: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub equality_tol: Option<f64>,
}

impl SolverSection {
    fn is_empty(&self) -> bool {
        *self == SolverSection::default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub class: ClassTag,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scalar: Option<ScalarSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system: Option<SystemSection>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub vortices: Vec<VortexEntry>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub vortices2: Vec<VortexEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSection>,
    #[serde(rename = "box", default, skip_serializing_if = "Option::is_none")]
    pub box_: Option<BoxSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(default, skip_serializing_if = "SolverSection::is_empty")]
    pub solver: SolverSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<String>,
}

/// Normalizes one coupling: complex components become the squared modulus,
/// an absent coupling becomes zero, both forms at once is an error.
fn take_coupling(
    name: &'static str,
    squared: &mut Option<f64>,
    complex: &mut Option<[f64; 2]>,
) -> Result<(), ConfigError> {
    match (squared.as_ref(), complex.take()) {
        (Some(_), Some(_)) => return Err(ConfigError::CouplingConflict { name }),
        (None, Some([re, im])) => *squared = Some(re * re + im * im),
        (None, None) => *squared = Some(0.0),
        (Some(_), None) => {}
    }
    Ok(())
}

/// Parsing normalizes couplings and validates section/class consistency;
/// errors carry the line and column of the offending token.
impl std::str::FromStr for RunConfig {
    type Err = ConfigError;

    fn from_str(text: &str) -> Result<RunConfig, ConfigError> {
        let mut config: RunConfig =
            serde_json::from_str(text).map_err(|err| ConfigError::Parse {
                line: err.line(),
                column: err.column(),
                message: err.to_string(),
            })?;
        config.normalize()?;
        Ok(config)
    }
}

impl RunConfig {
    pub fn from_path(path: &Path) -> Result<RunConfig, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        text.parse()
    }

    /// Canonical serialization: normalized fields in declaration order,
    /// trailing newline. Reparsing reproduces `self` exactly.
    pub fn canonical(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("config serializes");
        text.push('\n');
        text
    }

    fn normalize(&mut self) -> Result<(), ConfigError> {
        if let Some(scalar) = self.scalar.as_mut() {
            take_coupling("a2", &mut scalar.a2, &mut scalar.a)?;
            take_coupling("b2", &mut scalar.b2, &mut scalar.b)?;
        }
        if let Some(system) = self.system.as_mut() {
            take_coupling("a2", &mut system.a2, &mut system.a)?;
            take_coupling("b2", &mut system.b2, &mut system.b)?;
            take_coupling("c2", &mut system.c2, &mut system.c)?;
        }
        self.check_sections()
    }

    fn check_sections(&self) -> Result<(), ConfigError> {
        let class = self.class.name();
        if self.class.is_scalar() {
            if self.scalar.is_none() {
                return Err(ConfigError::MissingSection {
                    class,
                    section: "scalar",
                });
            }
            if self.system.is_some() {
                return Err(ConfigError::ForeignSection {
                    class,
                    section: "system",
                });
            }
            if !self.vortices2.is_empty() {
                return Err(ConfigError::ForeignSection {
                    class,
                    section: "vortices2",
                });
            }
        } else {
            if self.system.is_none() {
                return Err(ConfigError::MissingSection {
                    class,
                    section: "system",
                });
            }
            if self.scalar.is_some() {
                return Err(ConfigError::ForeignSection {
                    class,
                    section: "scalar",
                });
            }
        }
        if self.class.is_periodic() {
            if self.box_.is_some() {
                return Err(ConfigError::ForeignSection {
                    class,
                    section: "box",
                });
            }
        } else if self.grid.is_some() {
            return Err(ConfigError::ForeignSection {
                class,
                section: "grid",
            });
        }
        Ok(())
    }

    pub fn problem_class(&self) -> ProblemClass {
        self.class.problem_class()
    }

    pub fn scalar_model(&self) -> Result<ScalarModel, ConfigError> {
        let section = self.scalar.as_ref().ok_or(ConfigError::MissingSection {
            class: self.class.name(),
            section: "scalar",
        })?;
        let model = ScalarModel {
            lambda: section.lambda,
            xi: section.xi,
            m: section.m,
            n: section.n,
            a2: section.a2.unwrap_or(0.0),
            b2: section.b2.unwrap_or(0.0),
        };
        model.validate()?;
        Ok(model)
    }

    pub fn system_model(&self) -> Result<SystemModel, ConfigError> {
        let section = self.system.as_ref().ok_or(ConfigError::MissingSection {
            class: self.class.name(),
            section: "system",
        })?;
        let model = SystemModel {
            lambda1: section.lambda1,
            lambda2: section.lambda2,
            xi1: section.xi1,
            xi2: section.xi2,
            m: section.m,
            a2: section.a2.unwrap_or(0.0),
            b2: section.b2.unwrap_or(0.0),
            c2: section.c2.unwrap_or(0.0),
        };
        model.validate()?;
        Ok(model)
    }

    pub fn vortex_set(&self) -> Result<VortexSet, ConfigError> {
        Ok(build_vortex_set(&self.vortices)?)
    }

    pub fn second_vortex_set(&self) -> Result<VortexSet, ConfigError> {
        Ok(build_vortex_set(&self.vortices2)?)
    }

    pub fn mu(&self) -> f64 {
        self.mu.unwrap_or(1.0)
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    /// Builds the grid, filling in defaults: a 2pi x 2pi cell for periodic
    /// classes, and for planar classes a box wide enough for both the source
    /// profile (16 sqrt(mu)) and the vacuum decay length (8 / mass).
    pub fn build_grid(&self) -> Result<Grid, ConfigError> {
        if self.class.is_periodic() {
            let section = self.grid.unwrap_or(GridSection {
                lx: DEFAULT_PERIODIC_EXTENT,
                ly: DEFAULT_PERIODIC_EXTENT,
                nx: DEFAULT_PERIODIC_NODES,
                ny: DEFAULT_PERIODIC_NODES,
            });
            Ok(Grid::periodic(section.lx, section.ly, section.nx, section.ny)?)
        } else {
            let section = match self.box_ {
                Some(section) => section,
                None => BoxSection {
                    l: self.default_half_width()?,
                    nx: DEFAULT_PLANAR_NODES,
                    ny: DEFAULT_PLANAR_NODES,
                },
            };
            Ok(Grid::planar(section.l, section.nx, section.ny)?)
        }
    }

    /// Half width a planar run will use: the explicit box key, or the
    /// model-derived default.
    pub fn planar_half_width(&self) -> Result<f64, ConfigError> {
        match self.box_ {
            Some(section) => Ok(section.l),
            None => self.default_half_width(),
        }
    }

    fn default_half_width(&self) -> Result<f64, ConfigError> {
        let mass = if self.class.is_scalar() {
            self.scalar_model()?.vacuum_mass()
        } else {
            self.system_model()?.vacuum_mass()
        };
        let source = 16.0 * self.mu().sqrt();
        let decay = if mass > 0.0 { 8.0 / mass } else { 0.0 };
        Ok(source.max(decay))
    }

    /// Merges the solver section over the built-in defaults; mu and sigma
    /// come from their top-level keys.
    pub fn solver_options(&self) -> Result<SolverOptions, ConfigError> {
        let mut opts = SolverOptions::default();
        let section = &self.solver;
        if let Some(v) = section.grad_tol {
            require_positive_knob("solver.grad_tol", v)?;
            opts.grad_tol = v;
        }
        if let Some(v) = section.max_newton {
            opts.max_newton = v;
        }
        if let Some(v) = section.cg_tol {
            require_positive_knob("solver.cg_tol", v)?;
            opts.cg_tol = v;
        }
        if let Some(v) = section.cg_max {
            opts.cg_max = v;
        }
        if let Some(v) = section.armijo_c {
            require_positive_knob("solver.armijo_c", v)?;
            opts.armijo_c = v;
        }
        if let Some(v) = section.max_backtracks {
            opts.max_backtracks = v;
        }
        if let Some(v) = section.source_renormalize {
            opts.source_renormalize = v;
        }
        if let Some(v) = section.equality_tol {
            require_positive_knob("solver.equality_tol", v)?;
            opts.equality_tol = v;
        }
        if let Some(v) = self.sigma {
            require_positive_knob("sigma", v)?;
            opts.sigma = Some(v);
        }
        let mu = self.mu();
        require_positive_knob("mu", mu)?;
        opts.mu = mu;
        Ok(opts)
    }
}

fn require_positive_knob(name: &'static str, value: f64) -> Result<(), ConfigError> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(ConfigError::NonPositive { name, value })
    }
}

fn build_vortex_set(entries: &[VortexEntry]) -> Result<VortexSet, ModelError> {
    VortexSet::new(entries.iter().map(|e| Vortex {
        x: e.x,
        y: e.y,
        mult: e.mult,
    }))
}
