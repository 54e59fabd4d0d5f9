//! TOML run configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::contact::FrictionParams;
use crate::elasticity::{BoundaryCondition, MaterialParams};
use crate::mesh::{graded_axis, load_mesh, FractureSpec, Mesh, MeshError, RectGrid, TriPattern};
use crate::solver::{LinearSolver, SolverConfig};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("malformed configuration: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("cannot serialize configuration: {0}")]
    Serialize(#[from] toml::ser::Error),
    #[error("invalid value for `{field}`: {message}")]
    Invalid { field: String, message: String },
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

fn invalid(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { field: field.to_string(), message: message.into() }
}

/// Grid lines along one axis: a uniform core refined around `center`,
/// growing geometrically out to `center ± half_width`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GradedAxis {
    pub center: f64,
    pub half_width: f64,
    pub core: f64,
    pub h: f64,
    pub growth: f64,
}

impl GradedAxis {
    pub fn lines(&self) -> Vec<f64> {
        graded_axis(self.center, self.half_width, self.core, self.h, self.growth)
    }

    fn validate(&self, field: &str) -> Result<(), ConfigError> {
        let pos = |v: f64, name: &str| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(invalid(&format!("{field}.{name}"), format!("must be positive, got {v}")))
            }
        };
        pos(self.half_width, "half_width")?;
        pos(self.h, "h")?;
        if !(self.core >= 0.0 && self.core <= self.half_width) {
            return Err(invalid(&format!("{field}.core"), "must lie in [0, half_width]"));
        }
        if !(self.growth >= 1.0 && self.growth.is_finite()) {
            return Err(invalid(&format!("{field}.growth"), "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum MeshSource {
    /// A mesh file in the native text format.
    File { path: PathBuf },
    /// Uniform grid on `[0, width] x [0, height]`.
    Rect {
        width: f64,
        height: f64,
        nx: usize,
        ny: usize,
        #[serde(default)]
        pattern: TriPattern,
        #[serde(default)]
        fractures: Vec<FractureSpec>,
    },
    /// Tensor grid graded towards a refined core.
    Graded {
        x: GradedAxis,
        y: GradedAxis,
        #[serde(default)]
        pattern: TriPattern,
        #[serde(default)]
        fractures: Vec<FractureSpec>,
    },
}

impl MeshSource {
    /// Builds (or loads) the mesh and prepares it for contact: fractures are
    /// split and contact pairs created. Relative file paths resolve against
    /// `base`.
    pub fn build(&self, base: Option<&Path>) -> Result<Mesh, ConfigError> {
        let mesh = match self {
            Self::File { path } => {
                let p = match base {
                    Some(b) if path.is_relative() => b.join(path),
                    _ => path.clone(),
                };
                load_mesh(p)?
            }
            Self::Rect { width, height, nx, ny, pattern, fractures } => {
                RectGrid::uniform(*width, *height, *nx, *ny, *pattern).build(fractures)?
            }
            Self::Graded { x, y, pattern, fractures } => RectGrid {
                xs: x.lines(),
                ys: y.lines(),
                pattern: *pattern,
            }
            .build(fractures)?,
        };
        Ok(mesh.prepared()?)
    }

    fn validate(&self) -> Result<(), ConfigError> {
        match self {
            Self::File { .. } => Ok(()),
            Self::Rect { width, height, nx, ny, .. } => {
                for (v, name) in [(*width, "mesh.width"), (*height, "mesh.height")] {
                    if !(v.is_finite() && v > 0.0) {
                        return Err(invalid(name, format!("must be positive, got {v}")));
                    }
                }
                if *nx == 0 || *ny == 0 {
                    return Err(invalid("mesh.nx", "grid needs at least one cell per direction"));
                }
                Ok(())
            }
            Self::Graded { x, y, .. } => {
                x.validate("mesh.x")?;
                y.validate("mesh.y")
            }
        }
    }
}

/// Friction parameters as written in configuration files (angle in degrees).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrictionConfig {
    #[serde(default)]
    pub cohesion: f64,
    pub friction_angle_deg: f64,
}

impl FrictionConfig {
    pub fn params(&self) -> Result<FrictionParams, ConfigError> {
        FrictionParams::from_degrees(self.cohesion, self.friction_angle_deg).map_err(|e| {
            let field = if self.cohesion < 0.0 || !self.cohesion.is_finite() {
                "friction.cohesion"
            } else {
                "friction.friction_angle_deg"
            };
            invalid(field, e.to_string())
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// Directory for all output files; `None` disables file output.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    /// One CSV profile per fracture.
    pub profiles: bool,
    /// Legacy VTK file with displacement and element stress.
    pub field: bool,
    pub summary: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: None, profiles: true, field: true, summary: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Label used in reports.
    #[serde(default = "default_name")]
    pub name: String,
    pub mesh: MeshSource,
    pub material: MaterialParams,
    pub friction: FrictionConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub bcs: Vec<BoundaryCondition>,
}

fn default_name() -> String {
    "run".to_string()
}

impl RunConfig {
    pub fn from_toml(src: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(src)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let src = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        Self::from_toml(&src)
    }

    pub fn to_toml(&self) -> Result<String, ConfigError> {
        Ok(toml::to_string(self)?)
    }

    /// Range and unit sanity checks, reported with the offending field.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let m = &self.material;
        if !(m.e.is_finite() && m.e > 0.0) {
            return Err(invalid("material.E", format!("Young's modulus must be positive, got {}", m.e)));
        }
        if !(m.nu > -1.0 && m.nu < 0.5) {
            return Err(invalid("material.nu", format!("Poisson's ratio must lie in (-1, 0.5), got {}", m.nu)));
        }
        self.friction.params()?;
        self.mesh.validate()?;
        let s = &self.solver;
        if !(s.newton_tol.is_finite() && s.newton_tol > 0.0) {
            return Err(invalid("solver.newton_tol", "must be positive"));
        }
        for (v, name) in [
            (s.max_newton, "solver.max_newton"),
            (s.max_state_loops, "solver.max_state_loops"),
            (s.n_load_steps, "solver.n_load_steps"),
        ] {
            if v == 0 {
                return Err(invalid(name, "must be at least 1"));
            }
        }
        if let LinearSolver::Gmres { restart, max_it, tol } = s.linear_solver {
            if restart == 0 || max_it == 0 || !(tol > 0.0) {
                return Err(invalid("solver.linear_solver", "GMRES needs positive restart, max_it and tol"));
            }
        }
        if !self.bcs.iter().any(|bc| matches!(bc, BoundaryCondition::Dirichlet { .. })) {
            return Err(invalid("bcs", "at least one Dirichlet condition is needed to remove rigid-body motion"));
        }
        for (i, bc) in self.bcs.iter().enumerate() {
            let len = bc.ramp().len();
            if len != 0 && len != s.n_load_steps {
                return Err(invalid(
                    &format!("bcs[{i}].ramp"),
                    format!("has {len} entries but solver.n_load_steps is {}", s.n_load_steps),
                ));
            }
        }
        Ok(())
    }
}
