//! Built-in benchmark configurations.

use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::config::{FrictionConfig, GradedAxis, MeshSource, OutputConfig, RunConfig};
use crate::elasticity::{BoundaryCondition, MaterialParams, SideName, Target};
use crate::mesh::{FractureSpec, TriPattern};
use crate::oracles::InclinedCrackCase;
use crate::solver::SolverConfig;

/// Half-width of the square domain used by the single-crack presets (m).
pub const FAR_FIELD: f64 = 10.0;
/// Cells per crack half-length in the refined core.
pub const CRACK_CELLS: usize = 12;
/// Geometric growth of the cells outside the core.
pub const GROWTH: f64 = 1.4;

pub const SIGMA_INF: f64 = 10e6;
pub const FRACTURE_PRESSURE: f64 = 10e6;

/// Side length of the through-going shear block (m).
pub const SHEAR_BLOCK: f64 = 10.0;
/// Imposed offset of the top edge in each direction (m).
pub const SHEAR_OFFSET: f64 = 0.1;

/// Load direction of the crossing presets, measured from the x axis.
pub const CROSSING_LOAD_DEG: f64 = 22.5;
/// Core element size of the single-crossing preset (m).
pub const CROSSING_SINGLE_H: f64 = 0.03125;
/// Core element size of the multi-crossing preset (m).
pub const CROSSING_MULTI_H: f64 = 0.0625;

/// Loading ratios `|sigma / p|` of the stress intensity sweep.
pub const SIF_RATIOS: [f64; 6] = [0.0, 0.5, 1.0, 1.5, 2.0, 3.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    InclinedCrack,
    ShearThroughgoing,
    Sneddon,
    CrossingSingle,
    CrossingMulti,
}

impl Preset {
    pub const ALL: [Preset; 5] = [
        Preset::InclinedCrack,
        Preset::ShearThroughgoing,
        Preset::Sneddon,
        Preset::CrossingSingle,
        Preset::CrossingMulti,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::InclinedCrack => "inclined-crack",
            Preset::ShearThroughgoing => "shear-throughgoing",
            Preset::Sneddon => "sneddon",
            Preset::CrossingSingle => "crossing-single",
            Preset::CrossingMulti => "crossing-multi",
        }
    }

    pub fn config(self) -> RunConfig {
        match self {
            Preset::InclinedCrack => inclined_crack(45.0),
            Preset::ShearThroughgoing => shear_throughgoing(),
            Preset::Sneddon => sneddon(),
            Preset::CrossingSingle => crossing_single(),
            Preset::CrossingMulti => crossing_multi(),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Preset::ALL.into_iter().find(|p| p.name() == s).ok_or_else(|| {
            let names: Vec<&str> = Preset::ALL.iter().map(|p| p.name()).collect();
            format!("unknown preset `{s}`; expected one of {}", names.join(", "))
        })
    }
}

fn rock() -> MaterialParams {
    MaterialParams { e: 25e9, nu: 0.25 }
}

fn friction(deg: f64) -> FrictionConfig {
    FrictionConfig { cohesion: 0.0, friction_angle_deg: deg }
}

fn axis(center: f64, core: f64, h: f64) -> GradedAxis {
    GradedAxis { center, half_width: FAR_FIELD, core, h, growth: GROWTH }
}

/// Square graded grid around the origin whose uniform core of spacing `h`
/// covers `[-core, core]`.
fn graded_square(core_cells: usize, h: f64, fractures: Vec<FractureSpec>) -> MeshSource {
    let core = core_cells as f64 * h;
    MeshSource::Graded {
        x: axis(0.0, core, h),
        y: axis(0.0, core, h),
        pattern: TriPattern::Diagonal,
        fractures,
    }
}

/// Uniform stress `-sigma d d^T` for a compression of magnitude `sigma`
/// along the direction at `theta` (radians) from the x axis.
pub fn uniaxial_stress(sigma: f64, theta: f64) -> [f64; 3] {
    let (s, c) = theta.sin_cos();
    [-sigma * c * c, -sigma * s * s, -sigma * c * s]
}

/// Remote stress on all four sides of the far-field square, with two corner
/// pins removing the rigid-body motion.
fn far_field_bcs(stress: [f64; 3]) -> Vec<BoundaryCondition> {
    let mut bcs: Vec<BoundaryCondition> = [SideName::Left, SideName::Right, SideName::Bottom, SideName::Top]
        .into_iter()
        .map(|s| BoundaryCondition::Stress { target: Target::Side(s), stress, ramp: Vec::new() })
        .collect();
    bcs.extend(pins());
    bcs
}

fn pins() -> [BoundaryCondition; 2] {
    [
        BoundaryCondition::Dirichlet {
            target: Target::Point([-FAR_FIELD, -FAR_FIELD]),
            ux: Some(0.0),
            uy: Some(0.0),
            ramp: Vec::new(),
        },
        BoundaryCondition::Dirichlet {
            target: Target::Point([FAR_FIELD, -FAR_FIELD]),
            ux: None,
            uy: Some(0.0),
            ramp: Vec::new(),
        },
    ]
}

fn diagonal_crack() -> (usize, f64, FractureSpec) {
    let a = FRAC_1_SQRT_2;
    let h = a / CRACK_CELLS as f64;
    let core_cells = CRACK_CELLS + CRACK_CELLS / 3;
    (core_cells, h, FractureSpec::segment([-a, -a], [a, a]))
}

/// Crack of length 2 along the 45 degree diagonal, compressed along a
/// direction at `alpha_deg` to the crack.
pub fn inclined_crack(alpha_deg: f64) -> RunConfig {
    let (core_cells, h, crack) = diagonal_crack();
    let theta = 45f64.to_radians() + alpha_deg.to_radians();
    RunConfig {
        name: Preset::InclinedCrack.name().to_string(),
        mesh: graded_square(core_cells, h, vec![crack]),
        material: rock(),
        friction: friction(30.0),
        solver: SolverConfig::default(),
        output: OutputConfig::default(),
        bcs: far_field_bcs(uniaxial_stress(SIGMA_INF, theta)),
    }
}

/// Closed-form counterpart of [`inclined_crack`].
pub fn inclined_crack_case(alpha_deg: f64) -> InclinedCrackCase {
    InclinedCrackCase {
        alpha: alpha_deg.to_radians(),
        sigma_inf: SIGMA_INF,
        half_length: 1.0,
        material: rock(),
        cohesion: 0.0,
        friction_angle: 30f64.to_radians(),
    }
}

/// Pressurized diagonal crack under a vertical compression
/// `ratio * FRACTURE_PRESSURE`.
pub fn sif_case(ratio: f64) -> RunConfig {
    let mut cfg = inclined_crack(45.0);
    cfg.name = format!("sif-ratio-{ratio}");
    cfg.bcs = far_field_bcs(uniaxial_stress(ratio * FRACTURE_PRESSURE, 90f64.to_radians()));
    cfg.bcs.push(BoundaryCondition::FracturePressure { fracture: 0, pressure: FRACTURE_PRESSURE, ramp: Vec::new() });
    cfg
}

/// Friction angle of the through-going shear block (degrees), `tan phi = 0.1`.
pub fn shear_friction_deg() -> f64 {
    0.1f64.atan().to_degrees()
}

pub fn shear_material() -> MaterialParams {
    MaterialParams { e: 5e9, nu: 0.3 }
}

/// Homogeneous stress `[sxx, syy, sxy]` of the through-going shear block:
/// no lateral strain, vertical stress `-10 MPa`, and the shear needed for
/// the diagonal fracture to sit exactly on the friction limit.
pub fn shear_block_stress() -> [f64; 3] {
    let m = shear_material();
    let syy = -10e6;
    let sxx = syy * m.nu / (1.0 - m.nu);
    // fracture tangent (1, 1)/sqrt2, normal (-1, 1)/sqrt2
    let lambda_t = 0.5 * (syy - sxx);
    let lambda_n = lambda_t / 0.1;
    let sxy = 0.5 * (sxx + syy) - lambda_n;
    [sxx, syy, sxy]
}

/// Square block cut by a fracture along its diagonal. The bottom is fixed,
/// the top is displaced by the homogeneous strain plus a rigid offset of
/// `-SHEAR_OFFSET` in both directions, and the sides carry the matching
/// tractions, so the upper block slides along the fracture by
/// `SHEAR_OFFSET * sqrt 2`.
pub fn shear_throughgoing() -> RunConfig {
    let l = SHEAR_BLOCK;
    let m = shear_material();
    let stress = shear_block_stress();
    let [_, syy, sxy] = stress;
    let d = m.e / ((1.0 + m.nu) * (1.0 - 2.0 * m.nu));
    let eyy = syy / (d * (1.0 - m.nu));
    let gamma = sxy / m.shear_modulus();
    let bcs = vec![
        BoundaryCondition::Dirichlet {
            target: Target::Side(SideName::Bottom),
            ux: Some(0.0),
            uy: Some(0.0),
            ramp: Vec::new(),
        },
        BoundaryCondition::Dirichlet {
            target: Target::Side(SideName::Top),
            ux: Some(gamma * l - SHEAR_OFFSET),
            uy: Some(eyy * l - SHEAR_OFFSET),
            ramp: Vec::new(),
        },
        BoundaryCondition::Stress { target: Target::Side(SideName::Left), stress, ramp: Vec::new() },
        BoundaryCondition::Stress { target: Target::Side(SideName::Right), stress, ramp: Vec::new() },
    ];
    RunConfig {
        name: Preset::ShearThroughgoing.name().to_string(),
        mesh: MeshSource::Rect {
            width: l,
            height: l,
            nx: 20,
            ny: 20,
            pattern: TriPattern::Diagonal,
            fractures: vec![FractureSpec::segment([0.0, 0.0], [l, l])],
        },
        material: m,
        friction: friction(shear_friction_deg()),
        solver: SolverConfig::default(),
        output: OutputConfig::default(),
        bcs,
    }
}

/// Horizontal crack of half-length 1 opened by a uniform pressure.
pub fn sneddon() -> RunConfig {
    let h = 1.0 / CRACK_CELLS as f64;
    let core_cells = CRACK_CELLS + CRACK_CELLS / 3;
    let mut bcs = vec![BoundaryCondition::FracturePressure {
        fracture: 0,
        pressure: FRACTURE_PRESSURE,
        ramp: Vec::new(),
    }];
    bcs.extend(pins());
    RunConfig {
        name: Preset::Sneddon.name().to_string(),
        mesh: graded_square(core_cells, h, vec![FractureSpec::segment([-1.0, 0.0], [1.0, 0.0])]),
        material: rock(),
        friction: friction(30.0),
        solver: SolverConfig::default(),
        output: OutputConfig::default(),
        bcs,
    }
}

fn crossing_config(preset: Preset, fractures: Vec<FractureSpec>, core: f64, h: f64) -> RunConfig {
    let cells = (core / h).round() as usize;
    RunConfig {
        name: preset.name().to_string(),
        mesh: graded_square(cells, h, fractures),
        material: rock(),
        friction: friction(30.0),
        solver: SolverConfig::default(),
        output: OutputConfig::default(),
        bcs: far_field_bcs(uniaxial_stress(SIGMA_INF, CROSSING_LOAD_DEG.to_radians())),
    }
}

/// A diagonal fracture crossed off-centre by a horizontal one.
pub fn crossing_single() -> RunConfig {
    crossing_config(
        Preset::CrossingSingle,
        vec![
            FractureSpec::segment([-0.75, -0.75], [0.75, 0.75]),
            FractureSpec::segment([-0.75, 0.25], [1.25, 0.25]),
        ],
        1.5,
        CROSSING_SINGLE_H,
    )
}

/// Four fractures with five pairwise crossings.
pub fn crossing_multi() -> RunConfig {
    crossing_config(
        Preset::CrossingMulti,
        vec![
            FractureSpec::segment([-1.0, -1.0], [1.0, 1.0]),
            FractureSpec::segment([-1.0, 0.25], [1.25, 0.25]),
            FractureSpec::segment([-0.25, -1.25], [-0.25, 0.75]),
            FractureSpec::segment([-0.75, -0.5], [1.0, -0.5]),
        ],
        1.5,
        CROSSING_MULTI_H,
    )
}
