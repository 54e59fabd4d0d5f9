//! Scenario orchestration behind the command-line tool: configuration,
//! built-in benchmarks, running load steps and exporting results.

pub mod bench;
pub mod config;
pub mod export;
pub mod presets;

use std::path::Path;
use std::time::Instant;

use serde::Serialize;
use thiserror::Error;

use crate::contact::{mohr_coulomb_tau_c, pair_kinematics, FrictionParams, PairState, RowMode, resolve_junctions};
use crate::elasticity::{BoundaryCondition, ElasticityError};
use crate::mesh::Mesh;
use crate::solver::{equilibrium, run_load_steps, Equilibrium, Problem, SolutionState, SolverError};

pub use config::{ConfigError, RunConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Elasticity(#[from] ElasticityError),
    #[error("cannot write {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("cannot encode report: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Evaluation(String),
}

/// Everything produced by a run.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub config: RunConfig,
    pub mesh: Mesh,
    pub friction: FrictionParams,
    /// One entry per attempted load step.
    pub steps: Vec<SolutionState>,
    /// Force balance of each attempted step.
    pub equilibrium: Vec<Equilibrium>,
    pub wall_time_s: f64,
}

impl RunOutcome {
    pub fn converged(&self) -> bool {
        self.steps.len() == self.config.solver.n_load_steps && self.steps.iter().all(|s| s.converged)
    }

    pub fn last(&self) -> &SolutionState {
        self.steps.last().expect("a run has at least one step")
    }

    /// Displacement at the start of the last step.
    pub fn step_start(&self) -> Vec<f64> {
        match self.steps.len() {
            0 | 1 => vec![0.0; 2 * self.mesh.n_nodes()],
            n => self.steps[n - 2].u.clone(),
        }
    }

    pub fn newton_iters(&self) -> usize {
        self.steps.iter().map(|s| s.newton_iters).sum()
    }

    /// Per-fracture records of the final state, sorted by arc coordinate.
    pub fn profiles(&self) -> Vec<Vec<ProfileRecord>> {
        profile_records(&self.mesh, self.last())
    }

    pub fn contact_check(&self) -> ContactCheck {
        contact_check(&self.mesh, self.last(), &self.friction)
    }
}

/// Builds the mesh and runs every load step of `cfg`. Relative paths in the
/// configuration resolve against `base`.
pub fn solve(cfg: &RunConfig, base: Option<&Path>) -> Result<RunOutcome, CliError> {
    cfg.validate()?;
    let start = Instant::now();
    let mesh = cfg.mesh.build(base)?;
    let friction = cfg.friction.params()?;
    let bcs: &[BoundaryCondition] = &cfg.bcs;
    let mut problem = Problem::new(&mesh, cfg.material, friction, bcs, cfg.solver.threads)?;
    problem.quadrature = cfg.solver.multiplier_quadrature;
    let steps = run_load_steps(&problem, &cfg.solver)?;
    let mut balance = Vec::with_capacity(steps.len());
    let mut u_ref = vec![0.0; problem.n_u()];
    for s in &steps {
        balance.push(equilibrium(&problem, s, &u_ref, cfg.solver.n_load_steps)?);
        u_ref.clone_from(&s.u);
    }
    let wall_time_s = start.elapsed().as_secs_f64();
    drop(problem);
    Ok(RunOutcome {
        config: cfg.clone(),
        mesh,
        friction,
        steps,
        equilibrium: balance,
        wall_time_s,
    })
}

/// One contact pair of a fracture profile.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProfileRecord {
    pub fracture: usize,
    pub pair: usize,
    pub eta: f64,
    pub un_jump: f64,
    pub ut_jump: f64,
    pub lambda_n: f64,
    pub lambda_t: f64,
    pub state: PairState,
    pub is_crossing_pair: bool,
}

pub fn profile_records(mesh: &Mesh, state: &SolutionState) -> Vec<Vec<ProfileRecord>> {
    let zero = vec![0.0; state.u.len()];
    let kin = pair_kinematics(mesh, &state.u, &state.lambda, &zero);
    let mut out: Vec<Vec<ProfileRecord>> = vec![Vec::new(); mesh.fractures.len()];
    let mut order: Vec<usize> = (0..mesh.n_pairs()).collect();
    order.sort_by(|&a, &b| {
        let (pa, pb) = (&mesh.pairs[a], &mesh.pairs[b]);
        pa.arc_coord.total_cmp(&pb.arc_coord).then(pa.arc_side.cmp(&pb.arc_side))
    });
    for p in order {
        let pair = &mesh.pairs[p];
        let k = &kin[p];
        out[pair.fracture].push(ProfileRecord {
            fracture: pair.fracture,
            pair: p,
            eta: pair.arc_coord,
            un_jump: k.jump_local[0],
            ut_jump: k.jump_local[1],
            lambda_n: k.lambda[0],
            lambda_t: k.lambda[1],
            state: state.states[p],
            is_crossing_pair: pair.is_crossing_pair,
        });
    }
    out
}

/// Worst violations of the contact conditions in a solution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ContactCheck {
    /// `min(g_N + [[u_N]])` over all pairs (m); negative means penetration.
    pub min_normal_gap: f64,
    /// Largest `|lambda|` on an open pair (Pa).
    pub max_open_traction: f64,
    /// Largest `| |lambda_T| - tau_c | / tau_c` over slip pairs.
    pub max_slip_violation: f64,
    /// Pairs whose rows were dropped as redundant around a junction; they
    /// carry no traction of their own and are left out of the checks.
    pub redundant_pairs: usize,
    pub n_stick: usize,
    pub n_slip: usize,
    pub n_open: usize,
}

impl ContactCheck {
    pub fn max_penetration(&self) -> f64 {
        (-self.min_normal_gap).max(0.0)
    }
}

pub fn contact_check(mesh: &Mesh, state: &SolutionState, fric: &FrictionParams) -> ContactCheck {
    let zero = vec![0.0; state.u.len()];
    let kin = pair_kinematics(mesh, &state.u, &state.lambda, &zero);
    let modes = resolve_junctions(mesh, &state.states);
    let mut c = ContactCheck {
        min_normal_gap: f64::INFINITY,
        max_open_traction: 0.0,
        max_slip_violation: 0.0,
        redundant_pairs: 0,
        n_stick: 0,
        n_slip: 0,
        n_open: 0,
    };
    for (p, k) in kin.iter().enumerate() {
        c.min_normal_gap = c.min_normal_gap.min(k.normal_gap());
        match state.states[p] {
            PairState::Stick => c.n_stick += 1,
            PairState::Slip(_) => c.n_slip += 1,
            PairState::Open => c.n_open += 1,
        }
        if modes[p] == RowMode::Deactivated {
            c.redundant_pairs += 1;
            continue;
        }
        match state.states[p] {
            PairState::Open => {
                c.max_open_traction = c.max_open_traction.max(k.lambda[0].abs()).max(k.lambda[1].abs());
            }
            PairState::Slip(_) => {
                let tau_c = mohr_coulomb_tau_c(k.lambda[0], fric);
                let v = (k.lambda[1].abs() - tau_c).abs() / tau_c.abs().max(f64::MIN_POSITIVE);
                c.max_slip_violation = c.max_slip_violation.max(v);
            }
            PairState::Stick => {}
        }
    }
    if kin.is_empty() {
        c.min_normal_gap = 0.0;
    }
    c
}
