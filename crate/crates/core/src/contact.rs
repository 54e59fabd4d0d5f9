//! Contact kinematics, Mohr-Coulomb state classification and the coupling
//! blocks between displacements and multipliers.
//!
//! Every pair owns two multiplier DOFs `(lambda_N, lambda_T)`: the traction on
//! the minus face in the pair frame, compression negative. In the
//! displacement equations a pair pushes its plus node with `+t` and its minus
//! node with `-t`, where `t = lambda_N n + lambda_T m`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mesh::{ContactPair, Mesh};
use crate::sparse::Triplets;

#[derive(Debug, Error)]
pub enum ContactError {
    #[error("invalid friction parameters: {0}")]
    InvalidFriction(String),
    #[error("expected {expected} pair states, got {got}")]
    StateCount { expected: usize, got: usize },
    #[error("segment {segment} of fracture {fracture} references pair {pair} outside the pair table")]
    InconsistentSegment { fracture: usize, segment: usize, pair: usize },
    #[error("mesh has not been split into contact pairs")]
    NotSplit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrictionParams {
    /// Cohesion (Pa).
    #[serde(default)]
    pub cohesion: f64,
    /// Friction angle (radians).
    pub friction_angle: f64,
}

impl FrictionParams {
    pub fn new(cohesion: f64, friction_angle: f64) -> Result<Self, ContactError> {
        let f = Self { cohesion, friction_angle };
        f.validate()?;
        Ok(f)
    }

    pub fn from_degrees(cohesion: f64, degrees: f64) -> Result<Self, ContactError> {
        Self::new(cohesion, degrees.to_radians())
    }

    pub fn validate(&self) -> Result<(), ContactError> {
        if !(self.cohesion >= 0.0 && self.cohesion.is_finite()) {
            return Err(ContactError::InvalidFriction(format!("cohesion must be >= 0, got {}", self.cohesion)));
        }
        if !(0.0..std::f64::consts::FRAC_PI_2).contains(&self.friction_angle) {
            return Err(ContactError::InvalidFriction(format!(
                "friction angle must lie in [0, 90) degrees, got {} degrees",
                self.friction_angle.to_degrees()
            )));
        }
        Ok(())
    }

    pub fn tan_phi(&self) -> f64 {
        self.friction_angle.tan()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn of(x: f64) -> Self {
        if x < 0.0 {
            Sign::Minus
        } else {
            Sign::Plus
        }
    }

    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PairState {
    Stick,
    Slip(Sign),
    Open,
}

impl PairState {
    pub fn label(self) -> &'static str {
        match self {
            PairState::Stick => "stick",
            PairState::Slip(Sign::Plus) => "slip+",
            PairState::Slip(Sign::Minus) => "slip-",
            PairState::Open => "open",
        }
    }
}

impl fmt::Display for PairState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Jumps and tractions of one pair at an iterate.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PairKinematics {
    /// `u(plus) - u(minus)` in global coordinates (m).
    pub jump_global: [f64; 2],
    /// `([[u_N]], [[u_T]])` in the pair frame (m).
    pub jump_local: [f64; 2],
    /// Tangential jump accumulated since the start of the load step (m).
    pub slip_increment: f64,
    /// `(lambda_N, lambda_T)` (Pa).
    pub lambda: [f64; 2],
    /// Initial normal gap (m).
    pub gap: f64,
}

impl PairKinematics {
    /// `g_N + [[u_N]]`; negative values are interpenetration.
    pub fn normal_gap(&self) -> f64 {
        self.gap + self.jump_local[0]
    }
}

fn node_disp(u: &[f64], n: usize) -> [f64; 2] {
    [u[2 * n], u[2 * n + 1]]
}

fn jump_of(pair: &ContactPair, u: &[f64]) -> [f64; 2] {
    let (p, m) = (node_disp(u, pair.node_plus), node_disp(u, pair.node_minus));
    [p[0] - m[0], p[1] - m[1]]
}

fn dot2(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

/// Kinematic part of [`PairKinematics`]; `lambda` is left at zero and the
/// slip increment is measured from zero displacement.
pub fn jump_displacement(pair: &ContactPair, u: &[f64]) -> PairKinematics {
    let jump_global = jump_of(pair, u);
    let jump_local = [dot2(jump_global, pair.normal), dot2(jump_global, pair.tangent)];
    PairKinematics {
        jump_global,
        jump_local,
        slip_increment: jump_local[1],
        lambda: [0.0, 0.0],
        gap: pair.gap0,
    }
}

/// Full kinematics of every pair at an iterate. `u_ref` is the displacement
/// at the start of the load step.
pub fn pair_kinematics(mesh: &Mesh, u: &[f64], lambda: &[f64], u_ref: &[f64]) -> Vec<PairKinematics> {
    mesh.pairs
        .iter()
        .map(|p| {
            let mut k = jump_displacement(p, u);
            k.slip_increment = k.jump_local[1] - dot2(jump_of(p, u_ref), p.tangent);
            k.lambda = [lambda[2 * p.id], lambda[2 * p.id + 1]];
            k
        })
        .collect()
}

/// Mohr-Coulomb shear strength `c - lambda_N tan(phi)`.
pub fn mohr_coulomb_tau_c(lambda_n: f64, fric: &FrictionParams) -> f64 {
    fric.cohesion - lambda_n * fric.tan_phi()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateTolerances {
    /// A pair opens once `lambda_N` exceeds this (Pa).
    pub open: f64,
    /// Relative margin below `tau_c` at which a stick pair starts slipping.
    pub slip: f64,
    /// Slip increments below this are treated as zero (m).
    pub zero_slip: f64,
    /// An open pair stays open while `g_N + [[u_N]]` exceeds minus this (m).
    pub gap: f64,
}

impl Default for StateTolerances {
    fn default() -> Self {
        Self {
            open: 0.0,
            slip: 1e-8,
            zero_slip: 1e-12,
            gap: 1e-12,
        }
    }
}

/// Next state of a pair given the current state and the iterate.
pub fn classify_state(
    current: PairState,
    kin: &PairKinematics,
    fric: &FrictionParams,
    tol: &StateTolerances,
) -> PairState {
    let [lambda_n, lambda_t] = kin.lambda;
    if current == PairState::Open {
        return if kin.normal_gap() > -tol.gap {
            PairState::Open
        } else {
            PairState::Stick
        };
    }
    if lambda_n > tol.open {
        return PairState::Open;
    }
    let tau_c = mohr_coulomb_tau_c(lambda_n, fric);
    match current {
        PairState::Slip(s) => {
            if kin.slip_increment * s.value() < -tol.zero_slip {
                PairState::Stick
            } else {
                PairState::Slip(s)
            }
        }
        _ => {
            if lambda_t.abs() >= tau_c * (1.0 - tol.slip) {
                let sign = if kin.slip_increment.abs() >= tol.zero_slip {
                    Sign::of(kin.slip_increment)
                } else if lambda_t != 0.0 {
                    Sign::of(lambda_t)
                } else {
                    Sign::Plus
                };
                PairState::Slip(sign)
            } else {
                PairState::Stick
            }
        }
    }
}

/// How the constraint rows of a pair are set up after resolving redundant
/// constraints around fracture junctions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RowMode {
    /// Rows follow the pair state.
    Regular,
    /// A stick pair that only constrains the jump along `w`; its traction is
    /// kept orthogonal to `v`.
    Direction { w: [f64; 2], v: [f64; 2] },
    /// Both multipliers fixed at zero.
    Deactivated,
}

/// Blocks contributed by the contact pairs.
#[derive(Debug, Clone)]
pub struct ContactBlocks {
    pub n_u: usize,
    pub n_lambda: usize,
    /// Displacement rows, multiplier columns.
    pub coupling: Triplets,
    /// Multiplier rows, displacement columns.
    pub constraint: Triplets,
    /// Multiplier rows, multiplier columns (open and slip replacement rows).
    pub multiplier: Triplets,
    /// Cohesive slip force in the displacement equations.
    pub f_slip: Vec<f64>,
    /// Constant part of the multiplier equations.
    pub rhs_lambda: Vec<f64>,
    pub row_modes: Vec<RowMode>,
}

/// Quadrature for the multiplier coupling integrals along a fracture.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MultiplierQuadrature {
    /// Trapezoidal rule: each pair couples only to its own node copies with
    /// half the length of each adjacent segment.
    #[default]
    Nodal,
    /// Two-point Gauss on linear multiplier shape functions (consistent
    /// weights `L/3` and `L/6`).
    Gauss,
}

/// Weights `int psi_pair phi_node` for one fracture segment: returns
/// `w[i][j]` with `i` the pair end and `j` the node end.
pub fn segment_weights(length: f64, quad: MultiplierQuadrature) -> [[f64; 2]; 2] {
    match quad {
        MultiplierQuadrature::Nodal => [[0.5 * length, 0.0], [0.0, 0.5 * length]],
        MultiplierQuadrature::Gauss => {
            let g = 0.5 / 3f64.sqrt();
            let mut w = [[0.0; 2]; 2];
            for s in [0.5 - g, 0.5 + g] {
                let phi = [1.0 - s, s];
                for i in 0..2 {
                    for j in 0..2 {
                        w[i][j] += 0.5 * length * phi[i] * phi[j];
                    }
                }
            }
            w
        }
    }
}

/// Constraint directions of a pair for loop redundancy: the jump
/// components its rows fix.
fn constrained_dim(state: PairState) -> usize {
    match state {
        PairState::Stick => 2,
        PairState::Slip(_) => 1,
        PairState::Open => 0,
    }
}

/// Finds pairs whose constraints are implied by the others around a junction
/// and relaxes them so the multiplier block keeps full rank.
pub fn resolve_junctions(mesh: &Mesh, states: &[PairState]) -> Vec<RowMode> {
    let mut modes = vec![RowMode::Regular; mesh.pairs.len()];
    let mut by_origin: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for p in &mesh.pairs {
        if mesh.copies.get(&p.origin).is_some_and(|c| c.len() > 2) {
            by_origin.entry(p.origin).or_default().push(p.id);
        }
    }
    for pairs in by_origin.values() {
        let Some(cycle) = junction_cycle(mesh, pairs) else {
            continue;
        };
        // intersection of constrained spaces along the cycle
        let mut dim = 2;
        let mut dir: Option<[f64; 2]> = None;
        for &(p, _) in &cycle {
            match states[p] {
                PairState::Stick => {}
                PairState::Slip(_) => {
                    let n = mesh.pairs[p].normal;
                    match dir {
                        None => {
                            dir = Some(n);
                            dim = dim.min(1);
                        }
                        Some(d) => {
                            if (d[0] * n[1] - d[1] * n[0]).abs() > 1e-9 {
                                dim = 0;
                            }
                        }
                    }
                }
                PairState::Open => dim = 0,
            }
        }
        if dim == 0 {
            continue;
        }
        let stick = cycle.iter().map(|&(p, _)| p).filter(|&p| states[p] == PairState::Stick).max();
        match (dim, stick, dir) {
            (2, Some(p), _) => modes[p] = RowMode::Deactivated,
            (1, Some(p), Some(v)) => {
                modes[p] = RowMode::Direction { w: [-v[1], v[0]], v };
            }
            _ => {
                if let Some(p) = cycle.iter().map(|&(p, _)| p).filter(|&p| constrained_dim(states[p]) > 0).max() {
                    modes[p] = RowMode::Deactivated;
                }
            }
        }
    }
    modes
}

/// Pairs on the single loop around a junction node with the orientation of
/// each jump along the loop, or `None` if the pairs do not close a loop.
fn junction_cycle(mesh: &Mesh, pairs: &[usize]) -> Option<Vec<(usize, f64)>> {
    // graph on node copies, one edge per pair; strip leaves until a ring remains
    let mut alive: BTreeSet<usize> = pairs.iter().copied().collect();
    loop {
        let mut degree: BTreeMap<usize, usize> = BTreeMap::new();
        for &p in &alive {
            *degree.entry(mesh.pairs[p].node_plus).or_default() += 1;
            *degree.entry(mesh.pairs[p].node_minus).or_default() += 1;
        }
        let leaves: Vec<usize> = alive
            .iter()
            .copied()
            .filter(|&p| degree[&mesh.pairs[p].node_plus] < 2 || degree[&mesh.pairs[p].node_minus] < 2)
            .collect();
        if leaves.is_empty() {
            if degree.values().any(|&d| d != 2) || alive.is_empty() {
                return None;
            }
            break;
        }
        for p in leaves {
            alive.remove(&p);
        }
    }
    let first = *alive.iter().next()?;
    let mut cycle = vec![(first, 1.0)];
    let start = mesh.pairs[first].node_minus;
    let mut at = mesh.pairs[first].node_plus;
    let mut used: BTreeSet<usize> = [first].into();
    while at != start {
        let next = alive
            .iter()
            .copied()
            .find(|p| !used.contains(p) && (mesh.pairs[*p].node_plus == at || mesh.pairs[*p].node_minus == at))?;
        let pr = &mesh.pairs[next];
        // walking minus -> plus adds the jump, plus -> minus subtracts it
        if pr.node_minus == at {
            cycle.push((next, 1.0));
            at = pr.node_plus;
        } else {
            cycle.push((next, -1.0));
            at = pr.node_minus;
        }
        used.insert(next);
    }
    (used.len() == alive.len()).then_some(cycle)
}

/// Assembles the contact blocks for a fixed set of pair states.
///
/// Stick rows fix the normal jump to `-g_N` and the tangential jump to its
/// value at the start of the step (`u_ref`). Slip pairs keep the normal row
/// and replace the tangential row with `lambda_T + s tan(phi) lambda_N = s c`.
/// Open pairs get `lambda = 0`.
pub fn assemble_contact_blocks(
    mesh: &Mesh,
    states: &[PairState],
    u_ref: &[f64],
    fric: &FrictionParams,
    quad: MultiplierQuadrature,
) -> Result<ContactBlocks, ContactError> {
    if !mesh.is_split {
        return Err(ContactError::NotSplit);
    }
    let np = mesh.pairs.len();
    if states.len() != np {
        return Err(ContactError::StateCount { expected: np, got: states.len() });
    }
    let n_u = 2 * mesh.n_nodes();
    let n_lambda = 2 * np;
    let modes = resolve_junctions(mesh, states);
    let tan_phi = fric.tan_phi();

    let mut coupling = Triplets::with_capacity(n_u, n_lambda, 16 * np);
    let mut constraint = Triplets::with_capacity(n_lambda, n_u, 16 * np);
    let mut multiplier = Triplets::new(n_lambda, n_lambda);
    let mut f_slip = vec![0.0; n_u];
    let mut rhs_lambda = vec![0.0; n_lambda];

    // traction directions per multiplier in the displacement equations, and
    // constrained jump directions per multiplier row
    let mut col_dirs: Vec<[Option<[f64; 2]>; 2]> = Vec::with_capacity(np);
    let mut row_dirs: Vec<[Option<[f64; 2]>; 2]> = Vec::with_capacity(np);
    for p in &mesh.pairs {
        let (n, m) = (p.normal, p.tangent);
        let (cols, rows) = match (states[p.id], modes[p.id]) {
            (_, RowMode::Deactivated) | (PairState::Open, _) => ([None, None], [None, None]),
            (PairState::Stick, RowMode::Regular) => ([Some(n), Some(m)], [Some(n), Some(m)]),
            (PairState::Stick, RowMode::Direction { w, .. }) => ([Some(n), Some(m)], [Some(w), None]),
            (PairState::Slip(s), _) => {
                let s = s.value();
                ([Some([n[0] - s * tan_phi * m[0], n[1] - s * tan_phi * m[1]]), None], [Some(n), None])
            }
        };
        col_dirs.push(cols);
        row_dirs.push(rows);
    }

    for seg in &mesh.segments {
        let w = segment_weights(seg.length, quad);
        for (i, pair) in seg.pairs.iter().enumerate() {
            let Some(pid) = *pair else { continue };
            if pid >= np {
                return Err(ContactError::InconsistentSegment {
                    fracture: seg.fracture,
                    segment: seg.index,
                    pair: pid,
                });
            }
            let p = &mesh.pairs[pid];
            for j in 0..2 {
                let (plus, minus) = (seg.plus[j], seg.minus[j]);
                if plus == minus {
                    continue;
                }
                let wij = w[i][j];
                if wij == 0.0 {
                    continue;
                }
                for k in 0..2 {
                    let row = 2 * pid + k;
                    if let Some(d) = col_dirs[pid][k] {
                        for c in 0..2 {
                            coupling.push(2 * plus + c, row, wij * d[c]);
                            coupling.push(2 * minus + c, row, -wij * d[c]);
                        }
                    }
                    if let Some(d) = row_dirs[pid][k] {
                        for c in 0..2 {
                            constraint.push(row, 2 * plus + c, wij * d[c]);
                            constraint.push(row, 2 * minus + c, -wij * d[c]);
                        }
                        // target jump at this node end: -g n plus the tangential jump at step start
                        let jr = [u_ref[2 * plus] - u_ref[2 * minus], u_ref[2 * plus + 1] - u_ref[2 * minus + 1]];
                        let t_ref = dot2(jr, p.tangent);
                        let target = [
                            -p.gap0 * p.normal[0] + t_ref * p.tangent[0],
                            -p.gap0 * p.normal[1] + t_ref * p.tangent[1],
                        ];
                        rhs_lambda[row] += wij * dot2(target, d);
                    }
                }
                if let (PairState::Slip(s), RowMode::Regular) = (states[pid], modes[pid]) {
                    let f = wij * s.value() * fric.cohesion;
                    for c in 0..2 {
                        f_slip[2 * plus + c] += f * p.tangent[c];
                        f_slip[2 * minus + c] -= f * p.tangent[c];
                    }
                }
            }
        }
    }

    for p in &mesh.pairs {
        let (rn, rt) = (2 * p.id, 2 * p.id + 1);
        match (states[p.id], modes[p.id]) {
            (_, RowMode::Deactivated) | (PairState::Open, _) => {
                multiplier.push(rn, rn, 1.0);
                multiplier.push(rt, rt, 1.0);
            }
            (PairState::Stick, RowMode::Regular) => {}
            (PairState::Stick, RowMode::Direction { v, .. }) => {
                multiplier.push(rt, rn, dot2(p.normal, v));
                multiplier.push(rt, rt, dot2(p.tangent, v));
            }
            (PairState::Slip(s), _) => {
                let s = s.value();
                multiplier.push(rt, rt, 1.0);
                multiplier.push(rt, rn, s * tan_phi);
                rhs_lambda[rt] = s * fric.cohesion;
            }
        }
    }

    Ok(ContactBlocks {
        n_u,
        n_lambda,
        coupling,
        constraint,
        multiplier,
        f_slip,
        rhs_lambda,
        row_modes: modes,
    })
}

/// Contact parts of the residual: `(C Lambda + F_slip, R^lambda)`.
pub fn contact_residuals(blocks: &ContactBlocks, u: &[f64], lambda: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut ru = blocks.f_slip.clone();
    for &(r, c, v) in blocks.coupling.entries() {
        ru[r] += v * lambda[c];
    }
    let mut rl: Vec<f64> = blocks.rhs_lambda.iter().map(|b| -b).collect();
    for &(r, c, v) in blocks.constraint.entries() {
        rl[r] += v * u[c];
    }
    for &(r, c, v) in blocks.multiplier.entries() {
        rl[r] += v * lambda[c];
    }
    (ru, rl)
}
