//! Saddle-point assembly, row-norm scaling, linear solves and the active-set
//! Newton loop over load steps.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::contact::{
    assemble_contact_blocks, classify_state, mohr_coulomb_tau_c, pair_kinematics, ContactBlocks, ContactError, FrictionParams, MultiplierQuadrature,
    resolve_junctions, PairKinematics, PairState, RowMode, Sign, StateTolerances,
};
use crate::elasticity::{
    assemble_loads, assemble_stiffness, dirichlet_values, validate_bcs, BoundaryCondition, ElasticityError,
    MaterialParams,
};
use crate::mesh::Mesh;
use crate::sparse::{norm2, CsrMatrix, LuFactor, SparseError, Triplets};

#[derive(Debug, Error)]
pub enum SolverError {
    #[error(transparent)]
    Elasticity(#[from] ElasticityError),
    #[error(transparent)]
    Contact(#[from] ContactError),
    #[error(transparent)]
    Sparse(#[from] SparseError),
    #[error("row {dof} ({kind}) of the Jacobian is zero")]
    SingularRow { dof: usize, kind: &'static str },
    #[error("linear solve did not converge after {iterations} iterations (relative residual {residual:e})")]
    LinearSolve { iterations: usize, residual: f64 },
    #[error("linear solve produced non-finite values; the system is singular (check Dirichlet anchoring)")]
    Singular,
    #[error("invalid solver configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LinearSolver {
    Direct,
    /// Restarted GMRES on the row-scaled system.
    Gmres { restart: usize, max_it: usize, tol: f64 },
}

impl Default for LinearSolver {
    fn default() -> Self {
        LinearSolver::Direct
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub newton_tol: f64,
    pub max_newton: usize,
    pub max_state_loops: usize,
    pub n_load_steps: usize,
    pub linear_solver: LinearSolver,
    /// Apply the row-norm scaling before solving.
    pub precondition: bool,
    pub tolerances: StateTolerances,
    /// Abort a Newton phase when the residual grows by more than this factor.
    pub divergence_factor: f64,
    /// Threads for stiffness assembly.
    pub threads: usize,
    pub multiplier_quadrature: MultiplierQuadrature,
    /// Trial solves allowed when breaking an oscillating active set by
    /// single-pair changes; 0 reports the oscillation instead.
    pub max_search_trials: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            newton_tol: 1e-4,
            max_newton: 50,
            max_state_loops: 20,
            n_load_steps: 1,
            linear_solver: LinearSolver::Direct,
            precondition: true,
            tolerances: StateTolerances::default(),
            divergence_factor: 1e3,
            threads: 1,
            multiplier_quadrature: MultiplierQuadrature::default(),
            max_search_trials: 400,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), SolverError> {
        if !(self.newton_tol > 0.0) {
            return Err(SolverError::Config(format!("newton_tol must be positive, got {}", self.newton_tol)));
        }
        if self.max_newton == 0 || self.max_state_loops == 0 || self.n_load_steps == 0 {
            return Err(SolverError::Config(
                "max_newton, max_state_loops and n_load_steps must be at least 1".into(),
            ));
        }
        if let LinearSolver::Gmres { restart, max_it, tol } = self.linear_solver {
            if restart == 0 || max_it == 0 || !(tol > 0.0) {
                return Err(SolverError::Config("GMRES needs restart >= 1, max_it >= 1 and tol > 0".into()));
            }
        }
        Ok(())
    }
}

/// A fracture problem with its stiffness matrix assembled once.
pub struct Problem<'a> {
    pub mesh: &'a Mesh,
    pub material: MaterialParams,
    pub friction: FrictionParams,
    pub bcs: &'a [BoundaryCondition],
    pub stiffness: CsrMatrix,
    pub quadrature: MultiplierQuadrature,
}

impl<'a> Problem<'a> {
    pub fn new(
        mesh: &'a Mesh,
        material: MaterialParams,
        friction: FrictionParams,
        bcs: &'a [BoundaryCondition],
        threads: usize,
    ) -> Result<Self, SolverError> {
        material.validate()?;
        friction.validate()?;
        if !mesh.is_split {
            return Err(ContactError::NotSplit.into());
        }
        Ok(Self {
            mesh,
            material,
            friction,
            bcs,
            stiffness: assemble_stiffness(mesh, &material, threads)?,
            quadrature: MultiplierQuadrature::default(),
        })
    }

    pub fn n_u(&self) -> usize {
        2 * self.mesh.n_nodes()
    }

    pub fn n_lambda(&self) -> usize {
        2 * self.mesh.n_pairs()
    }
}

/// Jacobian and constant vector for a fixed set of pair states, so that
/// `R(x) = J x - b` with the rows of prescribed DOFs set to zero.
pub struct SaddleSystem {
    /// Full Jacobian, used for residual evaluation.
    pub jacobian: CsrMatrix,
    /// Jacobian with prescribed DOFs eliminated (identity rows and columns).
    pub reduced: CsrMatrix,
    pub rhs: Vec<f64>,
    pub n_u: usize,
    pub n_lambda: usize,
    pub fixed: BTreeMap<usize, f64>,
    pub blocks: ContactBlocks,
}

impl SaddleSystem {
    pub fn dim(&self) -> usize {
        self.n_u + self.n_lambda
    }

    /// `J x - b` including the rows of prescribed DOFs (reaction forces).
    pub fn full_residual(&self, x: &[f64]) -> Vec<f64> {
        let mut r = self.jacobian.mul_vec(x);
        for (ri, bi) in r.iter_mut().zip(&self.rhs) {
            *ri -= bi;
        }
        r
    }

    pub fn residual(&self, x: &[f64]) -> Vec<f64> {
        let mut r = self.full_residual(x);
        for &d in self.fixed.keys() {
            r[d] = 0.0;
        }
        r
    }
}

pub fn build_system(
    problem: &Problem,
    states: &[PairState],
    u_ref: &[f64],
    loads: &[f64],
    fixed: &BTreeMap<usize, f64>,
) -> Result<SaddleSystem, SolverError> {
    let blocks = assemble_contact_blocks(problem.mesh, states, u_ref, &problem.friction, problem.quadrature)?;
    let (n_u, n_lambda) = (blocks.n_u, blocks.n_lambda);
    let n = n_u + n_lambda;
    let nnz = problem.stiffness.nnz() + blocks.coupling.len() + blocks.constraint.len() + blocks.multiplier.len();
    let mut full = Triplets::with_capacity(n, n, nnz);
    let mut reduced = Triplets::with_capacity(n, n, nnz + fixed.len());
    let is_fixed = |d: usize| d < n_u && fixed.contains_key(&d);
    let mut push = |r: usize, c: usize, v: f64| {
        full.push(r, c, v);
        if !is_fixed(r) && !is_fixed(c) {
            reduced.push(r, c, v);
        }
    };
    for (r, c, v) in problem.stiffness.iter() {
        push(r, c, v);
    }
    for &(r, c, v) in blocks.coupling.entries() {
        push(r, n_u + c, v);
    }
    for &(r, c, v) in blocks.constraint.entries() {
        push(n_u + r, c, v);
    }
    for &(r, c, v) in blocks.multiplier.entries() {
        push(n_u + r, n_u + c, v);
    }
    for &d in fixed.keys() {
        reduced.push(d, d, 1.0);
    }
    let mut rhs = vec![0.0; n];
    for i in 0..n_u {
        rhs[i] = loads[i] - blocks.f_slip[i];
    }
    rhs[n_u..].copy_from_slice(&blocks.rhs_lambda);
    Ok(SaddleSystem {
        jacobian: full.to_csr()?,
        reduced: reduced.to_csr()?,
        rhs,
        n_u,
        n_lambda,
        fixed: fixed.clone(),
        blocks,
    })
}

/// Left row scaling `P = diag(1 / ||row_i||_2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Preconditioner {
    pub scale: Vec<f64>,
}

impl Preconditioner {
    pub fn identity(n: usize) -> Self {
        Self { scale: vec![1.0; n] }
    }

    /// Row norms of the displacement rows (`[K C]`) and the multiplier rows.
    pub fn row_norms(&self) -> Vec<f64> {
        self.scale.iter().map(|s| 1.0 / s).collect()
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        v.iter().zip(&self.scale).map(|(a, s)| a * s).collect()
    }
}

pub fn build_preconditioner(j: &CsrMatrix, n_u: usize) -> Result<Preconditioner, SolverError> {
    let norms = j.row_norms();
    let mut scale = Vec::with_capacity(norms.len());
    for (dof, &r) in norms.iter().enumerate() {
        if !(r > 0.0) || !r.is_finite() {
            let kind = if dof < n_u { "displacement" } else { "multiplier" };
            return Err(SolverError::SingularRow { dof, kind });
        }
        scale.push(1.0 / r);
    }
    Ok(Preconditioner { scale })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearSolveInfo {
    pub iterations: usize,
    /// `||P r + P J dx|| / ||P r||`.
    pub relative_residual: f64,
}

/// Solves `J dx = -r` through the scaled system `P J dx = -P r`.
pub fn linear_solve(
    j: &CsrMatrix,
    r: &[f64],
    pc: &Preconditioner,
    method: &LinearSolver,
) -> Result<(Vec<f64>, LinearSolveInfo), SolverError> {
    let a = j.scale_rows(&pc.scale);
    let b: Vec<f64> = r.iter().zip(&pc.scale).map(|(ri, s)| -ri * s).collect();
    let rnorm = norm2(r);
    if rnorm == 0.0 {
        return Ok((vec![0.0; r.len()], LinearSolveInfo { iterations: 0, relative_residual: 0.0 }));
    }
    // residuals are measured on the scaled system; near convergence `r` is
    // mostly rounding noise, so failure is judged by the normwise backward error
    let bnorm = norm2(&b);
    let mut row_sums = vec![0.0; a.nrows()];
    for (r, _, v) in a.iter() {
        row_sums[r] += v.abs();
    }
    let anorm = row_sums.iter().copied().fold(0.0, f64::max);
    let scaled_residual = |x: &[f64]| -> (Vec<f64>, f64) {
        let ax = a.mul_vec(x);
        let res: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        let n = norm2(&res);
        (res, n)
    };
    let backward = |x: &[f64], res_norm: f64| res_norm / (anorm * x.iter().fold(0.0f64, |m, v| m.max(v.abs())) + bnorm);
    // componentwise backward error max_i |res_i| / (|A||x| + |b|)_i; small
    // rows stay visible here even when large rows dominate the residual norm
    let componentwise = |x: &[f64], res: &[f64]| -> f64 {
        let mut scale: Vec<f64> = b.iter().map(|v| v.abs()).collect();
        for (r, c, v) in a.iter() {
            scale[r] += (v * x[c]).abs();
        }
        res.iter()
            .zip(&scale)
            .map(|(ri, si)| if *si > 0.0 { ri.abs() / si } else if *ri == 0.0 { 0.0 } else { f64::INFINITY })
            .fold(0.0, f64::max)
    };
    match *method {
        LinearSolver::Direct => {
            let lu = LuFactor::new(&a)?;
            let mut x = lu.solve(&b);
            if x.iter().any(|v| !v.is_finite()) {
                return Err(SolverError::Singular);
            }
            let (mut res, mut res_norm) = scaled_residual(&x);
            let mut omega = componentwise(&x, &res);
            let mut it = 1;
            while (res_norm > 1e-10 * bnorm || omega > 16.0 * f64::EPSILON) && it < 8 {
                let dx = lu.solve(&res);
                let trial: Vec<f64> = x.iter().zip(&dx).map(|(xi, di)| xi + di).collect();
                let (next_res, next_norm) = scaled_residual(&trial);
                let next_omega = componentwise(&trial, &next_res);
                it += 1;
                if !(next_omega < 0.5 * omega || next_norm < 0.5 * res_norm) {
                    break;
                }
                x = trial;
                res = next_res;
                res_norm = next_norm;
                omega = next_omega;
            }
            if !res_norm.is_finite() {
                return Err(SolverError::Singular);
            }
            if backward(&x, res_norm) > 1e-8 {
                return Err(SolverError::LinearSolve { iterations: it, residual: res_norm / bnorm });
            }
            Ok((x, LinearSolveInfo { iterations: it, relative_residual: res_norm / bnorm }))
        }
        LinearSolver::Gmres { restart, max_it, tol } => {
            let (x, iterations) = gmres(&a, &b, restart, max_it, tol)?;
            let (_, res_norm) = scaled_residual(&x);
            Ok((x, LinearSolveInfo { iterations, relative_residual: res_norm / bnorm }))
        }
    }
}

/// Restarted GMRES with Givens rotations. Convergence is measured on the
/// residual of `a x = b` relative to `||b||`.
pub fn gmres(a: &CsrMatrix, b: &[f64], restart: usize, max_it: usize, tol: f64) -> Result<(Vec<f64>, usize), SolverError> {
    let n = b.len();
    let bnorm = norm2(b);
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok((x, 0));
    }
    let m = restart.min(n).max(1);
    let mut total = 0;
    let mut rel = 1.0;
    while total < max_it {
        let ax = a.mul_vec(&x);
        let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        let beta = norm2(&r);
        rel = beta / bnorm;
        if rel <= tol {
            return Ok((x, total));
        }
        let mut v: Vec<Vec<f64>> = vec![r.iter().map(|ri| ri / beta).collect()];
        let mut h = vec![vec![0.0; m]; m + 1];
        let (mut cs, mut sn) = (vec![0.0; m], vec![0.0; m]);
        let mut g = vec![0.0; m + 1];
        g[0] = beta;
        let mut k_used = 0;
        for k in 0..m {
            if total >= max_it {
                break;
            }
            total += 1;
            let mut w = a.mul_vec(&v[k]);
            for (i, vi) in v.iter().enumerate() {
                let hik = crate::sparse::dot(&w, vi);
                h[i][k] = hik;
                for (wj, vj) in w.iter_mut().zip(vi) {
                    *wj -= hik * vj;
                }
            }
            let hn = norm2(&w);
            h[k + 1][k] = hn;
            for i in 0..k {
                let t = cs[i] * h[i][k] + sn[i] * h[i + 1][k];
                h[i + 1][k] = -sn[i] * h[i][k] + cs[i] * h[i + 1][k];
                h[i][k] = t;
            }
            let d = h[k][k].hypot(h[k + 1][k]);
            if d == 0.0 {
                break;
            }
            cs[k] = h[k][k] / d;
            sn[k] = h[k + 1][k] / d;
            h[k][k] = d;
            h[k + 1][k] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            k_used = k + 1;
            rel = g[k + 1].abs() / bnorm;
            if rel <= tol || hn == 0.0 {
                break;
            }
            v.push(w.iter().map(|wi| wi / hn).collect());
        }
        let mut y = vec![0.0; k_used];
        for i in (0..k_used).rev() {
            let s: f64 = (i + 1..k_used).map(|j| h[i][j] * y[j]).sum();
            y[i] = (g[i] - s) / h[i][i];
        }
        for (i, yi) in y.iter().enumerate() {
            for (xj, vj) in x.iter_mut().zip(&v[i]) {
                *xj += yi * vj;
            }
        }
        if k_used == 0 {
            break;
        }
    }
    let ax = a.mul_vec(&x);
    let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    let final_rel = norm2(&r) / bnorm;
    if final_rel <= tol {
        Ok((x, total))
    } else {
        Err(SolverError::LinearSolve { iterations: total, residual: final_rel.min(rel.max(final_rel)) })
    }
}

/// 2-norm condition number estimate: power iteration for the largest
/// singular value, inverse iteration through an LU factorization for the
/// smallest.
pub fn condition_estimate(a: &CsrMatrix, iterations: usize) -> Result<f64, SolverError> {
    let n = a.nrows();
    let start: Vec<f64> = (0..n).map(|i| 1.0 + ((i * 7919) % 13) as f64 / 13.0).collect();
    let normalize = |v: &mut Vec<f64>| {
        let s = norm2(v);
        v.iter_mut().for_each(|x| *x /= s);
        s
    };
    let mut v = start.clone();
    normalize(&mut v);
    let mut smax = 0.0;
    for _ in 0..iterations {
        let mut w = a.transpose_mul_vec(&a.mul_vec(&v));
        smax = normalize(&mut w).sqrt();
        v = w;
    }
    let lu = LuFactor::new(a)?;
    let mut v = start;
    normalize(&mut v);
    let mut inv = 0.0;
    for _ in 0..iterations {
        // (A^T A)^-1 v = A^-1 A^-T v
        let mut w = lu.solve(&lu.solve_transpose(&v));
        if w.iter().any(|x| !x.is_finite()) {
            return Ok(f64::INFINITY);
        }
        inv = normalize(&mut w).sqrt();
        v = w;
    }
    Ok(smax * inv)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolutionState {
    pub u: Vec<f64>,
    pub lambda: Vec<f64>,
    pub states: Vec<PairState>,
    pub step: usize,
    pub converged: bool,
    pub newton_iters: usize,
    pub state_loops: usize,
    pub residual_norm: f64,
    /// Largest relative residual of the linear solves in this step.
    pub linear_residual: f64,
    pub diagnostics: Vec<String>,
}

impl SolutionState {
    /// Zero displacement and multipliers, all pairs in stick.
    pub fn initial(mesh: &Mesh) -> Self {
        Self {
            u: vec![0.0; 2 * mesh.n_nodes()],
            lambda: vec![0.0; 2 * mesh.n_pairs()],
            states: vec![PairState::Stick; mesh.n_pairs()],
            step: 0,
            converged: true,
            newton_iters: 0,
            state_loops: 0,
            residual_norm: 0.0,
            linear_residual: 0.0,
            diagnostics: Vec::new(),
        }
    }

    pub fn kinematics(&self, mesh: &Mesh, u_ref: &[f64]) -> Vec<PairKinematics> {
        pair_kinematics(mesh, &self.u, &self.lambda, u_ref)
    }
}

/// Solves one load step: Newton iterations for the current pair states,
/// then reclassification until the states no longer change.
pub fn newton_loop(
    problem: &Problem,
    cfg: &SolverConfig,
    warm: &SolutionState,
    step: usize,
) -> Result<SolutionState, SolverError> {
    cfg.validate()?;
    let mesh = problem.mesh;
    let n_steps = cfg.n_load_steps;
    let loads = assemble_loads(mesh, problem.bcs, step, n_steps)?;
    let fixed = dirichlet_values(mesh, problem.bcs, step, n_steps)?;
    let (n_u, n_lambda) = (problem.n_u(), problem.n_lambda());
    let u_ref = warm.u.clone();
    let mut x = Vec::with_capacity(n_u + n_lambda);
    x.extend_from_slice(&warm.u);
    x.extend_from_slice(&warm.lambda);
    for (&d, &v) in &fixed {
        x[d] = v;
    }
    let mut states = warm.states.clone();
    let mut out = SolutionState {
        u: Vec::new(),
        lambda: Vec::new(),
        states: Vec::new(),
        step,
        converged: false,
        newton_iters: 0,
        state_loops: 0,
        residual_norm: f64::NAN,
        linear_residual: 0.0,
        diagnostics: Vec::new(),
    };
    let finish = |mut out: SolutionState, x: &[f64], states: Vec<PairState>| {
        out.u = x[..n_u].to_vec();
        out.lambda = x[n_u..].to_vec();
        out.states = states;
        out
    };

    let ctx = StepContext { problem, cfg, loads: &loads, fixed: &fixed, u_ref: &u_ref, n_u };
    let mut history: Vec<Vec<PairState>> = vec![states.clone()];
    let mut flip_count = vec![0usize; states.len()];

    for state_loop in 1..=cfg.max_state_loops {
        out.state_loops = state_loop;
        if let Some(msg) = ctx.solve(&states, &mut x, &mut out)? {
            out.diagnostics.push(format!("step {step}, state loop {state_loop}: {msg}"));
            if msg.starts_with("linear") {
                let changed: Vec<String> = states
                    .iter()
                    .enumerate()
                    .filter(|(p, s)| **s != warm.states[*p])
                    .map(|(p, s)| format!("{p}:{s}"))
                    .collect();
                out.diagnostics.push(format!("pairs changed since step start: {}", changed.join(" ")));
            }
            return Ok(finish(out, &x, states));
        }
        let (next, kin) = ctx.classify(&states, &x);
        if next == states {
            out.converged = true;
            return Ok(finish(out, &x, states));
        }
        let flips: Vec<String> = next
            .iter()
            .zip(&states)
            .enumerate()
            .filter(|(_, (a, b))| a != b)
            .map(|(p, (&a, &b))| format!("{p}:{b}->{a} ({:.1e})", state_violation(b, a, &kin, p, &problem.friction)))
            .collect();
        let changed = flips.len();
        out.diagnostics.push(format!(
            "step {step}, state loop {state_loop}: {changed} pairs changed: {}{}",
            flips.iter().take(24).cloned().collect::<Vec<_>>().join(" "),
            if changed > 24 { " ..." } else { "" }
        ));
        for (p, (a, b)) in next.iter().zip(&states).enumerate() {
            if a != b {
                flip_count[p] += 1;
            }
        }
        let revisited = history.contains(&next);
        let oscillating = flip_count.iter().any(|&c| c >= OSCILLATION_FLIPS);
        if (revisited || oscillating) && cfg.max_search_trials > 0 {
            // search single-pair changes among the pairs that keep flipping
            let cand: BTreeSet<usize> =
                (0..states.len()).filter(|&p| flip_count[p] > 1 || next[p] != states[p]).collect();
            out.diagnostics.push(format!(
                "step {step}, state loop {state_loop}: {}; local search over {} pairs",
                if revisited { "state assignment revisited" } else { "pair states oscillating" },
                cand.len()
            ));
            let current = Trial::new(states, x, out.residual_norm, &ctx);
            let (converged, best) = ctx.local_search(current, cand, &mut out, step)?;
            out.converged = converged;
            out.residual_norm = best.residual_norm;
            if !converged {
                out.diagnostics.push(format!(
                    "step {step}: cycling; single-pair changes leave {} pairs inconsistent",
                    best.merit.0
                ));
            }
            return Ok(finish(out, &best.x, best.states));
        }
        if revisited {
            out.diagnostics.push(format!("step {step}, state loop {state_loop}: state assignment revisited; cycling"));
            return Ok(finish(out, &x, states));
        }
        history.push(next.clone());
        states = next;
    }
    out.diagnostics.push(format!(
        "step {step}: pair states still changing after {} state loops",
        cfg.max_state_loops
    ));
    Ok(finish(out, &x, states))
}

/// Number of pairs whose state disagrees with a reclassification, then the
/// summed size of those disagreements.
type Merit = (usize, f64);

/// State changes of one pair within a step that mark it as oscillating.
const OSCILLATION_FLIPS: usize = 4;

fn better(a: Merit, b: Merit) -> bool {
    a.0 < b.0 || (a.0 == b.0 && a.1 < b.1)
}

/// A solved state assignment and its reclassification.
struct Trial {
    states: Vec<PairState>,
    next: Vec<PairState>,
    /// Size of each proposed change, zero where the state is kept.
    violation: Vec<f64>,
    x: Vec<f64>,
    residual_norm: f64,
    merit: Merit,
}

impl Trial {
    fn new(states: Vec<PairState>, x: Vec<f64>, residual_norm: f64, ctx: &StepContext) -> Self {
        let (next, kin) = ctx.classify(&states, &x);
        let fric = &ctx.problem.friction;
        let violation: Vec<f64> = (0..states.len())
            .map(|p| if states[p] == next[p] { 0.0 } else { state_violation(states[p], next[p], &kin, p, fric) })
            .collect();
        let merit = violation
            .iter()
            .zip(states.iter().zip(&next))
            .filter(|(_, (a, b))| a != b)
            .fold((0, 0.0), |m, (v, _)| (m.0 + 1, m.1 + v.abs()));
        Self { states, next, violation, x, residual_norm, merit }
    }
}

/// Fixed data of one load step.
struct StepContext<'a, 'p> {
    problem: &'a Problem<'p>,
    cfg: &'a SolverConfig,
    loads: &'a [f64],
    fixed: &'a BTreeMap<usize, f64>,
    u_ref: &'a [f64],
    n_u: usize,
}

impl StepContext<'_, '_> {
    /// Newton iterations for fixed pair states, updating `x` in place.
    /// Returns a message if the iteration failed.
    fn solve(&self, states: &[PairState], x: &mut [f64], out: &mut SolutionState) -> Result<Option<String>, SolverError> {
        let cfg = self.cfg;
        let sys = build_system(self.problem, states, self.u_ref, self.loads, self.fixed)?;
        let pc = if cfg.precondition {
            build_preconditioner(&sys.reduced, self.n_u)?
        } else {
            Preconditioner::identity(sys.dim())
        };
        let mut r = sys.residual(x);
        let mut rn = norm2(&r);
        let r0 = rn.max(cfg.newton_tol);
        let mut iters = 0;
        // at least one update per state set: constraint rows are in metres and can
        // hide a violation below the force-scale tolerance
        while (iters == 0 || rn >= cfg.newton_tol) && iters < cfg.max_newton {
            let (dx, info) = match linear_solve(&sys.reduced, &r, &pc, &cfg.linear_solver) {
                Ok(v) => v,
                Err(e @ (SolverError::LinearSolve { .. } | SolverError::Singular)) => {
                    out.residual_norm = rn;
                    return Ok(Some(format!("linear solve failed: {e}")));
                }
                Err(e) => return Err(e),
            };
            out.linear_residual = out.linear_residual.max(info.relative_residual);
            for (xi, di) in x.iter_mut().zip(&dx) {
                *xi += di;
            }
            iters += 1;
            out.newton_iters += 1;
            r = sys.residual(x);
            rn = norm2(&r);
            if rn > cfg.divergence_factor * r0 {
                out.residual_norm = rn;
                return Ok(Some(format!("residual grew from {r0:e} to {rn:e}; aborting")));
            }
        }
        out.residual_norm = rn;
        if rn >= cfg.newton_tol {
            return Ok(Some(format!(
                "residual {rn:e} above {:e} after {iters} Newton iterations",
                cfg.newton_tol
            )));
        }
        Ok(None)
    }

    /// Reclassifies every pair against the same iterate.
    fn classify(&self, states: &[PairState], x: &[f64]) -> (Vec<PairState>, Vec<PairKinematics>) {
        let mesh = self.problem.mesh;
        let n_u = self.n_u;
        let kin = pair_kinematics(mesh, &x[..n_u], &x[n_u..], self.u_ref);
        let modes = resolve_junctions(mesh, states);
        let next = states
            .iter()
            .enumerate()
            .map(|(p, &s)| {
                if modes[p] == RowMode::Deactivated {
                    s
                } else {
                    classify_state(s, &kin[p], &self.problem.friction, &self.cfg.tolerances)
                }
            })
            .collect();
        (next, kin)
    }

    /// Greedy descent over single-pair state changes, starting from a
    /// cycling assignment. Returns whether a self-consistent assignment was
    /// found, and the best assignment seen.
    fn local_search(
        &self,
        mut current: Trial,
        mut cand: BTreeSet<usize>,
        out: &mut SolutionState,
        step: usize,
    ) -> Result<(bool, Trial), SolverError> {
        const OPTIONS: [PairState; 4] =
            [PairState::Stick, PairState::Slip(Sign::Plus), PairState::Slip(Sign::Minus), PairState::Open];
        let mut tried: HashSet<Vec<PairState>> = HashSet::new();
        tried.insert(current.states.clone());
        let mut trials = 0;
        'descent: while current.merit.0 > 0 {
            // proposed changes first, most violated first, then the alternatives
            let mut moves: Vec<(f64, usize, PairState)> = Vec::new();
            for &p in &cand {
                for option in OPTIONS {
                    if option == current.states[p] {
                        continue;
                    }
                    let rank = if option == current.next[p] {
                        current.violation[p].abs()
                    } else {
                        -1.0
                    };
                    moves.push((rank, p, option));
                }
            }
            moves.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            for (_, p, option) in moves {
                let mut states = current.states.clone();
                states[p] = option;
                if !tried.insert(states.clone()) {
                    continue;
                }
                if trials == self.cfg.max_search_trials {
                    break 'descent;
                }
                trials += 1;
                out.state_loops += 1;
                let mut x = current.x.clone();
                if self.solve(&states, &mut x, out)?.is_some() {
                    continue;
                }
                let t = Trial::new(states, x, out.residual_norm, self);
                if better(t.merit, current.merit) {
                    out.diagnostics.push(format!(
                        "step {step}, search: pair {p} -> {option}; {} pairs inconsistent",
                        t.merit.0
                    ));
                    cand.extend((0..t.next.len()).filter(|&q| t.next[q] != t.states[q]));
                    current = t;
                    continue 'descent;
                }
            }
            break;
        }
        out.diagnostics.push(format!("step {step}, search: {trials} trial solves"));
        Ok((current.merit.0 == 0, current))
    }
}

/// Unitless size of the condition that triggers a state change, used to
/// rank changes when the active set cycles. Tractions are measured against
/// the largest multiplier and jumps against the largest jump.
fn state_violation(from: PairState, to: PairState, kin: &[PairKinematics], p: usize, fric: &FrictionParams) -> f64 {
    let t_scale = kin.iter().map(|k| k.lambda[0].abs().max(k.lambda[1].abs())).fold(f64::MIN_POSITIVE, f64::max);
    let j_scale = kin.iter().map(|k| k.jump_local[0].abs().max(k.jump_local[1].abs())).fold(f64::MIN_POSITIVE, f64::max);
    let k = &kin[p];
    match (from, to) {
        (PairState::Open, _) => -k.normal_gap() / j_scale,
        (_, PairState::Open) => k.lambda[0] / t_scale,
        (PairState::Stick, PairState::Slip(_)) => (k.lambda[1].abs() - mohr_coulomb_tau_c(k.lambda[0], fric)) / t_scale,
        (PairState::Slip(s), _) => -k.slip_increment * s.value() / j_scale,
        _ => 0.0,
    }
}

/// Runs all load steps, each warm-started from the previous one. Stops
/// after the first step that fails to converge.
pub fn run_load_steps(problem: &Problem, cfg: &SolverConfig) -> Result<Vec<SolutionState>, SolverError> {
    cfg.validate()?;
    validate_bcs(problem.mesh, problem.bcs, cfg.n_load_steps)?;
    let mut warm = SolutionState::initial(problem.mesh);
    let mut out = Vec::with_capacity(cfg.n_load_steps);
    for step in 0..cfg.n_load_steps {
        let s = newton_loop(problem, cfg, &warm, step)?;
        let ok = s.converged;
        warm = s.clone();
        out.push(s);
        if !ok {
            break;
        }
    }
    Ok(out)
}

/// Applied and support forces summed per direction, with the imbalance
/// `|sum(F) + sum(S)| / (sum|F| + sum|S|)` of the worse direction.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Equilibrium {
    pub applied: [f64; 2],
    pub reaction: [f64; 2],
    pub relative_imbalance: f64,
}

pub fn equilibrium(problem: &Problem, state: &SolutionState, u_ref: &[f64], n_steps: usize) -> Result<Equilibrium, SolverError> {
    let mesh = problem.mesh;
    let loads = assemble_loads(mesh, problem.bcs, state.step, n_steps)?;
    let fixed = dirichlet_values(mesh, problem.bcs, state.step, n_steps)?;
    let sys = build_system(problem, &state.states, u_ref, &loads, &fixed)?;
    let mut x = state.u.clone();
    x.extend_from_slice(&state.lambda);
    let r = sys.full_residual(&x);
    let mut applied = [0.0; 2];
    let mut reaction = [0.0; 2];
    // both components share one scale: a load case may leave one of them unloaded
    let mut scale = 0.0;
    for i in 0..sys.n_u {
        // loads include fracture pressure, which cancels between the faces
        applied[i % 2] += loads[i];
        scale += loads[i].abs();
    }
    for &d in fixed.keys() {
        reaction[d % 2] += r[d];
        scale += r[d].abs();
    }
    let imbalance = (applied[0] + reaction[0]).hypot(applied[1] + reaction[1]);
    Ok(Equilibrium { applied, reaction, relative_imbalance: imbalance / f64::max(scale, f64::MIN_POSITIVE) })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_example() {
        let j = CsrMatrix::from_dense(&[vec![2.0, 0.0], vec![0.0, 4.0]]);
        let pc = build_preconditioner(&j, 2).unwrap();
        assert_eq!(pc.scale, vec![0.5, 0.25]);
        let (dx, _) = linear_solve(&j, &[2.0, 4.0], &pc, &LinearSolver::Direct).unwrap();
        assert_eq!(dx, vec![-1.0, -1.0]);
    }

    #[test]
    fn pythagorean_row_and_identity() {
        let j = CsrMatrix::from_dense(&[vec![3.0, 4.0], vec![0.0, 1.0]]);
        let pc = build_preconditioner(&j, 1).unwrap();
        assert_eq!(pc.row_norms(), vec![5.0, 1.0]);
        assert_eq!(build_preconditioner(&CsrMatrix::identity(3), 3).unwrap().scale, vec![1.0; 3]);
    }

    #[test]
    fn zero_row_is_reported() {
        let j = CsrMatrix::from_dense(&[vec![1.0, 0.0], vec![0.0, 0.0]]);
        match build_preconditioner(&j, 1) {
            Err(SolverError::SingularRow { dof: 1, kind: "multiplier" }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn gmres_matches_direct_on_nonsymmetric_system() {
        let a = CsrMatrix::from_dense(&[
            vec![4.0, 1.0, 0.0, 0.0],
            vec![-1.0, 3.0, 2.0, 0.0],
            vec![0.0, 0.5, 5.0, 1.0],
            vec![1.0, 0.0, 0.0, 2.0],
        ]);
        let r = [1.0, -2.0, 0.5, 3.0];
        let pc = build_preconditioner(&a, 4).unwrap();
        let (d, _) = linear_solve(&a, &r, &pc, &LinearSolver::Direct).unwrap();
        let (g, info) =
            linear_solve(&a, &r, &pc, &LinearSolver::Gmres { restart: 2, max_it: 100, tol: 1e-12 }).unwrap();
        for (x, y) in d.iter().zip(&g) {
            assert!((x - y).abs() < 1e-10);
        }
        assert!(info.relative_residual < 1e-10);
    }

    #[test]
    fn condition_of_diagonal_matrix() {
        let a = CsrMatrix::from_dense(&[vec![10.0, 0.0], vec![0.0, 0.1]]);
        let c = condition_estimate(&a, 50).unwrap();
        assert!((c - 100.0).abs() < 1e-8, "{c}");
    }

    #[test]
    fn config_validation() {
        assert!(SolverConfig::default().validate().is_ok());
        let bad = SolverConfig { newton_tol: 0.0, ..Default::default() };
        assert!(bad.validate().is_err());
    }
}
