use proptest::prelude::*;

use fracture_contact::cli::presets::{inclined_crack, Preset};
use fracture_contact::cli::{solve, RunConfig};
use fracture_contact::contact::{FrictionParams, PairState};
use fracture_contact::elasticity::{
    assemble_loads, dirichlet_values, solve_elastic, BoundaryCondition, MaterialParams, SideName, Target,
};
use fracture_contact::mesh::generate_rect_mesh;
use fracture_contact::solver::{
    build_preconditioner, build_system, condition_estimate, linear_solve, newton_loop, run_load_steps, LinearSolver,
    Preconditioner, Problem, SolutionState, SolverConfig,
};
use fracture_contact::sparse::{CsrMatrix, LuFactor};

fn max_rel_diff(a: &[f64], b: &[f64]) -> f64 {
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max) / scale
}

#[test]
fn unfractured_problem_is_one_linear_solve() {
    let mesh = generate_rect_mesh(2.0, 1.0, 8, 4, &[]).unwrap().prepared().unwrap();
    let mat = MaterialParams::new(25e9, 0.25).unwrap();
    let bcs = vec![
        BoundaryCondition::Dirichlet { target: Target::Side(SideName::Left), ux: Some(0.0), uy: Some(0.0), ramp: vec![] },
        BoundaryCondition::Neumann { target: Target::Side(SideName::Right), traction: [1e6, -3e6], ramp: vec![] },
    ];
    let problem = Problem::new(&mesh, mat, FrictionParams::new(0.0, 0.5).unwrap(), &bcs, 1).unwrap();
    let s = newton_loop(&problem, &SolverConfig::default(), &SolutionState::initial(&mesh), 0).unwrap();
    assert!(s.converged);
    assert_eq!(s.newton_iters, 1);
    let direct = solve_elastic(&mesh, &mat, &bcs).unwrap();
    assert!(max_rel_diff(&direct, &s.u) < 1e-10);
}

#[test]
fn ramped_and_single_step_runs_agree() {
    let one = solve(&inclined_crack(45.0), None).unwrap();
    let mut cfg = inclined_crack(45.0);
    cfg.solver.n_load_steps = 4;
    let four = solve(&cfg, None).unwrap();
    assert!(one.converged() && four.converged());
    assert_eq!(one.last().states, four.last().states);
    let du = max_rel_diff(&one.last().u, &four.last().u);
    let dl = max_rel_diff(&one.last().lambda, &four.last().lambda);
    assert!(du <= 1e-8, "displacement differs by {du:e}");
    assert!(dl <= 1e-8, "multipliers differ by {dl:e}");
}

#[test]
fn inclined_crack_slips_everywhere_under_compression() {
    let out = solve(&Preset::InclinedCrack.config(), None).unwrap();
    let last = out.last();
    assert!(last.states.iter().all(|s| matches!(s, PairState::Slip(_))));
    assert!(last.lambda.chunks(2).all(|l| l[0] < 0.0));
}

#[test]
fn pressurized_crack_opens_everywhere() {
    let out = solve(&Preset::Sneddon.config(), None).unwrap();
    let last = out.last();
    assert!(last.states.iter().all(|s| *s == PairState::Open));
    assert!(last.lambda.iter().all(|l| *l == 0.0));
}

#[test]
fn thread_count_does_not_change_results() {
    let mut cfg = inclined_crack(45.0);
    cfg.solver.threads = 1;
    let a = solve(&cfg, None).unwrap();
    let b = solve(&cfg, None).unwrap();
    cfg.solver.threads = 4;
    let c = solve(&cfg, None).unwrap();
    for other in [&b, &c] {
        assert_eq!(a.last().u, other.last().u);
        assert_eq!(a.last().lambda, other.last().lambda);
        assert_eq!(a.last().states, other.last().states);
        assert_eq!(a.last().diagnostics, other.last().diagnostics);
    }
}

fn first_step_system(cfg: &RunConfig, states: PairState) -> (CsrMatrix, CsrMatrix, Vec<f64>, usize) {
    let mesh = cfg.mesh.build(None).unwrap();
    let problem = Problem::new(&mesh, cfg.material, cfg.friction.params().unwrap(), &cfg.bcs, 1).unwrap();
    let loads = assemble_loads(&mesh, &cfg.bcs, 0, 1).unwrap();
    let fixed = dirichlet_values(&mesh, &cfg.bcs, 0, 1).unwrap();
    let u_ref = vec![0.0; problem.n_u()];
    let sys = build_system(&problem, &vec![states; mesh.n_pairs()], &u_ref, &loads, &fixed).unwrap();
    let mut x = vec![0.0; sys.dim()];
    for (&d, &v) in &fixed {
        x[d] = v;
    }
    let r = sys.residual(&x);
    (sys.jacobian, sys.reduced, r, sys.n_u)
}

#[test]
fn all_stick_jacobian_is_symmetric() {
    let (j, reduced, _, _) = first_step_system(&inclined_crack(45.0), PairState::Stick);
    // stiffness entries differ from their mirror only by summation order
    for m in [&j, &reduced] {
        assert!(m.max_asymmetry() <= 1e-14 * m.max_abs(), "{:e}", m.max_asymmetry() / m.max_abs());
    }
}

#[test]
fn row_scaling_lowers_the_condition_estimate() {
    let (_, reduced, r, n_u) = first_step_system(&inclined_crack(45.0), PairState::Stick);
    let pc = build_preconditioner(&reduced, n_u).unwrap();
    let scaled = condition_estimate(&reduced.scale_rows(&pc.scale), 40).unwrap();
    let plain = condition_estimate(&reduced, 40).unwrap();
    assert!(scaled < plain, "scaled {scaled:e} vs plain {plain:e}");
    let (a, _) = linear_solve(&reduced, &r, &pc, &LinearSolver::Direct).unwrap();
    let (b, _) = linear_solve(&reduced, &r, &Preconditioner::identity(reduced.nrows()), &LinearSolver::Direct).unwrap();
    let diff = a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let size = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    assert!(diff <= 1e-8 * size);
}

/// Horizontal crack under a vertical compression of 10 MPa and a shear `tau`.
fn sheared_crack(tau: f64) -> RunConfig {
    let mut cfg = Preset::Sneddon.config();
    cfg.name = format!("shear-{tau}");
    let stress = [-10e6, -10e6, tau];
    cfg.bcs.retain(|bc| matches!(bc, BoundaryCondition::Dirichlet { .. }));
    for side in [SideName::Left, SideName::Right, SideName::Bottom, SideName::Top] {
        cfg.bcs.push(BoundaryCondition::Stress { target: Target::Side(side), stress, ramp: vec![] });
    }
    cfg
}

#[test]
fn slip_grows_with_shear_load() {
    let mut peaks = Vec::new();
    for tau in [5e6, 6e6, 7e6, 8e6] {
        let out = solve(&sheared_crack(tau), None).unwrap();
        assert!(out.converged(), "tau {tau}");
        let peak = out.profiles()[0].iter().map(|r| r.ut_jump.abs()).fold(0.0, f64::max);
        peaks.push(peak);
    }
    // 5 MPa is below the 5.77 MPa strength of the crack
    assert!(peaks[0] < 1e-12, "{peaks:?}");
    assert!(peaks.windows(2).all(|w| w[1] > w[0]), "{peaks:?}");
}

#[test]
fn capped_state_loops_are_reported() {
    let mut cfg = Preset::CrossingSingle.config();
    cfg.solver.max_state_loops = 1;
    cfg.solver.max_search_trials = 0;
    let mesh = cfg.mesh.build(None).unwrap();
    let problem = Problem::new(&mesh, cfg.material, cfg.friction.params().unwrap(), &cfg.bcs, 1).unwrap();
    let steps = run_load_steps(&problem, &cfg.solver).unwrap();
    let last = steps.last().unwrap();
    assert!(!last.converged);
    assert!(!last.diagnostics.is_empty());
}

fn stretched_spd() -> impl Strategy<Value = Vec<Vec<f64>>> {
    (2usize..9).prop_flat_map(|n| {
        prop::collection::vec(prop::collection::vec(-1.0f64..1.0, n), n).prop_map(move |m| {
            // M^T M + n I, with rows stretched to mimic unequal stiffness scales
            (0..n)
                .map(|i| {
                    (0..n)
                        .map(|j| {
                            let mut v: f64 = (0..n).map(|k| m[k][i] * m[k][j]).sum();
                            if i == j {
                                v += n as f64;
                            }
                            v * 10f64.powi((i % 3) as i32 * 4)
                        })
                        .collect()
                })
                .collect()
        })
    })
}

proptest! {
    #[test]
    fn scaled_solve_matches_plain_factorization(a in stretched_spd(), seed in prop::collection::vec(-1.0f64..1.0, 8)) {
        let j = CsrMatrix::from_dense(&a);
        let n = j.nrows();
        let r: Vec<f64> = seed.iter().take(n).enumerate().map(|(i, v)| v * 10f64.powi((i % 3) as i32 * 4)).collect();
        let pc = build_preconditioner(&j, n).unwrap();
        let (dx, _) = linear_solve(&j, &r, &pc, &LinearSolver::Direct).unwrap();
        let neg: Vec<f64> = r.iter().map(|v| -v).collect();
        let direct = LuFactor::new(&j).unwrap().solve(&neg);
        let scale = direct.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        for (x, y) in dx.iter().zip(&direct) {
            prop_assert!((x - y).abs() <= 1e-9 * scale);
        }
    }
}
