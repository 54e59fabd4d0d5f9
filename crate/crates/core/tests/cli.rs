use std::path::Path;
use std::process::Command;

use proptest::prelude::*;

use fracture_contact::cli::export::{field_vtk, profile_csv, read_vtk_points, CSV_HEADER, VTK_HEADER};
use fracture_contact::cli::presets::Preset;
use fracture_contact::cli::{solve, RunConfig};
use fracture_contact::contact::{jump_displacement, MultiplierQuadrature};
use fracture_contact::elasticity::{BoundaryCondition, MaterialParams, SideName, Target};
use fracture_contact::mesh::{FractureSpec, TriPattern};
use fracture_contact::solver::{LinearSolver, SolverConfig};

const BIN: &str = env!("CARGO_BIN_EXE_fracture-contact");

const SMALL: &str = r#"
name = "small"

[mesh]
type = "rect"
width = 2.0
height = 2.0
nx = 8
ny = 8
fractures = [{ points = [[0.5, 1.0], [1.5, 1.0]] }]

[material]
E = 25e9
nu = 0.25

[friction]
friction_angle_deg = 30.0

[[bcs]]
kind = "dirichlet"
target = { side = "bottom" }
ux = 0.0
uy = 0.0

[[bcs]]
kind = "neumann"
target = { side = "top" }
traction = [3e6, -1e6]
"#;

fn run_bin(args: &[&str], dir: &Path) -> std::process::Output {
    Command::new(BIN).args(args).current_dir(dir).output().expect("binary runs")
}

#[test]
fn minimal_config_takes_documented_defaults() {
    let cfg = RunConfig::from_toml(SMALL).unwrap();
    assert_eq!(cfg.solver.newton_tol, 1e-4);
    assert_eq!(cfg.solver.n_load_steps, 1);
    assert_eq!(cfg.solver.linear_solver, LinearSolver::Direct);
}

#[test]
fn inclined_preset_parameters() {
    let cfg = Preset::InclinedCrack.config();
    assert_eq!(cfg.material, MaterialParams::new(25e9, 0.25).unwrap());
    assert_eq!(cfg.friction.friction_angle_deg, 30.0);
    assert_eq!(cfg.friction.cohesion, 0.0);
    let mesh = cfg.mesh.build(None).unwrap();
    assert!((mesh.fracture_length(0) - 2.0).abs() < 1e-12);
}

#[test]
fn zero_load_profile_is_all_zero() {
    let mut cfg = RunConfig::from_toml(SMALL).unwrap();
    cfg.bcs.truncate(1);
    let out = solve(&cfg, None).unwrap();
    assert!(out.converged());
    let csv = profile_csv(&out.profiles()[0]);
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some(CSV_HEADER));
    for line in lines {
        let cols: Vec<&str> = line.split(',').collect();
        for c in &cols[1..5] {
            assert_eq!(c.parse::<f64>().unwrap(), 0.0, "{line}");
        }
    }
}

#[test]
fn open_crack_profile_says_open() {
    let out = solve(&Preset::Sneddon.config(), None).unwrap();
    let csv = profile_csv(&out.profiles()[0]);
    for line in csv.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols[5], "open");
        assert_eq!(cols[3].parse::<f64>().unwrap(), 0.0);
        assert_eq!(cols[4].parse::<f64>().unwrap(), 0.0);
    }
}

#[test]
fn profile_coordinates_increase() {
    let out = solve(&Preset::CrossingSingle.config(), None).unwrap();
    for records in out.profiles() {
        for w in records.windows(2) {
            // the two pairs of a fracture at a crossing share one coordinate
            if w[0].is_crossing_pair && w[1].is_crossing_pair {
                assert_eq!(w[0].eta, w[1].eta);
            } else {
                assert!(w[1].eta > w[0].eta);
            }
        }
    }
}

#[test]
fn vtk_split_points_differ_by_the_jump() {
    let out = solve(&RunConfig::from_toml(SMALL).unwrap(), None).unwrap();
    let text = field_vtk(&out.mesh, out.last(), &out.config.material);
    assert_eq!(text.lines().next(), Some(VTK_HEADER));
    let (points, disp) = read_vtk_points(&text).unwrap();
    assert_eq!(points.len(), out.mesh.n_nodes());
    let mut moved = 0;
    for pair in &out.mesh.pairs {
        let (p, m) = (pair.node_plus, pair.node_minus);
        assert_eq!(points[p], points[m]);
        let jump = jump_displacement(pair, &out.last().u).jump_global;
        for c in 0..2 {
            let read = disp[p][c] - disp[m][c];
            assert!((read - jump[c]).abs() <= 1e-12 * (1.0 + jump[c].abs()) + 1e-18);
        }
        if jump[0].hypot(jump[1]) > 0.0 {
            moved += 1;
        }
    }
    assert!(moved > 0);
}

#[test]
fn binary_runs_a_config_and_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("small.toml"), SMALL).unwrap();
    let out = run_bin(&["run", "small.toml", "--out", "results"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let results = dir.path().join("results");
    for f in ["profile_fracture_0.csv", "field.vtk", "summary.json"] {
        assert!(results.join(f).exists(), "{f} missing");
    }
    assert!(!results.join("diagnostics.txt").exists());
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(results.join("summary.json")).unwrap()).unwrap();
    for key in ["preset", "rel_L2", "max_penetration", "newton_iters", "wall_time_s"] {
        assert!(summary.get(key).is_some(), "{key}");
    }
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("newton") && stderr.contains("state_loops"));
}

#[test]
fn unconverged_run_exits_with_two_and_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = Preset::CrossingSingle.config();
    cfg.solver.max_state_loops = 1;
    cfg.solver.max_search_trials = 0;
    std::fs::write(dir.path().join("capped.toml"), cfg.to_toml().unwrap()).unwrap();
    let out = run_bin(&["run", "capped.toml", "--out", "results"], dir.path());
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    let diag = std::fs::read_to_string(dir.path().join("results/diagnostics.txt")).unwrap();
    assert!(diag.contains("did not converge"));
}

#[test]
fn bench_prints_its_configuration() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_bin(&["bench", "sneddon", "--print-config"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let cfg = RunConfig::from_toml(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert_eq!(cfg, Preset::Sneddon.config());
}

#[test]
fn bench_writes_a_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_bin(&["bench", "sneddon", "--report", "report.json"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["preset"], "sneddon");
    assert!(report["rel_L2"].as_f64().unwrap() < 0.05);
}

#[test]
fn bad_input_is_a_plain_failure() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.toml"), SMALL.replace("nu = 0.25", "nu = 0.5")).unwrap();
    let out = run_bin(&["run", "bad.toml"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("material.nu"));
    let out = run_bin(&["bench", "no-such-preset"], dir.path());
    assert!(!out.status.success());
}

#[test]
fn mesh_info_summarizes_a_file() {
    let dir = tempfile::tempdir().unwrap();
    let mesh = RunConfig::from_toml(SMALL).unwrap();
    let raw = match &mesh.mesh {
        fracture_contact::cli::config::MeshSource::Rect { width, height, nx, ny, fractures, .. } => {
            fracture_contact::mesh::generate_rect_mesh(*width, *height, *nx, *ny, fractures).unwrap()
        }
        _ => unreachable!(),
    };
    fracture_contact::mesh::save_mesh(&raw, dir.path().join("m.mesh")).unwrap();
    let out = run_bin(&["mesh-info", "m.mesh"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("triangles    128"), "{text}");
    assert!(text.contains("fractures    1"));
    assert!(text.contains("contact pairs 3"));
}

fn side() -> impl Strategy<Value = SideName> {
    prop_oneof![Just(SideName::Left), Just(SideName::Right), Just(SideName::Bottom), Just(SideName::Top)]
}

fn bc() -> impl Strategy<Value = BoundaryCondition> {
    let val = -1e7f64..1e7;
    prop_oneof![
        (side(), prop::option::of(val.clone()), prop::option::of(val.clone())).prop_map(|(s, ux, uy)| {
            BoundaryCondition::Dirichlet { target: Target::Side(s), ux, uy, ramp: vec![] }
        }),
        (side(), prop::array::uniform2(val.clone()))
            .prop_map(|(s, t)| BoundaryCondition::Neumann { target: Target::Side(s), traction: t, ramp: vec![] }),
        (prop::array::uniform2(0.0f64..2.0), prop::array::uniform3(val.clone())).prop_map(|(p, s)| {
            BoundaryCondition::Stress { target: Target::Point(p), stress: s, ramp: vec![] }
        }),
        val.prop_map(|p| BoundaryCondition::FracturePressure { fracture: 0, pressure: p, ramp: vec![] }),
    ]
}

prop_compose! {
    fn config()(
        e in 1e6f64..1e12,
        nu in 0.0f64..0.49,
        cohesion in 0.0f64..1e7,
        phi in 0.0f64..89.0,
        tol in 1e-10f64..1e-2,
        steps in 1usize..5,
        gauss in any::<bool>(),
        gmres in any::<bool>(),
        nx in 1usize..30,
        ny in 1usize..30,
        crossed in any::<bool>(),
        points in prop::collection::vec(prop::array::uniform2(0.0f64..2.0), 2..4),
        bcs in prop::collection::vec(bc(), 0..5),
        name in "[a-z][a-z0-9-]{0,12}",
    ) -> RunConfig {
        let mut cfg = RunConfig::from_toml(SMALL).unwrap();
        cfg.name = name;
        cfg.material = MaterialParams { e, nu };
        cfg.friction.cohesion = cohesion;
        cfg.friction.friction_angle_deg = phi;
        cfg.solver = SolverConfig {
            newton_tol: tol,
            n_load_steps: steps,
            multiplier_quadrature: if gauss { MultiplierQuadrature::Gauss } else { MultiplierQuadrature::Nodal },
            linear_solver: if gmres { LinearSolver::Gmres { restart: 30, max_it: 500, tol } } else { LinearSolver::Direct },
            ..SolverConfig::default()
        };
        if let fracture_contact::cli::config::MeshSource::Rect { nx: x, ny: y, pattern, fractures, .. } = &mut cfg.mesh {
            *x = nx;
            *y = ny;
            *pattern = if crossed { TriPattern::Crossed } else { TriPattern::Diagonal };
            *fractures = vec![FractureSpec { points, gap0: 0.0 }];
        }
        cfg.bcs.extend(bcs);
        cfg
    }
}

proptest! {
    #[test]
    fn config_survives_serialization(cfg in config()) {
        let text = cfg.to_toml().unwrap();
        let back: RunConfig = toml::from_str(&text).unwrap();
        prop_assert_eq!(back, cfg);
    }
}
