use approx::assert_relative_eq;
use proptest::prelude::*;

use fracture_contact::contact::{
    assemble_contact_blocks, classify_state, contact_residuals, jump_displacement, mohr_coulomb_tau_c,
    FrictionParams, MultiplierQuadrature, PairKinematics, PairState, Sign, StateTolerances,
};
use fracture_contact::mesh::{generate_rect_mesh, FractureSpec, Mesh};

fn kin(lambda_n: f64, lambda_t: f64, slip: f64) -> PairKinematics {
    PairKinematics {
        jump_global: [slip, 0.0],
        jump_local: [0.0, slip],
        slip_increment: slip,
        lambda: [lambda_n, lambda_t],
        gap: 0.0,
    }
}

fn thirty() -> FrictionParams {
    FrictionParams::from_degrees(0.0, 30.0).unwrap()
}

#[test]
fn shear_strength_values() {
    assert_eq!(mohr_coulomb_tau_c(0.0, &thirty()), 0.0);
    // 1e7 tan(pi / 6)
    assert_relative_eq!(mohr_coulomb_tau_c(-10e6, &thirty()), 1e7 / 3f64.sqrt(), max_relative = 1e-12);
    assert_relative_eq!(mohr_coulomb_tau_c(-10e6, &thirty()), 5.7735e6, max_relative = 1e-5);
    let low = FrictionParams::from_degrees(0.0, 5.71).unwrap();
    assert_relative_eq!(mohr_coulomb_tau_c(-10e6, &low), 1.0e6, max_relative = 1e-3);
    let cohesive = FrictionParams::from_degrees(2e6, 30.0).unwrap();
    assert_relative_eq!(mohr_coulomb_tau_c(-10e6, &cohesive), 2e6 + 1e7 / 3f64.sqrt(), max_relative = 1e-12);
}

#[test]
fn classification_examples() {
    let tol = StateTolerances::default();
    let f = thirty();
    assert_eq!(classify_state(PairState::Stick, &kin(1.0, 5e6, 0.0), &f, &tol), PairState::Open);
    assert_eq!(classify_state(PairState::Stick, &kin(-10e6, 3e6, 0.0), &f, &tol), PairState::Stick);
    assert_eq!(classify_state(PairState::Stick, &kin(-10e6, 6e6, 1e-6), &f, &tol), PairState::Slip(Sign::Plus));
    assert_eq!(classify_state(PairState::Stick, &kin(-10e6, -6e6, -1e-6), &f, &tol), PairState::Slip(Sign::Minus));
    // no slip yet: the traction decides the direction
    assert_eq!(classify_state(PairState::Stick, &kin(-10e6, -6e6, 0.0), &f, &tol), PairState::Slip(Sign::Minus));
}

#[test]
fn inclined_frame_jump() {
    let f = FractureSpec::segment([0.25, 0.25], [0.75, 0.75]);
    let mesh = generate_rect_mesh(1.0, 1.0, 4, 4, &[f]).unwrap().prepared().unwrap();
    let pair = &mesh.pairs[0];
    let mut u = vec![0.0; 2 * mesh.n_nodes()];
    u[2 * pair.node_plus] = 1e-3;
    let k = jump_displacement(pair, &u);
    let h = 0.5f64.sqrt();
    assert_relative_eq!(k.jump_local[0], -h * 1e-3, max_relative = 1e-12);
    assert_relative_eq!(k.jump_local[1], h * 1e-3, max_relative = 1e-12);

    let f = FractureSpec::segment([0.25, 0.5], [0.75, 0.5]);
    let mesh = generate_rect_mesh(1.0, 1.0, 4, 4, &[f]).unwrap().prepared().unwrap();
    let pair = &mesh.pairs[0];
    let mut u = vec![0.0; 2 * mesh.n_nodes()];
    u[2 * pair.node_plus + 1] = 1e-3;
    assert_eq!(jump_displacement(pair, &u).jump_local, [1e-3, 0.0]);
}

fn crossing_mesh() -> Mesh {
    let f1 = FractureSpec::segment([0.25, 0.5], [0.75, 0.5]);
    let f2 = FractureSpec::segment([0.5, 0.25], [0.5, 0.75]);
    generate_rect_mesh(1.0, 1.0, 8, 8, &[f1, f2]).unwrap().prepared().unwrap()
}

#[test]
fn rigid_motion_leaves_no_contact_residual() {
    let mesh = crossing_mesh();
    let states = vec![PairState::Stick; mesh.n_pairs()];
    let u: Vec<f64> = (0..mesh.n_nodes()).flat_map(|_| [3e-4, -1e-4]).collect();
    let zero = vec![0.0; 2 * mesh.n_nodes()];
    let blocks = assemble_contact_blocks(&mesh, &states, &zero, &thirty(), MultiplierQuadrature::Nodal).unwrap();
    let lambda = vec![0.0; 2 * mesh.n_pairs()];
    let (ru, rl) = contact_residuals(&blocks, &u, &lambda);
    assert!(ru.iter().all(|v| *v == 0.0));
    assert!(rl.iter().all(|v| v.abs() < 1e-18));
}

#[test]
fn all_open_blocks_reduce_to_identity() {
    let mesh = crossing_mesh();
    let states = vec![PairState::Open; mesh.n_pairs()];
    let zero = vec![0.0; 2 * mesh.n_nodes()];
    let blocks = assemble_contact_blocks(&mesh, &states, &zero, &thirty(), MultiplierQuadrature::Gauss).unwrap();
    assert!(blocks.coupling.entries().iter().all(|e| e.2 == 0.0));
    assert!(blocks.constraint.entries().iter().all(|e| e.2 == 0.0));
    let diag = blocks.multiplier.to_csr().unwrap();
    assert_eq!(diag, fracture_contact::sparse::CsrMatrix::identity(2 * mesh.n_pairs()));
}

proptest! {
    #[test]
    fn local_components_rebuild_the_jump(
        theta in 0.0f64..std::f64::consts::TAU,
        j in prop::array::uniform2(-1e-2f64..1e-2),
    ) {
        let f = FractureSpec::segment([0.25, 0.5], [0.75, 0.5]);
        let mut mesh = generate_rect_mesh(1.0, 1.0, 4, 4, &[f]).unwrap().prepared().unwrap();
        let n = mesh.n_nodes();
        // any orthonormal frame with the tangent at -90 degrees from the normal
        let pair = &mut mesh.pairs[0];
        pair.normal = [theta.cos(), theta.sin()];
        pair.tangent = [theta.sin(), -theta.cos()];
        let mut u = vec![0.0; 2 * n];
        u[2 * pair.node_plus] = j[0];
        u[2 * pair.node_plus + 1] = j[1];
        let k = jump_displacement(pair, &u);
        let [un, ut] = k.jump_local;
        for c in 0..2 {
            prop_assert!((un * pair.normal[c] + ut * pair.tangent[c] - k.jump_global[c]).abs() <= 1e-12);
        }
    }
}

#[test]
fn stick_rows_transpose_the_coupling() {
    let cracks = [
        FractureSpec::segment([0.5, 0.125], [0.5, 0.875]),
        FractureSpec::segment([0.125, 0.125], [0.875, 0.875]),
    ];
    for f in cracks {
        let mesh = generate_rect_mesh(1.0, 1.0, 8, 8, &[f]).unwrap().prepared().unwrap();
        for quad in [MultiplierQuadrature::Nodal, MultiplierQuadrature::Gauss] {
            let states = vec![PairState::Stick; mesh.n_pairs()];
            let zero = vec![0.0; 2 * mesh.n_nodes()];
            let b = assemble_contact_blocks(&mesh, &states, &zero, &thirty(), quad).unwrap();
            assert_eq!(b.coupling.to_csr().unwrap().transpose(), b.constraint.to_csr().unwrap());
        }
    }
}
