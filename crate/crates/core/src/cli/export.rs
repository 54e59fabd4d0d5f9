//! CSV profiles, legacy VTK fields, summaries and diagnostics.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::{CliError, ProfileRecord, RunOutcome};
use crate::elasticity::{element_stress, MaterialParams};
use crate::mesh::Mesh;
use crate::solver::SolutionState;

pub const CSV_HEADER: &str = "eta,uN_jump,uT_jump,lambdaN,lambdaT,state";
pub const VTK_HEADER: &str = "# vtk DataFile Version 3.0";

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|source| CliError::Io { path: path.display().to_string(), source })
}

/// CSV text of one fracture profile.
pub fn profile_csv(records: &[ProfileRecord]) -> String {
    let mut s = String::with_capacity(64 * (records.len() + 1));
    s.push_str(CSV_HEADER);
    s.push('\n');
    for r in records {
        let _ = writeln!(
            s,
            "{:e},{:e},{:e},{:e},{:e},{}",
            r.eta, r.un_jump, r.ut_jump, r.lambda_n, r.lambda_t, r.state
        );
    }
    s
}

/// Writes `profile_fracture_<id>.csv` for every fracture into `dir` and
/// returns the paths.
pub fn export_profiles(profiles: &[Vec<ProfileRecord>], dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let mut out = Vec::with_capacity(profiles.len());
    for (id, records) in profiles.iter().enumerate() {
        let path = dir.join(format!("profile_fracture_{id}.csv"));
        write(&path, &profile_csv(records))?;
        out.push(path);
    }
    Ok(out)
}

/// Legacy VTK unstructured grid with point displacements and cell stress.
/// Fracture node copies are separate points, so the jumps show up as gaps.
pub fn field_vtk(mesh: &Mesh, state: &SolutionState, mat: &MaterialParams) -> String {
    let n = mesh.n_nodes();
    let ne = mesh.n_elements();
    let mut s = String::new();
    let _ = writeln!(s, "{VTK_HEADER}");
    let _ = writeln!(s, "fracture contact solution, load step {}", state.step);
    let _ = writeln!(s, "ASCII");
    let _ = writeln!(s, "DATASET UNSTRUCTURED_GRID");
    let _ = writeln!(s, "POINTS {n} double");
    for node in &mesh.nodes {
        let _ = writeln!(s, "{:e} {:e} 0", node.x, node.y);
    }
    let _ = writeln!(s, "CELLS {ne} {}", 4 * ne);
    for e in &mesh.elements {
        let _ = writeln!(s, "3 {} {} {}", e.nodes[0], e.nodes[1], e.nodes[2]);
    }
    let _ = writeln!(s, "CELL_TYPES {ne}");
    for _ in 0..ne {
        s.push_str("5\n");
    }
    let _ = writeln!(s, "POINT_DATA {n}");
    let _ = writeln!(s, "VECTORS displacement double");
    for i in 0..n {
        let _ = writeln!(s, "{:e} {:e} 0", state.u[2 * i], state.u[2 * i + 1]);
    }
    let _ = writeln!(s, "CELL_DATA {ne}");
    let _ = writeln!(s, "TENSORS stress double");
    for e in 0..ne {
        let [sxx, syy, sxy] = element_stress(mesh, e, &state.u, mat);
        // plane strain out-of-plane stress
        let szz = mat.nu * (sxx + syy);
        let _ = writeln!(s, "{sxx:e} {sxy:e} 0\n{sxy:e} {syy:e} 0\n0 0 {szz:e}");
    }
    s
}

pub fn export_field(mesh: &Mesh, state: &SolutionState, mat: &MaterialParams, path: &Path) -> Result<(), CliError> {
    write(path, &field_vtk(mesh, state, mat))
}

/// Points and displacement vectors read back from a file written by
/// [`field_vtk`].
pub fn read_vtk_points(text: &str) -> Option<(Vec<[f64; 2]>, Vec<[f64; 2]>)> {
    let lines: Vec<&str> = text.lines().collect();
    let parse_block = |key: &str| -> Option<Vec<[f64; 2]>> {
        let at = lines.iter().position(|l| l.starts_with(key))?;
        let count: usize = if key == "POINTS" {
            lines[at].split_whitespace().nth(1)?.parse().ok()?
        } else {
            let pd = lines.iter().position(|l| l.starts_with("POINT_DATA"))?;
            lines[pd].split_whitespace().nth(1)?.parse().ok()?
        };
        lines[at + 1..at + 1 + count]
            .iter()
            .map(|l| {
                let mut it = l.split_whitespace().map(|t| t.parse::<f64>());
                Some([it.next()?.ok()?, it.next()?.ok()?])
            })
            .collect()
    };
    Some((parse_block("POINTS")?, parse_block("VECTORS")?))
}

/// Newton iterations, state loops and final residual per load step.
pub fn convergence_table(steps: &[SolutionState]) -> String {
    let mut s = String::from("step  newton  state_loops  residual      converged\n");
    for st in steps {
        let _ = writeln!(
            s,
            "{:>4}  {:>6}  {:>11}  {:<12.4e}  {}",
            st.step + 1,
            st.newton_iters,
            st.state_loops,
            st.residual_norm,
            if st.converged { "yes" } else { "no" }
        );
    }
    s
}

/// Text report explaining why a run did not converge.
pub fn diagnostics_text(outcome: &RunOutcome) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "run `{}` did not converge", outcome.config.name);
    let _ = writeln!(
        s,
        "completed {} of {} load steps",
        outcome.steps.iter().filter(|x| x.converged).count(),
        outcome.config.solver.n_load_steps
    );
    s.push('\n');
    s.push_str(&convergence_table(&outcome.steps));
    for st in &outcome.steps {
        for d in &st.diagnostics {
            let _ = writeln!(s, "{d}");
        }
    }
    if let Some(last) = outcome.steps.last() {
        let _ = writeln!(s, "\nfinal pair states of step {}:", last.step + 1);
        for (p, st) in last.states.iter().enumerate() {
            let pair = &outcome.mesh.pairs[p];
            let _ = writeln!(s, "pair {p} fracture {} eta {:.6} {st}", pair.fracture, pair.arc_coord);
        }
    }
    s
}

/// Writes every requested output of a run into `dir`.
pub fn write_outputs(outcome: &RunOutcome, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    fs::create_dir_all(dir).map_err(|source| CliError::Io { path: dir.display().to_string(), source })?;
    let out_cfg = &outcome.config.output;
    let mut written = Vec::new();
    if out_cfg.profiles {
        written.extend(export_profiles(&outcome.profiles(), dir)?);
    }
    if out_cfg.field {
        let path = dir.join("field.vtk");
        export_field(&outcome.mesh, outcome.last(), &outcome.config.material, &path)?;
        written.push(path);
    }
    if out_cfg.summary {
        let path = dir.join("summary.json");
        let json = serde_json::to_string_pretty(&super::bench::run_summary(outcome)?)?;
        write(&path, &(json + "\n"))?;
        written.push(path);
    }
    if !outcome.converged() {
        let path = dir.join("diagnostics.txt");
        write(&path, &diagnostics_text(outcome))?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::generate_rect_mesh;

    #[test]
    fn two_element_vtk() {
        let mesh = generate_rect_mesh(1.0, 1.0, 1, 1, &[]).unwrap().prepared().unwrap();
        let mut state = SolutionState::initial(&mesh);
        state.u = vec![0.0, 0.0, 1e-3, 0.0, 0.0, 0.0, 1e-3, 0.0];
        let text = field_vtk(&mesh, &state, &MaterialParams::new(1e9, 0.25).unwrap());
        assert_eq!(text.lines().next(), Some(VTK_HEADER));
        assert!(text.contains("POINTS 4 double"));
        assert!(text.contains("CELLS 2 8"));
        let (pts, disp) = read_vtk_points(&text).unwrap();
        assert_eq!(pts.len(), 4);
        assert_eq!(disp[1], [1e-3, 0.0]);
    }

    #[test]
    fn csv_header_and_rows() {
        let r = ProfileRecord {
            fracture: 0,
            pair: 3,
            eta: 0.5,
            un_jump: 0.0,
            ut_jump: 1e-4,
            lambda_n: -5e6,
            lambda_t: 2e6,
            state: crate::contact::PairState::Stick,
            is_crossing_pair: false,
        };
        let csv = profile_csv(&[r]);
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some(CSV_HEADER));
        assert_eq!(lines.next(), Some("5e-1,0e0,1e-4,-5e6,2e6,stick"));
    }
}
