//! Plane-strain linear elasticity on linear triangles.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mesh::{Mesh, Side};
use crate::sparse::{CsrMatrix, LuFactor, SparseError, Triplets};

#[derive(Debug, Error)]
pub enum ElasticityError {
    #[error("invalid material: {0}")]
    InvalidMaterial(String),
    #[error("element {element} is degenerate (area {area:e})")]
    DegenerateElement { element: usize, area: f64 },
    #[error("boundary condition {index}: {message}")]
    InvalidTarget { index: usize, message: String },
    #[error("boundary condition {index}: Neumann edge {a}-{b} is fully constrained by Dirichlet conditions")]
    OverlappingBoundary { index: usize, a: usize, b: usize },
    #[error("boundary condition {index}: ramp has {len} entries but {steps} load steps were requested")]
    RampLength { index: usize, len: usize, steps: usize },
    #[error(transparent)]
    Sparse(#[from] SparseError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialParams {
    /// Young's modulus (Pa).
    #[serde(rename = "E")]
    pub e: f64,
    pub nu: f64,
}

impl MaterialParams {
    pub fn new(e: f64, nu: f64) -> Result<Self, ElasticityError> {
        let m = Self { e, nu };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), ElasticityError> {
        if !(self.e > 0.0 && self.e.is_finite()) {
            return Err(ElasticityError::InvalidMaterial(format!("E must be positive, got {}", self.e)));
        }
        if !(0.0..0.5).contains(&self.nu) {
            return Err(ElasticityError::InvalidMaterial(format!(
                "nu must lie in [0, 0.5), got {}",
                self.nu
            )));
        }
        Ok(())
    }

    pub fn shear_modulus(&self) -> f64 {
        self.e / (2.0 * (1.0 + self.nu))
    }

    /// Kolosov constant for plane strain.
    pub fn kolosov(&self) -> f64 {
        3.0 - 4.0 * self.nu
    }
}

pub type Matrix3 = [[f64; 3]; 3];
pub type Matrix6 = [[f64; 6]; 6];

pub fn plane_strain_d(mat: &MaterialParams) -> Matrix3 {
    let (e, nu) = (mat.e, mat.nu);
    let f = e / ((1.0 + nu) * (1.0 - 2.0 * nu));
    [
        [f * (1.0 - nu), f * nu, 0.0],
        [f * nu, f * (1.0 - nu), 0.0],
        [0.0, 0.0, f * (1.0 - 2.0 * nu) / 2.0],
    ]
}

/// Constant strain operator `B` (3x6) and the signed area of a triangle.
pub fn strain_operator(p: [[f64; 2]; 3]) -> ([[f64; 6]; 3], f64) {
    let area = 0.5 * ((p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]));
    let mut b = [[0.0; 6]; 3];
    for i in 0..3 {
        let (j, k) = ((i + 1) % 3, (i + 2) % 3);
        let bi = (p[j][1] - p[k][1]) / (2.0 * area);
        let ci = (p[k][0] - p[j][0]) / (2.0 * area);
        b[0][2 * i] = bi;
        b[1][2 * i + 1] = ci;
        b[2][2 * i] = ci;
        b[2][2 * i + 1] = bi;
    }
    (b, area)
}

/// `A * B^T D B` for a triangle with counter-clockwise vertices `p`.
pub fn cst_stiffness(p: [[f64; 2]; 3], d: &Matrix3) -> Option<Matrix6> {
    let (b, area) = strain_operator(p);
    if !(area > 0.0) {
        return None;
    }
    let mut db = [[0.0; 6]; 3];
    for i in 0..3 {
        for j in 0..6 {
            db[i][j] = (0..3).map(|k| d[i][k] * b[k][j]).sum();
        }
    }
    let mut ke = [[0.0; 6]; 6];
    for i in 0..6 {
        for j in 0..6 {
            ke[i][j] = area * (0..3).map(|k| b[k][i] * db[k][j]).sum::<f64>();
        }
    }
    Some(ke)
}

pub fn element_stiffness(mesh: &Mesh, e: usize, d: &Matrix3) -> Result<Matrix6, ElasticityError> {
    let p = mesh.element_coords(e);
    cst_stiffness(p, d).ok_or(ElasticityError::DegenerateElement {
        element: e,
        area: mesh.element_area(e),
    })
}

/// Global `K^uu` of size `2 n_node`. Element matrices are computed on up to
/// `threads` scoped threads; the scatter runs in element order so the result
/// does not depend on the thread count.
pub fn assemble_stiffness(mesh: &Mesh, mat: &MaterialParams, threads: usize) -> Result<CsrMatrix, ElasticityError> {
    let d = plane_strain_d(mat);
    let ne = mesh.n_elements();
    let threads = threads.clamp(1, ne.max(1));
    let locals: Vec<Result<Matrix6, ElasticityError>> = if threads == 1 {
        (0..ne).map(|e| element_stiffness(mesh, e, &d)).collect()
    } else {
        let chunk = ne.div_ceil(threads);
        std::thread::scope(|s| {
            let handles: Vec<_> = (0..threads)
                .map(|t| {
                    let d = &d;
                    s.spawn(move || {
                        let lo = (t * chunk).min(ne);
                        let hi = ((t + 1) * chunk).min(ne);
                        (lo..hi).map(|e| element_stiffness(mesh, e, d)).collect::<Vec<_>>()
                    })
                })
                .collect();
            handles
                .into_iter()
                .flat_map(|h| h.join().expect("assembly thread panicked"))
                .collect()
        })
    };
    let n = 2 * mesh.n_nodes();
    let mut trip = Triplets::with_capacity(n, n, 36 * ne);
    for (e, ke) in locals.into_iter().enumerate() {
        let ke = ke?;
        let nodes = mesh.elements[e].nodes;
        let dofs = [2 * nodes[0], 2 * nodes[0] + 1, 2 * nodes[1], 2 * nodes[1] + 1, 2 * nodes[2], 2 * nodes[2] + 1];
        for i in 0..6 {
            for j in 0..6 {
                trip.push(dofs[i], dofs[j], ke[i][j]);
            }
        }
    }
    Ok(trip.to_csr()?)
}

/// Where a boundary condition acts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    /// External boundary edges with both endpoints on a side of the bounding box.
    Side(SideName),
    /// Explicit node ids (Dirichlet only).
    Nodes(Vec<usize>),
    /// Every node located at a point, including all fracture copies.
    Point([f64; 2]),
    /// Explicit boundary edges given by node ids (Neumann only).
    Edges(Vec<[usize; 2]>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SideName {
    Left,
    Right,
    Bottom,
    Top,
}

impl From<SideName> for Side {
    fn from(s: SideName) -> Side {
        match s {
            SideName::Left => Side::Left,
            SideName::Right => Side::Right,
            SideName::Bottom => Side::Bottom,
            SideName::Top => Side::Top,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BoundaryCondition {
    /// Prescribed displacement components (m); `None` leaves a component free.
    Dirichlet {
        target: Target,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        ux: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        uy: Option<f64>,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        ramp: Vec<f64>,
    },
    /// Constant traction vector on boundary edges (Pa).
    Neumann {
        target: Target,
        traction: [f64; 2],
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        ramp: Vec<f64>,
    },
    /// Traction `sigma . n_out` from a uniform stress `[sxx, syy, sxy]` (Pa).
    Stress {
        target: Target,
        stress: [f64; 3],
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        ramp: Vec<f64>,
    },
    /// Pressure pushing the two faces of a fracture apart (Pa).
    FracturePressure {
        fracture: usize,
        pressure: f64,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        ramp: Vec<f64>,
    },
    /// Uniform body force (N/m^3).
    BodyForce {
        force: [f64; 2],
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        ramp: Vec<f64>,
    },
}

impl BoundaryCondition {
    pub fn ramp(&self) -> &[f64] {
        match self {
            Self::Dirichlet { ramp, .. }
            | Self::Neumann { ramp, .. }
            | Self::Stress { ramp, .. }
            | Self::FracturePressure { ramp, .. }
            | Self::BodyForce { ramp, .. } => ramp,
        }
    }

    /// Scale factor at `step` (0-based) of `n_steps`. An empty ramp means
    /// proportional loading `(step + 1) / n_steps`.
    pub fn scale(&self, step: usize, n_steps: usize) -> f64 {
        let ramp = self.ramp();
        if ramp.is_empty() {
            (step + 1) as f64 / n_steps.max(1) as f64
        } else {
            ramp[step.min(ramp.len() - 1)]
        }
    }
}

fn resolve_nodes(mesh: &Mesh, target: &Target, index: usize) -> Result<Vec<usize>, ElasticityError> {
    let err = |message: String| ElasticityError::InvalidTarget { index, message };
    let nodes: Vec<usize> = match target {
        Target::Side(s) => {
            let mut v: Vec<usize> = mesh.edges_on_side((*s).into()).into_iter().flatten().collect();
            v.sort_unstable();
            v.dedup();
            v
        }
        Target::Nodes(ids) => {
            if let Some(bad) = ids.iter().find(|&&i| i >= mesh.n_nodes()) {
                return Err(err(format!("unknown node {bad}")));
            }
            ids.clone()
        }
        Target::Point(p) => mesh.nodes_at(*p),
        Target::Edges(edges) => {
            let mut v: Vec<usize> = edges.iter().flatten().copied().collect();
            v.sort_unstable();
            v.dedup();
            v
        }
    };
    if nodes.is_empty() {
        return Err(err(format!("target {target:?} selects no nodes")));
    }
    Ok(nodes)
}

fn resolve_edges(mesh: &Mesh, target: &Target, index: usize) -> Result<Vec<[usize; 2]>, ElasticityError> {
    let err = |message: String| ElasticityError::InvalidTarget { index, message };
    let edges = match target {
        Target::Side(s) => mesh.edges_on_side((*s).into()),
        Target::Edges(list) => {
            let boundary: BTreeMap<(usize, usize), [usize; 2]> = mesh
                .boundary
                .iter()
                .map(|&be| {
                    let [a, b] = mesh.boundary_edge_nodes(be);
                    ((a.min(b), a.max(b)), [a, b])
                })
                .collect();
            list.iter()
                .map(|&[a, b]| {
                    boundary
                        .get(&(a.min(b), a.max(b)))
                        .copied()
                        .ok_or_else(|| err(format!("edge {a}-{b} is not on the external boundary")))
                })
                .collect::<Result<Vec<_>, _>>()?
        }
        other => return Err(err(format!("tractions need an edge target, got {other:?}"))),
    };
    if edges.is_empty() {
        return Err(err("target selects no boundary edges".into()));
    }
    Ok(edges)
}

/// Checks ramp lengths, targets and Dirichlet/Neumann disjointness.
pub fn validate_bcs(mesh: &Mesh, bcs: &[BoundaryCondition], n_steps: usize) -> Result<(), ElasticityError> {
    for (i, bc) in bcs.iter().enumerate() {
        let len = bc.ramp().len();
        if len != 0 && len != n_steps {
            return Err(ElasticityError::RampLength { index: i, len, steps: n_steps });
        }
        if let BoundaryCondition::FracturePressure { fracture, .. } = bc {
            if *fracture >= mesh.fractures.len() {
                return Err(ElasticityError::InvalidTarget {
                    index: i,
                    message: format!("unknown fracture {fracture}"),
                });
            }
        }
    }
    let fixed = dirichlet_values(mesh, bcs, 0, n_steps.max(1))?;
    let pinned = |n: usize| fixed.contains_key(&(2 * n)) && fixed.contains_key(&(2 * n + 1));
    for (i, bc) in bcs.iter().enumerate() {
        if let BoundaryCondition::Neumann { target, .. } | BoundaryCondition::Stress { target, .. } = bc {
            for [a, b] in resolve_edges(mesh, target, i)? {
                if pinned(a) && pinned(b) {
                    return Err(ElasticityError::OverlappingBoundary { index: i, a, b });
                }
            }
        }
    }
    Ok(())
}

/// Consistent nodal load vector at a load step.
pub fn assemble_loads(
    mesh: &Mesh,
    bcs: &[BoundaryCondition],
    step: usize,
    n_steps: usize,
) -> Result<Vec<f64>, ElasticityError> {
    let mut f = vec![0.0; 2 * mesh.n_nodes()];
    // two-point Gauss on [0, 1]
    let g = 0.5 / 3f64.sqrt();
    let gauss = [(0.5 - g, 0.5), (0.5 + g, 0.5)];
    let edge_load = |f: &mut Vec<f64>, a: usize, b: usize, t: [f64; 2], len: f64| {
        for &(s, w) in &gauss {
            let (na, nb) = (1.0 - s, s);
            for c in 0..2 {
                f[2 * a + c] += w * len * na * t[c];
                f[2 * b + c] += w * len * nb * t[c];
            }
        }
    };
    for (i, bc) in bcs.iter().enumerate() {
        let scale = bc.scale(step, n_steps);
        match bc {
            BoundaryCondition::Dirichlet { .. } => {}
            BoundaryCondition::Neumann { target, traction, .. } => {
                for [a, b] in resolve_edges(mesh, target, i)? {
                    let (pa, pb) = (mesh.xy(a), mesh.xy(b));
                    let len = (pb[0] - pa[0]).hypot(pb[1] - pa[1]);
                    edge_load(&mut f, a, b, [scale * traction[0], scale * traction[1]], len);
                }
            }
            BoundaryCondition::Stress { target, stress, .. } => {
                let [sxx, syy, sxy] = *stress;
                for [a, b] in resolve_edges(mesh, target, i)? {
                    let (pa, pb) = (mesh.xy(a), mesh.xy(b));
                    let d = [pb[0] - pa[0], pb[1] - pa[1]];
                    let len = d[0].hypot(d[1]);
                    // boundary edges run counter-clockwise, so the outward normal is d rotated by -90 degrees
                    let n = [d[1] / len, -d[0] / len];
                    let t = [sxx * n[0] + sxy * n[1], sxy * n[0] + syy * n[1]];
                    edge_load(&mut f, a, b, [scale * t[0], scale * t[1]], len);
                }
            }
            BoundaryCondition::FracturePressure { fracture, pressure, .. } => {
                if !mesh.is_split {
                    return Err(ElasticityError::InvalidTarget {
                        index: i,
                        message: "fracture pressure needs a split mesh".into(),
                    });
                }
                if *fracture >= mesh.fractures.len() {
                    return Err(ElasticityError::InvalidTarget {
                        index: i,
                        message: format!("unknown fracture {fracture}"),
                    });
                }
                let p = scale * pressure;
                for seg in mesh.fracture_segments(*fracture) {
                    let n = seg.normal;
                    edge_load(&mut f, seg.plus[0], seg.plus[1], [p * n[0], p * n[1]], seg.length);
                    edge_load(&mut f, seg.minus[0], seg.minus[1], [-p * n[0], -p * n[1]], seg.length);
                }
            }
            BoundaryCondition::BodyForce { force, .. } => {
                for e in &mesh.elements {
                    let a = mesh.element_area(e.id);
                    for &v in &e.nodes {
                        f[2 * v] += scale * force[0] * a / 3.0;
                        f[2 * v + 1] += scale * force[1] * a / 3.0;
                    }
                }
            }
        }
    }
    Ok(f)
}

/// Prescribed displacement per DOF at a load step. Later conditions win on
/// overlapping DOFs.
pub fn dirichlet_values(
    mesh: &Mesh,
    bcs: &[BoundaryCondition],
    step: usize,
    n_steps: usize,
) -> Result<BTreeMap<usize, f64>, ElasticityError> {
    let mut out = BTreeMap::new();
    for (i, bc) in bcs.iter().enumerate() {
        if let BoundaryCondition::Dirichlet { target, ux, uy, .. } = bc {
            let scale = bc.scale(step, n_steps);
            for n in resolve_nodes(mesh, target, i)? {
                if let Some(v) = ux {
                    out.insert(2 * n, scale * v);
                }
                if let Some(v) = uy {
                    out.insert(2 * n + 1, scale * v);
                }
            }
        }
    }
    Ok(out)
}

/// Replaces rows and columns of fixed DOFs by identity and moves the known
/// column contributions to the right-hand side.
pub fn eliminate_dirichlet(k: &CsrMatrix, rhs: &[f64], fixed: &BTreeMap<usize, f64>) -> (CsrMatrix, Vec<f64>) {
    let n = k.nrows();
    let mut is_fixed = vec![false; n];
    for &d in fixed.keys() {
        is_fixed[d] = true;
    }
    let mut b = rhs.to_vec();
    let mut trip = Triplets::with_capacity(n, k.ncols(), k.nnz());
    for (i, j, v) in k.iter() {
        if is_fixed[i] {
            continue;
        }
        if j < n && is_fixed[j] {
            b[i] -= v * fixed[&j];
        } else {
            trip.push(i, j, v);
        }
    }
    for (&d, &v) in fixed {
        trip.push(d, d, 1.0);
        b[d] = v;
    }
    (trip.to_csr().expect("indices come from a valid matrix"), b)
}

/// Direct solve of an elasticity problem without contact.
pub fn solve_elastic(
    mesh: &Mesh,
    mat: &MaterialParams,
    bcs: &[BoundaryCondition],
) -> Result<Vec<f64>, ElasticityError> {
    let k = assemble_stiffness(mesh, mat, 1)?;
    let f = assemble_loads(mesh, bcs, 0, 1)?;
    let fixed = dirichlet_values(mesh, bcs, 0, 1)?;
    let (a, b) = eliminate_dirichlet(&k, &f, &fixed);
    Ok(LuFactor::new(&a)?.solve(&b))
}

/// `K u - f` at the fixed DOFs: the support forces.
pub fn reactions(k: &CsrMatrix, u: &[f64], f: &[f64], fixed: &BTreeMap<usize, f64>) -> BTreeMap<usize, f64> {
    let ku = k.mul_vec(u);
    fixed.keys().map(|&d| (d, ku[d] - f[d])).collect()
}

/// In-plane strain `[exx, eyy, gxy]` of an element.
pub fn element_strain(mesh: &Mesh, e: usize, u: &[f64]) -> [f64; 3] {
    let (b, _) = strain_operator(mesh.element_coords(e));
    let nodes = mesh.elements[e].nodes;
    let mut ue = [0.0; 6];
    for (k, &v) in nodes.iter().enumerate() {
        ue[2 * k] = u[2 * v];
        ue[2 * k + 1] = u[2 * v + 1];
    }
    let mut eps = [0.0; 3];
    for (i, row) in b.iter().enumerate() {
        eps[i] = row.iter().zip(&ue).map(|(a, b)| a * b).sum();
    }
    eps
}

/// In-plane stress `[sxx, syy, sxy]` of an element.
pub fn element_stress(mesh: &Mesh, e: usize, u: &[f64], mat: &MaterialParams) -> [f64; 3] {
    let d = plane_strain_d(mat);
    let eps = element_strain(mesh, e, u);
    let mut s = [0.0; 3];
    for i in 0..3 {
        s[i] = (0..3).map(|k| d[i][k] * eps[k]).sum();
    }
    s
}
