//! Structured triangulations of rectangles with fractures along grid lines.

use serde::{Deserialize, Serialize};

use super::{edge_key, FracturePath, Mesh, MeshError, Node, Tri3};

/// How each grid cell is cut into triangles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TriPattern {
    /// Two triangles per cell, cut along the SW-NE diagonal.
    #[default]
    Diagonal,
    /// Two triangles per cell, cut along the NW-SE diagonal.
    AntiDiagonal,
    /// Four triangles per cell around an extra centre node.
    Crossed,
}

/// A fracture given as a polyline; vertices snap to the nearest grid node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FractureSpec {
    pub points: Vec<[f64; 2]>,
    #[serde(default)]
    pub gap0: f64,
}

impl FractureSpec {
    pub fn segment(a: [f64; 2], b: [f64; 2]) -> Self {
        Self {
            points: vec![a, b],
            gap0: 0.0,
        }
    }
}

/// Tensor-product grid given by its x and y line coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct RectGrid {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub pattern: TriPattern,
}

/// Uniform `nx` x `ny` grid on `[0, width] x [0, height]` with the default
/// diagonal pattern.
pub fn generate_rect_mesh(
    width: f64,
    height: f64,
    nx: usize,
    ny: usize,
    fractures: &[FractureSpec],
) -> Result<Mesh, MeshError> {
    RectGrid::uniform(width, height, nx, ny, TriPattern::Diagonal).build(fractures)
}

/// Grid-line coordinates symmetric about `center`: uniform spacing `h` on
/// `[center - core, center + core]`, then cells growing geometrically by
/// `growth` until `center ± half_width` is reached. The last cell is
/// stretched or merged so the extent is hit exactly.
pub fn graded_axis(center: f64, half_width: f64, core: f64, h: f64, growth: f64) -> Vec<f64> {
    assert!(h > 0.0 && core >= 0.0 && half_width >= core && growth >= 1.0);
    let n_core = (core / h).round().max(1.0) as usize;
    let h_core = core / n_core as f64;
    let mut half = Vec::new();
    for i in 0..=n_core {
        half.push(i as f64 * h_core);
    }
    let mut step = h_core;
    let mut pos = core;
    while half_width - pos > 1e-12 * half_width {
        step *= growth;
        if pos + 1.5 * step >= half_width {
            pos = half_width;
        } else {
            pos += step;
        }
        half.push(pos);
    }
    let mut out: Vec<f64> = half.iter().rev().map(|d| center - d).collect();
    out.extend(half.iter().skip(1).map(|d| center + d));
    out
}

impl RectGrid {
    pub fn uniform(width: f64, height: f64, nx: usize, ny: usize, pattern: TriPattern) -> Self {
        assert!(nx > 0 && ny > 0 && width > 0.0 && height > 0.0);
        Self {
            xs: (0..=nx).map(|i| width * i as f64 / nx as f64).collect(),
            ys: (0..=ny).map(|j| height * j as f64 / ny as f64).collect(),
            pattern,
        }
    }

    pub fn build(&self, fractures: &[FractureSpec]) -> Result<Mesh, MeshError> {
        let (nx, ny) = (self.xs.len() - 1, self.ys.len() - 1);
        let corner = |i: usize, j: usize| j * (nx + 1) + i;
        let mut nodes = Vec::new();
        for (j, &y) in self.ys.iter().enumerate() {
            for (i, &x) in self.xs.iter().enumerate() {
                nodes.push(Node {
                    id: corner(i, j),
                    x,
                    y,
                });
            }
        }
        let mut elements = Vec::new();
        let mut push = |nodes: [usize; 3]| {
            let id = elements.len();
            elements.push(Tri3 { id, nodes });
        };
        for j in 0..ny {
            for i in 0..nx {
                let (a, b, c, d) = (corner(i, j), corner(i + 1, j), corner(i + 1, j + 1), corner(i, j + 1));
                match self.pattern {
                    TriPattern::Diagonal => {
                        push([a, b, c]);
                        push([a, c, d]);
                    }
                    TriPattern::AntiDiagonal => {
                        push([a, b, d]);
                        push([b, c, d]);
                    }
                    TriPattern::Crossed => {
                        let m = nodes.len();
                        nodes.push(Node {
                            id: m,
                            x: 0.5 * (self.xs[i] + self.xs[i + 1]),
                            y: 0.5 * (self.ys[j] + self.ys[j + 1]),
                        });
                        push([a, b, m]);
                        push([b, c, m]);
                        push([c, d, m]);
                        push([d, a, m]);
                    }
                }
            }
        }

        let base = Mesh::new(nodes, elements, Vec::new())?;
        let edges = base.edge_set();
        let h_min = self
            .xs
            .windows(2)
            .chain(self.ys.windows(2))
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min);
        let mut paths = Vec::with_capacity(fractures.len());
        for (fid, spec) in fractures.iter().enumerate() {
            if spec.points.len() < 2 {
                return Err(MeshError::InvalidFracture {
                    fracture: fid,
                    message: "a fracture needs at least two points".into(),
                });
            }
            let mut path: Vec<usize> = Vec::new();
            for w in spec.points.windows(2) {
                let seg = resolve_segment(&base, &edges, w[0], w[1], h_min)?;
                if path.last() == seg.first() {
                    path.extend(seg.into_iter().skip(1));
                } else {
                    path.extend(seg);
                }
            }
            paths.push(FracturePath {
                id: fid,
                nodes: path,
                is_through_going: false,
                gap0: spec.gap0,
            });
        }
        Mesh::new(base.nodes, base.elements, paths)
    }
}

/// Nodes on the straight segment between the snapped endpoints, in order,
/// checked to form a chain of mesh edges.
fn resolve_segment(
    mesh: &Mesh,
    edges: &std::collections::HashSet<(usize, usize)>,
    start: [f64; 2],
    end: [f64; 2],
    h_min: f64,
) -> Result<Vec<usize>, MeshError> {
    let err = || MeshError::NonConformingSegment { start, end };
    let snap = |p: [f64; 2]| -> Result<usize, MeshError> {
        match mesh.nearest_node(p) {
            Some((id, d)) if d <= 0.25 * h_min => Ok(id),
            _ => Err(err()),
        }
    };
    let (a, b) = (snap(start)?, snap(end)?);
    if a == b {
        return Err(err());
    }
    let (pa, pb) = (mesh.xy(a), mesh.xy(b));
    let d = [pb[0] - pa[0], pb[1] - pa[1]];
    let len2 = d[0] * d[0] + d[1] * d[1];
    let len = len2.sqrt();
    let tol = 1e-9 * len.max(h_min);
    let mut on_line: Vec<(f64, usize)> = mesh
        .nodes
        .iter()
        .filter_map(|n| {
            let r = [n.x - pa[0], n.y - pa[1]];
            let t = (r[0] * d[0] + r[1] * d[1]) / len2;
            let dist = (r[0] * d[1] - r[1] * d[0]).abs() / len;
            (dist <= tol && t >= -1e-12 && t <= 1.0 + 1e-12).then_some((t, n.id))
        })
        .collect();
    on_line.sort_by(|x, y| x.0.total_cmp(&y.0));
    let chain: Vec<usize> = on_line.into_iter().map(|(_, id)| id).collect();
    if chain.windows(2).any(|w| !edges.contains(&edge_key(w[0], w[1]))) {
        return Err(err());
    }
    Ok(chain)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_cell_patterns() {
        let m = generate_rect_mesh(1.0, 1.0, 1, 1, &[]).unwrap();
        assert_eq!((m.n_nodes(), m.n_elements()), (4, 2));
        let c = RectGrid::uniform(1.0, 1.0, 1, 1, TriPattern::Crossed).build(&[]).unwrap();
        assert_eq!((c.n_nodes(), c.n_elements()), (5, 4));
        for mesh in [&m, &c] {
            assert!((mesh.total_area() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn diagonal_fracture_node_count() {
        // 45 degree segment of length sqrt(2) through the centre of a 2x2 square
        // on a 0.1 grid: it visits grid corners at 0.5, 0.6, ..., 1.5
        let f = FractureSpec::segment([0.5, 0.5], [1.5, 1.5]);
        let m = generate_rect_mesh(2.0, 2.0, 20, 20, &[f]).unwrap();
        assert_eq!(m.fractures[0].nodes.len(), 11);
        assert!(!m.fractures[0].is_through_going);
    }

    #[test]
    fn crossing_segments_share_one_node() {
        let f1 = FractureSpec::segment([1.0, 2.0], [3.0, 2.0]);
        let f2 = FractureSpec::segment([2.0, 1.0], [2.0, 3.0]);
        let m = generate_rect_mesh(4.0, 4.0, 40, 40, &[f1, f2]).unwrap();
        let a: std::collections::HashSet<_> = m.fractures[0].nodes.iter().collect();
        let shared: Vec<_> = m.fractures[1].nodes.iter().filter(|v| a.contains(v)).collect();
        assert_eq!(shared.len(), 1);
        assert_eq!(m.xy(*shared[0]), [2.0, 2.0]);
    }

    #[test]
    fn anti_diagonal_segment_does_not_conform_to_diagonal_pattern() {
        let f = FractureSpec::segment([0.5, 1.5], [1.5, 0.5]);
        let err = generate_rect_mesh(2.0, 2.0, 20, 20, &[f.clone()]).unwrap_err();
        assert!(matches!(err, MeshError::NonConformingSegment { .. }));
        let ok = RectGrid::uniform(2.0, 2.0, 20, 20, TriPattern::AntiDiagonal).build(&[f]);
        assert_eq!(ok.unwrap().fractures[0].nodes.len(), 11);
    }

    #[test]
    fn through_going_flag() {
        let f = FractureSpec::segment([0.0, 0.0], [1.0, 1.0]);
        let m = generate_rect_mesh(1.0, 1.0, 4, 4, &[f]).unwrap();
        assert!(m.fractures[0].is_through_going);
    }

    #[test]
    fn graded_axis_is_symmetric_and_hits_extent() {
        let xs = graded_axis(0.0, 10.0, 1.0, 0.1, 1.3);
        assert_eq!(xs.first().copied(), Some(-10.0));
        assert_eq!(xs.last().copied(), Some(10.0));
        assert!(xs.windows(2).all(|w| w[1] > w[0]));
        for (a, b) in xs.iter().zip(xs.iter().rev()) {
            assert!((a + b).abs() < 1e-12);
        }
        // core lines are uniform
        assert!(xs.iter().any(|&x| (x - 1.0).abs() < 1e-12));
        assert!(xs.iter().any(|&x| (x - 0.5).abs() < 1e-12));
    }
}
