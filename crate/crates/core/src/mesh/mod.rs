//! Triangular meshes with embedded fracture paths.
//!
//! A [`Mesh`] starts out conforming: every fracture is a chain of existing
//! mesh edges. [`split_fractures`] duplicates the nodes along each path so
//! the two faces can move independently, and [`build_contact_pairs`] matches
//! the duplicates into [`ContactPair`]s carrying a fixed local frame.

mod generate;
mod io;
mod split;

use std::collections::{BTreeMap, HashMap, HashSet};

use thiserror::Error;

pub use generate::{generate_rect_mesh, graded_axis, FractureSpec, RectGrid, TriPattern};
pub use io::{load_mesh, parse_mesh, save_mesh};
pub use split::{build_contact_pairs, split_fractures};

/// Minimum signed area accepted for an element, relative to the squared
/// bounding-box diagonal.
pub const AREA_TOL: f64 = 1e-14;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("duplicate node id {0}")]
    DuplicateNodeId(usize),
    #[error("element {element} references unknown node {node}")]
    UnknownNode { element: usize, node: usize },
    #[error("element {element} is degenerate or clockwise (signed area {area:e})")]
    DegenerateElement { element: usize, area: f64 },
    #[error("fracture {fracture}: nodes {a} and {b} are not joined by a mesh edge")]
    NonConformingPath { fracture: usize, a: usize, b: usize },
    #[error("fracture {fracture}: {message}")]
    InvalidFracture { fracture: usize, message: String },
    #[error("fracture segment from {start:?} to {end:?} does not follow grid edges")]
    NonConformingSegment { start: [f64; 2], end: [f64; 2] },
    #[error("fracture {fracture}: element {element} centroid lies on the fracture line")]
    AmbiguousSide { fracture: usize, element: usize },
    #[error("fractures have already been split")]
    AlreadySplit,
    #[error("fractures must be split before this operation")]
    NotSplit,
    #[error("fracture {fracture}: unmatched duplicate at node {node}")]
    UnmatchedDuplicate { fracture: usize, node: usize },
    #[error("a split mesh cannot be written in the input mesh format")]
    SaveSplitMesh,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Node {
    pub id: usize,
    pub x: f64,
    pub y: f64,
}

impl Node {
    pub fn xy(&self) -> [f64; 2] {
        [self.x, self.y]
    }
}

/// Linear triangle, nodes counter-clockwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Tri3 {
    pub id: usize,
    pub nodes: [usize; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct FracturePath {
    pub id: usize,
    /// Original node ids, ordered along the path.
    pub nodes: Vec<usize>,
    pub is_through_going: bool,
    /// Initial normal gap carried by every pair on this fracture (m).
    pub gap0: f64,
}

/// Matched plus/minus duplicates on a fracture.
#[derive(Debug, Clone, PartialEq)]
pub struct ContactPair {
    pub id: usize,
    pub node_plus: usize,
    pub node_minus: usize,
    pub fracture: usize,
    /// Arc length from the first node of the fracture path (m).
    pub arc_coord: f64,
    /// Unit normal, pointing from the minus face toward the plus face.
    pub normal: [f64; 2],
    /// Unit tangent, the normal rotated by -90 degrees.
    pub tangent: [f64; 2],
    pub is_crossing_pair: bool,
    /// For crossing pairs: -1 when the pair lies on the incoming side of the
    /// intersecting fracture, +1 on the outgoing side. Zero otherwise.
    pub arc_side: i8,
    /// Original (pre-split) node id.
    pub origin: usize,
    pub gap0: f64,
}

/// One edge of a fracture path after splitting, with its face nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct FractureSegment {
    pub fracture: usize,
    /// Index of the segment along the path (between path nodes k and k+1).
    pub index: usize,
    pub plus: [usize; 2],
    pub minus: [usize; 2],
    pub eta: [f64; 2],
    pub length: f64,
    /// Unit normal of the segment (left of the path direction).
    pub normal: [f64; 2],
    /// Contact pair at each end; `None` at an undivided crack tip.
    pub pairs: [Option<usize>; 2],
}

/// Element side with no neighbour, identified by element and local edge
/// (local edge `k` joins local nodes `k` and `k + 1`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BoundaryEdge {
    pub element: usize,
    pub local: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
    Bottom,
    Top,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub nodes: Vec<Node>,
    pub elements: Vec<Tri3>,
    pub fractures: Vec<FracturePath>,
    pub pairs: Vec<ContactPair>,
    pub segments: Vec<FractureSegment>,
    /// External boundary, fixed before splitting so fracture faces are excluded.
    pub boundary: Vec<BoundaryEdge>,
    /// Original node id for every node; identity before splitting.
    pub origin: Vec<usize>,
    /// Original node id to all of its copies (first copy keeps the original id).
    pub copies: BTreeMap<usize, Vec<usize>>,
    pub is_split: bool,
}

pub(crate) fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

pub(crate) fn signed_area(p: [f64; 2], q: [f64; 2], r: [f64; 2]) -> f64 {
    0.5 * ((q[0] - p[0]) * (r[1] - p[1]) - (r[0] - p[0]) * (q[1] - p[1]))
}

impl Mesh {
    /// Validates connectivity and registers fractures (unsplit).
    pub fn new(
        nodes: Vec<Node>,
        elements: Vec<Tri3>,
        fractures: Vec<FracturePath>,
    ) -> Result<Self, MeshError> {
        let n = nodes.len();
        let mut seen = vec![false; n];
        for node in &nodes {
            if node.id >= n {
                return Err(MeshError::Parse {
                    line: 0,
                    column: 0,
                    message: format!("node id {} outside 0..{}", node.id, n),
                });
            }
            if seen[node.id] {
                return Err(MeshError::DuplicateNodeId(node.id));
            }
            seen[node.id] = true;
        }
        let mut nodes = nodes;
        nodes.sort_by_key(|nd| nd.id);
        let mut elements = elements;
        elements.sort_by_key(|e| e.id);
        for (k, e) in elements.iter().enumerate() {
            if e.id != k {
                return Err(MeshError::Parse {
                    line: 0,
                    column: 0,
                    message: format!("element ids must be dense, found {} at position {}", e.id, k),
                });
            }
        }

        let mut mesh = Mesh {
            origin: (0..n).collect(),
            nodes,
            elements,
            fractures: Vec::new(),
            pairs: Vec::new(),
            segments: Vec::new(),
            boundary: Vec::new(),
            copies: BTreeMap::new(),
            is_split: false,
        };
        let scale = mesh.diameter().powi(2).max(f64::MIN_POSITIVE);
        for e in &mesh.elements {
            for &v in &e.nodes {
                if v >= n {
                    return Err(MeshError::UnknownNode {
                        element: e.id,
                        node: v,
                    });
                }
            }
            let area = mesh.element_area(e.id);
            if !(area > AREA_TOL * scale) {
                return Err(MeshError::DegenerateElement {
                    element: e.id,
                    area,
                });
            }
        }
        mesh.boundary = mesh.compute_boundary();
        let boundary_nodes = mesh.boundary_node_set();
        let edges = mesh.edge_set();

        let mut fractures = fractures;
        fractures.sort_by_key(|f| f.id);
        for (k, f) in fractures.iter_mut().enumerate() {
            if f.id != k {
                return Err(MeshError::InvalidFracture {
                    fracture: f.id,
                    message: format!("fracture ids must be dense, expected {k}"),
                });
            }
            if f.nodes.len() < 2 {
                return Err(MeshError::InvalidFracture {
                    fracture: f.id,
                    message: "a path needs at least two nodes".into(),
                });
            }
            let mut on_path = HashSet::new();
            for &v in &f.nodes {
                if v >= n {
                    return Err(MeshError::InvalidFracture {
                        fracture: f.id,
                        message: format!("unknown node {v}"),
                    });
                }
                if !on_path.insert(v) {
                    return Err(MeshError::InvalidFracture {
                        fracture: f.id,
                        message: format!("node {v} visited twice"),
                    });
                }
            }
            for w in f.nodes.windows(2) {
                if !edges.contains(&edge_key(w[0], w[1])) {
                    return Err(MeshError::NonConformingPath {
                        fracture: f.id,
                        a: w[0],
                        b: w[1],
                    });
                }
                if mesh.is_boundary_edge(w[0], w[1]) {
                    return Err(MeshError::InvalidFracture {
                        fracture: f.id,
                        message: format!("segment {}-{} lies on the external boundary", w[0], w[1]),
                    });
                }
            }
            let first = f.nodes[0];
            let last = *f.nodes.last().unwrap();
            f.is_through_going = boundary_nodes.contains(&first) && boundary_nodes.contains(&last);
        }
        // fracture edges may not be shared between two fractures
        let mut owner: HashMap<(usize, usize), usize> = HashMap::new();
        for f in &fractures {
            for w in f.nodes.windows(2) {
                if let Some(other) = owner.insert(edge_key(w[0], w[1]), f.id) {
                    return Err(MeshError::InvalidFracture {
                        fracture: f.id,
                        message: format!("segment {}-{} overlaps fracture {other}", w[0], w[1]),
                    });
                }
            }
        }
        mesh.fractures = fractures;
        Ok(mesh)
    }

    /// Splits fractures and builds contact pairs.
    pub fn prepared(self) -> Result<Self, MeshError> {
        build_contact_pairs(split_fractures(self)?)
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn n_pairs(&self) -> usize {
        self.pairs.len()
    }

    pub fn xy(&self, node: usize) -> [f64; 2] {
        self.nodes[node].xy()
    }

    pub fn element_coords(&self, e: usize) -> [[f64; 2]; 3] {
        let el = &self.elements[e];
        [self.xy(el.nodes[0]), self.xy(el.nodes[1]), self.xy(el.nodes[2])]
    }

    pub fn element_area(&self, e: usize) -> f64 {
        let [p, q, r] = self.element_coords(e);
        signed_area(p, q, r)
    }

    pub fn total_area(&self) -> f64 {
        (0..self.elements.len()).map(|e| self.element_area(e)).sum()
    }

    pub fn centroid(&self, e: usize) -> [f64; 2] {
        let [p, q, r] = self.element_coords(e);
        [(p[0] + q[0] + r[0]) / 3.0, (p[1] + q[1] + r[1]) / 3.0]
    }

    /// `[xmin, ymin, xmax, ymax]`
    pub fn bounding_box(&self) -> [f64; 4] {
        let mut bb = [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY];
        for n in &self.nodes {
            bb[0] = bb[0].min(n.x);
            bb[1] = bb[1].min(n.y);
            bb[2] = bb[2].max(n.x);
            bb[3] = bb[3].max(n.y);
        }
        bb
    }

    pub fn diameter(&self) -> f64 {
        let bb = self.bounding_box();
        ((bb[2] - bb[0]).powi(2) + (bb[3] - bb[1]).powi(2)).sqrt()
    }

    pub fn edge_set(&self) -> HashSet<(usize, usize)> {
        let mut set = HashSet::with_capacity(self.elements.len() * 2);
        for e in &self.elements {
            for k in 0..3 {
                set.insert(edge_key(e.nodes[k], e.nodes[(k + 1) % 3]));
            }
        }
        set
    }

    fn compute_boundary(&self) -> Vec<BoundaryEdge> {
        let mut count: HashMap<(usize, usize), Vec<BoundaryEdge>> = HashMap::new();
        for e in &self.elements {
            for k in 0..3 {
                count
                    .entry(edge_key(e.nodes[k], e.nodes[(k + 1) % 3]))
                    .or_default()
                    .push(BoundaryEdge {
                        element: e.id,
                        local: k,
                    });
            }
        }
        let mut out: Vec<BoundaryEdge> = count
            .into_values()
            .filter(|v| v.len() == 1)
            .map(|v| v[0])
            .collect();
        out.sort();
        out
    }

    fn is_boundary_edge(&self, a: usize, b: usize) -> bool {
        let key = edge_key(a, b);
        self.boundary
            .iter()
            .any(|be| edge_key(self.boundary_edge_nodes(*be)[0], self.boundary_edge_nodes(*be)[1]) == key)
    }

    pub fn boundary_edge_nodes(&self, be: BoundaryEdge) -> [usize; 2] {
        let el = &self.elements[be.element];
        [el.nodes[be.local], el.nodes[(be.local + 1) % 3]]
    }

    pub fn boundary_node_set(&self) -> HashSet<usize> {
        self.boundary
            .iter()
            .flat_map(|&be| self.boundary_edge_nodes(be))
            .collect()
    }

    /// External boundary edges whose both endpoints lie on the given side of
    /// the bounding box.
    pub fn edges_on_side(&self, side: Side) -> Vec<[usize; 2]> {
        let bb = self.bounding_box();
        let tol = 1e-9 * self.diameter();
        let on = |p: [f64; 2]| match side {
            Side::Left => (p[0] - bb[0]).abs() <= tol,
            Side::Right => (p[0] - bb[2]).abs() <= tol,
            Side::Bottom => (p[1] - bb[1]).abs() <= tol,
            Side::Top => (p[1] - bb[3]).abs() <= tol,
        };
        self.boundary
            .iter()
            .map(|&be| self.boundary_edge_nodes(be))
            .filter(|[a, b]| on(self.xy(*a)) && on(self.xy(*b)))
            .collect()
    }

    /// Nodes located at `p` (within a small tolerance). After splitting a
    /// point on a fracture resolves to all of its copies.
    pub fn nodes_at(&self, p: [f64; 2]) -> Vec<usize> {
        let tol = 1e-9 * self.diameter();
        self.nodes
            .iter()
            .filter(|n| (n.x - p[0]).hypot(n.y - p[1]) <= tol)
            .map(|n| n.id)
            .collect()
    }

    pub fn nearest_node(&self, p: [f64; 2]) -> Option<(usize, f64)> {
        self.nodes
            .iter()
            .map(|n| (n.id, (n.x - p[0]).hypot(n.y - p[1])))
            .min_by(|a, b| a.1.total_cmp(&b.1))
    }

    /// Segments of one fracture in path order.
    pub fn fracture_segments(&self, fracture: usize) -> impl Iterator<Item = &FractureSegment> {
        self.segments.iter().filter(move |s| s.fracture == fracture)
    }

    /// Pairs of one fracture sorted by arc coordinate, crossing pairs ordered
    /// by side.
    pub fn fracture_pairs(&self, fracture: usize) -> Vec<&ContactPair> {
        let mut v: Vec<&ContactPair> = self.pairs.iter().filter(|p| p.fracture == fracture).collect();
        v.sort_by(|a, b| {
            a.arc_coord
                .total_cmp(&b.arc_coord)
                .then(a.arc_side.cmp(&b.arc_side))
        });
        v
    }

    pub fn fracture_length(&self, fracture: usize) -> f64 {
        self.fractures[fracture]
            .nodes
            .windows(2)
            .map(|w| {
                let (p, q) = (self.nodes[w[0]].xy(), self.nodes[w[1]].xy());
                (q[0] - p[0]).hypot(q[1] - p[1])
            })
            .sum()
    }

    /// Groups of pairs sharing an original node with more than two copies
    /// (fracture intersections and junctions).
    pub fn crossing_groups(&self) -> Vec<Vec<usize>> {
        let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for p in &self.pairs {
            if p.is_crossing_pair {
                groups.entry(p.origin).or_default().push(p.id);
            }
        }
        groups.into_values().collect()
    }

    /// Shortest edge length in the mesh.
    pub fn min_edge_length(&self) -> f64 {
        self.edge_set()
            .into_iter()
            .map(|(a, b)| {
                let (p, q) = (self.xy(a), self.xy(b));
                (q[0] - p[0]).hypot(q[1] - p[1])
            })
            .fold(f64::INFINITY, f64::min)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn unit_square() -> Mesh {
        let nodes = vec![
            Node { id: 0, x: 0.0, y: 0.0 },
            Node { id: 1, x: 1.0, y: 0.0 },
            Node { id: 2, x: 1.0, y: 1.0 },
            Node { id: 3, x: 0.0, y: 1.0 },
        ];
        let elements = vec![
            Tri3 { id: 0, nodes: [0, 1, 2] },
            Tri3 { id: 1, nodes: [0, 2, 3] },
        ];
        Mesh::new(nodes, elements, vec![]).unwrap()
    }

    #[test]
    fn unit_square_basics() {
        let m = unit_square();
        assert_eq!((m.n_nodes(), m.n_elements(), m.fractures.len()), (4, 2, 0));
        assert!((m.total_area() - 1.0).abs() < 1e-15);
        assert_eq!(m.boundary.len(), 4);
        assert_eq!(m.edges_on_side(Side::Bottom), vec![[0, 1]]);
    }

    #[test]
    fn clockwise_element_is_rejected() {
        let nodes = vec![
            Node { id: 0, x: 0.0, y: 0.0 },
            Node { id: 1, x: 1.0, y: 0.0 },
            Node { id: 2, x: 0.0, y: 1.0 },
        ];
        let err = Mesh::new(nodes, vec![Tri3 { id: 0, nodes: [0, 2, 1] }], vec![]).unwrap_err();
        assert!(matches!(err, MeshError::DegenerateElement { element: 0, .. }));
    }

    #[test]
    fn duplicate_node_id_is_rejected() {
        let nodes = vec![
            Node { id: 0, x: 0.0, y: 0.0 },
            Node { id: 0, x: 1.0, y: 0.0 },
            Node { id: 2, x: 0.0, y: 1.0 },
        ];
        let err = Mesh::new(nodes, vec![], vec![]).unwrap_err();
        assert!(matches!(err, MeshError::DuplicateNodeId(0)));
    }

    #[test]
    fn fracture_on_external_boundary_is_rejected() {
        let m = unit_square();
        let f = FracturePath {
            id: 0,
            nodes: vec![0, 1],
            is_through_going: false,
            gap0: 0.0,
        };
        let err = Mesh::new(m.nodes.clone(), m.elements.clone(), vec![f]).unwrap_err();
        assert!(matches!(err, MeshError::InvalidFracture { .. }));
    }
}
