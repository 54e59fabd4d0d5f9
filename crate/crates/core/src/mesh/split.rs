//! Node duplication along fractures and contact-pair construction.

use std::collections::{BTreeMap, HashMap};

use super::{edge_key, ContactPair, FractureSegment, Mesh, MeshError, Node};

/// Duplicates every fracture node once per connected sector of its element
/// fan, where sectors are separated by fracture edges. Crack tips have a
/// single sector and stay shared.
pub fn split_fractures(mut mesh: Mesh) -> Result<Mesh, MeshError> {
    if mesh.is_split {
        return Err(MeshError::AlreadySplit);
    }
    let mut frac_edges: HashMap<(usize, usize), usize> = HashMap::new();
    for f in &mesh.fractures {
        for w in f.nodes.windows(2) {
            frac_edges.insert(edge_key(w[0], w[1]), f.id);
        }
    }
    let mut edge_elems: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
    for e in &mesh.elements {
        for k in 0..3 {
            let key = edge_key(e.nodes[k], e.nodes[(k + 1) % 3]);
            if frac_edges.contains_key(&key) {
                edge_elems.entry(key).or_default().push(e.id);
            }
        }
    }

    let mut fan: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for f in &mesh.fractures {
        for &v in &f.nodes {
            fan.entry(v).or_default();
        }
    }
    for e in &mesh.elements {
        for &v in &e.nodes {
            if let Some(list) = fan.get_mut(&v) {
                list.push(e.id);
            }
        }
    }

    // element-local relabelling, applied after all sectors are known
    let mut relabel: Vec<(usize, usize, usize)> = Vec::new();
    for (&v, elems) in &fan {
        let sectors = fan_sectors(&mesh, v, elems, &frac_edges);
        if sectors.len() < 2 {
            continue;
        }
        let mut ids = vec![v];
        for sector in sectors.iter().skip(1) {
            let id = mesh.nodes.len();
            let p = mesh.nodes[v];
            mesh.nodes.push(Node { id, x: p.x, y: p.y });
            mesh.origin.push(v);
            ids.push(id);
            for &e in sector {
                relabel.push((e, v, id));
            }
        }
        mesh.copies.insert(v, ids);
    }
    for (e, old, new) in relabel {
        for slot in mesh.elements[e].nodes.iter_mut() {
            if *slot == old {
                *slot = new;
            }
        }
    }

    let mut segments = Vec::new();
    for f in &mesh.fractures {
        let mut eta = 0.0;
        for (k, w) in f.nodes.windows(2).enumerate() {
            let (a, b) = (w[0], w[1]);
            let (pa, pb) = (mesh.nodes[a].xy(), mesh.nodes[b].xy());
            let d = [pb[0] - pa[0], pb[1] - pa[1]];
            let length = d[0].hypot(d[1]);
            let normal = [-d[1] / length, d[0] / length];
            let mut plus = None;
            let mut minus = None;
            for &e in &edge_elems[&edge_key(a, b)] {
                let c = mesh.centroid(e);
                let side = (c[0] - pa[0]) * normal[0] + (c[1] - pa[1]) * normal[1];
                if side.abs() < 1e-12 * length {
                    return Err(MeshError::AmbiguousSide {
                        fracture: f.id,
                        element: e,
                    });
                }
                let local = |orig: usize| {
                    *mesh.elements[e]
                        .nodes
                        .iter()
                        .find(|&&n| mesh.origin[n] == orig)
                        .expect("element keeps a copy of its fracture node")
                };
                let ends = [local(a), local(b)];
                if side > 0.0 {
                    plus = Some(ends);
                } else {
                    minus = Some(ends);
                }
            }
            let (Some(plus), Some(minus)) = (plus, minus) else {
                return Err(MeshError::InvalidFracture {
                    fracture: f.id,
                    message: format!("segment {a}-{b} does not have an element on both sides"),
                });
            };
            segments.push(FractureSegment {
                fracture: f.id,
                index: k,
                plus,
                minus,
                eta: [eta, eta + length],
                length,
                normal,
                pairs: [None, None],
            });
            eta += length;
        }
    }
    mesh.segments = segments;
    mesh.is_split = true;
    Ok(mesh)
}

/// Connected groups of the element fan around `v`, where neighbours share an
/// edge through `v` that is not a fracture edge. Sorted by smallest element.
fn fan_sectors(
    mesh: &Mesh,
    v: usize,
    elems: &[usize],
    frac_edges: &HashMap<(usize, usize), usize>,
) -> Vec<Vec<usize>> {
    let mut by_edge: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
    for &e in elems {
        for &w in &mesh.elements[e].nodes {
            if w != v {
                by_edge.entry(edge_key(v, w)).or_default().push(e);
            }
        }
    }
    let index: HashMap<usize, usize> = elems.iter().enumerate().map(|(i, &e)| (e, i)).collect();
    let mut parent: Vec<usize> = (0..elems.len()).collect();
    fn find(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    for (key, list) in &by_edge {
        if frac_edges.contains_key(key) || list.len() != 2 {
            continue;
        }
        let (x, y) = (find(&mut parent, index[&list[0]]), find(&mut parent, index[&list[1]]));
        if x != y {
            parent[x.max(y)] = x.min(y);
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &e) in elems.iter().enumerate() {
        let r = find(&mut parent, i);
        groups.entry(r).or_default().push(e);
    }
    let mut out: Vec<Vec<usize>> = groups.into_values().collect();
    for g in &mut out {
        g.sort_unstable();
    }
    out.sort_by_key(|g| g[0]);
    out
}

/// Matches plus/minus copies along every fracture into contact pairs.
///
/// Where the plus and minus copies agree on both sides of a path node a
/// single pair is created with the averaged segment normal. Where another
/// fracture cuts through (or ends at) the node the copies differ, and one
/// pair per side is created with the normal of its own segment.
pub fn build_contact_pairs(mut mesh: Mesh) -> Result<Mesh, MeshError> {
    if !mesh.is_split {
        return Err(MeshError::NotSplit);
    }
    let mut pairs: Vec<ContactPair> = Vec::new();
    let mut seg_base = 0;
    for f in &mesh.fractures {
        let nseg = f.nodes.len() - 1;
        let segs = &mut mesh.segments[seg_base..seg_base + nseg];
        for k in 0..f.nodes.len() {
            let v = f.nodes[k];
            // (plus, minus, normal, eta) seen from the incoming and outgoing segment
            let incoming = (k > 0).then(|| {
                let s = &segs[k - 1];
                (s.plus[1], s.minus[1], s.normal, s.eta[1])
            });
            let outgoing = (k < nseg).then(|| {
                let s = &segs[k];
                (s.plus[0], s.minus[0], s.normal, s.eta[0])
            });
            let split_in = incoming.map(|(p, m, ..)| p != m);
            let split_out = outgoing.map(|(p, m, ..)| p != m);
            if split_in == Some(false) || split_out == Some(false) {
                if split_in == Some(true) || split_out == Some(true) {
                    return Err(MeshError::UnmatchedDuplicate {
                        fracture: f.id,
                        node: v,
                    });
                }
                continue;
            }
            let mut push = |plus: usize, minus: usize, normal: [f64; 2], eta: f64, side: i8| {
                let id = pairs.len();
                pairs.push(ContactPair {
                    id,
                    node_plus: plus,
                    node_minus: minus,
                    fracture: f.id,
                    arc_coord: eta,
                    normal,
                    tangent: [normal[1], -normal[0]],
                    is_crossing_pair: side != 0,
                    arc_side: side,
                    origin: v,
                    gap0: f.gap0,
                });
                id
            };
            match (incoming, outgoing) {
                (Some(i), Some(o)) if i.0 == o.0 && i.1 == o.1 => {
                    let n = [i.2[0] + o.2[0], i.2[1] + o.2[1]];
                    let len = n[0].hypot(n[1]);
                    let id = push(i.0, i.1, [n[0] / len, n[1] / len], i.3, 0);
                    segs[k - 1].pairs[1] = Some(id);
                    segs[k].pairs[0] = Some(id);
                }
                (Some(i), Some(o)) => {
                    let a = push(i.0, i.1, i.2, i.3, -1);
                    segs[k - 1].pairs[1] = Some(a);
                    let b = push(o.0, o.1, o.2, o.3, 1);
                    segs[k].pairs[0] = Some(b);
                }
                (Some(i), None) => {
                    let id = push(i.0, i.1, i.2, i.3, 0);
                    segs[k - 1].pairs[1] = Some(id);
                }
                (None, Some(o)) => {
                    let id = push(o.0, o.1, o.2, o.3, 0);
                    segs[k].pairs[0] = Some(id);
                }
                (None, None) => unreachable!("paths have at least two nodes"),
            }
        }
        seg_base += nseg;
    }
    mesh.pairs = pairs;
    Ok(mesh)
}

#[cfg(test)]
mod tests {
    use super::super::{generate_rect_mesh, parse_mesh, FractureSpec};
    use super::*;

    const S2: f64 = std::f64::consts::FRAC_1_SQRT_2;

    fn close(a: [f64; 2], b: [f64; 2]) -> bool {
        (a[0] - b[0]).abs() < 1e-12 && (a[1] - b[1]).abs() < 1e-12
    }

    #[test]
    fn interior_crack_duplicates_all_but_tips() {
        let f = FractureSpec::segment([0.4, 1.0], [1.6, 1.0]);
        let m = generate_rect_mesh(2.0, 2.0, 10, 10, &[f]).unwrap();
        let n0 = m.n_nodes();
        let k = m.fractures[0].nodes.len();
        let m = m.prepared().unwrap();
        assert_eq!(m.n_nodes(), n0 + k - 2);
        assert_eq!(m.n_pairs(), k - 2);
        for p in &m.pairs {
            assert!(close(p.normal, [0.0, 1.0]));
            assert!(close(p.tangent, [1.0, 0.0]));
            assert!(!p.is_crossing_pair);
            // plus side is above the crack
            let above = m.elements.iter().any(|e| {
                e.nodes.contains(&p.node_plus) && m.centroid(e.id)[1] > 1.0
            });
            assert!(above);
        }
        let tips: Vec<_> = m.segments.iter().flat_map(|s| s.pairs).filter(|p| p.is_none()).collect();
        assert_eq!(tips.len(), 2);
    }

    #[test]
    fn inclined_crack_frame() {
        let f = FractureSpec::segment([0.5, 0.5], [1.5, 1.5]);
        let m = generate_rect_mesh(2.0, 2.0, 20, 20, &[f]).unwrap().prepared().unwrap();
        assert_eq!(m.n_pairs(), 9);
        for p in &m.pairs {
            assert!(close(p.normal, [-S2, S2]));
            assert!(close(p.tangent, [S2, S2]));
        }
        let arcs: Vec<f64> = m.fracture_pairs(0).iter().map(|p| p.arc_coord).collect();
        assert!((arcs[0] - 0.1 * 2f64.sqrt()).abs() < 1e-12);
        assert!(arcs.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn through_going_fracture_splits_endpoints() {
        let f = FractureSpec::segment([0.0, 1.0], [2.0, 1.0]);
        let m = generate_rect_mesh(2.0, 2.0, 4, 4, &[f]).unwrap();
        let n0 = m.n_nodes();
        let m = m.prepared().unwrap();
        assert_eq!(m.n_nodes(), n0 + 5);
        assert_eq!(m.n_pairs(), 5);
        assert!(m.segments.iter().all(|s| s.pairs.iter().all(Option::is_some)));
        // the boundary now has no element edge spanning the fracture
        let e = m.edges_on_side(super::super::Side::Left);
        assert_eq!(e.len(), 4);
    }

    #[test]
    fn crossing_has_four_copies_and_four_pairs() {
        let f1 = FractureSpec::segment([0.5, 1.0], [1.5, 1.0]);
        let f2 = FractureSpec::segment([1.0, 0.5], [1.0, 1.5]);
        let m = generate_rect_mesh(2.0, 2.0, 8, 8, &[f1, f2]).unwrap().prepared().unwrap();
        let centre = m.nodes_at([1.0, 1.0]);
        assert_eq!(centre.len(), 4);
        let crossing: Vec<_> = m.pairs.iter().filter(|p| p.is_crossing_pair).collect();
        assert_eq!(crossing.len(), 4);
        assert_eq!(m.crossing_groups().len(), 1);
        for p in &crossing {
            assert_ne!(p.node_plus, p.node_minus);
            assert!(centre.contains(&p.node_plus) && centre.contains(&p.node_minus));
        }
        let f0: Vec<i8> = m.fracture_pairs(0).iter().filter(|p| p.is_crossing_pair).map(|p| p.arc_side).collect();
        assert_eq!(f0, vec![-1, 1]);
    }

    #[test]
    fn split_preserves_area_and_frames_are_orthonormal() {
        let f1 = FractureSpec {
            points: vec![[0.25, 0.25], [1.0, 1.0], [1.5, 1.0]],
            gap0: 0.0,
        };
        let f2 = FractureSpec::segment([1.25, 0.5], [1.25, 1.5]);
        let m = generate_rect_mesh(2.0, 2.0, 8, 8, &[f1, f2]).unwrap();
        let area = m.total_area();
        let m = m.prepared().unwrap();
        assert!((m.total_area() - area).abs() < 1e-12);
        for e in 0..m.n_elements() {
            assert!(m.element_area(e) > 0.0);
        }
        for p in &m.pairs {
            let [n, t] = [p.normal, p.tangent];
            assert!((n[0].hypot(n[1]) - 1.0).abs() < 1e-12);
            assert!((t[0].hypot(t[1]) - 1.0).abs() < 1e-12);
            assert!((n[0] * t[0] + n[1] * t[1]).abs() < 1e-12);
            assert_eq!(m.origin[p.node_plus], p.origin);
            assert_eq!(m.origin[p.node_minus], p.origin);
        }
        // kink node: averaged normal between (-s2, s2) and (0, 1)
        let kink = m.fracture_pairs(0).into_iter().find(|p| close(m.xy(p.node_plus), [1.0, 1.0])).unwrap();
        let expect = [-S2, S2 + 1.0];
        let l = expect[0].hypot(expect[1]);
        assert!(close(kink.normal, [expect[0] / l, expect[1] / l]));
    }

    #[test]
    fn split_twice_is_an_error() {
        let m = generate_rect_mesh(1.0, 1.0, 2, 2, &[]).unwrap().prepared().unwrap();
        assert!(matches!(split_fractures(m.clone()), Err(MeshError::AlreadySplit)));
        assert!(matches!(m.to_text(), Err(MeshError::SaveSplitMesh)));
    }

    #[test]
    fn generated_mesh_round_trips_through_text() {
        let f = FractureSpec::segment([1.0 / 3.0, 1.0 / 3.0], [5.0 / 3.0, 5.0 / 3.0]);
        let m = generate_rect_mesh(2.0, 2.0, 6, 6, &[f]).unwrap();
        let back = parse_mesh(&m.to_text().unwrap()).unwrap();
        assert_eq!(back, m);
    }
}
