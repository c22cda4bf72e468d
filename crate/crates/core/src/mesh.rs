//! Conforming triangulations of quadrilaterals and ring condensers, with
//! boundary-arc tags and adaptive newest-vertex bisection.
//!
//! Triangles are stored counterclockwise as `[a, b, c]` with the refinement
//! edge `(a, b)`; `c` is the newest vertex. Boundary edges are stored oriented
//! with the domain on their left.

use std::collections::{HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use spade::{
    AngleLimit, ConstrainedDelaunayTriangulation, Point2, RefinementParameters, Triangulation,
};

use crate::error::MeshError;
use crate::geometry::{Point, Quadrilateral, RingCondenser};

/// Minimum angle targeted by the initial Delaunay refinement, in degrees.
pub const MIN_ANGLE_DEG: f64 = 25.0;

/// Which piece of the domain boundary an edge belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BoundaryTag {
    Gamma1,
    Gamma2,
    Gamma3,
    Gamma4,
    /// Inner plate of a ring condenser.
    PlateE,
    /// Outer plate of a ring condenser.
    PlateF,
}

impl BoundaryTag {
    pub const ARCS: [BoundaryTag; 4] = [Self::Gamma1, Self::Gamma2, Self::Gamma3, Self::Gamma4];
}

impl fmt::Display for BoundaryTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Anything [`triangulate`] accepts.
#[derive(Debug, Clone, PartialEq)]
pub enum Domain {
    Quad(Quadrilateral),
    Ring(RingCondenser),
}

impl From<Quadrilateral> for Domain {
    fn from(q: Quadrilateral) -> Self {
        Self::Quad(q)
    }
}

impl From<RingCondenser> for Domain {
    fn from(r: RingCondenser) -> Self {
        Self::Ring(r)
    }
}

impl Domain {
    pub fn area(&self) -> f64 {
        match self {
            Self::Quad(q) => q.domain().area(),
            Self::Ring(r) => r.area(),
        }
    }

    /// Boundary loops with one tag per polygon edge.
    fn tagged_loops(&self) -> Vec<(Vec<Point>, Vec<BoundaryTag>)> {
        match self {
            Self::Quad(q) => {
                let p = q.domain();
                let tags = (0..p.len())
                    .map(|e| BoundaryTag::ARCS[q.arc_of_edge(e)])
                    .collect();
                vec![(p.vertices().to_vec(), tags)]
            }
            Self::Ring(r) => vec![
                (
                    r.outer().vertices().to_vec(),
                    vec![BoundaryTag::PlateF; r.outer().len()],
                ),
                // inner loop traversed clockwise keeps the domain on the left
                (
                    r.inner().vertices().iter().rev().copied().collect(),
                    vec![BoundaryTag::PlateE; r.inner().len()],
                ),
            ],
        }
    }
}

/// A conforming triangle mesh with tagged boundary edges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mesh {
    nodes: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    boundary: Vec<(usize, usize, BoundaryTag)>,
}

fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

fn tri_area(p: [Point; 3]) -> f64 {
    0.5 * (p[1] - p[0]).cross(p[2] - p[0])
}

/// Rotates a CCW triangle so that its longest edge comes first.
fn longest_edge_first(t: [usize; 3], nodes: &[Point]) -> [usize; 3] {
    let len = |i: usize, j: usize| nodes[t[i]].dist(nodes[t[j]]);
    let (l0, l1, l2) = (len(0, 1), len(1, 2), len(2, 0));
    if l0 >= l1 && l0 >= l2 {
        t
    } else if l1 >= l2 {
        [t[1], t[2], t[0]]
    } else {
        [t[2], t[0], t[1]]
    }
}

fn point_segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let ab = b - a;
    let len2 = ab.dot(ab);
    let t = ((p - a).dot(ab) / len2).clamp(0.0, 1.0);
    p.dist(a + ab * t)
}

impl Mesh {
    /// Assembles a mesh from raw parts, checking the structural invariants.
    pub fn from_parts(
        nodes: Vec<Point>,
        triangles: Vec<[usize; 3]>,
        boundary: Vec<(usize, usize, BoundaryTag)>,
    ) -> Result<Self, MeshError> {
        let mesh = Self {
            nodes,
            triangles,
            boundary,
        };
        mesh.check().map_err(MeshError::Triangulation)?;
        Ok(mesh)
    }

    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn boundary(&self) -> &[(usize, usize, BoundaryTag)] {
        &self.boundary
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn triangle_count(&self) -> usize {
        self.triangles.len()
    }

    pub fn triangle_points(&self, t: usize) -> [Point; 3] {
        self.triangles[t].map(|i| self.nodes[i])
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        tri_area(self.triangle_points(t))
    }

    pub fn total_area(&self) -> f64 {
        (0..self.triangles.len())
            .map(|t| self.triangle_area(t))
            .sum()
    }

    /// Tags present on the boundary.
    pub fn tags(&self) -> HashSet<BoundaryTag> {
        self.boundary.iter().map(|&(_, _, t)| t).collect()
    }

    /// Number of distinct undirected edges.
    pub fn edge_count(&self) -> usize {
        let mut edges = HashSet::with_capacity(self.triangles.len() * 2);
        for t in &self.triangles {
            for k in 0..3 {
                edges.insert(edge_key(t[k], t[(k + 1) % 3]));
            }
        }
        edges.len()
    }

    /// `nodes − edges + triangles`.
    pub fn euler_characteristic(&self) -> i64 {
        self.nodes.len() as i64 - self.edge_count() as i64 + self.triangles.len() as i64
    }

    /// Smallest interior angle over all triangles, in radians.
    pub fn min_angle(&self) -> f64 {
        (0..self.triangles.len())
            .map(|t| {
                let p = self.triangle_points(t);
                (0..3)
                    .map(|k| {
                        let (a, b, c) = (p[k], p[(k + 1) % 3], p[(k + 2) % 3]);
                        let (u, v) = (b - a, c - a);
                        u.cross(v).abs().atan2(u.dot(v))
                    })
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// For every undirected edge, the triangles containing it (one or two).
    pub fn edge_triangles(&self) -> HashMap<(usize, usize), Vec<usize>> {
        let mut map: HashMap<(usize, usize), Vec<usize>> =
            HashMap::with_capacity(self.triangles.len() * 2);
        for (i, t) in self.triangles.iter().enumerate() {
            for k in 0..3 {
                map.entry(edge_key(t[k], t[(k + 1) % 3]))
                    .or_default()
                    .push(i);
            }
        }
        map
    }

    /// Checks orientation, conformity and boundary tagging.
    pub fn check(&self) -> Result<(), String> {
        if let Some(i) = self.nodes.iter().position(|p| !p.is_finite()) {
            return Err(format!("node {i} is not finite"));
        }
        for (i, t) in self.triangles.iter().enumerate() {
            if t.iter().any(|&v| v >= self.nodes.len()) {
                return Err(format!("triangle {i} references a missing node"));
            }
            if self.triangle_area(i) <= 0.0 {
                return Err(format!("triangle {i} is not positively oriented"));
            }
        }
        let tagged: HashMap<(usize, usize), BoundaryTag> = self
            .boundary
            .iter()
            .map(|&(a, b, tag)| ((a, b), tag))
            .collect();
        if tagged.len() != self.boundary.len() {
            return Err("duplicate boundary edge".into());
        }
        let mut directed: HashSet<(usize, usize)> = HashSet::new();
        for t in &self.triangles {
            for k in 0..3 {
                if !directed.insert((t[k], t[(k + 1) % 3])) {
                    return Err(format!(
                        "edge {:?} used twice with the same orientation",
                        (t[k], t[(k + 1) % 3])
                    ));
                }
            }
        }
        let mut boundary_count = 0;
        for &(a, b) in &directed {
            if !directed.contains(&(b, a)) {
                boundary_count += 1;
                if !tagged.contains_key(&(a, b)) {
                    return Err(format!("boundary edge ({a}, {b}) carries no tag"));
                }
            }
        }
        if boundary_count != self.boundary.len() {
            return Err("tagged edges that are not on the boundary".into());
        }
        Ok(())
    }

    /// Bisects the marked triangles (plus closure) by newest-vertex bisection.
    pub fn refine_marked(&self, marked: &[usize]) -> Result<Refinement, MeshError> {
        if let Some(&bad) = marked.iter().find(|&&t| t >= self.triangles.len()) {
            return Err(MeshError::BadMarking(bad));
        }
        let mut nodes = self.nodes.clone();
        let mut tris = self.triangles.clone();
        let mut alive = vec![true; tris.len()];
        let mut origin: Vec<usize> = (0..tris.len()).collect();
        let mut edge_tris = self.edge_triangles();
        let mut midpoints: HashMap<(usize, usize), usize> = HashMap::new();
        let mut parents: Vec<[usize; 2]> = Vec::new();

        let mut stack: Vec<usize> = marked.iter().rev().copied().collect();
        let limit = 64 * (self.triangles.len() + marked.len()) + 1024;
        let mut bisections = 0usize;

        while let Some(t) = stack.pop() {
            if !alive[t] {
                continue;
            }
            bisections += 1;
            if bisections > limit {
                return Err(MeshError::RefinementStalled(bisections));
            }
            let [a, b, c] = tris[t];
            let key = edge_key(a, b);
            let m = *midpoints.entry(key).or_insert_with(|| {
                nodes.push(nodes[a].midpoint(nodes[b]));
                parents.push([a, b]);
                nodes.len() - 1
            });
            alive[t] = false;
            for (u, v) in [(a, b), (b, c), (c, a)] {
                if let Some(list) = edge_tris.get_mut(&edge_key(u, v)) {
                    list.retain(|&x| x != t);
                }
            }
            for child in [[c, a, m], [b, c, m]] {
                let id = tris.len();
                tris.push(child);
                alive.push(true);
                origin.push(origin[t]);
                for k in 0..3 {
                    edge_tris
                        .entry(edge_key(child[k], child[(k + 1) % 3]))
                        .or_default()
                        .push(id);
                }
                if midpoints.contains_key(&edge_key(child[0], child[1])) {
                    stack.push(id);
                }
            }
            if let Some(list) = edge_tris.get(&key) {
                stack.extend(list.iter().copied());
            }
        }

        let mut boundary = Vec::with_capacity(self.boundary.len());
        for &(a, b, tag) in &self.boundary {
            let mut work = vec![(a, b)];
            while let Some((u, v)) = work.pop() {
                match midpoints.get(&edge_key(u, v)) {
                    // push second half first so output stays in boundary order
                    Some(&m) => work.extend([(m, v), (u, m)]),
                    None => boundary.push((u, v, tag)),
                }
            }
        }

        let mut triangles = Vec::with_capacity(tris.len());
        let mut triangle_parent = Vec::with_capacity(tris.len());
        for (i, t) in tris.into_iter().enumerate() {
            if alive[i] {
                triangles.push(t);
                triangle_parent.push(origin[i]);
            }
        }
        Ok(Refinement {
            mesh: Mesh {
                nodes,
                triangles,
                boundary,
            },
            new_node_parents: parents,
            triangle_parent,
        })
    }
}

/// Outcome of a bisection pass.
#[derive(Debug, Clone)]
pub struct Refinement {
    pub mesh: Mesh,
    /// Edge endpoints of each new node, in node order (new nodes are appended
    /// after the old ones, whose indices are unchanged).
    pub new_node_parents: Vec<[usize; 2]>,
    /// Index in the coarse mesh of the triangle each fine triangle came from.
    pub triangle_parent: Vec<usize>,
}

impl Refinement {
    /// Interpolates nodal values from the coarse mesh onto the refined one.
    pub fn prolongate(&self, coarse: &[f64]) -> Vec<f64> {
        let mut out = coarse.to_vec();
        out.reserve(self.new_node_parents.len());
        for &[a, b] in &self.new_node_parents {
            let v = 0.5 * (out[a] + out[b]);
            out.push(v);
        }
        out
    }
}

/// Per-triangle error indicators and the set selected for refinement.
#[derive(Debug, Clone, PartialEq)]
pub struct RefinementMarking {
    pub indicators: Vec<f64>,
    pub marked: Vec<usize>,
}

impl RefinementMarking {
    /// Dörfler (bulk) marking: the smallest set of triangles, taken in order
    /// of decreasing indicator, whose squared indicators sum to at least
    /// `theta` times the total.
    pub fn dorfler(indicators: Vec<f64>, theta: f64) -> Self {
        let total: f64 = indicators.iter().map(|e| e * e).sum();
        let mut marked = Vec::new();
        if total > 0.0 {
            let mut order: Vec<usize> = (0..indicators.len()).collect();
            order.sort_by(|&i, &j| indicators[j].total_cmp(&indicators[i]).then(i.cmp(&j)));
            let mut mass = 0.0;
            for i in order {
                if mass >= theta * total {
                    break;
                }
                mass += indicators[i] * indicators[i];
                marked.push(i);
            }
        }
        Self { indicators, marked }
    }

    pub fn all(n: usize) -> Self {
        Self {
            indicators: vec![1.0; n],
            marked: (0..n).collect(),
        }
    }

    pub fn none(n: usize) -> Self {
        Self {
            indicators: vec![0.0; n],
            marked: Vec::new(),
        }
    }
}

pub fn refine(m: &Mesh, marking: &RefinementMarking) -> Result<Mesh, MeshError> {
    Ok(m.refine_marked(&marking.marked)?.mesh)
}

/// Constrained Delaunay triangulation of `domain` with no triangle larger
/// than `max_area` and a minimum angle of [`MIN_ANGLE_DEG`] away from small
/// input angles. Every polygon vertex (in particular each marked point) is a
/// mesh node.
pub fn triangulate(domain: &Domain, max_area: f64) -> Result<Mesh, MeshError> {
    if !(max_area > 0.0 && max_area.is_finite()) {
        return Err(MeshError::BadMaxArea(max_area));
    }
    let loops = domain.tagged_loops();
    let mut cdt: ConstrainedDelaunayTriangulation<Point2<f64>> =
        ConstrainedDelaunayTriangulation::new();
    let mut segments: Vec<(Point, Point, BoundaryTag)> = Vec::new();
    for (pts, tags) in &loops {
        let handles = pts
            .iter()
            .map(|p| cdt.insert(Point2::new(p.x, p.y)))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| MeshError::Triangulation(format!("{e:?}")))?;
        let n = pts.len();
        for i in 0..n {
            let (a, b) = (handles[i], handles[(i + 1) % n]);
            if !cdt.can_add_constraint(a, b) {
                return Err(MeshError::Triangulation(format!(
                    "boundary edge {i} crosses another boundary edge"
                )));
            }
            cdt.add_constraint(a, b);
            segments.push((pts[i], pts[(i + 1) % n], tags[i]));
        }
    }

    let area = domain.area();
    let budget = ((40.0 * area / max_area) as usize).clamp(10_000, 20_000_000);
    let params = RefinementParameters::<f64>::new()
        .with_angle_limit(AngleLimit::from_deg(MIN_ANGLE_DEG))
        .with_max_allowed_area(max_area)
        .exclude_outer_faces(true)
        .with_max_additional_vertices(budget);
    let result = cdt.refine(params);
    if !result.refinement_complete {
        return Err(MeshError::Triangulation(
            "Delaunay refinement ran out of vertices (degenerate geometry?)".into(),
        ));
    }
    let excluded: HashSet<_> = result.excluded_faces.into_iter().collect();

    let mut index: HashMap<usize, usize> = HashMap::new();
    let mut nodes: Vec<Point> = Vec::new();
    let mut triangles: Vec<[usize; 3]> = Vec::new();
    for face in cdt.inner_faces() {
        if excluded.contains(&face.fix()) {
            continue;
        }
        let t = face.vertices().map(|v| {
            *index.entry(v.fix().index()).or_insert_with(|| {
                let p = v.position();
                nodes.push(Point::new(p.x, p.y));
                nodes.len() - 1
            })
        });
        let t = if tri_area(t.map(|i| nodes[i])) < 0.0 {
            [t[0], t[2], t[1]]
        } else {
            t
        };
        triangles.push(t);
    }
    let triangles: Vec<[usize; 3]> = triangles
        .into_iter()
        .map(|t| longest_edge_first(t, &nodes))
        .collect();

    let total: f64 = triangles
        .iter()
        .map(|t| tri_area(t.map(|i| nodes[i])))
        .sum();
    if (total - area).abs() > 1e-9 * area {
        return Err(MeshError::Triangulation(format!(
            "triangles cover area {total}, domain area is {area}"
        )));
    }

    // boundary edges: directed edges without a twin, tagged by the input
    // segment that carries them
    let scale = segments.iter().map(|s| s.0.dist(s.1)).fold(0.0, f64::max);
    let eps = 1e-10 * scale;
    let mut directed: HashSet<(usize, usize)> = HashSet::new();
    for t in &triangles {
        for k in 0..3 {
            directed.insert((t[k], t[(k + 1) % 3]));
        }
    }
    let mut boundary = Vec::new();
    for t in &triangles {
        for k in 0..3 {
            let (a, b) = (t[k], t[(k + 1) % 3]);
            if directed.contains(&(b, a)) {
                continue;
            }
            let (p, q) = (nodes[a], nodes[b]);
            let mid = p.midpoint(q);
            let tag = segments
                .iter()
                .find(|(s0, s1, _)| {
                    point_segment_distance(p, *s0, *s1) <= eps
                        && point_segment_distance(q, *s0, *s1) <= eps
                        && point_segment_distance(mid, *s0, *s1) <= eps
                })
                .map(|s| s.2)
                .ok_or_else(|| {
                    MeshError::Triangulation(format!("boundary edge {p}–{q} lies on no input edge"))
                })?;
            boundary.push((a, b, tag));
        }
    }
    boundary.sort_by_key(|&(a, b, tag)| (tag, a, b));

    let mesh = Mesh {
        nodes,
        triangles,
        boundary,
    };
    mesh.check().map_err(MeshError::Triangulation)?;
    Ok(mesh)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{quad_from_points, regular_polygon, validate_polygon, RingCondenser};

    fn rect(h: f64) -> Quadrilateral {
        quad_from_points([
            Point::new(1.0, h),
            Point::new(0.0, h),
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
        ])
        .unwrap()
    }

    fn square_ring(outer: f64, inner: f64) -> RingCondenser {
        let sq = |s: f64| {
            validate_polygon(vec![
                Point::new(-s / 2.0, -s / 2.0),
                Point::new(s / 2.0, -s / 2.0),
                Point::new(s / 2.0, s / 2.0),
                Point::new(-s / 2.0, s / 2.0),
            ])
            .unwrap()
        };
        RingCondenser::new(sq(outer), sq(inner)).unwrap()
    }

    #[test]
    fn unit_square_area_conserved() {
        let m = triangulate(&rect(1.0).into(), 0.5).unwrap();
        assert!(m.triangle_count() >= 2);
        assert!((m.total_area() - 1.0).abs() < 1e-12);
        assert_eq!(m.euler_characteristic(), 1);
    }

    #[test]
    fn square_ring_area_conserved() {
        let m = triangulate(&square_ring(4.0, 1.0).into(), 0.5).unwrap();
        assert!((m.total_area() - 15.0).abs() < 1e-12);
        assert_eq!(m.euler_characteristic(), 0);
        assert_eq!(
            m.tags(),
            [BoundaryTag::PlateE, BoundaryTag::PlateF]
                .into_iter()
                .collect()
        );
        // no triangle inside the hole
        for t in 0..m.triangle_count() {
            let p = m.triangle_points(t);
            let c = Point::new(
                (p[0].x + p[1].x + p[2].x) / 3.0,
                (p[0].y + p[1].y + p[2].y) / 3.0,
            );
            assert!(c.x.abs() > 0.5 || c.y.abs() > 0.5);
        }
    }

    #[test]
    fn max_area_and_min_angle_respected() {
        let m = triangulate(&rect(2.0).into(), 0.01).unwrap();
        for t in 0..m.triangle_count() {
            assert!(m.triangle_area(t) <= 0.01 * (1.0 + 1e-12));
        }
        assert!(m.min_angle() >= MIN_ANGLE_DEG.to_radians() - 1e-9);
    }

    #[test]
    fn gamma_edges_stay_on_their_arcs() {
        let q = quad_from_points([
            Point::new(1.0, 3.0),
            Point::new(0.0, 2.0),
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
        ])
        .unwrap();
        let m = triangulate(&q.clone().into(), 0.01).unwrap();
        let z = q.corners();
        for &(a, b, tag) in m.boundary() {
            let j = BoundaryTag::ARCS.iter().position(|&t| t == tag).unwrap();
            let (s0, s1) = (z[j], z[(j + 1) % 4]);
            for p in [m.nodes()[a], m.nodes()[b]] {
                assert!(point_segment_distance(p, s0, s1) <= 1e-12);
            }
        }
        // marked points are nodes
        for p in z {
            assert!(m.nodes().contains(&p));
        }
    }

    #[test]
    fn arc_polyline_reconstructed() {
        // extra unmarked vertices on γ1 and γ3
        let q = Quadrilateral::new(
            vec![
                Point::new(0.0, 0.0),
                Point::new(1.0, 0.0),
                Point::new(2.0, 0.0),
                Point::new(2.0, 1.0),
                Point::new(1.0, 1.5),
                Point::new(0.0, 1.0),
            ],
            [2, 3, 5, 0],
        )
        .unwrap();
        let m = triangulate(&q.clone().into(), 0.05).unwrap();
        for (j, tag) in BoundaryTag::ARCS.iter().enumerate() {
            let poly = q.arc_polyline(j);
            let on_arc: HashSet<usize> = m
                .boundary()
                .iter()
                .filter(|e| e.2 == *tag)
                .flat_map(|e| [e.0, e.1])
                .collect();
            for p in &poly {
                assert!(
                    on_arc.iter().any(|&i| m.nodes()[i] == *p),
                    "arc {j} misses {p}"
                );
            }
            let length: f64 = m
                .boundary()
                .iter()
                .filter(|e| e.2 == *tag)
                .map(|e| m.nodes()[e.0].dist(m.nodes()[e.1]))
                .sum();
            let expected: f64 = poly.windows(2).map(|w| w[0].dist(w[1])).sum();
            assert!((length - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_max_area_rejected() {
        assert!(matches!(
            triangulate(&rect(1.0).into(), 0.0),
            Err(MeshError::BadMaxArea(_))
        ));
    }

    #[test]
    fn refine_all_doubles() {
        let m = triangulate(&rect(1.0).into(), 0.05).unwrap();
        let r = m
            .refine_marked(&(0..m.triangle_count()).collect::<Vec<_>>())
            .unwrap();
        assert!(r.mesh.triangle_count() >= 2 * m.triangle_count());
        assert!((r.mesh.total_area() - 1.0).abs() < 1e-12);
        r.mesh.check().unwrap();
        assert_eq!(r.mesh.euler_characteristic(), 1);
    }

    #[test]
    fn refine_none_is_identity() {
        let m = triangulate(&rect(1.0).into(), 0.05).unwrap();
        let marking = RefinementMarking::dorfler(vec![0.0; m.triangle_count()], 0.5);
        assert!(marking.marked.is_empty());
        assert_eq!(refine(&m, &marking).unwrap(), m);
    }

    #[test]
    fn refinement_is_nested() {
        let ring = RingCondenser::new(
            regular_polygon(12, Point::new(0.0, 0.0), 2.0, 0.0).unwrap(),
            regular_polygon(6, Point::new(0.1, 0.0), 0.7, 0.3).unwrap(),
        )
        .unwrap();
        let m = triangulate(&ring.into(), 0.1).unwrap();
        let marked: Vec<usize> = (0..m.triangle_count()).step_by(3).collect();
        let r = m.refine_marked(&marked).unwrap();
        r.mesh.check().unwrap();
        assert_eq!(r.mesh.euler_characteristic(), 0);
        let mut child_area = vec![0.0; m.triangle_count()];
        for (t, &p) in r.triangle_parent.iter().enumerate() {
            child_area[p] += r.mesh.triangle_area(t);
        }
        for (t, area) in child_area.iter().enumerate() {
            assert!((area - m.triangle_area(t)).abs() < 1e-12);
        }
    }

    #[test]
    fn repeated_local_refinement_keeps_angles() {
        let q = quad_from_points([
            Point::new(1.0, 3.0),
            Point::new(0.0, 2.0),
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
        ])
        .unwrap();
        let mut m = triangulate(&q.into(), 0.05).unwrap();
        let initial = m.min_angle();
        let corner = Point::new(0.0, 2.0);
        for _ in 0..12 {
            // refine everything touching the reentrant corner
            let marked: Vec<usize> = (0..m.triangle_count())
                .filter(|&t| m.triangle_points(t).contains(&corner))
                .collect();
            m = m.refine_marked(&marked).unwrap().mesh;
            m.check().unwrap();
            assert!(m.min_angle() >= 0.5 * initial);
        }
        assert!((m.total_area() - 2.5).abs() < 1e-12);
        assert_eq!(m.euler_characteristic(), 1);
    }

    #[test]
    fn dorfler_marks_minimal_bulk() {
        let m = RefinementMarking::dorfler(vec![1.0, 3.0, 2.0, 0.5], 0.5);
        // squares 1, 9, 4, 0.25; total 14.25, half is 7.125
        assert_eq!(m.marked, vec![1]);
        let m = RefinementMarking::dorfler(vec![1.0, 1.0, 1.0, 1.0], 0.5);
        assert_eq!(m.marked, vec![0, 1]);
        let m = RefinementMarking::dorfler(vec![0.0, 1e-300, 0.0], 0.5);
        assert!(!m.marked.is_empty() || m.indicators.iter().all(|e| e * e == 0.0));
    }

    #[test]
    fn prolongation_of_linear_field_is_exact() {
        let m = triangulate(&rect(1.0).into(), 0.1).unwrap();
        let f = |p: &Point| 2.0 * p.x - 3.0 * p.y + 1.0;
        let coarse: Vec<f64> = m.nodes().iter().map(f).collect();
        let r = m.refine_marked(&[0, 1, 2]).unwrap();
        let fine = r.prolongate(&coarse);
        for (p, v) in r.mesh.nodes().iter().zip(&fine) {
            assert!((f(p) - v).abs() < 1e-14);
        }
    }

    #[test]
    fn bad_marking_rejected() {
        let m = triangulate(&rect(1.0).into(), 0.5).unwrap();
        assert!(matches!(
            m.refine_marked(&[10_000]),
            Err(MeshError::BadMarking(10_000))
        ));
    }

    #[test]
    fn mesh_json_shape() {
        let m = triangulate(&rect(1.0).into(), 0.5).unwrap();
        let v = serde_json::to_value(&m).unwrap();
        assert!(v["nodes"][0].as_array().unwrap().len() == 2);
        assert!(v["triangles"][0].as_array().unwrap().len() == 3);
        let b = &v["boundary"][0];
        assert!(b[2].as_str().unwrap().starts_with("Gamma"));
        let back: Mesh = serde_json::from_value(v).unwrap();
        assert_eq!(back, m);
    }
}
