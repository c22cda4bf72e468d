//! Planar polygons, quadrilaterals and ring condensers.
//!
//! All types are immutable after construction and validated on the way in,
//! so downstream code (meshing, solving) can rely on simple, positively
//! oriented boundaries.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::GeometryError;

/// A point in the plane. Serialized as `[x, y]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    /// `r·e^{iθ}` as a point.
    pub fn polar(r: f64, theta: f64) -> Self {
        Self::new(r * theta.cos(), r * theta.sin())
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn norm(&self) -> f64 {
        self.x.hypot(self.y)
    }

    /// Argument in `(-π, π]`.
    pub fn arg(&self) -> f64 {
        self.y.atan2(self.x)
    }

    pub fn conj(&self) -> Self {
        Self::new(self.x, -self.y)
    }

    pub fn dist(&self, other: Point) -> f64 {
        (*self - other).norm()
    }

    pub fn dot(&self, other: Point) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn cross(&self, other: Point) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn midpoint(&self, other: Point) -> Self {
        Self::new(0.5 * (self.x + other.x), 0.5 * (self.y + other.y))
    }
}

impl From<[f64; 2]> for Point {
    fn from([x, y]: [f64; 2]) -> Self {
        Self::new(x, y)
    }
}

impl From<Point> for [f64; 2] {
    fn from(p: Point) -> Self {
        [p.x, p.y]
    }
}

impl std::ops::Add for Point {
    type Output = Point;
    fn add(self, o: Point) -> Point {
        Point::new(self.x + o.x, self.y + o.y)
    }
}

impl std::ops::Sub for Point {
    type Output = Point;
    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }
}

impl std::ops::Mul<f64> for Point {
    type Output = Point;
    fn mul(self, k: f64) -> Point {
        Point::new(self.x * k, self.y * k)
    }
}

impl fmt::Display for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

/// Sign of the orientation of `(a, b, c)`: positive for a left turn.
///
/// Uses adaptive exact arithmetic, so the sign is correct for any finite input.
pub fn orient(a: Point, b: Point, c: Point) -> f64 {
    robust::orient2d(
        robust::Coord { x: a.x, y: a.y },
        robust::Coord { x: b.x, y: b.y },
        robust::Coord { x: c.x, y: c.y },
    )
}

fn on_segment(a: Point, b: Point, p: Point) -> bool {
    p.x >= a.x.min(b.x) && p.x <= a.x.max(b.x) && p.y >= a.y.min(b.y) && p.y <= a.y.max(b.y)
}

/// Closed-segment intersection test (touching counts).
pub fn segments_intersect(p1: Point, p2: Point, q1: Point, q2: Point) -> bool {
    let d1 = orient(q1, q2, p1);
    let d2 = orient(q1, q2, p2);
    let d3 = orient(p1, p2, q1);
    let d4 = orient(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    (d1 == 0.0 && on_segment(q1, q2, p1))
        || (d2 == 0.0 && on_segment(q1, q2, p2))
        || (d3 == 0.0 && on_segment(p1, p2, q1))
        || (d4 == 0.0 && on_segment(p1, p2, q2))
}

fn signed_area(vertices: &[Point]) -> f64 {
    let n = vertices.len();
    let mut twice = 0.0;
    for i in 0..n {
        twice += vertices[i].cross(vertices[(i + 1) % n]);
    }
    0.5 * twice
}

/// A simple, counterclockwise polygon with at least three vertices.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Polygon {
    vertices: Vec<Point>,
}

#[derive(Deserialize)]
struct PolygonRepr {
    vertices: Vec<Point>,
}

impl<'de> Deserialize<'de> for Polygon {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let repr = PolygonRepr::deserialize(d)?;
        validate_polygon(repr.vertices).map_err(serde::de::Error::custom)
    }
}

/// Validates a vertex loop, reversing it if it is clockwise.
pub fn validate_polygon(vertices: Vec<Point>) -> Result<Polygon, GeometryError> {
    Polygon::new(vertices).map(|(p, _)| p)
}

impl Polygon {
    /// Validates `vertices`; the flag reports whether the loop had to be reversed.
    pub fn new(mut vertices: Vec<Point>) -> Result<(Self, bool), GeometryError> {
        let n = vertices.len();
        if n < 3 {
            return Err(GeometryError::TooFewVertices(n));
        }
        if let Some(i) = vertices.iter().position(|p| !p.is_finite()) {
            return Err(GeometryError::NonFinite(i));
        }
        for i in 0..n {
            if vertices[i] == vertices[(i + 1) % n] {
                return Err(GeometryError::ZeroLengthEdge(i));
            }
        }
        check_simple(&vertices)?;
        let area = signed_area(&vertices);
        if area == 0.0 {
            return Err(GeometryError::ZeroArea);
        }
        let reversed = area < 0.0;
        if reversed {
            vertices.reverse();
        }
        Ok((Self { vertices }, reversed))
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// Edge `i` runs from vertex `i` to vertex `i + 1 (mod n)`.
    pub fn edge(&self, i: usize) -> (Point, Point) {
        let n = self.vertices.len();
        (self.vertices[i % n], self.vertices[(i + 1) % n])
    }

    pub fn area(&self) -> f64 {
        signed_area(&self.vertices)
    }

    pub fn diameter(&self) -> f64 {
        let mut d: f64 = 0.0;
        for (i, a) in self.vertices.iter().enumerate() {
            for b in &self.vertices[i + 1..] {
                d = d.max(a.dist(*b));
            }
        }
        d
    }

    /// Strict interior test by crossing number. Points on the boundary are
    /// reported as outside.
    pub fn contains(&self, p: Point) -> bool {
        let n = self.vertices.len();
        let mut inside = false;
        for i in 0..n {
            let (a, b) = self.edge(i);
            if orient(a, b, p) == 0.0 && on_segment(a, b, p) {
                return false;
            }
            if (a.y > p.y) != (b.y > p.y) {
                let x = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
                if p.x < x {
                    inside = !inside;
                }
            }
        }
        inside
    }
}

fn check_simple(v: &[Point]) -> Result<(), GeometryError> {
    let n = v.len();
    for i in 0..n {
        let (a, b) = (v[i], v[(i + 1) % n]);
        // adjacent edge folding back onto this one
        let c = v[(i + 2) % n];
        if orient(a, b, c) == 0.0 && (b - a).dot(c - b) < 0.0 {
            return Err(GeometryError::SelfIntersection(i, (i + 1) % n));
        }
        for j in i + 2..n {
            if i == 0 && j == n - 1 {
                continue;
            }
            if segments_intersect(a, b, v[j], v[(j + 1) % n]) {
                return Err(GeometryError::SelfIntersection(i, j));
            }
        }
    }
    Ok(())
}

pub fn polygon_area(p: &Polygon) -> f64 {
    p.area()
}

/// Applies `z ↦ scale·e^{i·rotation}·z + translation` to every vertex.
pub fn similarity(
    p: &Polygon,
    scale: f64,
    rotation: f64,
    translation: Point,
) -> Result<Polygon, GeometryError> {
    let vertices = similarity_points(p.vertices(), scale, rotation, translation)?;
    Ok(Polygon { vertices })
}

fn similarity_points(
    pts: &[Point],
    scale: f64,
    rotation: f64,
    translation: Point,
) -> Result<Vec<Point>, GeometryError> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(GeometryError::BadScale(scale));
    }
    let (s, c) = rotation.sin_cos();
    Ok(pts
        .iter()
        .map(|z| {
            Point::new(
                scale * (c * z.x - s * z.y) + translation.x,
                scale * (s * z.x + c * z.y) + translation.y,
            )
        })
        .collect())
}

/// A polygon with four marked boundary vertices `z1..z4` in
/// counterclockwise order.
///
/// Arc `j` (`γ1..γ4`) runs from `z_j` to `z_{j+1}` along the boundary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Quadrilateral {
    #[serde(flatten)]
    domain: Polygon,
    marked: [usize; 4],
}

#[derive(Deserialize)]
struct QuadRepr {
    vertices: Vec<Point>,
    marked: [usize; 4],
}

impl<'de> Deserialize<'de> for Quadrilateral {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let repr = QuadRepr::deserialize(d)?;
        Quadrilateral::new(repr.vertices, repr.marked).map_err(serde::de::Error::custom)
    }
}

impl Quadrilateral {
    /// Builds a quadrilateral from a vertex loop and four marked vertex indices.
    ///
    /// A clockwise loop is reversed; the marked indices are then remapped and
    /// put back into cyclic order starting from the first one.
    pub fn new(vertices: Vec<Point>, marked: [usize; 4]) -> Result<Self, GeometryError> {
        let n = vertices.len();
        if marked.iter().any(|&i| i >= n) {
            return Err(GeometryError::BadMarking(
                "marked index out of range".into(),
            ));
        }
        for i in 0..4 {
            for j in i + 1..4 {
                if marked[i] == marked[j] {
                    return Err(GeometryError::BadMarking(
                        "marked indices must be distinct".into(),
                    ));
                }
            }
        }
        let (domain, reversed) = Polygon::new(vertices)?;
        let marked = if reversed {
            let mapped = marked.map(|i| n - 1 - i);
            let first = mapped[0];
            let mut rest = [mapped[1], mapped[2], mapped[3]];
            rest.sort_by_key(|&i| (i + n - first) % n);
            [first, rest[0], rest[1], rest[2]]
        } else {
            marked
        };
        if !is_cyclic(&marked, n) {
            return Err(GeometryError::BadMarking(
                "marked vertices are not in counterclockwise order".into(),
            ));
        }
        Ok(Self { domain, marked })
    }

    pub fn domain(&self) -> &Polygon {
        &self.domain
    }

    pub fn marked(&self) -> [usize; 4] {
        self.marked
    }

    /// The marked points `z1..z4`.
    pub fn corners(&self) -> [Point; 4] {
        self.marked.map(|i| self.domain.vertices[i])
    }

    /// Arc index (0-based, `γ1 = 0`) that contains polygon edge `edge`.
    pub fn arc_of_edge(&self, edge: usize) -> usize {
        let n = self.domain.len();
        (0..4)
            .find(|&j| {
                let start = self.marked[j];
                let len = (self.marked[(j + 1) % 4] + n - start) % n;
                (edge + n - start) % n < len
            })
            .expect("arcs partition the boundary")
    }

    /// Polygon edge indices of arc `j` (0-based), in boundary order.
    pub fn arc_edges(&self, j: usize) -> Vec<usize> {
        let n = self.domain.len();
        let start = self.marked[j];
        let len = (self.marked[(j + 1) % 4] + n - start) % n;
        (0..len).map(|k| (start + k) % n).collect()
    }

    /// Vertex polyline of arc `j`, from `z_j` to `z_{j+1}` inclusive.
    pub fn arc_polyline(&self, j: usize) -> Vec<Point> {
        let n = self.domain.len();
        let mut pts: Vec<Point> = self
            .arc_edges(j)
            .iter()
            .map(|&e| self.domain.vertices[e])
            .collect();
        pts.push(self.domain.vertices[self.marked[(j + 1) % 4] % n]);
        pts
    }

    /// Same polygon, marking rotated by one: `(z2, z3, z4, z1)`.
    pub fn conjugate(&self) -> Self {
        let m = self.marked;
        Self {
            domain: self.domain.clone(),
            marked: [m[1], m[2], m[3], m[0]],
        }
    }

    pub fn transformed(
        &self,
        scale: f64,
        rotation: f64,
        translation: Point,
    ) -> Result<Self, GeometryError> {
        Ok(Self {
            domain: similarity(&self.domain, scale, rotation, translation)?,
            marked: self.marked,
        })
    }
}

fn is_cyclic(marked: &[usize; 4], n: usize) -> bool {
    let offsets = marked.map(|i| (i + n - marked[0]) % n);
    offsets[1] < offsets[2] && offsets[2] < offsets[3]
}

/// The quadrilateral `(z1, z2, z3, z4)` bounded by the four straight segments.
///
/// Unlike [`Quadrilateral::new`], a clockwise vertex order is rejected: the
/// point order carries the marking.
pub fn quad_from_points(z: [Point; 4]) -> Result<Quadrilateral, GeometryError> {
    let (domain, reversed) = Polygon::new(z.to_vec())?;
    if reversed {
        return Err(GeometryError::Orientation);
    }
    Ok(Quadrilateral {
        domain,
        marked: [0, 1, 2, 3],
    })
}

/// `QM(z1, z2, z3, z4)` notation helper: conjugate quadrilateral of `q`.
pub fn conjugate_quad(q: &Quadrilateral) -> Quadrilateral {
    q.conjugate()
}

/// A doubly connected condenser: `inner` is the plate held at potential 1,
/// `outer` the one held at 0.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RingCondenser {
    outer: Polygon,
    inner: Polygon,
}

#[derive(Deserialize)]
struct RingRepr {
    outer: Polygon,
    inner: Polygon,
}

impl<'de> Deserialize<'de> for RingCondenser {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let repr = RingRepr::deserialize(d)?;
        RingCondenser::new(repr.outer, repr.inner).map_err(serde::de::Error::custom)
    }
}

impl RingCondenser {
    pub fn new(outer: Polygon, inner: Polygon) -> Result<Self, GeometryError> {
        if let Some(i) = inner.vertices().iter().position(|&p| !outer.contains(p)) {
            return Err(GeometryError::InnerNotInside(i));
        }
        for i in 0..inner.len() {
            let (a, b) = inner.edge(i);
            for j in 0..outer.len() {
                let (c, d) = outer.edge(j);
                if segments_intersect(a, b, c, d) {
                    return Err(GeometryError::InnerNotInside(i));
                }
            }
        }
        Ok(Self { outer, inner })
    }

    pub fn outer(&self) -> &Polygon {
        &self.outer
    }

    pub fn inner(&self) -> &Polygon {
        &self.inner
    }

    /// Area of the region between the plates.
    pub fn area(&self) -> f64 {
        self.outer.area() - self.inner.area()
    }

    pub fn transformed(
        &self,
        scale: f64,
        rotation: f64,
        translation: Point,
    ) -> Result<Self, GeometryError> {
        Ok(Self {
            outer: similarity(&self.outer, scale, rotation, translation)?,
            inner: similarity(&self.inner, scale, rotation, translation)?,
        })
    }
}

/// Regular `n`-gon with the given circumradius, first vertex on the positive
/// real axis direction rotated by `phase`.
pub fn regular_polygon(
    n: usize,
    center: Point,
    radius: f64,
    phase: f64,
) -> Result<Polygon, GeometryError> {
    let vertices = (0..n)
        .map(|k| center + Point::polar(radius, phase + 2.0 * PI * k as f64 / n as f64))
        .collect();
    validate_polygon(vertices)
}

/// `t` such that `(t+ir, is, −is, t−ir)` has the same area as
/// `(1+2r·e^{iα}, 2s·e^{iβ}, 0, 1)`.
///
/// The second quadrilateral is a trapezoid with vertical parallel sides `2s`
/// and `2r` at distance `t`, so its area is `t·(r+s)`.
pub fn equal_area_t(r: f64, s: f64, alpha: f64, beta: f64) -> Result<f64, GeometryError> {
    if !(r > 0.0 && s > 0.0) {
        return Err(GeometryError::BadParameter(format!(
            "r and s must be positive, got r={r}, s={s}"
        )));
    }
    let q1 = quad_from_points(equal_area_q1(r, s, alpha, beta))?;
    Ok(q1.domain().area() / (r + s))
}

/// Vertices of `Q1 = (1+2r·e^{iα}, 2s·e^{iβ}, 0, 1)`.
pub fn equal_area_q1(r: f64, s: f64, alpha: f64, beta: f64) -> [Point; 4] {
    [
        Point::new(1.0, 0.0) + Point::polar(2.0 * r, alpha),
        Point::polar(2.0 * s, beta),
        Point::new(0.0, 0.0),
        Point::new(1.0, 0.0),
    ]
}

/// Vertices of `Q2 = (t+ir, is, −is, t−ir)`.
pub fn equal_area_q2(r: f64, s: f64, t: f64) -> [Point; 4] {
    [
        Point::new(t, r),
        Point::new(0.0, s),
        Point::new(0.0, -s),
        Point::new(t, -r),
    ]
}
