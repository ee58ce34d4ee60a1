//! 2D polygon primitives shared by the whole pipeline.
//!
//! Coordinates are in pixel units of the source raster (`x` = column,
//! `y` = row). Exterior rings are stored with positive shoelace area in raw
//! `(x, y)` values and holes with negative area.

use std::f64::consts::PI;

use geo::{BooleanOps, Buffer};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Relative tolerance used by orientation predicates.
const ORIENT_EPS: f64 = 1e-12;
/// Absolute tolerance (pixels) for point-on-boundary decisions.
pub const BOUNDARY_EPS: f64 = 1e-7;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("segment endpoints coincide")]
    ZeroLengthSegment,
    #[error("line string needs at least {0} distinct points")]
    TooFewPoints(usize),
    #[error("degenerate ring (zero area)")]
    DegenerateRing,
    #[error("polygon has non-positive area")]
    ZeroArea,
    #[error("all points are collinear")]
    Collinear,
    #[error("non-finite coordinate")]
    NonFinite,
}

pub type Result<T> = std::result::Result<T, GeometryError>;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl From<[f64; 2]> for Point {
    fn from(v: [f64; 2]) -> Self {
        Point::new(v[0], v[1])
    }
}

impl From<Point> for [f64; 2] {
    fn from(p: Point) -> Self {
        [p.x, p.y]
    }
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dist(self, o: Point) -> f64 {
        (self.x - o.x).hypot(self.y - o.y)
    }

    pub fn dot(self, o: Point) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn cross(self, o: Point) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn scale(self, f: f64) -> Point {
        Point::new(self.x * f, self.y * f)
    }

    pub fn lerp(self, o: Point, t: f64) -> Point {
        Point::new(self.x + (o.x - self.x) * t, self.y + (o.y - self.y) * t)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    /// Rotation by `angle_deg` (counter-clockwise in raw coordinates) about `center`.
    pub fn rotate_about(self, center: Point, angle_deg: f64) -> Point {
        let (s, c) = sin_cos_deg(angle_deg);
        let d = self - center;
        Point::new(center.x + c * d.x - s * d.y, center.y + s * d.x + c * d.y)
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

/// `sin`/`cos` of an angle in degrees, exact at multiples of 90°.
pub fn sin_cos_deg(angle_deg: f64) -> (f64, f64) {
    let a = angle_deg.rem_euclid(360.0);
    if a == 0.0 {
        (0.0, 1.0)
    } else if a == 90.0 {
        (1.0, 0.0)
    } else if a == 180.0 {
        (0.0, -1.0)
    } else if a == 270.0 {
        (-1.0, 0.0)
    } else {
        a.to_radians().sin_cos()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub a: Point,
    pub b: Point,
}

impl Segment {
    pub fn new(a: Point, b: Point) -> Result<Self> {
        if !a.is_finite() || !b.is_finite() {
            return Err(GeometryError::NonFinite);
        }
        if a == b {
            return Err(GeometryError::ZeroLengthSegment);
        }
        Ok(Segment { a, b })
    }

    pub fn length(&self) -> f64 {
        self.a.dist(self.b)
    }

    pub fn midpoint(&self) -> Point {
        self.a.lerp(self.b, 0.5)
    }

    pub fn direction(&self) -> Point {
        self.b - self.a
    }

    pub fn reversed(&self) -> Segment {
        Segment {
            a: self.b,
            b: self.a,
        }
    }

    /// Undirected equality within `tol`.
    pub fn same_as(&self, o: &Segment, tol: f64) -> bool {
        (self.a.dist(o.a) <= tol && self.b.dist(o.b) <= tol)
            || (self.a.dist(o.b) <= tol && self.b.dist(o.a) <= tol)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Point>", into = "Vec<Point>")]
pub struct LineString {
    points: Vec<Point>,
}

impl TryFrom<Vec<Point>> for LineString {
    type Error = GeometryError;
    fn try_from(v: Vec<Point>) -> Result<Self> {
        LineString::new(v)
    }
}

impl From<LineString> for Vec<Point> {
    fn from(l: LineString) -> Self {
        l.points
    }
}

impl LineString {
    /// Builds a line string, dropping consecutive duplicates.
    pub fn new(points: Vec<Point>) -> Result<Self> {
        if points.iter().any(|p| !p.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        let mut pts: Vec<Point> = Vec::with_capacity(points.len());
        for p in points {
            if pts.last() != Some(&p) {
                pts.push(p);
            }
        }
        if pts.len() < 2 {
            return Err(GeometryError::TooFewPoints(2));
        }
        Ok(LineString { points: pts })
    }

    /// Builds a closed ring; the closing point is appended when missing.
    pub fn new_ring(points: Vec<Point>) -> Result<Self> {
        let mut ls = LineString::new(points)?;
        if !ls.is_closed() {
            let first = ls.points[0];
            ls.points.push(first);
        }
        if ls.points.len() < 4 {
            return Err(GeometryError::TooFewPoints(3));
        }
        Ok(ls)
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn is_closed(&self) -> bool {
        self.points.first() == self.points.last()
    }

    pub fn segments(&self) -> impl Iterator<Item = Segment> + '_ {
        self.points.windows(2).map(|w| Segment { a: w[0], b: w[1] })
    }

    /// Vertex list without the repeated closing point.
    pub fn ring_vertices(&self) -> &[Point] {
        if self.is_closed() {
            &self.points[..self.points.len() - 1]
        } else {
            &self.points
        }
    }

    pub fn length(&self) -> f64 {
        self.segments().map(|s| s.length()).sum()
    }

    fn reverse(&mut self) {
        self.points.reverse();
    }

    pub fn map(&self, f: impl Fn(Point) -> Point) -> LineString {
        LineString {
            points: self.points.iter().map(|&p| f(p)).collect(),
        }
    }
}

/// Signed shoelace area of a vertex cycle (closing point optional).
pub fn signed_ring_area(pts: &[Point]) -> f64 {
    let n = pts.len();
    if n < 3 {
        return 0.0;
    }
    let mut s = 0.0;
    for i in 0..n {
        let p = pts[i];
        let q = pts[(i + 1) % n];
        s += p.x * q.y - q.x * p.y;
    }
    0.5 * s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPolygon")]
pub struct PolygonWithHoles {
    exterior: LineString,
    interiors: Vec<LineString>,
}

#[derive(Deserialize)]
struct RawPolygon {
    exterior: LineString,
    #[serde(default)]
    interiors: Vec<LineString>,
}

impl TryFrom<RawPolygon> for PolygonWithHoles {
    type Error = GeometryError;
    fn try_from(r: RawPolygon) -> Result<Self> {
        PolygonWithHoles::new(r.exterior, r.interiors)
    }
}

impl PolygonWithHoles {
    /// Orients rings (exterior positive, holes negative) and rejects
    /// degenerate rings.
    pub fn new(exterior: LineString, interiors: Vec<LineString>) -> Result<Self> {
        let mut exterior = LineString::new_ring(exterior.points)?;
        let a = signed_ring_area(exterior.ring_vertices());
        if a.abs() <= 0.0 || !a.is_finite() {
            return Err(GeometryError::DegenerateRing);
        }
        if a < 0.0 {
            exterior.reverse();
        }
        let mut holes = Vec::with_capacity(interiors.len());
        for h in interiors {
            let mut h = LineString::new_ring(h.points)?;
            let ha = signed_ring_area(h.ring_vertices());
            if ha == 0.0 {
                return Err(GeometryError::DegenerateRing);
            }
            if ha > 0.0 {
                h.reverse();
            }
            holes.push(h);
        }
        let p = PolygonWithHoles {
            exterior,
            interiors: holes,
        };
        if p.signed_area() <= 0.0 {
            return Err(GeometryError::ZeroArea);
        }
        Ok(p)
    }

    pub fn from_points(exterior: Vec<Point>) -> Result<Self> {
        PolygonWithHoles::new(LineString::new(exterior)?, Vec::new())
    }

    /// Axis-aligned rectangle `[x0, x1] × [y0, y1]`.
    pub fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self> {
        PolygonWithHoles::from_points(vec![
            Point::new(x0, y0),
            Point::new(x1, y0),
            Point::new(x1, y1),
            Point::new(x0, y1),
        ])
    }

    pub fn exterior(&self) -> &LineString {
        &self.exterior
    }

    pub fn interiors(&self) -> &[LineString] {
        &self.interiors
    }

    pub fn rings(&self) -> impl Iterator<Item = &LineString> {
        std::iter::once(&self.exterior).chain(self.interiors.iter())
    }

    pub fn edges(&self) -> impl Iterator<Item = Segment> + '_ {
        self.rings().flat_map(|r| r.segments())
    }

    fn signed_area(&self) -> f64 {
        signed_ring_area(self.exterior.ring_vertices())
            + self
                .interiors
                .iter()
                .map(|h| signed_ring_area(h.ring_vertices()))
                .sum::<f64>()
    }

    /// Applies `f` to every vertex; orientation is re-normalized.
    pub fn map(&self, f: impl Fn(Point) -> Point) -> Result<PolygonWithHoles> {
        PolygonWithHoles::new(
            self.exterior.map(&f),
            self.interiors.iter().map(|h| h.map(&f)).collect(),
        )
    }

    pub fn translate(&self, d: Point) -> PolygonWithHoles {
        self.map(|p| p + d).expect("translation preserves validity")
    }

    pub fn scale(&self, f: f64) -> Result<PolygonWithHoles> {
        self.map(|p| p.scale(f))
    }

    pub fn bbox(&self) -> BBox {
        BBox::of_points(self.exterior.points())
    }

    pub fn without_holes(&self) -> PolygonWithHoles {
        PolygonWithHoles {
            exterior: self.exterior.clone(),
            interiors: Vec::new(),
        }
    }

    pub fn vertex_count(&self) -> usize {
        self.rings().map(|r| r.ring_vertices().len()).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MultiPolygon {
    pub polygons: Vec<PolygonWithHoles>,
}

impl MultiPolygon {
    pub fn new(polygons: Vec<PolygonWithHoles>) -> Self {
        MultiPolygon { polygons }
    }

    pub fn is_empty(&self) -> bool {
        self.polygons.is_empty()
    }

    pub fn area(&self) -> f64 {
        self.polygons.iter().map(|p| area(p).unwrap_or(0.0)).sum()
    }

    pub fn edges(&self) -> impl Iterator<Item = Segment> + '_ {
        self.polygons.iter().flat_map(|p| p.edges())
    }

    pub fn rings(&self) -> impl Iterator<Item = &LineString> {
        self.polygons.iter().flat_map(|p| p.rings())
    }

    pub fn union(&self, other: &MultiPolygon) -> MultiPolygon {
        from_geo_multi(&to_geo_multi(self).union(&to_geo_multi(other)))
    }

    pub fn difference(&self, other: &MultiPolygon) -> MultiPolygon {
        from_geo_multi(&to_geo_multi(self).difference(&to_geo_multi(other)))
    }

    pub fn intersection(&self, other: &MultiPolygon) -> MultiPolygon {
        from_geo_multi(&to_geo_multi(self).intersection(&to_geo_multi(other)))
    }

    /// Drops members whose area is below `min_area`.
    pub fn without_slivers(mut self, min_area: f64) -> MultiPolygon {
        self.polygons
            .retain(|p| area(p).map(|a| a >= min_area).unwrap_or(false));
        self
    }

    pub fn largest(&self) -> Option<&PolygonWithHoles> {
        self.polygons
            .iter()
            .max_by(|a, b| area(a).unwrap_or(0.0).total_cmp(&area(b).unwrap_or(0.0)))
    }
}

impl From<PolygonWithHoles> for MultiPolygon {
    fn from(p: PolygonWithHoles) -> Self {
        MultiPolygon { polygons: vec![p] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub min: Point,
    pub max: Point,
}

impl BBox {
    pub fn of_points(pts: &[Point]) -> BBox {
        let mut min = Point::new(f64::INFINITY, f64::INFINITY);
        let mut max = Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in pts {
            min.x = min.x.min(p.x);
            min.y = min.y.min(p.y);
            max.x = max.x.max(p.x);
            max.y = max.y.max(p.y);
        }
        BBox { min, max }
    }

    pub fn expanded(&self, d: f64) -> BBox {
        BBox {
            min: Point::new(self.min.x - d, self.min.y - d),
            max: Point::new(self.max.x + d, self.max.y + d),
        }
    }

    pub fn intersects(&self, o: &BBox) -> bool {
        self.min.x <= o.max.x
            && o.min.x <= self.max.x
            && self.min.y <= o.max.y
            && o.min.y <= self.max.y
    }

    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> f64 {
        self.max.y - self.min.y
    }
}

// ---- measures ------------------------------------------------------------

/// Shoelace area of the exterior minus the holes.
pub fn area(p: &PolygonWithHoles) -> Result<f64> {
    let a = p.signed_area();
    if a > 0.0 && a.is_finite() {
        Ok(a)
    } else {
        Err(GeometryError::DegenerateRing)
    }
}

fn ring_moments(pts: &[Point]) -> (f64, f64, f64) {
    let n = pts.len();
    let (mut a, mut cx, mut cy) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let p = pts[i];
        let q = pts[(i + 1) % n];
        let c = p.x * q.y - q.x * p.y;
        a += c;
        cx += (p.x + q.x) * c;
        cy += (p.y + q.y) * c;
    }
    (0.5 * a, cx / 6.0, cy / 6.0)
}

/// Area-weighted centroid honoring holes.
pub fn centroid(p: &PolygonWithHoles) -> Result<Point> {
    // Moments are taken relative to the first vertex to limit cancellation.
    let origin = p.exterior.points()[0];
    let (mut a, mut mx, mut my) = (0.0, 0.0, 0.0);
    for ring in p.rings() {
        let local: Vec<Point> = ring.ring_vertices().iter().map(|&q| q - origin).collect();
        let (ra, rx, ry) = ring_moments(&local);
        a += ra;
        mx += rx;
        my += ry;
    }
    if a <= 0.0 || !a.is_finite() {
        return Err(GeometryError::ZeroArea);
    }
    Ok(Point::new(origin.x + mx / a, origin.y + my / a))
}

/// Radius of the smallest origin-centered circle containing `p`: the largest
/// exterior vertex norm.
pub fn origin_radius(p: &PolygonWithHoles) -> f64 {
    p.exterior
        .points()
        .iter()
        .map(|v| v.norm())
        .fold(0.0, f64::max)
}

// ---- buffering and boolean operations -------------------------------------

/// Discretization of the disk used by [`buffer`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BufferOptions {
    /// Arc segments per quarter circle (16 gives a 64-gon).
    pub segments_per_quarter: u32,
}

impl Default for BufferOptions {
    fn default() -> Self {
        BufferOptions {
            segments_per_quarter: 16,
        }
    }
}

/// Minkowski sum (`radius > 0`) or erosion (`radius < 0`) by a disk.
pub fn buffer(geom: &MultiPolygon, radius: f64, opts: BufferOptions) -> MultiPolygon {
    if geom.is_empty() {
        return MultiPolygon::default();
    }
    if radius == 0.0 {
        return geom.clone();
    }
    let step = (PI / 2.0) / f64::from(opts.segments_per_quarter.max(1));
    let style = geo::algorithm::buffer::BufferStyle::new(radius)
        .line_join(geo::algorithm::buffer::LineJoin::Round(step));
    from_geo_multi(&to_geo_multi(geom).buffer_with_style(style))
}

pub fn buffer_polygon(p: &PolygonWithHoles, radius: f64, opts: BufferOptions) -> MultiPolygon {
    buffer(&MultiPolygon::from(p.clone()), radius, opts)
}

fn to_geo_ring(ls: &LineString) -> geo::LineString<f64> {
    geo::LineString::from(ls.points().iter().map(|p| (p.x, p.y)).collect::<Vec<_>>())
}

pub fn to_geo(p: &PolygonWithHoles) -> geo::Polygon<f64> {
    geo::Polygon::new(
        to_geo_ring(&p.exterior),
        p.interiors.iter().map(to_geo_ring).collect(),
    )
}

pub fn to_geo_multi(m: &MultiPolygon) -> geo::MultiPolygon<f64> {
    geo::MultiPolygon(m.polygons.iter().map(to_geo).collect())
}

fn from_geo_ring(r: &geo::LineString<f64>) -> Option<LineString> {
    let pts: Vec<Point> = r.coords().map(|c| Point::new(c.x, c.y)).collect();
    let ring = LineString::new_ring(pts).ok()?;
    (signed_ring_area(ring.ring_vertices()) != 0.0).then_some(ring)
}

/// Converts a geo polygon, dropping degenerate rings. `None` if the exterior
/// is degenerate.
pub fn from_geo(p: &geo::Polygon<f64>) -> Option<PolygonWithHoles> {
    let ext = from_geo_ring(p.exterior())?;
    let holes = p.interiors().iter().filter_map(from_geo_ring).collect();
    PolygonWithHoles::new(ext, holes).ok()
}

pub fn from_geo_multi(m: &geo::MultiPolygon<f64>) -> MultiPolygon {
    MultiPolygon {
        polygons: m.0.iter().filter_map(from_geo).collect(),
    }
}

// ---- simplification ------------------------------------------------------

fn dp_recursive(pts: &[Point], eps: f64, keep: &mut [bool]) {
    if pts.len() < 3 {
        return;
    }
    let (a, b) = (pts[0], pts[pts.len() - 1]);
    let mut best = (0usize, -1.0f64);
    for (i, &p) in pts.iter().enumerate().take(pts.len() - 1).skip(1) {
        let d = if a == b {
            p.dist(a)
        } else {
            point_segment_distance(p, Segment { a, b })
        };
        if d > best.1 {
            best = (i, d);
        }
    }
    if best.1 > eps {
        keep[best.0] = true;
        dp_recursive(&pts[..=best.0], eps, &mut keep[..=best.0]);
        dp_recursive(&pts[best.0..], eps, &mut keep[best.0..]);
    }
}

fn dp_open(pts: &[Point], eps: f64) -> Vec<Point> {
    let mut keep = vec![false; pts.len()];
    keep[0] = true;
    *keep.last_mut().unwrap() = true;
    dp_recursive(pts, eps, &mut keep);
    pts.iter()
        .zip(keep)
        .filter_map(|(&p, k)| k.then_some(p))
        .collect()
}

/// Douglas–Peucker simplification. Closed rings are split at two extreme
/// points (the first vertex and the vertex farthest from it) and each half
/// is simplified separately.
pub fn douglas_peucker(ls: &LineString, eps: f64) -> LineString {
    if eps <= 0.0 || ls.points().len() < 3 {
        return ls.clone();
    }
    if !ls.is_closed() {
        return LineString {
            points: dp_open(ls.points(), eps),
        };
    }
    let verts = ls.ring_vertices();
    if verts.len() < 4 {
        return ls.clone();
    }
    let start = verts[0];
    let far = (1..verts.len())
        .max_by(|&i, &j| verts[i].dist(start).total_cmp(&verts[j].dist(start)))
        .unwrap();
    let first: Vec<Point> = verts[..=far].to_vec();
    let mut second: Vec<Point> = verts[far..].to_vec();
    second.push(start);
    let mut out = dp_open(&first, eps);
    out.pop();
    out.extend(dp_open(&second, eps));
    if out.len() < 4 {
        return ls.clone();
    }
    LineString { points: out }
}

/// Simplifies every ring of a polygon, keeping the original when the result
/// would be degenerate.
pub fn simplify_polygon(p: &PolygonWithHoles, eps: f64) -> PolygonWithHoles {
    let ext = douglas_peucker(p.exterior(), eps);
    let holes: Vec<LineString> = p
        .interiors()
        .iter()
        .map(|h| douglas_peucker(h, eps))
        .filter(|h| signed_ring_area(h.ring_vertices()).abs() > 0.0)
        .collect();
    PolygonWithHoles::new(ext, holes).unwrap_or_else(|_| p.clone())
}

/// Removes vertices lying on the straight line through their neighbours.
pub fn merge_collinear(ring: &[Point]) -> Vec<Point> {
    let n = ring.len();
    if n < 4 {
        return ring.to_vec();
    }
    let mut out: Vec<Point> = Vec::with_capacity(n);
    for i in 0..n {
        let prev = ring[(i + n - 1) % n];
        let cur = ring[i];
        let next = ring[(i + 1) % n];
        let c = (cur - prev).cross(next - cur);
        let same_dir = (cur - prev).dot(next - cur) > 0.0;
        if c.abs() > ORIENT_EPS * (cur - prev).norm() * (next - cur).norm() || !same_dir {
            out.push(cur);
        }
    }
    out
}

// ---- distances and predicates ---------------------------------------------

pub fn closest_point_on_segment(pt: Point, seg: Segment) -> Point {
    let d = seg.direction();
    let len2 = d.dot(d);
    if len2 == 0.0 {
        return seg.a;
    }
    let t = ((pt - seg.a).dot(d) / len2).clamp(0.0, 1.0);
    seg.a.lerp(seg.b, t)
}

pub fn point_segment_distance(pt: Point, seg: Segment) -> f64 {
    pt.dist(closest_point_on_segment(pt, seg))
}

/// Segment from `pt` to the nearest point of `seg`; `None` when `pt` lies on
/// `seg` (zero length).
pub fn shortest_line(pt: Point, seg: Segment) -> Option<Segment> {
    let q = closest_point_on_segment(pt, seg);
    if pt.dist(q) <= BOUNDARY_EPS {
        None
    } else {
        Some(Segment { a: pt, b: q })
    }
}

fn orient(a: Point, b: Point, c: Point) -> i8 {
    let v = (b - a).cross(c - a);
    let scale = (b - a).norm() * (c - a).norm();
    if v.abs() <= ORIENT_EPS * scale.max(1e-300) {
        0
    } else if v > 0.0 {
        1
    } else {
        -1
    }
}

/// Proper crossing at a point interior to both segments. Touching at an
/// endpoint and collinear overlap do not count.
pub fn segments_cross(s1: &Segment, s2: &Segment) -> bool {
    let o1 = orient(s1.a, s1.b, s2.a);
    let o2 = orient(s1.a, s1.b, s2.b);
    let o3 = orient(s2.a, s2.b, s1.a);
    let o4 = orient(s2.a, s2.b, s1.b);
    o1 != 0 && o2 != 0 && o3 != 0 && o4 != 0 && o1 != o2 && o3 != o4
}

/// Any intersection at all (touching included).
pub fn segments_intersect(s1: &Segment, s2: &Segment) -> bool {
    segment_segment_distance(s1, s2) <= BOUNDARY_EPS
}

pub fn segment_segment_distance(s1: &Segment, s2: &Segment) -> f64 {
    if segments_cross(s1, s2) {
        return 0.0;
    }
    point_segment_distance(s1.a, *s2)
        .min(point_segment_distance(s1.b, *s2))
        .min(point_segment_distance(s2.a, *s1))
        .min(point_segment_distance(s2.b, *s1))
}

/// Acute angle between the carrier lines, in degrees within `[0, 90]`.
pub fn angle_between(s1: &Segment, s2: &Segment) -> Result<f64> {
    let (d1, d2) = (s1.direction(), s2.direction());
    let (n1, n2) = (d1.norm(), d2.norm());
    if n1 == 0.0 || n2 == 0.0 {
        return Err(GeometryError::ZeroLengthSegment);
    }
    let c = (d1.dot(d2).abs() / (n1 * n2)).min(1.0);
    Ok(c.acos().to_degrees())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Location {
    Inside,
    Boundary,
    Outside,
}

fn ring_winding_crossings(ring: &LineString, pt: Point) -> (bool, bool) {
    let mut inside = false;
    for s in ring.segments() {
        if point_segment_distance(pt, s) <= BOUNDARY_EPS {
            return (false, true);
        }
        let (a, b) = (s.a, s.b);
        if (a.y > pt.y) != (b.y > pt.y) {
            let x = a.x + (pt.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if x > pt.x {
                inside = !inside;
            }
        }
    }
    (inside, false)
}

pub fn locate_point(p: &PolygonWithHoles, pt: Point) -> Location {
    let mut inside = false;
    for ring in p.rings() {
        let (flip, on) = ring_winding_crossings(ring, pt);
        if on {
            return Location::Boundary;
        }
        inside ^= flip;
    }
    if inside {
        Location::Inside
    } else {
        Location::Outside
    }
}

pub fn locate_point_multi(m: &MultiPolygon, pt: Point) -> Location {
    let mut best = Location::Outside;
    for p in &m.polygons {
        match locate_point(p, pt) {
            Location::Inside => return Location::Inside,
            Location::Boundary => best = Location::Boundary,
            Location::Outside => {}
        }
    }
    best
}

/// Whether `seg` lies in the closed region `outer`: `samples` interior
/// sample points plus the endpoints must be inside or on the boundary, and
/// `seg` may not properly cross any ring edge.
pub fn contains_with_samples(outer: &MultiPolygon, seg: &Segment, samples: usize) -> bool {
    for e in outer.edges() {
        if segments_cross(seg, &e) {
            return false;
        }
    }
    let n = samples.max(1);
    let probes = (0..n)
        .map(|i| seg.a.lerp(seg.b, (i as f64 + 0.5) / n as f64))
        .chain([seg.a, seg.b]);
    for q in probes {
        if locate_point_multi(outer, q) == Location::Outside {
            return false;
        }
    }
    true
}

pub fn contains(outer: &MultiPolygon, seg: &Segment) -> bool {
    contains_with_samples(outer, seg, 8)
}

/// Distance from `pt` to the nearest ring edge of `m`.
pub fn boundary_distance(m: &MultiPolygon, pt: Point) -> f64 {
    m.edges()
        .map(|e| point_segment_distance(pt, e))
        .fold(f64::INFINITY, f64::min)
}

/// Distance between two polygons (0 when they overlap or touch).
pub fn polygon_distance(p: &PolygonWithHoles, q: &PolygonWithHoles) -> f64 {
    if locate_point(p, q.exterior.points()[0]) != Location::Outside
        || locate_point(q, p.exterior.points()[0]) != Location::Outside
    {
        return 0.0;
    }
    let mut best = f64::INFINITY;
    for e in p.edges() {
        for f in q.edges() {
            best = best.min(segment_segment_distance(&e, &f));
            if best == 0.0 {
                return 0.0;
            }
        }
    }
    best
}

// ---- hulls ---------------------------------------------------------------

/// Convex hull of all segment endpoints (Andrew's monotone chain).
pub fn convex_hull(segs: &[Segment]) -> Result<PolygonWithHoles> {
    let pts: Vec<Point> = segs.iter().flat_map(|s| [s.a, s.b]).collect();
    convex_hull_points(&pts)
}

pub fn convex_hull_points(pts: &[Point]) -> Result<PolygonWithHoles> {
    let mut p: Vec<Point> = pts.to_vec();
    p.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    p.dedup();
    if p.len() < 3 {
        return Err(GeometryError::Collinear);
    }
    let mut hull: Vec<Point> = Vec::with_capacity(2 * p.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &Point>> = if pass == 0 {
            Box::new(p.iter())
        } else {
            Box::new(p.iter().rev())
        };
        for &q in iter {
            while hull.len() >= start + 2 {
                let a = hull[hull.len() - 2];
                let b = hull[hull.len() - 1];
                if orient(a, b, q) <= 0 {
                    hull.pop();
                } else {
                    break;
                }
            }
            hull.push(q);
        }
        hull.pop();
    }
    if hull.len() < 3 {
        return Err(GeometryError::Collinear);
    }
    PolygonWithHoles::from_points(hull).map_err(|_| GeometryError::Collinear)
}

/// Convexity of the exterior ring (collinear runs allowed), no holes.
pub fn is_convex(p: &PolygonWithHoles) -> bool {
    if !p.interiors().is_empty() {
        return false;
    }
    let v = p.exterior().ring_vertices();
    let n = v.len();
    (0..n).all(|i| orient(v[i], v[(i + 1) % n], v[(i + 2) % n]) >= 0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sq(x0: f64, y0: f64, x1: f64, y1: f64) -> PolygonWithHoles {
        PolygonWithHoles::rect(x0, y0, x1, y1).unwrap()
    }

    fn seg(ax: f64, ay: f64, bx: f64, by: f64) -> Segment {
        Segment::new(Point::new(ax, ay), Point::new(bx, by)).unwrap()
    }

    fn ring(pts: &[(f64, f64)]) -> LineString {
        LineString::new(pts.iter().map(|&(x, y)| Point::new(x, y)).collect()).unwrap()
    }

    #[test]
    fn area_examples() {
        assert_eq!(area(&sq(0.0, 0.0, 1.0, 1.0)).unwrap(), 1.0);
        assert_eq!(area(&sq(0.0, 0.0, 10.0, 1.0)).unwrap(), 10.0);
        let holed = PolygonWithHoles::new(
            ring(&[(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)]),
            vec![ring(&[(-0.5, -0.5), (0.5, -0.5), (0.5, 0.5), (-0.5, 0.5)])],
        )
        .unwrap();
        assert!((area(&holed).unwrap() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_ring_rejected() {
        let r = ring(&[(0.0, 0.0), (1.0, 0.0), (2.0, 0.0)]);
        assert_eq!(
            PolygonWithHoles::new(r, vec![]),
            Err(GeometryError::DegenerateRing)
        );
        assert!(Segment::new(Point::new(1.0, 1.0), Point::new(1.0, 1.0)).is_err());
    }

    #[test]
    fn centroid_examples() {
        assert_eq!(
            centroid(&sq(0.0, 0.0, 1.0, 1.0)).unwrap(),
            Point::new(0.5, 0.5)
        );
        let holed = PolygonWithHoles::new(
            ring(&[(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)]),
            vec![ring(&[(-0.3, -0.3), (0.3, -0.3), (0.3, 0.3), (-0.3, 0.3)])],
        )
        .unwrap();
        let c = centroid(&holed).unwrap();
        assert!(c.norm() < 1e-12);
        let tri = PolygonWithHoles::from_points(vec![
            Point::new(0.0, 0.0),
            Point::new(3.0, 0.0),
            Point::new(0.0, 3.0),
        ])
        .unwrap();
        let c = centroid(&tri).unwrap();
        assert!((c.x - 1.0).abs() < 1e-12 && (c.y - 1.0).abs() < 1e-12);
    }

    #[test]
    fn origin_radius_examples() {
        let s2 = std::f64::consts::SQRT_2;
        assert!((origin_radius(&sq(-1.0, -1.0, 1.0, 1.0)) - s2).abs() < 1e-15);
        assert!((origin_radius(&sq(-2.0, -0.5, 2.0, 0.5)) - (4.0f64 + 0.25).sqrt()).abs() < 1e-15);
        assert!((origin_radius(&sq(0.0, 0.0, 1.0, 1.0)) - s2).abs() < 1e-15);
    }

    #[test]
    fn buffer_round_trip_and_full_erosion() {
        let unit = MultiPolygon::from(sq(0.0, 0.0, 1.0, 1.0));
        let closed = buffer(
            &buffer(&unit, 1.0, Default::default()),
            -1.0,
            Default::default(),
        );
        let a = closed.area();
        assert!(a >= 1.0 - 1e-3 && a - 1.0 <= 1e-2, "area {a}");
        let eroded = buffer(
            &MultiPolygon::from(sq(0.0, 0.0, 2.0, 2.0)),
            -2.0,
            Default::default(),
        );
        assert!(eroded.is_empty());
    }

    #[test]
    fn buffer_closing_fills_small_hole() {
        let p = PolygonWithHoles::new(
            ring(&[(0.0, 0.0), (10.0, 0.0), (10.0, 10.0), (0.0, 10.0)]),
            vec![ring(&[(4.5, 4.5), (5.5, 4.5), (5.5, 5.5), (4.5, 5.5)])],
        )
        .unwrap();
        let opts = BufferOptions::default();
        let closed = buffer(&buffer_polygon(&p, 1.0, opts), -1.0, opts);
        assert_eq!(closed.polygons.len(), 1);
        assert!(closed.polygons[0].interiors().is_empty());
    }

    #[test]
    fn douglas_peucker_examples() {
        let line = LineString::new((0..5).map(|i| Point::new(i as f64, 0.0)).collect()).unwrap();
        assert_eq!(douglas_peucker(&line, 0.1).points().len(), 2);
        let wiggle = ring(&[(0.0, 0.0), (1.0, 0.3), (2.0, -0.2), (3.0, 1.0)]);
        assert_eq!(douglas_peucker(&wiggle, 0.0), wiggle);
        let mut stairs = vec![Point::new(0.0, 0.0)];
        for i in 0..10 {
            let f = i as f64;
            stairs.push(Point::new(f + 1.0, f));
            stairs.push(Point::new(f + 1.0, f + 1.0));
        }
        let s = douglas_peucker(&LineString::new(stairs).unwrap(), 1.0);
        assert_eq!(s.points(), &[Point::new(0.0, 0.0), Point::new(10.0, 10.0)]);
    }

    #[test]
    fn douglas_peucker_closed_ring_keeps_corners() {
        let mut pts = Vec::new();
        for i in 0..10 {
            pts.push(Point::new(i as f64, 0.0));
        }
        for i in 0..10 {
            pts.push(Point::new(10.0, i as f64));
        }
        for i in 0..10 {
            pts.push(Point::new(10.0 - i as f64, 10.0));
        }
        for i in 0..10 {
            pts.push(Point::new(0.0, 10.0 - i as f64));
        }
        let r = LineString::new_ring(pts).unwrap();
        let s = douglas_peucker(&r, 0.5);
        assert!(s.is_closed());
        assert_eq!(s.ring_vertices().len(), 4);
    }

    #[test]
    fn shortest_line_examples() {
        let sl = shortest_line(Point::new(0.0, 1.0), seg(-1.0, 0.0, 1.0, 0.0)).unwrap();
        assert_eq!(sl.b, Point::new(0.0, 0.0));
        assert_eq!(sl.length(), 1.0);
        let sl = shortest_line(Point::new(5.0, 0.0), seg(0.0, 0.0, 1.0, 0.0)).unwrap();
        assert_eq!(sl.b, Point::new(1.0, 0.0));
        assert_eq!(sl.length(), 4.0);
        assert!(shortest_line(Point::new(1.0, 1.0), seg(0.0, 0.0, 2.0, 2.0)).is_none());
    }

    #[test]
    fn crossing_examples() {
        assert!(segments_cross(
            &seg(0.0, -1.0, 0.0, 1.0),
            &seg(-1.0, 0.0, 1.0, 0.0)
        ));
        assert!(!segments_cross(
            &seg(0.0, 0.0, 1.0, 0.0),
            &seg(1.0, 0.0, 1.0, 1.0)
        ));
        assert!(!segments_cross(
            &seg(0.0, 0.0, 1.0, 0.0),
            &seg(0.0, 1.0, 1.0, 1.0)
        ));
        // T-contact is not a proper crossing
        assert!(!segments_cross(
            &seg(0.0, 0.0, 2.0, 0.0),
            &seg(1.0, 0.0, 1.0, 1.0)
        ));
    }

    #[test]
    fn hull_examples() {
        let sides = [
            seg(0.0, 0.0, 1.0, 0.0),
            seg(1.0, 0.0, 1.0, 1.0),
            seg(1.0, 1.0, 0.0, 1.0),
            seg(0.0, 1.0, 0.0, 0.0),
        ];
        let h = convex_hull(&sides).unwrap();
        assert_eq!(area(&h).unwrap(), 1.0);
        assert_eq!(h.exterior().ring_vertices().len(), 4);
        let diag = [seg(0.0, 0.0, 1.0, 1.0), seg(1.0, 0.0, 0.0, 1.0)];
        assert_eq!(area(&convex_hull(&diag).unwrap()).unwrap(), 1.0);
        let tri = [
            seg(0.0, 0.0, 4.0, 0.0),
            seg(4.0, 0.0, 0.0, 3.0),
            seg(0.0, 3.0, 0.0, 0.0),
        ];
        assert_eq!(area(&convex_hull(&tri).unwrap()).unwrap(), 6.0);
        let flat = [seg(0.0, 0.0, 1.0, 0.0), seg(2.0, 0.0, 3.0, 0.0)];
        assert_eq!(convex_hull(&flat), Err(GeometryError::Collinear));
    }

    #[test]
    fn contains_examples() {
        let walls = MultiPolygon::new(vec![sq(0.0, 0.0, 2.0, 2.0), sq(5.0, 0.0, 7.0, 2.0)]);
        assert!(contains(&walls, &seg(0.0, 0.0, 2.0, 0.0)));
        assert!(!contains(&walls, &seg(1.0, 1.0, 6.0, 1.0)));
        assert!(contains(&walls, &seg(0.0, 0.0, 2.0, 2.0)));
        // a chord of a non-convex L across the notch is rejected
        let l = MultiPolygon::from(
            PolygonWithHoles::from_points(vec![
                Point::new(0.0, 0.0),
                Point::new(4.0, 0.0),
                Point::new(4.0, 1.0),
                Point::new(1.0, 1.0),
                Point::new(1.0, 4.0),
                Point::new(0.0, 4.0),
            ])
            .unwrap(),
        );
        assert!(!contains(&l, &seg(4.0, 1.0, 1.0, 4.0)));
    }

    #[test]
    fn angle_examples() {
        let h = seg(0.0, 0.0, 1.0, 0.0);
        assert!((angle_between(&h, &seg(0.0, 0.0, 0.0, 1.0)).unwrap() - 90.0).abs() < 1e-12);
        assert_eq!(angle_between(&h, &seg(0.0, 1.0, 5.0, 1.0)).unwrap(), 0.0);
        assert!((angle_between(&seg(0.0, 0.0, 1.0, 1.0), &h).unwrap() - 45.0).abs() < 1e-12);
        assert!((angle_between(&h, &seg(1.0, 0.0, 0.0, 0.0)).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn orientation_is_normalized() {
        let cw = PolygonWithHoles::from_points(vec![
            Point::new(0.0, 0.0),
            Point::new(0.0, 1.0),
            Point::new(1.0, 1.0),
            Point::new(1.0, 0.0),
        ])
        .unwrap();
        assert!(signed_ring_area(cw.exterior().ring_vertices()) > 0.0);
    }

    #[test]
    fn polygon_distance_examples() {
        let a = sq(0.0, 0.0, 1.0, 1.0);
        assert_eq!(polygon_distance(&a, &sq(3.0, 0.0, 4.0, 1.0)), 2.0);
        assert_eq!(polygon_distance(&a, &sq(1.0, 0.0, 2.0, 1.0)), 0.0);
        assert_eq!(polygon_distance(&a, &sq(0.2, 0.2, 0.4, 0.4)), 0.0);
    }

    #[test]
    fn convexity() {
        assert!(is_convex(&sq(0.0, 0.0, 3.0, 1.0)));
        let l = PolygonWithHoles::from_points(vec![
            Point::new(0.0, 0.0),
            Point::new(2.0, 0.0),
            Point::new(2.0, 1.0),
            Point::new(1.0, 1.0),
            Point::new(1.0, 2.0),
            Point::new(0.0, 2.0),
        ])
        .unwrap();
        assert!(!is_convex(&l));
    }
}
