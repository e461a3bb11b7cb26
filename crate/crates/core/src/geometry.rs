//! Planar geometry in meters: points, simple polygons, polylines.
//!
//! Everything here is a pure function over immutable values. Coincidence
//! and deduplication use [`EPS`].

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Distance below which two points are the same point.
pub const EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point2D {
    pub x: f64,
    pub y: f64,
}

impl Point2D {
    pub const fn new(x: f64, y: f64) -> Self {
        Point2D { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn distance(&self, other: &Point2D) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    /// Linear interpolation `self + t * (other - self)`.
    pub fn lerp(&self, other: &Point2D, t: f64) -> Point2D {
        Point2D::new(self.x + t * (other.x - self.x), self.y + t * (other.y - self.y))
    }

    fn sub(&self, other: &Point2D) -> (f64, f64) {
        (self.x - other.x, self.y - other.y)
    }
}

fn cross(a: (f64, f64), b: (f64, f64)) -> f64 {
    a.0 * b.1 - a.1 * b.0
}

fn dot(a: (f64, f64), b: (f64, f64)) -> f64 {
    a.0 * b.0 + a.1 * b.1
}

/// Orientation of `c` relative to the directed line `a -> b`.
fn orient(a: &Point2D, b: &Point2D, c: &Point2D) -> f64 {
    cross(b.sub(a), c.sub(a))
}

fn on_segment_collinear(a: &Point2D, b: &Point2D, p: &Point2D) -> bool {
    p.x >= a.x.min(b.x) && p.x <= a.x.max(b.x) && p.y >= a.y.min(b.y) && p.y <= a.y.max(b.y)
}

/// Exact closed-segment intersection test on the orientation predicates.
fn segments_touch(a: &Point2D, b: &Point2D, c: &Point2D, d: &Point2D) -> bool {
    let o1 = orient(a, b, c);
    let o2 = orient(a, b, d);
    let o3 = orient(c, d, a);
    let o4 = orient(c, d, b);
    if ((o1 > 0.0 && o2 < 0.0) || (o1 < 0.0 && o2 > 0.0)) && ((o3 > 0.0 && o4 < 0.0) || (o3 < 0.0 && o4 > 0.0)) {
        return true;
    }
    (o1 == 0.0 && on_segment_collinear(a, b, c))
        || (o2 == 0.0 && on_segment_collinear(a, b, d))
        || (o3 == 0.0 && on_segment_collinear(c, d, a))
        || (o4 == 0.0 && on_segment_collinear(c, d, b))
}

/// Distance from `p` to the closed segment `a -> b`, plus the segment
/// parameter of the closest point.
fn point_segment(p: &Point2D, a: &Point2D, b: &Point2D) -> (f64, f64) {
    let ab = b.sub(a);
    let len2 = dot(ab, ab);
    let tau = if len2 == 0.0 {
        0.0
    } else {
        (dot(p.sub(a), ab) / len2).clamp(0.0, 1.0)
    };
    (p.distance(&a.lerp(b, tau)), tau)
}

/// A simple polygon, implicitly closed. Validated on construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    vertices: Vec<Point2D>,
}

impl Polygon {
    pub fn new(vertices: Vec<Point2D>) -> Result<Self> {
        let n = vertices.len();
        if n < 3 {
            return Err(Error::validation(format!("polygon needs at least 3 vertices, got {n}")));
        }
        if let Some(i) = vertices.iter().position(|v| !v.is_finite()) {
            return Err(Error::validation(format!("polygon vertex {i} is not finite")));
        }
        for i in 0..n {
            let j = (i + 1) % n;
            if vertices[i].distance(&vertices[j]) <= EPS {
                return Err(Error::validation(format!(
                    "polygon has a zero-length edge at vertex {i}"
                )));
            }
        }
        let poly = Polygon { vertices };
        if poly.signed_area() == 0.0 {
            return Err(Error::validation("polygon has zero area"));
        }
        poly.check_simple()?;
        Ok(poly)
    }

    fn check_simple(&self) -> Result<()> {
        let n = self.vertices.len();
        for i in 0..n {
            let (a, b) = self.edge(i);
            for j in (i + 1)..n {
                let (c, d) = self.edge(j);
                let adjacent = j == i + 1 || (i == 0 && j == n - 1);
                if adjacent {
                    // Shared endpoint is fine; folding back over the
                    // neighbouring edge is not.
                    let (shared, other_ab, other_cd) = if j == i + 1 { (b, a, d) } else { (a, b, c) };
                    if orient(&shared, &other_ab, &other_cd) == 0.0 {
                        let u = other_ab.sub(&shared);
                        let v = other_cd.sub(&shared);
                        if dot(u, v) > 0.0 {
                            return Err(Error::validation(format!(
                                "polygon is self-intersecting: edges {i} and {j} overlap"
                            )));
                        }
                    }
                    // A triangle's adjacent edges can only meet at the shared vertex.
                    continue;
                }
                if segments_touch(&a, &b, &c, &d) {
                    return Err(Error::validation(format!(
                        "polygon is self-intersecting: edges {i} and {j} intersect"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn vertices(&self) -> &[Point2D] {
        &self.vertices
    }

    /// Edge `i` runs from vertex `i` to vertex `i + 1` (wrapping).
    pub fn edge(&self, i: usize) -> (Point2D, Point2D) {
        let n = self.vertices.len();
        (self.vertices[i], self.vertices[(i + 1) % n])
    }

    pub fn edges(&self) -> impl Iterator<Item = (Point2D, Point2D)> + '_ {
        (0..self.vertices.len()).map(move |i| self.edge(i))
    }

    /// Shoelace area, positive for counter-clockwise vertex order.
    pub fn signed_area(&self) -> f64 {
        let n = self.vertices.len();
        let mut acc = 0.0;
        for i in 0..n {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % n];
            acc += a.x * b.y - b.x * a.y;
        }
        acc / 2.0
    }

    pub fn area(&self) -> f64 {
        self.signed_area().abs()
    }

    /// (min, max) corners of the axis-aligned bounding box.
    pub fn bounding_box(&self) -> (Point2D, Point2D) {
        let mut lo = self.vertices[0];
        let mut hi = self.vertices[0];
        for v in &self.vertices[1..] {
            lo.x = lo.x.min(v.x);
            lo.y = lo.y.min(v.y);
            hi.x = hi.x.max(v.x);
            hi.y = hi.y.max(v.y);
        }
        (lo, hi)
    }

    pub fn on_boundary(&self, p: &Point2D) -> bool {
        self.edges().any(|(a, b)| point_segment(p, &a, &b).0 <= EPS)
    }

    pub fn to_pairs(&self) -> Vec<[f64; 2]> {
        self.vertices.iter().map(|v| [v.x, v.y]).collect()
    }

    pub fn from_pairs(pairs: &[[f64; 2]]) -> Result<Self> {
        Polygon::new(pairs.iter().map(|p| Point2D::new(p[0], p[1])).collect())
    }

    /// Parse the `[[x, y], ...]` JSON form.
    pub fn from_json(text: &str) -> Result<Self> {
        let pairs: Vec<[f64; 2]> = serde_json::from_str(text)?;
        Polygon::from_pairs(&pairs)
    }
}

impl Serialize for Polygon {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_pairs().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Polygon {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let pairs = Vec::<[f64; 2]>::deserialize(d)?;
        Polygon::from_pairs(&pairs).map_err(serde::de::Error::custom)
    }
}

/// A polyline with cached cumulative arc length per vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct Polyline {
    points: Vec<Point2D>,
    cumulative: Vec<f64>,
}

impl Polyline {
    pub fn new(points: Vec<Point2D>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::validation("polyline needs at least 2 points"));
        }
        if points.iter().any(|p| !p.is_finite()) {
            return Err(Error::validation("polyline point is not finite"));
        }
        let mut cumulative = Vec::with_capacity(points.len());
        cumulative.push(0.0);
        for w in points.windows(2) {
            let d = w[0].distance(&w[1]);
            if d <= EPS {
                return Err(Error::validation("polyline has coincident consecutive points"));
            }
            cumulative.push(cumulative.last().unwrap() + d);
        }
        Ok(Polyline { points, cumulative })
    }

    /// Drops consecutive coincident points, then builds the polyline.
    /// Returns `None` when fewer than two distinct points remain.
    pub fn from_points_dedup(points: impl IntoIterator<Item = Point2D>) -> Option<Self> {
        let mut kept: Vec<Point2D> = Vec::new();
        for p in points {
            if kept.last().is_none_or(|q| q.distance(&p) > EPS) {
                kept.push(p);
            }
        }
        Polyline::new(kept).ok()
    }

    pub fn points(&self) -> &[Point2D] {
        &self.points
    }

    pub fn cumulative(&self) -> &[f64] {
        &self.cumulative
    }

    pub fn length(&self) -> f64 {
        *self.cumulative.last().unwrap()
    }

    pub fn segment_count(&self) -> usize {
        self.points.len() - 1
    }

    /// Index of the first segment whose end arc length is `>= s`.
    pub fn segment_at(&self, s: f64) -> usize {
        let last = self.segment_count() - 1;
        (0..=last).find(|&i| s <= self.cumulative[i + 1]).unwrap_or(last)
    }

    /// The point at arc length `s`, clamped to the line.
    pub fn point_at(&self, s: f64) -> Point2D {
        let s = s.clamp(0.0, self.length());
        let i = self.segment_at(s);
        let seg = self.cumulative[i + 1] - self.cumulative[i];
        let t = ((s - self.cumulative[i]) / seg).clamp(0.0, 1.0);
        self.points[i].lerp(&self.points[i + 1], t)
    }
}

impl Serialize for Polyline {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.points.iter().map(|p| [p.x, p.y]).collect::<Vec<_>>().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Polyline {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let pairs = Vec::<[f64; 2]>::deserialize(d)?;
        Polyline::new(pairs.iter().map(|p| Point2D::new(p[0], p[1])).collect()).map_err(serde::de::Error::custom)
    }
}

/// True iff `p` is inside `poly` or on its boundary.
pub fn point_in_polygon(p: &Point2D, poly: &Polygon) -> bool {
    if poly.on_boundary(p) {
        return true;
    }
    // Even-odd crossing rule on a ray towards +x.
    let mut inside = false;
    for (a, b) in poly.edges() {
        if (a.y > p.y) != (b.y > p.y) {
            let x_at = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
            if p.x < x_at {
                inside = !inside;
            }
        }
    }
    inside
}

/// A point where a segment meets a polygon boundary; `t` is the fraction
/// along the segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Crossing {
    pub point: Point2D,
    pub t: f64,
}

/// All points where `a -> b` meets the boundary of `poly`, ascending by `t`.
///
/// Collinear overlaps contribute the two ends of the shared span. Points
/// closer than [`EPS`] are reported once.
pub fn segment_polygon_crossings(a: &Point2D, b: &Point2D, poly: &Polygon) -> Result<Vec<Crossing>> {
    let d = b.sub(a);
    let seg_len = a.distance(b);
    if seg_len <= EPS {
        return Err(Error::validation("degenerate segment: endpoints coincide"));
    }
    let len2 = dot(d, d);
    let mut hits: Vec<f64> = Vec::new();
    for (p, q) in poly.edges() {
        let e = q.sub(&p);
        let e_len = p.distance(&q);
        let denom = cross(d, e);
        let ap = p.sub(a);
        if denom.abs() > 1e-12 * seg_len * e_len {
            let t = cross(ap, e) / denom;
            let u = cross(ap, d) / denom;
            let tol_t = EPS / seg_len;
            let tol_u = EPS / e_len;
            if t >= -tol_t && t <= 1.0 + tol_t && u >= -tol_u && u <= 1.0 + tol_u {
                hits.push(t.clamp(0.0, 1.0));
            }
        } else {
            // Parallel: only collinear edges can contribute.
            let dist_p = cross(ap, d).abs() / seg_len;
            let dist_q = cross(q.sub(a), d).abs() / seg_len;
            if dist_p <= EPS && dist_q <= EPS {
                let tp = dot(ap, d) / len2;
                let tq = dot(q.sub(a), d) / len2;
                let lo = tp.min(tq).max(0.0);
                let hi = tp.max(tq).min(1.0);
                if lo <= hi {
                    hits.push(lo);
                    hits.push(hi);
                }
            }
        }
    }
    hits.sort_by(|x, y| x.total_cmp(y));
    let mut out: Vec<Crossing> = Vec::with_capacity(hits.len());
    for t in hits {
        let point = a.lerp(b, t);
        if out.last().is_none_or(|c| c.point.distance(&point) > EPS) {
            out.push(Crossing { point, t });
        }
    }
    Ok(out)
}

/// Distance from `p` to the nearest point on `line`, and that point's arc
/// length. Ties resolve to the smallest arc length.
pub fn point_to_polyline(p: &Point2D, line: &Polyline) -> (f64, f64) {
    let pts = line.points();
    let cum = line.cumulative();
    let mut best = (f64::INFINITY, 0.0);
    for i in 0..pts.len() - 1 {
        let (dist, tau) = point_segment(p, &pts[i], &pts[i + 1]);
        if dist < best.0 {
            let s = if tau >= 1.0 {
                cum[i + 1]
            } else {
                cum[i] + tau * (cum[i + 1] - cum[i])
            };
            best = (dist, s);
        }
    }
    best
}
