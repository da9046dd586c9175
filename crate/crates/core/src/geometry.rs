//! Planar geometry on the normalized workspace: points, convex shapes and
//! the distance queries the simulator, annotators and planner share.

use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn dist(self, o: Vec2) -> f64 {
        (self - o).norm()
    }

    pub fn lerp(self, o: Vec2, t: f64) -> Vec2 {
        self + (o - self) * t
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn from_angle(theta: f64) -> Vec2 {
        Vec2::new(theta.cos(), theta.sin())
    }
}

impl From<[f64; 2]> for Vec2 {
    fn from([x, y]: [f64; 2]) -> Self {
        Vec2 { x, y }
    }
}

impl From<Vec2> for [f64; 2] {
    fn from(v: Vec2) -> Self {
        [v.x, v.y]
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl AddAssign for Vec2 {
    fn add_assign(&mut self, o: Vec2) {
        self.x += o.x;
        self.y += o.y;
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// Distance from `p` to the closed segment `[a, b]`.
pub fn point_segment_distance(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    let ab = b - a;
    let len_sq = ab.norm_sq();
    if len_sq == 0.0 {
        return p.dist(a);
    }
    let t = ((p - a).dot(ab) / len_sq).clamp(0.0, 1.0);
    p.dist(a + ab * t)
}

fn orient(a: Vec2, b: Vec2, c: Vec2) -> f64 {
    (b - a).cross(c - a)
}

fn on_segment(a: Vec2, b: Vec2, p: Vec2) -> bool {
    p.x >= a.x.min(b.x) && p.x <= a.x.max(b.x) && p.y >= a.y.min(b.y) && p.y <= a.y.max(b.y)
}

/// True when the closed segments `[a, b]` and `[c, d]` share a point.
pub fn segments_intersect(a: Vec2, b: Vec2, c: Vec2, d: Vec2) -> bool {
    let d1 = orient(c, d, a);
    let d2 = orient(c, d, b);
    let d3 = orient(a, b, c);
    let d4 = orient(a, b, d);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    (d1 == 0.0 && on_segment(c, d, a))
        || (d2 == 0.0 && on_segment(c, d, b))
        || (d3 == 0.0 && on_segment(a, b, c))
        || (d4 == 0.0 && on_segment(a, b, d))
}

pub fn segment_segment_distance(a: Vec2, b: Vec2, c: Vec2, d: Vec2) -> f64 {
    if segments_intersect(a, b, c, d) {
        return 0.0;
    }
    point_segment_distance(a, c, d)
        .min(point_segment_distance(b, c, d))
        .min(point_segment_distance(c, a, b))
        .min(point_segment_distance(d, a, b))
}

/// A convex region of the workspace.
///
/// Polygons are stored counter-clockwise; [`Shape::polygon`] normalizes the
/// winding and rejects non-convex input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape {
    Circle { center: Vec2, radius: f64 },
    Rect { min: Vec2, max: Vec2 },
    Polygon { vertices: Vec<Vec2> },
}

impl Shape {
    pub fn circle(center: Vec2, radius: f64) -> Shape {
        Shape::Circle { center, radius }
    }

    pub fn rect(min: Vec2, max: Vec2) -> Shape {
        Shape::Rect { min, max }
    }

    /// Builds a convex polygon, returning `None` for fewer than three
    /// vertices, zero area or a non-convex vertex chain.
    pub fn polygon(mut vertices: Vec<Vec2>) -> Option<Shape> {
        if vertices.len() < 3 || vertices.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let area2: f64 = (0..vertices.len())
            .map(|i| vertices[i].cross(vertices[(i + 1) % vertices.len()]))
            .sum();
        if area2.abs() < 1e-12 {
            return None;
        }
        if area2 < 0.0 {
            vertices.reverse();
        }
        let n = vertices.len();
        for i in 0..n {
            if orient(vertices[i], vertices[(i + 1) % n], vertices[(i + 2) % n]) < -1e-12 {
                return None;
            }
        }
        Some(Shape::Polygon { vertices })
    }

    /// Checks the structural invariants (positive radius, ordered corners,
    /// convex counter-clockwise polygon).
    pub fn is_valid(&self) -> bool {
        match self {
            Shape::Circle { center, radius } => center.is_finite() && radius.is_finite() && *radius > 0.0,
            Shape::Rect { min, max } => min.is_finite() && max.is_finite() && min.x < max.x && min.y < max.y,
            Shape::Polygon { vertices } => Shape::polygon(vertices.clone()).as_ref() == Some(self),
        }
    }

    /// Corner points for rectangles and polygons; empty for circles.
    pub fn vertices(&self) -> Vec<Vec2> {
        match self {
            Shape::Circle { .. } => Vec::new(),
            Shape::Rect { min, max } => vec![
                *min,
                Vec2::new(max.x, min.y),
                *max,
                Vec2::new(min.x, max.y),
            ],
            Shape::Polygon { vertices } => vertices.clone(),
        }
    }

    /// Area centroid.
    pub fn center(&self) -> Vec2 {
        match self {
            Shape::Circle { center, .. } => *center,
            Shape::Rect { min, max } => min.lerp(*max, 0.5),
            Shape::Polygon { vertices } => {
                let n = vertices.len();
                let mut area2 = 0.0;
                let mut c = Vec2::ZERO;
                for i in 0..n {
                    let (p, q) = (vertices[i], vertices[(i + 1) % n]);
                    let w = p.cross(q);
                    area2 += w;
                    c += (p + q) * w;
                }
                c * (1.0 / (3.0 * area2))
            }
        }
    }

    pub fn translated(&self, d: Vec2) -> Shape {
        match self {
            Shape::Circle { center, radius } => Shape::Circle { center: *center + d, radius: *radius },
            Shape::Rect { min, max } => Shape::Rect { min: *min + d, max: *max + d },
            Shape::Polygon { vertices } => Shape::Polygon {
                vertices: vertices.iter().map(|v| *v + d).collect(),
            },
        }
    }

    /// Axis-aligned bounds as `(min, max)`.
    pub fn bounds(&self) -> (Vec2, Vec2) {
        match self {
            Shape::Circle { center, radius } => (
                Vec2::new(center.x - radius, center.y - radius),
                Vec2::new(center.x + radius, center.y + radius),
            ),
            Shape::Rect { min, max } => (*min, *max),
            Shape::Polygon { vertices } => {
                let mut lo = Vec2::new(f64::INFINITY, f64::INFINITY);
                let mut hi = Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
                for v in vertices {
                    lo = Vec2::new(lo.x.min(v.x), lo.y.min(v.y));
                    hi = Vec2::new(hi.x.max(v.x), hi.y.max(v.y));
                }
                (lo, hi)
            }
        }
    }

    /// Largest distance from [`Shape::center`] to any point of the shape.
    pub fn bounding_radius(&self) -> f64 {
        match self {
            Shape::Circle { radius, .. } => *radius,
            _ => {
                let c = self.center();
                self.vertices().iter().map(|v| v.dist(c)).fold(0.0, f64::max)
            }
        }
    }

    /// Largest extent along any direction (diameter of the shape).
    pub fn width(&self) -> f64 {
        match self {
            Shape::Circle { radius, .. } => 2.0 * radius,
            _ => {
                let vs = self.vertices();
                let mut w: f64 = 0.0;
                for a in &vs {
                    for b in &vs {
                        w = w.max(a.dist(*b));
                    }
                }
                w
            }
        }
    }

    fn edges(&self) -> Vec<(Vec2, Vec2)> {
        let vs = self.vertices();
        (0..vs.len()).map(|i| (vs[i], vs[(i + 1) % vs.len()])).collect()
    }

    pub fn contains(&self, p: Vec2) -> bool {
        match self {
            Shape::Circle { center, radius } => p.dist(*center) <= *radius,
            Shape::Rect { min, max } => p.x >= min.x && p.x <= max.x && p.y >= min.y && p.y <= max.y,
            Shape::Polygon { .. } => self.edges().iter().all(|(a, b)| orient(*a, *b, p) >= 0.0),
        }
    }

    /// Euclidean distance from `p` to the region (zero inside).
    pub fn distance_to_point(&self, p: Vec2) -> f64 {
        match self {
            Shape::Circle { center, radius } => (p.dist(*center) - radius).max(0.0),
            Shape::Rect { min, max } => {
                let dx = (min.x - p.x).max(0.0).max(p.x - max.x);
                let dy = (min.y - p.y).max(0.0).max(p.y - max.y);
                dx.hypot(dy)
            }
            Shape::Polygon { .. } => {
                if self.contains(p) {
                    0.0
                } else {
                    self.edges()
                        .iter()
                        .map(|(a, b)| point_segment_distance(p, *a, *b))
                        .fold(f64::INFINITY, f64::min)
                }
            }
        }
    }

    /// Distance from `p` to the boundary curve, for points on either side.
    pub fn distance_to_boundary(&self, p: Vec2) -> f64 {
        match self {
            Shape::Circle { center, radius } => (p.dist(*center) - radius).abs(),
            _ => self
                .edges()
                .iter()
                .map(|(a, b)| point_segment_distance(p, *a, *b))
                .fold(f64::INFINITY, f64::min),
        }
    }

    /// Distance between the closed segment `[a, b]` and the region.
    pub fn distance_to_segment(&self, a: Vec2, b: Vec2) -> f64 {
        match self {
            Shape::Circle { center, radius } => (point_segment_distance(*center, a, b) - radius).max(0.0),
            _ => {
                if self.contains(a) || self.contains(b) {
                    return 0.0;
                }
                self.edges()
                    .iter()
                    .map(|(p, q)| segment_segment_distance(a, b, *p, *q))
                    .fold(f64::INFINITY, f64::min)
            }
        }
    }

    /// Distance between two regions (zero when they overlap).
    pub fn distance_to_shape(&self, other: &Shape) -> f64 {
        match (self, other) {
            (Shape::Circle { center: c1, radius: r1 }, Shape::Circle { center: c2, radius: r2 }) => {
                (c1.dist(*c2) - r1 - r2).max(0.0)
            }
            (Shape::Circle { center, radius }, poly) | (poly, Shape::Circle { center, radius }) => {
                (poly.distance_to_point(*center) - radius).max(0.0)
            }
            _ => {
                let (ea, eb) = (self.edges(), other.edges());
                if self.vertices().iter().any(|v| other.contains(*v))
                    || other.vertices().iter().any(|v| self.contains(*v))
                {
                    return 0.0;
                }
                let mut d = f64::INFINITY;
                for (p, q) in &ea {
                    for (r, s) in &eb {
                        d = d.min(segment_segment_distance(*p, *q, *r, *s));
                    }
                }
                d
            }
        }
    }

    /// Point where the ray from the center at angle `theta` leaves the shape.
    pub fn boundary_point(&self, theta: f64) -> Vec2 {
        let dir = Vec2::from_angle(theta);
        match self {
            Shape::Circle { center, radius } => *center + dir * *radius,
            _ => {
                let c = self.center();
                let mut best = f64::INFINITY;
                for (a, b) in self.edges() {
                    let e = b - a;
                    let denom = dir.cross(e);
                    if denom.abs() < 1e-15 {
                        continue;
                    }
                    let t = (a - c).cross(e) / denom;
                    let u = (a - c).cross(dir) / denom;
                    if t >= 0.0 && (-1e-12..=1.0 + 1e-12).contains(&u) {
                        best = best.min(t);
                    }
                }
                c + dir * best
            }
        }
    }

    /// True when every point of the shape lies in `[0, 1]²`.
    pub fn within_unit_square(&self) -> bool {
        let (lo, hi) = self.bounds();
        lo.x >= 0.0 && lo.y >= 0.0 && hi.x <= 1.0 && hi.y <= 1.0
    }
}
