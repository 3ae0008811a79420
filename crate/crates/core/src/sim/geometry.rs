//! 2D geometry primitives: vectors, polylines with arclength, polygons,
//! and the separating-axis overlap test for oriented rectangles.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn from_angle(theta: f64) -> Self {
        Self::new(theta.cos(), theta.sin())
    }

    pub fn dot(self, o: Self) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn cross(self, o: Self) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn dist(self, o: Self) -> f64 {
        (self - o).norm()
    }

    pub fn normalized(self) -> Self {
        let n = self.norm();
        if n > 1e-12 {
            self * (1.0 / n)
        } else {
            Self::new(1.0, 0.0)
        }
    }

    /// Right-hand perpendicular (clockwise rotation by 90 degrees).
    pub fn perp_right(self) -> Self {
        Self::new(self.y, -self.x)
    }

    pub fn rotate(self, theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        Self::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    pub fn angle(self) -> f64 {
        self.y.atan2(self.x)
    }
}

impl std::ops::Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl std::ops::Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl std::ops::Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

impl std::ops::Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, k: f64) -> Vec2 {
        Vec2::new(self.x * k, self.y * k)
    }
}

/// Wrap an angle to (-pi, pi].
pub fn wrap_angle(theta: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut a = theta % two_pi;
    if a <= -std::f64::consts::PI {
        a += two_pi;
    } else if a > std::f64::consts::PI {
        a -= two_pi;
    }
    a
}

/// Piecewise-linear path with cumulative arclength.
#[derive(Debug, Clone)]
pub struct Polyline {
    pts: Vec<Vec2>,
    cum: Vec<f64>,
}

impl Polyline {
    pub fn new(pts: Vec<Vec2>) -> Self {
        assert!(pts.len() >= 2, "polyline needs at least two points");
        let mut cum = Vec::with_capacity(pts.len());
        let mut acc = 0.0;
        cum.push(0.0);
        for i in 1..pts.len() {
            let d = pts[i].dist(pts[i - 1]);
            assert!(d > 1e-9, "polyline points must be strictly ordered");
            acc += d;
            cum.push(acc);
        }
        Self { pts, cum }
    }

    pub fn points(&self) -> &[Vec2] {
        &self.pts
    }

    pub fn length(&self) -> f64 {
        *self.cum.last().unwrap()
    }

    fn segment_of(&self, s: f64) -> (usize, f64) {
        let s = s.clamp(0.0, self.length());
        // binary search the cumulative table
        let mut lo = 0;
        let mut hi = self.cum.len() - 1;
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if self.cum[mid] <= s {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let seg_len = self.cum[lo + 1] - self.cum[lo];
        let t = if seg_len > 1e-12 {
            (s - self.cum[lo]) / seg_len
        } else {
            0.0
        };
        (lo, t)
    }

    pub fn point_at(&self, s: f64) -> Vec2 {
        let (i, t) = self.segment_of(s);
        self.pts[i] + (self.pts[i + 1] - self.pts[i]) * t
    }

    pub fn heading_at(&self, s: f64) -> f64 {
        let (i, _) = self.segment_of(s);
        (self.pts[i + 1] - self.pts[i]).angle()
    }

    /// Project `p` onto the path restricted to arclengths [s_lo, s_hi];
    /// returns (arclength, signed lateral offset). Positive lateral means
    /// p is to the left of the travel direction.
    pub fn project_in_range(&self, p: Vec2, s_lo: f64, s_hi: f64) -> (f64, f64) {
        let s_lo = s_lo.clamp(0.0, self.length());
        let s_hi = s_hi.clamp(0.0, self.length());
        let (i_lo, _) = self.segment_of(s_lo);
        let (i_hi, _) = self.segment_of(s_hi);
        let mut best = (s_lo, f64::MAX, 0.0);
        for i in i_lo..=i_hi.min(self.pts.len() - 2) {
            let a = self.pts[i];
            let b = self.pts[i + 1];
            let ab = b - a;
            let len2 = ab.dot(ab);
            let t = if len2 > 1e-12 {
                ((p - a).dot(ab) / len2).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let q = a + ab * t;
            let d2 = (p - q).dot(p - q);
            if d2 < best.1 {
                let s = self.cum[i] + ab.norm() * t;
                let lateral = ab.normalized().cross(p - q);
                best = (s, d2, lateral);
            }
        }
        (best.0, best.2)
    }

    /// All transversal intersections with another polyline, returned as
    /// (arclength on self, arclength on other). Crossings shallower than
    /// `min_angle` radians are skipped.
    pub fn crossings(&self, other: &Polyline, min_angle: f64) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        for i in 0..self.pts.len() - 1 {
            let (a1, a2) = (self.pts[i], self.pts[i + 1]);
            let da = a2 - a1;
            for j in 0..other.pts.len() - 1 {
                let (b1, b2) = (other.pts[j], other.pts[j + 1]);
                let db = b2 - b1;
                let denom = da.cross(db);
                let angle = denom.abs().atan2(da.dot(db).abs());
                if angle < min_angle {
                    continue;
                }
                let t = (b1 - a1).cross(db) / denom;
                let u = (b1 - a1).cross(da) / denom;
                if (0.0..=1.0).contains(&t) && (0.0..=1.0).contains(&u) {
                    out.push((
                        self.cum[i] + da.norm() * t,
                        other.cum[j] + db.norm() * u,
                    ));
                }
            }
        }
        out
    }

    /// Rotate by `rot` about the origin, then translate by `t`.
    pub fn transformed(&self, rot: f64, t: Vec2) -> Polyline {
        Polyline::new(self.pts.iter().map(|p| p.rotate(rot) + t).collect())
    }

    /// Corridor polygon: the path buffered by `half_width` on both sides.
    pub fn corridor(&self, half_width: f64) -> Vec<Vec2> {
        let n = self.pts.len();
        let mut left = Vec::with_capacity(n);
        let mut right = Vec::with_capacity(n);
        for i in 0..n {
            let dir = if i == 0 {
                (self.pts[1] - self.pts[0]).normalized()
            } else if i == n - 1 {
                (self.pts[n - 1] - self.pts[n - 2]).normalized()
            } else {
                ((self.pts[i + 1] - self.pts[i - 1]) * 0.5).normalized()
            };
            let r = dir.perp_right();
            right.push(self.pts[i] + r * half_width);
            left.push(self.pts[i] - r * half_width);
        }
        right.extend(left.into_iter().rev());
        right
    }
}

/// Even-odd point-in-polygon test.
pub fn point_in_polygon(p: Vec2, poly: &[Vec2]) -> bool {
    let mut inside = false;
    let n = poly.len();
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (poly[i], poly[j]);
        if (a.y > p.y) != (b.y > p.y) {
            let x_cross = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
            if p.x < x_cross {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

/// Oriented rectangle: center, heading, full extents.
#[derive(Debug, Clone, Copy)]
pub struct Obb {
    pub center: Vec2,
    pub heading: f64,
    pub width: f64,
    pub length: f64,
}

impl Obb {
    pub fn corners(&self) -> [Vec2; 4] {
        let fwd = Vec2::from_angle(self.heading);
        let side = fwd.perp_right();
        let hl = self.length / 2.0;
        let hw = self.width / 2.0;
        [
            self.center + fwd * hl + side * hw,
            self.center + fwd * hl - side * hw,
            self.center - fwd * hl - side * hw,
            self.center - fwd * hl + side * hw,
        ]
    }

    /// Separating-axis overlap test between two oriented rectangles.
    pub fn overlaps(&self, other: &Obb) -> bool {
        let ca = self.corners();
        let cb = other.corners();
        let axes = [
            Vec2::from_angle(self.heading),
            Vec2::from_angle(self.heading).perp_right(),
            Vec2::from_angle(other.heading),
            Vec2::from_angle(other.heading).perp_right(),
        ];
        for axis in axes {
            let proj = |pts: &[Vec2; 4]| {
                let mut lo = f64::MAX;
                let mut hi = f64::MIN;
                for &p in pts {
                    let v = p.dot(axis);
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
                (lo, hi)
            };
            let (alo, ahi) = proj(&ca);
            let (blo, bhi) = proj(&cb);
            if ahi < blo || bhi < alo {
                return false;
            }
        }
        true
    }

    pub fn contains_point(&self, p: Vec2) -> bool {
        let rel = p - self.center;
        let fwd = Vec2::from_angle(self.heading);
        let lon = rel.dot(fwd);
        let lat = rel.dot(fwd.perp_right());
        lon.abs() <= self.length / 2.0 && lat.abs() <= self.width / 2.0
    }
}

/// Cubic Bezier sampled at roughly 1 m spacing, with tangent directions at
/// both ends. Control arms extend 40% of the endpoint distance.
pub fn bezier_path(p0: Vec2, heading0: f64, p1: Vec2, heading1: f64) -> Vec<Vec2> {
    let d = p0.dist(p1);
    let c0 = p0 + Vec2::from_angle(heading0) * (0.4 * d);
    let c1 = p1 - Vec2::from_angle(heading1) * (0.4 * d);
    // crude upper bound on length for sample count
    let approx_len = p0.dist(c0) + c0.dist(c1) + c1.dist(p1);
    let n = (approx_len.ceil() as usize).max(8);
    (0..=n)
        .map(|i| {
            let t = i as f64 / n as f64;
            let mt = 1.0 - t;
            p0 * (mt * mt * mt)
                + c0 * (3.0 * mt * mt * t)
                + c1 * (3.0 * mt * t * t)
                + p1 * (t * t * t)
        })
        .collect()
}

/// Straight segment sampled at roughly `step` spacing.
pub fn straight_path(from: Vec2, to: Vec2, step: f64) -> Vec<Vec2> {
    let len = from.dist(to);
    let n = ((len / step).ceil() as usize).max(1);
    (0..=n)
        .map(|i| from + (to - from) * (i as f64 / n as f64))
        .collect()
}

/// Circular arc sampled at roughly 1 m spacing; positive sweep is
/// counterclockwise.
pub fn arc_path(center: Vec2, radius: f64, start_angle: f64, sweep: f64) -> Vec<Vec2> {
    let arc_len = radius * sweep.abs();
    let n = (arc_len.ceil() as usize).max(4);
    (0..=n)
        .map(|i| {
            let a = start_angle + sweep * (i as f64 / n as f64);
            center + Vec2::from_angle(a) * radius
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polyline_arclength_and_projection() {
        let pl = Polyline::new(vec![
            Vec2::new(0.0, 0.0),
            Vec2::new(10.0, 0.0),
            Vec2::new(10.0, 10.0),
        ]);
        assert!((pl.length() - 20.0).abs() < 1e-12);
        assert_eq!(pl.point_at(5.0), Vec2::new(5.0, 0.0));
        assert_eq!(pl.point_at(15.0), Vec2::new(10.0, 5.0));
        let (s, lat) = pl.project_in_range(Vec2::new(5.0, 1.0), 0.0, 20.0);
        assert!((s - 5.0).abs() < 1e-9);
        assert!((lat - 1.0).abs() < 1e-9, "lateral {lat}");
    }

    #[test]
    fn crossings_detect_perpendicular_intersection() {
        let a = Polyline::new(vec![Vec2::new(-5.0, 0.0), Vec2::new(5.0, 0.0)]);
        let b = Polyline::new(vec![Vec2::new(0.0, -5.0), Vec2::new(0.0, 5.0)]);
        let xs = a.crossings(&b, 0.2);
        assert_eq!(xs.len(), 1);
        assert!((xs[0].0 - 5.0).abs() < 1e-9);
        assert!((xs[0].1 - 5.0).abs() < 1e-9);
    }

    #[test]
    fn crossings_skip_shallow_angles() {
        let a = Polyline::new(vec![Vec2::new(0.0, 0.0), Vec2::new(100.0, 1.0)]);
        let b = Polyline::new(vec![Vec2::new(0.0, 1.0), Vec2::new(100.0, 0.0)]);
        assert!(a.crossings(&b, 0.2).is_empty());
    }

    #[test]
    fn obb_identical_and_distant() {
        let a = Obb {
            center: Vec2::new(3.0, 4.0),
            heading: 0.7,
            width: 2.0,
            length: 4.5,
        };
        assert!(a.overlaps(&a));
        let far = Obb {
            center: Vec2::new(103.0, 4.0),
            ..a
        };
        assert!(!a.overlaps(&far));
    }

    #[test]
    fn wrap_angle_range() {
        assert!((wrap_angle(3.0 * std::f64::consts::PI) - std::f64::consts::PI).abs() < 1e-12);
        assert!((wrap_angle(-3.0 * std::f64::consts::PI) - std::f64::consts::PI).abs() < 1e-12);
        assert_eq!(wrap_angle(0.5), 0.5);
    }
}
