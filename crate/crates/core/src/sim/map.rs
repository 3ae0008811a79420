use super::geometry::{point_in_polygon, Polyline, Vec2};

pub const LANE_WIDTH: f64 = 3.5;

/// One lane: centerline polyline plus width.
#[derive(Debug, Clone)]
pub struct Lane {
    pub center: Polyline,
    pub width: f64,
}

/// A drivable region of the map.
#[derive(Debug, Clone)]
pub enum Region {
    Polygon(Vec<Vec2>),
    /// Annulus, used by the roundabout circulation area.
    Ring { center: Vec2, r_in: f64, r_out: f64 },
    Disc { center: Vec2, radius: f64 },
}

impl Region {
    pub fn contains(&self, p: Vec2) -> bool {
        match self {
            Region::Polygon(poly) => point_in_polygon(p, poly),
            Region::Ring { center, r_in, r_out } => {
                let d = p.dist(*center);
                d >= *r_in && d <= *r_out
            }
            Region::Disc { center, radius } => p.dist(*center) <= *radius,
        }
    }

    pub fn transformed(&self, rot: f64, t: Vec2) -> Region {
        match self {
            Region::Polygon(poly) => {
                Region::Polygon(poly.iter().map(|p| p.rotate(rot) + t).collect())
            }
            Region::Ring { center, r_in, r_out } => Region::Ring {
                center: center.rotate(rot) + t,
                r_in: *r_in,
                r_out: *r_out,
            },
            Region::Disc { center, radius } => Region::Disc {
                center: center.rotate(rot) + t,
                radius: *radius,
            },
        }
    }

    pub fn bounds(&self) -> (Vec2, Vec2) {
        match self {
            Region::Polygon(poly) => {
                let mut lo = Vec2::new(f64::MAX, f64::MAX);
                let mut hi = Vec2::new(f64::MIN, f64::MIN);
                for p in poly {
                    lo.x = lo.x.min(p.x);
                    lo.y = lo.y.min(p.y);
                    hi.x = hi.x.max(p.x);
                    hi.y = hi.y.max(p.y);
                }
                (lo, hi)
            }
            Region::Ring { center, r_out, .. } | Region::Disc { center, radius: r_out } => (
                Vec2::new(center.x - r_out, center.y - r_out),
                Vec2::new(center.x + r_out, center.y + r_out),
            ),
        }
    }
}

/// Named drivable path: a connected lane sequence stitched into one
/// polyline. Background traffic and the ego both follow routes.
#[derive(Debug, Clone)]
pub struct Route {
    pub name: String,
    pub lanes: Vec<usize>,
    pub path: Polyline,
}

/// A transversal crossing between two routes.
#[derive(Debug, Clone, Copy)]
pub struct Conflict {
    pub route_a: usize,
    pub s_a: f64,
    pub route_b: usize,
    pub s_b: f64,
}

/// Static scene description: lanes, their connectivity, drivable regions,
/// lane-marking segments, routes, and precomputed route crossings.
#[derive(Debug, Clone)]
pub struct LaneMap {
    pub lanes: Vec<Lane>,
    /// successor lane ids per lane
    pub successors: Vec<Vec<usize>>,
    pub drivable: Vec<Region>,
    /// 1-pixel marking polylines (lane separators), drawn as zeros over
    /// the drivable fill
    pub markings: Vec<Vec<Vec2>>,
    pub routes: Vec<Route>,
    pub conflicts: Vec<Conflict>,
}

/// Shallowest crossing angle still treated as a conflict; merges below this
/// are handled by corridor car-following instead.
const MIN_CONFLICT_ANGLE: f64 = 0.26; // ~15 degrees

impl LaneMap {
    pub fn new(
        lanes: Vec<Lane>,
        successors: Vec<Vec<usize>>,
        drivable: Vec<Region>,
        markings: Vec<Vec<Vec2>>,
        routes: Vec<Route>,
        extra_conflicts: Vec<Conflict>,
    ) -> Self {
        let mut conflicts = extra_conflicts;
        for a in 0..routes.len() {
            for b in 0..routes.len() {
                if a == b {
                    continue;
                }
                for (s_a, s_b) in routes[a].path.crossings(&routes[b].path, MIN_CONFLICT_ANGLE) {
                    conflicts.push(Conflict {
                        route_a: a,
                        s_a,
                        route_b: b,
                        s_b,
                    });
                }
            }
        }
        let map = Self {
            lanes,
            successors,
            drivable,
            markings,
            routes,
            conflicts,
        };
        map.validate();
        map
    }

    /// Every route must be a connected path in the lane graph.
    fn validate(&self) {
        for route in &self.routes {
            assert!(!route.lanes.is_empty(), "route {} has no lanes", route.name);
            for pair in route.lanes.windows(2) {
                assert!(
                    self.successors[pair[0]].contains(&pair[1]),
                    "route {} uses disconnected lanes {} -> {}",
                    route.name,
                    pair[0],
                    pair[1]
                );
            }
        }
    }

    pub fn contains_point(&self, p: Vec2) -> bool {
        self.drivable.iter().any(|r| r.contains(p))
    }

    pub fn bounds(&self) -> (Vec2, Vec2) {
        let mut lo = Vec2::new(f64::MAX, f64::MAX);
        let mut hi = Vec2::new(f64::MIN, f64::MIN);
        for r in &self.drivable {
            let (rlo, rhi) = r.bounds();
            lo.x = lo.x.min(rlo.x);
            lo.y = lo.y.min(rlo.y);
            hi.x = hi.x.max(rhi.x);
            hi.y = hi.y.max(rhi.y);
        }
        (lo, hi)
    }

    /// Rigid motion of the whole map; arclengths and conflicts are
    /// preserved. Used by the observation invariance checks.
    pub fn transformed(&self, rot: f64, t: Vec2) -> LaneMap {
        LaneMap {
            lanes: self
                .lanes
                .iter()
                .map(|l| Lane {
                    center: l.center.transformed(rot, t),
                    width: l.width,
                })
                .collect(),
            successors: self.successors.clone(),
            drivable: self.drivable.iter().map(|r| r.transformed(rot, t)).collect(),
            markings: self
                .markings
                .iter()
                .map(|m| m.iter().map(|p| p.rotate(rot) + t).collect())
                .collect(),
            routes: self
                .routes
                .iter()
                .map(|r| Route {
                    name: r.name.clone(),
                    lanes: r.lanes.clone(),
                    path: r.path.transformed(rot, t),
                })
                .collect(),
            conflicts: self.conflicts.clone(),
        }
    }

    /// Conflicts on `route` ahead of arclength `s`, nearest first.
    pub fn conflicts_ahead(&self, route: usize, s: f64, horizon: f64) -> Vec<Conflict> {
        let mut out: Vec<Conflict> = self
            .conflicts
            .iter()
            .filter(|c| c.route_a == route && c.s_a > s && c.s_a - s < horizon)
            .copied()
            .collect();
        out.sort_by(|a, b| a.s_a.partial_cmp(&b.s_a).unwrap());
        out
    }
}
