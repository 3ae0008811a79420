//! Scenario blueprints: lane geometry, routes, drivable regions, and ego
//! scripting for each scenario family.

use super::config::ScenarioId;
use super::geometry::{arc_path, bezier_path, straight_path, Polyline, Vec2};
use super::map::{Conflict, Lane, LaneMap, Region, Route, LANE_WIDTH};

/// A scenario's static description: the map plus ego scripting and spawn
/// constraints.
#[derive(Debug, Clone)]
pub struct Blueprint {
    pub scenario: ScenarioId,
    pub map: LaneMap,
    pub ego_route: usize,
    pub ego_start_s: f64,
    pub ego_goal_s: f64,
    /// Route indices background traffic may spawn on.
    pub background_routes: Vec<usize>,
    /// Deterministic scripted vehicles placed before random spawning.
    pub scripted: Vec<ScriptedVehicle>,
    /// Restrict random background spawns to this arclength band.
    pub spawn_s_range: Option<(f64, f64)>,
    /// Background vehicles hold still (toy scenario filler).
    pub background_parked: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct ScriptedVehicle {
    pub route: usize,
    pub s: f64,
    pub target_speed: f64,
    pub length: f64,
    pub width: f64,
}

impl Blueprint {
    /// Rigid motion of the whole scenario (map and scripted content).
    pub fn transformed(&self, rot: f64, t: Vec2) -> Blueprint {
        Blueprint {
            map: self.map.transformed(rot, t),
            ..self.clone()
        }
    }
}

/// Blueprints are immutable per scenario; build once and share.
pub fn blueprint_cached(id: ScenarioId) -> std::sync::Arc<Blueprint> {
    use std::collections::HashMap;
    use std::sync::{Arc, Mutex, OnceLock};
    static CACHE: OnceLock<Mutex<HashMap<ScenarioId, Arc<Blueprint>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().expect("blueprint cache");
    guard
        .entry(id)
        .or_insert_with(|| Arc::new(build_blueprint(id)))
        .clone()
}

pub fn build_blueprint(id: ScenarioId) -> Blueprint {
    match id {
        ScenarioId::ToyLead => toy_lead(),
        ScenarioId::TMerge => t_junction(id),
        ScenarioId::TLeft => t_junction(id),
        ScenarioId::IntCross | ScenarioId::IntLeft => four_way(id),
        ScenarioId::FiveWay => five_way(),
        ScenarioId::Roundabout => roundabout(),
    }
}

const LEG_LEN: f64 = 60.0;
/// How far before the junction boundary the ego starts.
const EGO_APPROACH_M: f64 = 30.0;
/// How far into the exit leg the goal sits.
const EGO_EXIT_M: f64 = 20.0;

// ---- generic junction machinery -------------------------------------------

struct LegSpec {
    angle_deg: f64,
    lanes_per_dir: usize,
}

struct Movement {
    in_leg: usize,
    in_lane: usize,
    out_leg: usize,
    out_lane: usize,
    /// spawnable by background traffic
    background: bool,
}

struct JunctionBuilder {
    center: Vec2,
    radius: f64,
    legs: Vec<LegSpec>,
    lanes: Vec<Lane>,
    successors: Vec<Vec<usize>>,
    inbound_ids: Vec<Vec<Option<usize>>>,
    outbound_ids: Vec<Vec<Option<usize>>>,
    routes: Vec<Route>,
    background_routes: Vec<usize>,
    ego_route: Option<usize>,
}

impl JunctionBuilder {
    fn new(center: Vec2, radius: f64, legs: Vec<LegSpec>) -> Self {
        let inbound_ids = legs.iter().map(|l| vec![None; l.lanes_per_dir]).collect();
        let outbound_ids = legs.iter().map(|l| vec![None; l.lanes_per_dir]).collect();
        Self {
            center,
            radius,
            legs,
            lanes: Vec::new(),
            successors: Vec::new(),
            inbound_ids,
            outbound_ids,
            routes: Vec::new(),
            background_routes: Vec::new(),
            ego_route: None,
        }
    }

    fn leg_dir(&self, leg: usize) -> Vec2 {
        Vec2::from_angle(self.legs[leg].angle_deg.to_radians())
    }

    fn push_lane(&mut self, pts: Vec<Vec2>) -> usize {
        self.lanes.push(Lane {
            center: Polyline::new(pts),
            width: LANE_WIDTH,
        });
        self.successors.push(Vec::new());
        self.lanes.len() - 1
    }

    /// Lane carrying traffic toward the junction on `leg`, k = 0 innermost.
    fn inbound(&mut self, leg: usize, k: usize) -> usize {
        if let Some(id) = self.inbound_ids[leg][k] {
            return id;
        }
        let u = self.leg_dir(leg);
        let off = u.perp_right() * (-(0.5 + k as f64) * LANE_WIDTH);
        let outer = self.center + u * (self.radius + LEG_LEN) + off;
        let inner = self.center + u * self.radius + off;
        let id = self.push_lane(straight_path(outer, inner, 2.0));
        self.inbound_ids[leg][k] = Some(id);
        id
    }

    fn outbound(&mut self, leg: usize, k: usize) -> usize {
        if let Some(id) = self.outbound_ids[leg][k] {
            return id;
        }
        let u = self.leg_dir(leg);
        let off = u.perp_right() * ((0.5 + k as f64) * LANE_WIDTH);
        let inner = self.center + u * self.radius + off;
        let outer = self.center + u * (self.radius + LEG_LEN) + off;
        let id = self.push_lane(straight_path(inner, outer, 2.0));
        self.outbound_ids[leg][k] = Some(id);
        id
    }

    fn movement(&mut self, m: &Movement) -> usize {
        let in_id = self.inbound(m.in_leg, m.in_lane);
        let out_id = self.outbound(m.out_leg, m.out_lane);
        let entry = *self.lanes[in_id].center.points().last().unwrap();
        let entry_heading = (-self.leg_dir(m.in_leg)).angle();
        let exit = self.lanes[out_id].center.points()[0];
        let exit_heading = self.leg_dir(m.out_leg).angle();
        let conn_pts = bezier_path(entry, entry_heading, exit, exit_heading);
        let conn_id = self.push_lane(conn_pts);
        self.successors[in_id].push(conn_id);
        self.successors[conn_id].push(out_id);

        let path = stitch(&[
            self.lanes[in_id].center.points(),
            self.lanes[conn_id].center.points(),
            self.lanes[out_id].center.points(),
        ]);
        self.routes.push(Route {
            name: format!(
                "leg{}l{}_to_leg{}l{}",
                m.in_leg, m.in_lane, m.out_leg, m.out_lane
            ),
            lanes: vec![in_id, conn_id, out_id],
            path: Polyline::new(path),
        });
        let route_id = self.routes.len() - 1;
        if m.background {
            self.background_routes.push(route_id);
        }
        route_id
    }

    fn drivable_and_markings(&self) -> (Vec<Region>, Vec<Vec<Vec2>>) {
        let mut regions = vec![Region::Disc {
            center: self.center,
            radius: self.radius + 1.0,
        }];
        let mut markings = Vec::new();
        for (i, leg) in self.legs.iter().enumerate() {
            let u = Vec2::from_angle(leg.angle_deg.to_radians());
            let r = u.perp_right();
            let half = leg.lanes_per_dir as f64 * LANE_WIDTH;
            let a = self.center + u * self.radius;
            let b = self.center + u * (self.radius + LEG_LEN);
            regions.push(Region::Polygon(vec![
                a + r * half,
                b + r * half,
                b + r * (-half),
                a + r * (-half),
            ]));
            let _ = i;
            // center line between directions
            markings.push(vec![a, b]);
            // separators between same-direction lanes
            for k in 1..leg.lanes_per_dir {
                let off = r * (k as f64 * LANE_WIDTH);
                markings.push(vec![a + off, b + off]);
                let off = r * (-(k as f64) * LANE_WIDTH);
                markings.push(vec![a + off, b + off]);
            }
        }
        (regions, markings)
    }

    fn finish(self, scenario: ScenarioId, extra_conflicts: Vec<Conflict>) -> Blueprint {
        let (drivable, markings) = self.drivable_and_markings();
        let ego_route = self.ego_route.expect("ego route set");
        let map = LaneMap::new(
            self.lanes,
            self.successors,
            drivable,
            markings,
            self.routes,
            extra_conflicts,
        );
        let total = map.routes[ego_route].path.length();
        Blueprint {
            scenario,
            map,
            ego_route,
            ego_start_s: LEG_LEN - EGO_APPROACH_M,
            ego_goal_s: total - LEG_LEN + EGO_EXIT_M,
            background_routes: self.background_routes,
            scripted: Vec::new(),
            spawn_s_range: None,
            background_parked: false,
        }
    }
}

fn stitch(parts: &[&[Vec2]]) -> Vec<Vec2> {
    let mut out: Vec<Vec2> = Vec::new();
    for part in parts {
        for &p in *part {
            if out.last().map(|q| q.dist(p) < 0.05).unwrap_or(false) {
                continue;
            }
            out.push(p);
        }
    }
    out
}

// ---- concrete scenarios ----------------------------------------------------

/// T-junction: main road east-west (two lanes per direction), single-lane
/// stem from the south. The ego either merges right (t_merge) or turns
/// left (t_left).
fn t_junction(id: ScenarioId) -> Blueprint {
    let legs = vec![
        LegSpec { angle_deg: 0.0, lanes_per_dir: 2 },   // 0: east
        LegSpec { angle_deg: 180.0, lanes_per_dir: 2 }, // 1: west
        LegSpec { angle_deg: -90.0, lanes_per_dir: 1 }, // 2: south stem
    ];
    let mut b = JunctionBuilder::new(Vec2::new(0.0, 0.0), 14.0, legs);
    for k in 0..2 {
        for (i, o) in [(0usize, 1usize), (1, 0)] {
            b.movement(&Movement {
                in_leg: i,
                in_lane: k,
                out_leg: o,
                out_lane: k,
                background: true,
            });
        }
    }
    let ego = match id {
        // right turn into the outer eastbound lane
        ScenarioId::TMerge => Movement {
            in_leg: 2,
            in_lane: 0,
            out_leg: 0,
            out_lane: 1,
            background: false,
        },
        // unprotected left across eastbound traffic into the inner
        // westbound lane
        _ => Movement {
            in_leg: 2,
            in_lane: 0,
            out_leg: 1,
            out_lane: 0,
            background: false,
        },
    };
    let ego_route = b.movement(&ego);
    b.ego_route = Some(ego_route);
    b.finish(id, Vec::new())
}

/// Four-way intersection, two lanes per direction. Background drives
/// through on both lanes and turns right from the outer lane; the ego
/// crosses straight (int_cross) or turns left (int_left).
fn four_way(id: ScenarioId) -> Blueprint {
    let legs = (0..4)
        .map(|i| LegSpec {
            angle_deg: i as f64 * 90.0,
            lanes_per_dir: 2,
        })
        .collect();
    // legs: 0 east, 1 north, 2 west, 3 south
    let mut b = JunctionBuilder::new(Vec2::new(0.0, 0.0), 14.0, legs);
    let opposite = [2usize, 3, 0, 1];
    let right_of = [1usize, 2, 3, 0]; // entering leg i, a right turn exits here
    for leg in 0..4 {
        for k in 0..2 {
            // skip the ego's own inbound lane so the queue ahead stays clear
            let is_ego_lane = leg == 3 && k == 0;
            b.movement(&Movement {
                in_leg: leg,
                in_lane: k,
                out_leg: opposite[leg],
                out_lane: k,
                background: !is_ego_lane,
            });
        }
        b.movement(&Movement {
            in_leg: leg,
            in_lane: 1,
            out_leg: right_of[leg],
            out_lane: 1,
            background: true,
        });
    }
    let ego = match id {
        ScenarioId::IntCross => Movement {
            in_leg: 3,
            in_lane: 0,
            out_leg: 1,
            out_lane: 0,
            background: false,
        },
        _ => Movement {
            in_leg: 3,
            in_lane: 0,
            out_leg: 2,
            out_lane: 0,
            background: false,
        },
    };
    let ego_route = b.movement(&ego);
    b.ego_route = Some(ego_route);
    b.finish(id, Vec::new())
}

/// Five evenly spaced single-lane legs; the ego takes the second exit
/// counterclockwise (a left-ish turn). Background connects each leg to the
/// two roughly opposite ones.
fn five_way() -> Blueprint {
    let legs = (0..5)
        .map(|i| LegSpec {
            angle_deg: -90.0 + i as f64 * 72.0,
            lanes_per_dir: 1,
        })
        .collect();
    let mut b = JunctionBuilder::new(Vec2::new(0.0, 0.0), 16.0, legs);
    for leg in 0..5usize {
        for hop in [2usize, 3] {
            let out = (leg + hop) % 5;
            let is_ego_move = leg == 0 && out == 2;
            if is_ego_move {
                continue;
            }
            b.movement(&Movement {
                in_leg: leg,
                in_lane: 0,
                out_leg: out,
                out_lane: 0,
                background: true,
            });
        }
    }
    let ego_route = b.movement(&Movement {
        in_leg: 0,
        in_lane: 0,
        out_leg: 2,
        out_lane: 0,
        background: false,
    });
    b.ego_route = Some(ego_route);
    b.finish(ScenarioId::FiveWay, Vec::new())
}

/// Single-lane roundabout of radius 18 m with four legs. Circulation is
/// counterclockwise; entries yield via explicit merge conflicts.
fn roundabout() -> Blueprint {
    const R: f64 = 18.0;
    /// angular offset between a leg and its merge/departure points
    const MERGE_DEG: f64 = 24.0;
    let center = Vec2::new(0.0, 0.0);
    let leg_angles = [0.0f64, 90.0, 180.0, 270.0]; // E N W S
    let approach = R + 10.0;

    let mut lanes: Vec<Lane> = Vec::new();
    let mut successors: Vec<Vec<usize>> = Vec::new();
    let push_lane = |lanes: &mut Vec<Lane>, successors: &mut Vec<Vec<usize>>, pts: Vec<Vec2>| {
        lanes.push(Lane {
            center: Polyline::new(pts),
            width: LANE_WIDTH,
        });
        successors.push(Vec::new());
        lanes.len() - 1
    };

    // per-leg inbound/outbound stubs
    let mut inbound = Vec::new();
    let mut outbound = Vec::new();
    for &deg in &leg_angles {
        let u = Vec2::from_angle(deg.to_radians());
        let off_in = u.perp_right() * (-0.5 * LANE_WIDTH);
        let off_out = u.perp_right() * (0.5 * LANE_WIDTH);
        inbound.push(push_lane(
            &mut lanes,
            &mut successors,
            straight_path(center + u * (approach + LEG_LEN) + off_in, center + u * approach + off_in, 2.0),
        ));
        outbound.push(push_lane(
            &mut lanes,
            &mut successors,
            straight_path(center + u * approach + off_out, center + u * (approach + LEG_LEN) + off_out, 2.0),
        ));
    }

    // routes: entry leg -> CCW arc -> exit leg
    let mut routes = Vec::new();
    let mut route_merge_s = Vec::new(); // (route, s at merge point) for conflicts
    let mut background_routes = Vec::new();
    let mut ego_route = None;
    for (i, &in_deg) in leg_angles.iter().enumerate() {
        for hop in 1..=3usize {
            let j = (i + hop) % 4;
            let out_deg = leg_angles[j];
            let u_in = Vec2::from_angle(in_deg.to_radians());
            let u_out = Vec2::from_angle(out_deg.to_radians());
            let merge_angle = (in_deg + MERGE_DEG).to_radians();
            let depart_angle = (out_deg - MERGE_DEG).to_radians();
            let entry_start = *lanes[inbound[i]].center.points().last().unwrap();
            let merge_pt = center + Vec2::from_angle(merge_angle) * R;
            let entry_pts = bezier_path(
                entry_start,
                (-u_in).angle(),
                merge_pt,
                merge_angle + std::f64::consts::FRAC_PI_2,
            );
            let mut sweep = depart_angle - merge_angle;
            while sweep <= 0.0 {
                sweep += 2.0 * std::f64::consts::PI;
            }
            let arc_pts = arc_path(center, R, merge_angle, sweep);
            let depart_pt = center + Vec2::from_angle(depart_angle) * R;
            let exit_start = lanes[outbound[j]].center.points()[0];
            let exit_pts = bezier_path(
                depart_pt,
                depart_angle + std::f64::consts::FRAC_PI_2,
                exit_start,
                u_out.angle(),
            );
            let conn_pts = stitch(&[&entry_pts, &arc_pts, &exit_pts]);
            let conn = push_lane(&mut lanes, &mut successors, conn_pts);
            successors[inbound[i]].push(conn);
            successors[conn].push(outbound[j]);
            let path = stitch(&[
                lanes[inbound[i]].center.points(),
                lanes[conn].center.points(),
                lanes[outbound[j]].center.points(),
            ]);
            let path = Polyline::new(path);
            let in_len = lanes[inbound[i]].center.length();
            // merge point sits at the end of the entry bezier
            let merge_s = in_len + Polyline::new(entry_pts.clone()).length();
            routes.push(Route {
                name: format!("rb_leg{i}_to_leg{j}"),
                lanes: vec![inbound[i], conn, outbound[j]],
                path,
            });
            let rid = routes.len() - 1;
            route_merge_s.push((rid, i, merge_s));
            if i == 3 && j == 1 {
                ego_route = Some(rid);
            } else {
                background_routes.push(rid);
            }
        }
    }

    // entries yield to circulating traffic: add a conflict at each merge
    // point against every route that passes it while circulating
    let mut extra = Vec::new();
    for &(rid, leg, merge_s) in &route_merge_s {
        let merge_pt = routes[rid].path.point_at(merge_s);
        for other in 0..routes.len() {
            if other == rid {
                continue;
            }
            // where does `other` pass the merge point, if at all?
            let (s_other, lateral) =
                routes[other]
                    .path
                    .project_in_range(merge_pt, 0.0, routes[other].path.length());
            if lateral.abs() < 1.0 {
                // only while `other` is already on the circle (past its own
                // entry, before its departure)
                let own_leg_of_other = route_merge_s
                    .iter()
                    .find(|&&(r, _, _)| r == other)
                    .map(|&(_, _, m)| m)
                    .unwrap_or(0.0);
                if s_other > own_leg_of_other - 1.0 {
                    extra.push(Conflict {
                        route_a: rid,
                        s_a: merge_s,
                        route_b: other,
                        s_b: s_other,
                    });
                }
            }
        }
        let _ = leg;
    }

    let drivable = vec![
        Region::Ring {
            center,
            r_in: R - LANE_WIDTH / 2.0 - 0.5,
            r_out: R + LANE_WIDTH / 2.0 + 0.5,
        },
        // legs
    ];
    let mut drivable = drivable;
    let mut markings: Vec<Vec<Vec2>> = Vec::new();
    for &deg in &leg_angles {
        let u = Vec2::from_angle(deg.to_radians());
        let r = u.perp_right();
        let a = center + u * (approach - 2.0);
        let bpt = center + u * (approach + LEG_LEN);
        drivable.push(Region::Polygon(vec![
            a + r * LANE_WIDTH,
            bpt + r * LANE_WIDTH,
            bpt + r * (-LANE_WIDTH),
            a + r * (-LANE_WIDTH),
        ]));
        markings.push(vec![a, bpt]);
        // entry/exit aprons connecting legs to the ring
        drivable.push(Region::Disc {
            center: center + u * (R + 3.0),
            radius: LANE_WIDTH + 4.0,
        });
    }

    let map = LaneMap::new(lanes, successors, drivable, markings, routes, extra);
    let ego_route = ego_route.expect("ego roundabout route");
    let total = map.routes[ego_route].path.length();
    Blueprint {
        scenario: ScenarioId::Roundabout,
        map,
        ego_route,
        ego_start_s: LEG_LEN - EGO_APPROACH_M,
        ego_goal_s: total - LEG_LEN + EGO_EXIT_M,
        background_routes,
        scripted: Vec::new(),
        spawn_s_range: None,
        background_parked: false,
    }
}

/// Single straight lane with a stopped lead vehicle past the goal line:
/// the ego must drive up quickly but cross the goal at a survivable gap.
fn toy_lead() -> Blueprint {
    let pts = straight_path(Vec2::new(0.0, 0.0), Vec2::new(90.0, 0.0), 2.0);
    let lane = Lane {
        center: Polyline::new(pts.clone()),
        width: LANE_WIDTH,
    };
    let drivable = vec![Region::Polygon(
        Polyline::new(pts).corridor(LANE_WIDTH / 2.0 + 0.25),
    )];
    let route = Route {
        name: "toy".into(),
        lanes: vec![0],
        path: lane.center.clone(),
    };
    let map = LaneMap::new(vec![lane], vec![vec![]], drivable, Vec::new(), vec![route], Vec::new());
    Blueprint {
        scenario: ScenarioId::ToyLead,
        map,
        ego_route: 0,
        ego_start_s: 5.0,
        ego_goal_s: 70.0,
        background_routes: vec![0],
        scripted: vec![ScriptedVehicle {
            route: 0,
            s: 75.0,
            target_speed: 0.0,
            length: 4.6,
            width: 1.9,
        }],
        spawn_s_range: Some((80.0, 87.0)),
        background_parked: true,
    }
}
