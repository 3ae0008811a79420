//! Background-traffic longitudinal control: intelligent-driver-model
//! car following plus binary gap acceptance at route crossings.

use super::map::LaneMap;
use super::vehicle::{VehicleState, ACCEL_MAX, ACCEL_MIN};

/// IDM constants. Comfortable braking stays well inside the hard actuator
/// bound so yields look smooth.
const IDM_ACCEL: f64 = 2.0;
const IDM_BRAKE: f64 = 3.0;
const MIN_GAP: f64 = 2.0;
const TIME_HEADWAY: f64 = 1.2;
/// Crossing traffic closer than this to a shared conflict point makes
/// conservative vehicles yield.
pub const YIELD_TTC_S: f64 = 4.0;
/// How far ahead conflicts and leads are considered.
const LOOKAHEAD_M: f64 = 40.0;

/// Free-road + interaction IDM acceleration.
pub fn idm_accel(v: f64, desired: f64, gap: Option<(f64, f64)>) -> f64 {
    let free = if desired <= 0.01 {
        if v > 0.0 {
            -IDM_BRAKE
        } else {
            0.0
        }
    } else {
        IDM_ACCEL * (1.0 - (v / desired).powi(4))
    };
    let interaction = match gap {
        Some((gap_m, closing)) => {
            let gap_m = gap_m.max(0.1);
            let desired_gap =
                MIN_GAP + v * TIME_HEADWAY + v * closing / (2.0 * (IDM_ACCEL * IDM_BRAKE).sqrt());
            -IDM_ACCEL * (desired_gap.max(0.0) / gap_m).powi(2)
        }
        None => 0.0,
    };
    (free + interaction).clamp(ACCEL_MIN, ACCEL_MAX)
}

/// Lead vehicle found in the forward corridor of a route.
pub fn find_lead(
    me: &VehicleState,
    others: &[VehicleState],
    map: &LaneMap,
) -> Option<(f64, f64)> {
    let route = &map.routes[me.route_id].path;
    let mut best: Option<(f64, f64)> = None;
    for other in others {
        let (s_proj, lateral) =
            route.project_in_range(other.position(), me.s, me.s + LOOKAHEAD_M);
        if lateral.abs() > (me.width + other.width) / 2.0 + 0.4 {
            continue;
        }
        // the window clamps at me.s: anything projecting there sits beside
        // or behind us
        if s_proj <= me.s + 0.3 {
            continue;
        }
        let gap = (s_proj - me.s - (me.length + other.length) / 2.0).max(0.05);
        // speed of the other projected on my travel direction
        let dir = route.heading_at(s_proj);
        let v_along = other.v * (other.psi - dir).cos();
        let closing = me.v - v_along;
        match best {
            Some((g, _)) if g <= gap => {}
            _ => best = Some((gap, closing)),
        }
    }
    best
}

/// Gap acceptance: should this vehicle yield at the next crossing?
///
/// Conservative drivers (aggressiveness < 0.5) stop short of a conflict
/// point whenever crossing traffic will reach it within [`YIELD_TTC_S`];
/// aggressive drivers never yield. Returns the stop-line distance when a
/// yield is required.
pub fn yield_point(
    me: &VehicleState,
    aggressiveness: f64,
    others: &[VehicleState],
    map: &LaneMap,
) -> Option<f64> {
    if aggressiveness >= 0.5 {
        return None;
    }
    for conflict in map.conflicts_ahead(me.route_id, me.s, LOOKAHEAD_M) {
        // already effectively inside the conflict: pushing through beats
        // stopping on top of it
        let dist_to_conflict = conflict.s_a - me.s;
        if dist_to_conflict < me.length {
            continue;
        }
        for other in others {
            if other.route_id != conflict.route_b {
                continue;
            }
            let remaining = conflict.s_b - other.s;
            if remaining < -other.length {
                continue; // already past
            }
            let ttc = if remaining <= 0.0 {
                0.0
            } else {
                remaining / other.v.max(0.5)
            };
            if ttc < YIELD_TTC_S {
                return Some(dist_to_conflict);
            }
        }
    }
    None
}

/// Full background policy: IDM toward the per-vehicle desired speed,
/// braking for corridor leads and accepted yields.
pub fn background_accel(
    me: &VehicleState,
    desired_speed: f64,
    aggressiveness: f64,
    others: &[VehicleState],
    map: &LaneMap,
) -> f64 {
    let lead = find_lead(me, others, map);
    let mut accel = idm_accel(me.v, desired_speed, lead);
    if let Some(dist) = yield_point(me, aggressiveness, others, map) {
        // treat the conflict as a standing obstacle: stop ~3 m short
        let stop_gap = (dist - 3.0).max(0.05);
        let brake = idm_accel(me.v, desired_speed, Some((stop_gap, me.v)));
        accel = accel.min(brake);
    }
    accel
}
