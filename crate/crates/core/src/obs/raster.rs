//! Ego-anchored BEV rasterization.
//!
//! Static map content (drivable fill, lane markings, the ego route
//! corridor) is prerendered once per scenario into world-frame bitmaps at
//! 0.25 m; per-step rasterization samples them at the rotated ego-frame
//! pixel centers and stamps vehicle footprints on top.

use super::{BevGrid, ObsConfig};
use crate::sim::geometry::Vec2;
use crate::sim::{Blueprint, LaneMap, World};
use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

const WORLD_RES: f64 = 0.25;
/// Margin around the drivable bounds, meters.
const WORLD_MARGIN: f64 = 40.0;

/// Prerendered world-frame bitmaps for one scenario.
pub struct WorldBitmaps {
    origin: Vec2,
    rows: usize,
    cols: usize,
    /// drivable area = 255, lane markings carved to 0
    map_channel: Vec<u8>,
    /// ego-route corridor dilated to lane width
    route_channel: Vec<u8>,
}

impl WorldBitmaps {
    pub fn build(map: &LaneMap, ego_route: usize) -> Self {
        let (lo, hi) = map.bounds();
        let origin = Vec2::new(lo.x - WORLD_MARGIN, lo.y - WORLD_MARGIN);
        let cols = ((hi.x - lo.x + 2.0 * WORLD_MARGIN) / WORLD_RES).ceil() as usize;
        let rows = ((hi.y - lo.y + 2.0 * WORLD_MARGIN) / WORLD_RES).ceil() as usize;
        let mut map_channel = vec![0u8; rows * cols];

        // drivable fill, restricted to each region's bounding box
        for region in &map.drivable {
            let (rlo, rhi) = region.bounds();
            let c0 = (((rlo.x - origin.x) / WORLD_RES).floor().max(0.0)) as usize;
            let c1 = ((((rhi.x - origin.x) / WORLD_RES).ceil()) as usize).min(cols);
            let r0 = (((rlo.y - origin.y) / WORLD_RES).floor().max(0.0)) as usize;
            let r1 = ((((rhi.y - origin.y) / WORLD_RES).ceil()) as usize).min(rows);
            for r in r0..r1 {
                for c in c0..c1 {
                    let p = Vec2::new(
                        origin.x + (c as f64 + 0.5) * WORLD_RES,
                        origin.y + (r as f64 + 0.5) * WORLD_RES,
                    );
                    if region.contains(p) {
                        map_channel[r * cols + c] = 255;
                    }
                }
            }
        }

        // markings: walk each polyline, carve single cells
        let carve = |p: Vec2, buf: &mut Vec<u8>, value: u8| {
            let c = ((p.x - origin.x) / WORLD_RES).floor() as isize;
            let r = ((p.y - origin.y) / WORLD_RES).floor() as isize;
            if r >= 0 && (r as usize) < rows && c >= 0 && (c as usize) < cols {
                buf[r as usize * cols + c as usize] = value;
            }
        };
        for marking in &map.markings {
            for seg in marking.windows(2) {
                let len = seg[0].dist(seg[1]);
                let n = (len / (WORLD_RES * 0.5)).ceil() as usize;
                for i in 0..=n {
                    let p = seg[0] + (seg[1] - seg[0]) * (i as f64 / n as f64);
                    carve(p, &mut map_channel, 0);
                }
            }
        }

        // ego route corridor: stamp discs of half lane width along the path
        let mut route_channel = vec![0u8; rows * cols];
        let path = &map.routes[ego_route].path;
        let half_w = crate::sim::LANE_WIDTH / 2.0;
        let stamp_r = (half_w / WORLD_RES).ceil() as isize;
        let mut s = 0.0;
        while s <= path.length() {
            let p = path.point_at(s);
            let pc = ((p.x - origin.x) / WORLD_RES).floor() as isize;
            let pr = ((p.y - origin.y) / WORLD_RES).floor() as isize;
            for dr in -stamp_r..=stamp_r {
                for dc in -stamp_r..=stamp_r {
                    let (r, c) = (pr + dr, pc + dc);
                    if r < 0 || c < 0 || r as usize >= rows || c as usize >= cols {
                        continue;
                    }
                    let cell = Vec2::new(
                        origin.x + (c as f64 + 0.5) * WORLD_RES,
                        origin.y + (r as f64 + 0.5) * WORLD_RES,
                    );
                    if cell.dist(p) <= half_w {
                        route_channel[r as usize * cols + c as usize] = 255;
                    }
                }
            }
            s += WORLD_RES * 0.5;
        }

        Self {
            origin,
            rows,
            cols,
            map_channel,
            route_channel,
        }
    }

    fn sample(&self, buf: &[u8], p: Vec2) -> u8 {
        // snap to a 1e-6 grid so 1-ulp transform noise cannot flip cells
        let qx = (p.x * 1e6).round() / 1e6;
        let qy = (p.y * 1e6).round() / 1e6;
        let c = ((qx - self.origin.x) / WORLD_RES).floor() as isize;
        let r = ((qy - self.origin.y) / WORLD_RES).floor() as isize;
        if r < 0 || c < 0 || r as usize >= self.rows || c as usize >= self.cols {
            return 0;
        }
        buf[r as usize * self.cols + c as usize]
    }

    pub fn sample_map(&self, p: Vec2) -> u8 {
        self.sample(&self.map_channel, p)
    }

    pub fn sample_route(&self, p: Vec2) -> u8 {
        self.sample(&self.route_channel, p)
    }
}

fn bitmaps_cached(blueprint: &Arc<Blueprint>) -> Arc<WorldBitmaps> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<WorldBitmaps>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().expect("bitmap cache");
    if guard.len() > 32 {
        guard.clear();
    }
    guard
        .entry(Arc::as_ptr(blueprint) as usize)
        .or_insert_with(|| Arc::new(WorldBitmaps::build(&blueprint.map, blueprint.ego_route)))
        .clone()
}

/// Maximum action speed, used by the speed-intensity encoding.
const SPEED_NORM_MPS: f64 = 40.0 / 3.6;

/// Footprint containment with the same 1e-6 snap as the bitmap sampler, so
/// edge-on-pixel-center cases cannot flip under rigid motion.
fn contains_quantized(footprint: &crate::sim::geometry::Obb, p: Vec2) -> bool {
    let rel = p - footprint.center;
    let fwd = Vec2::from_angle(footprint.heading);
    let lon = (rel.dot(fwd) * 1e6).round() / 1e6;
    let lat = (rel.dot(fwd.perp_right()) * 1e6).round() / 1e6;
    lon.abs() <= footprint.length / 2.0 && lat.abs() <= footprint.width / 2.0
}

/// Rasterize the world into the ego frame.
///
/// Channel 0: drivable area with markings carved out. Channel 1: ego route
/// corridor. Channel 2: vehicle footprints, binary by default or
/// speed-intensity-coded when the config requests it.
pub fn rasterize(world: &World, cfg: &ObsConfig) -> BevGrid {
    let bitmaps = bitmaps_cached(&world.blueprint_arc());
    rasterize_with(world, cfg, &bitmaps)
}

/// Rasterize against explicitly-built world bitmaps (bypasses the cache).
pub fn rasterize_with(world: &World, cfg: &ObsConfig, bitmaps: &WorldBitmaps) -> BevGrid {
    let rows = cfg.rows();
    let cols = cfg.cols();
    let mut grid = BevGrid::new(rows, cols, cfg.resolution_m);

    let ego = *world.ego();
    let ego_pos = ego.position();
    let fwd = Vec2::from_angle(ego.psi);
    let right = fwd.perp_right();

    // static channels: sample world bitmaps at pixel centers
    for r in 0..rows {
        let forward = (r as f64 + 0.5) * cfg.resolution_m - ObsConfig::BEHIND_M;
        for c in 0..cols {
            let lateral = (c as f64 + 0.5) * cfg.resolution_m - ObsConfig::SIDE_M;
            let p = ego_pos + fwd * forward + right * lateral;
            grid.set(0, r, c, bitmaps.sample_map(p));
            grid.set(1, r, c, bitmaps.sample_route(p));
        }
    }

    // vehicle channel: fill footprints whose center is inside the region
    for (_, v) in world.vehicles() {
        let rel = v.position() - ego_pos;
        let x_fwd = rel.dot(fwd);
        let y_right = rel.dot(right);
        if x_fwd < -ObsConfig::BEHIND_M
            || x_fwd > ObsConfig::AHEAD_M
            || y_right.abs() > ObsConfig::SIDE_M
        {
            continue;
        }
        let value = if cfg.speed_encoded_vehicles {
            let frac = (v.v / SPEED_NORM_MPS).clamp(0.0, 1.0);
            (63.0 + 192.0 * frac).round() as u8
        } else {
            255
        };
        let footprint = v.footprint();
        // pixel bounding box of the footprint in the ego grid
        let radius = (v.length + v.width) / 2.0;
        let r0 = (((x_fwd - radius + ObsConfig::BEHIND_M) / cfg.resolution_m).floor() as isize)
            .max(0) as usize;
        let r1 = (((x_fwd + radius + ObsConfig::BEHIND_M) / cfg.resolution_m).ceil() as isize)
            .min(rows as isize) as usize;
        let c0 = (((y_right - radius + ObsConfig::SIDE_M) / cfg.resolution_m).floor() as isize)
            .max(0) as usize;
        let c1 = (((y_right + radius + ObsConfig::SIDE_M) / cfg.resolution_m).ceil() as isize)
            .min(cols as isize) as usize;
        for r in r0..r1 {
            let forward = (r as f64 + 0.5) * cfg.resolution_m - ObsConfig::BEHIND_M;
            for c in c0..c1 {
                let lateral = (c as f64 + 0.5) * cfg.resolution_m - ObsConfig::SIDE_M;
                let p = ego_pos + fwd * forward + right * lateral;
                if contains_quantized(&footprint, p) {
                    grid.set(2, r, c, value);
                }
            }
        }
    }

    grid
}
