use super::{NodeFeatureSet, ObsConfig};
use crate::sim::geometry::{wrap_angle, Vec2};
use crate::sim::World;

/// Build the node feature set: the ego first, then every vehicle whose
/// center lies inside the BEV region, nearest first, truncated at
/// `max_nodes`. All quantities are expressed in the ego frame (x forward,
/// y left, angles wrapped to (-pi, pi]).
pub fn build_nodes(world: &World, cfg: &ObsConfig) -> NodeFeatureSet {
    let ego = *world.ego();
    let ego_pos = ego.position();
    let fwd = Vec2::from_angle(ego.psi);
    let right = fwd.perp_right();

    struct Candidate {
        id: u64,
        d: f32,
        features: [f32; 10],
    }

    let mut candidates: Vec<Candidate> = Vec::new();
    for (id, v) in world.vehicles() {
        let rel = v.position() - ego_pos;
        let x_fwd = rel.dot(fwd);
        let y_right = rel.dot(right);
        let is_ego = id == 0;
        if !is_ego
            && (x_fwd < -ObsConfig::BEHIND_M
                || x_fwd > ObsConfig::AHEAD_M
                || y_right.abs() > ObsConfig::SIDE_M)
        {
            continue;
        }
        let (x, y) = if is_ego {
            (0.0f32, 0.0f32)
        } else {
            (x_fwd as f32, (-y_right) as f32)
        };
        let d = (x * x + y * y).sqrt();
        let psi = if is_ego {
            0.0f32
        } else {
            wrap_angle(v.psi - ego.psi) as f32
        };
        let vel = v.velocity();
        let acc = Vec2::from_angle(v.psi) * v.a;
        // rotate into the ego frame (x forward, y left)
        let (vx, vy) = (vel.dot(fwd) as f32, -(vel.dot(right)) as f32);
        let (ax, ay) = (acc.dot(fwd) as f32, -(acc.dot(right)) as f32);
        candidates.push(Candidate {
            id,
            d,
            features: [
                x,
                y,
                d,
                psi,
                vx,
                vy,
                ax,
                ay,
                v.width as f32,
                v.length as f32,
            ],
        });
    }

    // ego stays first; remaining sorted nearest-first, ties by id
    candidates.sort_by(|a, b| {
        let a_key = (a.id != 0, a.d, a.id);
        let b_key = (b.id != 0, b.d, b.id);
        a_key.partial_cmp(&b_key).expect("finite distances")
    });
    candidates.truncate(cfg.max_nodes);

    let mut features = Vec::with_capacity(candidates.len() * 10);
    let mut ids = Vec::with_capacity(candidates.len());
    for c in &candidates {
        features.extend_from_slice(&c.features);
        ids.push(c.id);
    }
    NodeFeatureSet::new(features, ids)
}
