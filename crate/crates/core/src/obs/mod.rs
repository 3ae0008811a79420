//! Network input construction: ego-anchored BEV raster and node features.
//!
//! The data types live here so the network layers can consume them; the
//! builders ([`rasterize`], [`build_nodes`]) operate on simulator worlds.

mod image_io;
mod nodes;
mod raster;
#[cfg(test)]
mod tests;

pub use image_io::{write_pgm, write_ppm};
pub use nodes::build_nodes;
pub use raster::{rasterize, rasterize_with, WorldBitmaps};

use serde::{Deserialize, Serialize};

/// Number of per-node input features: x, y, d, psi, vx, vy, ax, ay, w, l.
pub const NODE_FEATURE_DIM: usize = 10;

/// Raster geometry and node-capacity settings.
///
/// The region of interest is fixed in physical units (35 m ahead, 15 m
/// behind, 35 m to each side of the ego); resolution scales the pixel grid.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct ObsConfig {
    /// Meters per pixel. 0.25 gives the full-scale 200x280 raster,
    /// 0.5 the desk-scale 100x140 default.
    pub resolution_m: f64,
    /// Maximum node count including the ego; excess vehicles are dropped
    /// farthest-first.
    pub max_nodes: usize,
    /// Encode vehicle pixels with speed-scaled intensity instead of binary
    /// occupancy (used by the dense-BEV ablation).
    pub speed_encoded_vehicles: bool,
}

impl ObsConfig {
    pub const AHEAD_M: f64 = 35.0;
    pub const BEHIND_M: f64 = 15.0;
    pub const SIDE_M: f64 = 35.0;

    /// Desk-scale default: 100x140 at 0.5 m/pixel.
    pub fn desk() -> Self {
        Self {
            resolution_m: 0.5,
            max_nodes: 16,
            speed_encoded_vehicles: false,
        }
    }

    /// Full-scale raster: 200x280 at 0.25 m/pixel.
    pub fn full_scale() -> Self {
        Self {
            resolution_m: 0.25,
            ..Self::desk()
        }
    }

    /// Coarse raster for cheap training runs: 50x70 at 1.0 m/pixel.
    pub fn coarse() -> Self {
        Self {
            resolution_m: 1.0,
            ..Self::desk()
        }
    }

    pub fn rows(&self) -> usize {
        ((Self::AHEAD_M + Self::BEHIND_M) / self.resolution_m).round() as usize
    }

    pub fn cols(&self) -> usize {
        (2.0 * Self::SIDE_M / self.resolution_m).round() as usize
    }
}

/// Bird's-eye-view raster in the ego frame.
///
/// Three channels: 0 drivable area with lane markings carved out, 1 ego
/// route corridor, 2 vehicle footprints. Values are bytes mapping to [0, 1]
/// as v/255; the standard pipeline writes only 0 and 255, the dense-BEV
/// ablation writes speed-scaled intensities in the vehicle channel.
///
/// Row index grows toward the front of the ego; column index grows to its
/// right. The ego sits `BEHIND_M` from the bottom edge, centered laterally.
#[derive(Debug, Clone, PartialEq)]
pub struct BevGrid {
    pub channels: usize,
    pub rows: usize,
    pub cols: usize,
    /// Meters per pixel.
    pub resolution_m: f64,
    /// channel-major, then row-major: data[(c * rows + r) * cols + k]
    pub data: Vec<u8>,
}

impl BevGrid {
    pub fn new(rows: usize, cols: usize, resolution_m: f64) -> Self {
        Self {
            channels: 3,
            rows,
            cols,
            resolution_m,
            data: vec![0; 3 * rows * cols],
        }
    }

    pub fn at(&self, c: usize, r: usize, k: usize) -> u8 {
        self.data[(c * self.rows + r) * self.cols + k]
    }

    pub fn set(&mut self, c: usize, r: usize, k: usize, v: u8) {
        self.data[(c * self.rows + r) * self.cols + k] = v;
    }

    pub fn channel(&self, c: usize) -> &[u8] {
        &self.data[c * self.rows * self.cols..(c + 1) * self.rows * self.cols]
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.channels, self.rows, self.cols]
    }
}

/// Ordered per-vehicle feature vectors, ego first, in the ego frame.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeFeatureSet {
    /// Flat row-major [n x NODE_FEATURE_DIM].
    features: Vec<f32>,
    /// Simulator vehicle ids aligned with rows.
    vehicle_ids: Vec<u64>,
}

impl NodeFeatureSet {
    pub fn new(features: Vec<f32>, vehicle_ids: Vec<u64>) -> Self {
        assert_eq!(features.len(), vehicle_ids.len() * NODE_FEATURE_DIM);
        assert!(!vehicle_ids.is_empty(), "node set must include the ego");
        Self {
            features,
            vehicle_ids,
        }
    }

    pub fn len(&self) -> usize {
        self.vehicle_ids.len()
    }

    #[allow(clippy::len_without_is_empty)]
    pub fn features(&self) -> &[f32] {
        &self.features
    }

    pub fn node(&self, i: usize) -> &[f32] {
        &self.features[i * NODE_FEATURE_DIM..(i + 1) * NODE_FEATURE_DIM]
    }

    pub fn vehicle_ids(&self) -> &[u64] {
        &self.vehicle_ids
    }

    /// Euclidean distance between nodes `i` and `j` from their x, y features.
    pub fn pair_distance(&self, i: usize, j: usize) -> f32 {
        let a = self.node(i);
        let b = self.node(j);
        let dx = a[0] - b[0];
        let dy = a[1] - b[1];
        (dx * dx + dy * dy).sqrt()
    }
}

/// The network input `s`: BEV raster plus node features, both ego-anchored.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneObservation {
    pub bev: BevGrid,
    pub nodes: NodeFeatureSet,
}

impl SceneObservation {
    /// Approximate heap size, used for replay-buffer sizing diagnostics.
    pub fn heap_bytes(&self) -> usize {
        self.bev.data.len() + self.nodes.features.len() * 4 + self.nodes.vehicle_ids.len() * 8
    }

    /// Randomized observation honoring the structural invariants (ego first
    /// with zeroed pose features, d consistent with x/y). Used by tests and
    /// benchmarks that need states without running the simulator.
    pub fn synthetic(rng: &mut impl rand::Rng, n_nodes: usize, rows: usize, cols: usize) -> Self {
        let mut bev = BevGrid::new(rows, cols, 0.5);
        for v in bev.data.iter_mut() {
            *v = if rng.gen_bool(0.2) { 255 } else { 0 };
        }
        let mut features = Vec::with_capacity(n_nodes * NODE_FEATURE_DIM);
        let mut ids = Vec::with_capacity(n_nodes);
        for i in 0..n_nodes {
            let (x, y) = if i == 0 {
                (0.0f32, 0.0f32)
            } else {
                (rng.gen_range(-15.0..35.0), rng.gen_range(-30.0..30.0))
            };
            let d = (x * x + y * y).sqrt();
            let psi = if i == 0 {
                0.0
            } else {
                rng.gen_range(-std::f32::consts::PI..std::f32::consts::PI)
            };
            features.extend_from_slice(&[
                x,
                y,
                d,
                psi,
                rng.gen_range(-10.0..10.0),
                rng.gen_range(-10.0..10.0),
                rng.gen_range(-3.0..3.0),
                rng.gen_range(-3.0..3.0),
                rng.gen_range(1.7..2.1),
                rng.gen_range(3.8..5.2),
            ]);
            ids.push(i as u64);
        }
        Self {
            bev,
            nodes: NodeFeatureSet::new(features, ids),
        }
    }

    /// Copy with the non-ego node rows reordered by `perm` (indices into
    /// the current non-ego rows). Used by permutation-invariance checks.
    pub fn permute_non_ego(&self, perm: &[usize]) -> Self {
        let n = self.nodes.len();
        assert_eq!(perm.len(), n - 1);
        let mut features = Vec::with_capacity(n * NODE_FEATURE_DIM);
        let mut ids = Vec::with_capacity(n);
        features.extend_from_slice(self.nodes.node(0));
        ids.push(self.nodes.vehicle_ids()[0]);
        for &p in perm {
            features.extend_from_slice(self.nodes.node(p + 1));
            ids.push(self.nodes.vehicle_ids()[p + 1]);
        }
        Self {
            bev: self.bev.clone(),
            nodes: NodeFeatureSet::new(features, ids),
        }
    }
}
