//! Deterministic 2D traffic world: maps, kinematics, controllers,
//! background traffic, collision detection, and the scenario families.

mod config;
pub mod geometry;
mod idm;
pub mod log;
mod map;
mod scenarios;
mod vehicle;
mod world;

pub use config::{Density, EpisodeLimits, ScenarioConfig, ScenarioId, SpawnConfig};
pub use idm::{background_accel, find_lead, idm_accel, yield_point, YIELD_TTC_S};
pub use map::{Conflict, Lane, LaneMap, Region, Route, LANE_WIDTH};
pub use scenarios::{blueprint_cached, build_blueprint, Blueprint, ScriptedVehicle};
pub use vehicle::{SpeedPid, VehicleState, ACCEL_MAX, ACCEL_MIN};
pub use world::{
    reward, spawn_from_blueprint, spawn_scenario, Events, StepOutcome, World, COLLISION_REWARD,
    DT, EGO_LENGTH, EGO_WIDTH,
};

use thiserror::Error;

/// Target-speed action set, km/h.
pub const ACTION_SPEEDS_KMH: [f64; 5] = [0.0, 10.0, 20.0, 30.0, 40.0];
pub const N_ACTIONS: usize = ACTION_SPEEDS_KMH.len();

#[derive(Debug, Error)]
pub enum SimError {
    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),
    #[error("unknown density `{0}`")]
    UnknownDensity(String),
    #[error("cannot step a terminal world")]
    TerminalWorld,
    #[error("spawn exhausted after 1000 attempts: placed {placed} of {requested}")]
    SpawnExhausted { placed: u32, requested: u32 },
    #[error("scenario config: {0}")]
    BadConfig(String),
    #[error("replay log: {0}")]
    Log(String),
}

/// Separating-axis overlap between two vehicle footprints.
pub fn check_collision(a: &VehicleState, b: &VehicleState) -> bool {
    a.footprint().overlaps(&b.footprint())
}
