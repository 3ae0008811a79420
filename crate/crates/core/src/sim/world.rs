use super::config::ScenarioConfig;
use super::geometry::{Obb, Vec2};
use super::idm::background_accel;
use super::scenarios::{blueprint_cached, Blueprint};
use super::vehicle::{SpeedPid, VehicleState};
use super::{ACTION_SPEEDS_KMH, SimError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use std::sync::Arc;

/// Simulation step, 10 Hz control.
pub const DT: f64 = 0.1;
/// Collision punishment and the speed normalizer of the driving reward.
pub const COLLISION_REWARD: f64 = -50.0;
const REWARD_SPEED_NORM_KMH: f64 = 40.0;
/// Jam rule: under 1 m of motion over the jam window with an empty 10 m
/// forward corridor.
const JAM_DISPLACEMENT_M: f64 = 1.0;
const JAM_CORRIDOR_M: f64 = 10.0;
/// Ego extents are fixed; background extents are sampled.
pub const EGO_LENGTH: f64 = 4.5;
pub const EGO_WIDTH: f64 = 1.9;

/// Terminal event flags. At most one fires per step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct Events {
    pub collision: bool,
    pub success: bool,
    pub jam_timeout: bool,
    pub step_timeout: bool,
}

impl Events {
    pub fn terminal(&self) -> bool {
        self.collision || self.success || self.jam_timeout || self.step_timeout
    }
}

/// Outcome of one world step.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub t: u32,
    pub vehicles: Vec<(u64, VehicleState)>,
    pub events: Events,
    pub reward: f64,
    pub ego_action: usize,
}

#[derive(Debug, Clone)]
struct Agent {
    id: u64,
    state: VehicleState,
    /// background: IDM set point; ego ignores this
    desired_speed: f64,
    aggressiveness: f64,
    is_ego: bool,
}

/// Deterministic 2D traffic world. Owns every vehicle, advances them at
/// 10 Hz, and raises terminal events for the ego.
pub struct World {
    pub config: ScenarioConfig,
    blueprint: Arc<Blueprint>,
    agents: Vec<Agent>,
    ego_pid: SpeedPid,
    rng: ChaCha8Rng,
    step_count: u32,
    next_id: u64,
    terminal: Option<Events>,
    /// trailing ego positions for the jam rule
    ego_trail: VecDeque<Vec2>,
    /// replacements waiting for a clear spawn point
    pending_respawns: u32,
}

/// Reward: -50 on collision, v/40 otherwise (v in km/h).
pub fn reward(collision: bool, ego_speed_kmh: f64) -> f64 {
    if collision {
        COLLISION_REWARD
    } else {
        ego_speed_kmh / REWARD_SPEED_NORM_KMH
    }
}

/// Build the scenario world: lane map, scripted vehicles, ego at the
/// route start, background traffic sampled without initial overlaps.
pub fn spawn_scenario(config: &ScenarioConfig) -> Result<World, SimError> {
    spawn_from_blueprint(blueprint_cached(config.scenario_id), config)
}

/// Like [`spawn_scenario`] but over an explicit blueprint (e.g. a
/// rigidly-transformed copy).
pub fn spawn_from_blueprint(
    blueprint: Arc<Blueprint>,
    config: &ScenarioConfig,
) -> Result<World, SimError> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut next_id = 0u64;

    let ego_route = &blueprint.map.routes[blueprint.ego_route].path;
    let ego_pos = ego_route.point_at(blueprint.ego_start_s);
    let ego = Agent {
        id: take_id(&mut next_id),
        state: VehicleState {
            x: ego_pos.x,
            y: ego_pos.y,
            psi: ego_route.heading_at(blueprint.ego_start_s),
            v: 0.0,
            a: 0.0,
            width: EGO_WIDTH,
            length: EGO_LENGTH,
            route_id: blueprint.ego_route,
            s: blueprint.ego_start_s,
        },
        desired_speed: 0.0,
        aggressiveness: 0.0,
        is_ego: true,
    };
    let mut agents = vec![ego];

    for scripted in &blueprint.scripted {
        let route = &blueprint.map.routes[scripted.route].path;
        let pos = route.point_at(scripted.s);
        agents.push(Agent {
            id: take_id(&mut next_id),
            state: VehicleState {
                x: pos.x,
                y: pos.y,
                psi: route.heading_at(scripted.s),
                v: scripted.target_speed,
                a: 0.0,
                width: scripted.width,
                length: scripted.length,
                route_id: scripted.route,
                s: scripted.s,
            },
            desired_speed: scripted.target_speed,
            aggressiveness: 0.0,
            is_ego: false,
        });
    }

    let [lo, hi] = config.spawn.vehicle_count_range;
    let count = if hi > lo {
        rng.gen_range(lo..=hi)
    } else {
        lo
    };
    let mut attempts = 0u32;
    let mut placed = 0u32;
    while placed < count {
        attempts += 1;
        if attempts > 1000 {
            return Err(SimError::SpawnExhausted {
                placed,
                requested: count,
            });
        }
        if let Some(agent) = sample_spawn(&blueprint, config, &agents, &mut rng, &mut next_id, 12.0) {
            agents.push(agent);
            placed += 1;
        }
    }

    Ok(World {
        config: config.clone(),
        blueprint,
        agents,
        ego_pid: SpeedPid::default(),
        rng,
        step_count: 0,
        next_id,
        terminal: None,
        ego_trail: VecDeque::new(),
        pending_respawns: 0,
    })
}

fn take_id(next: &mut u64) -> u64 {
    let id = *next;
    *next += 1;
    id
}

fn sample_spawn(
    blueprint: &Blueprint,
    config: &ScenarioConfig,
    agents: &[Agent],
    rng: &mut ChaCha8Rng,
    next_id: &mut u64,
    min_ego_dist: f64,
) -> Option<Agent> {
    let route_id = blueprint.background_routes
        [rng.gen_range(0..blueprint.background_routes.len())];
    let route = &blueprint.map.routes[route_id].path;
    let (s_lo, s_hi) = blueprint
        .spawn_s_range
        .unwrap_or((5.0, (route.length() - 10.0).max(6.0)));
    let s = rng.gen_range(s_lo..s_hi);
    let [llo, lhi] = config.spawn.vehicle_length_range_m;
    let [wlo, whi] = config.spawn.vehicle_width_range_m;
    let [vlo, vhi] = config.spawn.target_speed_range_mps;
    let length = rng.gen_range(llo..lhi);
    let width = rng.gen_range(wlo..whi);
    let desired_speed = if blueprint.background_parked || vhi <= vlo {
        0.0
    } else {
        rng.gen_range(vlo..vhi)
    };
    let aggressiveness = rng.gen_range(0.0..1.0);

    let pos = route.point_at(s);
    let psi = route.heading_at(s);
    let state = VehicleState {
        x: pos.x,
        y: pos.y,
        psi,
        v: if blueprint.background_parked {
            0.0
        } else {
            desired_speed * 0.8
        },
        a: 0.0,
        width,
        length,
        route_id: route_id,
        s,
    };
    if !agents.is_empty() && pos.dist(agents[0].state.position()) < min_ego_dist {
        return None;
    }
    // reject overlaps: inflated footprint against every existing agent
    let mine = Obb {
        length: state.length + 4.0,
        width: state.width + 0.5,
        ..state.footprint()
    };
    for other in agents {
        if mine.overlaps(&other.state.footprint()) {
            return None;
        }
    }
    Some(Agent {
        id: take_id(next_id),
        state,
        desired_speed,
        aggressiveness,
        is_ego: false,
    })
}

impl World {
    pub fn scenario(&self) -> &ScenarioConfig {
        &self.config
    }

    pub fn blueprint(&self) -> &Blueprint {
        &self.blueprint
    }

    pub fn blueprint_arc(&self) -> Arc<Blueprint> {
        self.blueprint.clone()
    }

    pub fn step_count(&self) -> u32 {
        self.step_count
    }

    pub fn is_terminal(&self) -> bool {
        self.terminal.is_some()
    }

    pub fn terminal_events(&self) -> Option<Events> {
        self.terminal
    }

    pub fn ego(&self) -> &VehicleState {
        &self.agents[0].state
    }

    /// (id, state) of every vehicle, ego first.
    pub fn vehicles(&self) -> Vec<(u64, VehicleState)> {
        self.agents.iter().map(|a| (a.id, a.state)).collect()
    }

    pub fn ego_goal_s(&self) -> f64 {
        self.blueprint.ego_goal_s
    }

    /// Advance one step: the ego tracks the commanded target speed through
    /// its PID, background vehicles follow IDM with gap acceptance, all
    /// vehicles integrate kinematic-bicycle dynamics, then terminal events
    /// are evaluated.
    pub fn step(&mut self, ego_action: usize) -> Result<StepOutcome, SimError> {
        if self.terminal.is_some() {
            return Err(SimError::TerminalWorld);
        }
        debug_assert!(ego_action < ACTION_SPEEDS_KMH.len());
        let target_mps = ACTION_SPEEDS_KMH[ego_action.min(ACTION_SPEEDS_KMH.len() - 1)] / 3.6;

        // control pass over the pre-step snapshot
        let snapshot: Vec<VehicleState> = self.agents.iter().map(|a| a.state).collect();
        let mut commands = Vec::with_capacity(self.agents.len());
        for (i, agent) in self.agents.iter().enumerate() {
            let accel = if agent.is_ego {
                self.ego_pid.step(target_mps, agent.state.v, DT)
            } else {
                let others: Vec<VehicleState> = snapshot
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| *j != i)
                    .map(|(_, s)| *s)
                    .collect();
                background_accel(
                    &agent.state,
                    agent.desired_speed,
                    agent.aggressiveness,
                    &others,
                    &self.blueprint.map,
                )
            };
            commands.push(accel);
        }

        // integration pass
        for (agent, accel) in self.agents.iter_mut().zip(&commands) {
            let route = &self.blueprint.map.routes[agent.state.route_id].path;
            agent.state.integrate(*accel, route, DT);
        }

        self.step_count += 1;
        self.recycle_finished_background();

        // terminal evaluation, priority: collision > success > jam > timeout
        let mut events = Events::default();
        let ego = self.agents[0].state;
        self.ego_trail.push_back(ego.position());
        let jam_window = self.config.limits.jam_timeout_steps as usize;
        while self.ego_trail.len() > jam_window + 1 {
            self.ego_trail.pop_front();
        }
        let ego_box = ego.footprint();
        if self.agents[1..]
            .iter()
            .any(|a| ego_box.overlaps(&a.state.footprint()))
        {
            events.collision = true;
        } else if ego.s >= self.blueprint.ego_goal_s {
            events.success = true;
        } else if self.jam_detected() {
            events.jam_timeout = true;
        } else if self.step_count >= self.config.limits.max_steps {
            events.step_timeout = true;
        }
        if events.terminal() {
            self.terminal = Some(events);
        }

        let ego_speed_kmh = ego.v * 3.6;
        let reward = reward(events.collision, ego_speed_kmh);
        Ok(StepOutcome {
            t: self.step_count,
            vehicles: self.agents.iter().map(|a| (a.id, a.state)).collect(),
            events,
            reward,
            ego_action,
        })
    }

    /// Jam: ego moved under 1 m across the whole window while its 10 m
    /// forward corridor stayed empty this step.
    fn jam_detected(&self) -> bool {
        let ego = self.agents[0].state;
        let window = self.config.limits.jam_timeout_steps as usize;
        if self.ego_trail.len() <= window {
            return false;
        }
        let displacement = ego.position().dist(*self.ego_trail.front().unwrap());
        if displacement >= JAM_DISPLACEMENT_M {
            return false;
        }
        let corridor = Obb {
            center: ego.position()
                + Vec2::from_angle(ego.psi) * (ego.length / 2.0 + JAM_CORRIDOR_M / 2.0),
            heading: ego.psi,
            width: ego.width.max(super::map::LANE_WIDTH - 0.5),
            length: JAM_CORRIDOR_M,
        };
        let occupied = self.agents[1..]
            .iter()
            .any(|a| corridor.contains_point(a.state.position()));
        !occupied
    }

    /// Insert a deterministic background vehicle, e.g. for controller
    /// calibration scenes or replay reconstruction. Returns its id.
    pub fn add_scripted_vehicle(
        &mut self,
        route_id: usize,
        s: f64,
        target_speed: f64,
        length: f64,
        width: f64,
    ) -> u64 {
        let route = &self.blueprint.map.routes[route_id].path;
        let pos = route.point_at(s);
        let id = take_id(&mut self.next_id);
        self.agents.push(Agent {
            id,
            state: VehicleState {
                x: pos.x,
                y: pos.y,
                psi: route.heading_at(s),
                v: target_speed,
                a: 0.0,
                width,
                length,
                route_id,
                s,
            },
            desired_speed: target_speed,
            aggressiveness: 0.0,
            is_ego: false,
        });
        id
    }

    /// Background vehicles leaving their route are removed; replacements
    /// enter at fresh spawn points as soon as one is clear.
    fn recycle_finished_background(&mut self) {
        let map = &self.blueprint.map;
        let mut removed = 0;
        let mut i = 1;
        while i < self.agents.len() {
            let a = &self.agents[i];
            let done = a.state.s >= map.routes[a.state.route_id].path.length() - 2.0;
            if done && !a.is_ego {
                self.agents.remove(i);
                removed += 1;
            } else {
                i += 1;
            }
        }
        if self.blueprint.background_parked {
            return; // parked filler never recycles
        }
        self.pending_respawns += removed;
        let mut spawned = 0;
        for _ in 0..self.pending_respawns {
            if let Some(agent) = sample_spawn(
                &self.blueprint,
                &self.config,
                &self.agents,
                &mut self.rng,
                &mut self.next_id,
                25.0,
            ) {
                self.agents.push(agent);
                spawned += 1;
            }
        }
        self.pending_respawns -= spawned;
    }
}
