use super::SimError;
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::str::FromStr;

/// Scenario families. The six benchmark scenarios plus `toy_lead`, a
/// single-lane stopped-lead calibration task used by the learning sanity
/// checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioId {
    TLeft,
    TMerge,
    IntCross,
    IntLeft,
    FiveWay,
    Roundabout,
    ToyLead,
}

impl ScenarioId {
    pub const ALL: [ScenarioId; 7] = [
        ScenarioId::TLeft,
        ScenarioId::TMerge,
        ScenarioId::IntCross,
        ScenarioId::IntLeft,
        ScenarioId::FiveWay,
        ScenarioId::Roundabout,
        ScenarioId::ToyLead,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioId::TLeft => "t_left",
            ScenarioId::TMerge => "t_merge",
            ScenarioId::IntCross => "int_cross",
            ScenarioId::IntLeft => "int_left",
            ScenarioId::FiveWay => "five_way",
            ScenarioId::Roundabout => "roundabout",
            ScenarioId::ToyLead => "toy_lead",
        }
    }
}

impl FromStr for ScenarioId {
    type Err = SimError;
    fn from_str(s: &str) -> Result<Self, SimError> {
        Self::ALL
            .into_iter()
            .find(|id| id.name() == s)
            .ok_or_else(|| SimError::UnknownScenario(s.to_string()))
    }
}

impl std::fmt::Display for ScenarioId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Density {
    Regular,
    Dense,
}

impl Density {
    pub fn name(self) -> &'static str {
        match self {
            Density::Regular => "regular",
            Density::Dense => "dense",
        }
    }
}

impl FromStr for Density {
    type Err = SimError;
    fn from_str(s: &str) -> Result<Self, SimError> {
        match s {
            "regular" => Ok(Density::Regular),
            "dense" => Ok(Density::Dense),
            other => Err(SimError::UnknownDensity(other.to_string())),
        }
    }
}

impl std::fmt::Display for Density {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Background-traffic sampling ranges.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpawnConfig {
    /// inclusive [min, max] vehicle count
    pub vehicle_count_range: [u32; 2],
    pub vehicle_length_range_m: [f64; 2],
    pub vehicle_width_range_m: [f64; 2],
    pub target_speed_range_mps: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeLimits {
    pub max_steps: u32,
    pub jam_timeout_steps: u32,
}

/// Full episode recipe: scenario, density, seed, spawn ranges, limits.
/// Serializes to a human-readable TOML document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub scenario_id: ScenarioId,
    pub density: Density,
    pub seed: u64,
    pub spawn: SpawnConfig,
    pub limits: EpisodeLimits,
}

impl ScenarioConfig {
    /// Density presets: regular spawns 4-8 vehicles at 4-9 m/s, dense 9-16
    /// at 3-8 m/s, count-scaled per scenario. Dense strictly exceeds
    /// regular in expected count for every scenario.
    pub fn preset(scenario_id: ScenarioId, density: Density, seed: u64) -> Self {
        let scale: f64 = match scenario_id {
            ScenarioId::IntCross | ScenarioId::IntLeft | ScenarioId::FiveWay => 1.25,
            _ => 1.0,
        };
        let (count, speeds) = match (scenario_id, density) {
            (ScenarioId::ToyLead, Density::Regular) => ([0, 0], [0.0, 0.0]),
            (ScenarioId::ToyLead, Density::Dense) => ([1, 2], [0.0, 0.0]),
            (_, Density::Regular) => {
                let lo = (4.0 * scale).round() as u32;
                let hi = (8.0 * scale).round() as u32;
                ([lo, hi], [4.0, 9.0])
            }
            (_, Density::Dense) => {
                let lo = (9.0 * scale).round() as u32;
                let hi = (16.0 * scale).round() as u32;
                ([lo, hi], [3.0, 8.0])
            }
        };
        Self {
            scenario_id,
            density,
            seed,
            spawn: SpawnConfig {
                vehicle_count_range: count,
                vehicle_length_range_m: [3.8, 5.2],
                vehicle_width_range_m: [1.7, 2.1],
                target_speed_range_mps: speeds,
            },
            limits: EpisodeLimits {
                max_steps: 600,
                jam_timeout_steps: 150,
            },
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("scenario config serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self, SimError> {
        toml::from_str(text).map_err(|e| SimError::BadConfig(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SimError::BadConfig(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn save(&self, path: &Path) -> Result<(), SimError> {
        std::fs::write(path, self.to_toml())
            .map_err(|e| SimError::BadConfig(format!("{}: {e}", path.display())))
    }
}
