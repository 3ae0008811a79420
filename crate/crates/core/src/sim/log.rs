//! Replay logs: line-delimited JSON, one record per vehicle per step.
//! Metric recomputation from these logs is bit-exact because every field
//! round-trips through the shortest-representation float encoding.

use super::world::{Events, StepOutcome};
use super::SimError;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: u32,
    pub vehicle_id: u64,
    pub x: f64,
    pub y: f64,
    pub psi: f64,
    pub v: f64,
    pub a: f64,
    pub w: f64,
    pub l: f64,
    pub ego_action: usize,
    pub reward: f64,
    pub events: Events,
}

pub fn records_from_outcome(outcome: &StepOutcome) -> Vec<StepRecord> {
    outcome
        .vehicles
        .iter()
        .map(|(id, s)| StepRecord {
            t: outcome.t,
            vehicle_id: *id,
            x: s.x,
            y: s.y,
            psi: s.psi,
            v: s.v,
            a: s.a,
            w: s.width,
            l: s.length,
            ego_action: outcome.ego_action,
            reward: outcome.reward,
            events: outcome.events,
        })
        .collect()
}

pub fn write_log<W: Write>(records: &[StepRecord], mut w: W) -> Result<(), SimError> {
    for r in records {
        let line = serde_json::to_string(r).map_err(|e| SimError::Log(e.to_string()))?;
        writeln!(w, "{line}").map_err(|e| SimError::Log(e.to_string()))?;
    }
    Ok(())
}

pub fn write_log_file(records: &[StepRecord], path: &Path) -> Result<(), SimError> {
    let file = std::fs::File::create(path)
        .map_err(|e| SimError::Log(format!("{}: {e}", path.display())))?;
    write_log(records, std::io::BufWriter::new(file))
}

pub fn read_log<R: BufRead>(r: R) -> Result<Vec<StepRecord>, SimError> {
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line.map_err(|e| SimError::Log(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| SimError::Log(e.to_string()))?);
    }
    Ok(out)
}

pub fn read_log_file(path: &Path) -> Result<Vec<StepRecord>, SimError> {
    let file = std::fs::File::open(path)
        .map_err(|e| SimError::Log(format!("{}: {e}", path.display())))?;
    read_log(std::io::BufReader::new(file))
}
