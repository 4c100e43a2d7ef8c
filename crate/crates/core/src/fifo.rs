//! First-in-first-out merging schedule.
//!
//! Vehicles enter the merging zone in the order they entered the control
//! zone. Each planned entry time follows from its queue predecessor:
//!
//! * the first vehicle cruises at its entry speed;
//! * after a non-conflicting predecessor it may enter together with it, but
//!   no sooner than `t_h` after the vehicle physically ahead on its own
//!   approach;
//! * after a conflicting or same-lane predecessor it waits `t_h`.
//!
//! No vehicle is planned earlier than its bang-cruise minimum time.

use alloc::vec::Vec;

use crate::domain::{CavState, DiscreteGrid, IntersectionConfig, SimConfig, StateKey, Approach};
use crate::env::observe;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FifoError {
    #[error("cannot schedule an empty queue")]
    Empty,
    #[error("time headway must be positive, got {0}")]
    Headway(f64),
    #[error("entries must be sorted by control-zone entry time (entry {0} is earlier than its predecessor)")]
    Unsorted(usize),
}

/// Relation of a queue predecessor to the vehicle behind it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PredecessorClass {
    Safe,
    Lateral,
    RearEnd,
}

impl PredecessorClass {
    pub fn name(self) -> &'static str {
        match self {
            PredecessorClass::Safe => "safe",
            PredecessorClass::Lateral => "lateral",
            PredecessorClass::RearEnd => "rear-end",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleEntry {
    pub t0: f64,
    pub v0: f64,
    pub approach: Approach,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduledVehicle {
    pub entry: ScheduleEntry,
    /// Earliest feasible merging-zone arrival.
    pub earliest: f64,
    /// Planned merging-zone arrival.
    pub t_star: f64,
    /// `None` for the head of the queue.
    pub predecessor: Option<PredecessorClass>,
}

impl ScheduledVehicle {
    /// Planned time spent between control-zone entry and merging-zone entry.
    pub fn duration(&self) -> f64 {
        self.t_star - self.entry.t0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FifoSchedule {
    pub vehicles: Vec<ScheduledVehicle>,
    pub time_headway: f64,
}

impl FifoSchedule {
    pub fn len(&self) -> usize {
        self.vehicles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vehicles.is_empty()
    }

    pub fn t_star(&self, i: usize) -> f64 {
        self.vehicles[i].t_star
    }

    pub fn duration(&self, i: usize) -> f64 {
        self.vehicles[i].duration()
    }
}

/// Classifies queue member `i - 1` relative to member `i` (`i >= 1`).
pub fn classify_predecessor(
    i: usize,
    queue: &[ScheduleEntry],
    intersection: &IntersectionConfig,
) -> PredecessorClass {
    assert!(i >= 1 && i < queue.len(), "vehicle {i} has no predecessor");
    let (me, prev) = (queue[i].approach, queue[i - 1].approach);
    if me == prev {
        PredecessorClass::RearEnd
    } else if intersection.conflict(me, prev) {
        PredecessorClass::Lateral
    } else {
        PredecessorClass::Safe
    }
}

/// Minimum-time arrival over distance `length`: full acceleration up to
/// `v_max`, then cruise.
pub fn earliest_feasible_time(t0: f64, v0: f64, length: f64, sim: &SimConfig) -> f64 {
    if length <= 0.0 {
        return t0;
    }
    let v0 = v0.min(sim.v_max);
    if v0 >= sim.v_max {
        return t0 + length / sim.v_max;
    }
    let u = sim.u_max;
    let ramp_time = (sim.v_max - v0) / u;
    let ramp_distance = (sim.v_max * sim.v_max - v0 * v0) / (2.0 * u);
    if ramp_distance >= length {
        t0 + (libm::sqrt(v0 * v0 + 2.0 * u * length) - v0) / u
    } else {
        t0 + ramp_time + (length - ramp_distance) / sim.v_max
    }
}

/// Planned merging-zone arrival times for a queue sorted by entry time.
pub fn schedule(
    entries: &[ScheduleEntry],
    intersection: &IntersectionConfig,
    sim: &SimConfig,
) -> Result<FifoSchedule, FifoError> {
    if entries.is_empty() {
        return Err(FifoError::Empty);
    }
    let t_h = sim.time_headway;
    if !(t_h > 0.0) {
        return Err(FifoError::Headway(t_h));
    }
    if let Some(i) = (1..entries.len()).find(|&i| entries[i].t0 < entries[i - 1].t0) {
        return Err(FifoError::Unsorted(i));
    }
    let length = intersection.control_zone_length;
    let mut vehicles: Vec<ScheduledVehicle> = Vec::with_capacity(entries.len());
    for (i, entry) in entries.iter().enumerate() {
        let earliest = earliest_feasible_time(entry.t0, entry.v0, length, sim);
        let (t_star, predecessor) = if i == 0 {
            (entry.t0 + length / entry.v0, None)
        } else {
            let prev = vehicles[i - 1].t_star;
            let class = classify_predecessor(i, entries, intersection);
            let t = match class {
                PredecessorClass::Safe => {
                    let ahead = (0..i).rev().find(|&j| entries[j].approach == entry.approach);
                    let lane = ahead.map_or(f64::NEG_INFINITY, |j| vehicles[j].t_star + t_h);
                    prev.max(lane).max(earliest)
                }
                PredecessorClass::Lateral | PredecessorClass::RearEnd => (prev + t_h).max(earliest),
            };
            (t, Some(class))
        };
        vehicles.push(ScheduledVehicle {
            entry: *entry,
            earliest,
            t_star,
            predecessor,
        });
    }
    Ok(FifoSchedule {
        vehicles,
        time_headway: t_h,
    })
}

/// Observation key for schedule tracking: `[p, v, p_ahead, v_ahead, dt*]`,
/// where `dt*` is the planned control-zone crossing time of the vehicle.
///
/// `states[i].id` indexes into the schedule.
pub fn combined_observe(
    states: &[CavState],
    i: usize,
    schedule: &FifoSchedule,
    grid: &DiscreteGrid,
    intersection: &IntersectionConfig,
) -> StateKey {
    let obs = observe(states, i, intersection);
    let (rear_p, rear_v) = match obs.rear {
        Some((p, v)) => (grid.position_bin(p), grid.speed_bin(v)),
        None => (StateKey::ABSENT, StateKey::ABSENT),
    };
    StateKey::from_bins(&[
        grid.position_bin(obs.p),
        grid.speed_bin(obs.v),
        rear_p,
        rear_v,
        grid.schedule_bin_of(schedule.duration(states[i].id)),
    ])
}
