//! Discrete-time intersection dynamics.
//!
//! Vehicles follow a double integrator: `p' = p + v dt + u dt^2 / 2` and
//! `v' = clamp(v + u dt, v_min, v_max)`. A vehicle leaves the system once it
//! passes the merging-zone exit. Vehicles that have not arrived yet or have
//! already left take no part in observations or collision checks.

use alloc::vec;
use alloc::vec::Vec;

use crate::domain::{CavState, DiscreteGrid, IntersectionConfig, Phase, SimConfig, StateKey};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EnvError {
    #[error("expected {expected} actions, got {got}")]
    ActionCount { expected: usize, got: usize },
    #[error("vehicle {vehicle}: control {u} is outside the bounds or off the control grid")]
    InvalidControl { vehicle: usize, u: f64 },
}

/// What one vehicle sees: its own kinematics, the vehicle directly ahead on
/// its approach, and up to three conflicting vehicles nearest the
/// merging-zone exit (closest first).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObservedState {
    pub p: f64,
    pub v: f64,
    /// Position and speed of the vehicle directly ahead.
    pub rear: Option<(f64, f64)>,
    /// Positions of conflicting vehicles, closest to the merging-zone exit
    /// first, padded with `None`.
    pub lateral: [Option<f64>; 3],
}

/// Discretizes an observation into a Q-table key:
/// `[p, v, p_ahead, v_ahead, lat_1, lat_2, lat_3]`.
pub fn encode_state(obs: &ObservedState, grid: &DiscreteGrid) -> StateKey {
    let (rear_p, rear_v) = match obs.rear {
        Some((p, v)) => (grid.position_bin(p), grid.speed_bin(v)),
        None => (StateKey::ABSENT, StateKey::ABSENT),
    };
    let lat = obs
        .lateral
        .map(|slot| slot.map_or(StateKey::ABSENT, |p| grid.position_bin(p)));
    StateKey::from_bins(&[
        grid.position_bin(obs.p),
        grid.speed_bin(obs.v),
        rear_p,
        rear_v,
        lat[0],
        lat[1],
        lat[2],
    ])
}

/// Per-vehicle events produced by one step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct VehicleEvents {
    pub rear_violation: bool,
    /// Conflicting vehicles found inside the merging zone as this vehicle
    /// entered it.
    pub lateral_violations: u32,
    pub speed_violation: bool,
    pub entered_merging: bool,
    pub exited_merging: bool,
    pub exited_control_zone: bool,
}

impl VehicleEvents {
    pub fn lateral_violation(&self) -> bool {
        self.lateral_violations > 0
    }

    pub fn crashed(&self) -> bool {
        self.rear_violation || self.lateral_violation()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub states: Vec<CavState>,
    pub events: Vec<VehicleEvents>,
    pub crashed: bool,
}

fn control_is_valid(u: f64, sim: &SimConfig) -> bool {
    if !(u >= sim.u_min - 1e-12 && u <= sim.u_max + 1e-12) {
        return false;
    }
    let x = (u - sim.u_min) / sim.du;
    (x - libm::round(x)).abs() <= 1e-9
}

/// Advances every active vehicle by one step.
///
/// `actions` is aligned with `states`; entries for inactive vehicles are
/// ignored and those vehicles are copied through unchanged.
pub fn step(
    states: &[CavState],
    actions: &[f64],
    sim: &SimConfig,
    intersection: &IntersectionConfig,
) -> Result<StepOutcome, EnvError> {
    if actions.len() != states.len() {
        return Err(EnvError::ActionCount {
            expected: states.len(),
            got: actions.len(),
        });
    }
    let dt = sim.dt;
    let mut next = states.to_vec();
    let mut events = vec![VehicleEvents::default(); states.len()];
    for ((s, n), (&u, ev)) in states.iter().zip(next.iter_mut()).zip(actions.iter().zip(events.iter_mut())) {
        if !s.is_active() {
            continue;
        }
        if !control_is_valid(u, sim) {
            return Err(EnvError::InvalidControl { vehicle: s.id, u });
        }
        let v_raw = s.v + u * dt;
        n.p = s.p + s.v * dt + 0.5 * u * dt * dt;
        n.v = v_raw.clamp(sim.v_min, sim.v_max);
        n.phase = Phase::from_position(n.p, intersection);
        ev.speed_violation = v_raw < sim.v_min || v_raw > sim.v_max;
        ev.entered_merging = s.phase == Phase::InControlZone && n.phase >= Phase::InMergingZone;
        ev.exited_merging = n.phase == Phase::Exited;
        ev.exited_control_zone = n.phase == Phase::Exited;
    }

    let rear = detect_rear_end(&next, sim);
    let lateral = detect_lateral(states, &next, intersection);
    let mut crashed = false;
    for ((ev, r), l) in events.iter_mut().zip(rear).zip(lateral) {
        ev.rear_violation = r;
        ev.lateral_violations = l;
        crashed |= ev.crashed();
    }
    Ok(StepOutcome {
        states: next,
        events,
        crashed,
    })
}

/// Index of the vehicle directly ahead of `states[i]` on the same approach:
/// the active vehicle with the smallest non-negative lead.
fn vehicle_ahead(states: &[CavState], i: usize) -> Option<usize> {
    let me = &states[i];
    states
        .iter()
        .enumerate()
        .filter(|&(j, s)| j != i && s.is_active() && s.approach == me.approach && s.p >= me.p)
        .min_by(|(_, a), (_, b)| a.p.total_cmp(&b.p))
        .map(|(j, _)| j)
}

/// Rear-end check: a follower is flagged when the gap to the vehicle directly
/// ahead on its approach is below `d_safe`. Vehicles level with each other
/// flag each other.
pub fn detect_rear_end(states: &[CavState], sim: &SimConfig) -> Vec<bool> {
    (0..states.len())
        .map(|i| {
            states[i].is_active()
                && vehicle_ahead(states, i).is_some_and(|j| states[j].p - states[i].p < sim.d_safe)
        })
        .collect()
}

/// Lateral check between two consecutive snapshots.
///
/// A vehicle that enters the merging zone during the step receives one flag
/// for every conflicting vehicle inside the merging zone after the step,
/// including one that entered at the same time. A conflicting vehicle that
/// leaves the zone during the same step does not count, and vehicles already
/// inside are never flagged.
pub fn detect_lateral(
    prev: &[CavState],
    next: &[CavState],
    intersection: &IntersectionConfig,
) -> Vec<u32> {
    debug_assert_eq!(prev.len(), next.len());
    let mut flags = vec![0u32; next.len()];
    for (i, (before, after)) in prev.iter().zip(next).enumerate() {
        if before.phase != Phase::InControlZone || after.phase != Phase::InMergingZone {
            continue;
        }
        flags[i] = next
            .iter()
            .enumerate()
            .filter(|&(j, other)| {
                j != i
                    && other.phase == Phase::InMergingZone
                    && intersection.conflict(after.approach, other.approach)
            })
            .count() as u32;
    }
    flags
}

/// Builds the partial observation of `states[i]`.
pub fn observe(states: &[CavState], i: usize, intersection: &IntersectionConfig) -> ObservedState {
    let me = &states[i];
    let rear = vehicle_ahead(states, i).map(|j| (states[j].p, states[j].v));

    let mut conflicting: Vec<&CavState> = states
        .iter()
        .filter(|s| s.is_active() && intersection.conflict(me.approach, s.approach))
        .collect();
    // nearest the merging-zone exit means largest position
    conflicting.sort_by(|a, b| b.p.total_cmp(&a.p).then(a.id.cmp(&b.id)));
    let mut lateral = [None; 3];
    for (slot, s) in lateral.iter_mut().zip(conflicting) {
        *slot = Some(s.p);
    }
    ObservedState {
        p: me.p,
        v: me.v,
        rear,
        lateral,
    }
}
