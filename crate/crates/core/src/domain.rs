//! Core value types shared by every other module: intersection geometry,
//! simulation settings, vehicle state, reward weights, discretization and the
//! vehicle arrival process.

use alloc::vec::Vec;
use core::fmt;

use rand::Rng;
use rand_distr::{Distribution, Exp};
use smallvec::SmallVec;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

/// Errors raised while validating configuration values.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("{field} must be positive, got {value}")]
    NotPositive { field: &'static str, value: f64 },
    #[error("{field} must be non-negative, got {value}")]
    Negative { field: &'static str, value: f64 },
    #[error("speed limits must satisfy 0 <= v_min < v_max, got [{v_min}, {v_max}]")]
    SpeedRange { v_min: f64, v_max: f64 },
    #[error("control limits must satisfy u_min < 0 < u_max, got [{u_min}, {u_max}]")]
    ControlRange { u_min: f64, u_max: f64 },
    #[error("control range [{u_min}, {u_max}] is not a whole number of du = {du} steps")]
    ControlGrid { u_min: f64, u_max: f64, du: f64 },
    #[error("{0}")]
    Invalid(&'static str),
}

/// The four compass approaches into the intersection.
///
/// Vehicles travel straight through; turning is not modelled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub enum Approach {
    #[cfg_attr(feature = "serde", serde(rename = "SB"))]
    Southbound,
    #[cfg_attr(feature = "serde", serde(rename = "EB"))]
    Eastbound,
    #[cfg_attr(feature = "serde", serde(rename = "NB"))]
    Northbound,
    #[cfg_attr(feature = "serde", serde(rename = "WB"))]
    Westbound,
}

impl Approach {
    pub const ALL: [Approach; 4] = [
        Approach::Southbound,
        Approach::Eastbound,
        Approach::Northbound,
        Approach::Westbound,
    ];

    pub fn code(self) -> &'static str {
        match self {
            Approach::Southbound => "SB",
            Approach::Eastbound => "EB",
            Approach::Northbound => "NB",
            Approach::Westbound => "WB",
        }
    }

    pub fn from_code(code: &str) -> Option<Approach> {
        Approach::ALL.into_iter().find(|a| a.code().eq_ignore_ascii_case(code))
    }

    pub fn index(self) -> usize {
        self as usize
    }

    fn is_north_south(self) -> bool {
        matches!(self, Approach::Southbound | Approach::Northbound)
    }

    /// Perpendicular approaches conflict inside the merging zone; the same
    /// approach and the opposite approach do not.
    pub fn conflicts_with(self, other: Approach) -> bool {
        self.is_north_south() != other.is_north_south()
    }
}

impl fmt::Display for Approach {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

/// Intersection geometry. Every approach has the same control-zone length.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct IntersectionConfig {
    /// Distance from control-zone entry to merging-zone entry, meters.
    pub control_zone_length: f64,
    /// Length of the merging zone, meters.
    pub merging_zone_length: f64,
}

impl IntersectionConfig {
    pub fn new(control_zone_length: f64, merging_zone_length: f64) -> Result<Self, ConfigError> {
        let cfg = Self {
            control_zone_length,
            merging_zone_length,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        positive("control_zone_length", self.control_zone_length)?;
        positive("merging_zone_length", self.merging_zone_length)
    }

    pub fn approaches(&self) -> [Approach; 4] {
        Approach::ALL
    }

    pub fn conflict(&self, a: Approach, b: Approach) -> bool {
        a.conflicts_with(b)
    }

    /// Position of the merging-zone exit, where a vehicle leaves the system.
    pub fn exit_position(&self) -> f64 {
        self.control_zone_length + self.merging_zone_length
    }
}

/// Time step, kinematic limits, safety distance and discretization widths.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct SimConfig {
    /// Seconds per simulation step.
    pub dt: f64,
    /// Minimum bumper gap between consecutive vehicles on one approach, meters.
    pub d_safe: f64,
    pub v_min: f64,
    pub v_max: f64,
    pub u_min: f64,
    pub u_max: f64,
    /// Step limit per episode; `None` derives it from the geometry.
    pub max_steps: Option<usize>,
    /// Position bin width, meters.
    pub dp: f64,
    /// Speed bin width, m/s.
    pub dv: f64,
    /// Control grid spacing, m/s².
    pub du: f64,
    /// Mean gap between consecutive control-zone arrivals, seconds.
    pub mean_interarrival: f64,
    /// Safe time headway between conflicting merging-zone entries, seconds.
    pub time_headway: f64,
    /// Bin width for the scheduled crossing duration, seconds.
    pub schedule_bin: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 0.5,
            d_safe: 4.0,
            v_min: 5.0,
            v_max: 15.0,
            u_min: -3.0,
            u_max: 3.0,
            max_steps: None,
            dp: 2.0,
            dv: 5.0,
            du: 1.0,
            mean_interarrival: 2.0,
            time_headway: 2.0,
            schedule_bin: 0.5,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        positive("dt", self.dt)?;
        positive("d_safe", self.d_safe)?;
        positive("dp", self.dp)?;
        positive("dv", self.dv)?;
        positive("du", self.du)?;
        positive("mean_interarrival", self.mean_interarrival)?;
        positive("time_headway", self.time_headway)?;
        positive("schedule_bin", self.schedule_bin)?;
        if !(self.v_min >= 0.0 && self.v_min < self.v_max) {
            return Err(ConfigError::SpeedRange {
                v_min: self.v_min,
                v_max: self.v_max,
            });
        }
        if !(self.u_min < 0.0 && self.u_max > 0.0) {
            return Err(ConfigError::ControlRange {
                u_min: self.u_min,
                u_max: self.u_max,
            });
        }
        let steps = (self.u_max - self.u_min) / self.du;
        if (steps - libm::round(steps)).abs() > 1e-9 {
            return Err(ConfigError::ControlGrid {
                u_min: self.u_min,
                u_max: self.u_max,
                du: self.du,
            });
        }
        if self.max_steps == Some(0) {
            return Err(ConfigError::Invalid("max_steps must be at least 1"));
        }
        Ok(())
    }

    /// Episode step limit: the configured value, or four times the
    /// zero-delay crossing time at `v_min`.
    pub fn max_steps_for(&self, intersection: &IntersectionConfig) -> usize {
        self.max_steps.unwrap_or_else(|| {
            let crossing = intersection.exit_position() / self.v_min.max(f64::EPSILON);
            libm::ceil(4.0 * crossing / self.dt) as usize
        })
    }

    /// True when `time_headway` alone keeps two conflicting vehicles out of
    /// the merging zone together, i.e. `t_h >= D / v_min`.
    pub fn headway_covers_merging_zone(&self, intersection: &IntersectionConfig) -> bool {
        self.v_min > 0.0 && self.time_headway >= intersection.merging_zone_length / self.v_min
    }

    /// The discrete control set, ascending.
    pub fn actions(&self) -> Vec<f64> {
        let count = libm::round((self.u_max - self.u_min) / self.du) as usize + 1;
        (0..count).map(|i| self.u_min + i as f64 * self.du).collect()
    }
}

fn positive(field: &'static str, value: f64) -> Result<(), ConfigError> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(ConfigError::NotPositive { field, value })
    }
}

fn non_negative(field: &'static str, value: f64) -> Result<(), ConfigError> {
    if value >= 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(ConfigError::Negative { field, value })
    }
}

/// Where a vehicle is in its passage through the intersection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Phase {
    NotArrived,
    InControlZone,
    InMergingZone,
    Exited,
}

impl Phase {
    pub fn is_active(self) -> bool {
        matches!(self, Phase::InControlZone | Phase::InMergingZone)
    }

    /// Phase implied by a position for an arrived vehicle.
    pub fn from_position(p: f64, intersection: &IntersectionConfig) -> Phase {
        if p >= intersection.exit_position() {
            Phase::Exited
        } else if p >= intersection.control_zone_length {
            Phase::InMergingZone
        } else {
            Phase::InControlZone
        }
    }
}

/// Kinematic state of one vehicle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CavState {
    pub id: usize,
    pub approach: Approach,
    /// Meters traveled since control-zone entry.
    pub p: f64,
    pub v: f64,
    /// Control-zone entry time, seconds.
    pub t0: f64,
    /// Entry speed, m/s.
    pub v0: f64,
    pub phase: Phase,
}

impl CavState {
    pub fn pending(id: usize, approach: Approach, t0: f64, v0: f64) -> Self {
        Self {
            id,
            approach,
            p: 0.0,
            v: v0,
            t0,
            v0,
            phase: Phase::NotArrived,
        }
    }

    pub fn is_active(&self) -> bool {
        self.phase.is_active()
    }
}

/// Weights of the standalone reward terms.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct StandaloneWeights {
    pub fuel: f64,
    pub delay: f64,
    pub speed: f64,
    pub rear: f64,
    pub lateral: f64,
}

impl Default for StandaloneWeights {
    fn default() -> Self {
        Self {
            fuel: 1.0,
            delay: 1.0,
            speed: 1.0,
            rear: 1.0,
            lateral: 1.0,
        }
    }
}

/// Weights of the schedule-tracking reward terms. Delay and lateral terms
/// have no weight here: the schedule already accounts for both.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct CombinedWeights {
    pub fuel: f64,
    pub speed: f64,
    pub rear: f64,
    pub fifo: f64,
}

impl Default for CombinedWeights {
    fn default() -> Self {
        Self {
            fuel: 1.0,
            speed: 1.0,
            rear: 1.0,
            fifo: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct RewardWeights {
    pub standalone: StandaloneWeights,
    pub combined: CombinedWeights,
}

impl RewardWeights {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let s = &self.standalone;
        let c = &self.combined;
        for (field, value) in [
            ("standalone.fuel", s.fuel),
            ("standalone.delay", s.delay),
            ("standalone.speed", s.speed),
            ("standalone.rear", s.rear),
            ("standalone.lateral", s.lateral),
            ("combined.fuel", c.fuel),
            ("combined.speed", c.speed),
            ("combined.rear", c.rear),
            ("combined.fifo", c.fifo),
        ] {
            non_negative(field, value)?;
        }
        Ok(())
    }
}

/// A discretized observation, one bin index per observed quantity.
///
/// Missing quantities (no vehicle ahead, fewer than three conflicting
/// vehicles) use [`StateKey::ABSENT`].
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct StateKey(pub SmallVec<[u16; 8]>);

impl StateKey {
    pub const ABSENT: u16 = u16::MAX;

    pub fn from_bins(bins: &[u16]) -> Self {
        StateKey(SmallVec::from_slice(bins))
    }

    pub fn bins(&self) -> &[u16] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Concatenation of several keys, used for joint (centralized) states.
    pub fn concat<'a, I: IntoIterator<Item = &'a StateKey>>(parts: I) -> Self {
        let mut bins = SmallVec::new();
        for part in parts {
            bins.extend_from_slice(&part.0);
        }
        StateKey(bins)
    }
}

/// Bin layout for positions, speeds, controls and scheduled crossing times.
///
/// All binning is `floor(x / width)` relative to the range start, clamped to
/// the first and last bin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscreteGrid {
    pub dp: f64,
    pub position_bins: u16,
    pub v_min: f64,
    pub dv: f64,
    pub speed_bins: u16,
    pub u_min: f64,
    pub du: f64,
    pub action_count: usize,
    pub schedule_min: f64,
    pub schedule_bin: f64,
    pub schedule_bins: u16,
}

impl DiscreteGrid {
    pub fn new(sim: &SimConfig, intersection: &IntersectionConfig) -> Self {
        let position_bins = libm::ceil(intersection.exit_position() / sim.dp - 1e-9).max(1.0) as u16;
        let speed_bins = (libm::floor((sim.v_max - sim.v_min) / sim.dv + 1e-9) as u16) + 1;
        let action_count = libm::round((sim.u_max - sim.u_min) / sim.du) as usize + 1;
        let schedule_min = intersection.control_zone_length / sim.v_max;
        let schedule_max = if sim.v_min > 0.0 {
            intersection.control_zone_length / sim.v_min
        } else {
            schedule_min
        };
        // one extra bin past the speed-limit bound collects longer schedules
        let schedule_bins =
            (libm::ceil((schedule_max - schedule_min) / sim.schedule_bin - 1e-9).max(0.0) as u16) + 1;
        Self {
            dp: sim.dp,
            position_bins,
            v_min: sim.v_min,
            dv: sim.dv,
            speed_bins,
            u_min: sim.u_min,
            du: sim.du,
            action_count,
            schedule_min,
            schedule_bin: sim.schedule_bin,
            schedule_bins,
        }
    }

    pub fn position_bin(&self, p: f64) -> u16 {
        clamp_bin(p / self.dp, self.position_bins)
    }

    pub fn speed_bin(&self, v: f64) -> u16 {
        clamp_bin((v - self.v_min) / self.dv, self.speed_bins)
    }

    pub fn schedule_bin_of(&self, duration: f64) -> u16 {
        clamp_bin((duration - self.schedule_min) / self.schedule_bin, self.schedule_bins)
    }

    pub fn position_center(&self, bin: u16) -> f64 {
        (bin as f64 + 0.5) * self.dp
    }

    pub fn speed_center(&self, bin: u16) -> f64 {
        self.v_min + (bin as f64 + 0.5) * self.dv
    }

    pub fn action_value(&self, index: usize) -> f64 {
        self.u_min + index as f64 * self.du
    }

    /// Index of `u` on the control grid, or `None` when it is off the grid.
    pub fn action_index(&self, u: f64) -> Option<usize> {
        let x = (u - self.u_min) / self.du;
        let r = libm::round(x);
        if (x - r).abs() > 1e-9 || r < 0.0 || r as usize >= self.action_count {
            None
        } else {
            Some(r as usize)
        }
    }
}

fn clamp_bin(scaled: f64, count: u16) -> u16 {
    if !(scaled > 0.0) {
        return 0;
    }
    let bin = libm::floor(scaled);
    if bin >= (count - 1) as f64 {
        count - 1
    } else {
        bin as u16
    }
}

/// Control-zone arrival times `t_i = Y_1 + ... + Y_i` with i.i.d. exponential
/// gaps of the given mean.
pub fn sample_arrivals<R: Rng + ?Sized>(n: usize, mean: f64, rng: &mut R) -> Vec<f64> {
    let gap = Exp::new(1.0 / mean).expect("mean must be positive");
    let mut t = 0.0;
    (0..n)
        .map(|_| {
            t += gap.sample(rng);
            t
        })
        .collect()
}
