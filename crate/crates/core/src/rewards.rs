//! Reward terms and their weighted composition.
//!
//! Every term is a penalty (`<= 0`) except the delay term, which turns
//! positive when a vehicle runs ahead of its entry-speed schedule, and the
//! terminal bonus.

use crate::domain::{RewardWeights, SimConfig};

pub const REAR_PENALTY: f64 = -100.0;
pub const LATERAL_PENALTY: f64 = -100.0;
pub const SPEED_PENALTY: f64 = -1.0;
/// Multiplier on the squared arrival-time error at merging-zone entry.
pub const FIFO_ENTRY_SCALE: f64 = 10.0;

/// Which reward composition is in force.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Framework {
    /// Learned coordination: fuel, delay, speed, rear-end and lateral terms.
    Standalone,
    /// Tracking a FIFO schedule: fuel, speed, rear-end and schedule terms.
    Combined,
}

/// Unweighted reward terms for one vehicle and step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RewardBreakdown {
    pub fuel: f64,
    pub delay: f64,
    pub speed: f64,
    pub rear: f64,
    pub lateral: f64,
    pub fifo: f64,
    pub terminal: f64,
    pub total: f64,
}

impl RewardBreakdown {
    /// Fills in `total` from the weights of `framework`.
    pub fn with_total(mut self, weights: &RewardWeights, framework: Framework) -> Self {
        self.total = compose(&self, weights, framework);
        self
    }
}

/// Control effort: `-u^2 / max(|u_max|, |u_min|)`.
pub fn r_fuel(u: f64, sim: &SimConfig) -> f64 {
    -(u * u) / sim.u_max.abs().max(sim.u_min.abs())
}

/// Normalized delay after `steps` steps since entry, relative to cruising at
/// the entry speed. Zero at the entry position.
pub fn r_delay(steps: usize, p: f64, v0: f64, dt: f64) -> f64 {
    if p <= 0.0 || v0 <= 0.0 {
        return 0.0;
    }
    let nominal = p / v0;
    -(steps as f64 * dt - nominal) / nominal
}

pub fn r_speed(speed_violation: bool) -> f64 {
    if speed_violation {
        SPEED_PENALTY
    } else {
        0.0
    }
}

pub fn r_rear(rear_violation: bool) -> f64 {
    if rear_violation {
        REAR_PENALTY
    } else {
        0.0
    }
}

pub fn r_lateral(conflicts: u32) -> f64 {
    LATERAL_PENALTY * conflicts as f64
}

/// Exit bonus of `10 n`, paid only while the episode is crash-free.
pub fn r_terminal(n: usize, crash_free: bool) -> f64 {
    if crash_free {
        10.0 * n as f64
    } else {
        0.0
    }
}

/// Schedule-tracking term. Before the merging zone it is `-(eat - t*)^2`; on
/// the step that enters the merging zone the actual entry time is used and
/// the error is scaled by ten.
pub fn r_fifo(arrival: f64, t_star: f64, at_merge_entry: bool) -> f64 {
    let err = arrival - t_star;
    if at_merge_entry {
        -FIFO_ENTRY_SCALE * err * err
    } else {
        -err * err
    }
}

/// Estimated merging-zone arrival time assuming the current speed is held.
pub fn estimate_arrival_time(t_now: f64, p: f64, v: f64, control_zone_length: f64) -> f64 {
    t_now + (control_zone_length - p) / v
}

/// Weighted sum of the active terms plus the terminal bonus.
pub fn compose(b: &RewardBreakdown, weights: &RewardWeights, framework: Framework) -> f64 {
    let shaped = match framework {
        Framework::Standalone => {
            let w = &weights.standalone;
            w.fuel * b.fuel + w.delay * b.delay + w.speed * b.speed + w.rear * b.rear + w.lateral * b.lateral
        }
        Framework::Combined => {
            let w = &weights.combined;
            w.fuel * b.fuel + w.speed * b.speed + w.rear * b.rear + w.fifo * b.fifo
        }
    };
    shaped + b.terminal
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{CombinedWeights, StandaloneWeights};

    #[test]
    fn fuel() {
        let sim = SimConfig::default();
        assert_eq!(r_fuel(0.0, &sim), 0.0);
        assert_eq!(r_fuel(3.0, &sim), -3.0);
        assert_eq!(r_fuel(-3.0, &sim), -3.0);
    }

    #[test]
    fn delay() {
        assert_eq!(r_delay(10, 50.0, 10.0, 0.5), 0.0);
        // 6 s elapsed for a 5 s nominal trip
        assert!((r_delay(12, 50.0, 10.0, 0.5) - (-0.2)).abs() < 1e-15);
        assert!(r_delay(8, 50.0, 10.0, 0.5) > 0.0);
        assert_eq!(r_delay(0, 0.0, 10.0, 0.5), 0.0);
    }

    #[test]
    fn penalties() {
        assert_eq!(r_speed(true), -1.0);
        assert_eq!(r_speed(false), 0.0);
        assert_eq!(r_rear(true), -100.0);
        assert_eq!(r_rear(false), 0.0);
        assert_eq!(r_lateral(1), -100.0);
        assert_eq!(r_lateral(2), -200.0);
        assert_eq!(r_lateral(0), 0.0);
    }

    #[test]
    fn terminal() {
        assert_eq!(r_terminal(4, true), 40.0);
        assert_eq!(r_terminal(8, true), 80.0);
        assert_eq!(r_terminal(8, false), 0.0);
    }

    #[test]
    fn fifo_terms() {
        assert_eq!(r_fifo(7.0, 7.0, false), 0.0);
        assert_eq!(r_fifo(8.0, 7.0, false), -1.0);
        assert_eq!(r_fifo(7.5, 7.0, true), -2.5);
    }

    #[test]
    fn arrival_estimate() {
        assert_eq!(estimate_arrival_time(5.0, 50.0, 10.0, 100.0), 10.0);
        assert_eq!(estimate_arrival_time(3.0, 100.0, 10.0, 100.0), 3.0);
        // cruising at v0 from entry at time zero
        let (v0, t) = (12.5, 3.2);
        assert!((estimate_arrival_time(t, v0 * t, v0, 100.0) - 100.0 / v0).abs() < 1e-12);
    }

    #[test]
    fn composition() {
        let w = RewardWeights::default();
        let fuel_only = RewardBreakdown { fuel: -3.0, ..Default::default() };
        assert_eq!(compose(&fuel_only, &w, Framework::Standalone), -3.0);
        let lateral = RewardBreakdown { lateral: -100.0, delay: -0.5, ..Default::default() };
        assert_eq!(compose(&lateral, &w, Framework::Combined), 0.0);
        let zero = RewardWeights {
            standalone: StandaloneWeights { fuel: 0.0, delay: 0.0, speed: 0.0, rear: 0.0, lateral: 0.0 },
            combined: CombinedWeights { fuel: 0.0, speed: 0.0, rear: 0.0, fifo: 0.0 },
        };
        let busy = RewardBreakdown { fuel: -1.0, delay: 0.3, speed: -1.0, rear: -100.0, lateral: -200.0, fifo: -4.0, ..Default::default() };
        assert_eq!(compose(&busy, &zero, Framework::Standalone), 0.0);
        assert_eq!(compose(&busy, &zero, Framework::Combined), 0.0);
        let done = RewardBreakdown { terminal: 40.0, ..Default::default() }.with_total(&w, Framework::Standalone);
        assert_eq!(done.total, 40.0);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn compose_is_linear_in_weights(k in 0.0f64..10.0, fuel in -3.0f64..0.0, delay in -2.0f64..2.0, fifo in -50.0f64..0.0) {
                let b = RewardBreakdown { fuel, delay, speed: -1.0, rear: -100.0, lateral: -100.0, fifo, ..Default::default() };
                let w = RewardWeights::default();
                let scaled = RewardWeights {
                    standalone: StandaloneWeights { fuel: k, delay: k, speed: k, rear: k, lateral: k },
                    combined: CombinedWeights { fuel: k, speed: k, rear: k, fifo: k },
                };
                for f in [Framework::Standalone, Framework::Combined] {
                    let lhs = compose(&b, &scaled, f);
                    let rhs = k * compose(&b, &w, f);
                    prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + rhs.abs()));
                }
            }

            #[test]
            fn penalties_are_non_positive(u in -3.0f64..3.0, eat in 0.0f64..40.0, t in 0.0f64..40.0) {
                let sim = SimConfig::default();
                prop_assert!(r_fuel(u, &sim) <= 0.0);
                prop_assert!(r_fifo(eat, t, false) <= 0.0);
                prop_assert!(r_fifo(eat, t, true) <= 0.0);
            }
        }
    }
}
