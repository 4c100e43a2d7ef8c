//! Energy-optimal comparator.
//!
//! Each vehicle gets its FIFO merging time, then minimizes `1/2 ∫ u^2 dt`
//! from control-zone entry to merging-zone entry under double-integrator
//! dynamics. With free terminal speed the optimal control is affine in time
//! and vanishes at the merging zone, so position is a cubic. Inside the
//! merging zone the vehicle holds its arrival speed until it exits.
//!
//! Speed and control bounds are checked on the result, not enforced.

use alloc::vec::Vec;

use crate::domain::{Approach, CavState, IntersectionConfig, Phase, SimConfig};
use crate::fifo::{earliest_feasible_time, schedule, FifoError, FifoSchedule, ScheduleEntry};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BaselineError {
    #[error("merging time {t_star} is not after the entry time {t0}")]
    NonPositiveHorizon { t0: f64, t_star: f64 },
    #[error("merging time {t_star} is earlier than the earliest feasible arrival {earliest}")]
    InfeasibleTime { t_star: f64, earliest: f64 },
    #[error("boundary-value system is singular")]
    Singular,
    #[error(transparent)]
    Fifo(#[from] FifoError),
}

/// A bound exceeded by an unconstrained solution: the worst value seen and
/// when it occurs. `Spacing` is the smallest gap to the vehicle ahead in the
/// same lane when it drops below `d_safe`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ConstraintWarning {
    Control { t: f64, u: f64 },
    Speed { t: f64, v: f64 },
    Spacing { t: f64, gap: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectorySample {
    pub t: f64,
    pub p: f64,
    pub v: f64,
    pub u: f64,
}

/// Cubic position profile on `[t0, t_end]`, in local time `s = t - t0`:
/// `u = a s + b`, `v = a s^2/2 + b s + c`, `p = a s^3/6 + b s^2/2 + c s + d`.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimalTrajectory {
    pub t0: f64,
    pub t_end: f64,
    /// `[a, b, c, d]`.
    pub coefficients: [f64; 4],
    pub samples: Vec<TrajectorySample>,
    pub warnings: Vec<ConstraintWarning>,
}

impl OptimalTrajectory {
    pub fn control(&self, t: f64) -> f64 {
        let [a, b, _, _] = self.coefficients;
        a * (t - self.t0) + b
    }

    pub fn speed(&self, t: f64) -> f64 {
        let [a, b, c, _] = self.coefficients;
        let s = t - self.t0;
        (a * s / 2.0 + b) * s + c
    }

    pub fn position(&self, t: f64) -> f64 {
        let [a, b, c, d] = self.coefficients;
        let s = t - self.t0;
        ((a * s / 6.0 + b / 2.0) * s + c) * s + d
    }

    /// `∫ u^2 dt` over the whole interval.
    pub fn exact_energy(&self) -> f64 {
        let [a, b, _, _] = self.coefficients;
        let h = self.t_end - self.t0;
        a * a * h * h * h / 3.0 + a * b * h * h + b * b * h
    }
}

/// Gaussian elimination with partial pivoting on a 4x4 system.
fn solve4(mut m: [[f64; 4]; 4], mut rhs: [f64; 4]) -> Option<[f64; 4]> {
    for col in 0..4 {
        let pivot = (col..4).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))?;
        if m[pivot][col].abs() < 1e-300 {
            return None;
        }
        m.swap(col, pivot);
        rhs.swap(col, pivot);
        for row in col + 1..4 {
            let f = m[row][col] / m[col][col];
            for k in col..4 {
                m[row][k] -= f * m[col][k];
            }
            rhs[row] -= f * rhs[col];
        }
    }
    let mut x = [0.0; 4];
    for row in (0..4).rev() {
        let tail: f64 = (row + 1..4).map(|k| m[row][k] * x[k]).sum();
        x[row] = (rhs[row] - tail) / m[row][row];
    }
    Some(x)
}

/// Energy-optimal profile reaching `length` at `t_star` from rest position
/// zero at `t0` with speed `v0`.
pub fn solve_trajectory(
    t0: f64,
    v0: f64,
    t_star: f64,
    length: f64,
    sim: &SimConfig,
) -> Result<OptimalTrajectory, BaselineError> {
    let h = t_star - t0;
    if !(h > 0.0) {
        return Err(BaselineError::NonPositiveHorizon { t0, t_star });
    }
    let earliest = earliest_feasible_time(t0, v0, length, sim);
    if t_star < earliest - 1e-9 {
        return Err(BaselineError::InfeasibleTime { t_star, earliest });
    }
    // unknowns [a, b, c, d]
    let system = [
        [0.0, 0.0, 0.0, 1.0],                         // p(0) = 0
        [0.0, 0.0, 1.0, 0.0],                         // v(0) = v0
        [h * h * h / 6.0, h * h / 2.0, h, 1.0],       // p(h) = L
        [h, 1.0, 0.0, 0.0],                           // u(h) = 0
    ];
    let coefficients = solve4(system, [0.0, v0, length, 0.0]).ok_or(BaselineError::Singular)?;
    let mut traj = OptimalTrajectory {
        t0,
        t_end: t_star,
        coefficients,
        samples: Vec::new(),
        warnings: Vec::new(),
    };

    let steps = libm::ceil(h / sim.dt - 1e-9) as usize;
    traj.samples = (0..=steps)
        .map(|k| {
            let t = (t0 + k as f64 * sim.dt).min(t_star);
            TrajectorySample {
                t,
                p: traj.position(t),
                v: traj.speed(t),
                u: traj.control(t),
            }
        })
        .collect();

    // control is affine: extremes at the ends; speed is quadratic: check
    // the ends and the stationary point
    let [a, b, _, _] = coefficients;
    let u_worst = [t0, t_star]
        .into_iter()
        .map(|t| (t, traj.control(t)))
        .max_by(|x, y| bound_excess(x.1, sim.u_min, sim.u_max).total_cmp(&bound_excess(y.1, sim.u_min, sim.u_max)));
    if let Some((t, u)) = u_worst.filter(|&(_, u)| bound_excess(u, sim.u_min, sim.u_max) > 1e-9) {
        traj.warnings.push(ConstraintWarning::Control { t, u });
    }
    let mut speed_points = alloc::vec![t0, t_star];
    if a != 0.0 {
        let s = -b / a;
        if s > 0.0 && s < h {
            speed_points.push(t0 + s);
        }
    }
    let v_worst = speed_points
        .into_iter()
        .map(|t| (t, traj.speed(t)))
        .max_by(|x, y| bound_excess(x.1, sim.v_min, sim.v_max).total_cmp(&bound_excess(y.1, sim.v_min, sim.v_max)));
    if let Some((t, v)) = v_worst.filter(|&(_, v)| bound_excess(v, sim.v_min, sim.v_max) > 1e-9) {
        traj.warnings.push(ConstraintWarning::Speed { t, v });
    }
    Ok(traj)
}

fn bound_excess(x: f64, lo: f64, hi: f64) -> f64 {
    (lo - x).max(x - hi).max(0.0)
}

/// One vehicle under the baseline: optimal approach, then constant speed
/// through the merging zone.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineVehicle {
    pub id: usize,
    pub approach: Approach,
    pub v0: f64,
    pub trajectory: OptimalTrajectory,
    pub merge_speed: f64,
    pub exit_time: f64,
    control_zone_length: f64,
}

impl BaselineVehicle {
    pub fn t0(&self) -> f64 {
        self.trajectory.t0
    }

    pub fn merge_time(&self) -> f64 {
        self.trajectory.t_end
    }

    pub fn travel_time(&self) -> f64 {
        self.exit_time - self.t0()
    }

    /// Position and speed at `t`, or `None` outside `[t0, exit_time)`.
    pub fn kinematics_at(&self, t: f64) -> Option<(f64, f64, f64)> {
        if t < self.t0() || t >= self.exit_time {
            return None;
        }
        if t <= self.merge_time() {
            let tr = &self.trajectory;
            Some((tr.position(t), tr.speed(t), tr.control(t)))
        } else {
            let p = self.control_zone_length + self.merge_speed * (t - self.merge_time());
            Some((p, self.merge_speed, 0.0))
        }
    }

    /// Fuel proxy `Σ u^2 dt` over the sampled approach; zero control after
    /// the merging zone.
    pub fn fuel(&self, dt: f64) -> f64 {
        let samples = &self.trajectory.samples;
        samples
            .windows(2)
            .map(|w| w[0].u * w[0].u * (w[1].t - w[0].t).min(dt))
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineRun {
    pub schedule: FifoSchedule,
    pub vehicles: Vec<BaselineVehicle>,
}

impl BaselineRun {
    /// Every vehicle's state at time `t`, shaped for the `env` detectors.
    pub fn snapshot(&self, t: f64, intersection: &IntersectionConfig) -> Vec<CavState> {
        self.vehicles
            .iter()
            .map(|veh| {
                let mut s = CavState::pending(veh.id, veh.approach, veh.t0(), veh.v0);
                match veh.kinematics_at(t) {
                    Some((p, v, _)) => {
                        s.p = p;
                        s.v = v;
                        s.phase = Phase::from_position(p, intersection);
                    }
                    None if t >= veh.exit_time => {
                        s.p = intersection.exit_position();
                        s.phase = Phase::Exited;
                    }
                    None => {}
                }
                s
            })
            .collect()
    }

    pub fn last_exit(&self) -> f64 {
        self.vehicles.iter().map(|v| v.exit_time).fold(0.0, f64::max)
    }
}

/// FIFO schedule plus an optimal trajectory for every vehicle.
pub fn run_baseline(
    entries: &[ScheduleEntry],
    intersection: &IntersectionConfig,
    sim: &SimConfig,
) -> Result<BaselineRun, BaselineError> {
    let plan = schedule(entries, intersection, sim)?;
    let length = intersection.control_zone_length;
    let vehicles = plan
        .vehicles
        .iter()
        .enumerate()
        .map(|(id, sv)| {
            let trajectory = solve_trajectory(sv.entry.t0, sv.entry.v0, sv.t_star, length, sim)?;
            let merge_speed = trajectory.speed(sv.t_star);
            let exit_time = sv.t_star + intersection.merging_zone_length / merge_speed;
            Ok(BaselineVehicle {
                id,
                approach: sv.entry.approach,
                v0: sv.entry.v0,
                trajectory,
                merge_speed,
                exit_time,
                control_zone_length: length,
            })
        })
        .collect::<Result<Vec<_>, BaselineError>>()?;
    let mut vehicles = vehicles;
    for i in 0..vehicles.len() {
        let Some(j) = (0..i).rev().find(|&j| vehicles[j].approach == vehicles[i].approach) else {
            continue;
        };
        if let Some((t, gap)) = closest_approach(&vehicles[j], &vehicles[i], intersection, sim) {
            if gap < sim.d_safe - 1e-9 {
                vehicles[i].trajectory.warnings.push(ConstraintWarning::Spacing { t, gap });
            }
        }
    }
    Ok(BaselineRun {
        schedule: plan,
        vehicles,
    })
}

/// Smallest gap between a same-lane leader and follower while both are in
/// the system, sampled at `dt / 20` up to the later merging time. Past that
/// both cruise, so the gap is linear and only its end point can be smaller.
fn closest_approach(
    lead: &BaselineVehicle,
    follow: &BaselineVehicle,
    intersection: &IntersectionConfig,
    sim: &SimConfig,
) -> Option<(f64, f64)> {
    let start = follow.t0().max(lead.t0());
    let end = lead.exit_time.min(follow.exit_time);
    if !(end > start) {
        return None;
    }
    let position = |v: &BaselineVehicle, t: f64| {
        if t <= v.merge_time() {
            v.trajectory.position(t)
        } else {
            intersection.control_zone_length + v.merge_speed * (t - v.merge_time())
        }
    };
    let gap = |t: f64| (t, position(lead, t) - position(follow, t));
    let sampled_end = end.min(lead.merge_time().max(follow.merge_time()));
    let h = sim.dt / 20.0;
    let steps = libm::ceil((sampled_end - start).max(0.0) / h) as usize;
    (0..=steps)
        .map(|k| gap((start + k as f64 * h).min(sampled_end)))
        .chain(core::iter::once(gap(end - 1e-9)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Approach::*;

    #[test]
    fn cruise_when_time_matches_entry_speed() {
        let sim = SimConfig::default();
        let tr = solve_trajectory(3.0, 10.0, 13.0, 100.0, &sim).unwrap();
        for s in &tr.samples {
            assert!(s.u.abs() < 1e-12);
            assert!((s.v - 10.0).abs() < 1e-12);
        }
        assert!(tr.warnings.is_empty());
    }

    #[test]
    fn same_lane_closing_is_reported() {
        let sim = SimConfig::default();
        let inter = IntersectionConfig::new(100.0, 18.0).unwrap();
        let entry = |t0, v0| ScheduleEntry { t0, v0, approach: Southbound };
        let run = run_baseline(&[entry(0.0, 10.0), entry(1.0, 15.0)], &inter, &sim).unwrap();
        assert!(run.vehicles[0].trajectory.warnings.is_empty());
        assert!(run.vehicles[1]
            .trajectory
            .warnings
            .iter()
            .any(|w| matches!(w, ConstraintWarning::Spacing { gap, .. } if *gap < sim.d_safe)));

        let run = run_baseline(&[entry(0.0, 10.0), entry(4.0, 10.0)], &inter, &sim).unwrap();
        assert!(run.vehicles.iter().all(|v| v.trajectory.warnings.is_empty()));
    }

    #[test]
    fn boundary_conditions_hold() {
        let sim = SimConfig::default();
        let tr = solve_trajectory(0.0, 10.0, 12.0, 100.0, &sim).unwrap();
        assert!(tr.position(0.0).abs() < 1e-12);
        assert!((tr.speed(0.0) - 10.0).abs() < 1e-12);
        assert!((tr.position(12.0) - 100.0).abs() < 1e-9);
        assert!(tr.control(12.0).abs() < 1e-12);
        assert_eq!(tr.samples.len(), 25);
        assert_eq!(tr.samples.last().unwrap().t, 12.0);
    }

    #[test]
    fn infeasible_and_degenerate_horizons() {
        let sim = SimConfig::default();
        assert!(matches!(solve_trajectory(0.0, 10.0, 3.0, 100.0, &sim), Err(BaselineError::InfeasibleTime { .. })));
        assert!(matches!(solve_trajectory(5.0, 10.0, 5.0, 100.0, &sim), Err(BaselineError::NonPositiveHorizon { .. })));
    }

    #[test]
    fn slow_schedule_warns() {
        let sim = SimConfig::default();
        // 40 s for 100 m from 15 m/s forces speeds below v_min
        let tr = solve_trajectory(0.0, 15.0, 40.0, 100.0, &sim).unwrap();
        assert!(matches!(tr.warnings[..], [ConstraintWarning::Speed { v, .. }] if v < 5.0));
        // just above the minimum time from 5 m/s: u(0) > 3 and v(t*) > 15
        let tr = solve_trajectory(0.0, 5.0, 7.8, 100.0, &sim).unwrap();
        assert!(tr.warnings.iter().any(|w| matches!(w, ConstraintWarning::Control { u, .. } if *u > 3.0)));
        assert!(tr.warnings.iter().any(|w| matches!(w, ConstraintWarning::Speed { v, .. } if *v > 15.0)));
    }

    #[test]
    fn single_vehicle_exit_time() {
        let sim = SimConfig::default();
        let inter = IntersectionConfig::new(32.0, 18.0).unwrap();
        let run = run_baseline(&[ScheduleEntry { t0: 1.0, v0: 10.0, approach: Southbound }], &inter, &sim).unwrap();
        let v = &run.vehicles[0];
        assert!((v.exit_time - 6.0).abs() < 1e-12);
        assert!((v.travel_time() - 5.0).abs() < 1e-12);
        assert!(v.fuel(sim.dt).abs() < 1e-20);
        assert_eq!(v.kinematics_at(0.5), None);
        let (p, _, _) = v.kinematics_at(5.0).unwrap();
        assert!((p - 40.0).abs() < 1e-9);
        let snap = run.snapshot(7.0, &inter);
        assert_eq!(snap[0].phase, Phase::Exited);
    }

    #[test]
    fn exact_energy_matches_quadrature() {
        let sim = SimConfig::default();
        let tr = solve_trajectory(0.0, 12.0, 9.0, 100.0, &sim).unwrap();
        let n = 90_000;
        let h = 9.0 / n as f64;
        let riemann: f64 = (0..n).map(|k| {
            let u = tr.control((k as f64 + 0.5) * h);
            u * u * h
        }).sum();
        assert!((riemann - tr.exact_energy()).abs() < 1e-6);
    }
}
