//! CSV outputs.
//!
//! Trajectory files hold one row per vehicle and step:
//!
//! | column | meaning |
//! |---|---|
//! | `source` | `rl` or `baseline` |
//! | `episode`, `step` | episode index and step `k` (the row describes the state after step `k`) |
//! | `time` | seconds at the end of the step |
//! | `vehicle`, `approach` | vehicle index and `SB`/`EB`/`NB`/`WB` |
//! | `p`, `v`, `u` | position (m), speed (m/s) and applied control (m/s²) |
//! | `r_fuel` ... `r_total` | unweighted reward terms and the weighted total; empty for baseline rows |
//! | `rear_violation` ... `exited_control_zone` | event flags |

use std::io::Write;

use cavq_core::baseline::BaselineRun;
use cavq_core::fifo::FifoSchedule;
use cavq_core::harness::{EpisodeLog, EvalSummary, NormRecord, OverlaySeries, PairedRow, StepRecord};
use cavq_core::IntersectionConfig;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub source: String,
    pub episode: u64,
    pub step: usize,
    pub time: f64,
    pub vehicle: usize,
    pub approach: String,
    pub p: f64,
    pub v: f64,
    pub u: f64,
    pub r_fuel: Option<f64>,
    pub r_delay: Option<f64>,
    pub r_speed: Option<f64>,
    pub r_rear: Option<f64>,
    pub r_lateral: Option<f64>,
    pub r_fifo: Option<f64>,
    pub r_terminal: Option<f64>,
    pub r_total: Option<f64>,
    pub rear_violation: bool,
    pub lateral_violations: u32,
    pub speed_violation: bool,
    pub entered_merging: bool,
    pub exited_merging: bool,
    pub exited_control_zone: bool,
}

impl From<&StepRecord> for TrajectoryRow {
    fn from(r: &StepRecord) -> Self {
        Self {
            source: "rl".into(),
            episode: r.episode,
            step: r.step,
            time: r.time,
            vehicle: r.vehicle,
            approach: r.approach.code().into(),
            p: r.p,
            v: r.v,
            u: r.u,
            r_fuel: Some(r.reward.fuel),
            r_delay: Some(r.reward.delay),
            r_speed: Some(r.reward.speed),
            r_rear: Some(r.reward.rear),
            r_lateral: Some(r.reward.lateral),
            r_fifo: Some(r.reward.fifo),
            r_terminal: Some(r.reward.terminal),
            r_total: Some(r.reward.total),
            rear_violation: r.events.rear_violation,
            lateral_violations: r.events.lateral_violations,
            speed_violation: r.events.speed_violation,
            entered_merging: r.events.entered_merging,
            exited_merging: r.events.exited_merging,
            exited_control_zone: r.events.exited_control_zone,
        }
    }
}

/// Baseline trajectories sampled on the simulation step grid, in the same
/// schema as learned trajectories. At most `max_samples` rows per vehicle,
/// since a baseline that nearly stops at the merging zone takes unboundedly
/// long to cross it.
pub fn baseline_rows(
    episode: u64,
    run: &BaselineRun,
    intersection: &IntersectionConfig,
    dt: f64,
    max_samples: usize,
) -> Vec<TrajectoryRow> {
    let mut rows = Vec::new();
    for v in &run.vehicles {
        let first = (v.t0() / dt).round() as usize;
        let mut k = first;
        let mut prev_p = 0.0;
        while k - first < max_samples {
            let t = (k + 1) as f64 * dt;
            let exit = t >= v.exit_time;
            let (p, speed, u) = if exit {
                (intersection.exit_position(), v.merge_speed, 0.0)
            } else {
                match v.kinematics_at(t) {
                    Some(k) => k,
                    None => break,
                }
            };
            let l = intersection.control_zone_length;
            rows.push(TrajectoryRow {
                source: "baseline".into(),
                episode,
                step: k,
                time: t,
                vehicle: v.id,
                approach: v.approach.code().into(),
                p,
                v: speed,
                u,
                r_fuel: None,
                r_delay: None,
                r_speed: None,
                r_rear: None,
                r_lateral: None,
                r_fifo: None,
                r_terminal: None,
                r_total: None,
                rear_violation: false,
                lateral_violations: 0,
                speed_violation: false,
                entered_merging: prev_p < l && p >= l,
                exited_merging: exit,
                exited_control_zone: exit,
            });
            prev_p = p;
            if exit {
                break;
            }
            k += 1;
        }
    }
    rows.sort_by(|a, b| a.step.cmp(&b.step).then(a.vehicle.cmp(&b.vehicle)));
    rows
}

pub fn write_rows<W: Write, T: Serialize>(out: W, rows: impl IntoIterator<Item = T>) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_trajectories<W: Write>(out: W, rows: &[TrajectoryRow]) -> csv::Result<()> {
    write_rows(out, rows)
}

pub fn read_trajectories<R: std::io::Read>(input: R) -> csv::Result<Vec<TrajectoryRow>> {
    csv::Reader::from_reader(input).deserialize().collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct EpisodeRow {
    pub episode: u64,
    pub crashed: bool,
    pub crash_step: Option<usize>,
    pub timed_out: bool,
    pub steps: usize,
    pub rear_violations: u32,
    pub lateral_violations: u32,
    pub finished: usize,
    pub mean_travel_time: Option<f64>,
    pub fuel: f64,
    pub fifo_respected: bool,
    pub mean_merge_error: Option<f64>,
    pub total_reward: f64,
}

impl From<&EpisodeLog> for EpisodeRow {
    fn from(log: &EpisodeLog) -> Self {
        let travel: Vec<f64> = log.vehicles.iter().filter_map(|v| v.travel_time()).collect();
        let errors: Vec<f64> = log.vehicles.iter().filter_map(|v| v.merge_error()).collect();
        let mean = |xs: &[f64]| (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64);
        Self {
            episode: log.episode,
            crashed: log.crashed,
            crash_step: log.crash_step,
            timed_out: log.timed_out,
            steps: log.steps,
            rear_violations: log.rear_violations(),
            lateral_violations: log.lateral_violations(),
            finished: travel.len(),
            mean_travel_time: mean(&travel),
            fuel: log.vehicles.iter().map(|v| v.fuel).sum(),
            fifo_respected: log.fifo_respected(),
            mean_merge_error: mean(&errors),
            total_reward: log.total_reward(),
        }
    }
}

/// Two-column `metric,value` table.
pub fn write_summary<W: Write>(out: W, s: &EvalSummary) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["metric", "value"])?;
    let rows: [(&str, String); 11] = [
        ("episodes", s.episodes.to_string()),
        ("crashes", s.crashes.to_string()),
        ("crash_rate", s.crash_rate.to_string()),
        ("rear_violation_episodes", s.rear_violation_episodes.to_string()),
        ("lateral_violation_episodes", s.lateral_violation_episodes.to_string()),
        ("timeouts", s.timeouts.to_string()),
        ("mean_travel_time", s.mean_travel_time.to_string()),
        ("mean_delay", s.mean_delay.to_string()),
        ("mean_fuel", s.mean_fuel.to_string()),
        ("fifo_respected_fraction", s.fifo_respected_fraction.to_string()),
        ("mean_merge_error", s.mean_merge_error.map_or(String::new(), |e| e.to_string())),
    ];
    for (k, v) in rows {
        w.write_record([k, v.as_str()])?;
    }
    w.flush()?;
    Ok(())
}

/// `episode,cav_0,...,cav_{n-1},average`.
pub fn write_norms<W: Write>(out: W, agents: usize, records: &[NormRecord]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["episode".to_string()];
    header.extend((0..agents).map(|i| format!("cav_{i}")));
    header.push("average".into());
    w.write_record(&header)?;
    for r in records {
        let mut row = vec![r.episode.to_string()];
        row.extend(r.norms.iter().map(f64::to_string));
        row.push(r.average().to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_norms<R: std::io::Read>(input: R) -> csv::Result<Vec<NormRecord>> {
    let mut r = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let bad = |field: &str| {
            csv::Error::from(std::io::Error::new(
                std::io::ErrorKind::InvalidData,
                format!("bad number `{field}` in norm record {:?}", rec.position().map(|p| p.line())),
            ))
        };
        let fields: Vec<&str> = rec.iter().collect();
        if fields.len() < 3 {
            return Err(bad(rec.as_slice()));
        }
        let episode = fields[0].parse().map_err(|_| bad(fields[0]))?;
        let norms = fields[1..fields.len() - 1]
            .iter()
            .map(|s| s.parse::<f64>().map_err(|_| bad(s)))
            .collect::<csv::Result<Vec<f64>>>()?;
        out.push(NormRecord { episode, norms });
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainingRow {
    pub episodes: u64,
    pub epsilon: f64,
    pub crash_rate: f64,
    pub mean_total_reward: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScheduleRow {
    pub vehicle: usize,
    pub approach: &'static str,
    pub t0: f64,
    pub v0: f64,
    pub t_c: f64,
    pub t_star: f64,
    pub predecessor: &'static str,
}

pub fn schedule_rows(plan: &FifoSchedule) -> Vec<ScheduleRow> {
    plan.vehicles
        .iter()
        .enumerate()
        .map(|(i, v)| ScheduleRow {
            vehicle: i,
            approach: v.entry.approach.code(),
            t0: v.entry.t0,
            v0: v.entry.v0,
            t_c: v.earliest,
            t_star: v.t_star,
            predecessor: v.predecessor.map_or("none", |c| c.name()),
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct BaselineRow {
    pub episode: u64,
    pub vehicle: usize,
    pub approach: &'static str,
    pub t0: f64,
    pub v0: f64,
    pub t_star: f64,
    pub merge_speed: f64,
    pub exit_time: f64,
    pub travel_time: f64,
    pub fuel: f64,
    pub warnings: usize,
}

pub fn baseline_summary_rows(episode: u64, run: &BaselineRun, dt: f64) -> Vec<BaselineRow> {
    run.vehicles
        .iter()
        .map(|v| BaselineRow {
            episode,
            vehicle: v.id,
            approach: v.approach.code(),
            t0: v.t0(),
            v0: v.v0,
            t_star: v.merge_time(),
            merge_speed: v.merge_speed,
            exit_time: v.exit_time,
            travel_time: v.travel_time(),
            fuel: v.fuel(dt),
            warnings: v.trajectory.warnings.len(),
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct ComparisonRow {
    pub episode: u64,
    pub vehicle: usize,
    pub rl_travel_time: f64,
    pub baseline_travel_time: f64,
    pub travel_delta: f64,
    pub rl_fuel: f64,
    pub baseline_fuel: f64,
    pub fuel_delta: f64,
    pub baseline_within_bounds: bool,
}

impl From<&PairedRow> for ComparisonRow {
    fn from(r: &PairedRow) -> Self {
        Self {
            episode: r.episode,
            vehicle: r.vehicle,
            rl_travel_time: r.rl_travel_time,
            baseline_travel_time: r.baseline_travel_time,
            travel_delta: r.travel_delta(),
            rl_fuel: r.rl_fuel,
            baseline_fuel: r.baseline_fuel,
            fuel_delta: r.fuel_delta(),
            baseline_within_bounds: r.baseline_within_bounds,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct OverlayRow {
    pub source: &'static str,
    pub vehicle: usize,
    pub time: f64,
    pub p: f64,
}

pub fn overlay_rows(series: &[OverlaySeries]) -> Vec<OverlayRow> {
    series
        .iter()
        .flat_map(|s| {
            s.points.iter().map(move |&(time, p)| OverlayRow {
                source: s.source.name(),
                vehicle: s.vehicle,
                time,
                p,
            })
        })
        .collect()
}
