//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits nonzero if any failed. Pass substrings as arguments to run a subset.

use std::panic::{self, AssertUnwindSafe};
use std::sync::OnceLock;
use std::time::Instant;

use cavq_core::baseline::{run_baseline, solve_trajectory, BaselineRun};
use cavq_core::env::{detect_lateral, detect_rear_end};
use cavq_core::fifo::{earliest_feasible_time, schedule, ScheduleEntry};
use cavq_core::harness::{
    episode_initial_conditions, evaluate, train, EvalReport, ScenarioPreset, TrainOutcome,
};
use cavq_core::learner::{
    epsilon_at, update_centralized, update_hysteretic, update_independent, JointActionSpace,
};
use cavq_core::{Approach, IntersectionConfig, LearnerConfig, QTable, SimConfig, StateKey, UpdateMode};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn key(bins: &[u16]) -> StateKey {
    StateKey::from_bins(bins)
}

fn paper_learner(gamma: f64) -> LearnerConfig {
    LearnerConfig {
        alpha: 0.4,
        beta: 0.05,
        gamma,
        ..LearnerConfig::default()
    }
}

// ---------------------------------------------------------------- 1

fn update_rules() -> Check {
    let cfg = paper_learner(0.95);
    let (s, s2) = (key(&[1, 2]), key(&[3, 4]));
    let mut failures = Vec::new();
    let mut expect = |name: &str, got: f64, want: f64| {
        if got.to_bits() != want.to_bits() {
            failures.push(format!("{name}: got {got:e}, want {want:e}"));
        }
    };

    // hysteretic
    let mut q = QTable::new(7);
    expect("hysteretic negative", update_hysteretic(&mut q, &s, 0, -1.0, Some(&s2), &cfg), -0.05);
    let mut q = QTable::new(7);
    expect("hysteretic terminal reward", update_hysteretic(&mut q, &s, 0, 40.0, None, &cfg), 16.0);
    let mut q = QTable::new(7);
    q.set(&s, 2, 0.95 * 2.0);
    q.set(&s2, 5, 2.0);
    expect("hysteretic zero error", update_hysteretic(&mut q, &s, 2, 0.0, Some(&s2), &cfg), 0.95 * 2.0);
    let mut q = QTable::new(7);
    q.set(&s, 1, 1.0);
    q.set(&s2, 3, 4.0);
    q.set(&s2, 4, -9.0);
    // delta = 2 + 0.95 * 4 - 1 = 4.8 >= 0, alpha branch
    expect("hysteretic bootstrap up", update_hysteretic(&mut q, &s, 1, 2.0, Some(&s2), &cfg), 1.0 + 0.4 * 4.8);
    let mut q = QTable::new(7);
    q.set(&s, 1, 5.0);
    q.set(&s2, 0, 2.0);
    // delta = 0 + 1.9 - 5 = -3.1, beta branch
    let delta = 0.95 * 2.0 - 5.0;
    expect("hysteretic bootstrap down", update_hysteretic(&mut q, &s, 1, 0.0, Some(&s2), &cfg), 5.0 + 0.05 * delta);

    // independent
    let mut q = QTable::new(7);
    expect("independent negative", update_independent(&mut q, &s, 0, -1.0, Some(&s2), &cfg), -0.4);
    let mut q = QTable::new(7);
    q.set(&s, 0, 2.0);
    q.set(&s2, 0, 100.0);
    let no_discount = LearnerConfig { gamma: 0.0, ..cfg };
    expect("independent gamma 0", update_independent(&mut q, &s, 0, 1.0, Some(&s2), &no_discount), 2.0 + 0.4 * (1.0 - 2.0));
    let equal = LearnerConfig { beta: 0.4, ..cfg };
    let (mut a, mut b) = (QTable::new(7), QTable::new(7));
    for t in [&mut a, &mut b] {
        t.set(&s, 3, 1.5);
        t.set(&s2, 6, -0.5);
    }
    expect(
        "independent equals hysteretic at alpha = beta",
        update_independent(&mut a, &s, 3, -2.0, Some(&s2), &equal),
        update_hysteretic(&mut b, &s, 3, -2.0, Some(&s2), &equal),
    );

    // centralized
    let space = JointActionSpace::new(2, 7, 1000).unwrap();
    let mut q = QTable::new(space.size());
    expect("centralized team reward", update_centralized(&mut q, &space, &s, &[3, 4], -2.0, Some(&s2), &cfg).unwrap(), -0.8);
    let mut q = QTable::new(space.size());
    q.set(&s2, space.encode(&[6, 6]).unwrap(), 10.0);
    q.set(&s2, space.encode(&[0, 0]).unwrap(), 1.0);
    expect(
        "centralized joint max over 49",
        update_centralized(&mut q, &space, &s, &[1, 2], 0.0, Some(&s2), &cfg).unwrap(),
        0.4 * (0.95 * 10.0),
    );
    let single = JointActionSpace::new(1, 7, 1000).unwrap();
    let (mut a, mut b) = (QTable::new(7), QTable::new(7));
    for t in [&mut a, &mut b] {
        t.set(&s, 5, 0.25);
        t.set(&s2, 1, 3.0);
    }
    expect(
        "centralized single agent",
        update_centralized(&mut a, &single, &s, &[5], 1.0, Some(&s2), &cfg).unwrap(),
        update_independent(&mut b, &s, 5, 1.0, Some(&s2), &cfg),
    );

    ensure(failures.is_empty(), if failures.is_empty() { "12 hand-computed updates exact".into() } else { failures.join("; ") })
}

// ---------------------------------------------------------------- 2

/// Single vehicle on a 10-cell road with 3 speed levels. Hard braking or
/// acceleration shifts the speed level, the vehicle moves `level + 1` cells
/// per step, each step costs `1 + u^2/3` and reaching cell 9 pays 10.
struct RoadMdp;

impl RoadMdp {
    const CELLS: u16 = 10;
    const LEVELS: u16 = 3;
    const ACTIONS: usize = 7;
    const GOAL: u16 = 9;

    fn step(p: u16, level: u16, a: usize) -> (f64, Option<(u16, u16)>) {
        let u = a as i32 - 3;
        let shift = if u >= 2 { 1 } else if u <= -2 { -1 } else { 0 };
        let next_level = (level as i32 + shift).clamp(0, Self::LEVELS as i32 - 1) as u16;
        let next_p = p + next_level + 1;
        let cost = -1.0 - (u * u) as f64 / 3.0;
        if next_p >= Self::GOAL {
            (cost + 10.0, None)
        } else {
            (cost, Some((next_p, next_level)))
        }
    }

    fn states() -> impl Iterator<Item = (u16, u16)> {
        (0..Self::GOAL).flat_map(|p| (0..Self::LEVELS).map(move |l| (p, l)))
    }

    fn value_iteration(gamma: f64) -> Vec<[f64; 7]> {
        let index = |p: u16, l: u16| (p * Self::LEVELS + l) as usize;
        let mut q = vec![[0.0; 7]; (Self::CELLS * Self::LEVELS) as usize];
        loop {
            let mut change = 0.0f64;
            for (p, l) in Self::states() {
                for a in 0..Self::ACTIONS {
                    let (r, next) = Self::step(p, l, a);
                    let boot = next.map_or(0.0, |(np, nl)| q[index(np, nl)].iter().copied().fold(f64::MIN, f64::max));
                    let v = r + gamma * boot;
                    change = change.max((v - q[index(p, l)][a]).abs());
                    q[index(p, l)][a] = v;
                }
            }
            if change < 1e-13 {
                return q;
            }
        }
    }
}

fn toy_mdp_oracle() -> Check {
    let cfg = LearnerConfig {
        mode: UpdateMode::Independent,
        alpha: 0.4,
        beta: 0.4,
        ..paper_learner(0.95)
    };
    let oracle = RoadMdp::value_iteration(cfg.gamma);
    let mut q = QTable::new(RoadMdp::ACTIONS);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let budget = 500_000;
    let mut state = None;
    for _ in 0..budget {
        let (p, l) = state.unwrap_or_else(|| (rng.random_range(0..RoadMdp::GOAL), rng.random_range(0..RoadMdp::LEVELS)));
        let a = rng.random_range(0..RoadMdp::ACTIONS);
        let (r, next) = RoadMdp::step(p, l, a);
        let next_key = next.map(|(np, nl)| key(&[np, nl]));
        update_independent(&mut q, &key(&[p, l]), a, r, next_key.as_ref(), &cfg);
        state = next;
    }
    let mut worst = 0.0f64;
    for (p, l) in RoadMdp::states() {
        for a in 0..RoadMdp::ACTIONS {
            let want = oracle[(p * RoadMdp::LEVELS + l) as usize][a];
            worst = worst.max((q.get(&key(&[p, l]), a) - want).abs());
        }
    }
    ensure(worst <= 0.05, format!("max |Q - Q*| = {worst:.2e} after {budget} steps (limit 0.05)"))
}

// ---------------------------------------------------------------- 3

fn hysteretic_equals_independent() -> Check {
    let mut tested = 0;
    for seed in 0..8u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rate = rng.random_range(0.01..1.0);
        let cfg = LearnerConfig {
            alpha: rate,
            beta: rate,
            gamma: rng.random_range(0.0..1.0),
            ..LearnerConfig::default()
        };
        let (mut hyst, mut ind) = (QTable::new(7), QTable::new(7));
        let states: Vec<StateKey> = (0..50).map(|i| key(&[i / 7, i % 7])).collect();
        for _ in 0..100_000 {
            let s = &states[rng.random_range(0..states.len())];
            let next = (!rng.random_bool(0.05)).then(|| &states[rng.random_range(0..states.len())]);
            let a = rng.random_range(0..7);
            let r = rng.random_range(-200.0..50.0);
            let x = update_hysteretic(&mut hyst, s, a, r, next, &cfg);
            let y = update_independent(&mut ind, s, a, r, next, &cfg);
            if x.to_bits() != y.to_bits() {
                return Err(format!("seed {seed}: diverged after {tested} transitions"));
            }
            tested += 1;
        }
        if hyst != ind {
            return Err(format!("seed {seed}: tables differ"));
        }
    }
    Ok(format!("{tested} transitions over 8 seeds, tables bit-identical"))
}

// ---------------------------------------------------------------- 4

fn perpendicular(a: Approach, b: Approach) -> bool {
    use Approach::*;
    matches!(
        (a, b),
        (Southbound | Northbound, Eastbound | Westbound) | (Eastbound | Westbound, Southbound | Northbound)
    )
}

/// Smallest-sum arrival times on a `grid`-second lattice such that the head
/// cruises, nobody beats its minimum-time arrival, order is kept and every
/// same-lane or crossing pair is `t_h` apart.
fn brute_force_schedule(entries: &[ScheduleEntry], inter: &IntersectionConfig, sim: &SimConfig, grid: f64) -> Vec<f64> {
    let l = inter.control_zone_length;
    let t_h = sim.time_headway;
    let lower: Vec<f64> = entries.iter().map(|e| earliest_feasible_time(e.t0, e.v0, l, sim)).collect();
    let head = entries[0].t0 + l / entries[0].v0;
    let top = lower.iter().copied().fold(head, f64::max) + t_h * entries.len() as f64 + 2.0 * grid;
    let lattice: Vec<Vec<f64>> = lower[1..]
        .iter()
        .map(|&lo| {
            let first = (lo / grid - 1e-9).ceil() as i64;
            let last = (top / grid).ceil() as i64;
            (first..=last).map(|k| k as f64 * grid).collect()
        })
        .collect();
    let feasible = |times: &[f64]| {
        (0..times.len()).all(|i| {
            (0..i).all(|j| {
                let separated = entries[i].approach == entries[j].approach || perpendicular(entries[i].approach, entries[j].approach);
                times[i] >= times[j] - 1e-9 && (!separated || times[i] >= times[j] + t_h - 1e-9)
            })
        })
    };
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut times = vec![head; entries.len()];
    fn search(
        depth: usize,
        times: &mut Vec<f64>,
        lattice: &[Vec<f64>],
        feasible: &dyn Fn(&[f64]) -> bool,
        best: &mut Option<(f64, Vec<f64>)>,
    ) {
        if depth == times.len() {
            let sum: f64 = times.iter().sum();
            if feasible(times) && best.as_ref().is_none_or(|(b, _)| sum < *b - 1e-12) {
                *best = Some((sum, times.clone()));
            }
            return;
        }
        for &t in &lattice[depth - 1] {
            times[depth] = t;
            search(depth + 1, times, lattice, feasible, best);
        }
    }
    search(1, &mut times, &lattice, &feasible, &mut best);
    best.expect("lattice contains a feasible schedule").1
}

fn fifo_brute_force() -> Check {
    let preset = ScenarioPreset::scenario2();
    let (inter, sim) = (preset.intersection, preset.sim);
    let grid = 0.1;
    let approaches = [Approach::Southbound, Approach::Eastbound, Approach::Northbound, Approach::Westbound];
    let speeds = [5.0, 10.0, 15.0];
    let mut cases: Vec<Vec<ScheduleEntry>> = Vec::new();
    for &t1 in &[0.0, 0.5, 1.0, 2.0, 4.0] {
        for &a0 in &approaches {
            for &a1 in &approaches {
                for &v0 in &speeds {
                    for &v1 in &speeds {
                        cases.push(vec![
                            ScheduleEntry { t0: 0.0, v0, approach: a0 },
                            ScheduleEntry { t0: t1, v0: v1, approach: a1 },
                        ]);
                    }
                }
            }
        }
    }
    for &(t1, t2) in &[(0.5, 1.0), (1.0, 3.0), (0.0, 2.0)] {
        for &a0 in &approaches {
            for &a1 in &approaches {
                for &a2 in &approaches {
                    for &v0 in &speeds {
                        for &v1 in &speeds {
                            for &v2 in &speeds {
                                cases.push(vec![
                                    ScheduleEntry { t0: 0.0, v0, approach: a0 },
                                    ScheduleEntry { t0: t1, v0: v1, approach: a1 },
                                    ScheduleEntry { t0: t2, v0: v2, approach: a2 },
                                ]);
                            }
                        }
                    }
                }
            }
        }
    }
    let mut worst = 0.0f64;
    for entries in &cases {
        let plan = schedule(entries, &inter, &sim).map_err(|e| e.to_string())?;
        let oracle = brute_force_schedule(entries, &inter, &sim, grid);
        for (i, want) in oracle.iter().enumerate() {
            let gap = (plan.t_star(i) - want).abs();
            worst = worst.max(gap);
            if gap > grid + 1e-9 {
                return Err(format!("{entries:?}: vehicle {i} planned {} vs brute force {want}", plan.t_star(i)));
            }
        }
    }
    Ok(format!("{} cases, worst deviation {worst:.3} s (limit {grid} s)", cases.len()))
}

// ---------------------------------------------------------------- 5

fn energy(u: impl Fn(f64) -> f64, t0: f64, t1: f64) -> f64 {
    let n = 20_000;
    let h = (t1 - t0) / n as f64;
    (0..n).map(|k| u(t0 + (k as f64 + 0.5) * h).powi(2) * h).sum()
}

fn baseline_checks() -> Check {
    let sim = SimConfig::default();
    let length = 100.0;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut cases, mut perturbations) = (0, 0);
    while cases < 30 {
        let t0 = rng.random_range(0.0..20.0);
        let v0 = rng.random_range(sim.v_min..=sim.v_max);
        let earliest = earliest_feasible_time(t0, v0, length, &sim);
        let t_star = earliest + rng.random_range(0.0..8.0);
        let tr = solve_trajectory(t0, v0, t_star, length, &sim).map_err(|e| e.to_string())?;
        let rel = |got: f64, want: f64| (got - want).abs() / want.abs().max(1.0);
        let bc = [
            rel(tr.position(t0), 0.0),
            rel(tr.speed(t0), v0),
            rel(tr.position(t_star), length),
            rel(tr.control(t_star), 0.0),
        ];
        if let Some(e) = bc.iter().find(|&&e| e > 1e-9) {
            return Err(format!("boundary condition off by {e:e} at t0 {t0} v0 {v0} t* {t_star}"));
        }
        if !tr.warnings.is_empty() {
            continue;
        }
        cases += 1;
        let h = t_star - t0;
        let best = energy(|t| tr.control(t), t0, t_star);
        let mut accepted = 0;
        while accepted < 100 {
            // position perturbation s^2 (h - s) q(s) keeps p(0), v(0) and p(h)
            let c: [f64; 3] = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            let scale = rng.random_range(0.001..0.05) / h.powi(2);
            let dp2 = |t: f64| {
                let s = (t - t0) / h;
                // d^2/ds^2 of s^2 (1 - s) (c0 + c1 s + c2 s^2), times h^3 / h^2
                let poly = |s: f64| s * s * (1.0 - s) * (c[0] + c[1] * s + c[2] * s * s);
                let e = 1e-4;
                scale * h * (poly(s + e) - 2.0 * poly(s) + poly(s - e)) / (e * e)
            };
            let dv = |t: f64| {
                let s = (t - t0) / h;
                let poly = |s: f64| s * s * (1.0 - s) * (c[0] + c[1] * s + c[2] * s * s);
                let e = 1e-6;
                scale * h * h * (poly(s + e) - poly(s - e)) / (2.0 * e)
            };
            let ok = (0..=200).all(|k| {
                let t = t0 + h * k as f64 / 200.0;
                let u = tr.control(t) + dp2(t);
                let v = tr.speed(t) + dv(t);
                u >= sim.u_min && u <= sim.u_max && v >= sim.v_min && v <= sim.v_max
            });
            if !ok {
                continue;
            }
            accepted += 1;
            perturbations += 1;
            let perturbed = energy(|t| tr.control(t) + dp2(t), t0, t_star);
            if perturbed < best - 1e-9 {
                return Err(format!("perturbation lowered energy from {best} to {perturbed}"));
            }
        }
    }

    // replay with a headway long enough to clear the merging zone at v_min;
    // runs that break a speed, control or spacing constraint carry no safety
    // guarantee
    let mut preset = ScenarioPreset::scenario2();
    preset.sim.time_headway = preset.intersection.merging_zone_length / preset.sim.v_min;
    let (mut replayed, mut skipped) = (0, 0);
    for vehicles in [4, 6, 8] {
        preset.vehicles = vehicles;
        for episode in 0..1000 {
            let spawns = episode_initial_conditions(&preset, 11, episode);
            let entries: Vec<ScheduleEntry> = spawns
                .iter()
                .map(|s| ScheduleEntry { t0: s.entry_time(preset.sim.dt), v0: s.v0, approach: s.approach })
                .collect();
            let run = run_baseline(&entries, &preset.intersection, &preset.sim).map_err(|e| e.to_string())?;
            if run.vehicles.iter().any(|v| !v.trajectory.warnings.is_empty()) {
                skipped += 1;
                continue;
            }
            if let Some(flag) = replay_flags(&run, &preset) {
                return Err(format!("{vehicles} vehicles, episode {episode}: baseline replay raised {flag}"));
            }
            replayed += 1;
        }
    }
    ensure(
        replayed >= 300,
        format!(
            "{cases} cubics exact, {perturbations} perturbations all costlier, {replayed} replays flag-free ({skipped} constraint-violating runs skipped)"
        ),
    )
}

fn replay_flags(run: &BaselineRun, preset: &ScenarioPreset) -> Option<&'static str> {
    let step = 0.05;
    let end = run.last_exit() + 1.0;
    let mut prev = run.snapshot(0.0, &preset.intersection);
    let mut t = step;
    while t <= end {
        let next = run.snapshot(t, &preset.intersection);
        if detect_rear_end(&next, &preset.sim).iter().any(|&f| f) {
            return Some("a rear-end flag");
        }
        if detect_lateral(&prev, &next, &preset.intersection).iter().any(|&f| f > 0) {
            return Some("a lateral flag");
        }
        prev = next;
        t += step;
    }
    None
}

// ---------------------------------------------------------------- 6, 7, 8

const SCENARIO1_EPISODES: u64 = 200_000;
const SCENARIO2_EPISODES: u64 = 100_000;
const EVAL_EPISODES: u64 = 1000;
const TRAIN_SEED: u64 = 1;
const EVAL_SEED: u64 = 1_000_001;

fn trained(preset: &ScenarioPreset, episodes: u64) -> (TrainOutcome, EvalReport) {
    let learner = LearnerConfig {
        total_episodes: episodes,
        ..preset.learner_config()
    };
    let outcome = train(preset, &learner, TRAIN_SEED).expect("training runs");
    let report = evaluate(&outcome.agents, preset, EVAL_EPISODES, EVAL_SEED, false).expect("evaluation runs");
    (outcome, report)
}

fn scenario1() -> &'static (TrainOutcome, EvalReport) {
    static RUN: OnceLock<(TrainOutcome, EvalReport)> = OnceLock::new();
    RUN.get_or_init(|| trained(&ScenarioPreset::scenario1(), SCENARIO1_EPISODES))
}

fn scenario1_safety() -> Check {
    let (outcome, report) = scenario1();
    let s = &report.summary;
    let plateau_start = SCENARIO1_EPISODES * 9 / 10;
    let at = |episode: u64| outcome.norms.iter().find(|r| r.episode == episode).map(|r| r.norms.clone());
    let (Some(before), Some(after)) = (at(plateau_start), at(SCENARIO1_EPISODES)) else {
        return Err("missing Q-norm records".into());
    };
    let change: Vec<f64> = before.iter().zip(&after).map(|(b, a)| (a - b).abs() / a.abs().max(f64::MIN_POSITIVE)).collect();
    let worst = change.iter().copied().fold(0.0, f64::max);
    let detail = format!(
        "{} rear-end and {} lateral violation episodes in {} (crash rate {:.3}); Q-norm change over final 10%: {}",
        s.rear_violation_episodes,
        s.lateral_violation_episodes,
        s.episodes,
        s.crash_rate,
        change.iter().map(|c| format!("{:.2}%", 100.0 * c)).collect::<Vec<_>>().join(", ")
    );
    ensure(s.rear_violation_episodes == 0 && s.lateral_violation_episodes == 0 && worst < 0.01, detail)
}

fn scenario2_tracking() -> Check {
    let (_, report) = trained(&ScenarioPreset::scenario2(), SCENARIO2_EPISODES);
    let s = &report.summary;
    let error = s.mean_merge_error.ok_or("no vehicle reached the merging zone")?;
    ensure(
        s.crashes == 0 && error <= 1.0,
        format!("{} crashed episodes in {}, mean merge error {error:.3} s (limit 1 s)", s.crashes, s.episodes),
    )
}

fn scenario1_fifo() -> Check {
    let (_, report) = scenario1();
    let clean: Vec<_> = report.episodes.iter().filter(|e| !e.crashed).collect();
    if clean.is_empty() {
        return Err("no crash-free evaluation episodes".into());
    }
    let kept = clean.iter().filter(|e| e.fifo_respected()).count();
    let fraction = kept as f64 / clean.len() as f64;
    ensure(
        fraction >= 0.95,
        format!("{kept} of {} crash-free episodes in FIFO order ({:.1}%, threshold 95%)", clean.len(), 100.0 * fraction),
    )
}

// ---------------------------------------------------------------- 9

fn epsilon_schedule() -> Check {
    let cfg = ScenarioPreset::scenario1().learner_config();
    let total = cfg.total_episodes;
    if epsilon_at(0, &cfg) != 0.6 || epsilon_at(total, &cfg) != 0.01 {
        return Err(format!("endpoints {} and {}", epsilon_at(0, &cfg), epsilon_at(total, &cfg)));
    }
    let mut worst = 0.0f64;
    for k in 0..=1000u64 {
        let e = total * k / 1000 + k % 7;
        let e = e.min(total);
        let line = 0.6 - 0.59 * e as f64 / total as f64;
        worst = worst.max((epsilon_at(e, &cfg) - line).abs());
    }
    ensure(worst <= 1e-12, format!("endpoints exact, worst deviation from linear {worst:.1e}"))
}

// ----------------------------------------------------------------

fn main() {
    let criteria: [(&str, fn() -> Check); 9] = [
        ("criterion 1 update rules", update_rules),
        ("criterion 2 toy MDP oracle", toy_mdp_oracle),
        ("criterion 3 hysteretic equals independent at alpha = beta", hysteretic_equals_independent),
        ("criterion 4 FIFO schedule brute force", fifo_brute_force),
        ("criterion 5 energy-optimal baseline", baseline_checks),
        ("criterion 6 scenario 1 safety and Q-norm plateau", scenario1_safety),
        ("criterion 7 scenario 2 crash-free schedule tracking", scenario2_tracking),
        ("criterion 8 scenario 1 emergent FIFO order", scenario1_fifo),
        ("criterion 9 epsilon schedule", epsilon_schedule),
    ];
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (name, check) in criteria {
        if !filters.is_empty() && !filters.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let result = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS {name}: {detail} [{secs:.1} s]"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail} [{secs:.1} s]");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
