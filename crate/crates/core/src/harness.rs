//! Episode runner, training loop, greedy evaluation, scenario presets and
//! paired comparison with the energy-optimal baseline.
//!
//! Randomness is split per episode into two ChaCha streams derived from the
//! run seed: one draws the initial conditions (arrival times, entry speeds,
//! approaches) and one drives exploration and tie-breaking. The same seed and
//! episode index therefore reproduce the same traffic under any policy, and
//! the baseline can be run on exactly the traffic the learners saw.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::baseline::{run_baseline, BaselineError, BaselineRun};
use crate::domain::{
    sample_arrivals, Approach, CavState, ConfigError, DiscreteGrid, IntersectionConfig, Phase,
    RewardWeights, SimConfig, StateKey,
};
use crate::env::{self, encode_state, observe, EnvError, VehicleEvents};
use crate::fifo::{self, combined_observe, FifoError, FifoSchedule, ScheduleEntry};
use crate::learner::{
    epsilon_at, greedy_action, select_action, update_centralized, update_hysteretic,
    update_independent, JointActionSpace, LearnerConfig, LearnerError, QTable, UpdateMode,
};
use crate::rewards::{self, Framework, RewardBreakdown};

/// Q-table norms are recorded after every this many episodes.
pub const NORM_INTERVAL: u64 = 100;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(#[from] ConfigError),
    #[error("invalid learner configuration: {0}")]
    Learner(#[from] LearnerError),
    #[error("scenario needs at least one vehicle")]
    NoVehicles,
    #[error("approach sequence has {got} entries for {expected} vehicles")]
    ApproachCount { expected: usize, got: usize },
    #[error("tables were built for {expected} agents and {expected_actions} actions, scenario needs {agents} and {actions}")]
    TableShape {
        expected: usize,
        expected_actions: usize,
        agents: usize,
        actions: usize,
    },
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Fifo(#[from] FifoError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
}

/// A complete experiment setup.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioPreset {
    pub name: String,
    pub intersection: IntersectionConfig,
    pub sim: SimConfig,
    pub weights: RewardWeights,
    pub vehicles: usize,
    pub framework: Framework,
    pub total_episodes: u64,
    /// Fixed approach per vehicle slot; `None` draws approaches uniformly.
    pub approaches: Option<Vec<Approach>>,
}

impl ScenarioPreset {
    /// Four vehicles, one per approach, on a 32 m control zone, learning
    /// coordination from the standalone reward.
    pub fn scenario1() -> Self {
        Self {
            name: String::from("scenario1"),
            intersection: IntersectionConfig {
                control_zone_length: 32.0,
                merging_zone_length: 18.0,
            },
            sim: SimConfig::default(),
            weights: RewardWeights::default(),
            vehicles: 4,
            framework: Framework::Standalone,
            total_episodes: 2_000_000,
            approaches: Some(vec![
                Approach::Southbound,
                Approach::Eastbound,
                Approach::Northbound,
                Approach::Westbound,
            ]),
        }
    }

    /// Eight vehicles on random approaches over a 100 m control zone,
    /// tracking the FIFO schedule.
    pub fn scenario2() -> Self {
        Self {
            name: String::from("scenario2"),
            intersection: IntersectionConfig {
                control_zone_length: 100.0,
                merging_zone_length: 18.0,
            },
            sim: SimConfig::default(),
            weights: RewardWeights::default(),
            vehicles: 8,
            framework: Framework::Combined,
            total_episodes: 400_000,
            approaches: None,
        }
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "scenario1" | "1" => Some(Self::scenario1()),
            "scenario2" | "2" => Some(Self::scenario2()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        self.intersection.validate()?;
        self.sim.validate()?;
        self.weights.validate()?;
        if self.vehicles == 0 {
            return Err(HarnessError::NoVehicles);
        }
        if let Some(seq) = &self.approaches {
            if seq.len() != self.vehicles {
                return Err(HarnessError::ApproachCount {
                    expected: self.vehicles,
                    got: seq.len(),
                });
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> DiscreteGrid {
        DiscreteGrid::new(&self.sim, &self.intersection)
    }

    /// Learner defaults with this preset's episode budget.
    pub fn learner_config(&self) -> LearnerConfig {
        LearnerConfig {
            total_episodes: self.total_episodes,
            ..LearnerConfig::default()
        }
    }

    pub fn key_len(&self) -> usize {
        match self.framework {
            Framework::Standalone => 7,
            Framework::Combined => 5,
        }
    }
}

/// One vehicle's initial condition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Spawn {
    pub approach: Approach,
    /// Sampled arrival time, seconds.
    pub arrival: f64,
    /// First step at or after the arrival time.
    pub entry_step: usize,
    pub v0: f64,
}

impl Spawn {
    pub fn entry_time(&self, dt: f64) -> f64 {
        self.entry_step as f64 * dt
    }
}

/// Scenario and action RNG streams for one episode of a run.
pub fn episode_rngs(seed: u64, episode: u64) -> (ChaCha8Rng, ChaCha8Rng) {
    let mut scenario = ChaCha8Rng::seed_from_u64(seed);
    scenario.set_stream(2 * episode);
    let mut actions = ChaCha8Rng::seed_from_u64(seed);
    actions.set_stream(2 * episode + 1);
    (scenario, actions)
}

/// Draws arrival times, entry speeds (uniform over the speed grid) and,
/// when the preset does not fix them, approaches.
///
/// A vehicle whose arrival would put it closer than [`safe_entry_gap`] to
/// the previous vehicle on its approach, assuming that vehicle cruises at its
/// entry speed, enters at the first step where the gap is safe. The result
/// is ordered by entry step.
pub fn initial_conditions<R: Rng + ?Sized>(preset: &ScenarioPreset, rng: &mut R) -> Vec<Spawn> {
    let sim = &preset.sim;
    let arrivals = sample_arrivals(preset.vehicles, sim.mean_interarrival, rng);
    let speed_levels = libm::floor((sim.v_max - sim.v_min) / sim.dv + 1e-9) as usize + 1;
    let mut spawns: Vec<Spawn> = arrivals
        .iter()
        .enumerate()
        .map(|(i, &arrival)| {
            let v0 = sim.v_min + rng.random_range(0..speed_levels) as f64 * sim.dv;
            let approach = match &preset.approaches {
                Some(seq) => seq[i],
                None => Approach::ALL[rng.random_range(0..4)],
            };
            Spawn {
                approach,
                arrival,
                entry_step: libm::ceil(arrival / sim.dt - 1e-9) as usize,
                v0,
            }
        })
        .collect();
    space_entries(&mut spawns, sim);
    spawns
}

fn space_entries(spawns: &mut [Spawn], sim: &SimConfig) {
    loop {
        spawns.sort_by(|a, b| a.entry_step.cmp(&b.entry_step).then(a.arrival.total_cmp(&b.arrival)));
        let mut moved = false;
        for i in 1..spawns.len() {
            let me = spawns[i];
            let Some(lead) = spawns[..i].iter().rev().find(|s| s.approach == me.approach) else {
                continue;
            };
            let clear = lead.entry_time(sim.dt) + safe_entry_gap(me.v0, lead.v0, sim) / lead.v0;
            let step = libm::ceil(clear / sim.dt - 1e-9) as usize;
            if me.entry_step < step {
                spawns[i].entry_step = step;
                moved = true;
            }
        }
        if !moved {
            return;
        }
    }
}

/// Initial conditions of `episode` in the run seeded with `seed`.
pub fn episode_initial_conditions(preset: &ScenarioPreset, seed: u64, episode: u64) -> Vec<Spawn> {
    let (mut scenario, _) = episode_rngs(seed, episode);
    initial_conditions(preset, &mut scenario)
}

/// FIFO schedule over the (step-aligned) entries of `spawns`.
pub fn schedule_for(preset: &ScenarioPreset, spawns: &[Spawn]) -> Result<FifoSchedule, FifoError> {
    let entries: Vec<ScheduleEntry> = spawns
        .iter()
        .map(|s| ScheduleEntry {
            t0: s.entry_time(preset.sim.dt),
            v0: s.v0,
            approach: s.approach,
        })
        .collect();
    fifo::schedule(&entries, &preset.intersection, &preset.sim)
}

/// Smallest entry gap from which a vehicle entering at `v_follow` can always
/// keep `d_safe` behind a leader currently at `v_lead`, even if the leader
/// brakes as hard as allowed down to `v_min`.
pub fn safe_entry_gap(v_follow: f64, v_lead: f64, sim: &SimConfig) -> f64 {
    let decel = -sim.u_min;
    let brake_time = |v: f64| (v - sim.v_min).max(0.0) / decel;
    let horizon = brake_time(v_follow).max(brake_time(v_lead));
    let distance = |v: f64| {
        let t = brake_time(v);
        v * t - 0.5 * decel * t * t + sim.v_min * (horizon - t)
    };
    sim.d_safe + (distance(v_follow) - distance(v_lead)).max(0.0)
}

/// Learned tables: one per vehicle slot, or a single joint table.
#[derive(Debug, Clone, PartialEq)]
pub enum Agents {
    Independent(Vec<QTable>),
    Centralized {
        table: QTable,
        space: JointActionSpace,
        key_len: usize,
    },
}

impl Agents {
    pub fn new(preset: &ScenarioPreset, learner: &LearnerConfig) -> Result<Self, HarnessError> {
        let actions = preset.grid().action_count;
        Ok(match learner.mode {
            UpdateMode::Centralized => {
                let space = JointActionSpace::new(preset.vehicles, actions, learner.max_joint_actions)?;
                Agents::Centralized {
                    table: QTable::new(space.size()),
                    space,
                    key_len: preset.key_len(),
                }
            }
            _ => Agents::Independent((0..preset.vehicles).map(|_| QTable::new(actions)).collect()),
        })
    }

    pub fn tables(&self) -> &[QTable] {
        match self {
            Agents::Independent(t) => t,
            Agents::Centralized { table, .. } => core::slice::from_ref(table),
        }
    }

    pub fn norms(&self) -> Vec<f64> {
        self.tables().iter().map(QTable::norm).collect()
    }

    fn check_shape(&self, preset: &ScenarioPreset) -> Result<(), HarnessError> {
        let actions = preset.grid().action_count;
        let (agents, per_agent) = match self {
            Agents::Independent(t) => (t.len(), t.first().map_or(actions, QTable::action_count)),
            Agents::Centralized { space, .. } => (space.agents, space.per_agent),
        };
        if agents != preset.vehicles || per_agent != actions {
            return Err(HarnessError::TableShape {
                expected: agents,
                expected_actions: per_agent,
                agents: preset.vehicles,
                actions,
            });
        }
        Ok(())
    }

    fn joint_key(keys: &[Option<StateKey>], key_len: usize) -> StateKey {
        let absent = StateKey::from_bins(&vec![StateKey::ABSENT; key_len]);
        StateKey::concat(keys.iter().map(|k| k.as_ref().unwrap_or(&absent)))
    }

    fn select<R: Rng + ?Sized>(&self, keys: &[Option<StateKey>], epsilon: f64, rng: &mut R) -> Vec<Option<usize>> {
        match self {
            Agents::Independent(tables) => keys
                .iter()
                .zip(tables)
                .map(|(k, q)| k.as_ref().map(|k| pick(q, k, epsilon, rng)))
                .collect(),
            Agents::Centralized { table, space, key_len } => {
                if keys.iter().all(Option::is_none) {
                    return vec![None; keys.len()];
                }
                let joint = Self::joint_key(keys, *key_len);
                let actions = space.decode(pick(table, &joint, epsilon, rng));
                keys.iter().zip(actions).map(|(k, a)| k.as_ref().map(|_| a)).collect()
            }
        }
    }

    fn learn(&mut self, pending: &PendingStep, next: &[Option<StateKey>], cfg: &LearnerConfig) -> Result<(), HarnessError> {
        match self {
            Agents::Independent(tables) => {
                for (i, q) in tables.iter_mut().enumerate() {
                    let (Some(s), Some(a)) = (&pending.keys[i], pending.actions[i]) else {
                        continue;
                    };
                    let next_key = if pending.terminal[i] { None } else { next[i].as_ref() };
                    match cfg.mode {
                        UpdateMode::Hysteretic => update_hysteretic(q, s, a, pending.rewards[i], next_key, cfg),
                        _ => update_independent(q, s, a, pending.rewards[i], next_key, cfg),
                    };
                }
            }
            Agents::Centralized { table, space, key_len } => {
                let joint = Self::joint_key(&pending.keys, *key_len);
                let action: Vec<usize> = pending.actions.iter().map(|a| a.unwrap_or(0)).collect();
                let reward: f64 = pending.rewards.iter().sum();
                let done = pending.episode_over;
                let next_joint = Self::joint_key(next, *key_len);
                let next_key = if done { None } else { Some(&next_joint) };
                update_centralized(table, space, &joint, &action, reward, next_key, cfg)?;
            }
        }
        Ok(())
    }
}

fn pick<R: Rng + ?Sized>(q: &QTable, key: &StateKey, epsilon: f64, rng: &mut R) -> usize {
    if epsilon > 0.0 {
        select_action(q, key, epsilon, rng)
    } else {
        greedy_action(q, key, rng)
    }
}

/// One vehicle-step of the trajectory log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub episode: u64,
    pub step: usize,
    /// Time at the end of the step.
    pub time: f64,
    pub vehicle: usize,
    pub approach: Approach,
    /// Position and speed after the step.
    pub p: f64,
    pub v: f64,
    pub u: f64,
    pub reward: RewardBreakdown,
    pub events: VehicleEvents,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleOutcome {
    pub id: usize,
    pub approach: Approach,
    /// Actual control-zone entry time (after any spawn delay).
    pub entry_time: Option<f64>,
    pub v0: f64,
    /// Interpolated merging-zone entry time.
    pub merge_time: Option<f64>,
    /// Interpolated exit time.
    pub exit_time: Option<f64>,
    /// Planned merging time, when a schedule is in use.
    pub t_star: Option<f64>,
    /// `Σ u^2 dt`.
    pub fuel: f64,
    pub rear_violations: u32,
    pub lateral_violations: u32,
    pub speed_violations: u32,
    pub total_reward: f64,
}

impl VehicleOutcome {
    pub fn travel_time(&self) -> Option<f64> {
        Some(self.exit_time? - self.entry_time?)
    }

    pub fn merge_error(&self) -> Option<f64> {
        Some((self.merge_time? - self.t_star?).abs())
    }
}

/// Summary of one episode, with its step records when they were requested.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeLog {
    pub episode: u64,
    pub crashed: bool,
    pub crash_step: Option<usize>,
    pub timed_out: bool,
    pub steps: usize,
    pub vehicles: Vec<VehicleOutcome>,
    pub records: Vec<StepRecord>,
}

impl EpisodeLog {
    pub fn rear_violations(&self) -> u32 {
        self.vehicles.iter().map(|v| v.rear_violations).sum()
    }

    pub fn lateral_violations(&self) -> u32 {
        self.vehicles.iter().map(|v| v.lateral_violations).sum()
    }

    /// True when vehicles entered the merging zone in control-zone entry
    /// order.
    pub fn fifo_respected(&self) -> bool {
        let mut order: Vec<&VehicleOutcome> = self.vehicles.iter().collect();
        if order.iter().any(|v| v.entry_time.is_none() || v.merge_time.is_none()) {
            return false;
        }
        order.sort_by(|a, b| a.entry_time.unwrap().total_cmp(&b.entry_time.unwrap()).then(a.id.cmp(&b.id)));
        order.windows(2).all(|w| w[0].merge_time.unwrap() <= w[1].merge_time.unwrap())
    }

    pub fn total_reward(&self) -> f64 {
        self.vehicles.iter().map(|v| v.total_reward).sum()
    }
}

/// A finished step whose update still waits for the next observation.
struct PendingStep {
    keys: Vec<Option<StateKey>>,
    actions: Vec<Option<usize>>,
    rewards: Vec<f64>,
    terminal: Vec<bool>,
    episode_over: bool,
}

/// Exploration settings and update rule for a learning episode.
pub struct Learning<'a> {
    pub config: &'a LearnerConfig,
    pub epsilon: f64,
}

fn observe_keys(
    preset: &ScenarioPreset,
    grid: &DiscreteGrid,
    states: &[CavState],
    schedule: Option<&FifoSchedule>,
) -> Vec<Option<StateKey>> {
    (0..states.len())
        .map(|i| {
            if !states[i].is_active() {
                return None;
            }
            Some(match (preset.framework, schedule) {
                (Framework::Combined, Some(plan)) => {
                    combined_observe(states, i, plan, grid, &preset.intersection)
                }
                _ => encode_state(&observe(states, i, &preset.intersection), grid),
            })
        })
        .collect()
}

fn crossing_time(before: &CavState, after: &CavState, line: f64, t_start: f64, dt: f64) -> f64 {
    let travelled = after.p - before.p;
    if travelled <= 0.0 {
        return t_start + dt;
    }
    t_start + dt * ((line - before.p) / travelled).clamp(0.0, 1.0)
}

/// Runs one episode. With `learning` set, the agents are updated after every
/// step; otherwise they act greedily and are left untouched.
pub fn run_episode(
    agents: &mut Agents,
    preset: &ScenarioPreset,
    seed: u64,
    episode: u64,
    learning: Option<Learning<'_>>,
    keep_records: bool,
) -> Result<EpisodeLog, HarnessError> {
    let (mut scenario_rng, mut rng) = episode_rngs(seed, episode);
    let spawns = initial_conditions(preset, &mut scenario_rng);
    let schedule = match preset.framework {
        Framework::Combined => Some(schedule_for(preset, &spawns)?),
        Framework::Standalone => None,
    };
    let mut driver = EpisodeDriver::new(preset, episode, spawns, schedule, keep_records);
    match learning {
        Some(l) => driver.run(agents, Some((l.config, l.epsilon)), &mut rng),
        None => driver.run(agents, None, &mut rng),
    }
}

/// Greedy episode against frozen tables.
pub fn run_greedy_episode(
    agents: &Agents,
    preset: &ScenarioPreset,
    seed: u64,
    episode: u64,
    keep_records: bool,
) -> Result<EpisodeLog, HarnessError> {
    let (mut scenario_rng, mut rng) = episode_rngs(seed, episode);
    let spawns = initial_conditions(preset, &mut scenario_rng);
    let schedule = match preset.framework {
        Framework::Combined => Some(schedule_for(preset, &spawns)?),
        Framework::Standalone => None,
    };
    let mut driver = EpisodeDriver::new(preset, episode, spawns, schedule, keep_records);
    driver.run_frozen(agents, &mut rng)
}

struct EpisodeDriver<'p> {
    preset: &'p ScenarioPreset,
    grid: DiscreteGrid,
    episode: u64,
    spawns: Vec<Spawn>,
    schedule: Option<FifoSchedule>,
    states: Vec<CavState>,
    entry_steps: Vec<Option<usize>>,
    outcomes: Vec<VehicleOutcome>,
    records: Vec<StepRecord>,
    keep_records: bool,
    actions: Vec<f64>,
}

impl<'p> EpisodeDriver<'p> {
    fn new(
        preset: &'p ScenarioPreset,
        episode: u64,
        spawns: Vec<Spawn>,
        schedule: Option<FifoSchedule>,
        keep_records: bool,
    ) -> Self {
        let dt = preset.sim.dt;
        let states: Vec<CavState> = spawns
            .iter()
            .enumerate()
            .map(|(i, s)| CavState::pending(i, s.approach, s.entry_time(dt), s.v0))
            .collect();
        let outcomes = spawns
            .iter()
            .enumerate()
            .map(|(i, s)| VehicleOutcome {
                id: i,
                approach: s.approach,
                entry_time: None,
                v0: s.v0,
                merge_time: None,
                exit_time: None,
                t_star: schedule.as_ref().map(|plan| plan.t_star(i)),
                fuel: 0.0,
                rear_violations: 0,
                lateral_violations: 0,
                speed_violations: 0,
                total_reward: 0.0,
            })
            .collect();
        let n = spawns.len();
        Self {
            preset,
            grid: preset.grid(),
            episode,
            spawns,
            schedule,
            states,
            entry_steps: vec![None; n],
            outcomes,
            records: Vec::new(),
            keep_records,
            actions: vec![0.0; n],
        }
    }

    /// Activates arrivals due at step `k`, holding a vehicle back until the
    /// previous vehicle on its approach is far enough ahead for
    /// [`safe_entry_gap`].
    fn activate(&mut self, k: usize) {
        let sim = &self.preset.sim;
        let dt = sim.dt;
        for i in 0..self.states.len() {
            if self.states[i].phase != Phase::NotArrived || self.spawns[i].entry_step > k {
                continue;
            }
            let me = self.states[i];
            let blocked = self.states[..i].iter().any(|s| {
                s.approach == me.approach
                    && (s.phase == Phase::NotArrived
                        || (s.is_active() && s.p < safe_entry_gap(me.v0, s.v, sim)))
            });
            if blocked {
                continue;
            }
            let s = &mut self.states[i];
            s.phase = Phase::InControlZone;
            s.p = 0.0;
            s.v = s.v0;
            s.t0 = k as f64 * dt;
            self.entry_steps[i] = Some(k);
            self.outcomes[i].entry_time = Some(s.t0);
        }
    }

    fn all_done(&self) -> bool {
        self.states.iter().all(|s| s.phase == Phase::Exited)
    }

    fn run_frozen<R: Rng + ?Sized>(&mut self, agents: &Agents, rng: &mut R) -> Result<EpisodeLog, HarnessError> {
        agents.check_shape(self.preset)?;
        let max_steps = self.preset.sim.max_steps_for(&self.preset.intersection);
        let mut crash_step = None;
        let mut k = 0;
        while k < max_steps {
            self.activate(k);
            if self.all_done() {
                break;
            }
            let keys = observe_keys(self.preset, &self.grid, &self.states, self.schedule.as_ref());
            let actions = agents.select(&keys, 0.0, rng);
            let (_, crashed) = self.advance(k, &actions, crash_step.is_some())?;
            k += 1;
            if crashed {
                crash_step = Some(k - 1);
                break;
            }
        }
        Ok(self.finish(k, crash_step, max_steps))
    }

    fn run<R: Rng + ?Sized>(
        &mut self,
        agents: &mut Agents,
        learning: Option<(&LearnerConfig, f64)>,
        rng: &mut R,
    ) -> Result<EpisodeLog, HarnessError> {
        agents.check_shape(self.preset)?;
        let max_steps = self.preset.sim.max_steps_for(&self.preset.intersection);
        let epsilon = learning.map_or(0.0, |(_, e)| e);
        let mut pending: Option<PendingStep> = None;
        let mut crash_step = None;
        let mut k = 0;
        while k < max_steps {
            self.activate(k);
            let keys = observe_keys(self.preset, &self.grid, &self.states, self.schedule.as_ref());
            if let (Some(p), Some((cfg, _))) = (pending.take(), learning) {
                agents.learn(&p, &keys, cfg)?;
            }
            if self.all_done() {
                break;
            }
            let actions = agents.select(&keys, epsilon, rng);
            let (rewards, crashed) = self.advance(k, &actions, false)?;
            k += 1;
            let terminal: Vec<bool> = self
                .states
                .iter()
                .map(|s| crashed || s.phase == Phase::Exited)
                .collect();
            let step = PendingStep {
                keys,
                actions,
                rewards,
                episode_over: crashed || self.all_done(),
                terminal,
            };
            if crashed {
                crash_step = Some(k - 1);
                if let Some((cfg, _)) = learning {
                    agents.learn(&step, &vec![None; self.states.len()], cfg)?;
                }
                break;
            }
            pending = Some(step);
        }
        if let (Some(p), Some((cfg, _))) = (pending.take(), learning) {
            // time limit: bootstrap from the last observation
            let keys = observe_keys(self.preset, &self.grid, &self.states, self.schedule.as_ref());
            agents.learn(&p, &keys, cfg)?;
        }
        Ok(self.finish(k, crash_step, max_steps))
    }

    /// Applies one step: dynamics, rewards, bookkeeping. Returns per-vehicle
    /// rewards and whether the step crashed.
    fn advance(&mut self, k: usize, actions: &[Option<usize>], crashed_before: bool) -> Result<(Vec<f64>, bool), HarnessError> {
        let preset = self.preset;
        let sim = &preset.sim;
        let inter = &preset.intersection;
        let dt = sim.dt;
        for (slot, a) in self.actions.iter_mut().zip(actions) {
            *slot = a.map_or(0.0, |a| self.grid.action_value(a));
        }
        let outcome = env::step(&self.states, &self.actions, sim, inter)?;
        let t_start = k as f64 * dt;
        let t_end = t_start + dt;
        let crash_free = !(crashed_before || outcome.crashed);
        let mut rewards = vec![0.0; self.states.len()];
        for i in 0..self.states.len() {
            let before = self.states[i];
            if !before.is_active() {
                continue;
            }
            let after = outcome.states[i];
            let ev = outcome.events[i];
            let u = self.actions[i];
            let entry_step = self.entry_steps[i].expect("active vehicle has an entry step");
            let out = &mut self.outcomes[i];

            let mut b = RewardBreakdown {
                fuel: rewards::r_fuel(u, sim),
                delay: rewards::r_delay(k + 1 - entry_step, after.p, before.v0, dt),
                speed: rewards::r_speed(ev.speed_violation),
                rear: rewards::r_rear(ev.rear_violation),
                lateral: rewards::r_lateral(ev.lateral_violations),
                ..RewardBreakdown::default()
            };
            if ev.entered_merging {
                out.merge_time = Some(crossing_time(&before, &after, inter.control_zone_length, t_start, dt));
            }
            if let (Some(t_star), true) = (out.t_star, before.phase == Phase::InControlZone) {
                b.fifo = match out.merge_time.filter(|_| ev.entered_merging) {
                    Some(t_m) => rewards::r_fifo(t_m, t_star, true),
                    None => {
                        let eat = rewards::estimate_arrival_time(t_end, after.p, after.v, inter.control_zone_length);
                        rewards::r_fifo(eat, t_star, false)
                    }
                };
            }
            if ev.exited_control_zone {
                out.exit_time = Some(crossing_time(&before, &after, inter.exit_position(), t_start, dt));
                b.terminal = rewards::r_terminal(preset.vehicles, crash_free);
            }
            let b = b.with_total(&preset.weights, preset.framework);
            rewards[i] = b.total;

            out.fuel += u * u * dt;
            out.rear_violations += ev.rear_violation as u32;
            out.lateral_violations += ev.lateral_violations;
            out.speed_violations += ev.speed_violation as u32;
            out.total_reward += b.total;

            if self.keep_records {
                self.records.push(StepRecord {
                    episode: self.episode,
                    step: k,
                    time: t_end,
                    vehicle: i,
                    approach: before.approach,
                    p: after.p,
                    v: after.v,
                    u,
                    reward: b,
                    events: ev,
                });
            }
        }
        self.states = outcome.states;
        Ok((rewards, outcome.crashed))
    }

    fn finish(&mut self, steps: usize, crash_step: Option<usize>, max_steps: usize) -> EpisodeLog {
        EpisodeLog {
            episode: self.episode,
            crashed: crash_step.is_some(),
            crash_step,
            timed_out: crash_step.is_none() && steps >= max_steps && !self.all_done(),
            steps,
            vehicles: core::mem::take(&mut self.outcomes),
            records: core::mem::take(&mut self.records),
        }
    }
}

/// Per-agent Q-table norms after `episode` completed episodes.
#[derive(Debug, Clone, PartialEq)]
pub struct NormRecord {
    pub episode: u64,
    pub norms: Vec<f64>,
}

impl NormRecord {
    pub fn average(&self) -> f64 {
        if self.norms.is_empty() {
            0.0
        } else {
            self.norms.iter().sum::<f64>() / self.norms.len() as f64
        }
    }
}

/// Callbacks during training. Every method has a no-op default.
pub trait TrainObserver {
    /// Whether to keep step records for `episode`.
    fn wants_records(&mut self, _episode: u64) -> bool {
        false
    }
    fn on_episode(&mut self, _log: &EpisodeLog, _epsilon: f64) {}
    fn on_norms(&mut self, _record: &NormRecord) {}
}

impl TrainObserver for () {}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub agents: Agents,
    pub norms: Vec<NormRecord>,
    pub episodes: u64,
    pub crashed_episodes: u64,
}

/// Trains fresh tables for `learner.total_episodes` episodes.
pub fn train(preset: &ScenarioPreset, learner: &LearnerConfig, seed: u64) -> Result<TrainOutcome, HarnessError> {
    train_with(preset, learner, seed, &mut ())
}

pub fn train_with(
    preset: &ScenarioPreset,
    learner: &LearnerConfig,
    seed: u64,
    observer: &mut dyn TrainObserver,
) -> Result<TrainOutcome, HarnessError> {
    preset.validate()?;
    learner.validate()?;
    let agents = Agents::new(preset, learner)?;
    continue_training(agents, preset, learner, seed, 0, observer)
}

/// Resumes training `agents` from episode `start` up to
/// `learner.total_episodes`.
pub fn continue_training(
    mut agents: Agents,
    preset: &ScenarioPreset,
    learner: &LearnerConfig,
    seed: u64,
    start: u64,
    observer: &mut dyn TrainObserver,
) -> Result<TrainOutcome, HarnessError> {
    preset.validate()?;
    learner.validate()?;
    let mut norms = Vec::new();
    let mut crashed_episodes = 0;
    for episode in start..learner.total_episodes {
        let epsilon = epsilon_at(episode, learner);
        let keep = observer.wants_records(episode);
        let log = run_episode(
            &mut agents,
            preset,
            seed,
            episode,
            Some(Learning { config: learner, epsilon }),
            keep,
        )?;
        crashed_episodes += log.crashed as u64;
        observer.on_episode(&log, epsilon);
        if (episode + 1) % NORM_INTERVAL == 0 {
            let record = NormRecord {
                episode: episode + 1,
                norms: agents.norms(),
            };
            observer.on_norms(&record);
            norms.push(record);
        }
    }
    Ok(TrainOutcome {
        agents,
        norms,
        episodes: learner.total_episodes.saturating_sub(start),
        crashed_episodes,
    })
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalSummary {
    pub episodes: usize,
    pub crashes: usize,
    pub rear_violation_episodes: usize,
    pub lateral_violation_episodes: usize,
    pub timeouts: usize,
    pub crash_rate: f64,
    pub mean_travel_time: f64,
    pub mean_delay: f64,
    pub mean_fuel: f64,
    /// Among crash-free episodes.
    pub fifo_respected_fraction: f64,
    /// Mean `|t_m - t*|` over vehicles that reached the merging zone, when a
    /// schedule is in use.
    pub mean_merge_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub summary: EvalSummary,
    pub episodes: Vec<EpisodeLog>,
}

/// Greedy evaluation over `episodes` episodes of the run seeded `seed`.
pub fn evaluate(
    agents: &Agents,
    preset: &ScenarioPreset,
    episodes: u64,
    seed: u64,
    keep_records: bool,
) -> Result<EvalReport, HarnessError> {
    preset.validate()?;
    let logs = (0..episodes)
        .map(|e| run_greedy_episode(agents, preset, seed, e, keep_records))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(EvalReport {
        summary: summarize(preset, &logs),
        episodes: logs,
    })
}

pub fn summarize(preset: &ScenarioPreset, logs: &[EpisodeLog]) -> EvalSummary {
    let route = preset.intersection.exit_position();
    let mut s = EvalSummary {
        episodes: logs.len(),
        ..EvalSummary::default()
    };
    let (mut travel, mut delay, mut travel_n) = (0.0, 0.0, 0usize);
    let (mut fuel, mut fuel_n) = (0.0, 0usize);
    let (mut merge_err, mut merge_n) = (0.0, 0usize);
    let (mut fifo_ok, mut clean) = (0usize, 0usize);
    for log in logs {
        s.crashes += log.crashed as usize;
        s.rear_violation_episodes += (log.rear_violations() > 0) as usize;
        s.lateral_violation_episodes += (log.lateral_violations() > 0) as usize;
        s.timeouts += log.timed_out as usize;
        if !log.crashed {
            clean += 1;
            fifo_ok += log.fifo_respected() as usize;
        }
        for v in &log.vehicles {
            if let Some(tt) = v.travel_time() {
                travel += tt;
                delay += tt - route / v.v0;
                travel_n += 1;
                fuel += v.fuel;
                fuel_n += 1;
            }
            if let Some(e) = v.merge_error() {
                merge_err += e;
                merge_n += 1;
            }
        }
    }
    let mean = |sum: f64, n: usize| if n == 0 { 0.0 } else { sum / n as f64 };
    s.crash_rate = mean(s.crashes as f64, s.episodes);
    s.mean_travel_time = mean(travel, travel_n);
    s.mean_delay = mean(delay, travel_n);
    s.mean_fuel = mean(fuel, fuel_n);
    s.fifo_respected_fraction = mean(fifo_ok as f64, clean);
    s.mean_merge_error = match preset.framework {
        Framework::Combined => Some(mean(merge_err, merge_n)),
        Framework::Standalone => None,
    };
    s
}

/// Baseline on the initial conditions of `episode` of the run seeded `seed`.
pub fn baseline_episode(preset: &ScenarioPreset, seed: u64, episode: u64) -> Result<BaselineRun, HarnessError> {
    let spawns = episode_initial_conditions(preset, seed, episode);
    let entries: Vec<ScheduleEntry> = spawns
        .iter()
        .map(|s| ScheduleEntry {
            t0: s.entry_time(preset.sim.dt),
            v0: s.v0,
            approach: s.approach,
        })
        .collect();
    Ok(run_baseline(&entries, &preset.intersection, &preset.sim)?)
}

/// Paired per-vehicle comparison row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairedRow {
    pub episode: u64,
    pub vehicle: usize,
    pub rl_travel_time: f64,
    pub baseline_travel_time: f64,
    pub rl_fuel: f64,
    pub baseline_fuel: f64,
    /// The baseline trajectory met its speed, control and spacing constraints.
    pub baseline_within_bounds: bool,
}

impl PairedRow {
    pub fn travel_delta(&self) -> f64 {
        self.rl_travel_time - self.baseline_travel_time
    }

    pub fn fuel_delta(&self) -> f64 {
        self.rl_fuel - self.baseline_fuel
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ComparisonReport {
    pub rows: Vec<PairedRow>,
    pub mean_travel_delta: f64,
    pub mean_fuel_delta: f64,
    pub mean_rl_travel_time: f64,
    pub mean_baseline_travel_time: f64,
    pub mean_rl_fuel: f64,
    pub mean_baseline_fuel: f64,
    /// Rows left out of the means because the baseline broke a bound.
    pub out_of_bounds: usize,
}

/// Pairs learned and baseline outcomes vehicle by vehicle. Vehicles that did
/// not finish under the learned policy are skipped; the means cover only rows
/// whose baseline stayed within bounds.
pub fn compare(rl: &[EpisodeLog], baseline: &[BaselineRun], dt: f64) -> ComparisonReport {
    let mut rows = Vec::new();
    for (log, base) in rl.iter().zip(baseline) {
        for (v, b) in log.vehicles.iter().zip(&base.vehicles) {
            if let Some(tt) = v.travel_time() {
                rows.push(PairedRow {
                    episode: log.episode,
                    vehicle: v.id,
                    rl_travel_time: tt,
                    baseline_travel_time: b.travel_time(),
                    rl_fuel: v.fuel,
                    baseline_fuel: b.fuel(dt),
                    baseline_within_bounds: b.trajectory.warnings.is_empty(),
                });
            }
        }
    }
    let valid = rows.iter().filter(|r| r.baseline_within_bounds).count();
    let n = valid.max(1) as f64;
    let avg = |f: fn(&PairedRow) -> f64| rows.iter().filter(|r| r.baseline_within_bounds).map(f).sum::<f64>() / n;
    ComparisonReport {
        out_of_bounds: rows.len() - valid,
        mean_travel_delta: avg(PairedRow::travel_delta),
        mean_fuel_delta: avg(PairedRow::fuel_delta),
        mean_rl_travel_time: avg(|r| r.rl_travel_time),
        mean_baseline_travel_time: avg(|r| r.baseline_travel_time),
        mean_rl_fuel: avg(|r| r.rl_fuel),
        mean_baseline_fuel: avg(|r| r.baseline_fuel),
        rows,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrajectorySource {
    Learned,
    Baseline,
}

impl TrajectorySource {
    pub fn name(self) -> &'static str {
        match self {
            TrajectorySource::Learned => "rl",
            TrajectorySource::Baseline => "baseline",
        }
    }
}

/// Position-versus-time series of one vehicle.
#[derive(Debug, Clone, PartialEq)]
pub struct OverlaySeries {
    pub vehicle: usize,
    pub source: TrajectorySource,
    pub points: Vec<(f64, f64)>,
}

/// Learned and baseline position traces for one episode, sampled every `dt`.
/// Baseline traces are cut after `max_samples` points.
pub fn position_overlay(log: &EpisodeLog, baseline: &BaselineRun, dt: f64, max_samples: usize) -> Vec<OverlaySeries> {
    let mut out = Vec::new();
    for v in &log.vehicles {
        let mut points: Vec<(f64, f64)> = v.entry_time.map(|t| vec![(t, 0.0)]).unwrap_or_default();
        points.extend(log.records.iter().filter(|r| r.vehicle == v.id).map(|r| (r.time, r.p)));
        out.push(OverlaySeries {
            vehicle: v.id,
            source: TrajectorySource::Learned,
            points,
        });
    }
    for b in &baseline.vehicles {
        let start = b.t0();
        let steps = libm::ceil((b.exit_time - start) / dt);
        let truncated = !(steps <= max_samples as f64);
        let steps = if truncated { max_samples } else { steps as usize };
        let mut points: Vec<(f64, f64)> = (0..steps)
            .filter_map(|k| {
                let t = start + k as f64 * dt;
                b.kinematics_at(t).map(|(p, _, _)| (t, p))
            })
            .collect();
        if !truncated {
            points.push((b.exit_time, baseline_exit_position(baseline, b.id)));
        }
        out.push(OverlaySeries {
            vehicle: b.id,
            source: TrajectorySource::Baseline,
            points,
        });
    }
    out
}

fn baseline_exit_position(run: &BaselineRun, id: usize) -> f64 {
    let v = &run.vehicles[id];
    v.kinematics_at(v.merge_time()).map_or(0.0, |(p, _, _)| p)
        + v.merge_speed * (v.exit_time - v.merge_time())
}
