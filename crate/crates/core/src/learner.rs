//! Tabular Q-learning.
//!
//! Tables are sparse: a row of action values is allocated the first time a
//! state is written, and every unseen `(state, action)` pair reads as zero.
//! Three update rules share the same table type:
//!
//! * hysteretic: separate rates for positive (`alpha`) and negative (`beta`)
//!   TD errors, so penalties caused by teammates' exploration decay slowly;
//! * independent: plain Q-learning on each agent's own observations;
//! * centralized: one table over the joint state and joint action.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use hashbrown::HashMap;
use rand::Rng;
use rustc_hash::FxBuildHasher;

use crate::domain::StateKey;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LearnerError {
    #[error("learning rates must satisfy 0 < beta < alpha <= 1 for hysteretic updates (alpha = {alpha}, beta = {beta})")]
    HystereticRates { alpha: f64, beta: f64 },
    #[error("alpha must lie in (0, 1], got {0}")]
    Alpha(f64),
    #[error("gamma must lie in [0, 1], got {0}")]
    Gamma(f64),
    #[error("exploration ratios must lie in [0, 1] (initial = {initial}, final = {last})")]
    Epsilon { initial: f64, last: f64 },
    #[error("joint action space of {agents} agents x {per_agent} actions exceeds the cap of {cap}")]
    JointSpaceTooLarge { agents: usize, per_agent: usize, cap: usize },
    #[error("joint action has {got} components, expected {expected}")]
    JointActionArity { expected: usize, got: usize },
    #[error("action {action} out of range for {count} actions")]
    ActionOutOfRange { action: usize, count: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum UpdateMode {
    Hysteretic,
    Independent,
    Centralized,
}

impl UpdateMode {
    pub fn name(self) -> &'static str {
        match self {
            UpdateMode::Hysteretic => "hysteretic",
            UpdateMode::Independent => "independent",
            UpdateMode::Centralized => "centralized",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        [UpdateMode::Hysteretic, UpdateMode::Independent, UpdateMode::Centralized]
            .into_iter()
            .find(|m| m.name() == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct LearnerConfig {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub epsilon_initial: f64,
    pub epsilon_final: f64,
    pub total_episodes: u64,
    pub mode: UpdateMode,
    /// Largest joint action space a centralized table may use.
    pub max_joint_actions: usize,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            alpha: 0.4,
            beta: 0.05,
            gamma: 0.95,
            epsilon_initial: 0.6,
            epsilon_final: 0.01,
            total_episodes: 2_000_000,
            mode: UpdateMode::Hysteretic,
            max_joint_actions: 1 << 16,
        }
    }
}

impl LearnerConfig {
    pub fn validate(&self) -> Result<(), LearnerError> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(LearnerError::Alpha(self.alpha));
        }
        if self.mode == UpdateMode::Hysteretic && !(self.beta > 0.0 && self.beta < self.alpha) {
            return Err(LearnerError::HystereticRates {
                alpha: self.alpha,
                beta: self.beta,
            });
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(LearnerError::Gamma(self.gamma));
        }
        let unit = 0.0..=1.0;
        if !unit.contains(&self.epsilon_initial) || !unit.contains(&self.epsilon_final) {
            return Err(LearnerError::Epsilon {
                initial: self.epsilon_initial,
                last: self.epsilon_final,
            });
        }
        Ok(())
    }
}

type Rows = HashMap<StateKey, Box<[f64]>, FxBuildHasher>;

/// Sparse action-value table with implicit zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    actions: usize,
    rows: Rows,
}

impl QTable {
    pub fn new(actions: usize) -> Self {
        assert!(actions > 0, "action space must be nonempty");
        Self {
            actions,
            rows: Rows::default(),
        }
    }

    pub fn action_count(&self) -> usize {
        self.actions
    }

    /// Number of states with a stored row.
    pub fn state_count(&self) -> usize {
        self.rows.len()
    }

    pub fn get(&self, s: &StateKey, a: usize) -> f64 {
        self.rows.get(s).map_or(0.0, |row| row[a])
    }

    pub fn row(&self, s: &StateKey) -> Option<&[f64]> {
        self.rows.get(s).map(|r| &r[..])
    }

    /// `max_a Q(s, a)`, zero for unseen states.
    pub fn max_value(&self, s: &StateKey) -> f64 {
        match self.rows.get(s) {
            Some(row) => row.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            None => 0.0,
        }
    }

    pub fn set(&mut self, s: &StateKey, a: usize, value: f64) {
        assert!(a < self.actions, "action {a} out of range");
        let actions = self.actions;
        if let Some(row) = self.rows.get_mut(s) {
            row[a] = value;
        } else {
            let mut row = vec![0.0; actions].into_boxed_slice();
            row[a] = value;
            self.rows.insert(s.clone(), row);
        }
    }

    /// All stored `(state, action, value)` entries, in no particular order.
    pub fn entries(&self) -> impl Iterator<Item = (&StateKey, usize, f64)> + '_ {
        self.rows
            .iter()
            .flat_map(|(k, row)| row.iter().enumerate().map(move |(a, &v)| (k, a, v)))
    }

    /// Stored entries sorted by state key then action.
    pub fn sorted_entries(&self) -> Vec<(&StateKey, usize, f64)> {
        let mut keys: Vec<&StateKey> = self.rows.keys().collect();
        keys.sort();
        keys.into_iter()
            .flat_map(|k| self.rows[k].iter().enumerate().map(move |(a, &v)| (k, a, v)))
            .collect()
    }

    /// Euclidean norm over all stored entries.
    pub fn norm(&self) -> f64 {
        let sum: f64 = self.rows.values().flat_map(|r| r.iter()).map(|v| v * v).sum();
        libm::sqrt(sum)
    }
}

/// Euclidean norm of a table's stored entries.
pub fn q_norm(q: &QTable) -> f64 {
    q.norm()
}

/// Linearly decayed exploration ratio for `episode`.
pub fn epsilon_at(episode: u64, cfg: &LearnerConfig) -> f64 {
    let rho = if cfg.total_episodes == 0 {
        0.0
    } else {
        let total = cfg.total_episodes as f64;
        ((total - episode as f64) / total).max(0.0)
    };
    (cfg.epsilon_initial - cfg.epsilon_final) * rho + cfg.epsilon_final
}

/// Greedy action with ties broken uniformly at random.
pub fn greedy_action<R: Rng + ?Sized>(q: &QTable, s: &StateKey, rng: &mut R) -> usize {
    let Some(row) = q.row(s) else {
        return rng.random_range(0..q.action_count());
    };
    let best = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let ties = row.iter().filter(|&&v| v == best).count();
    let pick = if ties == 1 { 0 } else { rng.random_range(0..ties) };
    row.iter()
        .enumerate()
        .filter(|&(_, &v)| v == best)
        .nth(pick)
        .map(|(a, _)| a)
        .expect("row has a maximum")
}

/// Epsilon-greedy: a uniformly random action with probability `epsilon`,
/// otherwise a greedy one.
pub fn select_action<R: Rng + ?Sized>(q: &QTable, s: &StateKey, epsilon: f64, rng: &mut R) -> usize {
    if epsilon > 0.0 && rng.random::<f64>() < epsilon {
        rng.random_range(0..q.action_count())
    } else {
        greedy_action(q, s, rng)
    }
}

/// `r + gamma max_a' Q(s', a') - Q(s, a)`, with `next = None` marking a
/// terminal transition.
pub fn td_error(q: &QTable, s: &StateKey, a: usize, r: f64, next: Option<&StateKey>, gamma: f64) -> f64 {
    let bootstrap = next.map_or(0.0, |n| gamma * q.max_value(n));
    r + bootstrap - q.get(s, a)
}

/// Hysteretic update; returns the new `Q(s, a)`.
pub fn update_hysteretic(
    q: &mut QTable,
    s: &StateKey,
    a: usize,
    r: f64,
    next: Option<&StateKey>,
    cfg: &LearnerConfig,
) -> f64 {
    let delta = td_error(q, s, a, r, next, cfg.gamma);
    let rate = if delta >= 0.0 { cfg.alpha } else { cfg.beta };
    let value = q.get(s, a) + rate * delta;
    q.set(s, a, value);
    value
}

/// Independent-learner update with the single rate `alpha`.
pub fn update_independent(
    q: &mut QTable,
    s: &StateKey,
    a: usize,
    r: f64,
    next: Option<&StateKey>,
    cfg: &LearnerConfig,
) -> f64 {
    let delta = td_error(q, s, a, r, next, cfg.gamma);
    let value = q.get(s, a) + cfg.alpha * delta;
    q.set(s, a, value);
    value
}

/// Mixed-radix indexing of joint actions, first agent most significant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct JointActionSpace {
    pub agents: usize,
    pub per_agent: usize,
    size: usize,
}

impl JointActionSpace {
    pub fn new(agents: usize, per_agent: usize, cap: usize) -> Result<Self, LearnerError> {
        let too_large = LearnerError::JointSpaceTooLarge {
            agents,
            per_agent,
            cap,
        };
        let size = u32::try_from(agents)
            .ok()
            .and_then(|n| per_agent.checked_pow(n))
            .ok_or(too_large.clone())?;
        if size > cap {
            return Err(too_large);
        }
        Ok(Self {
            agents,
            per_agent,
            size,
        })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn encode(&self, joint: &[usize]) -> Result<usize, LearnerError> {
        if joint.len() != self.agents {
            return Err(LearnerError::JointActionArity {
                expected: self.agents,
                got: joint.len(),
            });
        }
        joint.iter().try_fold(0usize, |acc, &a| {
            if a >= self.per_agent {
                Err(LearnerError::ActionOutOfRange {
                    action: a,
                    count: self.per_agent,
                })
            } else {
                Ok(acc * self.per_agent + a)
            }
        })
    }

    pub fn decode(&self, mut index: usize) -> Vec<usize> {
        let mut joint = vec![0; self.agents];
        for slot in joint.iter_mut().rev() {
            *slot = index % self.per_agent;
            index /= self.per_agent;
        }
        joint
    }
}

/// Centralized update on the joint table; returns the new joint value.
pub fn update_centralized(
    q: &mut QTable,
    space: &JointActionSpace,
    s_joint: &StateKey,
    joint_action: &[usize],
    r_total: f64,
    next: Option<&StateKey>,
    cfg: &LearnerConfig,
) -> Result<f64, LearnerError> {
    debug_assert_eq!(q.action_count(), space.size());
    let a = space.encode(joint_action)?;
    Ok(update_independent(q, s_joint, a, r_total, next, cfg))
}
