//! Learning stabilizers.
//!
//! Every agent is driven through [`Agent`]: `act` picks an action without
//! learning, `learn` consumes one transition and, for non-terminal
//! transitions, returns the action to take next. Leaving action selection to
//! `learn` lets on-policy and off-policy variants order selection and update
//! the way their update rules require.

pub mod actor_critic;
pub mod tabular;
pub mod vfa;

use crate::codec::FeatureScales;
use crate::env::Action;
use crate::physics::State;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

pub use actor_critic::{AcHyper, AcWeights, ActionRule, ActorCriticAgent, TraceForm};
pub use tabular::{QTable, TabularAgent, TdHyper, TdMode};
pub use vfa::{VfaAgent, VfaHyper, VfaTarget, VfaWeights};

/// RNG used by agents and the harness.
pub type AgentRng = ChaCha8Rng;

#[derive(Debug, Error, PartialEq)]
pub enum AgentError {
    #[error("action requested for the FAILURE box")]
    FailureBox,
    #[error("SARSA update on a non-terminal transition needs the next action")]
    MissingNextAction,
    #[error("box index {index} out of range for {count} boxes")]
    BoxOutOfRange { index: usize, count: usize },
    #[error("parameters for {found} cannot be loaded into a {expected} agent")]
    KindMismatch {
        expected: &'static str,
        found: &'static str,
    },
    #[error("parameter dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: String, found: String },
    #[error("invalid hyperparameter `{name}` = {value}: {requirement}")]
    BadHyper {
        name: &'static str,
        value: f64,
        requirement: &'static str,
    },
}

pub(crate) fn check(
    name: &'static str,
    value: f64,
    ok: bool,
    requirement: &'static str,
) -> Result<(), AgentError> {
    if ok && value.is_finite() {
        Ok(())
    } else {
        Err(AgentError::BadHyper {
            name,
            value,
            requirement,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    QLearning,
    Sarsa,
    ActorCritic,
    Vfa,
}

impl AgentKind {
    pub const ALL: [AgentKind; 4] = [
        AgentKind::QLearning,
        AgentKind::Sarsa,
        AgentKind::ActorCritic,
        AgentKind::Vfa,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            AgentKind::QLearning => "q_learning",
            AgentKind::Sarsa => "sarsa",
            AgentKind::ActorCritic => "actor_critic",
            AgentKind::Vfa => "vfa",
        }
    }
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AgentKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AgentKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown agent `{s}`"))
    }
}

pub trait Agent: Send {
    fn kind(&self) -> AgentKind;

    /// Picks an action for `s` without changing any learned quantity.
    fn act(&mut self, s: &State, rng: &mut AgentRng) -> Action;

    /// Learns from `(s, a, reward, next)`; `next` is `None` on a terminal
    /// transition. Returns the action to take from `next`.
    fn learn(
        &mut self,
        s: &State,
        a: Action,
        reward: f64,
        next: Option<&State>,
        rng: &mut AgentRng,
    ) -> Option<Action>;

    /// Snapshot of every learned quantity.
    fn params(&self) -> AgentParams;

    /// Replaces the learned quantities; nothing changes on error.
    fn set_params(&mut self, params: AgentParams) -> Result<(), AgentError>;

    /// Clears per-episode memory. Called when an episode is truncated without
    /// a terminal transition.
    fn end_episode(&mut self) {}
}

/// Learned state of any agent, in the shape it is persisted.
#[derive(Clone, Debug, PartialEq)]
pub enum AgentParams {
    Table(QTable),
    ActorCritic(AcWeights),
    Vfa {
        weights: VfaWeights,
        scales: FeatureScales,
    },
}

impl AgentParams {
    pub fn label(&self) -> &'static str {
        match self {
            AgentParams::Table(_) => "q_table",
            AgentParams::ActorCritic(_) => "actor_critic",
            AgentParams::Vfa { .. } => "vfa",
        }
    }
}

/// Tie-aware greedy choice between two values.
pub(crate) fn greedy(values: [f64; 2], rng: &mut AgentRng) -> Action {
    use rand::Rng;
    if values[0] == values[1] {
        if rng.random_bool(0.5) {
            Action::Right
        } else {
            Action::Left
        }
    } else if values[1] > values[0] {
        Action::Right
    } else {
        Action::Left
    }
}
