//! One-step TD control over BOXES states: Q-learning and SARSA(0).

use super::{check, greedy, Agent, AgentError, AgentKind, AgentParams, AgentRng};
use crate::codec::{BoxIndex, BoxScheme, SchemeName};
use crate::env::Action;
use crate::physics::State;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Dense `box_count x 2` action-value table; column 0 is LEFT, column 1 RIGHT.
#[derive(Clone, Debug, PartialEq)]
pub struct QTable {
    pub scheme: SchemeName,
    pub values: Vec<[f64; 2]>,
}

impl QTable {
    pub fn zeros(scheme: SchemeName, box_count: usize) -> Self {
        Self {
            scheme,
            values: vec![[0.0; 2]; box_count],
        }
    }

    pub fn box_count(&self) -> usize {
        self.values.len()
    }

    pub fn get(&self, box_index: usize, a: Action) -> f64 {
        self.values[box_index][a.index()]
    }

    fn row(&self, b: BoxIndex) -> Result<usize, AgentError> {
        let i = b.index().ok_or(AgentError::FailureBox)?;
        if i >= self.values.len() {
            return Err(AgentError::BoxOutOfRange {
                index: i,
                count: self.values.len(),
            });
        }
        Ok(i)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TdHyper {
    pub alpha: f64,
    pub gamma: f64,
    /// Exploration rate; `0` gives the greedy-greedy setting.
    pub epsilon: f64,
}

impl Default for TdHyper {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            gamma: 0.99,
            epsilon: 0.0,
        }
    }
}

impl TdHyper {
    pub fn validate(&self) -> Result<(), AgentError> {
        check("alpha", self.alpha, self.alpha > 0.0, "must be > 0")?;
        check(
            "gamma",
            self.gamma,
            (0.0..=1.0).contains(&self.gamma),
            "must lie in [0, 1]",
        )?;
        check(
            "epsilon",
            self.epsilon,
            (0.0..=1.0).contains(&self.epsilon),
            "must lie in [0, 1]",
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TdMode {
    QLearning,
    Sarsa,
}

/// Greedy action for `box_index`, exact ties broken uniformly.
pub fn select_action(
    q: &QTable,
    box_index: BoxIndex,
    rng: &mut AgentRng,
) -> Result<Action, AgentError> {
    let row = q.row(box_index)?;
    Ok(greedy(q.values[row], rng))
}

/// Applies one TD(0) backup to `Q(box, a)`. A FAILURE `next_box` bootstraps
/// from zero.
#[allow(clippy::too_many_arguments)]
pub fn q_update(
    q: &mut QTable,
    box_index: BoxIndex,
    a: Action,
    reward: f64,
    next_box: BoxIndex,
    h: &TdHyper,
    mode: TdMode,
    next_a: Option<Action>,
) -> Result<(), AgentError> {
    let row = q.row(box_index)?;
    let bootstrap = match next_box {
        BoxIndex::Failure => 0.0,
        next => {
            let next_row = q.row(next)?;
            match mode {
                TdMode::QLearning => q.values[next_row][0].max(q.values[next_row][1]),
                TdMode::Sarsa => {
                    let na = next_a.ok_or(AgentError::MissingNextAction)?;
                    q.values[next_row][na.index()]
                }
            }
        }
    };
    let target = reward + h.gamma * bootstrap;
    let cell = &mut q.values[row][a.index()];
    *cell += h.alpha * (target - *cell);
    Ok(())
}

pub struct TabularAgent {
    pub scheme: BoxScheme,
    pub q: QTable,
    pub hyper: TdHyper,
    pub mode: TdMode,
}

impl TabularAgent {
    pub fn new(scheme: BoxScheme, hyper: TdHyper, mode: TdMode) -> Self {
        let q = QTable::zeros(scheme.name, scheme.box_count());
        Self {
            scheme,
            q,
            hyper,
            mode,
        }
    }

    fn choose(&self, b: BoxIndex, rng: &mut AgentRng) -> Action {
        if self.hyper.epsilon > 0.0 && rng.random::<f64>() < self.hyper.epsilon {
            return if rng.random_bool(0.5) {
                Action::Right
            } else {
                Action::Left
            };
        }
        select_action(&self.q, b, rng).expect("agent is only queried on in-bounds states")
    }
}

impl Agent for TabularAgent {
    fn kind(&self) -> AgentKind {
        match self.mode {
            TdMode::QLearning => AgentKind::QLearning,
            TdMode::Sarsa => AgentKind::Sarsa,
        }
    }

    fn act(&mut self, s: &State, rng: &mut AgentRng) -> Action {
        self.choose(self.scheme.get_box(s), rng)
    }

    fn learn(
        &mut self,
        s: &State,
        a: Action,
        reward: f64,
        next: Option<&State>,
        rng: &mut AgentRng,
    ) -> Option<Action> {
        let b = self.scheme.get_box(s);
        let nb = next.map_or(BoxIndex::Failure, |n| self.scheme.get_box(n));
        match self.mode {
            TdMode::QLearning => {
                q_update(&mut self.q, b, a, reward, nb, &self.hyper, self.mode, None)
                    .expect("current box is in bounds");
                next.map(|_| self.choose(nb, rng))
            }
            TdMode::Sarsa => {
                let na = next.map(|_| self.choose(nb, rng));
                q_update(&mut self.q, b, a, reward, nb, &self.hyper, self.mode, na)
                    .expect("current box is in bounds");
                na
            }
        }
    }

    fn params(&self) -> AgentParams {
        AgentParams::Table(self.q.clone())
    }

    fn set_params(&mut self, params: AgentParams) -> Result<(), AgentError> {
        match params {
            AgentParams::Table(q)
                if q.scheme == self.q.scheme && q.box_count() == self.q.box_count() =>
            {
                self.q = q;
                Ok(())
            }
            AgentParams::Table(q) => Err(AgentError::DimensionMismatch {
                expected: format!("{} with {} boxes", self.q.scheme, self.q.box_count()),
                found: format!("{} with {} boxes", q.scheme, q.box_count()),
            }),
            other => Err(AgentError::KindMismatch {
                expected: "q_table",
                found: other.label(),
            }),
        }
    }
}
