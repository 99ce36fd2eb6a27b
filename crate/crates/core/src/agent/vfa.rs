//! Semi-gradient TD control with a linear action-value function.
//!
//! `q_hat(s, a) = features(s) . w[a]`, one 4-vector per action. The update
//! treats the bootstrap target as a constant, so the gradient with respect to
//! `w[a]` is just `features(s)`.

use super::{check, greedy, Agent, AgentError, AgentKind, AgentParams, AgentRng};
use crate::codec::{features, FeatureScales, FeatureVector};
use crate::env::Action;
use crate::physics::State;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct VfaWeights {
    pub per_action: [[f64; 4]; 2],
}

impl VfaWeights {
    pub fn get(&self, a: Action) -> &[f64; 4] {
        &self.per_action[a.index()]
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VfaTarget {
    /// Bootstrap on the action actually selected in the next state.
    #[default]
    OnPolicy,
    /// Bootstrap on the greedy value of the next state.
    Max,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VfaHyper {
    pub alpha: f64,
    pub gamma: f64,
    pub target: VfaTarget,
}

impl Default for VfaHyper {
    fn default() -> Self {
        Self {
            alpha: 0.07,
            gamma: 0.992,
            target: VfaTarget::OnPolicy,
        }
    }
}

impl VfaHyper {
    pub fn validate(&self) -> Result<(), AgentError> {
        check("alpha", self.alpha, self.alpha > 0.0, "must be > 0")?;
        check(
            "gamma",
            self.gamma,
            (0.0..=1.0).contains(&self.gamma),
            "must lie in [0, 1]",
        )
    }
}

fn dot(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2] + a[3] * b[3]
}

pub fn q_hat_features(w: &VfaWeights, f: &FeatureVector, a: Action) -> f64 {
    dot(f, w.get(a))
}

pub fn q_hat(w: &VfaWeights, s: &State, a: Action, scales: &FeatureScales) -> f64 {
    q_hat_features(w, &features(s, scales), a)
}

pub fn vfa_select_action(
    w: &VfaWeights,
    s: &State,
    scales: &FeatureScales,
    rng: &mut AgentRng,
) -> Action {
    let f = features(s, scales);
    greedy(
        [
            q_hat_features(w, &f, Action::Left),
            q_hat_features(w, &f, Action::Right),
        ],
        rng,
    )
}

/// Semi-gradient step on `w[a]`. `next` is `None` for terminal transitions;
/// otherwise it carries the successor state and the action selected there.
/// Returns the TD error.
pub fn vfa_update(
    w: &mut VfaWeights,
    s: &State,
    a: Action,
    reward: f64,
    next: Option<(&State, Action)>,
    h: &VfaHyper,
    scales: &FeatureScales,
) -> f64 {
    let bootstrap = match next {
        None => 0.0,
        Some((sn, an)) => {
            let fnext = features(sn, scales);
            match h.target {
                VfaTarget::OnPolicy => q_hat_features(w, &fnext, an),
                VfaTarget::Max => q_hat_features(w, &fnext, Action::Left).max(q_hat_features(
                    w,
                    &fnext,
                    Action::Right,
                )),
            }
        }
    };
    let f = features(s, scales);
    let td_error = reward + h.gamma * bootstrap - q_hat_features(w, &f, a);
    let wa = &mut w.per_action[a.index()];
    for (wj, fj) in wa.iter_mut().zip(f) {
        *wj += h.alpha * td_error * fj;
    }
    td_error
}

pub struct VfaAgent {
    pub weights: VfaWeights,
    pub hyper: VfaHyper,
    pub scales: FeatureScales,
}

impl VfaAgent {
    pub fn new(hyper: VfaHyper, scales: FeatureScales) -> Self {
        Self {
            weights: VfaWeights::default(),
            hyper,
            scales,
        }
    }
}

impl Agent for VfaAgent {
    fn kind(&self) -> AgentKind {
        AgentKind::Vfa
    }

    fn act(&mut self, s: &State, rng: &mut AgentRng) -> Action {
        vfa_select_action(&self.weights, s, &self.scales, rng)
    }

    fn learn(
        &mut self,
        s: &State,
        a: Action,
        reward: f64,
        next: Option<&State>,
        rng: &mut AgentRng,
    ) -> Option<Action> {
        let na = next.map(|n| self.act(n, rng));
        let pair = next.zip(na);
        vfa_update(
            &mut self.weights,
            s,
            a,
            reward,
            pair,
            &self.hyper,
            &self.scales,
        );
        na
    }

    fn params(&self) -> AgentParams {
        AgentParams::Vfa {
            weights: self.weights,
            scales: self.scales,
        }
    }

    fn set_params(&mut self, params: AgentParams) -> Result<(), AgentError> {
        match params {
            AgentParams::Vfa { weights, scales } => {
                self.weights = weights;
                self.scales = scales;
                Ok(())
            }
            other => Err(AgentError::KindMismatch {
                expected: "vfa",
                found: other.label(),
            }),
        }
    }
}
