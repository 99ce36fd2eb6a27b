//! Single-neuron actor and critic over one-hot box vectors.
//!
//! The actor weight of the active box is thresholded against Gaussian noise to
//! choose RIGHT (`y = 1`) or LEFT (`y = 0`). The critic weight of the active
//! box is a prediction of discounted failure; its one-step TD error
//! `r + gamma * p(t+1) - p(t)` drives both weight vectors through their
//! eligibility traces.
//!
//! Per transition the traces are decayed, the current box deposit is added
//! (`(y - 1/2)` for the actor, `1` for the critic), and the weights move along
//! the resulting traces. Traces are cleared when an episode ends.

use super::{check, Agent, AgentError, AgentKind, AgentParams, AgentRng};
use crate::codec::{BoxIndex, BoxScheme, SchemeName};
use crate::env::Action;
use crate::physics::State;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq)]
pub struct AcWeights {
    pub scheme: SchemeName,
    pub actor_w: Vec<f64>,
    pub critic_w: Vec<f64>,
    pub actor_trace: Vec<f64>,
    pub critic_trace: Vec<f64>,
}

impl AcWeights {
    pub fn zeros(scheme: SchemeName, box_count: usize) -> Self {
        Self {
            scheme,
            actor_w: vec![0.0; box_count],
            critic_w: vec![0.0; box_count],
            actor_trace: vec![0.0; box_count],
            critic_trace: vec![0.0; box_count],
        }
    }

    pub fn box_count(&self) -> usize {
        self.actor_w.len()
    }

    pub fn clear_traces(&mut self) {
        self.actor_trace.iter_mut().for_each(|e| *e = 0.0);
        self.critic_trace.iter_mut().for_each(|e| *e = 0.0);
    }

    fn slot(&self, b: BoxIndex) -> Result<usize, AgentError> {
        let i = b.index().ok_or(AgentError::FailureBox)?;
        if i >= self.box_count() {
            return Err(AgentError::BoxOutOfRange {
                index: i,
                count: self.box_count(),
            });
        }
        Ok(i)
    }
}

/// How a per-box deposit enters a trace.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceForm {
    /// `e <- lambda * e + deposit`
    #[default]
    Accumulating,
    /// `e <- (1 - lambda) * e + lambda * deposit`
    Convex,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionRule {
    /// `y = 1` iff `actor_w[box] + eta > 0`, `eta ~ N(0, sigma^2)`.
    #[default]
    NoiseThreshold,
    /// `P(y = 1) = 1 / (1 + exp(-actor_w[box]))`; the actor deposit becomes the
    /// softmax score `y - P(y = 1)`.
    Softmax,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AcHyper {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub lambda_w: f64,
    pub lambda_v: f64,
    pub noise_sigma: f64,
    pub trace_form: TraceForm,
    pub action_rule: ActionRule,
}

impl Default for AcHyper {
    fn default() -> Self {
        Self {
            alpha: 1000.0,
            beta: 0.5,
            gamma: 0.95,
            lambda_w: 0.9,
            lambda_v: 0.8,
            noise_sigma: 0.1,
            trace_form: TraceForm::Accumulating,
            action_rule: ActionRule::NoiseThreshold,
        }
    }
}

impl AcHyper {
    pub fn validate(&self) -> Result<(), AgentError> {
        check("alpha", self.alpha, self.alpha > 0.0, "must be > 0")?;
        check("beta", self.beta, self.beta > 0.0, "must be > 0")?;
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        check("gamma", self.gamma, unit(self.gamma), "must lie in [0, 1]")?;
        check(
            "lambda_w",
            self.lambda_w,
            unit(self.lambda_w),
            "must lie in [0, 1]",
        )?;
        check(
            "lambda_v",
            self.lambda_v,
            unit(self.lambda_v),
            "must lie in [0, 1]",
        )?;
        check(
            "noise_sigma",
            self.noise_sigma,
            self.noise_sigma >= 0.0,
            "must be >= 0",
        )
    }
}

fn logistic(v: f64) -> f64 {
    1.0 / (1.0 + (-v.clamp(-50.0, 50.0)).exp())
}

/// Probability of `y = 1` under the softmax rule.
pub fn right_probability(w: &AcWeights, box_index: BoxIndex) -> Result<f64, AgentError> {
    Ok(logistic(w.actor_w[w.slot(box_index)?]))
}

/// Samples the actor output `y` and its action (`y = 1` is RIGHT).
pub fn ac_select_action(
    w: &AcWeights,
    box_index: BoxIndex,
    h: &AcHyper,
    rng: &mut AgentRng,
) -> Result<(Action, u8), AgentError> {
    let i = w.slot(box_index)?;
    let y = match h.action_rule {
        ActionRule::NoiseThreshold => {
            let eta: f64 = rng.sample::<f64, _>(StandardNormal) * h.noise_sigma;
            u8::from(w.actor_w[i] + eta > 0.0)
        }
        ActionRule::Softmax => u8::from(rng.random::<f64>() < logistic(w.actor_w[i])),
    };
    Ok((if y == 1 { Action::Right } else { Action::Left }, y))
}

fn accumulate(trace: &mut [f64], lambda: f64, form: TraceForm, slot: usize, deposit: f64) {
    match form {
        TraceForm::Accumulating => {
            trace.iter_mut().for_each(|e| *e *= lambda);
            trace[slot] += deposit;
        }
        TraceForm::Convex => {
            trace.iter_mut().for_each(|e| *e *= 1.0 - lambda);
            trace[slot] += lambda * deposit;
        }
    }
}

/// One actor/critic step for the transition `box --y--> next_box` with
/// reward `r`. Returns the internal reinforcement `r_hat`.
pub fn ac_update(
    w: &mut AcWeights,
    box_index: BoxIndex,
    y: u8,
    r: f64,
    next_box: BoxIndex,
    h: &AcHyper,
) -> Result<f64, AgentError> {
    let i = w.slot(box_index)?;
    let next_prediction = match next_box {
        BoxIndex::Failure => 0.0,
        nb => w.critic_w[w.slot(nb)?],
    };
    let r_hat = r + h.gamma * next_prediction - w.critic_w[i];

    let actor_deposit = match h.action_rule {
        ActionRule::NoiseThreshold => f64::from(y) - 0.5,
        ActionRule::Softmax => f64::from(y) - logistic(w.actor_w[i]),
    };
    accumulate(
        &mut w.actor_trace,
        h.lambda_w,
        h.trace_form,
        i,
        actor_deposit,
    );
    accumulate(&mut w.critic_trace, h.lambda_v, h.trace_form, i, 1.0);

    for (wi, ei) in w.actor_w.iter_mut().zip(&w.actor_trace) {
        *wi += h.alpha * r_hat * ei;
    }
    for (vi, xi) in w.critic_w.iter_mut().zip(&w.critic_trace) {
        *vi += h.beta * r_hat * xi;
    }
    if next_box.is_failure() {
        w.clear_traces();
    }
    Ok(r_hat)
}

pub struct ActorCriticAgent {
    pub scheme: BoxScheme,
    pub weights: AcWeights,
    pub hyper: AcHyper,
}

impl ActorCriticAgent {
    pub fn new(scheme: BoxScheme, hyper: AcHyper) -> Self {
        let weights = AcWeights::zeros(scheme.name, scheme.box_count());
        Self {
            scheme,
            weights,
            hyper,
        }
    }
}

impl Agent for ActorCriticAgent {
    fn kind(&self) -> AgentKind {
        AgentKind::ActorCritic
    }

    fn act(&mut self, s: &State, rng: &mut AgentRng) -> Action {
        ac_select_action(&self.weights, self.scheme.get_box(s), &self.hyper, rng)
            .expect("agent is only queried on in-bounds states")
            .0
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
        let y = u8::from(a == Action::Right);
        ac_update(&mut self.weights, b, y, reward, nb, &self.hyper)
            .expect("current box is in bounds");
        next.map(|n| self.act(n, rng))
    }

    fn params(&self) -> AgentParams {
        AgentParams::ActorCritic(self.weights.clone())
    }

    fn set_params(&mut self, params: AgentParams) -> Result<(), AgentError> {
        match params {
            AgentParams::ActorCritic(w)
                if w.scheme == self.weights.scheme && w.box_count() == self.weights.box_count() =>
            {
                self.weights = w;
                Ok(())
            }
            AgentParams::ActorCritic(w) => Err(AgentError::DimensionMismatch {
                expected: format!(
                    "{} with {} boxes",
                    self.weights.scheme,
                    self.weights.box_count()
                ),
                found: format!("{} with {} boxes", w.scheme, w.box_count()),
            }),
            other => Err(AgentError::KindMismatch {
                expected: "actor_critic",
                found: other.label(),
            }),
        }
    }

    fn end_episode(&mut self) {
        self.weights.clear_traces();
    }
}
