//! Episodic MDP over the cart-pole plant: two actions, reward `-1` on the
//! transition that leaves the balancing region and `0` otherwise.

use crate::codec::out_of_bounds;
use crate::physics::{self, PhysicsParams, State};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum EnvError {
    #[error("env_step called on a terminal state {0:?}")]
    TerminalState(State),
    #[error("success_steps must be >= 1")]
    ZeroSuccessSteps,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    Left,
    Right,
}

impl Action {
    pub const ALL: [Action; 2] = [Action::Left, Action::Right];

    pub fn index(self) -> usize {
        match self {
            Action::Left => 0,
            Action::Right => 1,
        }
    }

    pub fn from_index(i: usize) -> Self {
        if i == 0 {
            Action::Left
        } else {
            Action::Right
        }
    }

    /// Signed force in newtons.
    pub fn force(self, force_mag: f64) -> f64 {
        match self {
            Action::Left => -force_mag,
            Action::Right => force_mag,
        }
    }

    pub fn mirrored(self) -> Self {
        match self {
            Action::Left => Action::Right,
            Action::Right => Action::Left,
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Action::Left => "LEFT",
            Action::Right => "RIGHT",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepOutcome {
    pub next_state: State,
    pub reward: f64,
    pub terminal: bool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResetMode {
    #[default]
    Upright,
    Swingup,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpisodeConfig {
    pub success_steps: u64,
    pub reset_mode: ResetMode,
    pub seed: u64,
    /// Uniform `+-0.05` perturbation on every component of an upright reset.
    pub initial_noise: bool,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self {
            success_steps: 100_000,
            reset_mode: ResetMode::Upright,
            seed: 0,
            initial_noise: false,
        }
    }
}

impl EpisodeConfig {
    pub fn validate(&self) -> Result<(), EnvError> {
        if self.success_steps == 0 {
            return Err(EnvError::ZeroSuccessSteps);
        }
        Ok(())
    }
}

/// Initial state of an episode. The rng is only consulted when
/// `initial_noise` is set and the reset is upright.
pub fn reset<R: Rng + ?Sized>(cfg: &EpisodeConfig, rng: &mut R) -> State {
    match cfg.reset_mode {
        ResetMode::Swingup => State::HANGING,
        ResetMode::Upright if cfg.initial_noise => {
            let mut u = || rng.random_range(-0.05..=0.05);
            State::new(u(), u(), u(), u())
        }
        ResetMode::Upright => State::UPRIGHT,
    }
}

/// One MDP transition under the discrete action set.
pub fn env_step(s: &State, a: Action, p: &PhysicsParams) -> Result<StepOutcome, EnvError> {
    if out_of_bounds(s) {
        return Err(EnvError::TerminalState(*s));
    }
    let next_state = physics::step(s, a.force(p.force_mag), p);
    let terminal = out_of_bounds(&next_state);
    Ok(StepOutcome {
        next_state,
        reward: if terminal { -1.0 } else { 0.0 },
        terminal,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn push_right_from_upright() {
        let p = PhysicsParams::default();
        let out = env_step(&State::UPRIGHT, Action::Right, &p).unwrap();
        assert!(!out.terminal);
        assert_eq!(out.reward, 0.0);
        assert_eq!(out.next_state, physics::step(&State::UPRIGHT, 10.0, &p));
        assert!((out.next_state.theta_dot - -0.60284).abs() < 1e-5);
        assert!((out.next_state.x_dot - 0.26204).abs() < 1e-5);
    }

    #[test]
    fn pole_crossing_is_terminal() {
        let p = PhysicsParams::default();
        let s = State::new(11.9f64.to_radians(), 3.0, 0.0, 0.0);
        for a in Action::ALL {
            let out = env_step(&s, a, &p).unwrap();
            assert!(out.terminal);
            assert_eq!(out.reward, -1.0);
        }
    }

    #[test]
    fn cart_crossing_is_terminal() {
        let p = PhysicsParams::default();
        let s = State::new(0.0, 0.0, 2.39, 1.0);
        for a in Action::ALL {
            let out = env_step(&s, a, &p).unwrap();
            assert!(out.next_state.x > 2.4);
            assert!(out.terminal && out.reward == -1.0);
        }
    }

    #[test]
    fn stepping_terminal_state_is_usage_error() {
        let p = PhysicsParams::default();
        let s = State::new(0.5, 0.0, 0.0, 0.0);
        assert!(matches!(
            env_step(&s, Action::Left, &p),
            Err(EnvError::TerminalState(_))
        ));
    }

    #[test]
    fn resets() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let up = EpisodeConfig::default();
        assert_eq!(reset(&up, &mut rng), State::UPRIGHT);
        assert_eq!(reset(&up, &mut rng), reset(&up, &mut rng));
        let swing = EpisodeConfig {
            reset_mode: ResetMode::Swingup,
            ..Default::default()
        };
        assert_eq!(
            reset(&swing, &mut rng),
            State::new(std::f64::consts::PI, 0.0, 0.0, 0.0)
        );

        let noisy = EpisodeConfig {
            initial_noise: true,
            ..Default::default()
        };
        let s = reset(&noisy, &mut rng);
        assert!(s.as_array().iter().all(|v| v.abs() <= 0.05));
        assert_ne!(s, State::UPRIGHT);
    }

    #[test]
    fn zero_success_steps_rejected() {
        let cfg = EpisodeConfig {
            success_steps: 0,
            ..Default::default()
        };
        assert_eq!(cfg.validate(), Err(EnvError::ZeroSuccessSteps));
    }
}
