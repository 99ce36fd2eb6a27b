//! Per-episode records and per-step trace rows shared by the training loop
//! and the supervisor.

use crate::physics::State;
use serde::{Deserialize, Serialize};
use std::fmt;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Mode {
    Swingup,
    Stabilize,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Swingup => "SWINGUP",
            Mode::Stabilize => "STABILIZE",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TerminalCause {
    Pole,
    Cart,
    Success,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode: usize,
    /// Transitions survived; `>= 1`, equal to `success_steps` iff `Success`.
    pub steps: u64,
    pub cause: TerminalCause,
    pub seed: u64,
    /// Excluded from the byte-reproducible outputs.
    #[serde(skip)]
    pub wall_ms: u64,
    /// Mode transitions since the previous record, the opening handover
    /// included. Zero outside supervised runs.
    pub mode_switches: u32,
}

/// One simulated step: the state at time `t`, the force applied from it and
/// the reward and terminal flag of the resulting transition.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRow {
    pub t: f64,
    pub state: State,
    pub force: f64,
    pub reward: f64,
    pub terminal: bool,
    pub mode: Mode,
}

pub const TRACE_HEADER: &str = "t,theta,theta_dot,x,x_dot,force,reward,terminal,mode";

impl TraceRow {
    /// CSV line without newline; angles in degrees, shortest round-trip
    /// formatting so the text is a pure function of the values.
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.t,
            self.state.theta.to_degrees(),
            self.state.theta_dot.to_degrees(),
            self.state.x,
            self.state.x_dot,
            self.force,
            self.reward,
            u8::from(self.terminal),
            self.mode
        )
    }
}

/// Closed interval tracker; `None` until the first sample.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Range(pub Option<(f64, f64)>);

impl Range {
    pub fn add(&mut self, v: f64) {
        self.0 = Some(match self.0 {
            None => (v, v),
            Some((lo, hi)) => (lo.min(v), hi.max(v)),
        });
    }

    pub fn lo(&self) -> Option<f64> {
        self.0.map(|r| r.0)
    }

    pub fn hi(&self) -> Option<f64> {
        self.0.map(|r| r.1)
    }
}
