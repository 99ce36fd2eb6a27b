//! Swing-up / stabilizer switching.
//!
//! The run starts at hanging rest under the energy swing-up law. Once the
//! wrapped pole angle enters the `switch_angle` cone, authority passes to the
//! stabilizer; leaving the cone (or the rail) hands it back. With a learning
//! stabilizer every STABILIZE phase is one episode that starts at the
//! handover state with fresh traces, so no reset to upright is ever needed.

use crate::agent::{Agent, AgentRng};
use crate::codec::{THETA_LIMIT_DEG, X_LIMIT};
use crate::control::{lqr_force, LinearizationMode, LqrSolution, SwingupController, SwingupParams};
use crate::physics::{step, wrap_angle, PhysicsParams, State};
use crate::record::{EpisodeRecord, TerminalCause, TraceRow};
use rand::SeedableRng;
use serde::{Deserialize, Serialize};
use std::time::Instant;
use thiserror::Error;

pub use crate::record::Mode;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StabilizerKind {
    #[default]
    Lqr,
    QLearning,
    Sarsa,
    ActorCritic,
    Vfa,
}

impl StabilizerKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            StabilizerKind::Lqr => "lqr",
            StabilizerKind::QLearning => "q_learning",
            StabilizerKind::Sarsa => "sarsa",
            StabilizerKind::ActorCritic => "actor_critic",
            StabilizerKind::Vfa => "vfa",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SupervisorConfig {
    pub stabilizer: StabilizerKind,
    /// Half-width of the handover cone, degrees, in `(0, 12]`.
    pub switch_angle_deg: f64,
    /// Optional cap on `|theta_dot|` at handover, rad/s.
    pub theta_dot_gate: Option<f64>,
    pub learning_enabled: bool,
    pub swingup: SwingupParams,
    pub linearization: LinearizationMode,
    /// A single swing-up phase longer than this aborts the run, s.
    pub max_swingup_time: f64,
}

impl Default for SupervisorConfig {
    fn default() -> Self {
        Self {
            stabilizer: StabilizerKind::Lqr,
            switch_angle_deg: THETA_LIMIT_DEG,
            theta_dot_gate: None,
            learning_enabled: true,
            swingup: SwingupParams::default(),
            linearization: LinearizationMode::Jacobian,
            max_swingup_time: 120.0,
        }
    }
}

#[derive(Clone, Debug, Error, PartialEq)]
pub enum SupervisorError {
    #[error("switch_angle_deg must lie in (0, 12], got {0}")]
    BadSwitchAngle(f64),
    #[error(
        "swing-up left the rail at t = {t:.2} s (x = {x:.3} m); swing-up gains are misconfigured"
    )]
    CartDuringSwingup { t: f64, x: f64 },
    #[error(
        "swing-up did not reach the handover cone within {limit} s (phase started at t = {t:.2} s)"
    )]
    SwingupTimeout { t: f64, limit: f64 },
    #[error(transparent)]
    Control(#[from] crate::control::ControlError),
}

impl SupervisorConfig {
    pub fn validate(&self) -> Result<(), SupervisorError> {
        if !(self.switch_angle_deg > 0.0 && self.switch_angle_deg <= THETA_LIMIT_DEG) {
            return Err(SupervisorError::BadSwitchAngle(self.switch_angle_deg));
        }
        self.swingup.validate()?;
        Ok(())
    }

    fn in_cone(&self, s: &State) -> bool {
        wrap_angle(s.theta).to_degrees().abs() <= self.switch_angle_deg
    }

    fn handover_allowed(&self, s: &State) -> bool {
        self.in_cone(s) && self.theta_dot_gate.is_none_or(|g| s.theta_dot.abs() <= g)
    }

    /// Failure predicate of a STABILIZE phase: pole outside the cone or cart
    /// off the rail.
    pub fn stabilize_failure(&self, s: &State) -> Option<TerminalCause> {
        if !self.in_cone(s) {
            Some(TerminalCause::Pole)
        } else if s.x.abs() > X_LIMIT {
            Some(TerminalCause::Cart)
        } else {
            None
        }
    }
}

/// Mode after observing `s` in `mode`; the switching rule in isolation.
pub fn next_mode(s: &State, cfg: &SupervisorConfig, mode: Mode) -> Mode {
    match mode {
        Mode::Swingup if cfg.handover_allowed(s) => Mode::Stabilize,
        Mode::Stabilize if cfg.stabilize_failure(s).is_some() => Mode::Swingup,
        m => m,
    }
}

/// Ordered `(t, mode)` transitions; consecutive modes always differ.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ModeTimeline {
    pub entries: Vec<(f64, Mode)>,
}

impl ModeTimeline {
    fn push(&mut self, t: f64, mode: Mode) {
        debug_assert!(self.entries.last().is_none_or(|e| e.1 != mode));
        self.entries.push((t, mode));
    }

    pub fn alternates(&self) -> bool {
        self.entries.windows(2).all(|w| w[0].1 != w[1].1)
    }

    pub fn handovers(&self) -> usize {
        self.entries
            .iter()
            .filter(|e| e.1 == Mode::Stabilize)
            .count()
    }
}

pub enum Stabilizer<'a> {
    Lqr(Box<LqrSolution>),
    Agent(&'a mut dyn Agent),
}

/// Budget and plant of one supervised run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FullControlRun {
    pub physics: PhysicsParams,
    pub success_steps: u64,
    /// Maximum number of STABILIZE phases.
    pub episodes: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, Default)]
pub struct FullControlOutcome {
    pub timeline: ModeTimeline,
    pub records: Vec<EpisodeRecord>,
    /// State at the start of each STABILIZE phase, angle wrapped.
    pub handovers: Vec<State>,
    pub success: bool,
    /// Set when swing-up left the rail or timed out; the run stopped there.
    pub abort: Option<SupervisorError>,
}

/// Per-episode RNG stream shared by every learning loop.
pub fn episode_rng(seed: u64, episode: usize) -> AgentRng {
    let mut rng = AgentRng::seed_from_u64(seed);
    rng.set_stream(episode as u64);
    rng
}

struct Phase {
    episode: usize,
    steps: u64,
    action: Option<crate::env::Action>,
    rng: AgentRng,
    started: Instant,
}

/// Runs swing-up and stabilization from hanging rest until a STABILIZE
/// phase survives `success_steps`, `episodes` phases have ended or swing-up
/// fails (reported in [`FullControlOutcome::abort`]). A cart
/// failure while stabilizing re-seeds swing-up from hanging rest, since the
/// swing-up law has no position term to bring the cart back.
pub fn run_full_control(
    cfg: &SupervisorConfig,
    run: &FullControlRun,
    stabilizer: &mut Stabilizer<'_>,
    sink: &mut dyn FnMut(&TraceRow),
) -> Result<FullControlOutcome, SupervisorError> {
    cfg.validate()?;
    let p = &run.physics;
    let mut out = FullControlOutcome::default();
    let mut swing = SwingupController::new(cfg.swingup);
    let mut s = State::HANGING;
    let mut t = 0.0;
    let mut step_index: u64 = 0;
    let mut mode = Mode::Swingup;
    let mut phase_start = 0.0;
    let mut switches: u32 = 0;
    let mut phase: Option<Phase> = None;
    out.timeline.push(t, mode);
    swing.begin(&s);

    loop {
        match mode {
            Mode::Swingup => {
                if cfg.handover_allowed(&s) {
                    if out.records.len() >= run.episodes {
                        break;
                    }
                    s.theta = wrap_angle(s.theta);
                    mode = Mode::Stabilize;
                    switches += 1;
                    out.timeline.push(t, mode);
                    out.handovers.push(s);
                    let episode = out.records.len();
                    let mut rng = episode_rng(run.seed, episode);
                    let action = match stabilizer {
                        Stabilizer::Lqr(_) => None,
                        Stabilizer::Agent(agent) => Some(agent.act(&s, &mut rng)),
                    };
                    phase = Some(Phase {
                        episode,
                        steps: 0,
                        action,
                        rng,
                        started: Instant::now(),
                    });
                    continue;
                }
                if t - phase_start > cfg.max_swingup_time {
                    out.abort = Some(SupervisorError::SwingupTimeout {
                        t: phase_start,
                        limit: cfg.max_swingup_time,
                    });
                    break;
                }
                let force = swing.force(&s, p);
                sink(&TraceRow {
                    t,
                    state: s,
                    force,
                    reward: 0.0,
                    terminal: false,
                    mode,
                });
                s = step(&s, force, p);
                step_index += 1;
                t = step_index as f64 * p.tau;
                if s.x.abs() > X_LIMIT {
                    out.abort = Some(SupervisorError::CartDuringSwingup { t, x: s.x });
                    break;
                }
            }
            Mode::Stabilize => {
                let ph = phase.as_mut().expect("a STABILIZE phase is open");
                let force = match (&mut *stabilizer, ph.action) {
                    (Stabilizer::Lqr(sol), _) => lqr_force(&s, sol),
                    (Stabilizer::Agent(_), Some(a)) => a.force(p.force_mag),
                    (Stabilizer::Agent(_), None) => {
                        unreachable!("agent phases always hold an action")
                    }
                };
                let next = step(&s, force, p);
                ph.steps += 1;
                let failure = cfg.stabilize_failure(&next);
                let reward = if failure.is_some() { -1.0 } else { 0.0 };
                sink(&TraceRow {
                    t,
                    state: s,
                    force,
                    reward,
                    terminal: failure.is_some(),
                    mode,
                });
                step_index += 1;
                t = step_index as f64 * p.tau;

                let cause = match failure {
                    Some(c) => Some(c),
                    None if ph.steps == run.success_steps => Some(TerminalCause::Success),
                    None => None,
                };
                if let Stabilizer::Agent(agent) = stabilizer {
                    let a = ph.action.expect("agent phases always hold an action");
                    ph.action = match cause {
                        Some(TerminalCause::Success) => {
                            agent.end_episode();
                            None
                        }
                        Some(_) => {
                            if cfg.learning_enabled {
                                agent.learn(&s, a, -1.0, None, &mut ph.rng);
                            } else {
                                agent.end_episode();
                            }
                            None
                        }
                        None if cfg.learning_enabled => {
                            agent.learn(&s, a, 0.0, Some(&next), &mut ph.rng)
                        }
                        None => Some(agent.act(&next, &mut ph.rng)),
                    };
                }
                s = next;
                let Some(cause) = cause else { continue };

                out.records.push(EpisodeRecord {
                    episode: ph.episode,
                    steps: ph.steps,
                    cause,
                    seed: run.seed,
                    wall_ms: ph.started.elapsed().as_millis() as u64,
                    mode_switches: switches,
                });
                phase = None;
                if cause == TerminalCause::Success {
                    out.success = true;
                    break;
                }
                mode = Mode::Swingup;
                switches = 1;
                out.timeline.push(t, mode);
                if cause == TerminalCause::Cart {
                    s = State::HANGING;
                }
                phase_start = t;
                swing.begin(&s);
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SwingupReport {
    /// First time the wrapped angle is inside the cone, if reached.
    pub handover_time: Option<f64>,
    /// Largest `|x|` over the simulated interval.
    pub max_abs_x: f64,
    pub final_state: State,
}

/// Swing-up alone from hanging rest, stopping at the cone or after
/// `max_time` seconds.
pub fn run_swingup(
    p: &PhysicsParams,
    sp: &SwingupParams,
    switch_angle_deg: f64,
    max_time: f64,
    sink: &mut dyn FnMut(&TraceRow),
) -> SwingupReport {
    let mut swing = SwingupController::new(*sp);
    let mut s = State::HANGING;
    swing.begin(&s);
    let mut max_abs_x: f64 = 0.0;
    let steps = (max_time / p.tau).round() as u64;
    for i in 0..=steps {
        let t = i as f64 * p.tau;
        if wrap_angle(s.theta).to_degrees().abs() <= switch_angle_deg {
            return SwingupReport {
                handover_time: Some(t),
                max_abs_x,
                final_state: s,
            };
        }
        if i == steps {
            break;
        }
        let force = swing.force(&s, p);
        sink(&TraceRow {
            t,
            state: s,
            force,
            reward: 0.0,
            terminal: false,
            mode: Mode::Swingup,
        });
        s = step(&s, force, p);
        max_abs_x = max_abs_x.max(s.x.abs());
    }
    SwingupReport {
        handover_time: None,
        max_abs_x,
        final_state: s,
    }
}

/// Design the LQR stabilizer configured by `cfg` for plant `p`.
pub fn lqr_stabilizer(
    cfg: &SupervisorConfig,
    p: &PhysicsParams,
) -> Result<Stabilizer<'static>, SupervisorError> {
    Ok(Stabilizer::Lqr(Box::new(crate::control::lqr_design(
        p,
        cfg.linearization,
    )?)))
}
