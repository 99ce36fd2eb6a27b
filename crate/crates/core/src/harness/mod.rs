//! Experiment execution: builds the configured controller, runs each seed and
//! writes reproducible CSV, parameter and trace files.
//!
//! Output layout of [`write_outputs`]:
//!
//! ```text
//! config.toml        every setting in force except output_dir, defaults included
//! metadata.txt       RNG and format description
//! summary.csv        one SummaryRow per seed
//! seed_<n>/records.csv   EpisodeRecord rows (no wall-clock column)
//! seed_<n>/timing.csv    episode,wall_ms (not reproducible by nature)
//! seed_<n>/params.txt    final learned parameters, if any
//! seed_<n>/trace.csv     with write_trace: the successful run (upright) or
//!                        the whole run (swing-up reset)
//! seed_<n>/timeline.csv  mode timeline of supervised runs
//! ```
//!
//! Every file except `timing.csv` is a pure function of `(config, seed)`.

mod config;
pub mod persist;
pub mod sweep;

pub use config::{apply_override, ExperimentConfig};
pub use persist::{load_params, save_params, ParamsError, ParamsShape};

use crate::agent::{
    ActorCriticAgent, Agent, AgentError, AgentParams, TabularAgent, TdMode, VfaAgent,
};
use crate::codec::{out_of_bounds, THETA_LIMIT_DEG};
use crate::control::{lqr_design, lqr_force, LinearizationMode, LqrSolution, REFERENCE_GAIN};
use crate::env::{reset, EpisodeConfig, ResetMode};
use crate::physics::{step, PhysicsParams};
use crate::record::{EpisodeRecord, Mode, Range, TerminalCause, TraceRow, TRACE_HEADER};
use crate::supervisor::{
    episode_rng, run_full_control, FullControlRun, ModeTimeline, Stabilizer, StabilizerKind,
    SupervisorError,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;
use std::time::Instant;
use thiserror::Error;

/// Recorded in `metadata.txt`.
pub const RNG_DESCRIPTION: &str =
    "ChaCha8 (rand_chacha 0.9); per-episode stream = seed_from_u64(seed) with set_stream(episode index)";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config: {0}")]
    Config(String),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Params(#[from] ParamsError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Supervisor(#[from] SupervisorError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl HarnessError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RunStatus {
    Success,
    NoConvergence,
    Error,
}

/// Outcome of one `(config, seed)`. Ranges cover the successful run only,
/// from `range_transient` seconds after its start; they are empty otherwise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub config: String,
    pub algorithm: StabilizerKind,
    pub seed: u64,
    pub status: RunStatus,
    pub episodes_run: usize,
    /// 1-based count of episodes up to and including the successful one.
    pub episodes_to_success: Option<usize>,
    pub theta_min_deg: Option<f64>,
    pub theta_max_deg: Option<f64>,
    pub x_min: Option<f64>,
    pub x_max: Option<f64>,
    pub handovers: usize,
    pub detail: String,
}

impl SummaryRow {
    pub fn error(cfg: &ExperimentConfig, seed: u64, detail: String) -> Self {
        SummaryRow {
            config: cfg.name.clone(),
            algorithm: cfg.algorithm,
            seed,
            status: RunStatus::Error,
            episodes_run: 0,
            episodes_to_success: None,
            theta_min_deg: None,
            theta_max_deg: None,
            x_min: None,
            x_max: None,
            handovers: 0,
            detail,
        }
    }
}

/// Median of the successful runs' episodes-to-success, midpoint of the two
/// central values for an even count.
pub fn median_episodes(rows: &[SummaryRow]) -> Option<f64> {
    let mut v: Vec<usize> = rows.iter().filter_map(|r| r.episodes_to_success).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_unstable();
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2] as f64
    } else {
        (v[n / 2 - 1] + v[n / 2]) as f64 / 2.0
    })
}

#[derive(Clone, Debug)]
pub struct SeedRun {
    pub records: Vec<EpisodeRecord>,
    pub summary: SummaryRow,
    /// Empty unless `write_trace`.
    pub trace: Vec<TraceRow>,
    pub params: Option<AgentParams>,
    /// Supervised runs only.
    pub timeline: Option<ModeTimeline>,
}

pub enum Controller {
    Agent(Box<dyn Agent>),
    Lqr(Box<LqrSolution>),
}

impl Controller {
    pub fn build(cfg: &ExperimentConfig) -> Result<Self, HarnessError> {
        let scheme = || cfg.scheme.scheme();
        Ok(match cfg.algorithm {
            StabilizerKind::QLearning => Controller::Agent(Box::new(TabularAgent::new(
                scheme(),
                cfg.td,
                TdMode::QLearning,
            ))),
            StabilizerKind::Sarsa => {
                Controller::Agent(Box::new(TabularAgent::new(scheme(), cfg.td, TdMode::Sarsa)))
            }
            StabilizerKind::ActorCritic => {
                Controller::Agent(Box::new(ActorCriticAgent::new(scheme(), cfg.actor_critic)))
            }
            StabilizerKind::Vfa => {
                Controller::Agent(Box::new(VfaAgent::new(cfg.vfa, cfg.features)))
            }
            StabilizerKind::Lqr => Controller::Lqr(Box::new(
                lqr_design(&cfg.physics, cfg.supervisor.linearization)
                    .map_err(SupervisorError::from)?,
            )),
        })
    }

    pub fn params(&self) -> Option<AgentParams> {
        match self {
            Controller::Agent(a) => Some(a.params()),
            Controller::Lqr(_) => None,
        }
    }
}

/// Shape of the parameters an experiment learns, `None` for LQR.
pub fn expected_shape(cfg: &ExperimentConfig) -> Option<ParamsShape> {
    let boxes = cfg.scheme.scheme().box_count();
    match cfg.algorithm {
        StabilizerKind::QLearning | StabilizerKind::Sarsa => Some(ParamsShape::Table {
            scheme: cfg.scheme,
            boxes,
        }),
        StabilizerKind::ActorCritic => Some(ParamsShape::ActorCritic {
            scheme: cfg.scheme,
            boxes,
        }),
        StabilizerKind::Vfa => Some(ParamsShape::Vfa),
        StabilizerKind::Lqr => None,
    }
}

/// Range accumulation and optional row capture for one run.
struct Tracker {
    transient: f64,
    theta: Range,
    x: Range,
    rows: Option<Vec<TraceRow>>,
}

impl Tracker {
    fn new(transient: f64, keep_rows: bool) -> Self {
        Tracker {
            transient,
            theta: Range::default(),
            x: Range::default(),
            rows: keep_rows.then(Vec::new),
        }
    }

    fn clear_ranges(&mut self) {
        self.theta = Range::default();
        self.x = Range::default();
    }

    /// `elapsed` is the time since the start of the current balancing run.
    fn observe(&mut self, row: &TraceRow, elapsed: f64) {
        if row.mode == Mode::Stabilize && elapsed >= self.transient {
            self.theta.add(row.state.theta.to_degrees());
            self.x.add(row.state.x);
        }
        if let Some(rows) = &mut self.rows {
            rows.push(*row);
        }
    }
}

fn failure_cause(s: &crate::physics::State) -> TerminalCause {
    if s.theta.to_degrees().abs() > THETA_LIMIT_DEG {
        TerminalCause::Pole
    } else {
        TerminalCause::Cart
    }
}

/// One episode from an upright reset. With `learn` unset the agent only
/// acts, so its parameters stay frozen.
fn upright_episode(
    ctrl: &mut Controller,
    cfg: &ExperimentConfig,
    seed: u64,
    episode: usize,
    learn: bool,
    tracker: &mut Tracker,
) -> EpisodeRecord {
    let started = Instant::now();
    let p = &cfg.physics;
    let mut rng = episode_rng(seed, episode);
    let env_cfg = EpisodeConfig {
        success_steps: cfg.success_steps,
        reset_mode: ResetMode::Upright,
        seed,
        initial_noise: cfg.initial_noise,
    };
    let mut s = reset(&env_cfg, &mut rng);
    let mut action = match ctrl {
        Controller::Agent(agent) => Some(agent.act(&s, &mut rng)),
        Controller::Lqr(_) => None,
    };
    let mut steps: u64 = 0;
    let cause = loop {
        let force = match (&*ctrl, action) {
            (Controller::Lqr(sol), _) => lqr_force(&s, sol),
            (Controller::Agent(_), Some(a)) => a.force(p.force_mag),
            (Controller::Agent(_), None) => unreachable!("agent episodes always hold an action"),
        };
        let next = step(&s, force, p);
        let terminal = out_of_bounds(&next);
        let row = TraceRow {
            t: steps as f64 * p.tau,
            state: s,
            force,
            reward: if terminal { -1.0 } else { 0.0 },
            terminal,
            mode: Mode::Stabilize,
        };
        tracker.observe(&row, row.t);
        steps += 1;
        let cause = if terminal {
            Some(failure_cause(&next))
        } else if steps == cfg.success_steps {
            Some(TerminalCause::Success)
        } else {
            None
        };
        if let (Controller::Agent(agent), Some(a)) = (&mut *ctrl, action) {
            action = match cause {
                Some(TerminalCause::Success) => {
                    agent.end_episode();
                    None
                }
                Some(_) if learn => agent.learn(&s, a, -1.0, None, &mut rng),
                Some(_) => {
                    agent.end_episode();
                    None
                }
                None if learn => agent.learn(&s, a, 0.0, Some(&next), &mut rng),
                None => Some(agent.act(&next, &mut rng)),
            };
        }
        s = next;
        if let Some(c) = cause {
            break c;
        }
    };
    EpisodeRecord {
        episode,
        steps,
        cause,
        seed,
        wall_ms: started.elapsed().as_millis() as u64,
        mode_switches: 0,
    }
}

fn summarize(
    cfg: &ExperimentConfig,
    seed: u64,
    records: &[EpisodeRecord],
    tracker: &Tracker,
    success: bool,
    handovers: usize,
    detail: String,
) -> SummaryRow {
    let ranged = |r: &Range| if success { r.0 } else { None };
    SummaryRow {
        config: cfg.name.clone(),
        algorithm: cfg.algorithm,
        seed,
        status: if success {
            RunStatus::Success
        } else {
            RunStatus::NoConvergence
        },
        episodes_run: records.len(),
        episodes_to_success: success.then_some(records.len()),
        theta_min_deg: ranged(&tracker.theta).map(|r| r.0),
        theta_max_deg: ranged(&tracker.theta).map(|r| r.1),
        x_min: ranged(&tracker.x).map(|r| r.0),
        x_max: ranged(&tracker.x).map(|r| r.1),
        handovers,
        detail,
    }
}

/// Runs `cfg` for one seed from fresh parameters, or from `initial` when
/// given.
pub fn run_seed_from(
    cfg: &ExperimentConfig,
    seed: u64,
    initial: Option<AgentParams>,
) -> Result<SeedRun, HarnessError> {
    let mut ctrl = Controller::build(cfg)?;
    if let (Some(params), Controller::Agent(agent)) = (initial, &mut ctrl) {
        agent.set_params(params)?;
    }
    match cfg.reset_mode {
        ResetMode::Upright => Ok(run_upright(cfg, seed, ctrl)),
        ResetMode::Swingup => run_supervised(cfg, seed, ctrl, cfg.supervisor.learning_enabled),
    }
}

pub fn run_seed(cfg: &ExperimentConfig, seed: u64) -> Result<SeedRun, HarnessError> {
    run_seed_from(cfg, seed, None)
}

fn run_upright(cfg: &ExperimentConfig, seed: u64, mut ctrl: Controller) -> SeedRun {
    let mut tracker = Tracker::new(cfg.range_transient, cfg.write_trace);
    let mut records = Vec::new();
    let mut success = false;
    for episode in 0..cfg.episodes {
        tracker.clear_ranges();
        if let Some(rows) = &mut tracker.rows {
            rows.clear();
        }
        let rec = upright_episode(&mut ctrl, cfg, seed, episode, true, &mut tracker);
        records.push(rec);
        if rec.cause == TerminalCause::Success {
            success = true;
            break;
        }
    }
    let detail = if success {
        String::new()
    } else {
        format!("no success within {} episodes", cfg.episodes)
    };
    let summary = summarize(cfg, seed, &records, &tracker, success, 0, detail);
    let trace = if success {
        tracker.rows.take().unwrap_or_default()
    } else {
        Vec::new()
    };
    SeedRun {
        records,
        summary,
        trace,
        params: ctrl.params(),
        timeline: None,
    }
}

fn run_supervised(
    cfg: &ExperimentConfig,
    seed: u64,
    mut ctrl: Controller,
    learning: bool,
) -> Result<SeedRun, HarnessError> {
    let sup = crate::supervisor::SupervisorConfig {
        learning_enabled: learning,
        ..cfg.supervisor_config()
    };
    let run = FullControlRun {
        physics: cfg.physics,
        success_steps: cfg.success_steps,
        episodes: cfg.episodes,
        seed,
    };
    let mut tracker = Tracker::new(cfg.range_transient, cfg.write_trace);
    let mut phase_start: Option<f64> = None;
    let mut sink = |row: &TraceRow| {
        match (row.mode, phase_start) {
            (Mode::Stabilize, None) => {
                phase_start = Some(row.t);
                tracker.clear_ranges();
            }
            (Mode::Swingup, Some(_)) => phase_start = None,
            _ => {}
        }
        tracker.observe(row, phase_start.map_or(0.0, |t0| row.t - t0));
    };
    let out = {
        let mut stabilizer = match &mut ctrl {
            Controller::Agent(agent) => Stabilizer::Agent(agent.as_mut()),
            Controller::Lqr(sol) => Stabilizer::Lqr(sol.clone()),
        };
        run_full_control(&sup, &run, &mut stabilizer, &mut sink)?
    };
    let detail = match (&out.abort, out.success) {
        (Some(e), _) => format!("aborted: {e}"),
        (None, true) => String::new(),
        (None, false) => format!("no success within {} episodes", cfg.episodes),
    };
    let summary = summarize(
        cfg,
        seed,
        &out.records,
        &tracker,
        out.success,
        out.handovers.len(),
        detail,
    );
    Ok(SeedRun {
        records: out.records,
        summary,
        trace: tracker.rows.unwrap_or_default(),
        params: ctrl.params(),
        timeline: Some(out.timeline),
    })
}

/// Re-simulates with frozen parameters: one episode with index `episode`
/// under an upright reset, or a non-learning supervised run from hanging
/// under a swing-up reset. Traces are always captured.
pub fn replay(
    cfg: &ExperimentConfig,
    params: Option<AgentParams>,
    seed: u64,
    episode: usize,
) -> Result<SeedRun, HarnessError> {
    let mut ctrl = Controller::build(cfg)?;
    if let (Some(params), Controller::Agent(agent)) = (params, &mut ctrl) {
        agent.set_params(params)?;
    }
    let traced = ExperimentConfig {
        write_trace: true,
        ..cfg.clone()
    };
    match cfg.reset_mode {
        ResetMode::Swingup => run_supervised(&traced, seed, ctrl, false),
        ResetMode::Upright => {
            let mut tracker = Tracker::new(cfg.range_transient, true);
            let rec = upright_episode(&mut ctrl, &traced, seed, episode, false, &mut tracker);
            let success = rec.cause == TerminalCause::Success;
            let records = vec![rec];
            let summary = summarize(&traced, seed, &records, &tracker, success, 0, String::new());
            Ok(SeedRun {
                records,
                summary,
                trace: tracker.rows.unwrap_or_default(),
                params: ctrl.params(),
                timeline: None,
            })
        }
    }
}

/// Runs every seed of `cfg`, in parallel across seeds, and writes the output
/// files when `output_dir` is set. Runs are returned in seed-list order.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<SeedRun>, HarnessError> {
    cfg.validate()?;
    let runs = cfg
        .seeds
        .par_iter()
        .map(|&seed| run_seed(cfg, seed))
        .collect::<Result<Vec<_>, _>>()?;
    if let Some(dir) = &cfg.output_dir {
        write_outputs(dir, cfg, &runs)?;
    }
    Ok(runs)
}

pub fn summary_csv(rows: &[SummaryRow]) -> Result<String, HarnessError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    Ok(String::from_utf8(
        w.into_inner()
            .map_err(|e| csv::Error::from(e.into_error()))?,
    )
    .expect("csv output is UTF-8"))
}

pub fn records_csv(records: &[EpisodeRecord]) -> Result<String, HarnessError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in records {
        w.serialize(r)?;
    }
    Ok(String::from_utf8(
        w.into_inner()
            .map_err(|e| csv::Error::from(e.into_error()))?,
    )
    .expect("csv output is UTF-8"))
}

pub fn write_trace(path: &Path, rows: &[TraceRow]) -> Result<(), HarnessError> {
    let file = std::fs::File::create(path).map_err(|e| HarnessError::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    let mut put = |line: &str| writeln!(w, "{line}").map_err(|e| HarnessError::io(path, e));
    put(TRACE_HEADER)?;
    for r in rows {
        put(&r.csv_line())?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

fn write_file(path: &Path, text: &str) -> Result<(), HarnessError> {
    std::fs::write(path, text).map_err(|e| HarnessError::io(path, e))
}

pub fn metadata_text(cfg: &ExperimentConfig) -> String {
    format!(
        "rng = {RNG_DESCRIPTION}\nparams_format = cartpole-params {}\ntrace_header = {TRACE_HEADER}\nconfig = {}\n",
        persist::FORMAT_VERSION,
        cfg.name
    )
}

pub fn write_outputs(
    dir: &Path,
    cfg: &ExperimentConfig,
    runs: &[SeedRun],
) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let portable = ExperimentConfig {
        output_dir: None,
        ..cfg.clone()
    };
    write_file(&dir.join("config.toml"), &portable.to_toml())?;
    write_file(&dir.join("metadata.txt"), &metadata_text(cfg))?;
    let rows: Vec<SummaryRow> = runs.iter().map(|r| r.summary.clone()).collect();
    write_file(&dir.join("summary.csv"), &summary_csv(&rows)?)?;
    for run in runs {
        let sub = dir.join(format!("seed_{}", run.summary.seed));
        std::fs::create_dir_all(&sub).map_err(|e| HarnessError::io(&sub, e))?;
        write_file(&sub.join("records.csv"), &records_csv(&run.records)?)?;
        let mut timing = String::from("episode,wall_ms\n");
        for r in &run.records {
            writeln!(timing, "{},{}", r.episode, r.wall_ms).unwrap();
        }
        write_file(&sub.join("timing.csv"), &timing)?;
        if let Some(p) = &run.params {
            save_params(&sub.join("params.txt"), p)?;
        }
        if cfg.write_trace {
            write_trace(&sub.join("trace.csv"), &run.trace)?;
        }
        if let Some(tl) = &run.timeline {
            let mut text = String::from("t,mode\n");
            for (t, m) in &tl.entries {
                writeln!(text, "{t},{m}").unwrap();
            }
            write_file(&sub.join("timeline.csv"), &text)?;
        }
    }
    Ok(())
}

fn fmt_row(out: &mut String, label: &str, values: impl IntoIterator<Item = f64>) {
    write!(out, "{label:<4}").unwrap();
    for v in values {
        write!(out, " {v:>14.6e}").unwrap();
    }
    out.push('\n');
}

/// Plain-text LQR design report: one labelled block per quantity, matrix rows
/// in state order `(theta, theta_dot, x, x_dot)`, closed-loop eigenvalues as
/// `re im` pairs and the reference gain for comparison.
pub fn lqr_report(p: &PhysicsParams, mode: LinearizationMode) -> Result<String, HarnessError> {
    let sol = lqr_design(p, mode).map_err(SupervisorError::from)?;
    let mut out = String::new();
    let mode_name = match mode {
        LinearizationMode::Jacobian => "jacobian",
        LinearizationMode::Reference => "reference",
    };
    writeln!(out, "linearization {mode_name}").unwrap();
    let matrix = |out: &mut String, name: &str, m: &nalgebra::Matrix4<f64>| {
        writeln!(out, "[{name}]").unwrap();
        for i in 0..4 {
            fmt_row(out, "", m.row(i).iter().copied());
        }
    };
    matrix(&mut out, "A", &sol.a);
    writeln!(out, "[B]").unwrap();
    fmt_row(&mut out, "", sol.b.iter().copied());
    matrix(&mut out, "Q", &sol.q);
    writeln!(out, "[R]").unwrap();
    fmt_row(&mut out, "", [sol.r]);
    matrix(&mut out, "P", &sol.p);
    writeln!(out, "[K]").unwrap();
    fmt_row(&mut out, "", sol.k.iter().copied());
    writeln!(out, "[residual]").unwrap();
    fmt_row(&mut out, "", [sol.residual]);
    writeln!(out, "[iterations]\n{}", sol.iterations).unwrap();
    writeln!(out, "[closed_loop_eigenvalues]").unwrap();
    for z in sol.closed_loop_eigenvalues() {
        fmt_row(&mut out, "", [z.re, z.im]);
    }
    writeln!(out, "[reference_K]").unwrap();
    fmt_row(&mut out, "", REFERENCE_GAIN);
    Ok(out)
}
