//! `cartpole`: train, sweep, swing up, supervise, design LQR gains and replay
//! saved parameters. Every subcommand reads an optional TOML config, then
//! applies `--set key=value` overrides and the shorthand flags.

use anyhow::{bail, Context, Result};
use cartpole_core::harness::{
    self, expected_shape, load_params, replay, run_experiment, sweep, write_trace,
    ExperimentConfig, SummaryRow,
};
use cartpole_core::record::TraceRow;
use cartpole_core::supervisor::run_swingup;
use cartpole_core::ResetMode;
use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "cartpole",
    version,
    about = "Deterministic cart-pole control lab"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the configured agent from upright resets (or under the
    /// supervisor with `reset_mode = "swingup"`).
    Train(ConfigArgs),
    /// Run a grid of configs over their seeds and write one combined CSV.
    Sweep(SweepArgs),
    /// Energy swing-up alone from hanging rest.
    SwingupDemo(SwingupArgs),
    /// Swing-up plus stabilizer under the supervisor, from hanging rest.
    FullControl(ConfigArgs),
    /// Print the LQR design for the configured plant.
    LqrGain(LqrArgs),
    /// Re-simulate with frozen parameters and a seed.
    Replay(ReplayArgs),
}

#[derive(Args, Clone, Default)]
struct ConfigArgs {
    /// TOML experiment config; omitted keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override any config key, e.g. `--set physics.force_mag=15`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// q_learning | sarsa | actor_critic | vfa | lqr
    #[arg(long)]
    algorithm: Option<String>,
    /// getBox | getBox2
    #[arg(long)]
    scheme: Option<String>,
    #[arg(long)]
    episodes: Option<usize>,
    /// Comma list (`1,5,9`) or half-open range (`0..20`).
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Write trace.csv for each seed.
    #[arg(long)]
    trace: bool,
}

#[derive(Args)]
struct SweepArgs {
    /// Config files forming the grid; the built-in comparison grid when empty.
    #[arg(long = "config")]
    configs: Vec<PathBuf>,
    /// Applied to every grid entry.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long)]
    seeds: Option<String>,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long, default_value = "sweep.csv")]
    output: PathBuf,
}

#[derive(Args)]
struct SwingupArgs {
    #[command(flatten)]
    base: ConfigArgs,
    /// Simulated time limit, s.
    #[arg(long, default_value_t = 60.0)]
    max_time: f64,
    /// Trace CSV path.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct LqrArgs {
    #[command(flatten)]
    base: ConfigArgs,
    /// jacobian | reference
    #[arg(long)]
    linearization: Option<String>,
}

#[derive(Args)]
struct ReplayArgs {
    #[command(flatten)]
    base: ConfigArgs,
    /// Parameter file written by `train`; required for learning agents.
    #[arg(long)]
    params: Option<PathBuf>,
    /// Defaults to the first configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Episode index whose RNG stream and reset are used.
    #[arg(long, default_value_t = 0)]
    episode: usize,
    /// Trace CSV path.
    #[arg(long, default_value = "replay_trace.csv")]
    output: PathBuf,
}

fn seeds_literal(list: &str) -> Result<String> {
    let seeds: Vec<u64> = match list.split_once("..") {
        Some((a, b)) => {
            let (a, b): (u64, u64) = (a.trim().parse()?, b.trim().parse()?);
            (a..b).collect()
        }
        None => list
            .split(',')
            .map(|s| s.trim().parse::<u64>())
            .collect::<Result<_, _>>()
            .with_context(|| format!("bad seed list `{list}`"))?,
    };
    if seeds.is_empty() {
        bail!("seed list `{list}` is empty");
    }
    let items: Vec<String> = seeds.iter().map(u64::to_string).collect();
    Ok(format!("[{}]", items.join(", ")))
}

impl ConfigArgs {
    fn overrides(&self, extra: &[&str]) -> Result<Vec<String>> {
        let mut o: Vec<String> = extra.iter().map(|s| s.to_string()).collect();
        o.extend(self.set.iter().cloned());
        if let Some(a) = &self.algorithm {
            o.push(format!("algorithm={a}"));
        }
        if let Some(s) = &self.scheme {
            o.push(format!("scheme={s}"));
        }
        if let Some(e) = self.episodes {
            o.push(format!("episodes={e}"));
        }
        if let Some(s) = &self.seeds {
            o.push(format!("seeds={}", seeds_literal(s)?));
        }
        if self.trace {
            o.push("write_trace=true".into());
        }
        Ok(o)
    }

    fn load(&self, extra: &[&str]) -> Result<ExperimentConfig> {
        let overrides = self.overrides(extra)?;
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path, &overrides)?,
            None => ExperimentConfig::from_toml_with("", &overrides)?,
        };
        if let Some(dir) = &self.output_dir {
            cfg.output_dir = Some(dir.clone());
        }
        Ok(cfg)
    }
}

fn fmt_range(lo: Option<f64>, hi: Option<f64>) -> String {
    match (lo, hi) {
        (Some(lo), Some(hi)) => format!("[{lo:+.3}, {hi:+.3}]"),
        _ => "-".into(),
    }
}

fn print_summary(rows: &[SummaryRow]) {
    println!(
        "{:<28} {:<12} {:>6} {:<15} {:>8} {:>22} {:>22}",
        "config", "algorithm", "seed", "status", "episodes", "theta range (deg)", "x range (m)"
    );
    for r in rows {
        let status = status_label(r);
        println!(
            "{:<28} {:<12} {:>6} {:<15} {:>8} {:>22} {:>22}",
            r.config,
            r.algorithm.as_str(),
            r.seed,
            status,
            r.episodes_to_success
                .map_or_else(|| r.episodes_run.to_string(), |e| e.to_string()),
            fmt_range(r.theta_min_deg, r.theta_max_deg),
            fmt_range(r.x_min, r.x_max),
        );
        if !r.detail.is_empty() {
            println!("    {}", r.detail);
        }
    }
    let done = rows
        .iter()
        .filter(|r| r.episodes_to_success.is_some())
        .count();
    match harness::median_episodes(rows) {
        Some(m) => println!(
            "succeeded {done}/{}; median episodes-to-success {m}",
            rows.len()
        ),
        None => println!("succeeded 0/{}", rows.len()),
    }
}

fn status_label(r: &SummaryRow) -> &'static str {
    match r.status {
        harness::RunStatus::Success => "SUCCESS",
        harness::RunStatus::NoConvergence => "NO_CONVERGENCE",
        harness::RunStatus::Error => "ERROR",
    }
}

fn experiment(cfg: ExperimentConfig) -> Result<()> {
    let runs = run_experiment(&cfg)?;
    let rows: Vec<SummaryRow> = runs.into_iter().map(|r| r.summary).collect();
    print_summary(&rows);
    if let Some(dir) = &cfg.output_dir {
        println!("outputs written to {}", dir.display());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(args) => experiment(args.load(&[])?),
        Command::FullControl(args) => experiment(args.load(&["reset_mode=swingup"])?),
        Command::Sweep(args) => {
            let mut overrides = args.set.clone();
            if let Some(e) = args.episodes {
                overrides.push(format!("episodes={e}"));
            }
            if let Some(s) = &args.seeds {
                overrides.push(format!("seeds={}", seeds_literal(s)?));
            }
            let grid = if args.configs.is_empty() {
                sweep::comparison_grid()
                    .iter()
                    .map(|c| ExperimentConfig::from_toml_with(&c.to_toml(), &overrides))
                    .collect::<Result<Vec<_>, _>>()?
            } else {
                args.configs
                    .iter()
                    .map(|p| ExperimentConfig::load(p, &overrides))
                    .collect::<Result<Vec<_>, _>>()?
            };
            let jobs = args
                .jobs
                .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
            let rows = sweep::run_sweep(&grid, jobs)?;
            sweep::write_sweep(&args.output, &rows)?;
            print_summary(&rows);
            println!("sweep written to {}", args.output.display());
            Ok(())
        }
        Command::SwingupDemo(args) => {
            let cfg = args.base.load(&[])?;
            let mut rows: Vec<TraceRow> = Vec::new();
            let report = run_swingup(
                &cfg.physics,
                &cfg.supervisor.swingup,
                cfg.supervisor.switch_angle_deg,
                args.max_time,
                &mut |r| rows.push(*r),
            );
            match report.handover_time {
                Some(t) => println!(
                    "reached the {}deg cone at t = {t:.2} s",
                    cfg.supervisor.switch_angle_deg
                ),
                None => println!("did not reach the cone within {} s", args.max_time),
            }
            println!("max |x| = {:.4} m", report.max_abs_x);
            let s = report.final_state;
            println!(
                "final state: theta {:.3} deg, theta_dot {:.3} deg/s, x {:.4} m, x_dot {:.4} m/s",
                s.theta.to_degrees(),
                s.theta_dot.to_degrees(),
                s.x,
                s.x_dot
            );
            if let Some(path) = &args.output {
                write_trace(path, &rows)?;
                println!("trace written to {}", path.display());
            }
            Ok(())
        }
        Command::LqrGain(args) => {
            let extra: Vec<String> = args
                .linearization
                .iter()
                .map(|l| format!("supervisor.linearization={l}"))
                .collect();
            let extra: Vec<&str> = extra.iter().map(String::as_str).collect();
            let cfg = args.base.load(&extra)?;
            print!(
                "{}",
                harness::lqr_report(&cfg.physics, cfg.supervisor.linearization)?
            );
            Ok(())
        }
        Command::Replay(args) => {
            let cfg = args.base.load(&[])?;
            let params = match (expected_shape(&cfg), &args.params) {
                (Some(shape), Some(path)) => Some(load_params(path, shape)?),
                (Some(_), None) => {
                    bail!("--params is required to replay a {:?} agent", cfg.algorithm)
                }
                (None, _) => None,
            };
            let seed = args.seed.or(cfg.seeds.first().copied()).unwrap_or(0);
            let run = replay(&cfg, params, seed, args.episode)?;
            write_trace(&args.output, &run.trace)?;
            for r in &run.records {
                println!(
                    "episode {} seed {}: {:?} after {} steps",
                    r.episode, r.seed, r.cause, r.steps
                );
            }
            if cfg.reset_mode == ResetMode::Swingup {
                println!("handovers {}", run.summary.handovers);
            }
            println!("trace written to {}", args.output.display());
            Ok(())
        }
    }
}

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
