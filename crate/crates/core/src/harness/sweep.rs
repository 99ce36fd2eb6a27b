//! Parallel sweeps over a grid of experiment configs.

use super::{run_seed, summary_csv, ExperimentConfig, HarnessError, SummaryRow};
use crate::codec::SchemeName;
use crate::env::ResetMode;
use crate::supervisor::StabilizerKind;
use rayon::prelude::*;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

/// The reference comparison grid: tabular TD at three force levels, VFA and
/// actor-critic from upright, and actor-critic and VFA under the swing-up
/// supervisor. Names carry a row number so `(name, seed)` order matches the
/// table order.
pub fn comparison_grid() -> Vec<ExperimentConfig> {
    let base = ExperimentConfig::default();
    let tabular = |n: usize, alg: StabilizerKind, force: f64, alpha: f64, scheme: SchemeName| {
        let mut c = base.clone();
        let tag = match alg {
            StabilizerKind::Sarsa => "sarsa",
            _ => "q_learning",
        };
        c.name = format!("{n:02}_{tag}_f{force}_{scheme}");
        c.algorithm = alg;
        c.scheme = scheme;
        c.physics.force_mag = force;
        c.td.alpha = alpha;
        c.td.gamma = 0.99;
        c.initial_noise = true;
        c
    };
    let mut grid = Vec::new();
    let mut n = 1;
    for alg in [StabilizerKind::Sarsa, StabilizerKind::QLearning] {
        for (force, alpha, scheme) in [
            (10.0, 0.5, SchemeName::GetBox),
            (15.0, 0.6, SchemeName::GetBox2),
            (30.0, 0.4, SchemeName::GetBox),
        ] {
            grid.push(tabular(n, alg, force, alpha, scheme));
            n += 1;
        }
    }
    let mut vfa = base.clone();
    vfa.name = format!("{n:02}_vfa_f10");
    vfa.algorithm = StabilizerKind::Vfa;
    grid.push(vfa.clone());
    n += 1;

    let mut ac = base.clone();
    ac.name = format!("{n:02}_actor_critic_f10_getBox");
    ac.algorithm = StabilizerKind::ActorCritic;
    grid.push(ac.clone());
    n += 1;

    for (mut c, tag) in [(ac, "actor_critic"), (vfa, "vfa")] {
        c.name = format!("{n:02}_{tag}_swingup");
        c.reset_mode = ResetMode::Swingup;
        c.episodes = 500;
        grid.push(c);
        n += 1;
    }
    grid
}

/// One summary row per `(config, seed)`, sorted by `(config name, seed)`.
/// A run that errors or panics becomes an `ERROR` row; the sweep goes on.
pub fn run_sweep(
    grid: &[ExperimentConfig],
    parallelism: usize,
) -> Result<Vec<SummaryRow>, HarnessError> {
    for cfg in grid {
        cfg.validate()
            .map_err(|e| HarnessError::Invalid(format!("config `{}`: {e}", cfg.name)))?;
    }
    let jobs: Vec<(&ExperimentConfig, u64)> = grid
        .iter()
        .flat_map(|c| c.seeds.iter().map(move |&s| (c, s)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism)
        .build()
        .map_err(|e| HarnessError::Invalid(format!("thread pool: {e}")))?;
    let mut rows: Vec<SummaryRow> = pool.install(|| {
        jobs.par_iter()
            .map(
                |&(cfg, seed)| match catch_unwind(AssertUnwindSafe(|| run_seed(cfg, seed))) {
                    Ok(Ok(run)) => run.summary,
                    Ok(Err(e)) => SummaryRow::error(cfg, seed, e.to_string()),
                    Err(_) => SummaryRow::error(cfg, seed, "run panicked".into()),
                },
            )
            .collect()
    });
    rows.sort_by(|a, b| a.config.cmp(&b.config).then(a.seed.cmp(&b.seed)));
    Ok(rows)
}

pub fn write_sweep(path: &Path, rows: &[SummaryRow]) -> Result<(), HarnessError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| HarnessError::io(parent, e))?;
    }
    std::fs::write(path, summary_csv(rows)?).map_err(|e| HarnessError::io(path, e))
}
