use super::HarnessError;
use crate::agent::{AcHyper, TdHyper, VfaHyper};
use crate::codec::{FeatureScales, SchemeName};
use crate::env::ResetMode;
use crate::physics::PhysicsParams;
use crate::supervisor::{StabilizerKind, SupervisorConfig};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Everything needed to reproduce a run. Unused agent sections are kept so
/// a saved copy documents every default that was in force.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Sweep key; rows of a sweep are ordered by `(name, seed)`.
    pub name: String,
    pub algorithm: StabilizerKind,
    pub scheme: SchemeName,
    /// Episode budget per seed. Under `reset_mode = "swingup"` this counts
    /// STABILIZE phases.
    pub episodes: usize,
    pub success_steps: u64,
    pub reset_mode: ResetMode,
    /// Uniform `+-0.05` perturbation of every component at an upright reset.
    pub initial_noise: bool,
    pub seeds: Vec<u64>,
    pub write_trace: bool,
    /// Summary ranges skip this much of the successful run, s.
    pub range_transient: f64,
    pub output_dir: Option<PathBuf>,
    pub physics: PhysicsParams,
    pub td: TdHyper,
    pub actor_critic: AcHyper,
    pub vfa: VfaHyper,
    pub features: FeatureScales,
    pub supervisor: SupervisorConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: "experiment".into(),
            algorithm: StabilizerKind::QLearning,
            scheme: SchemeName::GetBox,
            episodes: 5000,
            success_steps: 100_000,
            reset_mode: ResetMode::Upright,
            initial_noise: false,
            seeds: (0..20).collect(),
            write_trace: false,
            range_transient: 10.0,
            output_dir: None,
            physics: PhysicsParams::default(),
            td: TdHyper::default(),
            actor_critic: AcHyper::default(),
            vfa: VfaHyper::default(),
            features: FeatureScales::default(),
            supervisor: SupervisorConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Invalid(m));
        if self.success_steps == 0 {
            return bad("success_steps must be >= 1".into());
        }
        if !(self.range_transient >= 0.0 && self.range_transient.is_finite()) {
            return bad(format!(
                "range_transient must be finite and >= 0, got {}",
                self.range_transient
            ));
        }
        self.physics
            .validate()
            .map_err(|e| HarnessError::Invalid(e.to_string()))?;
        let agent = match self.algorithm {
            StabilizerKind::QLearning | StabilizerKind::Sarsa => self.td.validate(),
            StabilizerKind::ActorCritic => self.actor_critic.validate(),
            StabilizerKind::Vfa => self.vfa.validate(),
            StabilizerKind::Lqr => Ok(()),
        };
        agent.map_err(|e| HarnessError::Invalid(e.to_string()))?;
        let scales = [
            self.features.theta_deg,
            self.features.theta_dot_deg,
            self.features.x,
            self.features.x_dot,
        ];
        if scales.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return bad(format!(
                "feature scales must be finite and > 0, got {scales:?}"
            ));
        }
        self.supervisor_config()
            .validate()
            .map_err(|e| HarnessError::Invalid(e.to_string()))
    }

    pub fn supervisor_config(&self) -> SupervisorConfig {
        SupervisorConfig {
            stabilizer: self.algorithm,
            ..self.supervisor
        }
    }

    /// TOML text with every field present.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable in TOML")
    }

    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        Self::from_toml_with(text, &[])
    }

    /// Parses `text`, then applies `key.path=value` overrides, where `value`
    /// is a TOML literal or a bare string.
    pub fn from_toml_with(text: &str, overrides: &[String]) -> Result<Self, HarnessError> {
        let mut doc: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| HarnessError::Config(e.to_string()))?;
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        let cfg: Self = doc
            .try_into()
            .map_err(|e: toml::de::Error| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_toml_with(&text, overrides)
    }
}

fn parse_literal(raw: &str) -> toml::Value {
    let wrapped = format!("v = {raw}");
    match wrapped.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key was just written"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

pub fn apply_override(doc: &mut toml::Table, assignment: &str) -> Result<(), HarnessError> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| HarnessError::Config(format!("override `{assignment}` is not key=value")))?;
    let keys: Vec<&str> = path.trim().split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(HarnessError::Config(format!("bad override key `{path}`")));
    }
    let (last, parents) = keys.split_last().expect("split yields at least one key");
    let mut table = doc;
    for k in parents {
        let entry = table
            .entry((*k).to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| HarnessError::Config(format!("`{k}` in `{path}` is not a table")))?;
    }
    table.insert((*last).to_string(), parse_literal(raw.trim()));
    Ok(())
}
