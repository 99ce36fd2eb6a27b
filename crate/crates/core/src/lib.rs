//! Cart-pole control laboratory: plant, encoders, learning stabilizers,
//! classical swing-up and LQR, the swing-up/stabilizer supervisor and the
//! experiment harness.

pub mod agent;
pub mod codec;
pub mod control;
pub mod env;
pub mod harness;
pub mod physics;
pub mod record;
pub mod supervisor;

pub use codec::{BoxIndex, BoxScheme, FeatureScales, SchemeName};
pub use env::{Action, EpisodeConfig, ResetMode, StepOutcome};
pub use physics::{PhysicsParams, State};
