//! Dead-end detection and rescue for reinforcement-learned dialogue policies.
//!
//! The crate is organised bottom-up:
//!
//! - [`act`], [`goal`], [`catalogue`], [`experience`], [`config`]: the shared
//!   dialogue vocabulary.
//! - [`kb`]: the task database, match counts, entropy and information gain.
//! - [`user_sim`]: the agenda-based user simulator and its slot-noise model.
//! - [`env`]: state tracking, reward, success judgment, snapshot/restore.
//! - [`policy`]: the Q-network, Adam, replay buffer, DQN variants and the
//!   rule-based warm-start policy.
//! - [`ddr`]: dead-end detection, IG/SE rescue and experience augmentation.
//! - [`harness`]: dataset generation, training runs, evaluation and statistics.

pub mod act;
pub mod catalogue;
pub mod config;
pub mod ddr;
pub mod env;
pub mod error;
pub mod experience;
pub mod goal;
pub mod harness;
pub mod kb;
pub mod policy;
pub mod rng;
pub mod user_sim;

pub use act::{DialogueAct, Intent};
pub use catalogue::{ActionCatalogue, SystemAction};
pub use config::{DqnVariant, RescueMode, RunConfig, TrainCadence};
pub use env::{DialogueEnv, EnvSnapshot, EnvState, Outcome, OutcomeReason, OutcomeStatus};
pub use error::{DdrError, Result};
pub use experience::{Experience, ExperienceKind};
pub use goal::UserGoal;
pub use kb::{KbTable, ValueDistribution};
