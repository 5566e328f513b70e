use serde::{Deserialize, Serialize};

use crate::error::{DdrError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum DqnVariant {
    Vanilla,
    Double,
    Dueling,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum RescueMode {
    None,
    /// Information-gain guided rescue.
    Ig,
    /// Self-resimulation: re-select with the offending actions masked.
    Se,
}

impl RescueMode {
    /// Agent label used in result files.
    pub fn agent_name(self) -> &'static str {
        match self {
            RescueMode::None => "dqn",
            RescueMode::Ig => "ddr-ig",
            RescueMode::Se => "ddr-se",
        }
    }
}

/// When gradient sweeps over the replay buffer happen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainCadence {
    /// One shuffled sweep after each epoch of dialogues.
    EpochSweep,
    /// `k / batch_size` sampled batches each time `k` new experiences arrive.
    EveryExperiences(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub max_turns: usize,
    pub gamma: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub buffer_capacity: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub hidden_dim: usize,
    /// Rule-policy dialogues run before any gradient step.
    pub warm_start_epochs: usize,
    pub epochs: usize,
    pub dialogues_per_epoch: usize,
    pub max_recoveries: usize,
    /// Penalty added to warning experiences; `None` means `-max_turns`.
    pub warning_penalty: Option<f64>,
    pub slot_error_rate: f64,
    pub dqn_variant: DqnVariant,
    pub rescue_mode: RescueMode,
    pub target_sync_epochs: usize,
    pub cadence: TrainCadence,
    /// Evaluate every this many epochs (the final epoch is always evaluated).
    pub eval_every: usize,
    pub eval_episodes: usize,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            max_turns: 30,
            gamma: 0.95,
            epsilon_start: 0.1,
            epsilon_end: 0.01,
            buffer_capacity: 10_000,
            batch_size: 16,
            learning_rate: 0.001,
            hidden_dim: 80,
            warm_start_epochs: 120,
            epochs: 500,
            dialogues_per_epoch: 100,
            max_recoveries: 3,
            warning_penalty: None,
            slot_error_rate: 0.0,
            dqn_variant: DqnVariant::Vanilla,
            rescue_mode: RescueMode::None,
            target_sync_epochs: 1,
            cadence: TrainCadence::EpochSweep,
            eval_every: 10,
            eval_episodes: 1000,
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn warning_penalty(&self) -> f64 {
        self.warning_penalty.unwrap_or(-(self.max_turns as f64))
    }

    /// Linearly decayed exploration rate for a training epoch.
    pub fn epsilon_at(&self, epoch: usize) -> f64 {
        if self.epochs <= 1 {
            return self.epsilon_start;
        }
        let frac = (epoch as f64 / (self.epochs - 1) as f64).min(1.0);
        self.epsilon_start + (self.epsilon_end - self.epsilon_start) * frac
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(DdrError::Config(msg.to_owned()));
        if self.max_turns == 0 {
            return fail("max_turns must be positive");
        }
        if !(0.0..1.0).contains(&self.slot_error_rate) {
            return fail("slot_error_rate must lie in [0, 1)");
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return fail("gamma must lie in [0, 1]");
        }
        for eps in [self.epsilon_start, self.epsilon_end] {
            if !(0.0..=1.0).contains(&eps) {
                return fail("epsilon must lie in [0, 1]");
            }
        }
        if self.batch_size == 0 || self.buffer_capacity == 0 || self.hidden_dim == 0 {
            return fail("batch_size, buffer_capacity and hidden_dim must be positive");
        }
        if self.learning_rate <= 0.0 || !self.learning_rate.is_finite() {
            return fail("learning_rate must be positive");
        }
        if self.target_sync_epochs == 0 || self.eval_every == 0 {
            return fail("target_sync_epochs and eval_every must be positive");
        }
        if let TrainCadence::EveryExperiences(0) = self.cadence {
            return fail("training cadence must be positive");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_published_settings() {
        let c = RunConfig::default();
        assert_eq!(c.max_turns, 30);
        assert_eq!(c.gamma, 0.95);
        assert_eq!((c.epsilon_start, c.epsilon_end), (0.1, 0.01));
        assert_eq!(c.buffer_capacity, 10_000);
        assert_eq!(c.batch_size, 16);
        assert_eq!(c.learning_rate, 0.001);
        assert_eq!(c.hidden_dim, 80);
        assert_eq!(c.warm_start_epochs, 120);
        assert_eq!(c.max_recoveries, 3);
        assert_eq!(c.warning_penalty(), -30.0);
        c.validate().unwrap();
    }

    #[test]
    fn epsilon_decays_linearly() {
        let c = RunConfig {
            epochs: 11,
            ..RunConfig::default()
        };
        assert_eq!(c.epsilon_at(0), 0.1);
        assert!((c.epsilon_at(5) - 0.055).abs() < 1e-12);
        assert!((c.epsilon_at(10) - 0.01).abs() < 1e-12);
        assert!((c.epsilon_at(50) - 0.01).abs() < 1e-12);
    }

    #[test]
    fn slot_error_rate_must_be_below_one() {
        let c = RunConfig {
            slot_error_rate: 1.0,
            ..RunConfig::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn partial_json_fills_defaults() {
        let c: RunConfig = serde_json::from_str(r#"{"seed": 7, "rescue_mode": "ig"}"#).unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.rescue_mode, RescueMode::Ig);
        assert_eq!(c.max_turns, 30);
    }
}
