//! One training run: warm start, then epochs of dialogue collection and
//! replay sweeps, with periodic greedy evaluation.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::eval::{evaluate_policy, EvalMetrics, EvalSettings};
use super::stats::{dead_end_counts, DeadEndCounts};
use crate::config::{RunConfig, TrainCadence};
use crate::ddr::{episode_with_ddr, Actor, DdrController, EpisodeOutput};
use crate::env::DialogueEnv;
use crate::error::{DdrError, Result};
use crate::experience::ExperienceKind;
use crate::goal::UserGoal;
use crate::kb::KbTable;
use crate::policy::checkpoint::Checkpoint;
use crate::policy::dqn::DqnAgent;
use crate::policy::replay::ReplayBuffer;
use crate::rng::{stream, Stream};

/// Offset that keeps evaluation dialogues apart from training ones.
const EVAL_SEED_SALT: u64 = 0x5eed_e7a1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Training dialogues so far, warm start excluded.
    pub dialogues: usize,
    /// Experiences written to the buffer so far, warm start included.
    pub experiences: usize,
    pub epsilon: f64,
    pub train_success_rate: f64,
    pub dead_end: DeadEndCounts,
    pub rescues: usize,
    pub loss: Option<f64>,
    pub eval: Option<EvalMetrics>,
}

impl EpochRecord {
    pub fn dead_end_ratio(&self) -> Option<f64> {
        self.dead_end.ratio()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunResult {
    pub config: RunConfig,
    pub records: Vec<EpochRecord>,
    pub final_eval: EvalMetrics,
    /// Failed training dialogues over the whole run.
    pub dead_end: DeadEndCounts,
    /// Parameters after the last completed epoch.
    pub checkpoint: Checkpoint,
    /// Diagnostic when training stopped on a non-finite loss.
    pub aborted: Option<String>,
}

impl RunResult {
    /// Mean evaluation success rate over the periodic snapshots.
    pub fn success_auc(&self) -> f64 {
        let srs: Vec<f64> = self
            .records
            .iter()
            .filter_map(|r| r.eval.map(|e| e.success_rate))
            .collect();
        if srs.is_empty() {
            self.final_eval.success_rate
        } else {
            srs.iter().sum::<f64>() / srs.len() as f64
        }
    }
}

pub fn eval_settings(config: &RunConfig) -> EvalSettings {
    EvalSettings {
        episodes: config.eval_episodes,
        slot_error_rate: config.slot_error_rate,
        max_turns: config.max_turns,
        seed: config.seed ^ EVAL_SEED_SALT,
    }
}

pub fn train_run(config: &RunConfig, table: &KbTable, goals: &[UserGoal]) -> Result<RunResult> {
    train_run_observed(config, Arc::new(table.clone()), goals, |_, _| {})
}

/// Like [`train_run`]; `observe` sees every training dialogue (warm start
/// excluded) together with its epoch.
pub fn train_run_observed<F>(
    config: &RunConfig,
    table: Arc<KbTable>,
    goals: &[UserGoal],
    mut observe: F,
) -> Result<RunResult>
where
    F: FnMut(usize, &EpisodeOutput),
{
    config.validate()?;
    if goals.is_empty() {
        return Err(DdrError::Precondition("training needs at least one goal".into()));
    }
    let mut env = DialogueEnv::from_config(table.clone(), config)?;
    let mut agent = DqnAgent::new(
        env.feature_len(),
        config.hidden_dim,
        env.catalogue().len(),
        config.dqn_variant,
        config.learning_rate,
        config.gamma,
        &mut stream(config.seed, Stream::Init),
    );
    let mut buffer = ReplayBuffer::new(config.buffer_capacity);
    let mut goal_rng = stream(config.seed, Stream::Goals);
    let mut explore_rng = stream(config.seed, Stream::Exploration);
    let mut replay_rng = stream(config.seed, Stream::Replay);
    let controller = DdrController::from_config(config);
    let settings = eval_settings(config);

    let mut episode_id = 0u64;
    let mut next_goal = |env: &mut DialogueEnv| -> Result<()> {
        let goal = &goals[goal_rng.gen_range(0..goals.len())];
        let noise_seed: u64 = goal_rng.gen();
        env.reset(goal, noise_seed)?;
        Ok(())
    };

    let mut experiences = 0usize;
    for _ in 0..config.warm_start_epochs {
        next_goal(&mut env)?;
        let out = episode_with_ddr(&mut env, Actor::Rule, &DdrController::disabled(), episode_id, &mut explore_rng)?;
        episode_id += 1;
        experiences += out.experiences.len();
        buffer.extend(out.experiences);
    }

    let mut records = Vec::with_capacity(config.epochs);
    let mut total_dead_end = DeadEndCounts::default();
    let mut dialogues = 0usize;
    let mut since_update = 0usize;
    let mut last_good = Checkpoint::new(&agent.online, config.dqn_variant, Some(&agent.optimizer), None);
    let mut aborted = None;

    'epochs: for epoch in 0..config.epochs {
        let epsilon = config.epsilon_at(epoch);
        let mut successes = 0usize;
        let mut dead_end = DeadEndCounts::default();
        let mut rescues = 0usize;
        let mut losses = Vec::new();
        for _ in 0..config.dialogues_per_epoch {
            next_goal(&mut env)?;
            let actor = Actor::Net {
                net: &agent.online,
                epsilon,
            };
            let out = episode_with_ddr(&mut env, actor, &controller, episode_id, &mut explore_rng)?;
            episode_id += 1;
            dialogues += 1;
            successes += out.outcome.is_success() as usize;
            dead_end.add(dead_end_counts(&out.log));
            rescues += out.count(ExperienceKind::Rescue);
            observe(epoch, &out);
            experiences += out.experiences.len();
            since_update += out.experiences.len();
            buffer.extend(out.experiences);
            if let TrainCadence::EveryExperiences(k) = config.cadence {
                if since_update >= k {
                    since_update = 0;
                    let batches = k.div_ceil(config.batch_size);
                    for _ in 0..batches {
                        let batch = buffer.sample(config.batch_size, &mut replay_rng);
                        match agent.train_batch(&batch) {
                            Ok(l) => losses.push(l),
                            Err(DdrError::NanLoss(msg)) => {
                                aborted = Some(format!("epoch {epoch}: {msg}"));
                                break 'epochs;
                            }
                            Err(e) => return Err(e),
                        }
                    }
                }
            }
        }
        if config.cadence == TrainCadence::EpochSweep {
            for idx in buffer.sweep_batches(config.batch_size, &mut replay_rng) {
                let batch: Vec<_> = idx.iter().map(|&i| buffer.get(i)).collect();
                match agent.train_batch(&batch) {
                    Ok(l) => losses.push(l),
                    Err(DdrError::NanLoss(msg)) => {
                        aborted = Some(format!("epoch {epoch}: {msg}"));
                        break 'epochs;
                    }
                    Err(e) => return Err(e),
                }
            }
        }
        if (epoch + 1) % config.target_sync_epochs == 0 {
            agent.sync();
        }
        last_good = Checkpoint::new(&agent.online, config.dqn_variant, Some(&agent.optimizer), Some(epoch + 1));
        let eval = if (config.eval_every > 0 && (epoch + 1) % config.eval_every == 0) || epoch + 1 == config.epochs {
            Some(evaluate_policy(&agent.online, table.clone(), goals, &settings)?)
        } else {
            None
        };
        total_dead_end.add(dead_end);
        records.push(EpochRecord {
            epoch: epoch + 1,
            dialogues,
            experiences,
            epsilon,
            train_success_rate: successes as f64 / config.dialogues_per_epoch.max(1) as f64,
            dead_end,
            rescues,
            loss: (!losses.is_empty()).then(|| losses.iter().sum::<f64>() / losses.len() as f64),
            eval,
        });
    }

    let net = last_good.network()?;
    let final_eval = match records.last().and_then(|r| r.eval) {
        Some(e) if aborted.is_none() && records.len() == config.epochs => e,
        _ => evaluate_policy(&net, table.clone(), goals, &settings)?,
    };
    Ok(RunResult {
        config: config.clone(),
        records,
        final_eval,
        dead_end: total_dead_end,
        checkpoint: last_good,
        aborted,
    })
}
