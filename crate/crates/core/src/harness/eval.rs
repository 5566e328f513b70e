//! Success rate, average reward and average turns.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::ddr::{episode_with_ddr, Actor, DdrController};
use crate::env::{DialogueEnv, LogRecord};
use crate::error::{DdrError, Result};
use crate::goal::UserGoal;
use crate::kb::KbTable;
use crate::policy::network::QNetwork;
use crate::rng::{derive_seed, stream, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub success_rate: f64,
    pub average_reward: f64,
    pub average_turns: f64,
    pub episodes: usize,
}

/// SR = successes / N, AE = sum of returns / N, AT = sum of lengths / N.
pub fn metrics_from_outcomes<I>(episodes: I) -> Result<EvalMetrics>
where
    I: IntoIterator<Item = (bool, f64, usize)>,
{
    let (mut n, mut succ, mut reward, mut turns) = (0usize, 0usize, 0.0, 0usize);
    for (s, r, t) in episodes {
        n += 1;
        succ += s as usize;
        reward += r;
        turns += t;
    }
    if n == 0 {
        return Err(DdrError::Precondition("no episodes to evaluate".into()));
    }
    Ok(EvalMetrics {
        success_rate: succ as f64 / n as f64,
        average_reward: reward / n as f64,
        average_turns: turns as f64 / n as f64,
        episodes: n,
    })
}

/// Metrics over the episode-end records of a log.
pub fn metrics_from_logs(records: &[LogRecord]) -> Result<EvalMetrics> {
    metrics_from_outcomes(records.iter().filter_map(|r| match r {
        LogRecord::EpisodeEnd {
            outcome,
            turns,
            total_reward,
            ..
        } => Some((outcome.is_success(), *total_reward, *turns)),
        _ => None,
    }))
}

/// Settings shared by every evaluation dialogue.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalSettings {
    pub episodes: usize,
    pub slot_error_rate: f64,
    pub max_turns: usize,
    pub seed: u64,
}

/// Runs `episodes` dialogues with rescue disabled, cycling through `goals`
/// in order. Nothing is learned or stored.
pub fn evaluate_actor(
    actor: Actor<'_>,
    table: Arc<KbTable>,
    goals: &[UserGoal],
    settings: &EvalSettings,
) -> Result<EvalMetrics> {
    if settings.episodes == 0 || goals.is_empty() {
        return Err(DdrError::Precondition("evaluation needs goals and at least one episode".into()));
    }
    let mut env = DialogueEnv::new(table, settings.slot_error_rate, settings.max_turns)?;
    let mut rng = stream(settings.seed, Stream::Evaluation);
    let controller = DdrController::disabled();
    let mut results = Vec::with_capacity(settings.episodes);
    for i in 0..settings.episodes {
        let goal = &goals[i % goals.len()];
        env.reset(goal, derive_seed(settings.seed, Stream::Evaluation, i as u64))?;
        let out = episode_with_ddr(&mut env, actor, &controller, i as u64, &mut rng)?;
        results.push((out.outcome.is_success(), out.total_reward, out.turns));
    }
    metrics_from_outcomes(results)
}

/// Greedy evaluation of a network.
pub fn evaluate_policy(
    net: &QNetwork,
    table: Arc<KbTable>,
    goals: &[UserGoal],
    settings: &EvalSettings,
) -> Result<EvalMetrics> {
    evaluate_actor(Actor::Net { net, epsilon: 0.0 }, table, goals, settings)
}
