//! Match-count traces of single greedy dialogues.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::ddr::Actor;
use crate::env::DialogueEnv;
use crate::error::{DdrError, Result};
use crate::goal::UserGoal;
use crate::kb::KbTable;
use crate::policy::dqn::select_action;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRow {
    pub turn: usize,
    pub n: usize,
    pub agent: String,
    pub goal_id: usize,
}

/// `(turn, n)` for a greedy rollout on goal `goal_id`, starting with the
/// full table at turn 0.
pub fn n_trace(
    actor: Actor<'_>,
    goal_id: usize,
    table: Arc<KbTable>,
    goals: &[UserGoal],
    seed: u64,
    slot_error_rate: f64,
    max_turns: usize,
) -> Result<Vec<(usize, usize)>> {
    let goal = goals.get(goal_id).ok_or(DdrError::UnknownGoal(goal_id))?;
    let mut env = DialogueEnv::new(table, slot_error_rate, max_turns)?;
    env.reset(goal, seed)?;
    let mut trace = vec![(0, env.state().current_n)];
    // Greedy selection never uses randomness past the exploration coin.
    let mut rng = crate::rng::stream(seed, crate::rng::Stream::Evaluation);
    while !env.is_terminal() {
        let action = match actor {
            Actor::Rule => {
                let a = crate::policy::rules::warm_start_action(env.state(), env.table());
                env.catalogue().id_of(&a).expect("rule actions are in the catalogue")
            }
            Actor::Net { net, epsilon } => {
                select_action(net, &env.features(), epsilon, &Default::default(), &mut rng)?
            }
        };
        let step = env.step(action)?;
        trace.push((env.state().turn, step.n));
    }
    Ok(trace)
}

/// First turn from which `n` stays constant and positive until the end of
/// the dialogue; `max_turns` when the dialogue ends at `n = 0`.
pub fn stable_turn(trace: &[(usize, usize)], max_turns: usize) -> usize {
    let Some(&(_, last_n)) = trace.last() else {
        return max_turns;
    };
    if last_n == 0 {
        return max_turns;
    }
    let mut turn = trace.last().map(|t| t.0).unwrap_or(0);
    for &(t, n) in trace.iter().rev() {
        if n != last_n {
            break;
        }
        turn = t;
    }
    turn
}

pub fn write_trace_csv(path: &Path, rows: &[TraceRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trace_csv(path: &Path) -> Result<Vec<TraceRow>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Into::into)).collect()
}
