//! Dead-end detection, rescue (information gain or self-exploration) and
//! experience augmentation, plus the episode loop that ties them together.

use std::collections::BTreeSet;

use rand::Rng;

use crate::act::DialogueAct;
use crate::catalogue::{ActionCatalogue, SystemAction};
use crate::config::{RescueMode, RunConfig};
use crate::env::{realize_action, DialogueEnv, EnvSnapshot, EnvState, LogRecord, Outcome, StepResult};
use crate::error::{DdrError, Result};
use crate::experience::{Experience, ExperienceKind};
use crate::kb::{self, BestSlot, KbTable};
use crate::policy::dqn::select_action;
use crate::policy::network::QNetwork;
use crate::policy::rules::{echo_common, serve_or_echo, warm_start_action};

/// True on the transition into the first dead-end state.
pub fn detect_dead_end(prev_n: usize, new_n: usize) -> bool {
    prev_n > 0 && new_n == 0
}

/// Information-gain rescue as a catalogue action. Forbidden actions are
/// skipped; returns `None` only when every dispatch case is forbidden.
pub fn ig_rescue_choice(
    table: &KbTable,
    catalogue: &ActionCatalogue,
    state: &EnvState,
    forbidden: &BTreeSet<usize>,
) -> Result<Option<usize>> {
    let mut chosen = None;
    if state.current_n > 1 {
        let excluded: BTreeSet<String> = table
            .schema()
            .iter()
            .filter(|s| {
                catalogue
                    .id_of(&SystemAction::Request((*s).clone()))
                    .is_some_and(|id| forbidden.contains(&id))
            })
            .cloned()
            .collect();
        if let BestSlot::Slot(slot) =
            kb::best_request_slot_excluding(table, &state.constraints_so_far, &excluded)?
        {
            chosen = Some(SystemAction::Request(slot));
        }
    }
    // Later dispatch cases back up earlier ones that are forbidden.
    let candidates = chosen
        .into_iter()
        .chain([
            serve_or_echo(state, table),
            SystemAction::Common(echo_common(state.last_user_act.intent)),
        ]);
    for action in candidates {
        if let Some(id) = catalogue.id_of(&action).filter(|id| !forbidden.contains(id)) {
            return Ok(Some(id));
        }
    }
    Ok(None)
}

/// The act information-gain rescue picks at `state`.
pub fn ig_rescue_action(table: &KbTable, state: &EnvState) -> Result<DialogueAct> {
    let catalogue = ActionCatalogue::from_schema(table.schema());
    let id = ig_rescue_choice(table, &catalogue, state, &BTreeSet::new())?
        .expect("nothing is forbidden");
    let action = catalogue.action(id).expect("catalogue id");
    Ok(realize_action(table, state, action))
}

/// Self-exploration rescue: re-select with the offending actions masked.
pub fn se_rescue_action<R: Rng + ?Sized>(
    net: &QNetwork,
    state_vec: &[f64],
    forbidden: &BTreeSet<usize>,
    epsilon: f64,
    rng: &mut R,
) -> Result<usize> {
    select_action(net, state_vec, epsilon, forbidden, rng)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RescueResult {
    pub action: usize,
    pub next_state: Vec<f64>,
    pub reward: f64,
    pub done: bool,
    pub mode: RescueMode,
}

#[derive(Debug, Clone)]
pub struct DeadEndEvent {
    pub episode: u64,
    pub turn: usize,
    pub snapshot: EnvSnapshot,
    pub offending_action: usize,
    pub recovery_index: usize,
}

/// The rescue and warning experiences for a detected transition, in that
/// order. The warning experience is terminal: the dead end it leads into
/// cannot be recovered from.
pub fn augment_experiences(original: &Experience, rescue: &RescueResult, warning_penalty: f64) -> Vec<Experience> {
    vec![
        Experience {
            state: original.state.clone(),
            action: rescue.action,
            next_state: rescue.next_state.clone(),
            reward: rescue.reward,
            done: rescue.done,
            kind: ExperienceKind::Rescue,
        },
        Experience {
            state: original.state.clone(),
            action: original.action,
            next_state: original.next_state.clone(),
            reward: original.reward + warning_penalty,
            done: true,
            kind: ExperienceKind::Warning,
        },
    ]
}

/// Rescue settings for one episode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DdrController {
    pub mode: RescueMode,
    pub max_recoveries: usize,
    pub warning_penalty: f64,
}

impl DdrController {
    pub fn from_config(config: &RunConfig) -> Self {
        DdrController {
            mode: config.rescue_mode,
            max_recoveries: config.max_recoveries,
            warning_penalty: config.warning_penalty(),
        }
    }

    pub fn disabled() -> Self {
        DdrController {
            mode: RescueMode::None,
            max_recoveries: 0,
            warning_penalty: 0.0,
        }
    }
}

/// Who picks the original action.
#[derive(Debug, Clone, Copy)]
pub enum Actor<'a> {
    Rule,
    Net { net: &'a QNetwork, epsilon: f64 },
}

impl Actor<'_> {
    fn choose<R: Rng + ?Sized>(&self, env: &DialogueEnv, features: &[f64], rng: &mut R) -> Result<usize> {
        match self {
            Actor::Rule => {
                let action = warm_start_action(env.state(), env.table());
                env.catalogue()
                    .id_of(&action)
                    .ok_or_else(|| DdrError::Protocol(format!("rule action {action} not in catalogue")))
            }
            Actor::Net { net, epsilon } => select_action(net, features, *epsilon, &BTreeSet::new(), rng),
        }
    }
}

#[derive(Debug, Clone)]
pub struct EpisodeOutput {
    pub log: Vec<LogRecord>,
    pub experiences: Vec<Experience>,
    pub outcome: Outcome,
    pub events: Vec<DeadEndEvent>,
    pub turns: usize,
    pub total_reward: f64,
}

impl EpisodeOutput {
    pub fn count(&self, kind: ExperienceKind) -> usize {
        self.experiences.iter().filter(|e| e.kind == kind).count()
    }
}

fn experience(state: &[f64], action: usize, next: &[f64], step: &StepResult, kind: ExperienceKind) -> Experience {
    Experience {
        state: state.to_vec(),
        action,
        next_state: next.to_vec(),
        reward: step.reward,
        done: step.outcome.is_terminal(),
        kind,
    }
}

/// Runs one dialogue on an environment that has just been reset.
///
/// Each exchange: snapshot, pick `a^o`, step. On a fresh dead end with budget
/// left, roll back, pick a rescue action (never one that already led to a
/// dead end from this snapshot), step again, and emit the rescue/warning
/// pair instead of the original experience. A rescue that itself dead-ends
/// is treated the same way while budget remains.
pub fn episode_with_ddr<R: Rng + ?Sized>(
    env: &mut DialogueEnv,
    actor: Actor<'_>,
    controller: &DdrController,
    episode: u64,
    rng: &mut R,
) -> Result<EpisodeOutput> {
    if controller.mode == RescueMode::Se && matches!(actor, Actor::Rule) {
        return Err(DdrError::Config("self-exploration rescue needs a network actor".into()));
    }
    let enabled = controller.mode != RescueMode::None;
    let mut out = EpisodeOutput {
        log: Vec::new(),
        experiences: Vec::new(),
        outcome: Outcome::ONGOING,
        events: Vec::new(),
        turns: 0,
        total_reward: 0.0,
    };
    let mut recoveries = 0;
    while !env.is_terminal() {
        let s = env.features();
        let snapshot = enabled.then(|| env.snapshot());
        let a_o = actor.choose(env, &s, rng)?;
        let mut step = env.step(a_o)?;
        let mut next = env.features();
        let mut emitted = Vec::new();

        // The latest transition that stands without a rescue of its own.
        let mut pending = experience(&s, a_o, &next, &step, ExperienceKind::Original);
        if let Some(snap) = snapshot.filter(|_| detect_dead_end(step.prev_n, step.n)) {
            let mut forbidden = BTreeSet::new();
            loop {
                let offending = pending.action;
                forbidden.insert(offending);
                let candidate = if recoveries < controller.max_recoveries {
                    match (controller.mode, actor) {
                        (RescueMode::Ig, _) => {
                            ig_rescue_choice(env.table(), env.catalogue(), snap.state(), &forbidden)?
                        }
                        (RescueMode::Se, Actor::Net { net, epsilon }) => {
                            match se_rescue_action(net, &s, &forbidden, epsilon, rng) {
                                Ok(a) => Some(a),
                                Err(DdrError::RescueExhausted) => None,
                                Err(e) => return Err(e),
                            }
                        }
                        _ => None,
                    }
                } else {
                    None
                };
                out.log.push(LogRecord::DeadEnd {
                    episode,
                    turn: snap.state().turn + 1,
                    offending_action: offending,
                    recovery_index: recoveries + 1,
                    n_before: snap.state().current_n,
                    rescue_action: candidate,
                });
                let Some(a_r) = candidate else { break };
                out.events.push(DeadEndEvent {
                    episode,
                    turn: snap.state().turn + 1,
                    snapshot: snap.clone(),
                    offending_action: offending,
                    recovery_index: recoveries + 1,
                });
                env.restore(&snap)?;
                step = env.step(a_r)?;
                next = env.features();
                recoveries += 1;
                let rescue = RescueResult {
                    action: a_r,
                    next_state: next.clone(),
                    reward: step.reward,
                    done: step.outcome.is_terminal(),
                    mode: controller.mode,
                };
                for e in augment_experiences(&pending, &rescue, controller.warning_penalty) {
                    emitted.push(e.kind);
                    out.experiences.push(e);
                }
                if !detect_dead_end(step.prev_n, step.n) {
                    break;
                }
                // The rescue dead-ended as well and becomes the next offender.
                pending = experience(&s, a_r, &next, &step, ExperienceKind::Original);
            }
        }
        if emitted.is_empty() {
            emitted.push(pending.kind);
            out.experiences.push(pending);
        }
        out.total_reward += step.reward;
        out.log.push(LogRecord::Exchange {
            episode,
            turn: env.state().turn,
            system_act: step.system_act.clone(),
            user_act: step.user_act.clone(),
            n: step.n,
            reward: step.reward,
            emitted,
        });
    }
    out.outcome = env.state().outcome;
    out.turns = env.state().turn;
    out.log.push(LogRecord::EpisodeEnd {
        episode,
        outcome: out.outcome,
        turns: out.turns,
        total_reward: out.total_reward,
    });
    Ok(out)
}
