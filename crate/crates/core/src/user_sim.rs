//! Agenda-based user simulator.
//!
//! The user discloses a constraint only when the agent asks for that slot,
//! asks for its requested slots one at a time, and finally asks for a
//! ticket when it wants a booking. Informed constraint values pass through
//! a [`NoiseModel`] that substitutes a different in-domain value.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::act::{DialogueAct, Intent, DONT_CARE, NO_MATCH, TICKET_SLOT};
use crate::error::{DdrError, Result};
use crate::goal::UserGoal;
use crate::kb::{KbTable, UNKNOWN};

/// Largest number of request slots in a sampled goal.
pub const MAX_GOAL_REQUESTS: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub slot_error_rate: f64,
    pub value_pool: BTreeMap<String, Vec<String>>,
}

impl NoiseModel {
    pub fn new(slot_error_rate: f64, value_pool: BTreeMap<String, Vec<String>>) -> Result<Self> {
        if !(0.0..=1.0).contains(&slot_error_rate) {
            return Err(DdrError::Config(format!(
                "slot error rate {slot_error_rate} outside [0, 1]"
            )));
        }
        Ok(NoiseModel {
            slot_error_rate,
            value_pool,
        })
    }

    pub fn for_table(table: &KbTable, slot_error_rate: f64) -> Result<Self> {
        Self::new(slot_error_rate, table.value_pool())
    }

    pub fn noiseless() -> Self {
        NoiseModel {
            slot_error_rate: 0.0,
            value_pool: BTreeMap::new(),
        }
    }

    /// Returns `value`, or with probability `slot_error_rate` a uniformly
    /// chosen different value of the same slot. Always consumes one draw for
    /// the corruption decision so streams stay aligned across rates.
    pub fn corrupt<R: Rng + ?Sized>(&self, slot: &str, value: &str, rng: &mut R) -> String {
        let coin: f64 = rng.gen();
        if coin >= self.slot_error_rate {
            return value.to_owned();
        }
        let others: Vec<&String> = self
            .value_pool
            .get(slot)
            .map(|pool| pool.iter().filter(|v| v.as_str() != value).collect())
            .unwrap_or_default();
        match others.choose(rng) {
            Some(v) => (*v).clone(),
            None => value.to_owned(),
        }
    }
}

/// Per-episode state of the simulated user.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserAgenda {
    pub goal: UserGoal,
    pub pending_requests: Vec<String>,
    pub disclosed: BTreeSet<String>,
    pub satisfied: BTreeMap<String, String>,
    pub booked: bool,
    pub finished: bool,
}

impl UserAgenda {
    pub fn new(goal: UserGoal) -> Self {
        let pending_requests = goal.requests.iter().cloned().collect();
        UserAgenda {
            goal,
            pending_requests,
            disclosed: BTreeSet::new(),
            satisfied: BTreeMap::new(),
            booked: false,
            finished: false,
        }
    }

    /// The user's first utterance: a request for its first needed slot.
    pub fn opening_act(&self) -> DialogueAct {
        self.current_need()
            .unwrap_or_else(|| DialogueAct::new(Intent::Greet))
    }

    /// Next thing the user still wants, as a request act.
    pub fn current_need(&self) -> Option<DialogueAct> {
        if let Some(slot) = self
            .pending_requests
            .iter()
            .find(|s| !self.satisfied.contains_key(*s))
        {
            return Some(DialogueAct::request(slot));
        }
        if self.goal.wants_booking && !self.booked {
            return Some(DialogueAct::request(TICKET_SLOT));
        }
        None
    }

    fn need_or_bye(&mut self) -> DialogueAct {
        match self.current_need() {
            Some(act) => act,
            None => self.say_bye(),
        }
    }

    fn say_bye(&mut self) -> DialogueAct {
        self.finished = true;
        DialogueAct::new(Intent::Bye)
    }
}

/// Samples a goal from a random entry, so it always matches at least that
/// entry. Constraints use only known cells of the entry.
pub fn sample_goal<R: Rng + ?Sized>(table: &KbTable, rng: &mut R) -> Result<UserGoal> {
    let schema = table.schema();
    if schema.len() < 2 {
        return Err(DdrError::Config(
            "goal sampling needs at least two slots".into(),
        ));
    }
    for _ in 0..1000 {
        let row = table.row(rng.gen_range(0..table.len()));
        let mut known: Vec<usize> = (0..schema.len()).filter(|&i| row[i] != UNKNOWN).collect();
        if known.is_empty() {
            continue;
        }
        known.shuffle(rng);
        let max_constraints = known.len().min(schema.len() - 1);
        let n_constraints = rng.gen_range(1..=max_constraints);
        let constrained: BTreeSet<usize> = known[..n_constraints].iter().copied().collect();
        let mut free: Vec<usize> = (0..schema.len())
            .filter(|i| !constrained.contains(i))
            .collect();
        free.shuffle(rng);
        let n_requests = rng.gen_range(1..=free.len().min(MAX_GOAL_REQUESTS));
        return Ok(UserGoal {
            constraints: constrained
                .iter()
                .map(|&i| (schema[i].clone(), row[i].clone()))
                .collect(),
            requests: free[..n_requests].iter().map(|&i| schema[i].clone()).collect(),
            wants_booking: rng.gen_bool(0.5),
        });
    }
    Err(DdrError::Generation(
        "table has no entry with a known value".into(),
    ))
}

/// The user's reply to one system act.
pub fn respond<R: Rng + ?Sized>(
    agenda: &mut UserAgenda,
    system_act: &DialogueAct,
    noise: &NoiseModel,
    rng: &mut R,
) -> Result<DialogueAct> {
    if agenda.finished {
        return Err(DdrError::Protocol(
            "the user already ended the dialogue".into(),
        ));
    }
    let reply = match system_act.intent {
        Intent::Request => {
            let mut reply = DialogueAct::new(Intent::Inform);
            for slot in system_act.slots.keys() {
                let value = match agenda.goal.constraints.get(slot) {
                    Some(v) => {
                        agenda.disclosed.insert(slot.clone());
                        noise.corrupt(slot, v, rng)
                    }
                    None => DONT_CARE.to_owned(),
                };
                reply.slots.insert(slot.clone(), Some(value));
            }
            if reply.slots.is_empty() {
                agenda.need_or_bye()
            } else {
                reply
            }
        }
        Intent::Inform => {
            let mut corrections = DialogueAct::new(Intent::Inform);
            let mut accepted = DialogueAct::new(Intent::Confirm);
            for (slot, value) in &system_act.slots {
                let Some(value) = value.as_deref().filter(|v| *v != NO_MATCH) else {
                    continue;
                };
                if agenda.goal.requests.contains(slot) {
                    agenda.satisfied.insert(slot.clone(), value.to_owned());
                } else if let Some(goal_value) = agenda.goal.constraints.get(slot) {
                    agenda.disclosed.insert(slot.clone());
                    let said = noise.corrupt(slot, goal_value, rng);
                    corrections.slots.insert(slot.clone(), Some(said));
                } else {
                    accepted.slots.insert(slot.clone(), Some(value.to_owned()));
                }
            }
            if !corrections.slots.is_empty() {
                corrections
            } else if system_act
                .slots
                .keys()
                .any(|s| agenda.goal.requests.contains(s))
                || accepted.slots.is_empty()
            {
                agenda.need_or_bye()
            } else {
                accepted
            }
        }
        Intent::Booking => {
            if !agenda.goal.wants_booking {
                DialogueAct::new(Intent::Deny)
            } else if system_act.slots.is_empty() {
                // Nothing to book: the agent had no matching entry.
                agenda.need_or_bye()
            } else {
                // An offered entry that contradicts a constraint is refused
                // by restating the constraint.
                let mut corrections = DialogueAct::new(Intent::Inform);
                for (slot, goal_value) in &agenda.goal.constraints {
                    if let Some(Some(offered)) = system_act.slots.get(slot) {
                        if offered != goal_value {
                            corrections.slots.insert(slot.clone(), Some(noise.corrupt(slot, goal_value, rng)));
                        }
                    }
                }
                if !corrections.slots.is_empty() {
                    for slot in corrections.slots.keys() {
                        agenda.disclosed.insert(slot.clone());
                    }
                    return Ok(corrections);
                }
                agenda.booked = true;
                if agenda.current_need().is_none() {
                    agenda.say_bye()
                } else {
                    DialogueAct::new(Intent::Thanks)
                }
            }
        }
        Intent::Bye => agenda.say_bye(),
        Intent::Greet | Intent::Thanks | Intent::Confirm | Intent::Deny | Intent::NotSure => {
            agenda.need_or_bye()
        }
    };
    Ok(reply)
}
