//! The dialogue environment: state tracking, reward, success judgment,
//! featurization and snapshot/restore.
//!
//! The tracker keeps one committed value per slot. A slot gets a value from
//! a user inform, and from an offered booking entry the user did not deny
//! (minus the slots the user corrected in the same exchange). A user confirm
//! only marks the slot as `anything`. Two different committed values for one
//! slot leave the slot contradictory, and a contradictory slot matches no
//! entry.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::act::{DialogueAct, Intent, DONT_CARE, NO_MATCH, TICKET_SLOT};
use crate::catalogue::{ActionCatalogue, SystemAction};
use crate::config::RunConfig;
use crate::error::{DdrError, Result};
use crate::experience::ExperienceKind;
use crate::goal::{validate_goal, UserGoal};
use crate::kb::{self, Constraints, KbTable, UNKNOWN};
use crate::rng::{stream, DdrRng, Stream};
use crate::user_sim::{respond, NoiseModel, UserAgenda};

/// Committed value of a slot that received two different values.
pub const CONFLICT: &str = "#conflict";

/// Number of one-hot bins for the match count: 0, 1, 2, 3, 4, >=5.
pub const N_BINS: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeStatus {
    Ongoing,
    Success,
    Failure,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeReason {
    None,
    GoalMet,
    MaxTurns,
    UserByeUnmet,
    /// The user left while no entry matched the tracked constraints.
    NoMatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Outcome {
    pub status: OutcomeStatus,
    pub reason: OutcomeReason,
}

impl Outcome {
    pub const ONGOING: Outcome = Outcome {
        status: OutcomeStatus::Ongoing,
        reason: OutcomeReason::None,
    };

    pub fn success() -> Self {
        Outcome {
            status: OutcomeStatus::Success,
            reason: OutcomeReason::GoalMet,
        }
    }

    pub fn failure(reason: OutcomeReason) -> Self {
        Outcome {
            status: OutcomeStatus::Failure,
            reason,
        }
    }

    pub fn is_terminal(&self) -> bool {
        self.status != OutcomeStatus::Ongoing
    }

    pub fn is_success(&self) -> bool {
        self.status == OutcomeStatus::Success
    }
}

/// `+2L` for success, `-L` for failure, `-1` for an ongoing turn.
pub fn compute_reward(outcome: Outcome, max_turns: usize) -> f64 {
    let l = max_turns as f64;
    match outcome.status {
        OutcomeStatus::Success => 2.0 * l,
        OutcomeStatus::Failure => -l,
        OutcomeStatus::Ongoing => -1.0,
    }
}

/// Reward of one exchange: the per-turn penalty plus the terminal bonus.
pub fn exchange_reward(outcome: Outcome, max_turns: usize) -> f64 {
    let turn = compute_reward(Outcome::ONGOING, max_turns);
    if outcome.is_terminal() {
        turn + compute_reward(outcome, max_turns)
    } else {
        turn
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvState {
    pub turn: usize,
    pub constraints_so_far: Constraints,
    pub user_requests_seen: BTreeSet<String>,
    pub last_user_act: DialogueAct,
    pub last_system_act: Option<DialogueAct>,
    pub last_system_action: Option<usize>,
    pub current_n: usize,
    pub informed_by_agent: BTreeMap<String, String>,
    pub booked: bool,
    pub booked_entity: Option<usize>,
    pub outcome: Outcome,
}

impl EnvState {
    /// Requests the user made that the agent has not served yet, including
    /// the ticket until a booking is accepted.
    pub fn outstanding_requests(&self) -> BTreeSet<String> {
        self.user_requests_seen
            .iter()
            .filter(|s| {
                if s.as_str() == TICKET_SLOT {
                    !self.booked
                } else {
                    !self.informed_by_agent.contains_key(*s)
                }
            })
            .cloned()
            .collect()
    }
}

/// Length of the feature vector for a schema with `slots` slots and a
/// catalogue of `actions` actions.
pub fn feature_len(slots: usize, actions: usize) -> usize {
    Intent::ALL.len() + slots + (slots + 1) + actions + N_BINS + 1
}

/// Fixed-length rendering of a state:
/// last user intent (one-hot) | slots with a tracked value | outstanding
/// user requests (schema slots, then ticket) | last system action (one-hot)
/// | match-count bin (one-hot) | turn / L.
pub fn featurize(
    state: &EnvState,
    schema: &[String],
    catalogue: &ActionCatalogue,
    max_turns: usize,
) -> Vec<f64> {
    let slots = schema.len();
    let mut v = vec![0.0; feature_len(slots, catalogue.len())];
    let mut off = 0;
    v[off + state.last_user_act.intent.index()] = 1.0;
    off += Intent::ALL.len();
    for (i, slot) in schema.iter().enumerate() {
        if state.constraints_so_far.contains_key(slot) {
            v[off + i] = 1.0;
        }
    }
    off += slots;
    let outstanding = state.outstanding_requests();
    for (i, slot) in schema.iter().enumerate() {
        if outstanding.contains(slot) {
            v[off + i] = 1.0;
        }
    }
    if outstanding.contains(TICKET_SLOT) {
        v[off + slots] = 1.0;
    }
    off += slots + 1;
    if let Some(a) = state.last_system_action {
        v[off + a] = 1.0;
    }
    off += catalogue.len();
    v[off + state.current_n.min(N_BINS - 1)] = 1.0;
    off += N_BINS;
    v[off] = state.turn as f64 / max_turns as f64;
    v
}

/// True iff every requested slot was informed with values of one entry
/// that satisfies all goal constraints, and a booking of such an entry
/// happened exactly when the user wanted one.
pub fn judge_success(state: &EnvState, goal: &UserGoal, table: &KbTable) -> Result<bool> {
    if goal.requests.iter().any(|r| !state.informed_by_agent.contains_key(r)) {
        return Ok(false);
    }
    if state.booked != goal.wants_booking {
        return Ok(false);
    }
    let agrees = |row: usize| -> Result<bool> {
        for r in &goal.requests {
            if table.value(row, r)? != state.informed_by_agent[r] {
                return Ok(false);
            }
        }
        Ok(true)
    };
    let candidates = kb::match_entries(table, &goal.constraints)?;
    if goal.wants_booking {
        match state.booked_entity {
            Some(row) if candidates.contains(&row) => agrees(row),
            _ => Ok(false),
        }
    } else {
        for row in candidates {
            if agrees(row)? {
                return Ok(true);
            }
        }
        Ok(false)
    }
}

/// Concrete act for a catalogue action in `state`. Informs carry the first
/// known value among matching entries (or `no_match`); a booking carries the
/// full first matching entry, or nothing when no entry matches.
pub fn realize_action(table: &KbTable, state: &EnvState, action: &SystemAction) -> DialogueAct {
    let matches = kb::match_entries(table, &state.constraints_so_far).unwrap_or_default();
    match action {
        SystemAction::Request(slot) => DialogueAct::request(slot),
        SystemAction::Inform(slot) => {
            let value = match table.slot_index(slot) {
                Ok(col) => matches
                    .iter()
                    .map(|&i| table.row(i)[col].as_str())
                    .find(|v| *v != UNKNOWN)
                    .unwrap_or(NO_MATCH),
                Err(_) => NO_MATCH,
            };
            DialogueAct::inform(slot, value)
        }
        SystemAction::Booking => {
            let mut act = DialogueAct::new(Intent::Booking);
            if let Some(&row) = matches.first() {
                for (slot, value) in table.schema().iter().zip(table.row(row)) {
                    act.slots.insert(slot.clone(), Some(value.clone()));
                }
            }
            act
        }
        SystemAction::Common(intent) => DialogueAct::new(*intent),
    }
}

/// Deep copy of everything that evolves during an episode.
#[derive(Debug, Clone)]
pub struct EnvSnapshot {
    fingerprint: u64,
    state: EnvState,
    agenda: UserAgenda,
    rng: DdrRng,
}

impl EnvSnapshot {
    pub fn state(&self) -> &EnvState {
        &self.state
    }
}

/// What one exchange produced.
#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub system_act: DialogueAct,
    pub user_act: DialogueAct,
    pub reward: f64,
    pub outcome: Outcome,
    pub prev_n: usize,
    pub n: usize,
}

/// One-episode dialogue environment over a shared table.
#[derive(Debug, Clone)]
pub struct DialogueEnv {
    table: Arc<KbTable>,
    catalogue: Arc<ActionCatalogue>,
    noise: Arc<NoiseModel>,
    max_turns: usize,
    state: EnvState,
    agenda: UserAgenda,
    rng: DdrRng,
}

impl DialogueEnv {
    pub fn new(table: Arc<KbTable>, slot_error_rate: f64, max_turns: usize) -> Result<Self> {
        if max_turns == 0 {
            return Err(DdrError::Config("max_turns must be positive".into()));
        }
        let noise = Arc::new(NoiseModel::for_table(&table, slot_error_rate)?);
        let catalogue = Arc::new(ActionCatalogue::from_schema(table.schema()));
        let placeholder = UserGoal {
            constraints: BTreeMap::new(),
            requests: BTreeSet::new(),
            wants_booking: false,
        };
        let agenda = UserAgenda::new(placeholder);
        let state = EnvState {
            turn: 0,
            constraints_so_far: Constraints::new(),
            user_requests_seen: BTreeSet::new(),
            last_user_act: DialogueAct::new(Intent::Greet),
            last_system_act: None,
            last_system_action: None,
            current_n: table.len(),
            informed_by_agent: BTreeMap::new(),
            booked: false,
            booked_entity: None,
            // Unusable until reset.
            outcome: Outcome::failure(OutcomeReason::None),
        };
        Ok(DialogueEnv {
            table,
            catalogue,
            noise,
            max_turns,
            state,
            agenda,
            rng: stream(0, Stream::Noise),
        })
    }

    pub fn from_config(table: Arc<KbTable>, config: &RunConfig) -> Result<Self> {
        Self::new(table, config.slot_error_rate, config.max_turns)
    }

    pub fn table(&self) -> &KbTable {
        &self.table
    }

    pub fn shared_table(&self) -> Arc<KbTable> {
        Arc::clone(&self.table)
    }

    pub fn catalogue(&self) -> &ActionCatalogue {
        &self.catalogue
    }

    pub fn max_turns(&self) -> usize {
        self.max_turns
    }

    pub fn state(&self) -> &EnvState {
        &self.state
    }

    pub fn agenda(&self) -> &UserAgenda {
        &self.agenda
    }

    pub fn goal(&self) -> &UserGoal {
        &self.agenda.goal
    }

    pub fn feature_len(&self) -> usize {
        feature_len(self.table.schema().len(), self.catalogue.len())
    }

    pub fn features(&self) -> Vec<f64> {
        featurize(&self.state, self.table.schema(), &self.catalogue, self.max_turns)
    }

    pub fn is_terminal(&self) -> bool {
        self.state.outcome.is_terminal()
    }

    /// Starts an episode for `goal`; `seed` drives the user's noise stream.
    pub fn reset(&mut self, goal: &UserGoal, seed: u64) -> Result<&EnvState> {
        if !validate_goal(goal, &self.table)? {
            return Err(DdrError::Precondition(
                "goal is not satisfiable against the table".into(),
            ));
        }
        self.agenda = UserAgenda::new(goal.clone());
        self.rng = stream(seed, Stream::Noise);
        let opening = self.agenda.opening_act();
        let mut seen = BTreeSet::new();
        if opening.intent == Intent::Request {
            seen.extend(opening.slots.keys().cloned());
        }
        self.state = EnvState {
            turn: 0,
            constraints_so_far: Constraints::new(),
            user_requests_seen: seen,
            last_user_act: opening,
            last_system_act: None,
            last_system_action: None,
            current_n: self.table.len(),
            informed_by_agent: BTreeMap::new(),
            booked: false,
            booked_entity: None,
            outcome: Outcome::ONGOING,
        };
        Ok(&self.state)
    }

    fn first_match(&self) -> Option<usize> {
        kb::match_entries(&self.table, &self.state.constraints_so_far)
            .ok()
            .and_then(|m| m.first().copied())
    }

    /// Turns a catalogue action into a concrete act, filling values from the
    /// first entry that matches the tracked constraints.
    pub fn realize(&self, action: &SystemAction) -> DialogueAct {
        realize_action(&self.table, &self.state, action)
    }

    /// Applies a catalogue action.
    pub fn step(&mut self, action_id: usize) -> Result<StepResult> {
        let action = self
            .catalogue
            .action(action_id)
            .ok_or(DdrError::Shape {
                expected: self.catalogue.len(),
                got: action_id,
            })?
            .clone();
        let act = self.realize(&action);
        self.apply(act, Some(action_id))
    }

    /// Applies an arbitrary system act (scripted agents, tests).
    pub fn step_act(&mut self, act: DialogueAct) -> Result<StepResult> {
        let id = self.catalogue.id_for_act(&act);
        self.apply(act, id)
    }

    fn commit(&mut self, slot: &str, value: &str) {
        let constraints = &mut self.state.constraints_so_far;
        match constraints.get(slot).map(String::as_str) {
            None | Some(DONT_CARE) => {
                constraints.insert(slot.to_owned(), value.to_owned());
            }
            Some(existing) if existing == value => {}
            Some(_) => {
                constraints.insert(slot.to_owned(), CONFLICT.to_owned());
            }
        }
    }

    fn apply(&mut self, system_act: DialogueAct, action_id: Option<usize>) -> Result<StepResult> {
        if self.is_terminal() {
            return Err(DdrError::Protocol("episode already ended".into()));
        }
        for slot in system_act.slots.keys() {
            if !self.table.has_slot(slot) {
                return Err(DdrError::UnknownSlot(slot.clone()));
            }
        }
        let prev_n = self.state.current_n;
        let booking_row = if system_act.intent == Intent::Booking && !system_act.slots.is_empty() {
            self.first_match()
        } else {
            None
        };

        let user_act = respond(&mut self.agenda, &system_act, &self.noise, &mut self.rng)?;

        for (slot, value) in &system_act.slots {
            if let (Intent::Inform, Some(value)) = (system_act.intent, value.as_deref()) {
                if value != NO_MATCH {
                    self.state.informed_by_agent.insert(slot.clone(), value.to_owned());
                }
            }
        }
        // An offered entry that the user did not deny joins the tracked
        // constraints, except for the slots the user corrected.
        if system_act.intent == Intent::Booking && user_act.intent != Intent::Deny {
            for (slot, value) in &system_act.slots {
                let corrected = user_act.intent == Intent::Inform && user_act.slots.contains_key(slot);
                if let Some(value) = value.as_deref().filter(|_| !corrected) {
                    self.commit(slot, value);
                }
            }
        }
        match user_act.intent {
            // The user confirms only values it has no constraint on.
            Intent::Confirm => {
                for slot in user_act.slots.keys() {
                    self.state
                        .constraints_so_far
                        .entry(slot.clone())
                        .or_insert_with(|| DONT_CARE.to_owned());
                }
            }
            Intent::Inform => {
                for (slot, value) in &user_act.slots {
                    match value.as_deref() {
                        Some(DONT_CARE) => {
                            self.state
                                .constraints_so_far
                                .entry(slot.clone())
                                .or_insert_with(|| DONT_CARE.to_owned());
                        }
                        Some(v) => self.commit(slot, v),
                        None => {}
                    }
                }
            }
            Intent::Request => {
                self.state
                    .user_requests_seen
                    .extend(user_act.slots.keys().cloned());
            }
            _ => {}
        }
        if self.agenda.booked && !self.state.booked {
            self.state.booked = true;
            self.state.booked_entity = booking_row;
        }

        self.state.turn += 1;
        self.state.current_n = kb::match_count(&self.table, &self.state.constraints_so_far)?;
        self.state.last_system_act = Some(system_act.clone());
        self.state.last_system_action = action_id;
        self.state.last_user_act = user_act.clone();

        let outcome = if judge_success(&self.state, &self.agenda.goal, &self.table)? {
            Outcome::success()
        } else if self.agenda.finished {
            if self.state.current_n == 0 {
                Outcome::failure(OutcomeReason::NoMatch)
            } else {
                Outcome::failure(OutcomeReason::UserByeUnmet)
            }
        } else if self.state.turn >= self.max_turns {
            Outcome::failure(OutcomeReason::MaxTurns)
        } else {
            Outcome::ONGOING
        };
        self.state.outcome = outcome;

        Ok(StepResult {
            system_act,
            user_act,
            reward: exchange_reward(outcome, self.max_turns),
            outcome,
            prev_n,
            n: self.state.current_n,
        })
    }

    pub fn snapshot(&self) -> EnvSnapshot {
        EnvSnapshot {
            fingerprint: self.table.schema_fingerprint(),
            state: self.state.clone(),
            agenda: self.agenda.clone(),
            rng: self.rng.clone(),
        }
    }

    pub fn restore(&mut self, snap: &EnvSnapshot) -> Result<&EnvState> {
        if snap.fingerprint != self.table.schema_fingerprint() {
            return Err(DdrError::SnapshotMismatch);
        }
        self.state = snap.state.clone();
        self.agenda = snap.agenda.clone();
        self.rng = snap.rng.clone();
        Ok(&self.state)
    }
}

/// One line of an episode log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum LogRecord {
    Exchange {
        episode: u64,
        turn: usize,
        system_act: DialogueAct,
        user_act: DialogueAct,
        n: usize,
        reward: f64,
        emitted: Vec<ExperienceKind>,
    },
    DeadEnd {
        episode: u64,
        turn: usize,
        offending_action: usize,
        recovery_index: usize,
        n_before: usize,
        rescue_action: Option<usize>,
    },
    EpisodeEnd {
        episode: u64,
        outcome: Outcome,
        turns: usize,
        total_reward: f64,
    },
}

impl LogRecord {
    pub fn episode(&self) -> u64 {
        match self {
            LogRecord::Exchange { episode, .. }
            | LogRecord::DeadEnd { episode, .. }
            | LogRecord::EpisodeEnd { episode, .. } => *episode,
        }
    }
}

pub fn write_log_lines<W: std::io::Write>(records: &[LogRecord], mut out: W) -> Result<()> {
    for record in records {
        serde_json::to_writer(&mut out, record)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_log_lines<R: std::io::BufRead>(input: R) -> Result<Vec<LogRecord>> {
    let mut records = Vec::new();
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(serde_json::from_str(&line)?);
    }
    Ok(records)
}
