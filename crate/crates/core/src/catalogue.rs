//! The fixed set of system actions derived from a table schema.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::act::{DialogueAct, Intent};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemAction {
    Request(String),
    /// Inform a slot; the value is filled from the database at step time.
    Inform(String),
    Booking,
    Common(Intent),
}

impl fmt::Display for SystemAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SystemAction::Request(s) => write!(f, "request({s})"),
            SystemAction::Inform(s) => write!(f, "inform({s})"),
            SystemAction::Booking => f.write_str("booking"),
            SystemAction::Common(i) => write!(f, "{i}"),
        }
    }
}

/// One request and one inform per slot, then booking, then the common acts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionCatalogue {
    actions: Vec<SystemAction>,
    slots: usize,
}

impl ActionCatalogue {
    pub fn from_schema(schema: &[String]) -> Self {
        let mut actions = Vec::with_capacity(2 * schema.len() + 1 + Intent::COMMON.len());
        actions.extend(schema.iter().map(|s| SystemAction::Request(s.clone())));
        actions.extend(schema.iter().map(|s| SystemAction::Inform(s.clone())));
        actions.push(SystemAction::Booking);
        actions.extend(Intent::COMMON.iter().map(|&i| SystemAction::Common(i)));
        ActionCatalogue {
            actions,
            slots: schema.len(),
        }
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn slot_count(&self) -> usize {
        self.slots
    }

    pub fn action(&self, id: usize) -> Option<&SystemAction> {
        self.actions.get(id)
    }

    pub fn actions(&self) -> &[SystemAction] {
        &self.actions
    }

    pub fn id_of(&self, action: &SystemAction) -> Option<usize> {
        self.actions.iter().position(|a| a == action)
    }

    /// Catalogue id of a concrete act, ignoring slot values.
    pub fn id_for_act(&self, act: &DialogueAct) -> Option<usize> {
        let action = match act.intent {
            Intent::Request => SystemAction::Request(act.first_slot()?.to_owned()),
            Intent::Inform => SystemAction::Inform(act.first_slot()?.to_owned()),
            Intent::Booking => SystemAction::Booking,
            other => SystemAction::Common(other),
        };
        self.id_of(&action)
    }
}
