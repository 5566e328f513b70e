use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::kb::{self, KbTable};

/// What a simulated user wants out of a dialogue.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct UserGoal {
    /// Slot values the user will disclose when asked.
    pub constraints: BTreeMap<String, String>,
    /// Slots the user wants the agent to tell it.
    pub requests: BTreeSet<String>,
    pub wants_booking: bool,
}

impl UserGoal {
    pub fn load_list(path: &Path) -> Result<Vec<UserGoal>> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save_list(goals: &[UserGoal], path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(goals)?)?;
        Ok(())
    }
}

/// A goal is satisfiable when its constraints match at least one entry and
/// it neither constrains nor requests the same slot twice.
pub fn validate_goal(goal: &UserGoal, table: &KbTable) -> Result<bool> {
    for slot in goal.constraints.keys().chain(goal.requests.iter()) {
        table.slot_index(slot)?;
    }
    if goal.constraints.is_empty() || goal.requests.is_empty() {
        return Ok(false);
    }
    if goal.requests.iter().any(|r| goal.constraints.contains_key(r)) {
        return Ok(false);
    }
    Ok(kb::match_count(table, &goal.constraints)? >= 1)
}
