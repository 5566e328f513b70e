//! Deterministic rule policy used to pre-fill the replay buffer, and the
//! request-serving rules it shares with information-gain rescue.

use crate::act::{DialogueAct, Intent, TICKET_SLOT};
use crate::catalogue::SystemAction;
use crate::env::{realize_action, EnvState};
use crate::kb::KbTable;

/// Reply to a common act: bye and thanks close the dialogue, anything else
/// is answered with a greeting.
pub fn echo_common(last_user: Intent) -> Intent {
    match last_user {
        Intent::Bye | Intent::Thanks => Intent::Bye,
        _ => Intent::Greet,
    }
}

fn serve(slot: &str, table: &KbTable) -> Option<SystemAction> {
    if slot == TICKET_SLOT {
        Some(SystemAction::Booking)
    } else if table.has_slot(slot) {
        Some(SystemAction::Inform(slot.to_string()))
    } else {
        None
    }
}

/// Answers the user's latest request, else the first outstanding one
/// (schema order, ticket last), else echoes the common act.
pub fn serve_or_echo(state: &EnvState, table: &KbTable) -> SystemAction {
    if state.last_user_act.intent == Intent::Request {
        if let Some(action) = state.last_user_act.first_slot().and_then(|s| serve(s, table)) {
            return action;
        }
    }
    let outstanding = state.outstanding_requests();
    let first = table
        .schema()
        .iter()
        .map(String::as_str)
        .chain(std::iter::once(TICKET_SLOT))
        .find(|s| outstanding.contains(*s));
    if let Some(action) = first.and_then(|s| serve(s, table)) {
        return action;
    }
    SystemAction::Common(echo_common(state.last_user_act.intent))
}

/// The rule policy's catalogue action.
pub fn warm_start_action(state: &EnvState, table: &KbTable) -> SystemAction {
    if state.current_n == 0 {
        // Nothing left to offer.
        return SystemAction::Common(Intent::Bye);
    }
    if state.current_n > 1 {
        if let Some(slot) = table
            .schema()
            .iter()
            .find(|s| !state.constraints_so_far.contains_key(*s))
        {
            return SystemAction::Request(slot.clone());
        }
    }
    serve_or_echo(state, table)
}

pub fn warm_start_act(state: &EnvState, table: &KbTable) -> DialogueAct {
    realize_action(table, state, &warm_start_action(state, table))
}
