//! Dialogue acts exchanged between the agent and the simulated user.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{DdrError, Result};

/// Slot name used by users asking to book.
pub const TICKET_SLOT: &str = "ticket";
/// Value a user gives for a slot it does not care about.
pub const DONT_CARE: &str = "anything";
/// Value the agent fills into an inform when no entry matches.
pub const NO_MATCH: &str = "no_match";

/// Closed set of dialogue intents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Intent {
    Request,
    Inform,
    Booking,
    Bye,
    Greet,
    Deny,
    Confirm,
    Thanks,
    NotSure,
}

impl Intent {
    pub const ALL: [Intent; 9] = [
        Intent::Request,
        Intent::Inform,
        Intent::Booking,
        Intent::Bye,
        Intent::Greet,
        Intent::Deny,
        Intent::Confirm,
        Intent::Thanks,
        Intent::NotSure,
    ];

    /// Intents that carry no task payload.
    pub const COMMON: [Intent; 5] = [
        Intent::Greet,
        Intent::Bye,
        Intent::Thanks,
        Intent::Confirm,
        Intent::Deny,
    ];

    pub fn index(self) -> usize {
        Intent::ALL.iter().position(|i| *i == self).unwrap()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Intent::Request => "request",
            Intent::Inform => "inform",
            Intent::Booking => "booking",
            Intent::Bye => "bye",
            Intent::Greet => "greet",
            Intent::Deny => "deny",
            Intent::Confirm => "confirm",
            Intent::Thanks => "thanks",
            Intent::NotSure => "not_sure",
        }
    }
}

impl FromStr for Intent {
    type Err = DdrError;

    fn from_str(s: &str) -> Result<Self> {
        let lowered = s.trim().to_ascii_lowercase();
        Intent::ALL
            .iter()
            .copied()
            .find(|i| i.as_str() == lowered)
            .ok_or_else(|| DdrError::Parse(format!("unknown intent `{s}`")))
    }
}

impl fmt::Display for Intent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// An intent plus its slot payload.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DialogueAct {
    pub intent: Intent,
    #[serde(default)]
    pub slots: BTreeMap<String, Option<String>>,
}

#[derive(Deserialize)]
struct RawAct {
    intent: String,
    #[serde(default)]
    slots: serde_json::Map<String, serde_json::Value>,
}

impl DialogueAct {
    pub fn new(intent: Intent) -> Self {
        DialogueAct {
            intent,
            slots: BTreeMap::new(),
        }
    }

    pub fn request(slot: &str) -> Self {
        let mut act = DialogueAct::new(Intent::Request);
        act.slots.insert(slot.to_owned(), None);
        act
    }

    pub fn inform(slot: &str, value: &str) -> Self {
        let mut act = DialogueAct::new(Intent::Inform);
        act.slots.insert(slot.to_owned(), Some(value.to_owned()));
        act
    }

    pub fn with_slot(mut self, slot: &str, value: Option<&str>) -> Self {
        self.slots.insert(slot.to_owned(), value.map(str::to_owned));
        self
    }

    /// First slot name of the payload, if any.
    pub fn first_slot(&self) -> Option<&str> {
        self.slots.keys().next().map(String::as_str)
    }

    pub fn value_of(&self, slot: &str) -> Option<&str> {
        self.slots.get(slot).and_then(|v| v.as_deref())
    }

    /// Parses the JSON form `{"intent": str, "slots": {name: value-or-null}}`
    /// and canonicalizes the result.
    pub fn from_json(text: &str) -> Result<Self> {
        let raw: RawAct =
            serde_json::from_str(text).map_err(|e| DdrError::Parse(e.to_string()))?;
        let intent: Intent = raw.intent.parse()?;
        let mut slots = BTreeMap::new();
        for (name, value) in raw.slots {
            let value = match value {
                serde_json::Value::Null => None,
                serde_json::Value::String(s) => Some(s),
                other => {
                    return Err(DdrError::Parse(format!(
                        "slot `{name}` has non-string value `{other}`"
                    )))
                }
            };
            slots.insert(name, value);
        }
        canonicalize_act(DialogueAct { intent, slots })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("acts always serialize")
    }
}

impl fmt::Display for DialogueAct {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.intent)?;
        for (i, (slot, value)) in self.slots.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            match value {
                Some(v) => write!(f, "{slot}={v}")?,
                None => f.write_str(slot)?,
            }
        }
        f.write_str(")")
    }
}

/// Lowercases and sorts slot names and strips values from request slots.
///
/// Inform acts must carry a value for every slot.
pub fn canonicalize_act(act: DialogueAct) -> Result<DialogueAct> {
    let mut slots = BTreeMap::new();
    for (name, value) in act.slots {
        let key = name.trim().to_ascii_lowercase();
        if key.is_empty() {
            return Err(DdrError::Parse("empty slot name".into()));
        }
        let value = match act.intent {
            Intent::Request => None,
            Intent::Inform => match value {
                Some(v) => Some(v),
                None => {
                    return Err(DdrError::Parse(format!(
                        "inform slot `{name}` carries no value"
                    )))
                }
            },
            _ => value,
        };
        if slots.insert(key.clone(), value).is_some() {
            return Err(DdrError::Parse(format!("duplicate slot `{key}`")));
        }
    }
    Ok(DialogueAct {
        intent: act.intent,
        slots,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn request_slot_names_are_lowercased() {
        let act = DialogueAct::request("Genre");
        let canon = canonicalize_act(act).unwrap();
        assert_eq!(canon, DialogueAct::request("genre"));
    }

    #[test]
    fn canonicalization_is_idempotent() {
        let act = DialogueAct::new(Intent::Request)
            .with_slot("City", Some("LA"))
            .with_slot("genre", None);
        let once = canonicalize_act(act).unwrap();
        let twice = canonicalize_act(once.clone()).unwrap();
        assert_eq!(once, twice);
        assert_eq!(once.value_of("city"), None);
    }

    #[test]
    fn inform_keys_serialize_sorted() {
        let act = DialogueAct::from_json(r#"{"intent":"inform","slots":{"genre":"action","city":"LA"}}"#)
            .unwrap();
        assert_eq!(
            act.to_json(),
            r#"{"intent":"inform","slots":{"city":"LA","genre":"action"}}"#
        );
    }

    #[test]
    fn unknown_intent_names_the_token() {
        let err = DialogueAct::from_json(r#"{"intent":"haggle","slots":{}}"#).unwrap_err();
        assert!(err.to_string().contains("haggle"), "{err}");
    }

    #[test]
    fn inform_without_value_is_rejected() {
        let err = DialogueAct::from_json(r#"{"intent":"inform","slots":{"city":null}}"#).unwrap_err();
        assert!(matches!(err, DdrError::Parse(_)));
    }

    #[test]
    fn numeric_slot_values_are_rejected() {
        let err = DialogueAct::from_json(r#"{"intent":"inform","slots":{"city":3}}"#).unwrap_err();
        assert!(err.to_string().contains("city"));
    }

    #[test]
    fn intents_round_trip_through_strings() {
        for intent in Intent::ALL {
            assert_eq!(intent.as_str().parse::<Intent>().unwrap(), intent);
        }
    }
}
