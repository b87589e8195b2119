//! Machine-readable action schemas: name, arity, argument kinds, and the
//! register effects each action has on the robot's abstract state.

use serde::Serialize;
use std::collections::HashMap;
use std::sync::OnceLock;

/// What an argument position holds, and which external model would have
/// resolved it on the real robot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ArgKind {
    /// Plain text passed through verbatim (door ids, respond topics).
    Literal,
    /// A room name resolved against the world map.
    LocationName,
    /// An object class label (detector-resolved on the robot).
    ObjectName,
    /// A free-form person description (VLM-resolved on the robot).
    PersonDesc,
    /// A free-form visual query (VLM-resolved on the robot).
    VlmQuery,
}

/// The robot's implicit registers threaded between actions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Register {
    Focus,
    Held,
    Answer,
}

/// Static description of one action: signature plus register effects.
#[derive(Debug, Clone, Serialize)]
pub struct ActionSchema {
    pub canonical_name: &'static str,
    pub description: &'static str,
    pub arg_names: &'static [&'static str],
    pub arg_kinds: &'static [ArgKind],
    pub reads: &'static [Register],
    pub writes: &'static [Register],
    pub clears: &'static [Register],
}

impl ActionSchema {
    pub fn arity(&self) -> usize {
        self.arg_kinds.len()
    }

    /// Signature line as shown in prompts and docs, e.g. `Move_To(location)`.
    pub fn signature(&self) -> String {
        format!("{}({})", self.canonical_name, self.arg_names.join(", "))
    }
}

use ArgKind::*;
use Register::*;

macro_rules! schema {
    ($name:literal, $desc:literal, [$($arg:literal : $kind:expr),*],
     r: [$($r:expr),*], w: [$($w:expr),*], c: [$($c:expr),*]) => {
        ActionSchema {
            canonical_name: $name,
            description: $desc,
            arg_names: &[$($arg),*],
            arg_kinds: &[$($kind),*],
            reads: &[$($r),*],
            writes: &[$($w),*],
            clears: &[$($c),*],
        }
    };
}

/// The 21 dataset actions.
pub const ACTION_SCHEMAS: [ActionSchema; 21] = [
    schema!("Respond", "Respond to user", ["request": Literal], r: [], w: [], c: []),
    schema!("Move_To", "Move to a location", ["location": LocationName], r: [], w: [], c: [Focus]),
    schema!("Pour_In", "Pour object into a container", ["object": ObjectName], r: [Held], w: [], c: [Held]),
    schema!("Search_Object", "Search for an object", ["name": ObjectName, "desc": VlmQuery], r: [], w: [Focus], c: []),
    schema!("Search_Person", "Search for a person", ["name": Literal, "desc": PersonDesc], r: [], w: [Focus], c: []),
    schema!("Pickup", "Pickup an object", [], r: [Focus], w: [Held], c: []),
    schema!("Place_On", "Place picked up object on placement", ["placement": LocationName], r: [Held], w: [], c: [Held]),
    schema!("Place_Next", "Place picked up object next to object", ["object": ObjectName], r: [Held], w: [], c: [Held]),
    schema!("Give_To", "Give an object to user", [], r: [Held, Focus], w: [], c: [Held]),
    schema!("Open", "Open a door", ["object": Literal], r: [], w: [], c: []),
    schema!("Close", "Close a door", ["object": Literal], r: [], w: [], c: []),
    schema!("Vision_Ask", "Ask VLM and return in Answer()", ["question": VlmQuery], r: [], w: [Answer], c: []),
    schema!("Answer", "Retrieve answer", [], r: [Answer], w: [], c: []),
    schema!("Follow", "Follow a person", [], r: [Focus], w: [], c: []),
    schema!("New_Request", "Take a new request", [], r: [], w: [], c: [Focus, Answer]),
    schema!("Count_Person", "Count people and return in Answer()", ["desc": PersonDesc], r: [], w: [Answer], c: []),
    schema!("Count_Object", "Count object and return in Answer()", ["name": ObjectName, "desc": VlmQuery], r: [], w: [Answer], c: []),
    schema!("Ask_Name", "Ask name and return in Answer()", [], r: [Focus], w: [Answer], c: []),
    schema!("What_Time", "Retrieve time", [], r: [], w: [Answer], c: []),
    schema!("What_Day", "Retrieve date", [], r: [], w: [Answer], c: []),
    schema!("What_Tomorrow", "Retrieve tomorrow date", [], r: [], w: [Answer], c: []),
];

/// Case-insensitive lookup over the fixed action set.
pub struct ActionRegistry {
    by_lower: HashMap<String, &'static ActionSchema>,
}

impl ActionRegistry {
    fn new() -> Self {
        let mut by_lower = HashMap::new();
        for schema in &ACTION_SCHEMAS {
            let prev = by_lower.insert(schema.canonical_name.to_lowercase(), schema);
            assert!(prev.is_none(), "duplicate action name {}", schema.canonical_name);
        }
        ActionRegistry { by_lower }
    }

    pub fn lookup(&self, name: &str) -> Option<&'static ActionSchema> {
        self.by_lower.get(&name.to_lowercase()).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = &'static ActionSchema> {
        ACTION_SCHEMAS.iter()
    }

    pub fn len(&self) -> usize {
        ACTION_SCHEMAS.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// JSON export of every schema, for docs and prompt tooling.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&ACTION_SCHEMAS).expect("schemas serialize")
    }
}

/// The shared registry instance.
pub fn registry() -> &'static ActionRegistry {
    static REGISTRY: OnceLock<ActionRegistry> = OnceLock::new();
    REGISTRY.get_or_init(ActionRegistry::new)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_has_21_actions() {
        assert_eq!(registry().len(), 21);
    }

    #[test]
    fn lookup_is_case_insensitive() {
        let s = registry().lookup("pickup").unwrap();
        assert_eq!(s.canonical_name, "Pickup");
        assert_eq!(s.arity(), 0);
        assert_eq!(s.reads, &[Focus]);
        assert_eq!(s.writes, &[Held]);
    }

    #[test]
    fn search_person_signature() {
        let s = registry().lookup("Search_Person").unwrap();
        assert_eq!(s.arity(), 2);
        assert_eq!(s.arg_kinds, &[Literal, PersonDesc]);
        assert_eq!(s.writes, &[Focus]);
        assert_eq!(s.signature(), "Search_Person(name, desc)");
    }

    #[test]
    fn what_time_writes_answer() {
        let s = registry().lookup("What_Time").unwrap();
        assert_eq!(s.arity(), 0);
        assert_eq!(s.writes, &[Answer]);
    }

    #[test]
    fn unknown_action_not_found() {
        assert!(registry().lookup("Fly_To").is_none());
    }

    #[test]
    fn names_unique_case_insensitively() {
        let mut seen = std::collections::HashSet::new();
        for s in registry().iter() {
            assert!(seen.insert(s.canonical_name.to_lowercase()));
            assert_eq!(s.arg_names.len(), s.arg_kinds.len());
        }
    }

    #[test]
    fn json_export_round_trips() {
        let v: serde_json::Value = serde_json::from_str(&registry().to_json()).unwrap();
        assert_eq!(v.as_array().unwrap().len(), 21);
    }
}
