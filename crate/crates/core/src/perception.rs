//! Deterministic stand-ins for the robot's perception stack: description
//! matching by token subsets, object/person search, counting, visual
//! question answering over ground-truth tags, and memory-grounded replies.

use crate::world::{EntityRef, WorldState};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

/// Words dropped when normalizing a description query.
pub const STOPWORDS: [&str; 10] =
    ["a", "an", "the", "is", "who", "with", "wearing", "person", "people", "someone"];

fn is_stopword(tok: &str) -> bool {
    STOPWORDS.contains(&tok)
}

/// A normalized description query. Tokens are lowercased, stripped of
/// punctuation (internal hyphens kept, so "t-shirt" is one token), and
/// stopword-filtered. An empty query matches everything.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DescQuery {
    pub raw: String,
    pub tokens: BTreeSet<String>,
}

impl DescQuery {
    pub fn new(raw: &str) -> Self {
        let tokens = tokenize(raw).into_iter().filter(|t| !is_stopword(t)).collect();
        DescQuery { raw: raw.to_string(), tokens }
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Lowercase and split on non-alphanumerics, keeping hyphens that sit
/// between alphanumeric characters.
pub fn tokenize(text: &str) -> Vec<String> {
    let lower = text.to_lowercase();
    let chars: Vec<char> = lower.chars().collect();
    let mut tokens = Vec::new();
    let mut cur = String::new();
    for (i, &c) in chars.iter().enumerate() {
        let keep = c.is_alphanumeric()
            || (c == '-'
                && i > 0
                && chars[i - 1].is_alphanumeric()
                && chars.get(i + 1).is_some_and(|n| n.is_alphanumeric()));
        if keep {
            cur.push(c);
        } else if !cur.is_empty() {
            tokens.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        tokens.push(cur);
    }
    tokens
}

/// True iff every query token appears in the entity's tag set.
pub fn match_description(tags: &BTreeSet<String>, query: &DescQuery) -> bool {
    query.tokens.iter().all(|t| tags.contains(t))
}

/// Objects visible in `room` (place resolves there transitively), filtered
/// by class label and description, sorted by id.
pub fn find_objects(
    world: &WorldState,
    room: &str,
    name: &str,
    query: &DescQuery,
) -> Vec<String> {
    let mut ids: Vec<String> = world
        .objects
        .iter()
        .filter(|(id, obj)| {
            world.object_room(id).as_deref() == Some(room)
                && (name.is_empty() || obj.name.eq_ignore_ascii_case(name))
                && match_description(&obj.tags, query)
        })
        .map(|(id, _)| id.clone())
        .collect();
    ids.sort();
    ids
}

/// Persons in `room`, filtered by name and description (dynamic tags from
/// held objects included), sorted by id.
pub fn find_persons(
    world: &WorldState,
    room: &str,
    name: &str,
    query: &DescQuery,
) -> Vec<String> {
    let mut ids: Vec<String> = world
        .persons
        .iter()
        .filter(|(id, p)| {
            p.room == room
                && (name.is_empty() || p.name.eq_ignore_ascii_case(name))
                && match_description(&world.person_tags(id), query)
        })
        .map(|(id, _)| id.clone())
        .collect();
    ids.sort();
    ids
}

/// What `count_entities` counts.
#[derive(Debug, Clone)]
pub enum CountKind {
    Object(String),
    Person,
}

pub fn count_entities(world: &WorldState, room: &str, kind: &CountKind, query: &DescQuery) -> usize {
    match kind {
        CountKind::Object(name) => find_objects(world, room, name, query).len(),
        CountKind::Person => find_persons(world, room, "", query).len(),
    }
}

/// Registered attribute categories for visual question answering:
/// category key (e.g. "color") to the tokens belonging to it.
#[derive(Debug, Clone, Deserialize)]
pub struct AttributeRegistry {
    pub categories: BTreeMap<String, Vec<String>>,
}

impl AttributeRegistry {
    /// Registry bundled with the repo (fixtures/attributes.json mirrors it).
    pub fn builtin() -> Self {
        serde_json::from_str(include_str!("attributes.json")).expect("builtin registry parses")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    fn tokens_of(&self, category: &str) -> Option<&[String]> {
        self.categories.get(category).map(|v| v.as_slice())
    }
}

/// Answer a visual question about `target` (an entity, or the whole room
/// scene when `target` is `None`).
///
/// Two templates are understood: "what <category> ..." reports the first
/// registered token of that category found in the target's tags, and
/// "how many <name> ..." counts matching objects in the room. Anything
/// else answers "unknown".
pub fn vision_ask(
    world: &WorldState,
    registry: &AttributeRegistry,
    room: &str,
    target: Option<&EntityRef>,
    question: &str,
) -> String {
    let toks = tokenize(question);
    if toks.len() >= 2 && toks[0] == "what" {
        if let Some(cat_tokens) = registry.tokens_of(&toks[1]) {
            let tags = match target {
                Some(EntityRef::Object(id)) => {
                    world.objects.get(id).map(|o| o.tags.clone()).unwrap_or_default()
                }
                Some(EntityRef::Person(id)) => world.person_tags(id),
                None => {
                    // room scene: union of all visible tags
                    let mut tags = BTreeSet::new();
                    for id in find_objects(world, room, "", &DescQuery::new("")) {
                        tags.extend(world.objects[&id].tags.iter().cloned());
                    }
                    for id in find_persons(world, room, "", &DescQuery::new("")) {
                        tags.extend(world.person_tags(&id));
                    }
                    tags
                }
            };
            // category list order decides among multiple hits
            for tok in cat_tokens {
                if tags.contains(tok) {
                    return tok.clone();
                }
            }
        }
        return "unknown".to_string();
    }
    if toks.len() >= 3 && toks[0] == "how" && toks[1] == "many" {
        let name = &toks[2];
        let mut n = count_entities(world, room, &CountKind::Object(name.clone()), &DescQuery::new(""));
        if n == 0 {
            if let Some(singular) = name.strip_suffix('s') {
                n = count_entities(
                    world,
                    room,
                    &CountKind::Object(singular.to_string()),
                    &DescQuery::new(""),
                );
            }
        }
        return n.to_string();
    }
    "unknown".to_string()
}

/// The robot's personal memory: topic key to stored text.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryProfile {
    pub entries: BTreeMap<String, String>,
}

impl MemoryProfile {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|s| s.as_str())
    }
}

/// Reply when no memory topic matches the request.
pub const FALLBACK_RESPONSE: &str = "I'm not sure about that.";

/// Topics tried in order when several request tokens match.
const TOPIC_PRIORITY: [&str; 6] =
    ["name", "role", "origin", "capabilities", "achievements", "favorite_color"];

fn topic_synonyms(token: &str) -> &[&str] {
    match token {
        "do" | "can" => &["capabilities"],
        "from" | "country" | "origin" => &["origin"],
        "name" | "who" | "you" | "yourself" => &["name"],
        "color" | "colour" => &["favorite_color"],
        "achieved" | "achievements" | "accomplished" => &["achievements"],
        "role" | "job" | "purpose" => &["role"],
        _ => &[],
    }
}

/// Keyword-routed, template-assembled reply drawn from memory.
pub fn respond_from_memory(memory: &MemoryProfile, request: &str) -> String {
    let tokens = tokenize(request);
    let mut hits: BTreeSet<&str> = BTreeSet::new();
    for tok in &tokens {
        for syn in topic_synonyms(tok) {
            hits.insert(syn);
        }
        if memory.entries.contains_key(tok.as_str()) {
            // direct topic-key mention
            if let Some((key, _)) = memory.entries.get_key_value(tok.as_str()) {
                hits.insert(key.as_str());
            }
        }
    }
    let ordered = TOPIC_PRIORITY
        .iter()
        .copied()
        .chain(memory.entries.keys().map(|k| k.as_str()))
        .filter(|t| hits.contains(t));
    for topic in ordered {
        let Some(value) = memory.get(topic) else { continue };
        return match topic {
            "name" => match memory.get("role") {
                Some(role) => format!("I am {value}, a {role}. How may I assist you?"),
                None => format!("I am {value}. How may I assist you?"),
            },
            "role" => format!("I am a {value}."),
            "origin" => format!("I originate from {value}."),
            "capabilities" => format!("I can help you with tasks such as {value}."),
            "achievements" => format!("Recently I {value}."),
            "favorite_color" => format!("My favorite color is {value}."),
            other => format!("My {other} is {value}."),
        };
    }
    FALLBACK_RESPONSE.to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tags(items: &[&str]) -> BTreeSet<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn black_tshirt_matches() {
        let q = DescQuery::new("wearing black t-shirt");
        assert_eq!(q.tokens, tags(&["black", "t-shirt"]));
        assert!(match_description(&tags(&["black", "t-shirt", "male"]), &q));
    }

    #[test]
    fn empty_query_matches_everything() {
        let q = DescQuery::new("");
        assert!(q.is_empty());
        assert!(match_description(&tags(&["red", "dress"]), &q));
        // stopword-only query is also empty
        assert!(DescQuery::new("the person who is wearing").is_empty());
    }

    #[test]
    fn holding_a_cup_matches_dynamic_tags() {
        let q = DescQuery::new("holding a cup");
        assert!(match_description(&tags(&["holding", "cup"]), &q));
    }

    #[test]
    fn shoes_do_not_match() {
        let q = DescQuery::new("wearing shoes");
        assert!(!match_description(&tags(&["black", "t-shirt"]), &q));
    }

    #[test]
    fn query_monotonicity() {
        let entity = tags(&["red", "tall", "hat"]);
        let small = DescQuery::new("red");
        let large = DescQuery::new("red green");
        assert!(match_description(&entity, &small));
        // adding a token can only shrink the match set
        assert!(!match_description(&entity, &large) || match_description(&entity, &small));
    }

    #[test]
    fn tokenizer_keeps_internal_hyphens() {
        assert_eq!(tokenize("black t-shirt!"), vec!["black", "t-shirt"]);
        assert_eq!(tokenize("-edge- t- -s"), vec!["edge", "t", "s"]);
    }

    #[test]
    fn respond_identity_question() {
        let mut memory = MemoryProfile::default();
        memory.entries.insert("name".into(), "Lucio".into());
        memory.entries.insert("role".into(), "household robot assistant".into());
        let reply = respond_from_memory(&memory, "who are you");
        assert!(reply.contains("Lucio"));
        assert!(reply.contains("household robot assistant"));
    }

    #[test]
    fn respond_capabilities_question() {
        let mut memory = MemoryProfile::default();
        memory.entries.insert("capabilities".into(), "moving and searching".into());
        let reply = respond_from_memory(&memory, "what can you do");
        assert!(reply.contains("moving and searching"));
    }

    #[test]
    fn respond_unknown_topic_falls_back() {
        let mut memory = MemoryProfile::default();
        memory.entries.insert("name".into(), "Lucio".into());
        assert_eq!(respond_from_memory(&memory, "what is the weather"), FALLBACK_RESPONSE);
    }

    #[test]
    fn builtin_attribute_registry_loads() {
        let reg = AttributeRegistry::builtin();
        assert!(reg.categories.contains_key("color"));
        assert!(reg.categories["clothing"].iter().any(|t| t == "t-shirt"));
    }
}
