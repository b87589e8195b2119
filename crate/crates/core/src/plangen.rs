//! Seeded random generation of schema-valid plans, shared by the fuzz
//! suites and the acceptance tests.

use crate::plan::{ActionCall, Plan};
use crate::schema::{registry, ArgKind};
use rand::seq::SliceRandom;
use rand::Rng;

const WORDS: &[&str] = &[
    "kitchen", "living_room", "bedroom", "hall", "table", "counter", "shelf", "cereal", "apple",
    "cup", "bowl", "red", "black", "t-shirt", "sitting", "tall", "box", "fridge_door", "milk",
    "what color is it", "how many cups", "who are you", "",
];

/// One random argument: usually a plain word, occasionally text that
/// stresses quoting and escapes.
pub fn random_arg(rng: &mut impl Rng) -> String {
    match rng.gen_range(0..10) {
        0 => String::new(),
        1 => "it's o'clock".to_string(),
        2 => r"back\slash \\ done".to_string(),
        // whitespace-only text reads back as the empty literal, so
        // normalize it here to keep generated plans canonical
        3 => {
            let joined = format!("{} {}", WORDS.choose(rng).unwrap(), WORDS.choose(rng).unwrap());
            if joined.trim().is_empty() {
                String::new()
            } else {
                joined
            }
        }
        _ => WORDS.choose(rng).unwrap().to_string(),
    }
}

/// A random call to one of the 21 registered actions, with the right arity.
pub fn random_call(rng: &mut impl Rng) -> ActionCall {
    let schemas: Vec<_> = registry().iter().collect();
    let schema = schemas.choose(rng).unwrap();
    let args: Vec<String> = schema
        .arg_kinds
        .iter()
        .map(|kind| match kind {
            ArgKind::LocationName | ArgKind::ObjectName => {
                if rng.gen_bool(0.2) {
                    String::new()
                } else {
                    WORDS.choose(rng).unwrap().to_string()
                }
            }
            _ => random_arg(rng),
        })
        .collect();
    ActionCall {
        name: schema.canonical_name.to_string(),
        args,
        span: crate::plan::Span::new(0, 0),
    }
}

/// A random schema-valid plan of up to `max_steps` steps (possibly empty).
pub fn random_plan(rng: &mut impl Rng, max_steps: usize) -> Plan {
    let n = rng.gen_range(0..=max_steps);
    Plan::new((0..n).map(|_| random_call(rng)).collect())
}

/// A plan biased toward sensible sequences (search before pickup, place
/// after pickup), so fuzzing exercises the success paths too.
pub fn random_plausible_plan(rng: &mut impl Rng, max_fragments: usize) -> Plan {
    let mut steps = Vec::new();
    let n = rng.gen_range(1..=max_fragments);
    for _ in 0..n {
        match rng.gen_range(0..8) {
            0 => {
                steps.push(ActionCall::new("Move_To", &[WORDS.choose(rng).unwrap()]));
            }
            1 => {
                steps.push(ActionCall::new("Search_Object", &[WORDS.choose(rng).unwrap(), ""]));
                steps.push(ActionCall::new("Pickup", &[]));
                steps.push(ActionCall::new("Place_On", &[WORDS.choose(rng).unwrap()]));
            }
            2 => {
                steps.push(ActionCall::new("Search_Person", &["", "black t-shirt"]));
                steps.push(ActionCall::new("Give_To", &[]));
            }
            3 => {
                steps.push(ActionCall::new("What_Time", &[]));
                steps.push(ActionCall::new("Answer", &[]));
            }
            4 => {
                steps.push(ActionCall::new("Count_Object", &[WORDS.choose(rng).unwrap(), ""]));
                steps.push(ActionCall::new("Answer", &[]));
            }
            5 => {
                steps.push(ActionCall::new("Open", &["fridge_door"]));
            }
            6 => {
                steps.push(ActionCall::new("Search_Person", &["", ""]));
                steps.push(ActionCall::new("Follow", &[]));
            }
            _ => {
                steps.push(random_call(rng));
            }
        }
    }
    Plan::new(steps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn generated_plans_are_schema_valid_calls() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let plan = random_plan(&mut rng, 8);
            for step in &plan.steps {
                let schema = registry().lookup(&step.name).expect("known action");
                assert_eq!(step.args.len(), schema.arity());
            }
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let a = random_plan(&mut ChaCha8Rng::seed_from_u64(7), 8);
        let b = random_plan(&mut ChaCha8Rng::seed_from_u64(7), 8);
        assert!(a.same_plan(&b));
    }
}
