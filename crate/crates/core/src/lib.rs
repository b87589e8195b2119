//! Household-robot planning toolchain: the 21-action plan language, a
//! static validator, a deterministic world simulator with perception
//! oracles, planner backends, and a benchmark harness.

pub mod bench;
pub mod perception;
pub mod plan;
pub mod plangen;
pub mod planner;
pub mod schema;
pub mod validate;
pub mod world;

pub use plan::{parse_plan, print_canonical, ActionCall, ParseError, Plan};
pub use schema::{registry, ActionSchema, ArgKind, Register};
pub use validate::{validate, ValidationCode, ValidationReport};
