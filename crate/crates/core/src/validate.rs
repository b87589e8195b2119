//! Static plan validation: per-step name/arity checks plus a forward
//! dataflow pass over the abstract Focus/Held/Answer registers.

use crate::plan::Plan;
use crate::schema::{registry, Register};
use serde::Serialize;
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ValidationCode {
    UnknownAction,
    ArityMismatch,
    PickupWithoutFocus,
    PlaceWithoutHeld,
    GiveWithoutHeld,
    GiveWithoutFocus,
    AnswerWithoutSource,
    FollowWithoutFocus,
    AskNameWithoutFocus,
    PourWithoutHeld,
    DoubleHold,
}

impl fmt::Display for ValidationCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub step: usize,
    pub code: ValidationCode,
    pub message: String,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct ValidationReport {
    pub errors: Vec<Diagnostic>,
    pub warnings: Vec<Diagnostic>,
}

impl ValidationReport {
    /// Zero errors: statically valid (necessary, not sufficient, for a
    /// successful run — world contents can still make steps fail).
    pub fn is_valid(&self) -> bool {
        self.errors.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Abs {
    Unset,
    Set,
}

/// Forward pass over the plan, flagging register misuse.
pub fn validate(plan: &Plan) -> ValidationReport {
    let mut report = ValidationReport::default();
    let mut focus = Abs::Unset;
    let mut held = Abs::Unset;
    let mut answer = Abs::Unset;

    for (i, step) in plan.steps.iter().enumerate() {
        let schema = match registry().lookup(&step.name) {
            Some(s) => s,
            None => {
                report.errors.push(Diagnostic {
                    step: i,
                    code: ValidationCode::UnknownAction,
                    message: format!("`{}` is not a known action", step.name),
                });
                continue;
            }
        };
        if step.args.len() != schema.arity() {
            report.errors.push(Diagnostic {
                step: i,
                code: ValidationCode::ArityMismatch,
                message: format!(
                    "`{}` takes {} argument(s), got {}",
                    schema.canonical_name,
                    schema.arity(),
                    step.args.len()
                ),
            });
        }

        let name = schema.canonical_name;
        for &reg in schema.reads {
            let state = match reg {
                Register::Focus => focus,
                Register::Held => held,
                Register::Answer => answer,
            };
            if state == Abs::Unset {
                if let Some(code) = read_failure_code(name, reg) {
                    report.errors.push(Diagnostic {
                        step: i,
                        code,
                        message: format!("`{name}` needs {reg:?} but nothing set it"),
                    });
                }
            }
        }
        // gripper holds one object at a time
        if name == "Pickup" && held == Abs::Set {
            report.errors.push(Diagnostic {
                step: i,
                code: ValidationCode::DoubleHold,
                message: "`Pickup` while already holding an object".into(),
            });
        }

        for &reg in schema.writes {
            match reg {
                Register::Focus => focus = Abs::Set,
                Register::Held => held = Abs::Set,
                Register::Answer => answer = Abs::Set,
            }
        }
        for &reg in schema.clears {
            match reg {
                Register::Focus => focus = Abs::Unset,
                Register::Held => held = Abs::Unset,
                Register::Answer => answer = Abs::Unset,
            }
        }
    }
    report
}

fn read_failure_code(name: &str, reg: Register) -> Option<ValidationCode> {
    use ValidationCode::*;
    Some(match (name, reg) {
        ("Pickup", Register::Focus) => PickupWithoutFocus,
        ("Place_On", Register::Held) | ("Place_Next", Register::Held) => PlaceWithoutHeld,
        ("Give_To", Register::Held) => GiveWithoutHeld,
        ("Give_To", Register::Focus) => GiveWithoutFocus,
        ("Pour_In", Register::Held) => PourWithoutHeld,
        ("Answer", Register::Answer) => AnswerWithoutSource,
        ("Follow", Register::Focus) => FollowWithoutFocus,
        ("Ask_Name", Register::Focus) => AskNameWithoutFocus,
        _ => return None,
    })
}
