//! Household world model: state types, the JSON world-file loader with
//! referential-integrity checks, and the step-by-step plan executor.

use crate::perception::{
    self, respond_from_memory, vision_ask, AttributeRegistry, CountKind, DescQuery, MemoryProfile,
};
use crate::plan::{ActionCall, Plan};
use crate::schema::registry;
use chrono::{Days, NaiveDate, NaiveTime};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::path::Path;
use thiserror::Error;

/// Where an object currently is.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Place {
    Surface(String),
    HeldByRobot,
    HeldByPerson(String),
    Inside(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DoorState {
    Open,
    Closed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Door {
    pub room: String,
    pub state: DoorState,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectInfo {
    pub name: String,
    #[serde(default)]
    pub tags: BTreeSet<String>,
    pub place: Place,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PersonInfo {
    pub name: String,
    #[serde(default)]
    pub tags: BTreeSet<String>,
    pub room: String,
    /// Scripted rooms the person walks through when followed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<Vec<String>>,
}

/// Calendar state, fixed at load time so answers are reproducible.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Clock {
    pub date: NaiveDate,
    /// 24-hour "HH:MM".
    pub time: String,
}

impl Default for Clock {
    fn default() -> Self {
        Clock { date: NaiveDate::from_ymd_opt(2024, 7, 17).unwrap(), time: "12:00".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntityRef {
    Object(String),
    Person(String),
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorldState {
    pub rooms: BTreeSet<String>,
    pub surfaces: BTreeMap<String, String>,
    pub doors: BTreeMap<String, Door>,
    pub objects: BTreeMap<String, ObjectInfo>,
    pub persons: BTreeMap<String, PersonInfo>,
    pub clock: Clock,
}

impl WorldState {
    /// Room an object's place resolves to, walking `Inside` chains and
    /// person holders. Robot-held objects resolve to no room (the gripper
    /// is not a searchable place).
    pub fn object_room(&self, id: &str) -> Option<String> {
        let mut cur = id;
        let mut hops = 0;
        loop {
            let obj = self.objects.get(cur)?;
            match &obj.place {
                Place::Surface(s) => return self.surfaces.get(s).cloned(),
                Place::HeldByRobot => return None,
                Place::HeldByPerson(p) => return self.persons.get(p).map(|p| p.room.clone()),
                Place::Inside(container) => {
                    cur = container;
                    hops += 1;
                    if hops > self.objects.len() {
                        return None; // cycle guard; loader rejects cycles
                    }
                }
            }
        }
    }

    /// A person's static tags plus dynamic `holding`/object-name tags.
    pub fn person_tags(&self, id: &str) -> BTreeSet<String> {
        let mut tags = match self.persons.get(id) {
            Some(p) => p.tags.clone(),
            None => return BTreeSet::new(),
        };
        for obj in self.objects.values() {
            if obj.place == Place::HeldByPerson(id.to_string()) {
                tags.insert("holding".to_string());
                tags.insert(obj.name.to_lowercase());
            }
        }
        tags
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RobotState {
    pub room: String,
    pub held: Option<String>,
    pub focus: Option<EntityRef>,
    pub answer: Option<String>,
    pub memory: MemoryProfile,
    pub request_queue: VecDeque<String>,
}

// ── World file loading ─────────────────────────────────────────────────

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct WorldFile {
    rooms: Vec<String>,
    #[serde(default)]
    surfaces: BTreeMap<String, String>,
    #[serde(default)]
    doors: BTreeMap<String, Door>,
    #[serde(default)]
    objects: BTreeMap<String, ObjectInfo>,
    #[serde(default)]
    persons: BTreeMap<String, PersonInfo>,
    #[serde(default)]
    clock: Option<Clock>,
    #[serde(default)]
    robot: Option<RobotFile>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RobotFile {
    room: Option<String>,
    #[serde(default)]
    memory: BTreeMap<String, String>,
    #[serde(default)]
    request_queue: Vec<String>,
}

#[derive(Debug, Error)]
pub enum WorldError {
    #[error("cannot read world file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("world file does not match the schema: {0}")]
    Schema(#[from] serde_json::Error),
    #[error("world has no rooms")]
    NoRooms,
    #[error("{kind} `{id}` refers to unknown {target_kind} `{target}`")]
    DanglingRef { kind: &'static str, id: String, target_kind: &'static str, target: String },
    #[error("containment cycle through object `{0}`")]
    ContainmentCycle(String),
    #[error("invalid clock time `{0}`, expected 24-hour HH:MM")]
    BadTime(String),
    #[error("more than one object is held by the robot: `{0}` and `{1}`")]
    TwoHeld(String, String),
}

pub fn load_world(path: impl AsRef<Path>) -> Result<(WorldState, RobotState), WorldError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| WorldError::Io {
        path: path.display().to_string(),
        source,
    })?;
    world_from_json(&text)
}

pub fn world_from_json(text: &str) -> Result<(WorldState, RobotState), WorldError> {
    let file: WorldFile = serde_json::from_str(text)?;
    let world = WorldState {
        rooms: file.rooms.into_iter().collect(),
        surfaces: file.surfaces,
        doors: file.doors,
        objects: file.objects,
        persons: file.persons,
        clock: file.clock.unwrap_or(Clock {
            date: NaiveDate::from_ymd_opt(2024, 7, 17).unwrap(),
            time: "12:00".into(),
        }),
    };
    if world.rooms.is_empty() {
        return Err(WorldError::NoRooms);
    }
    check_integrity(&world)?;

    let robot_file = file.robot;
    let default_room = world.rooms.iter().next().unwrap().clone();
    let (room, memory, request_queue) = match robot_file {
        Some(r) => (r.room.unwrap_or(default_room), r.memory, r.request_queue),
        None => (default_room, BTreeMap::new(), Vec::new()),
    };
    if !world.rooms.contains(&room) {
        return Err(WorldError::DanglingRef {
            kind: "robot",
            id: "robot".into(),
            target_kind: "room",
            target: room,
        });
    }
    // derive the gripper from object placement
    let mut held = None;
    for (id, obj) in &world.objects {
        if obj.place == Place::HeldByRobot {
            if let Some(prev) = held.replace(id.clone()) {
                return Err(WorldError::TwoHeld(prev, id.clone()));
            }
        }
    }
    let robot = RobotState {
        room,
        held,
        focus: None,
        answer: None,
        memory: MemoryProfile { entries: memory },
        request_queue: request_queue.into(),
    };
    Ok((world, robot))
}

fn check_integrity(world: &WorldState) -> Result<(), WorldError> {
    for (id, room) in &world.surfaces {
        if !world.rooms.contains(room) {
            return Err(WorldError::DanglingRef {
                kind: "surface",
                id: id.clone(),
                target_kind: "room",
                target: room.clone(),
            });
        }
    }
    for (id, door) in &world.doors {
        if !world.rooms.contains(&door.room) {
            return Err(WorldError::DanglingRef {
                kind: "door",
                id: id.clone(),
                target_kind: "room",
                target: door.room.clone(),
            });
        }
    }
    for (id, person) in &world.persons {
        if !world.rooms.contains(&person.room) {
            return Err(WorldError::DanglingRef {
                kind: "person",
                id: id.clone(),
                target_kind: "room",
                target: person.room.clone(),
            });
        }
        for room in person.path.iter().flatten() {
            if !world.rooms.contains(room) {
                return Err(WorldError::DanglingRef {
                    kind: "person",
                    id: id.clone(),
                    target_kind: "room",
                    target: room.clone(),
                });
            }
        }
    }
    for (id, obj) in &world.objects {
        match &obj.place {
            Place::Surface(s) => {
                if !world.surfaces.contains_key(s) {
                    return Err(WorldError::DanglingRef {
                        kind: "object",
                        id: id.clone(),
                        target_kind: "surface",
                        target: s.clone(),
                    });
                }
            }
            Place::HeldByPerson(p) => {
                if !world.persons.contains_key(p) {
                    return Err(WorldError::DanglingRef {
                        kind: "object",
                        id: id.clone(),
                        target_kind: "person",
                        target: p.clone(),
                    });
                }
            }
            Place::Inside(o) => {
                if !world.objects.contains_key(o) {
                    return Err(WorldError::DanglingRef {
                        kind: "object",
                        id: id.clone(),
                        target_kind: "object",
                        target: o.clone(),
                    });
                }
            }
            Place::HeldByRobot => {}
        }
    }
    // containment must be acyclic
    for start in world.objects.keys() {
        let mut cur = start.clone();
        let mut seen = BTreeSet::new();
        seen.insert(cur.clone());
        while let Some(Place::Inside(next)) = world.objects.get(&cur).map(|o| &o.place) {
            if !seen.insert(next.clone()) {
                return Err(WorldError::ContainmentCycle(next.clone()));
            }
            cur = next.clone();
        }
    }
    NaiveTime::parse_from_str(&world.clock.time, "%H:%M")
        .map_err(|_| WorldError::BadTime(world.clock.time.clone()))?;
    Ok(())
}

// ── Execution ──────────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum FailCode {
    UnknownAction,
    BadArity,
    UnknownLocation,
    NotFound,
    NoFocus,
    HandFull,
    FocusNotObject,
    FocusNotPerson,
    NoHeld,
    UnknownSurface,
    UnknownDoor,
    AlreadyInState,
    NoAnswer,
    NoPath,
    EmptyQueue,
}

impl FailCode {
    /// Failures the static validator can foresee (register dataflow), as
    /// opposed to world-content failures it deliberately cannot.
    pub fn is_register_failure(self) -> bool {
        matches!(
            self,
            FailCode::NoFocus | FailCode::NoHeld | FailCode::HandFull | FailCode::NoAnswer
        )
    }
}

impl fmt::Display for FailCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum StepStatus {
    Ok,
    Failed(FailCode),
}

#[derive(Debug, Clone, Serialize)]
pub struct StepOutcome {
    pub action: String,
    pub status: StepStatus,
    pub utterance: Option<String>,
    pub state_delta: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum FinalStatus {
    Completed,
    HaltedAt(usize),
}

#[derive(Debug, Clone, Serialize)]
pub struct ExecutionTrace {
    pub steps: Vec<StepOutcome>,
    pub final_status: FinalStatus,
}

impl ExecutionTrace {
    pub fn completed(&self) -> bool {
        self.final_status == FinalStatus::Completed
    }
}

/// Execute a plan against copies of the given states. Halts at the first
/// failed step; a failed step leaves world and robot untouched.
pub fn execute_plan(
    world: &WorldState,
    robot: &RobotState,
    plan: &Plan,
) -> (WorldState, RobotState, ExecutionTrace) {
    execute_plan_with(world, robot, plan, AttributeRegistry::shared())
}

pub fn execute_plan_with(
    world: &WorldState,
    robot: &RobotState,
    plan: &Plan,
    attrs: &AttributeRegistry,
) -> (WorldState, RobotState, ExecutionTrace) {
    let mut world = world.clone();
    let mut robot = robot.clone();
    let mut steps = Vec::new();
    let mut final_status = FinalStatus::Completed;
    for (i, call) in plan.steps.iter().enumerate() {
        let result = execute_step(&mut world, &mut robot, call, attrs);
        match result {
            Ok((utterance, state_delta)) => steps.push(StepOutcome {
                action: call.print_canonical(),
                status: StepStatus::Ok,
                utterance,
                state_delta,
            }),
            Err(code) => {
                steps.push(StepOutcome {
                    action: call.print_canonical(),
                    status: StepStatus::Failed(code),
                    utterance: None,
                    state_delta: String::new(),
                });
                final_status = FinalStatus::HaltedAt(i);
                break;
            }
        }
    }
    (world, robot, ExecutionTrace { steps, final_status })
}

type StepResult = Result<(Option<String>, String), FailCode>;

/// Single-step semantics. Mutations happen only after every precondition
/// check passed, so a failure leaves both states untouched.
fn execute_step(
    world: &mut WorldState,
    robot: &mut RobotState,
    call: &ActionCall,
    attrs: &AttributeRegistry,
) -> StepResult {
    let schema = registry().lookup(&call.name).ok_or(FailCode::UnknownAction)?;
    if call.args.len() != schema.arity() {
        return Err(FailCode::BadArity);
    }
    let arg = |i: usize| call.args[i].as_str();

    match schema.canonical_name {
        "Move_To" => {
            let loc = arg(0);
            if !world.rooms.contains(loc) {
                return Err(FailCode::UnknownLocation);
            }
            robot.room = loc.to_string();
            robot.focus = None;
            Ok((None, format!("robot moved to {loc}")))
        }
        "Search_Object" => {
            let query = DescQuery::new(arg(1));
            let ids = perception::find_objects(world, &robot.room, arg(0), &query);
            let id = ids.first().ok_or(FailCode::NotFound)?.clone();
            robot.focus = Some(EntityRef::Object(id.clone()));
            Ok((None, format!("focus on object {id}")))
        }
        "Search_Person" => {
            let query = DescQuery::new(arg(1));
            let ids = perception::find_persons(world, &robot.room, arg(0), &query);
            let id = ids.first().ok_or(FailCode::NotFound)?.clone();
            robot.focus = Some(EntityRef::Person(id.clone()));
            Ok((None, format!("focus on person {id}")))
        }
        "Pickup" => {
            let id = match robot.focus.as_ref().ok_or(FailCode::NoFocus)? {
                EntityRef::Object(id) => id.clone(),
                EntityRef::Person(_) => return Err(FailCode::FocusNotObject),
            };
            if robot.held.is_some() {
                return Err(FailCode::HandFull);
            }
            world.objects.get_mut(&id).ok_or(FailCode::NotFound)?.place = Place::HeldByRobot;
            robot.held = Some(id.clone());
            Ok((None, format!("picked up {id}")))
        }
        "Place_On" => {
            let held = robot.held.clone().ok_or(FailCode::NoHeld)?;
            let surface = arg(0);
            if world.surfaces.get(surface) != Some(&robot.room) {
                return Err(FailCode::UnknownSurface);
            }
            world.objects.get_mut(&held).expect("held object exists").place =
                Place::Surface(surface.to_string());
            robot.held = None;
            Ok((None, format!("placed {held} on {surface}")))
        }
        "Place_Next" => {
            let held = robot.held.clone().ok_or(FailCode::NoHeld)?;
            let query = DescQuery::new("");
            let candidates = perception::find_objects(world, &robot.room, arg(0), &query);
            let surface = candidates
                .iter()
                .filter(|id| **id != held)
                .find_map(|id| resolve_surface(world, id))
                .ok_or(FailCode::NotFound)?;
            world.objects.get_mut(&held).expect("held object exists").place =
                Place::Surface(surface.clone());
            robot.held = None;
            Ok((None, format!("placed {held} on {surface}")))
        }
        "Give_To" => {
            let held = robot.held.clone().ok_or(FailCode::NoHeld)?;
            let person = match robot.focus.as_ref().ok_or(FailCode::NoFocus)? {
                EntityRef::Person(id) => id.clone(),
                EntityRef::Object(_) => return Err(FailCode::FocusNotPerson),
            };
            world.objects.get_mut(&held).expect("held object exists").place =
                Place::HeldByPerson(person.clone());
            robot.held = None;
            Ok((None, format!("gave {held} to {person}")))
        }
        "Pour_In" => {
            let held = robot.held.clone().ok_or(FailCode::NoHeld)?;
            let query = DescQuery::new("");
            let candidates = perception::find_objects(world, &robot.room, arg(0), &query);
            let container =
                candidates.iter().find(|id| **id != held).ok_or(FailCode::NotFound)?.clone();
            world.objects.get_mut(&held).expect("held object exists").place =
                Place::Inside(container.clone());
            robot.held = None;
            Ok((None, format!("poured {held} into {container}")))
        }
        "Open" | "Close" => {
            let want_open = schema.canonical_name == "Open";
            let id = arg(0);
            let door = world.doors.get(id).ok_or(FailCode::UnknownDoor)?;
            if door.room != robot.room {
                return Err(FailCode::UnknownDoor);
            }
            let target = if want_open { DoorState::Open } else { DoorState::Closed };
            if door.state == target {
                return Err(FailCode::AlreadyInState);
            }
            world.doors.get_mut(id).unwrap().state = target;
            Ok((None, format!("{} {id}", if want_open { "opened" } else { "closed" })))
        }
        "Vision_Ask" => {
            let answer = vision_ask(world, attrs, &robot.room, robot.focus.as_ref(), arg(0));
            robot.answer = Some(answer.clone());
            Ok((None, format!("answer set to '{answer}'")))
        }
        "Answer" => {
            let answer = robot.answer.clone().ok_or(FailCode::NoAnswer)?;
            Ok((Some(answer), "spoke the stored answer".into()))
        }
        "Respond" => {
            let reply = respond_from_memory(&robot.memory, arg(0));
            Ok((Some(reply), "responded from memory".into()))
        }
        "Follow" => {
            let person = match robot.focus.as_ref().ok_or(FailCode::NoFocus)? {
                EntityRef::Person(id) => id.clone(),
                EntityRef::Object(_) => return Err(FailCode::FocusNotPerson),
            };
            let path = world
                .persons
                .get(&person)
                .and_then(|p| p.path.clone())
                .filter(|p| !p.is_empty())
                .ok_or(FailCode::NoPath)?;
            let last = path.last().unwrap().clone();
            robot.room = last.clone();
            world.persons.get_mut(&person).unwrap().room = last;
            Ok((None, format!("followed {person} through {}", path.join(" -> "))))
        }
        "New_Request" => {
            let instruction = robot.request_queue.pop_front().ok_or(FailCode::EmptyQueue)?;
            robot.focus = None;
            robot.answer = None;
            Ok((Some(instruction), "took a new request".into()))
        }
        "Count_Person" => {
            let query = DescQuery::new(arg(0));
            let n = perception::count_entities(world, &robot.room, &CountKind::Person, &query);
            robot.answer = Some(n.to_string());
            Ok((None, format!("answer set to '{n}'")))
        }
        "Count_Object" => {
            let query = DescQuery::new(arg(1));
            let kind = CountKind::Object(arg(0).to_string());
            let n = perception::count_entities(world, &robot.room, &kind, &query);
            robot.answer = Some(n.to_string());
            Ok((None, format!("answer set to '{n}'")))
        }
        "Ask_Name" => {
            let person = match robot.focus.as_ref().ok_or(FailCode::NoFocus)? {
                EntityRef::Person(id) => id.clone(),
                EntityRef::Object(_) => return Err(FailCode::FocusNotPerson),
            };
            let name = world.persons.get(&person).map(|p| p.name.clone()).unwrap_or_default();
            robot.answer = Some(name.clone());
            Ok((None, format!("answer set to '{name}'")))
        }
        "What_Time" => {
            robot.answer = Some(world.clock.time.clone());
            Ok((None, format!("answer set to '{}'", world.clock.time)))
        }
        "What_Day" => {
            let day = world.clock.date.format("%Y-%m-%d").to_string();
            robot.answer = Some(day.clone());
            Ok((None, format!("answer set to '{day}'")))
        }
        "What_Tomorrow" => {
            let tomorrow = world
                .clock
                .date
                .checked_add_days(Days::new(1))
                .expect("date overflow")
                .format("%Y-%m-%d")
                .to_string();
            robot.answer = Some(tomorrow.clone());
            Ok((None, format!("answer set to '{tomorrow}'")))
        }
        other => unreachable!("schema registry has no executor for {other}"),
    }
}

/// Surface an object rests on, walking `Inside` chains.
fn resolve_surface(world: &WorldState, id: &str) -> Option<String> {
    let mut cur = id.to_string();
    let mut hops = 0;
    loop {
        match &world.objects.get(&cur)?.place {
            Place::Surface(s) => return Some(s.clone()),
            Place::Inside(container) => {
                cur = container.clone();
                hops += 1;
                if hops > world.objects.len() {
                    return None;
                }
            }
            _ => return None,
        }
    }
}

impl AttributeRegistry {
    /// Process-wide shared copy of the builtin registry.
    pub fn shared() -> &'static AttributeRegistry {
        use std::sync::OnceLock;
        static SHARED: OnceLock<AttributeRegistry> = OnceLock::new();
        SHARED.get_or_init(AttributeRegistry::builtin)
    }
}
