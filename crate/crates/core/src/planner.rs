//! Planner backends: anything that turns an instruction (plus a system
//! prompt) into plan text. Includes the prompt builder, a gold-plan
//! lookup backend, a scripted backend, a seeded fault-injection wrapper,
//! and an HTTP chat-completions client for served models.

use crate::bench::DatasetRecord;
use crate::perception::MemoryProfile;
use crate::plan::{parse_plan, print_canonical, ActionCall, Plan, Span};
use crate::schema::ActionRegistry;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::HashMap;
use std::time::{Duration, Instant};
use thiserror::Error;

#[derive(Debug, Clone, Serialize)]
pub struct DecodeParams {
    pub temperature: f64,
    pub max_tokens: u32,
    pub seed: Option<u64>,
}

impl Default for DecodeParams {
    fn default() -> Self {
        DecodeParams { temperature: 0.0, max_tokens: 256, seed: None }
    }
}

#[derive(Debug, Clone)]
pub struct PlannerRequest {
    pub system_prompt: String,
    pub instruction: String,
    pub decode: DecodeParams,
}

#[derive(Debug, Clone)]
pub struct PlannerResponse {
    pub plan_text: String,
    pub latency: Duration,
    pub token_estimate: Option<usize>,
}

#[derive(Debug, Error)]
pub enum PlannerError {
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("request timed out after {0:?}")]
    Timeout(Duration),
    #[error("no gold entry for instruction `{0}`")]
    MissingGoldEntry(String),
}

/// A planning backend. Implementations must tolerate concurrent calls.
pub trait Planner: Sync {
    fn id(&self) -> &str;
    fn generate(&self, request: &PlannerRequest) -> Result<PlannerResponse, PlannerError>;
}

/// Deterministic prompt layout: action signatures with descriptions, then
/// memory entries, then few-shot instruction/plan pairs in input order.
pub fn build_system_prompt(
    registry: &ActionRegistry,
    memory: &MemoryProfile,
    shots: &[(String, String)],
) -> String {
    let mut out = String::new();
    out.push_str("You are a household robot planner. Reply with a plan using only these actions:\n");
    for schema in registry.iter() {
        out.push_str(&format!("{} - {}\n", schema.signature(), schema.description));
    }
    if !memory.entries.is_empty() {
        out.push_str("\nPersonal memory:\n");
        for (key, value) in &memory.entries {
            out.push_str(&format!("{key}: {value}\n"));
        }
    }
    if !shots.is_empty() {
        out.push_str("\nExamples:\n");
        for (instruction, plan) in shots {
            out.push_str(&format!("Instruction: {instruction}\nPlan:\n{plan}\n\n"));
        }
    }
    out
}

fn respond(plan_text: String, started: Instant) -> PlannerResponse {
    let token_estimate = Some(plan_text.split_whitespace().count());
    PlannerResponse { plan_text, latency: started.elapsed(), token_estimate }
}

/// Returns the dataset's gold plan for the matching instruction.
pub struct GoldenPlanner {
    by_instruction: HashMap<String, String>,
}

impl GoldenPlanner {
    pub fn new(records: &[DatasetRecord]) -> Self {
        let by_instruction = records
            .iter()
            .map(|r| (r.instruction.clone(), r.gold_plan.clone()))
            .collect();
        GoldenPlanner { by_instruction }
    }
}

impl Planner for GoldenPlanner {
    fn id(&self) -> &str {
        "golden"
    }

    fn generate(&self, request: &PlannerRequest) -> Result<PlannerResponse, PlannerError> {
        let started = Instant::now();
        let plan = self
            .by_instruction
            .get(&request.instruction)
            .ok_or_else(|| PlannerError::MissingGoldEntry(request.instruction.clone()))?;
        Ok(respond(plan.clone(), started))
    }
}

/// Fixed instruction-to-plan map, for simulator demos and the REPL.
pub struct ScriptedPlanner {
    map: HashMap<String, String>,
}

impl ScriptedPlanner {
    pub fn new(map: HashMap<String, String>) -> Self {
        ScriptedPlanner { map }
    }

    /// Load from a JSON object of instruction -> plan text.
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        Ok(ScriptedPlanner { map: serde_json::from_str(text)? })
    }
}

impl Planner for ScriptedPlanner {
    fn id(&self) -> &str {
        "scripted"
    }

    fn generate(&self, request: &PlannerRequest) -> Result<PlannerResponse, PlannerError> {
        let started = Instant::now();
        let plan = self
            .map
            .get(&request.instruction)
            .ok_or_else(|| PlannerError::MissingGoldEntry(request.instruction.clone()))?;
        Ok(respond(plan.clone(), started))
    }
}

/// Wraps another backend and, with probability `rate` per instruction,
/// applies one plan mutation (drop a step, swap two adjacent steps, or
/// replace an argument with a marker). Randomness is derived from
/// (seed, instruction), so runs are reproducible and order-independent.
pub struct CorruptingPlanner<P> {
    inner: P,
    rate: f64,
    seed: u64,
}

/// Argument replacement marker; never appears in gold plans.
pub const CORRUPTION_MARKER: &str = "__corrupted__";

impl<P: Planner> CorruptingPlanner<P> {
    pub fn new(inner: P, rate: f64, seed: u64) -> Self {
        assert!((0.0..=1.0).contains(&rate), "rate must be a probability");
        CorruptingPlanner { inner, rate, seed }
    }

    fn rng_for(&self, instruction: &str) -> ChaCha8Rng {
        let mut hasher = Sha256::new();
        hasher.update(self.seed.to_le_bytes());
        hasher.update(instruction.as_bytes());
        let digest = hasher.finalize();
        let mut key = [0u8; 32];
        key.copy_from_slice(&digest);
        ChaCha8Rng::from_seed(key)
    }
}

/// One mutation that is guaranteed to change the plan's canonical form.
fn mutate_plan(plan: &mut Plan, rng: &mut impl Rng) {
    #[derive(Clone, Copy)]
    enum Mutation {
        Drop(usize),
        Swap(usize),
        ReplaceArg(usize, usize),
    }
    let mut candidates = Vec::new();
    for i in 0..plan.steps.len() {
        candidates.push(Mutation::Drop(i));
        for (j, arg) in plan.steps[i].args.iter().enumerate() {
            if arg != CORRUPTION_MARKER {
                candidates.push(Mutation::ReplaceArg(i, j));
            }
        }
    }
    for i in 0..plan.steps.len().saturating_sub(1) {
        if !plan.steps[i].same_call(&plan.steps[i + 1]) {
            candidates.push(Mutation::Swap(i));
        }
    }
    if candidates.is_empty() {
        // empty plan (or all-marker degenerate): inject a step instead
        plan.steps.push(ActionCall {
            name: "Respond".into(),
            args: vec![CORRUPTION_MARKER.into()],
            span: Span::new(0, 0),
        });
        return;
    }
    match candidates[rng.gen_range(0..candidates.len())] {
        Mutation::Drop(i) => {
            plan.steps.remove(i);
        }
        Mutation::Swap(i) => plan.steps.swap(i, i + 1),
        Mutation::ReplaceArg(i, j) => plan.steps[i].args[j] = CORRUPTION_MARKER.into(),
    }
}

impl<P: Planner> Planner for CorruptingPlanner<P> {
    fn id(&self) -> &str {
        "corrupt"
    }

    fn generate(&self, request: &PlannerRequest) -> Result<PlannerResponse, PlannerError> {
        let response = self.inner.generate(request)?;
        let mut rng = self.rng_for(&request.instruction);
        if !rng.gen_bool(self.rate) {
            return Ok(response);
        }
        // pass unparseable inner output through untouched
        let Ok(mut plan) = parse_plan(&response.plan_text) else {
            return Ok(response);
        };
        mutate_plan(&mut plan, &mut rng);
        Ok(PlannerResponse { plan_text: print_canonical(&plan), ..response })
    }
}

/// Chat-completions wire format of a served model endpoint.
#[derive(Debug, Clone)]
pub struct RemoteConfig {
    pub endpoint: String,
    pub model: String,
    pub timeout: Duration,
}

/// Environment variable carrying the bearer token, if the endpoint needs one.
pub const API_KEY_ENV: &str = "RDMM_API_KEY";

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: Vec<ChatMessage<'a>>,
    temperature: f64,
    max_tokens: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatResponseMessage,
}

#[derive(Deserialize)]
struct ChatResponseMessage {
    content: String,
}

/// Sends system prompt + instruction to an HTTP chat-completions endpoint
/// and returns the first message text. Errors are reported, never panics.
pub struct RemotePlanner {
    config: RemoteConfig,
    agent: ureq::Agent,
}

impl RemotePlanner {
    pub fn new(config: RemoteConfig) -> Self {
        let agent = ureq::AgentBuilder::new().timeout(config.timeout).build();
        RemotePlanner { config, agent }
    }
}

impl Planner for RemotePlanner {
    fn id(&self) -> &str {
        "remote"
    }

    fn generate(&self, request: &PlannerRequest) -> Result<PlannerResponse, PlannerError> {
        let started = Instant::now();
        let body = ChatRequest {
            model: &self.config.model,
            messages: vec![
                ChatMessage { role: "system", content: &request.system_prompt },
                ChatMessage { role: "user", content: &request.instruction },
            ],
            temperature: request.decode.temperature,
            max_tokens: request.decode.max_tokens,
            seed: request.decode.seed,
        };
        let mut http = self.agent.post(&self.config.endpoint);
        if let Ok(key) = std::env::var(API_KEY_ENV) {
            http = http.set("Authorization", &format!("Bearer {key}"));
        }
        let result = http.send_json(&body);
        let response = match result {
            Ok(r) => r,
            Err(ureq::Error::Status(code, _)) => {
                return Err(PlannerError::BackendUnavailable(format!("HTTP status {code}")))
            }
            Err(ureq::Error::Transport(t)) => {
                let msg = t.to_string();
                if msg.contains("timed out") || msg.contains("timeout") {
                    return Err(PlannerError::Timeout(self.config.timeout));
                }
                return Err(PlannerError::BackendUnavailable(msg));
            }
        };
        let parsed: ChatResponse = response
            .into_json()
            .map_err(|e| PlannerError::BackendUnavailable(format!("bad response body: {e}")))?;
        let text = parsed
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or_else(|| PlannerError::BackendUnavailable("response had no choices".into()))?;
        Ok(respond(text, started))
    }
}
