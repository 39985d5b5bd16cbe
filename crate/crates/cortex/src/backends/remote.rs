//! The remote backend family: every cognition role served by a
//! chat-completions endpoint. Requests are rendered from versioned role
//! templates, replies must carry one fenced JSON block in the role's
//! schema, transport failures retry with exponential backoff, and every
//! exchange is recorded for per-episode transcripts. Tests drive the
//! whole stack through a replay transport — no network is ever touched.

use std::collections::{BTreeMap, VecDeque};
use std::path::Path;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{
    BackendError, EvaluatorBackend, HeuristicExtractorBackend, HeuristicMergerBackend,
    PlannerBackend, PrincipleAnalyzerBackend, Role, SrmAnalyzerBackend, WorldModelBackend,
};
use crate::aki::Heuristic;
use crate::gridworld::{
    Action, Cell, GoalSpec, GridMap, NavView, Observation, Occupancy, OutcomeFlag, Pose,
};
use crate::memory_graph::{MemoryGraph, SubtaskNode};
use crate::planning::{CandidatePlan, PlannerContext, Rollout};
use crate::srm::{Progress, ReflectionSummary};

/// Environment variable naming the chat-completions base URL.
pub const ENV_BASE_URL: &str = "CORTEX_REMOTE_BASE_URL";
/// Environment variable holding the bearer credential.
pub const ENV_API_KEY: &str = "CORTEX_REMOTE_API_KEY";
/// Environment variable naming the model; optional.
pub const ENV_MODEL: &str = "CORTEX_REMOTE_MODEL";

const DEFAULT_MODEL: &str = "cortex-nav-1";

#[derive(Debug, Clone)]
pub struct RemoteConfig {
    pub base_url: String,
    pub api_key: String,
    pub model: String,
    /// Transport attempts before giving up (first try included).
    pub max_attempts: u32,
    /// Base backoff; attempt k sleeps `backoff * 2^(k-1)`. Zero disables
    /// sleeping (used by tests).
    pub backoff: Duration,
}

impl RemoteConfig {
    pub fn new(base_url: impl Into<String>, api_key: impl Into<String>) -> Self {
        RemoteConfig {
            base_url: base_url.into(),
            api_key: api_key.into(),
            model: DEFAULT_MODEL.to_string(),
            max_attempts: 3,
            backoff: Duration::from_millis(200),
        }
    }

    /// Read endpoint coordinates from the environment.
    pub fn from_env() -> Result<Self, String> {
        let base_url =
            std::env::var(ENV_BASE_URL).map_err(|_| format!("{ENV_BASE_URL} is not set"))?;
        let api_key =
            std::env::var(ENV_API_KEY).map_err(|_| format!("{ENV_API_KEY} is not set"))?;
        let mut config = RemoteConfig::new(base_url, api_key);
        if let Ok(model) = std::env::var(ENV_MODEL) {
            config.model = model;
        }
        Ok(config)
    }
}

/// What a transport attempt produced: any HTTP response at all (status
/// included), or no response.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransportReply {
    pub status: u16,
    pub body: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransportFailure(pub String);

/// The wire boundary. The HTTP implementation is the only place the
/// crate performs network I/O; tests substitute a replay.
pub trait ChatTransport: Send + Sync {
    fn send(&self, request_body: &str) -> Result<TransportReply, TransportFailure>;
}

/// Real HTTP POST to `{base_url}/chat/completions`.
pub struct HttpTransport {
    agent: ureq::Agent,
    url: String,
    api_key: String,
}

impl HttpTransport {
    pub fn new(config: &RemoteConfig) -> Self {
        HttpTransport {
            agent: ureq::AgentBuilder::new()
                .timeout(Duration::from_secs(60))
                .build(),
            url: format!("{}/chat/completions", config.base_url.trim_end_matches('/')),
            api_key: config.api_key.clone(),
        }
    }
}

impl ChatTransport for HttpTransport {
    fn send(&self, request_body: &str) -> Result<TransportReply, TransportFailure> {
        let result = self
            .agent
            .post(&self.url)
            .set("authorization", &format!("Bearer {}", self.api_key))
            .set("content-type", "application/json")
            .send_string(request_body);
        match result {
            Ok(resp) => {
                let status = resp.status();
                let body = resp
                    .into_string()
                    .map_err(|e| TransportFailure(format!("reading response body: {e}")))?;
                Ok(TransportReply { status, body })
            }
            Err(ureq::Error::Status(status, resp)) => Ok(TransportReply {
                status,
                body: resp.into_string().unwrap_or_default(),
            }),
            Err(ureq::Error::Transport(t)) => Err(TransportFailure(t.to_string())),
        }
    }
}

/// Scripted transport: hands out queued replies in order. Used by every
/// test that exercises the remote family.
#[derive(Default)]
pub struct ReplayTransport {
    replies: Mutex<VecDeque<Result<TransportReply, TransportFailure>>>,
    requests: Mutex<Vec<String>>,
}

impl ReplayTransport {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push_ok(&self, status: u16, body: impl Into<String>) {
        self.replies
            .lock()
            .expect("replay lock")
            .push_back(Ok(TransportReply { status, body: body.into() }));
    }

    pub fn push_failure(&self, message: impl Into<String>) {
        self.replies
            .lock()
            .expect("replay lock")
            .push_back(Err(TransportFailure(message.into())));
    }

    /// Every request body sent so far, in order.
    pub fn requests(&self) -> Vec<String> {
        self.requests.lock().expect("replay lock").clone()
    }
}

impl ChatTransport for ReplayTransport {
    fn send(&self, request_body: &str) -> Result<TransportReply, TransportFailure> {
        self.requests
            .lock()
            .expect("replay lock")
            .push(request_body.to_string());
        self.replies
            .lock()
            .expect("replay lock")
            .pop_front()
            .unwrap_or_else(|| Err(TransportFailure("replay queue exhausted".into())))
    }
}

/// One request/response exchange, kept for the episode transcript.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub role: String,
    pub attempt: u32,
    /// HTTP status, absent when the transport failed outright.
    pub status: Option<u16>,
    pub request: String,
    pub response: String,
}

/// A role prompt: fixed system text plus a user template with
/// `{placeholder}` slots.
struct RoleTemplate {
    system: &'static str,
    user: &'static str,
}

fn split_template(raw: &'static str) -> RoleTemplate {
    let (system, user) = raw
        .split_once("\n---\n")
        .expect("template has a system/user separator");
    RoleTemplate { system, user }
}

fn template_for(role: Role) -> RoleTemplate {
    let raw = match role {
        Role::Planner => include_str!("../../templates/default/planner.txt"),
        Role::WorldModel => include_str!("../../templates/default/world_model.txt"),
        Role::Evaluator => include_str!("../../templates/default/evaluator.txt"),
        Role::SrmAnalyzer => include_str!("../../templates/default/srm_analyzer.txt"),
        Role::PrincipleAnalyzer => include_str!("../../templates/default/principle_analyzer.txt"),
        Role::HeuristicExtractor => {
            include_str!("../../templates/default/heuristic_extractor.txt")
        }
        Role::HeuristicMerger => include_str!("../../templates/default/heuristic_merger.txt"),
    };
    split_template(raw)
}

/// Fill `{key}` slots. Unknown slots are left intact so a template typo
/// shows up verbatim in fixtures instead of silently vanishing.
fn render(template: &str, slots: &[(&str, String)]) -> String {
    let mut out = template.to_string();
    for (key, value) in slots {
        out = out.replace(&format!("{{{key}}}"), value);
    }
    out
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    temperature: f64,
    messages: Vec<ChatMessage<'a>>,
}

/// The exact request body for a (system, user) pair — the unit the
/// golden-file tests freeze.
pub fn render_request(model: &str, system: &str, user: &str) -> String {
    let request = ChatRequest {
        model,
        temperature: 0.0,
        messages: vec![
            ChatMessage { role: "system", content: system },
            ChatMessage { role: "user", content: user },
        ],
    };
    serde_json::to_string(&request).expect("request serializes")
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

/// The payload of the first fenced code block (```json or bare ```).
pub fn fenced_payload(content: &str) -> Option<String> {
    let start = content.find("```")?;
    let after_fence = &content[start + 3..];
    let newline = after_fence.find('\n')?;
    let body = &after_fence[newline + 1..];
    let end = body.find("```")?;
    Some(body[..end].trim().to_string())
}

/// Shared engine: one transport, one config, one transcript buffer; the
/// seven role adapters clone an `Arc` of this.
pub struct RemoteCore {
    config: RemoteConfig,
    transport: Box<dyn ChatTransport>,
    log: Mutex<Vec<TranscriptEntry>>,
}

impl RemoteCore {
    pub fn new(config: RemoteConfig, transport: Box<dyn ChatTransport>) -> Arc<Self> {
        Arc::new(RemoteCore { config, transport, log: Mutex::new(Vec::new()) })
    }

    pub fn over_http(config: RemoteConfig) -> Arc<Self> {
        let transport = Box::new(HttpTransport::new(&config));
        RemoteCore::new(config, transport)
    }

    /// Drain the transcript buffer into a JSONL file, one exchange per
    /// line. Called by the harness at episode end.
    pub fn flush_transcript(&self, path: &Path) -> std::io::Result<()> {
        let entries: Vec<TranscriptEntry> =
            std::mem::take(&mut *self.log.lock().expect("transcript lock"));
        let mut out = String::new();
        for e in &entries {
            out.push_str(&serde_json::to_string(e).expect("entry serializes"));
            out.push('\n');
        }
        std::fs::write(path, out)
    }

    /// Number of buffered exchanges (test hook).
    pub fn transcript_len(&self) -> usize {
        self.log.lock().expect("transcript lock").len()
    }

    /// Send one completion request for `role`, retrying transport-level
    /// failures, and return the assistant message content.
    fn complete(&self, role: Role, system: &str, user: &str) -> Result<String, BackendError> {
        let request = render_request(&self.config.model, system, user);
        let mut attempt = 0u32;
        loop {
            attempt += 1;
            let outcome = self.transport.send(&request);
            let (status, body, retryable, failure) = match &outcome {
                Ok(reply) if reply.status == 401 || reply.status == 403 => (
                    Some(reply.status),
                    reply.body.clone(),
                    false,
                    Some(BackendError::Auth {
                        role,
                        message: format!("endpoint returned status {}", reply.status),
                    }),
                ),
                Ok(reply) if reply.status == 429 || (500..=599).contains(&reply.status) => (
                    Some(reply.status),
                    reply.body.clone(),
                    true,
                    Some(BackendError::Transport {
                        role,
                        message: format!("endpoint returned status {}", reply.status),
                    }),
                ),
                Ok(reply) if reply.status != 200 => (
                    Some(reply.status),
                    reply.body.clone(),
                    false,
                    Some(BackendError::Transport {
                        role,
                        message: format!("endpoint returned status {}", reply.status),
                    }),
                ),
                Ok(reply) => (Some(reply.status), reply.body.clone(), false, None),
                Err(TransportFailure(message)) => (
                    None,
                    String::new(),
                    true,
                    Some(BackendError::Transport { role, message: message.clone() }),
                ),
            };
            self.log.lock().expect("transcript lock").push(TranscriptEntry {
                role: role.to_string(),
                attempt,
                status,
                request: request.clone(),
                response: body.clone(),
            });
            match failure {
                None => {
                    let parsed: ChatResponse =
                        serde_json::from_str(&body).map_err(|e| BackendError::Malformed {
                            role,
                            message: format!("response envelope: {e}"),
                        })?;
                    let content = parsed
                        .choices
                        .into_iter()
                        .next()
                        .map(|c| c.message.content)
                        .ok_or_else(|| BackendError::Malformed {
                            role,
                            message: "response has no choices".to_string(),
                        })?;
                    return Ok(content);
                }
                Some(err) if retryable && attempt < self.config.max_attempts => {
                    let wait = self.config.backoff * 2u32.pow(attempt - 1);
                    if !wait.is_zero() {
                        std::thread::sleep(wait);
                    }
                    let _ = err;
                }
                Some(err) => return Err(err),
            }
        }
    }

    /// Complete and parse the fenced JSON payload into `T`.
    fn structured<T: for<'de> Deserialize<'de>>(
        &self,
        role: Role,
        system: &str,
        user: &str,
    ) -> Result<T, BackendError> {
        let content = self.complete(role, system, user)?;
        let payload = fenced_payload(&content).ok_or_else(|| BackendError::Malformed {
            role,
            message: "no fenced code block in reply".to_string(),
        })?;
        serde_json::from_str(&payload).map_err(|e| BackendError::Malformed {
            role,
            message: format!("fenced payload: {e}"),
        })
    }
}

/// Build a full backend set whose seven roles share `core`. `plan_cap`
/// bounds the plan length the planner prompt asks for.
pub fn remote_backend_set(core: &Arc<RemoteCore>, plan_cap: usize) -> super::BackendSet {
    super::BackendSet {
        planner: Box::new(RemotePlanner { core: core.clone(), plan_cap }),
        world_model: Box::new(RemoteWorldModel { core: core.clone() }),
        evaluator: Box::new(RemoteEvaluator { core: core.clone() }),
        srm_analyzer: Box::new(RemoteSrmAnalyzer { core: core.clone() }),
        principle_analyzer: Box::new(RemotePrincipleAnalyzer { core: core.clone() }),
        heuristic_extractor: Box::new(RemoteHeuristicExtractor { core: core.clone() }),
        heuristic_merger: Box::new(RemoteHeuristicMerger { core: core.clone() }),
    }
}

fn cell_text(cell: Cell) -> String {
    format!("({}, {})", cell.x, cell.y)
}

fn context_text(context: &PlannerContext) -> String {
    let mut out = String::new();
    match &context.recent_reflection {
        Some(r) => {
            out.push_str(&format!(
                "reflection: progress {:?}, patterns [{}], advice [{}]\n",
                r.progress_assessment,
                r.failure_patterns.join(", "),
                r.recommendations.join("; "),
            ));
        }
        None => out.push_str("reflection: none\n"),
    }
    if context.retrieved_principles.is_empty() {
        out.push_str("principles: none\n");
    } else {
        for sp in &context.retrieved_principles {
            out.push_str(&format!(
                "principle ({:?}): {}\n",
                sp.principle.kind, sp.principle.text
            ));
        }
    }
    if context.active_heuristics.is_empty() {
        out.push_str("heuristics: none\n");
    } else {
        for h in &context.active_heuristics {
            out.push_str(&format!(
                "heuristic {} (confidence {:.2}, support {}): {}\n",
                h.pattern_id, h.confidence, h.support, h.strategy
            ));
        }
    }
    out
}

fn subtask_text(subtask: &SubtaskNode) -> String {
    let tokens: Vec<String> = subtask.actions.iter().map(Action::token).collect();
    let trace: Vec<String> = subtask
        .pose_trace
        .iter()
        .map(|p| format!("({}, {}, h{})", p.cell.x, p.cell.y, p.heading))
        .collect();
    format!(
        "actions [{}] status {:?} rationale {:?} trace [{}]",
        tokens.join(", "),
        subtask.status,
        subtask.rationale,
        trace.join(" -> ")
    )
}

pub struct RemotePlanner {
    core: Arc<RemoteCore>,
    pub plan_cap: usize,
}

#[derive(Deserialize)]
struct PlannerReply {
    plans: Vec<PlanReply>,
}

#[derive(Deserialize)]
struct PlanReply {
    actions: Vec<String>,
    reasoning: Vec<String>,
}

impl PlannerBackend for RemotePlanner {
    fn propose(
        &self,
        view: &NavView<'_>,
        context: &PlannerContext,
        n: usize,
    ) -> Result<Vec<CandidatePlan>, BackendError> {
        let role = Role::Planner;
        let template = template_for(role);
        let frontiers = view
            .frontiers
            .iter()
            .map(|c| cell_text(*c))
            .collect::<Vec<_>>()
            .join(", ");
        let user = render(
            template.user,
            &[
                ("instruction", view.goal.instruction()),
                ("observation", view.observation.render_text()),
                ("frontiers", if frontiers.is_empty() { "none".into() } else { frontiers }),
                ("target", view.target.map_or("unknown".into(), cell_text)),
                ("context", context_text(context)),
                ("n", n.to_string()),
                ("cap", self.plan_cap.to_string()),
            ],
        );
        let reply: PlannerReply = self.core.structured(role, template.system, &user)?;
        if reply.plans.is_empty() {
            return Err(BackendError::Malformed {
                role,
                message: "planner returned zero plans".to_string(),
            });
        }
        let mut plans = Vec::with_capacity(reply.plans.len());
        for (index, p) in reply.plans.into_iter().enumerate() {
            let mut actions = Vec::with_capacity(p.actions.len());
            for token in &p.actions {
                let action = Action::from_token(token).ok_or_else(|| BackendError::Malformed {
                    role,
                    message: format!("unknown action token {token:?}"),
                })?;
                actions.push(action);
            }
            plans.push(CandidatePlan { index, actions, reasoning: p.reasoning });
        }
        Ok(plans)
    }
}

pub struct RemoteWorldModel {
    core: Arc<RemoteCore>,
}

#[derive(Deserialize)]
struct WorldModelReply {
    steps: Vec<StepReply>,
}

#[derive(Deserialize)]
struct StepReply {
    x: i32,
    y: i32,
    heading: u8,
    #[serde(default)]
    cells: Vec<(i32, i32, String)>,
}

impl WorldModelBackend for RemoteWorldModel {
    fn imagine(
        &self,
        view: &NavView<'_>,
        actions: &[Action],
        horizon: usize,
        _seed: u64,
    ) -> Result<Vec<Observation>, BackendError> {
        let role = Role::WorldModel;
        let template = template_for(role);
        let take = horizon.min(actions.len());
        let tokens: Vec<String> = actions[..take].iter().map(Action::token).collect();
        let user = render(
            template.user,
            &[
                ("observation", view.observation.render_text()),
                ("actions", tokens.join("\n")),
                ("horizon", take.to_string()),
            ],
        );
        let reply: WorldModelReply = self.core.structured(role, template.system, &user)?;
        if reply.steps.len() != take {
            return Err(BackendError::Malformed {
                role,
                message: format!("expected {take} steps, got {}", reply.steps.len()),
            });
        }
        let mut out = Vec::with_capacity(reply.steps.len());
        for s in reply.steps {
            if s.heading >= crate::gridworld::HEADINGS {
                return Err(BackendError::Malformed {
                    role,
                    message: format!("heading {} out of range", s.heading),
                });
            }
            let mut cells = BTreeMap::new();
            for (x, y, kind) in &s.cells {
                let occ = match kind.as_str() {
                    "free" => Occupancy::Free,
                    "wall" => Occupancy::Wall,
                    other => {
                        return Err(BackendError::Malformed {
                            role,
                            message: format!("unknown cell kind {other:?}"),
                        })
                    }
                };
                cells.insert(Cell::new(*x, *y), occ);
            }
            out.push(Observation {
                pose: Pose::new(s.x, s.y, s.heading),
                cells,
                objects: Vec::new(),
            });
        }
        Ok(out)
    }
}

pub struct RemoteEvaluator {
    core: Arc<RemoteCore>,
}

#[derive(Deserialize)]
struct EvaluatorReply {
    score: f64,
}

impl EvaluatorBackend for RemoteEvaluator {
    fn score(&self, rollout: &Rollout, view: &NavView<'_>) -> Result<f64, BackendError> {
        let role = Role::Evaluator;
        let template = template_for(role);
        let rendered: Vec<String> =
            rollout.predicted.iter().map(Observation::render_text).collect();
        let user = render(
            template.user,
            &[
                ("instruction", view.goal.instruction()),
                ("target", view.target.map_or("unknown".into(), cell_text)),
                ("rollout", rendered.join("---\n")),
            ],
        );
        let reply: EvaluatorReply = self.core.structured(role, template.system, &user)?;
        Ok(reply.score)
    }
}

pub struct RemoteSrmAnalyzer {
    core: Arc<RemoteCore>,
}

#[derive(Deserialize)]
struct SrmReply {
    progress: String,
    #[serde(default)]
    failure_patterns: Vec<String>,
    #[serde(default)]
    subgoal_context: String,
    #[serde(default)]
    recommendations: Vec<String>,
}

impl SrmAnalyzerBackend for RemoteSrmAnalyzer {
    fn reflect(
        &self,
        window: &[&SubtaskNode],
        span: (u32, u32),
        view: &NavView<'_>,
        active_heuristics: &[crate::aki::MergedHeuristic],
    ) -> Result<ReflectionSummary, BackendError> {
        let role = Role::SrmAnalyzer;
        let template = template_for(role);
        let window_text: Vec<String> = window.iter().map(|s| subtask_text(s)).collect();
        let heuristics_text = if active_heuristics.is_empty() {
            "none".to_string()
        } else {
            active_heuristics
                .iter()
                .map(|h| format!("{}: {}", h.pattern_id, h.strategy))
                .collect::<Vec<_>>()
                .join("\n")
        };
        let user = render(
            template.user,
            &[
                ("instruction", view.goal.instruction()),
                ("span_first", span.0.to_string()),
                ("span_last", span.1.to_string()),
                ("window", window_text.join("\n")),
                ("heuristics", heuristics_text),
            ],
        );
        let reply: SrmReply = self.core.structured(role, template.system, &user)?;
        let progress = match reply.progress.to_ascii_uppercase().as_str() {
            "ADVANCING" => Progress::Advancing,
            "STALLED" => Progress::Stalled,
            "REGRESSING" => Progress::Regressing,
            other => {
                return Err(BackendError::Malformed {
                    role,
                    message: format!("unknown progress value {other:?}"),
                })
            }
        };
        Ok(ReflectionSummary {
            progress_assessment: progress,
            failure_patterns: reply.failure_patterns,
            subgoal_context: reply.subgoal_context,
            recommendations: reply.recommendations,
            window_span: span,
        })
    }
}

pub struct RemotePrincipleAnalyzer {
    core: Arc<RemoteCore>,
}

#[derive(Deserialize)]
struct PrincipleReply {
    principle: String,
}

impl PrincipleAnalyzerBackend for RemotePrincipleAnalyzer {
    fn principle_text(
        &self,
        tau: &[&SubtaskNode],
        outcome: OutcomeFlag,
        goal: &GoalSpec,
        _map: &GridMap,
    ) -> Result<String, BackendError> {
        let role = Role::PrincipleAnalyzer;
        let template = template_for(role);
        let trajectory: Vec<String> = tau.iter().map(|s| subtask_text(s)).collect();
        let user = render(
            template.user,
            &[
                ("instruction", goal.instruction()),
                ("outcome", format!("{outcome:?}").to_ascii_uppercase()),
                ("trajectory", trajectory.join("\n")),
            ],
        );
        let reply: PrincipleReply = self.core.structured(role, template.system, &user)?;
        if reply.principle.trim().is_empty() {
            return Err(BackendError::Malformed {
                role,
                message: "empty principle text".to_string(),
            });
        }
        Ok(reply.principle)
    }
}

pub struct RemoteHeuristicExtractor {
    core: Arc<RemoteCore>,
}

#[derive(Deserialize)]
struct ExtractorReply {
    heuristics: Vec<ExtractedHeuristic>,
}

#[derive(Deserialize)]
struct ExtractedHeuristic {
    pattern_id: String,
    description: String,
    strategy: String,
    confidence: f64,
}

impl HeuristicExtractorBackend for RemoteHeuristicExtractor {
    fn extract(&self, graph: &MemoryGraph, _map: &GridMap) -> Result<Vec<Heuristic>, BackendError> {
        let role = Role::HeuristicExtractor;
        if !graph.is_finalized() {
            return Err(BackendError::Rejected {
                role,
                message: "episode is not finalized".to_string(),
            });
        }
        let template = template_for(role);
        let trajectory: Vec<String> = graph
            .subtasks_in_order()
            .map(|(_, s)| subtask_text(s))
            .collect();
        let user = render(
            template.user,
            &[
                ("episode", graph.episode_id().to_string()),
                ("outcome", format!("{:?}", graph.outcome()).to_ascii_uppercase()),
                ("trajectory", trajectory.join("\n")),
            ],
        );
        let reply: ExtractorReply = self.core.structured(role, template.system, &user)?;
        let mut out = Vec::with_capacity(reply.heuristics.len());
        for h in reply.heuristics {
            if !(0.0..=1.0).contains(&h.confidence) || !h.confidence.is_finite() {
                return Err(BackendError::Malformed {
                    role,
                    message: format!("confidence {} outside [0, 1]", h.confidence),
                });
            }
            if h.pattern_id.is_empty() {
                return Err(BackendError::Malformed {
                    role,
                    message: "empty pattern id".to_string(),
                });
            }
            out.push(Heuristic {
                pattern_id: h.pattern_id,
                description: h.description,
                strategy: h.strategy,
                confidence: h.confidence,
                outcome_tag: graph.outcome(),
                source_episode: graph.episode_id().to_string(),
            });
        }
        Ok(out)
    }
}

pub struct RemoteHeuristicMerger {
    core: Arc<RemoteCore>,
}

#[derive(Deserialize)]
struct MergerReply {
    description: String,
    strategy: String,
}

impl HeuristicMergerBackend for RemoteHeuristicMerger {
    fn merge_texts(&self, members: &[&Heuristic]) -> Result<(String, String), BackendError> {
        let role = Role::HeuristicMerger;
        if members.is_empty() {
            return Err(BackendError::Rejected {
                role,
                message: "empty cluster".to_string(),
            });
        }
        let template = template_for(role);
        // Canonical member order so the prompt (and thus the reply) can
        // never depend on caller ordering.
        let mut lines: Vec<String> = members
            .iter()
            .map(|m| {
                format!(
                    "[{}] {} | strategy: {} | outcome: {:?}",
                    m.pattern_id, m.description, m.strategy, m.outcome_tag
                )
            })
            .collect();
        lines.sort();
        lines.dedup();
        let user = render(template.user, &[("members", lines.join("\n"))]);
        let reply: MergerReply = self.core.structured(role, template.system, &user)?;
        Ok((reply.description, reply.strategy))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridworld::{EpisodeSim, GridMap, Occupancy};

    fn open_map() -> GridMap {
        let mut occ = vec![Occupancy::Wall; 400];
        for y in 1..19 {
            for x in 1..19 {
                occ[y * 20 + x] = Occupancy::Free;
            }
        }
        GridMap::from_parts(20, 20, 0, occ, vec![], vec![])
    }

    fn envelope(content: &str) -> String {
        serde_json::to_string(&serde_json::json!({
            "choices": [{"message": {"content": content}}]
        }))
        .unwrap()
    }

    fn test_core(transport: ReplayTransport) -> Arc<RemoteCore> {
        let mut config = RemoteConfig::new("http://unit.test", "k");
        config.backoff = Duration::ZERO;
        RemoteCore::new(config, Box::new(transport))
    }

    #[test]
    fn templates_split_into_system_and_user() {
        for role in [
            Role::Planner,
            Role::WorldModel,
            Role::Evaluator,
            Role::SrmAnalyzer,
            Role::PrincipleAnalyzer,
            Role::HeuristicExtractor,
            Role::HeuristicMerger,
        ] {
            let t = template_for(role);
            assert!(!t.system.trim().is_empty(), "{role} system text");
            assert!(!t.user.trim().is_empty(), "{role} user template");
            assert!(t.system.contains("```json"), "{role} must demand a fenced reply");
        }
    }

    #[test]
    fn fenced_payload_handles_fences_and_noise() {
        let content = "Sure thing.\n```json\n{\"score\": 2}\n```\ntrailing";
        assert_eq!(fenced_payload(content).unwrap(), "{\"score\": 2}");
        let bare = "```\n{\"a\":1}\n```";
        assert_eq!(fenced_payload(bare).unwrap(), "{\"a\":1}");
        assert_eq!(fenced_payload("no fence here"), None);
    }

    #[test]
    fn planner_parses_plans_and_rejects_bad_tokens() {
        let map = open_map();
        let goal = GoalSpec::ig_nav(&map, Pose::new(9, 4, 0));
        let sim = EpisodeSim::new(&map, goal.clone(), Pose::new(9, 9, 0), 50);
        let view = sim.view();
        let context = PlannerContext::new(goal.clone());

        let transport = ReplayTransport::new();
        transport.push_ok(
            200,
            envelope(
                "```json\n{\"plans\": [{\"actions\": [\"FORWARD\", \"STOP\"], \"reasoning\": [\"go\", \"stop\"]}]}\n```",
            ),
        );
        let core = test_core(transport);
        let planner = RemotePlanner { core: core.clone(), plan_cap: 6 };
        let plans = planner.propose(&view, &context, 3).unwrap();
        assert_eq!(plans.len(), 1);
        assert_eq!(plans[0].actions, vec![Action::Forward, Action::Stop]);
        assert_eq!(core.transcript_len(), 1);

        let transport = ReplayTransport::new();
        transport.push_ok(
            200,
            envelope("```json\n{\"plans\": [{\"actions\": [\"FLY\"], \"reasoning\": [\"r\"]}]}\n```"),
        );
        let planner = RemotePlanner { core: test_core(transport), plan_cap: 6 };
        let err = planner.propose(&view, &context, 3).unwrap_err();
        assert!(matches!(err, BackendError::Malformed { role: Role::Planner, .. }));
        assert!(err.to_string().contains("FLY"), "{err}");
    }

    #[test]
    fn transport_failures_retry_then_surface() {
        let map = open_map();
        let goal = GoalSpec::ig_nav(&map, Pose::new(9, 4, 0));
        let sim = EpisodeSim::new(&map, goal.clone(), Pose::new(9, 9, 0), 50);
        let view = sim.view();

        // Two failures then success: retried transparently.
        let transport = ReplayTransport::new();
        transport.push_failure("connection refused");
        transport.push_ok(503, "overloaded");
        transport.push_ok(200, envelope("```json\n{\"score\": -4.0}\n```"));
        let core = test_core(transport);
        let eval = RemoteEvaluator { core: core.clone() };
        let rollout = Rollout {
            predicted: vec![Observation::capture(&map, Pose::new(9, 8, 0))],
            source_plan_index: 0,
        };
        assert_eq!(eval.score(&rollout, &view).unwrap(), -4.0);
        assert_eq!(core.transcript_len(), 3, "all attempts are recorded");

        // Three straight failures exhaust the attempts.
        let transport = ReplayTransport::new();
        for _ in 0..3 {
            transport.push_failure("connection refused");
        }
        let eval = RemoteEvaluator { core: test_core(transport) };
        let err = eval.score(&rollout, &view).unwrap_err();
        assert!(matches!(err, BackendError::Transport { role: Role::Evaluator, .. }));

        // Auth failures do not retry.
        let transport = ReplayTransport::new();
        transport.push_ok(401, "{}");
        let eval = RemoteEvaluator { core: test_core(transport) };
        let err = eval.score(&rollout, &view).unwrap_err();
        assert!(matches!(err, BackendError::Auth { role: Role::Evaluator, .. }));
    }

    #[test]
    fn malformed_replies_name_the_role() {
        let map = open_map();
        let goal = GoalSpec::ig_nav(&map, Pose::new(9, 4, 0));
        let mut graph = crate::memory_graph::create_episode("ep-x", goal);
        graph.finalize_episode(OutcomeFlag::Failure).unwrap();

        // No fenced block.
        let transport = ReplayTransport::new();
        transport.push_ok(200, envelope("I could not find any patterns."));
        let extractor = RemoteHeuristicExtractor { core: test_core(transport) };
        let err = extractor.extract(&graph, &map).unwrap_err();
        assert!(matches!(err, BackendError::Malformed { role: Role::HeuristicExtractor, .. }));

        // Fence present, schema wrong.
        let transport = ReplayTransport::new();
        transport.push_ok(200, envelope("```json\n{\"rules\": []}\n```"));
        let extractor = RemoteHeuristicExtractor { core: test_core(transport) };
        let err = extractor.extract(&graph, &map).unwrap_err();
        assert!(matches!(err, BackendError::Malformed { role: Role::HeuristicExtractor, .. }));

        // Confidence out of range.
        let transport = ReplayTransport::new();
        transport.push_ok(
            200,
            envelope(
                "```json\n{\"heuristics\": [{\"pattern_id\": \"X\", \"description\": \"d\", \"strategy\": \"s\", \"confidence\": 1.5}]}\n```",
            ),
        );
        let extractor = RemoteHeuristicExtractor { core: test_core(transport) };
        let err = extractor.extract(&graph, &map).unwrap_err();
        assert!(err.to_string().contains("1.5"), "{err}");
    }

    #[test]
    fn request_rendering_is_stable() {
        let body = render_request("m-1", "sys", "usr");
        assert_eq!(
            body,
            "{\"model\":\"m-1\",\"temperature\":0.0,\"messages\":[{\"role\":\"system\",\"content\":\"sys\"},{\"role\":\"user\",\"content\":\"usr\"}]}"
        );
    }

    #[test]
    fn world_model_reply_becomes_observations() {
        let map = open_map();
        let goal = GoalSpec::ig_nav(&map, Pose::new(9, 4, 0));
        let sim = EpisodeSim::new(&map, goal.clone(), Pose::new(9, 9, 0), 50);
        let view = sim.view();
        let transport = ReplayTransport::new();
        transport.push_ok(
            200,
            envelope(
                "```json\n{\"steps\": [{\"x\": 9, \"y\": 8, \"heading\": 0, \"cells\": [[9, 7, \"free\"], [9, 6, \"wall\"]]}]}\n```",
            ),
        );
        let wm = RemoteWorldModel { core: test_core(transport) };
        let obs = wm.imagine(&view, &[Action::Forward, Action::Forward], 1, 0).unwrap();
        assert_eq!(obs.len(), 1);
        assert_eq!(obs[0].pose, Pose::new(9, 8, 0));
        assert_eq!(obs[0].cells.get(&Cell::new(9, 6)), Some(&Occupancy::Wall));
    }
}
