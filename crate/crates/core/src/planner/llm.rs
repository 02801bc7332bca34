//! Client for an OpenAI-compatible chat-completions endpoint.

use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{build_prompt, outcome_from_text, parse_path_from_text, BlockingPlanner, FailureReason, PlanOutcome, PlanRequest, SYSTEM_PROMPT};
use crate::congestion::CongestionSnapshot;
use crate::network::{build_graph, Edge, Node, NodeId, RoadGraph};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmConfig {
    /// Base URL up to and including the API version, e.g. `http://localhost:8000/v1`.
    pub url: String,
    pub model: String,
    pub temperature: f64,
    /// HTTP timeout in seconds.
    pub http_timeout: f64,
    pub max_tokens: Option<u32>,
}

impl Default for LlmConfig {
    fn default() -> Self {
        LlmConfig {
            url: "http://localhost:8000/v1".to_string(),
            model: "qwen3-14b".to_string(),
            temperature: 0.0,
            http_timeout: 60.0,
            max_tokens: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("endpoint unreachable: {0}")]
    Unreachable(String),
    #[error("HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed completion: {0}")]
    Malformed(String),
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: Vec<ChatMessage<'a>>,
    temperature: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    max_tokens: Option<u32>,
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ReplyMessage,
}

#[derive(Deserialize)]
struct ReplyMessage {
    #[serde(default)]
    content: Option<String>,
}

pub struct LlmBackend {
    client: reqwest::blocking::Client,
    config: LlmConfig,
    graph: Arc<RoadGraph>,
}

impl LlmBackend {
    pub fn new(config: LlmConfig, graph: Arc<RoadGraph>) -> Result<Self, LlmError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(config.http_timeout.max(0.001)))
            .build()
            .map_err(|e| LlmError::Unreachable(e.to_string()))?;
        Ok(LlmBackend { client, config, graph })
    }

    pub fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.config.url.trim_end_matches('/'))
    }

    /// Sends one prompt and returns the assistant's text.
    pub fn complete(&self, prompt: &str) -> Result<String, LlmError> {
        let body = ChatRequest {
            model: &self.config.model,
            messages: vec![
                ChatMessage {
                    role: "system",
                    content: SYSTEM_PROMPT,
                },
                ChatMessage {
                    role: "user",
                    content: prompt,
                },
            ],
            temperature: self.config.temperature,
            max_tokens: self.config.max_tokens,
        };
        let resp = self
            .client
            .post(self.endpoint())
            .json(&body)
            .send()
            .map_err(|e| LlmError::Unreachable(e.to_string()))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| LlmError::Malformed(e.to_string()))?;
        if !status.is_success() {
            return Err(LlmError::Status {
                status: status.as_u16(),
                body: excerpt(&text, 200),
            });
        }
        let parsed: ChatResponse =
            serde_json::from_str(&text).map_err(|e| LlmError::Malformed(format!("{e}: {}", excerpt(&text, 200))))?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| LlmError::Malformed("no choices[0].message.content".to_string()))
    }

    /// Sends a fixed prompt over a three-node map and reports the result.
    pub fn probe(&self) -> ProbeReport {
        let graph = probe_map();
        let prompt = build_prompt(&graph, &CongestionSnapshot::empty(0.0), NodeId(0), NodeId(2));
        let started = Instant::now();
        let result = self.complete(&prompt);
        let latency = started.elapsed().as_secs_f64();
        match result {
            Err(LlmError::Unreachable(e)) => ProbeReport {
                latency,
                status: ProbeStatus::Unreachable(e),
            },
            Err(e) => ProbeReport {
                latency,
                status: ProbeStatus::BadResponse(e.to_string()),
            },
            Ok(reply) => match parse_path_from_text(&reply) {
                Ok(path) => ProbeReport {
                    latency,
                    status: ProbeStatus::Pass(path.to_json()),
                },
                Err(e) => ProbeReport {
                    latency,
                    status: ProbeStatus::ParseFailed {
                        error: e.to_string(),
                        excerpt: excerpt(&reply, 160),
                    },
                },
            },
        }
    }
}

impl BlockingPlanner for LlmBackend {
    fn plan(&self, request: &PlanRequest) -> PlanOutcome {
        let prompt = build_prompt(&self.graph, &request.snapshot, request.origin, request.destination);
        match self.complete(&prompt) {
            Ok(reply) => outcome_from_text(&reply),
            Err(e) => PlanOutcome::Failure(FailureReason::Backend(e.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ProbeStatus {
    Pass(String),
    Unreachable(String),
    BadResponse(String),
    ParseFailed { error: String, excerpt: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeReport {
    pub latency: f64,
    pub status: ProbeStatus,
}

impl ProbeReport {
    pub fn passed(&self) -> bool {
        matches!(self.status, ProbeStatus::Pass(_))
    }
}

fn probe_map() -> RoadGraph {
    build_graph(
        vec![Node::new(0, 0.0, 0.0), Node::new(1, 100.0, 0.0), Node::new(2, 200.0, 0.0)],
        vec![Edge::new(0, 1, 100.0), Edge::new(1, 2, 100.0)],
    )
    .expect("probe map is well formed")
}

fn excerpt(text: &str, max: usize) -> String {
    let mut out: String = text.chars().take(max).collect();
    if text.chars().count() > max {
        out.push('…');
    }
    out
}
