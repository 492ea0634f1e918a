//! Remote chat-completions planner with multi-turn conversations, parse
//! re-asks, transport retries, a global rate limit, and transcript logging.

use std::io::Write as IoWrite;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::env::OccupancyGrid;

use super::prompt::{build_prompt, parse_plan_text};
use super::{PlanError, PlanRequest, Planner, PlannerSession, RawPlan, TokenUsage};

#[derive(Debug, Clone)]
pub struct LlmConfig {
    pub api_base_url: String,
    pub model_name: String,
    pub temperature: f64,
    pub max_parse_retries: u32,
    pub max_transport_retries: u32,
    pub request_timeout: Duration,
    /// Requests per minute, enforced globally across threads. 0 disables.
    pub rate_limit_rpm: u32,
}

impl Default for LlmConfig {
    fn default() -> Self {
        Self {
            api_base_url: "https://api.openai.com/v1".into(),
            model_name: "gpt-4o".into(),
            temperature: 0.0,
            max_parse_retries: 2,
            max_transport_retries: 2,
            request_timeout: Duration::from_secs(120),
            rate_limit_rpm: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

#[derive(Debug, Clone)]
pub struct ChatCompletion {
    pub content: String,
    pub token_usage: Option<TokenUsage>,
}

/// Transport behind the planner; swapped for a mock in tests.
pub trait ChatTransport: Send + Sync {
    fn complete(
        &self,
        model: &str,
        temperature: f64,
        messages: &[ChatMessage],
    ) -> Result<ChatCompletion, String>;
}

/// POSTs to `{api_base_url}/chat/completions` with a bearer token.
pub struct HttpTransport {
    base_url: String,
    api_key: String,
    agent: ureq::Agent,
}

impl HttpTransport {
    pub fn new(base_url: &str, api_key: &str, timeout: Duration) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .build()
            .into();
        Self {
            base_url: base_url.trim_end_matches('/').to_string(),
            api_key: api_key.to_string(),
            agent,
        }
    }
}

impl ChatTransport for HttpTransport {
    fn complete(
        &self,
        model: &str,
        temperature: f64,
        messages: &[ChatMessage],
    ) -> Result<ChatCompletion, String> {
        let body = json!({
            "model": model,
            "messages": messages,
            "temperature": temperature,
        });
        let url = format!("{}/chat/completions", self.base_url);
        let mut resp = self
            .agent
            .post(&url)
            .header("authorization", &format!("Bearer {}", self.api_key))
            .send_json(&body)
            .map_err(|e| e.to_string())?;
        let value: serde_json::Value = resp.body_mut().read_json().map_err(|e| e.to_string())?;
        let content = value["choices"][0]["message"]["content"]
            .as_str()
            .ok_or_else(|| "response missing choices[0].message.content".to_string())?
            .to_string();
        let token_usage = match (
            value["usage"]["prompt_tokens"].as_u64(),
            value["usage"]["completion_tokens"].as_u64(),
        ) {
            (Some(p), Some(c)) => Some(TokenUsage { prompt_tokens: p, completion_tokens: c }),
            _ => None,
        };
        Ok(ChatCompletion { content, token_usage })
    }
}

/// Minimum-interval rate limiter shared by all sessions of one planner.
struct RateLimiter {
    min_interval: Duration,
    last: Mutex<Option<Instant>>,
}

impl RateLimiter {
    fn new(rpm: u32) -> Self {
        let min_interval = if rpm == 0 {
            Duration::ZERO
        } else {
            Duration::from_secs_f64(60.0 / rpm as f64)
        };
        Self { min_interval, last: Mutex::new(None) }
    }

    fn wait(&self) {
        if self.min_interval.is_zero() {
            return;
        }
        let mut last = self.last.lock().unwrap();
        if let Some(prev) = *last {
            let elapsed = prev.elapsed();
            if elapsed < self.min_interval {
                std::thread::sleep(self.min_interval - elapsed);
            }
        }
        *last = Some(Instant::now());
    }
}

/// Appended to the per-run transcript log, one JSON object per exchange.
#[derive(Debug, Serialize)]
struct TranscriptEntry<'a> {
    episode_id: &'a str,
    turn_index: u32,
    attempt: u32,
    request_messages: &'a [ChatMessage],
    response: Option<&'a str>,
    error: Option<&'a str>,
}

pub type TranscriptSink = Arc<Mutex<dyn IoWrite + Send>>;

pub struct LlmPlanner {
    cfg: LlmConfig,
    transport: Arc<dyn ChatTransport>,
    limiter: Arc<RateLimiter>,
    transcript: Option<TranscriptSink>,
}

impl LlmPlanner {
    pub fn new(cfg: LlmConfig, api_key: &str, transcript: Option<TranscriptSink>) -> Self {
        let transport = Arc::new(HttpTransport::new(
            &cfg.api_base_url,
            api_key,
            cfg.request_timeout,
        ));
        Self::with_transport(cfg, transport, transcript)
    }

    pub fn with_transport(
        cfg: LlmConfig,
        transport: Arc<dyn ChatTransport>,
        transcript: Option<TranscriptSink>,
    ) -> Self {
        let limiter = Arc::new(RateLimiter::new(cfg.rate_limit_rpm));
        Self { cfg, transport, limiter, transcript }
    }
}

impl Planner for LlmPlanner {
    fn kind(&self) -> &'static str {
        "llm"
    }

    fn start_episode(&self, episode_id: &str, _env: &OccupancyGrid) -> Box<dyn PlannerSession> {
        Box::new(LlmSession {
            cfg: self.cfg.clone(),
            transport: Arc::clone(&self.transport),
            limiter: Arc::clone(&self.limiter),
            transcript: self.transcript.clone(),
            episode_id: episode_id.to_string(),
            messages: vec![ChatMessage {
                role: "system".into(),
                content: "You are a precise navigation planner. Follow the requested \
                          output format exactly."
                    .into(),
            }],
        })
    }
}

struct LlmSession {
    cfg: LlmConfig,
    transport: Arc<dyn ChatTransport>,
    limiter: Arc<RateLimiter>,
    transcript: Option<TranscriptSink>,
    episode_id: String,
    /// The whole episode shares one conversation; it only ever grows.
    messages: Vec<ChatMessage>,
}

impl LlmSession {
    fn log(&self, turn_index: u32, attempt: u32, response: Option<&str>, error: Option<&str>) {
        if let Some(sink) = &self.transcript {
            let entry = TranscriptEntry {
                episode_id: &self.episode_id,
                turn_index,
                attempt,
                request_messages: &self.messages,
                response,
                error,
            };
            let mut sink = sink.lock().unwrap();
            if let Ok(line) = serde_json::to_string(&entry) {
                let _ = writeln!(sink, "{line}");
            }
        }
    }

    fn call_transport(&mut self, turn_index: u32, attempt: u32) -> Result<ChatCompletion, PlanError> {
        let mut last_err = String::new();
        for _ in 0..=self.cfg.max_transport_retries {
            self.limiter.wait();
            match self
                .transport
                .complete(&self.cfg.model_name, self.cfg.temperature, &self.messages)
            {
                Ok(completion) => {
                    self.log(turn_index, attempt, Some(&completion.content), None);
                    return Ok(completion);
                }
                Err(e) => {
                    self.log(turn_index, attempt, None, Some(&e));
                    last_err = e;
                }
            }
        }
        Err(PlanError::PlannerUnavailable(last_err))
    }
}

impl PlannerSession for LlmSession {
    fn plan(&mut self, req: &PlanRequest) -> Result<RawPlan, PlanError> {
        self.messages.push(ChatMessage {
            role: "user".into(),
            content: build_prompt(req),
        });
        let mut last_err = PlanError::ParseFailure("no attempts made".into());
        for attempt in 0..=self.cfg.max_parse_retries {
            let completion = self.call_transport(req.turn_index, attempt)?;
            self.messages.push(ChatMessage {
                role: "assistant".into(),
                content: completion.content.clone(),
            });
            match parse_plan_text(&completion.content, req) {
                Ok(trajectories) => {
                    return Ok(RawPlan {
                        trajectories,
                        raw_text: completion.content,
                        token_usage: completion.token_usage,
                    });
                }
                Err(e) => {
                    last_err = e.clone();
                    if attempt < self.cfg.max_parse_retries {
                        self.messages.push(ChatMessage {
                            role: "user".into(),
                            content: format!(
                                "Your reply could not be parsed ({e}). Answer again using \
                                 only lines of the form 'PATH <id>: (r,c) -> (r,c) -> ...', \
                                 one line per agent."
                            ),
                        });
                    }
                }
            }
        }
        Err(last_err)
    }
}
