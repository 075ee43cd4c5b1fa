//! Live language-model backend over HTTP.
//!
//! The ranker drives any chat-completions-style endpoint: one room query per
//! direction, then one ranking query, each parsed strictly and retried a
//! configurable number of times on malformed output. Transport is abstracted
//! behind [`ChatEndpoint`], so tests exercise the full retry machinery with
//! scripted stubs and no network.

use super::{Ranker, RankerError, RankerRequest, RankerResponse};
use crate::prompts::{
    parse_ranking_response, parse_room_response, Exchange, ExchangeKind, PromptBundle,
};
use crate::ranking::RankVector;
use serde::{Deserialize, Serialize};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

/// Default number of retries after a failed query attempt.
pub const DEFAULT_MAX_RETRIES: u32 = 2;

/// A blocking single-prompt completion transport.
pub trait ChatEndpoint {
    fn complete(&mut self, prompt: &str) -> Result<String, RankerError>;
}

impl<F> ChatEndpoint for F
where
    F: FnMut(&str) -> Result<String, RankerError>,
{
    fn complete(&mut self, prompt: &str) -> Result<String, RankerError> {
        self(prompt)
    }
}

/// Endpoint configuration, normally read from the environment:
/// `LGR_ENDPOINT_URL`, `LGR_MODEL`, `LGR_API_KEY` (optional),
/// `LGR_REQUESTS_PER_MINUTE` (optional), `LGR_MAX_RETRIES` (optional).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LlmConfig {
    pub url: String,
    pub model: String,
    #[serde(default)]
    pub api_key: Option<String>,
    #[serde(default)]
    pub requests_per_minute: Option<u32>,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
}

fn default_retries() -> u32 {
    DEFAULT_MAX_RETRIES
}

impl LlmConfig {
    pub fn from_env() -> Result<Self, RankerError> {
        let get = |name: &str| std::env::var(name).ok().filter(|v| !v.is_empty());
        let url = get("LGR_ENDPOINT_URL")
            .ok_or_else(|| RankerError::MissingEnv("LGR_ENDPOINT_URL".into()))?;
        let model = get("LGR_MODEL").ok_or_else(|| RankerError::MissingEnv("LGR_MODEL".into()))?;
        let requests_per_minute = match get("LGR_REQUESTS_PER_MINUTE") {
            Some(v) => Some(v.parse::<u32>().map_err(|_| {
                RankerError::InvalidRequest(format!("LGR_REQUESTS_PER_MINUTE={v} is not a number"))
            })?),
            None => None,
        };
        let max_retries = match get("LGR_MAX_RETRIES") {
            Some(v) => v.parse::<u32>().map_err(|_| {
                RankerError::InvalidRequest(format!("LGR_MAX_RETRIES={v} is not a number"))
            })?,
            None => DEFAULT_MAX_RETRIES,
        };
        Ok(Self {
            url,
            model,
            api_key: get("LGR_API_KEY"),
            requests_per_minute,
            max_retries,
        })
    }
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'static str,
    content: &'a str,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: [ChatMessage<'a>; 1],
    temperature: f64,
}

#[derive(Deserialize)]
struct ChatChoiceMessage {
    content: String,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatChoiceMessage,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

/// HTTP transport speaking the chat-completions wire format. Outbound
/// requests are serialized through a shared rate limiter, so one endpoint
/// value (cloned) can serve many concurrent episodes.
#[derive(Debug, Clone)]
pub struct HttpEndpoint {
    config: LlmConfig,
    next_allowed: Arc<Mutex<Option<Instant>>>,
}

impl HttpEndpoint {
    pub fn new(config: LlmConfig) -> Self {
        Self {
            config,
            next_allowed: Arc::new(Mutex::new(None)),
        }
    }

    pub fn from_env() -> Result<Self, RankerError> {
        Ok(Self::new(LlmConfig::from_env()?))
    }

    pub fn config(&self) -> &LlmConfig {
        &self.config
    }

    /// Claim the next send slot, sleeping until it opens.
    fn throttle(&self) {
        let Some(rpm) = self.config.requests_per_minute.filter(|&r| r > 0) else {
            return;
        };
        let interval = Duration::from_secs_f64(60.0 / rpm as f64);
        let now = Instant::now();
        let slot = {
            let mut next = self.next_allowed.lock().expect("rate limiter lock");
            let slot = next.map_or(now, |t| t.max(now));
            *next = Some(slot + interval);
            slot
        };
        let wait = slot.saturating_duration_since(now);
        if !wait.is_zero() {
            std::thread::sleep(wait);
        }
    }
}

impl ChatEndpoint for HttpEndpoint {
    fn complete(&mut self, prompt: &str) -> Result<String, RankerError> {
        self.throttle();
        let body = ChatRequest {
            model: &self.config.model,
            messages: [ChatMessage {
                role: "user",
                content: prompt,
            }],
            temperature: 0.0,
        };
        let mut request = ureq::post(&self.config.url);
        if let Some(key) = self.config.api_key.as_deref() {
            request = request.header("Authorization", &format!("Bearer {key}"));
        }
        let mut response = request
            .send_json(&body)
            .map_err(|e| RankerError::Transport(e.to_string()))?;
        let parsed: ChatResponse = response
            .body_mut()
            .read_json()
            .map_err(|e| RankerError::Transport(format!("malformed response body: {e}")))?;
        parsed
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or_else(|| RankerError::Transport("response had no choices".into()))
    }
}

/// Ranking backend that queries a [`ChatEndpoint`] and enforces the response
/// protocol, retrying malformed or failed queries up to `max_retries` times
/// each before surfacing a typed failure.
#[derive(Debug, Clone)]
pub struct LlmRanker<E> {
    endpoint: E,
    max_retries: u32,
}

impl<E: ChatEndpoint> LlmRanker<E> {
    pub fn new(endpoint: E) -> Self {
        Self {
            endpoint,
            max_retries: DEFAULT_MAX_RETRIES,
        }
    }

    pub fn with_retries(endpoint: E, max_retries: u32) -> Self {
        Self {
            endpoint,
            max_retries,
        }
    }

    fn query<T>(
        &mut self,
        kind: ExchangeKind,
        prompt: &str,
        parse: impl Fn(&str) -> Result<T, RankerError>,
    ) -> Result<(T, Exchange), RankerError> {
        let attempts = self.max_retries + 1;
        let mut last = String::new();
        for _ in 0..attempts {
            match self.endpoint.complete(prompt) {
                Err(e) => last = format!("transport: {e}"),
                Ok(response) => match parse(&response) {
                    Ok(value) => {
                        return Ok((
                            value,
                            Exchange {
                                kind,
                                prompt: prompt.to_string(),
                                response,
                            },
                        ))
                    }
                    Err(e) => last = format!("parse: {e}"),
                },
            }
        }
        Err(RankerError::RetriesExhausted { attempts, last })
    }
}

impl<E: ChatEndpoint> Ranker for LlmRanker<E> {
    fn rank(&mut self, request: &RankerRequest) -> Result<RankerResponse, RankerError> {
        let bundle = PromptBundle::build(
            &request.target_object,
            &request.per_direction_objects,
            &request.categories,
        )?;

        let mut transcript = Vec::with_capacity(bundle.room_prompts.len() + 1);
        let mut rooms = Vec::with_capacity(bundle.room_prompts.len());
        for prompt in &bundle.room_prompts {
            let (room, exchange) = self.query(ExchangeKind::Room, prompt, |text| {
                parse_room_response(text, &request.categories).map_err(RankerError::from)
            })?;
            rooms.push(room);
            transcript.push(exchange);
        }

        let count = bundle.response_count;
        let (parsed, exchange) =
            self.query(ExchangeKind::Ranking, &bundle.ranking_prompt, |text| {
                parse_ranking_response(text, count).map_err(RankerError::from)
            })?;
        transcript.push(exchange);

        Ok(RankerResponse {
            per_direction_room: rooms.try_into().expect("eight directions"),
            direction_ranks: RankVector::new(parsed.rank_by_step())?,
            transcript,
        })
    }

    fn name(&self) -> &'static str {
        "llm"
    }
}
