use std::collections::HashMap;
use std::io::BufRead;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use serde::Deserialize;
use serde_json::{json, Value};

use super::SentimentLabel;

/// One labelling request: the article's cache key and the full prompt.
#[derive(Clone, Copy, Debug)]
pub struct LabelRequest<'a> {
    pub hash: &'a str,
    pub prompt: &'a str,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ClientError {
    /// Network or server trouble; worth retrying.
    #[error("transport: {0}")]
    Transport(String),
    /// A definitive refusal that retrying will not change.
    #[error("rejected: {0}")]
    Rejected(String),
}

impl ClientError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, Self::Transport(_))
    }
}

/// A chat-completion backend returning the raw response text.
pub trait ChatClient: Send + Sync {
    fn complete(&self, request: LabelRequest<'_>) -> Result<String, ClientError>;

    /// Whether requests leave the process.
    fn is_live(&self) -> bool {
        false
    }
}

/// Answers every request with the same label and counts calls.
#[derive(Debug)]
pub struct MockClient {
    label: SentimentLabel,
    calls: AtomicUsize,
}

impl MockClient {
    pub fn new(label: SentimentLabel) -> Self {
        Self {
            label,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl ChatClient for MockClient {
    fn complete(&self, _request: LabelRequest<'_>) -> Result<String, ClientError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        Ok(self.label.to_string())
    }
}

/// Serves recorded responses keyed by content hash.
///
/// The replay file is JSONL with one `{"hash": ..., "response": ...}` object
/// per line.
#[derive(Debug, Default)]
pub struct ReplayClient {
    responses: HashMap<String, String>,
}

#[derive(Deserialize)]
struct ReplayRecord {
    hash: String,
    response: String,
}

impl ReplayClient {
    pub fn new(responses: HashMap<String, String>) -> Self {
        Self { responses }
    }

    pub fn from_file(path: &Path) -> Result<Self, ClientError> {
        let f = std::fs::File::open(path).map_err(|e| ClientError::Rejected(format!("{}: {e}", path.display())))?;
        let mut responses = HashMap::new();
        for (i, line) in std::io::BufReader::new(f).lines().enumerate() {
            let line = line.map_err(|e| ClientError::Rejected(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: ReplayRecord = serde_json::from_str(&line)
                .map_err(|e| ClientError::Rejected(format!("{}:{}: {e}", path.display(), i + 1)))?;
            responses.insert(rec.hash, rec.response);
        }
        Ok(Self { responses })
    }
}

impl ChatClient for ReplayClient {
    fn complete(&self, request: LabelRequest<'_>) -> Result<String, ClientError> {
        self.responses
            .get(request.hash)
            .cloned()
            .ok_or_else(|| ClientError::Rejected(format!("no recorded response for {}", request.hash)))
    }
}

pub const ENV_ENDPOINT: &str = "CRYPTOPULSE_LLM_ENDPOINT";
pub const ENV_KEY: &str = "CRYPTOPULSE_LLM_KEY";
pub const ENV_MODEL: &str = "CRYPTOPULSE_LLM_MODEL";

/// Endpoint, credentials and model for the live client.
#[derive(Clone, Debug, PartialEq, serde::Serialize, Deserialize)]
pub struct LlmSettings {
    pub endpoint: String,
    #[serde(default)]
    pub api_key: Option<String>,
    pub model: String,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
}

fn default_timeout() -> u64 {
    60
}

impl Default for LlmSettings {
    fn default() -> Self {
        Self {
            endpoint: "https://api.openai.com/v1/chat/completions".into(),
            api_key: None,
            model: "gpt-3.5-turbo".into(),
            timeout_secs: default_timeout(),
        }
    }
}

impl LlmSettings {
    /// Overrides fields from the `CRYPTOPULSE_LLM_*` environment variables.
    pub fn with_env(mut self) -> Self {
        if let Ok(v) = std::env::var(ENV_ENDPOINT) {
            self.endpoint = v;
        }
        if let Ok(v) = std::env::var(ENV_KEY) {
            self.api_key = Some(v);
        }
        if let Ok(v) = std::env::var(ENV_MODEL) {
            self.model = v;
        }
        self
    }
}

/// Request body: the prompt as the single user message, temperature 0.
pub fn chat_request_body(model: &str, prompt: &str) -> Value {
    json!({
        "model": model,
        "temperature": 0,
        "messages": [{ "role": "user", "content": prompt }],
    })
}

/// Text of the first choice of a chat-completion response.
pub fn extract_chat_response(body: &Value) -> Result<String, ClientError> {
    body.pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| ClientError::Transport(format!("response without choices[0].message.content: {body}")))
}

/// JSON-over-HTTP chat-completion client.
pub struct HttpChatClient {
    settings: LlmSettings,
    agent: ureq::Agent,
}

impl HttpChatClient {
    pub fn new(settings: LlmSettings) -> Self {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(settings.timeout_secs)))
            .build();
        Self {
            settings,
            agent: ureq::Agent::new_with_config(config),
        }
    }
}

impl ChatClient for HttpChatClient {
    fn complete(&self, request: LabelRequest<'_>) -> Result<String, ClientError> {
        let mut req = self
            .agent
            .post(&self.settings.endpoint)
            .header("Content-Type", "application/json");
        if let Some(key) = &self.settings.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let body = chat_request_body(&self.settings.model, request.prompt);
        let mut resp = req.send_json(&body).map_err(|e| match e {
            ureq::Error::StatusCode(code) if (400..500).contains(&code) && code != 429 => {
                ClientError::Rejected(format!("HTTP {code}"))
            }
            other => ClientError::Transport(other.to_string()),
        })?;
        let value: Value = resp
            .body_mut()
            .read_json()
            .map_err(|e| ClientError::Transport(e.to_string()))?;
        extract_chat_response(&value)
    }

    fn is_live(&self) -> bool {
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{Read, Write};
    use std::net::TcpListener;

    #[test]
    fn request_body_shape() {
        let b = chat_request_body("gpt-3.5-turbo", "hello");
        assert_eq!(b["temperature"], 0);
        assert_eq!(b["messages"][0]["role"], "user");
        assert_eq!(b["messages"][0]["content"], "hello");
    }

    #[test]
    fn response_extraction() {
        let v = json!({"choices": [{"message": {"role": "assistant", "content": "neutral"}}]});
        assert_eq!(extract_chat_response(&v).unwrap(), "neutral");
        assert!(extract_chat_response(&json!({"choices": []})).is_err());
    }

    #[test]
    fn replay_lookup() {
        let c = ReplayClient::new(HashMap::from([("abc".to_string(), "Positive".to_string())]));
        let ok = c.complete(LabelRequest { hash: "abc", prompt: "" }).unwrap();
        assert_eq!(ok, "Positive");
        let miss = c.complete(LabelRequest { hash: "zzz", prompt: "" }).unwrap_err();
        assert!(!miss.is_retryable());
    }

    #[test]
    fn http_client_round_trip_against_local_server() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let server = std::thread::spawn(move || {
            let (mut sock, _) = listener.accept().unwrap();
            let mut buf = Vec::new();
            let mut chunk = [0u8; 4096];
            // read headers, then the declared body length
            loop {
                let n = sock.read(&mut chunk).unwrap();
                buf.extend_from_slice(&chunk[..n]);
                if let Some(pos) = buf.windows(4).position(|w| w == b"\r\n\r\n") {
                    let head = String::from_utf8_lossy(&buf[..pos]).to_lowercase();
                    let len: usize = head
                        .lines()
                        .find_map(|l| l.strip_prefix("content-length:").map(|v| v.trim().parse().unwrap()))
                        .unwrap_or(0);
                    while buf.len() < pos + 4 + len {
                        let n = sock.read(&mut chunk).unwrap();
                        buf.extend_from_slice(&chunk[..n]);
                    }
                    break;
                }
            }
            let reply = r#"{"choices":[{"message":{"role":"assistant","content":"negative"}}]}"#;
            write!(
                sock,
                "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{}",
                reply.len(),
                reply
            )
            .unwrap();
            String::from_utf8(buf).unwrap()
        });
        let client = HttpChatClient::new(LlmSettings {
            endpoint: format!("http://{addr}/v1/chat/completions"),
            api_key: Some("secret".into()),
            model: "test-model".into(),
            timeout_secs: 10,
        });
        let text = client.complete(LabelRequest { hash: "h", prompt: "classify me" }).unwrap();
        assert_eq!(text, "negative");
        let raw = server.join().unwrap();
        assert!(raw.starts_with("POST /v1/chat/completions"));
        assert!(raw.to_lowercase().contains("authorization: bearer secret"));
        let body: Value = serde_json::from_str(&raw[raw.find("\r\n\r\n").unwrap() + 4..]).unwrap();
        assert_eq!(body, chat_request_body("test-model", "classify me"));
    }
}
