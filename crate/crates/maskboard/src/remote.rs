//! Embedding provider backed by a JSON-over-HTTPS embeddings endpoint.
//!
//! Request: `{"model": M, "input": [text, ...]}` with an
//! `Authorization: Bearer KEY` header. Response:
//! `{"data": [{"index": i, "embedding": [f, ...]}, ...]}`.

use std::time::Duration;

use maskboard_core::explore::EmbeddingProvider;
use maskboard_core::Error as CoreError;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

/// Environment variable holding the API key.
pub const KEY_VAR: &str = "MASKBOARD_EMBED_KEY";

/// Carries one request to the endpoint. Errors are plain messages; the
/// provider reports them as "provider unavailable".
pub trait Transport: Send + Sync {
    fn post_json(&self, url: &str, key: &str, body: &Value) -> Result<Value, String>;
}

pub struct HttpTransport {
    agent: ureq::Agent,
}

impl HttpTransport {
    pub fn new(timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self { agent }
    }
}

impl Default for HttpTransport {
    fn default() -> Self {
        Self::new(Duration::from_secs(60))
    }
}

impl Transport for HttpTransport {
    fn post_json(&self, url: &str, key: &str, body: &Value) -> Result<Value, String> {
        let mut resp = self
            .agent
            .post(url)
            .header("Authorization", &format!("Bearer {key}"))
            .send_json(body)
            .map_err(|e| format!("request to {url} failed: {e}"))?;
        let status = resp.status();
        if !status.is_success() {
            let text = resp.body_mut().read_to_string().unwrap_or_default();
            return Err(format!("{url} answered {status}: {}", text.chars().take(200).collect::<String>()));
        }
        resp.body_mut()
            .read_json::<Value>()
            .map_err(|e| format!("unreadable response from {url}: {e}"))
    }
}

/// Remote endpoint settings; stored with each index so a later search embeds
/// theme phrases the same way. The key is never stored.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RemoteConfig {
    pub url: String,
    pub model: String,
    pub dimension: usize,
}

impl RemoteConfig {
    pub fn validate(&self) -> Result<(), CoreError> {
        let loopback_http = ["http://127.0.0.1", "http://localhost", "http://[::1]"]
            .iter()
            .any(|p| self.url.starts_with(p));
        if !self.url.starts_with("https://") && !loopback_http {
            return Err(CoreError::Invalid(format!(
                "embedding endpoint must use https (plain http only on loopback): {}",
                self.url
            )));
        }
        if self.model.is_empty() || self.dimension == 0 {
            return Err(CoreError::Invalid("remote provider needs a model name and a dimension".into()));
        }
        Ok(())
    }

    pub fn provider_id(&self) -> String {
        format!("remote:{}:{}", self.model, self.dimension)
    }
}

pub struct RemoteProvider {
    id: String,
    config: RemoteConfig,
    key: String,
    transport: Box<dyn Transport>,
}

impl std::fmt::Debug for RemoteProvider {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteProvider").field("config", &self.config).finish_non_exhaustive()
    }
}

impl RemoteProvider {
    pub fn new(config: RemoteConfig, key: String, transport: Box<dyn Transport>) -> Result<Self, CoreError> {
        config.validate()?;
        Ok(Self {
            id: config.provider_id(),
            config,
            key,
            transport,
        })
    }

    /// Reads the key from the environment and talks HTTP(S).
    pub fn from_env(config: RemoteConfig) -> Result<Self, CoreError> {
        let key = std::env::var(KEY_VAR)
            .ok()
            .filter(|k| !k.is_empty())
            .ok_or_else(|| CoreError::Provider(format!("{KEY_VAR} is not set")))?;
        Self::new(config, key, Box::new(HttpTransport::default()))
    }
}

#[derive(Deserialize)]
struct Row {
    index: Option<usize>,
    embedding: Vec<f64>,
}

#[derive(Deserialize)]
struct Response {
    data: Vec<Row>,
}

impl EmbeddingProvider for RemoteProvider {
    fn id(&self) -> &str {
        &self.id
    }

    fn dimension(&self) -> usize {
        self.config.dimension
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, CoreError> {
        let body = json!({ "model": self.config.model, "input": texts });
        let value = self
            .transport
            .post_json(&self.config.url, &self.key, &body)
            .map_err(CoreError::Provider)?;
        let resp: Response = serde_json::from_value(value)
            .map_err(|e| CoreError::Provider(format!("unexpected response shape: {e}")))?;
        if resp.data.len() != texts.len() {
            return Err(CoreError::Provider(format!(
                "asked for {} embeddings, got {}",
                texts.len(),
                resp.data.len()
            )));
        }
        let mut out = vec![Vec::new(); texts.len()];
        for (pos, row) in resp.data.into_iter().enumerate() {
            let i = row.index.unwrap_or(pos);
            if i >= out.len() || !out[i].is_empty() {
                return Err(CoreError::Provider(format!("bad or repeated row index {i}")));
            }
            if row.embedding.len() != self.config.dimension {
                return Err(CoreError::Provider(format!(
                    "embedding has dimension {}, expected {}",
                    row.embedding.len(),
                    self.config.dimension
                )));
            }
            out[i] = row.embedding;
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Mutex;

    struct Canned {
        seen: Mutex<Vec<Value>>,
        reply: fn(&Value) -> Result<Value, String>,
    }

    impl Transport for Canned {
        fn post_json(&self, _url: &str, key: &str, body: &Value) -> Result<Value, String> {
            assert_eq!(key, "k");
            self.seen.lock().unwrap().push(body.clone());
            (self.reply)(body)
        }
    }

    fn config() -> RemoteConfig {
        RemoteConfig {
            url: "https://embed.example/v1/embeddings".into(),
            model: "m".into(),
            dimension: 2,
        }
    }

    fn provider(reply: fn(&Value) -> Result<Value, String>) -> RemoteProvider {
        let t = Canned {
            seen: Mutex::new(Vec::new()),
            reply,
        };
        RemoteProvider::new(config(), "k".into(), Box::new(t)).unwrap()
    }

    #[test]
    fn rows_are_reordered_by_index() {
        let p = provider(|_| Ok(json!({"data": [{"index": 1, "embedding": [0.0, 1.0]}, {"index": 0, "embedding": [1.0, 0.0]}]})));
        let v = p.embed(&["a".into(), "b".into()]).unwrap();
        assert_eq!(v, [vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert_eq!(p.id(), "remote:m:2");
    }

    #[test]
    fn shape_errors_are_provider_errors() {
        let short = provider(|_| Ok(json!({"data": [{"embedding": [1.0, 0.0]}]})));
        assert!(matches!(short.embed(&["a".into(), "b".into()]), Err(CoreError::Provider(_))));
        let wrong_dim = provider(|_| Ok(json!({"data": [{"embedding": [1.0]}]})));
        assert!(matches!(wrong_dim.embed(&["a".into()]), Err(CoreError::Provider(_))));
        let down = provider(|_| Err("connection refused".into()));
        assert!(matches!(down.embed(&["a".into()]), Err(CoreError::Provider(m)) if m.contains("refused")));
    }

    #[test]
    fn plain_http_only_on_loopback() {
        let mut c = config();
        c.url = "http://embed.example/v1".into();
        assert!(c.validate().is_err());
        c.url = "http://127.0.0.1:9000/v1".into();
        assert!(c.validate().is_ok());
    }
}
