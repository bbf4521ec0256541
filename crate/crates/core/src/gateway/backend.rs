//! Backends that answer provider requests.

use std::collections::HashMap;
use std::path::Path;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use super::cache::ProviderMeta;
use super::request::{request_key, Capability, ProviderRequest};
use crate::error::{read_to_string, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct BackendReply {
    pub body: Value,
    pub meta: ProviderMeta,
}

pub trait Backend: Send + Sync {
    fn name(&self) -> &str;

    /// Errors must be [`Error::Transport`] (retryable) or [`Error::Protocol`].
    fn call(&self, request: &ProviderRequest) -> Result<BackendReply>;
}

/// Serves recorded responses from a JSONL file of
/// `{"capability", "payload", "body", "meta"?}` lines.
#[derive(Debug, Clone, Default)]
pub struct FixtureBackend {
    recordings: HashMap<String, BackendReply>,
}

#[derive(Deserialize)]
struct Recording {
    capability: Capability,
    payload: Value,
    body: Value,
    #[serde(default)]
    meta: Option<ProviderMeta>,
}

impl FixtureBackend {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = read_to_string(path)?;
        let mut backend = Self::default();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let rec: Recording =
                serde_json::from_str(line).map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
            backend.record(rec.capability, rec.payload, rec.body, rec.meta);
        }
        Ok(backend)
    }

    /// Translate recordings may omit the decoding settings; the defaults are filled in.
    pub fn record(&mut self, capability: Capability, payload: Value, body: Value, meta: Option<ProviderMeta>) {
        let payload = match capability {
            Capability::Translate => {
                let p = ProviderRequest::translate(
                    payload["src_lang"].as_str().unwrap_or_default(),
                    payload["tgt_lang"].as_str().unwrap_or_default(),
                    payload["text"].as_str().unwrap_or_default(),
                )
                .payload;
                merge(p, payload)
            }
            _ => payload,
        };
        let meta = meta.unwrap_or_else(|| ProviderMeta {
            backend_name: "fixture".into(),
            model_name: "recorded".into(),
            settings: Value::Null,
        });
        self.recordings
            .insert(request_key(capability, &payload), BackendReply { body, meta });
    }

    pub fn len(&self) -> usize {
        self.recordings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.recordings.is_empty()
    }
}

fn merge(mut base: Value, overlay: Value) -> Value {
    if let (Some(b), Value::Object(o)) = (base.as_object_mut(), overlay) {
        for (k, v) in o {
            b.insert(k, v);
        }
    }
    base
}

impl Backend for FixtureBackend {
    fn name(&self) -> &str {
        "fixture"
    }

    fn call(&self, request: &ProviderRequest) -> Result<BackendReply> {
        self.recordings
            .get(&request.request_key)
            .cloned()
            .ok_or_else(|| {
                Error::Transport(format!(
                    "fixture has no recording for {} request {}",
                    request.capability, request.request_key
                ))
            })
    }
}

/// Deterministic offline stand-in for the real models.
///
/// Translation tags the text with the target language, chat returns a
/// lightly reworded caption in the shape each prompt asks for, and
/// embeddings are hashed bag-of-words (text) or seeded random unit vectors
/// (images).
#[derive(Debug, Clone)]
pub struct SyntheticBackend {
    pub dim: usize,
}

impl Default for SyntheticBackend {
    fn default() -> Self {
        Self { dim: 16 }
    }
}

impl SyntheticBackend {
    fn meta(&self, settings: Value) -> ProviderMeta {
        ProviderMeta {
            backend_name: "synthetic".into(),
            model_name: "synthetic-v1".into(),
            settings,
        }
    }

    fn translate(payload: &Value) -> Result<String> {
        let text = str_field(payload, "text")?;
        let src = str_field(payload, "src_lang")?;
        let tgt = str_field(payload, "tgt_lang")?;
        let src_tag = format!("[{src}] ");
        let stripped = text.strip_prefix(&src_tag).unwrap_or(text);
        Ok(format!("[{tgt}] {stripped}"))
    }

    fn chat(payload: &Value) -> Result<String> {
        let user = str_field(payload, "user")?;
        if user.contains("<final></final>") {
            let example = user
                .split_once("for the example:")
                .and_then(|(_, rest)| rest.lines().map(str::trim).find(|l| !l.is_empty()))
                .map(|l| l.trim_matches('"').to_string())
                .ok_or_else(|| Error::Protocol("prompt has no example caption".into()))?;
            Ok(format!(
                "1) Noun Phrases: [...]\n2) New Noun Phrases: [...]\n3) <final>Shown here: {}.</final>",
                lowercase_first(example.trim_end_matches('.'))
            ))
        } else {
            let caption = user.lines().last().unwrap_or_default().trim();
            Ok(format!("\"In this picture, {}\"", lowercase_first(caption)))
        }
    }

    fn embed_text(&self, text: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        for tok in crate::text::tokenize(text) {
            if tok.norm.is_empty() {
                continue;
            }
            let h = Sha256::digest(tok.norm.as_bytes());
            let idx = u64::from_le_bytes(h[..8].try_into().unwrap()) as usize % self.dim;
            let sign = if h[8] & 1 == 0 { 1.0 } else { -1.0 };
            v[idx] += sign;
        }
        if v.iter().all(|x| *x == 0.0) {
            v[0] = 1.0;
        }
        v
    }

    fn embed_image(&self, image_id: &str) -> Vec<f64> {
        let seed: [u8; 32] = Sha256::digest(image_id.as_bytes()).into();
        let mut rng = ChaCha8Rng::from_seed(seed);
        (0..self.dim).map(|_| rng.random_range(-1.0..1.0)).collect()
    }
}

fn lowercase_first(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) => c.to_lowercase().chain(chars).collect(),
        None => String::new(),
    }
}

fn str_field<'a>(payload: &'a Value, key: &str) -> Result<&'a str> {
    payload[key]
        .as_str()
        .ok_or_else(|| Error::Protocol(format!("payload is missing string field {key:?}")))
}

impl Backend for SyntheticBackend {
    fn name(&self) -> &str {
        "synthetic"
    }

    fn call(&self, request: &ProviderRequest) -> Result<BackendReply> {
        let p = &request.payload;
        let (body, settings) = match request.capability {
            Capability::Translate => (
                json!({ "text": Self::translate(p)? }),
                json!({ "max_new_tokens": p["max_new_tokens"], "decoding": p["decoding"] }),
            ),
            Capability::Chat => (json!({ "text": Self::chat(p)? }), json!({ "decoding": "default" })),
            Capability::EmbedText => (json!({ "vector": self.embed_text(str_field(p, "text")?) }), Value::Null),
            Capability::EmbedImage => (json!({ "vector": self.embed_image(str_field(p, "image_id")?) }), Value::Null),
        };
        Ok(BackendReply {
            body,
            meta: self.meta(settings),
        })
    }
}

/// Talks to a model server over `POST {base}/v1/{translate|chat|embed}`.
///
/// Requests carry the canonical payload as the JSON body; replies are
/// `{"body": ..., "meta": {...}}`. A bearer token is sent when configured.
pub struct HttpBackend {
    base_url: String,
    token: Option<String>,
    agent: ureq::Agent,
}

#[derive(Deserialize)]
struct WireReply {
    body: Value,
    #[serde(default)]
    meta: Option<WireMeta>,
}

#[derive(Deserialize)]
struct WireMeta {
    #[serde(default)]
    backend_name: Option<String>,
    #[serde(default)]
    model_name: Option<String>,
    #[serde(default)]
    settings: Value,
}

impl HttpBackend {
    pub fn new(base_url: impl Into<String>, token: Option<String>, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            token,
            agent,
        }
    }

    /// Reads the bearer token from `PROVIDER_TOKEN`.
    pub fn from_env(base_url: impl Into<String>, timeout: Duration) -> Self {
        Self::new(base_url, std::env::var("PROVIDER_TOKEN").ok(), timeout)
    }
}

impl Backend for HttpBackend {
    fn name(&self) -> &str {
        "http"
    }

    fn call(&self, request: &ProviderRequest) -> Result<BackendReply> {
        let url = format!("{}/v1/{}", self.base_url, request.capability.endpoint());
        let mut req = self.agent.post(&url).header("Content-Type", "application/json");
        if let Some(t) = &self.token {
            req = req.header("Authorization", &format!("Bearer {t}"));
        }
        let mut resp = req
            .send(super::request::canonical_json(&request.payload).as_bytes())
            .map_err(|e| Error::Transport(format!("{url}: {e}")))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| Error::Transport(format!("{url}: reading body: {e}")))?;
        match status {
            200..=299 => {}
            500..=599 => return Err(Error::Transport(format!("{url}: status {status}: {text}"))),
            _ => return Err(Error::Protocol(format!("{url}: status {status}: {text}"))),
        }
        let reply: WireReply =
            serde_json::from_str(&text).map_err(|e| Error::Protocol(format!("{url}: malformed reply: {e}")))?;
        let meta = reply.meta.unwrap_or(WireMeta {
            backend_name: None,
            model_name: None,
            settings: Value::Null,
        });
        Ok(BackendReply {
            body: reply.body,
            meta: ProviderMeta {
                backend_name: meta.backend_name.unwrap_or_else(|| self.base_url.clone()),
                model_name: meta.model_name.unwrap_or_default(),
                settings: meta.settings,
            },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixture_fills_translation_settings() {
        let mut f = FixtureBackend::default();
        f.record(
            Capability::Translate,
            json!({"src_lang": "en", "tgt_lang": "de", "text": "A dog runs."}),
            json!({"text": "Ein Hund rennt."}),
            None,
        );
        let reply = f.call(&ProviderRequest::translate("en", "de", "A dog runs.")).unwrap();
        assert_eq!(reply.body["text"], "Ein Hund rennt.");
        assert!(f.call(&ProviderRequest::translate("en", "de", "A cat.")).unwrap_err().is_transport());
    }

    #[test]
    fn synthetic_translation_round_trips_tags() {
        let b = SyntheticBackend::default();
        let de = b.call(&ProviderRequest::translate("en", "de", "A dog.")).unwrap();
        assert_eq!(de.body["text"], "[de] A dog.");
        let back = b
            .call(&ProviderRequest::translate("de", "en", de.body["text"].as_str().unwrap()))
            .unwrap();
        assert_eq!(back.body["text"], "[en] A dog.");
    }

    #[test]
    fn synthetic_embeddings_are_deterministic() {
        let b = SyntheticBackend { dim: 8 };
        let a1 = b.call(&ProviderRequest::embed_image("1.jpg")).unwrap();
        let a2 = b.call(&ProviderRequest::embed_image("1.jpg")).unwrap();
        assert_eq!(a1, a2);
        assert_eq!(a1.body["vector"].as_array().unwrap().len(), 8);
        let t = b.call(&ProviderRequest::embed_text("")).unwrap();
        assert_eq!(t.body["vector"][0], 1.0);
    }
}
