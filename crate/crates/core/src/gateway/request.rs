use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

/// Decoding settings for machine translation: greedy search, at most 40 new tokens.
pub const TRANSLATE_MAX_NEW_TOKENS: u32 = 40;
pub const TRANSLATE_DECODING: &str = "greedy";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Capability {
    Translate,
    Chat,
    EmbedText,
    EmbedImage,
}

impl Capability {
    pub fn as_str(self) -> &'static str {
        match self {
            Capability::Translate => "translate",
            Capability::Chat => "chat",
            Capability::EmbedText => "embed_text",
            Capability::EmbedImage => "embed_image",
        }
    }

    /// Path segment of the backend route (`POST /v1/{endpoint}`).
    pub fn endpoint(self) -> &'static str {
        match self {
            Capability::Translate => "translate",
            Capability::Chat => "chat",
            Capability::EmbedText | Capability::EmbedImage => "embed",
        }
    }
}

impl fmt::Display for Capability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderRequest {
    pub capability: Capability,
    pub payload: Value,
    pub request_key: String,
}

impl ProviderRequest {
    pub fn new(capability: Capability, payload: Value) -> Self {
        let request_key = request_key(capability, &payload);
        Self {
            capability,
            payload,
            request_key,
        }
    }

    pub fn translate(src_lang: &str, tgt_lang: &str, text: &str) -> Self {
        Self::new(
            Capability::Translate,
            json!({
                "src_lang": src_lang,
                "tgt_lang": tgt_lang,
                "text": text,
                "max_new_tokens": TRANSLATE_MAX_NEW_TOKENS,
                "decoding": TRANSLATE_DECODING,
            }),
        )
    }

    /// `attempt` > 0 marks a retry after an unparseable reply; it changes the key
    /// so the retry is not served from cache.
    pub fn chat(system: &str, user: &str, attempt: u32) -> Self {
        let mut payload = json!({ "system": system, "user": user });
        if attempt > 0 {
            payload["attempt"] = json!(attempt);
        }
        Self::new(Capability::Chat, payload)
    }

    pub fn embed_text(text: &str) -> Self {
        Self::new(Capability::EmbedText, json!({ "text": text }))
    }

    pub fn embed_image(image_id: &str) -> Self {
        Self::new(Capability::EmbedImage, json!({ "image_id": image_id }))
    }
}

/// Compact JSON with object keys sorted recursively.
pub fn canonical_json(value: &Value) -> String {
    let mut out = String::new();
    write_canonical(value, &mut out);
    out
}

fn write_canonical(value: &Value, out: &mut String) {
    match value {
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push('{');
            for (i, k) in keys.into_iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&Value::String(k.clone()).to_string());
                out.push(':');
                write_canonical(&map[k], out);
            }
            out.push('}');
        }
        Value::Array(items) => {
            out.push('[');
            for (i, v) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_canonical(v, out);
            }
            out.push(']');
        }
        scalar => out.push_str(&scalar.to_string()),
    }
}

/// SHA-256 (hex) of the canonical `{"capability", "payload"}` document.
pub fn request_key(capability: Capability, payload: &Value) -> String {
    let doc = json!({ "capability": capability.as_str(), "payload": payload });
    hex::encode(Sha256::digest(canonical_json(&doc).as_bytes()))
}
