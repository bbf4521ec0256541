//! Cached, replayable access to translation, chat and embedding backends.
//!
//! Every call is keyed by a content hash of its canonical payload. A cache
//! hit never touches the backend; a miss calls the backend once, validates
//! the reply, persists it, then returns it. Without a backend the gateway
//! runs in replay mode and a miss is a transport error.

mod backend;
mod cache;
mod request;

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use serde_json::Value;

pub use backend::{Backend, BackendReply, FixtureBackend, HttpBackend, SyntheticBackend};
pub use cache::{CacheStore, ProviderMeta, ProviderResponse};
pub use request::{canonical_json, request_key, Capability, ProviderRequest, TRANSLATE_DECODING, TRANSLATE_MAX_NEW_TOKENS};

use crate::error::{Error, Result};
use crate::retrieval::EmbeddingTable;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    /// Extra attempts after a transport failure. Protocol failures are never retried.
    pub max_retries: u32,
    /// Delay before the first retry; doubles on each further retry.
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 1,
            base_delay: Duration::from_millis(200),
        }
    }
}

/// Counting semaphore bounding concurrent backend calls.
#[derive(Debug)]
struct Limiter {
    available: Mutex<usize>,
    freed: Condvar,
}

impl Limiter {
    fn new(limit: usize) -> Self {
        Self {
            available: Mutex::new(limit.max(1)),
            freed: Condvar::new(),
        }
    }

    fn run<T>(&self, f: impl FnOnce() -> T) -> T {
        {
            let mut n = self.available.lock().unwrap();
            while *n == 0 {
                n = self.freed.wait(n).unwrap();
            }
            *n -= 1;
        }
        let out = f();
        *self.available.lock().unwrap() += 1;
        self.freed.notify_one();
        out
    }
}

pub struct Gateway {
    cache: CacheStore,
    backend: Option<Arc<dyn Backend>>,
    retry: RetryPolicy,
    limiter: Limiter,
    max_in_flight: usize,
    key_locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
    backend_calls: AtomicUsize,
    cache_hits: AtomicUsize,
}

/// One item for [`Gateway::embed_batch`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EmbedItem {
    Text { id: String, text: String },
    Image { image_id: String },
}

impl EmbedItem {
    fn id(&self) -> &str {
        match self {
            EmbedItem::Text { id, .. } => id,
            EmbedItem::Image { image_id } => image_id,
        }
    }

    fn request(&self) -> ProviderRequest {
        match self {
            EmbedItem::Text { text, .. } => ProviderRequest::embed_text(text),
            EmbedItem::Image { image_id } => ProviderRequest::embed_image(image_id),
        }
    }
}

impl Gateway {
    pub fn new(cache: CacheStore, backend: Option<Arc<dyn Backend>>) -> Self {
        Self {
            cache,
            backend,
            retry: RetryPolicy::default(),
            limiter: Limiter::new(4),
            max_in_flight: 4,
            key_locks: Mutex::new(HashMap::new()),
            backend_calls: AtomicUsize::new(0),
            cache_hits: AtomicUsize::new(0),
        }
    }

    /// Replay mode: only cached responses are served.
    pub fn replay(cache: CacheStore) -> Self {
        Self::new(cache, None)
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_max_in_flight(mut self, limit: usize) -> Self {
        self.limiter = Limiter::new(limit);
        self.max_in_flight = limit.max(1);
        self
    }

    pub fn cache(&self) -> &CacheStore {
        &self.cache
    }

    pub fn backend_calls(&self) -> usize {
        self.backend_calls.load(Ordering::SeqCst)
    }

    pub fn cache_hits(&self) -> usize {
        self.cache_hits.load(Ordering::SeqCst)
    }

    pub fn call(&self, request: &ProviderRequest) -> Result<ProviderResponse> {
        if let Some(hit) = self.cache.get(request.capability, &request.request_key)? {
            self.cache_hits.fetch_add(1, Ordering::SeqCst);
            return Ok(hit);
        }
        let lock = {
            let mut locks = self.key_locks.lock().unwrap();
            locks.entry(request.request_key.clone()).or_default().clone()
        };
        let _guard = lock.lock().unwrap();
        // another worker may have filled the entry while we waited
        if let Some(hit) = self.cache.get(request.capability, &request.request_key)? {
            self.cache_hits.fetch_add(1, Ordering::SeqCst);
            return Ok(hit);
        }

        let backend = self.backend.as_ref().ok_or_else(|| {
            Error::Transport(format!(
                "replay mode: no cached response for {} request {}",
                request.capability, request.request_key
            ))
        })?;
        let reply = self.call_with_retry(backend.as_ref(), request)?;
        validate_body(request.capability, &reply.body)?;
        let response = ProviderResponse {
            request_key: request.request_key.clone(),
            capability: request.capability,
            payload: request.payload.clone(),
            body: reply.body,
            provider_meta: reply.meta,
            timestamp: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or_default(),
        };
        self.cache.put(&response)?;
        Ok(response)
    }

    fn call_with_retry(&self, backend: &dyn Backend, request: &ProviderRequest) -> Result<BackendReply> {
        let mut attempt = 0;
        loop {
            self.backend_calls.fetch_add(1, Ordering::SeqCst);
            match self.limiter.run(|| backend.call(request)) {
                Err(e) if e.is_transport() && attempt < self.retry.max_retries => {
                    let delay = self.retry.base_delay * 2u32.saturating_pow(attempt);
                    log::warn!("{} request {} failed ({e}); retrying in {delay:?}", request.capability, request.request_key);
                    std::thread::sleep(delay);
                    attempt += 1;
                }
                other => return other,
            }
        }
    }

    /// Calls every request, at most `max_in_flight` at a time, preserving order.
    pub fn call_many(&self, requests: &[ProviderRequest]) -> Vec<Result<ProviderResponse>> {
        let next = AtomicUsize::new(0);
        let results: Vec<Mutex<Option<Result<ProviderResponse>>>> = requests.iter().map(|_| Mutex::new(None)).collect();
        let workers = self.max_in_flight.min(requests.len());
        std::thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    if i >= requests.len() {
                        break;
                    }
                    *results[i].lock().unwrap() = Some(self.call(&requests[i]));
                });
            }
        });
        results
            .into_iter()
            .map(|m| m.into_inner().unwrap().expect("every index visited"))
            .collect()
    }

    /// Order-preserving batch translation with greedy decoding and a 40-token cap.
    pub fn translate_batch(&self, texts: &[String], src: &str, tgt: &str) -> Result<Vec<String>> {
        let requests: Vec<_> = texts.iter().map(|t| ProviderRequest::translate(src, tgt, t)).collect();
        let mut out = Vec::with_capacity(texts.len());
        let mut failed = Vec::new();
        let mut first_error = None;
        for (i, r) in self.call_many(&requests).into_iter().enumerate() {
            match r.and_then(|resp| body_text(&resp)) {
                Ok(t) => out.push(t),
                Err(e) => {
                    failed.push(i);
                    first_error.get_or_insert(e.to_string());
                }
            }
        }
        if failed.is_empty() {
            Ok(out)
        } else {
            Err(Error::Batch {
                indices: failed,
                message: first_error.unwrap_or_default(),
            })
        }
    }

    pub fn translate(&self, text: &str, src: &str, tgt: &str) -> Result<(String, ProviderResponse)> {
        let resp = self.call(&ProviderRequest::translate(src, tgt, text))?;
        Ok((body_text(&resp)?, resp))
    }

    pub fn chat(&self, system: &str, user: &str, attempt: u32) -> Result<(String, ProviderResponse)> {
        let resp = self.call(&ProviderRequest::chat(system, user, attempt))?;
        Ok((body_text(&resp)?, resp))
    }

    /// Embeds same-modality items into a table whose rows follow input order.
    pub fn embed_batch(&self, items: &[EmbedItem]) -> Result<EmbeddingTable> {
        let text = items.iter().filter(|i| matches!(i, EmbedItem::Text { .. })).count();
        if text != 0 && text != items.len() {
            return Err(Error::Precondition("embed batch mixes text and image items".into()));
        }
        let requests: Vec<_> = items.iter().map(EmbedItem::request).collect();
        let mut ids = Vec::with_capacity(items.len());
        let mut rows = Vec::with_capacity(items.len());
        let mut dim = None;
        for (item, r) in items.iter().zip(self.call_many(&requests)) {
            let vector = body_vector(&r?)?;
            match dim {
                None => dim = Some(vector.len()),
                Some(d) if d != vector.len() => {
                    return Err(Error::Protocol(format!(
                        "embedding for {} has dimension {}, expected {d}",
                        item.id(),
                        vector.len()
                    )))
                }
                Some(_) => {}
            }
            ids.push(item.id().to_string());
            rows.push(vector);
        }
        EmbeddingTable::from_rows(ids, rows, dim.unwrap_or(0))
    }
}

fn validate_body(capability: Capability, body: &Value) -> Result<()> {
    match capability {
        Capability::Translate | Capability::Chat => body["text"].as_str().map(|_| ()).ok_or_else(|| {
            Error::Protocol(format!("{capability} reply body lacks a string \"text\" field"))
        }),
        Capability::EmbedText | Capability::EmbedImage => {
            let ok = body["vector"]
                .as_array()
                .is_some_and(|v| !v.is_empty() && v.iter().all(Value::is_number));
            if ok {
                Ok(())
            } else {
                Err(Error::Protocol(format!(
                    "{capability} reply body lacks a non-empty numeric \"vector\""
                )))
            }
        }
    }
}

fn body_text(resp: &ProviderResponse) -> Result<String> {
    resp.body["text"]
        .as_str()
        .map(String::from)
        .ok_or_else(|| Error::Protocol(format!("response {} has no text", resp.request_key)))
}

fn body_vector(resp: &ProviderResponse) -> Result<Vec<f64>> {
    resp.body["vector"]
        .as_array()
        .and_then(|v| v.iter().map(Value::as_f64).collect())
        .ok_or_else(|| Error::Protocol(format!("response {} has no vector", resp.request_key)))
}
