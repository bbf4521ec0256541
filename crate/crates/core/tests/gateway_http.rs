//! Wire-protocol tests against a scripted HTTP server on localhost.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde_json::{json, Value};
use xlcap::gateway::{Backend, Capability, EmbedItem, FixtureBackend, HttpBackend, RetryPolicy};
use xlcap::{CacheStore, Gateway, ProviderRequest};

#[derive(Debug, Clone)]
struct Seen {
    method: String,
    path: String,
    auth: Option<String>,
    body: String,
}

type Reply = (u16, String);

/// Serves scripted replies in order, then repeats the last one.
struct Server {
    url: String,
    seen: Arc<Mutex<Vec<Seen>>>,
}

impl Server {
    fn start(replies: Vec<Reply>) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}", listener.local_addr().unwrap());
        let seen = Arc::new(Mutex::new(Vec::new()));
        let log = seen.clone();
        std::thread::spawn(move || {
            for (n, stream) in listener.incoming().enumerate() {
                let mut stream = stream.unwrap();
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                let mut parts = line.split_whitespace();
                let method = parts.next().unwrap_or_default().to_string();
                let path = parts.next().unwrap_or_default().to_string();
                let (mut len, mut auth) = (0, None);
                loop {
                    let mut h = String::new();
                    reader.read_line(&mut h).unwrap();
                    let h = h.trim_end();
                    if h.is_empty() {
                        break;
                    }
                    let (name, value) = h.split_once(':').unwrap();
                    match name.to_ascii_lowercase().as_str() {
                        "content-length" => len = value.trim().parse().unwrap(),
                        "authorization" => auth = Some(value.trim().to_string()),
                        _ => {}
                    }
                }
                let mut body = vec![0; len];
                reader.read_exact(&mut body).unwrap();
                log.lock().unwrap().push(Seen {
                    method,
                    path,
                    auth,
                    body: String::from_utf8(body).unwrap(),
                });
                let (status, text) = &replies[n.min(replies.len() - 1)];
                let _ = write!(
                    stream,
                    "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{text}",
                    text.len()
                );
            }
        });
        Self { url, seen }
    }

    fn seen(&self) -> Vec<Seen> {
        self.seen.lock().unwrap().clone()
    }
}

fn ok(body: Value) -> Reply {
    (200, json!({"body": body, "meta": {"backend_name": "mini", "model_name": "m-1", "settings": {"decoding": "greedy"}}}).to_string())
}

fn gateway(server: &Server, cache: &std::path::Path) -> Gateway {
    let backend = HttpBackend::new(server.url.clone(), Some("secret".into()), Duration::from_secs(5));
    Gateway::new(CacheStore::new(cache), Some(Arc::new(backend))).with_retry(RetryPolicy {
        max_retries: 1,
        base_delay: Duration::from_millis(1),
    })
}

#[test]
fn translate_posts_canonical_payload_and_caches() {
    let server = Server::start(vec![ok(json!({"text": "Ein Hund rennt."}))]);
    let dir = tempfile::tempdir().unwrap();
    let g = gateway(&server, dir.path());
    let (text, resp) = g.translate("A dog runs.", "en", "de").unwrap();
    assert_eq!(text, "Ein Hund rennt.");
    assert_eq!(resp.provider_meta.model_name, "m-1");
    let (again, _) = g.translate("A dog runs.", "en", "de").unwrap();
    assert_eq!(again, text);

    let seen = server.seen();
    assert_eq!(seen.len(), 1);
    assert_eq!(seen[0].method, "POST");
    assert_eq!(seen[0].path, "/v1/translate");
    assert_eq!(seen[0].auth.as_deref(), Some("Bearer secret"));
    assert_eq!(
        seen[0].body,
        r#"{"decoding":"greedy","max_new_tokens":40,"src_lang":"en","text":"A dog runs.","tgt_lang":"de"}"#
    );

    let key = &resp.request_key;
    let entry = dir.path().join("translate").join(&key[..2]).join(format!("{key}.json"));
    assert!(entry.exists(), "{}", entry.display());
}

#[test]
fn both_embedding_kinds_use_the_embed_route() {
    let server = Server::start(vec![ok(json!({"vector": [0.6, 0.8]}))]);
    let dir = tempfile::tempdir().unwrap();
    let g = gateway(&server, dir.path());
    let texts = g
        .embed_batch(&[EmbedItem::Text {
            id: "c1".into(),
            text: "A dog.".into(),
        }])
        .unwrap();
    let images = g.embed_batch(&[EmbedItem::Image { image_id: "1.jpg".into() }]).unwrap();
    assert_eq!((texts.dim(), images.dim()), (2, 2));
    let seen = server.seen();
    assert_eq!(seen.len(), 2);
    assert!(seen.iter().all(|s| s.path == "/v1/embed"));
    assert_eq!(seen[0].body, r#"{"text":"A dog."}"#);
    assert_eq!(seen[1].body, r#"{"image_id":"1.jpg"}"#);
}

#[test]
fn server_errors_are_retried_once() {
    let server = Server::start(vec![(503, "busy".into()), ok(json!({"text": "fine"}))]);
    let dir = tempfile::tempdir().unwrap();
    let g = gateway(&server, dir.path());
    let (text, _) = g.chat("sys", "user", 0).unwrap();
    assert_eq!(text, "fine");
    assert_eq!(server.seen().len(), 2);
    assert_eq!(server.seen()[1].path, "/v1/chat");
}

#[test]
fn persistent_server_errors_fail_as_transport() {
    let server = Server::start(vec![(500, "down".into())]);
    let dir = tempfile::tempdir().unwrap();
    let err = gateway(&server, dir.path()).chat("s", "u", 0).unwrap_err();
    assert!(err.is_transport(), "{err}");
    assert_eq!(server.seen().len(), 2);
    assert!(CacheStore::new(dir.path()).is_empty());
}

#[test]
fn client_errors_and_bad_bodies_are_protocol_errors() {
    for reply in [
        (400, r#"{"error":"bad request"}"#.to_string()),
        (200, "not json".to_string()),
        ok(json!({"wrong": 1})),
    ] {
        let server = Server::start(vec![reply]);
        let dir = tempfile::tempdir().unwrap();
        let err = gateway(&server, dir.path()).chat("s", "u", 0).unwrap_err();
        assert!(!err.is_transport(), "{err}");
        assert_eq!(server.seen().len(), 1, "protocol errors are not retried");
        assert!(CacheStore::new(dir.path()).is_empty());
    }
}

#[test]
fn unreachable_endpoint_is_transport_error() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let backend = HttpBackend::new(format!("http://127.0.0.1:{port}"), None, Duration::from_secs(2));
    let err = backend.call(&ProviderRequest::embed_text("x")).unwrap_err();
    assert!(err.is_transport(), "{err}");
}

#[test]
fn recorded_fixture_replies() {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("data/fixtures/recordings.jsonl");
    let backend = FixtureBackend::load(&path).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let g = Gateway::new(CacheStore::new(dir.path()), Some(Arc::new(backend)));
    let out = g
        .translate_batch(&["A dog runs.".to_string(), "Two dogs play.".to_string()], "en", "de")
        .unwrap();
    assert_eq!(out, ["Ein Hund rennt.", "Zwei Hunde spielen."]);
    let (_, resp) = g.translate("A dog runs.", "en", "de").unwrap();
    assert_eq!(resp.provider_meta.model_name, "opus-mt-en-de");
    assert_eq!(resp.capability, Capability::Translate);
    assert!(g.translate("Unrecorded.", "en", "de").unwrap_err().is_transport());

    let replay = Gateway::replay(CacheStore::new(dir.path()));
    assert_eq!(replay.translate("Two dogs play.", "en", "de").unwrap().0, "Zwei Hunde spielen.");
    assert_eq!(replay.backend_calls(), 0);
}
