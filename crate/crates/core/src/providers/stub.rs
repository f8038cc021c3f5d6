//! Local HTTP server that exposes in-process doubles over the embeddings,
//! chat-completions and rerank wire shapes. Used to exercise the HTTP
//! adapters without network access.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;

use parking_lot::Mutex;
use serde_json::{json, Value};

use super::{ChatParams, ChatPort, EmbedderPort, RerankerPort};

/// One request as seen by the stub.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordedRequest {
    pub path: String,
    pub authorization: Option<String>,
    pub body: Value,
}

#[derive(Default)]
struct Ports {
    embedder: Option<Arc<dyn EmbedderPort>>,
    chat: Option<Arc<dyn ChatPort>>,
    reranker: Option<Arc<dyn RerankerPort>>,
    required_key: Option<String>,
    fail_first: usize,
}

#[derive(Default)]
pub struct StubProviderServer {
    ports: Ports,
}

impl StubProviderServer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn embedder(mut self, port: Arc<dyn EmbedderPort>) -> Self {
        self.ports.embedder = Some(port);
        self
    }

    pub fn chat(mut self, port: Arc<dyn ChatPort>) -> Self {
        self.ports.chat = Some(port);
        self
    }

    pub fn reranker(mut self, port: Arc<dyn RerankerPort>) -> Self {
        self.ports.reranker = Some(port);
        self
    }

    /// Requests without `Authorization: Bearer <key>` get 401.
    pub fn require_key(mut self, key: impl Into<String>) -> Self {
        self.ports.required_key = Some(key.into());
        self
    }

    /// The first `n` requests get 503.
    pub fn fail_first(mut self, n: usize) -> Self {
        self.ports.fail_first = n;
        self
    }

    pub fn start(self) -> std::io::Result<RunningStub> {
        let listener = TcpListener::bind("127.0.0.1:0")?;
        let addr = listener.local_addr()?;
        let shared = Arc::new(Shared {
            ports: self.ports,
            requests: Mutex::new(Vec::new()),
            served: AtomicUsize::new(0),
            stop: AtomicBool::new(false),
        });
        let worker = {
            let shared = shared.clone();
            std::thread::spawn(move || {
                for stream in listener.incoming() {
                    if shared.stop.load(Ordering::SeqCst) {
                        break;
                    }
                    let Ok(stream) = stream else { continue };
                    let shared = shared.clone();
                    std::thread::spawn(move || {
                        let _ = shared.handle(stream);
                    });
                }
            })
        };
        Ok(RunningStub {
            addr,
            shared,
            worker: Some(worker),
        })
    }
}

struct Shared {
    ports: Ports,
    requests: Mutex<Vec<RecordedRequest>>,
    served: AtomicUsize,
    stop: AtomicBool,
}

impl Shared {
    fn handle(&self, stream: TcpStream) -> std::io::Result<()> {
        let mut reader = BufReader::new(stream.try_clone()?);
        let mut line = String::new();
        reader.read_line(&mut line)?;
        let path = line.split_whitespace().nth(1).unwrap_or("/").to_string();
        let mut length = 0usize;
        let mut authorization = None;
        loop {
            let mut header = String::new();
            if reader.read_line(&mut header)? == 0 || header.trim().is_empty() {
                break;
            }
            if let Some((name, value)) = header.split_once(':') {
                let value = value.trim().to_string();
                if name.eq_ignore_ascii_case("content-length") {
                    length = value.parse().unwrap_or(0);
                } else if name.eq_ignore_ascii_case("authorization") {
                    authorization = Some(value);
                }
            }
        }
        let mut raw = vec![0u8; length];
        reader.read_exact(&mut raw)?;
        let body: Value = serde_json::from_slice(&raw).unwrap_or(Value::Null);
        self.requests.lock().push(RecordedRequest {
            path: path.clone(),
            authorization: authorization.clone(),
            body: body.clone(),
        });

        let n = self.served.fetch_add(1, Ordering::SeqCst);
        let (status, payload) = if n < self.ports.fail_first {
            (503, json!({ "error": "warming up" }))
        } else if self
            .ports
            .required_key
            .as_ref()
            .is_some_and(|k| authorization.as_deref() != Some(format!("Bearer {k}").as_str()))
        {
            (401, json!({ "error": "bad key" }))
        } else {
            self.dispatch(&path, &body)
        };
        write_response(stream, status, &payload)
    }

    fn dispatch(&self, path: &str, body: &Value) -> (u16, Value) {
        let strings = |v: &Value| -> Vec<String> {
            match v {
                Value::String(s) => vec![s.clone()],
                Value::Array(items) => items.iter().filter_map(|i| i.as_str().map(String::from)).collect(),
                _ => Vec::new(),
            }
        };
        let failure = |e: super::ProviderError| (503, json!({ "error": e.to_string() }));
        if path.ends_with("/embeddings") {
            let Some(port) = &self.ports.embedder else { return (404, json!({})) };
            match port.embed(&strings(&body["input"])) {
                Ok(vectors) => {
                    let data: Vec<Value> = vectors
                        .into_iter()
                        .enumerate()
                        .map(|(i, v)| json!({ "index": i, "embedding": v }))
                        .collect();
                    (200, json!({ "data": data }))
                }
                Err(e) => failure(e),
            }
        } else if path.ends_with("/chat/completions") {
            let Some(port) = &self.ports.chat else { return (404, json!({})) };
            let prompt = body["messages"]
                .as_array()
                .and_then(|m| m.last())
                .and_then(|m| m["content"].as_str())
                .unwrap_or("");
            match port.complete(prompt, &ChatParams::default()) {
                Ok(c) => (
                    200,
                    json!({
                        "choices": [{ "message": { "role": "assistant", "content": c.text } }],
                        "usage": { "prompt_tokens": c.input_tokens, "completion_tokens": c.output_tokens },
                    }),
                ),
                Err(e) => failure(e),
            }
        } else if path.ends_with("/rerank") {
            let Some(port) = &self.ports.reranker else { return (404, json!({})) };
            let query = body["query"].as_str().unwrap_or("");
            match port.score(query, &strings(&body["documents"])) {
                Ok(scores) => {
                    let results: Vec<Value> = scores
                        .into_iter()
                        .enumerate()
                        .map(|(i, s)| json!({ "index": i, "relevance_score": s }))
                        .collect();
                    (200, json!({ "results": results }))
                }
                Err(e) => failure(e),
            }
        } else {
            (404, json!({ "error": "unknown path" }))
        }
    }
}

fn write_response(mut stream: TcpStream, status: u16, payload: &Value) -> std::io::Result<()> {
    let body = payload.to_string();
    let reason = match status {
        200 => "OK",
        401 => "Unauthorized",
        404 => "Not Found",
        _ => "Service Unavailable",
    };
    write!(
        stream,
        "HTTP/1.1 {status} {reason}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    )?;
    stream.flush()
}

/// A started stub; stops accepting connections when dropped.
pub struct RunningStub {
    addr: SocketAddr,
    shared: Arc<Shared>,
    worker: Option<JoinHandle<()>>,
}

impl RunningStub {
    /// Base URL to put in an endpoint config.
    pub fn url(&self) -> String {
        format!("http://{}/v1", self.addr)
    }

    pub fn requests(&self) -> Vec<RecordedRequest> {
        self.shared.requests.lock().clone()
    }
}

impl Drop for RunningStub {
    fn drop(&mut self) {
        self.shared.stop.store(true, Ordering::SeqCst);
        let _ = TcpStream::connect(self.addr);
        if let Some(worker) = self.worker.take() {
            let _ = worker.join();
        }
    }
}
