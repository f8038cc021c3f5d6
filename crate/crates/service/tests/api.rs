use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use mnemo_core::config::ProviderSpec;
use mnemo_core::providers::http::EndpointConfig;
use mnemo_core::providers::stub::{RunningStub, StubProviderServer};
use mnemo_core::providers::{HashEmbedder, OverlapReranker, ScriptedChat};
use mnemo_core::{EngineConfig, MemoryEngine};
use mnemo_service::{router, AppState, ErrorBody, REQUEST_ID_HEADER};
use serde_json::{json, Value};
use tower::ServiceExt;

fn scripted_chat() -> ScriptedChat {
    ScriptedChat::from_fn("scripted", |prompt| {
        let reply = if prompt.starts_with("You extract durable facts") {
            let messages = prompt.rsplit("Messages:").next().unwrap_or("");
            if messages.contains("now vegan") {
                "FACT: preference | diet | vegan"
            } else if messages.contains("vegetarian") {
                "FACT: preference | diet | vegetarian"
            } else {
                ""
            }
        } else if prompt.starts_with("You classify") {
            "ROUTE: chain\nRATIONALE: needs a lookup"
        } else if prompt.starts_with("You judge") {
            "SUFFICIENT: yes\nCONFIDENCE: 0.9\nNEXT_QUERY: none"
        } else if prompt.starts_with("You decompose") {
            "SUBQUERY: a\nSUBQUERY: b"
        } else {
            "Earlier turns discussed the project."
        };
        Some(reply.to_string())
    })
}

fn endpoint(url: &str) -> EndpointConfig {
    let mut e = EndpointConfig::new(url, "stub-model");
    e.api_key = Some("test-key".into());
    e.backoff_ms = 1;
    e
}

/// Engine whose three providers all live behind the local stub server.
fn remote_engine() -> (Router, RunningStub) {
    let stub = StubProviderServer::new()
        .embedder(Arc::new(HashEmbedder::new("inner", 32)))
        .chat(Arc::new(scripted_chat()))
        .reranker(Arc::new(OverlapReranker::default()))
        .require_key("test-key")
        .start()
        .unwrap();
    let mut config = EngineConfig::default();
    config.providers = vec![
        ProviderSpec::HttpEmbedder { id: "embed".into(), dimension: 32, endpoint: endpoint(&stub.url()) },
        ProviderSpec::HttpChat { id: "chat".into(), endpoint: endpoint(&stub.url()) },
        ProviderSpec::HttpReranker { id: "rerank".into(), endpoint: endpoint(&stub.url()) },
    ];
    config.index.embedder_id = "embed".into();
    config.models.chat = Some("chat".into());
    config.models.reranker = "rerank".into();
    config.stm.capacity = 4;
    let engine = MemoryEngine::from_config(config).unwrap();
    (router(AppState::new(Arc::new(engine))), stub)
}

fn local_engine() -> Router {
    let engine = MemoryEngine::from_config(EngineConfig::default()).unwrap();
    router(AppState::new(Arc::new(engine)))
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let request = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map_or_else(Body::empty, |b| Body::from(b.to_string())))
        .unwrap();
    let response = app.clone().oneshot(request).await.unwrap();
    let status = response.status();
    let header = response.headers().get(REQUEST_ID_HEADER).cloned();
    let bytes = axum::body::to_bytes(response.into_body(), usize::MAX).await.unwrap();
    let value: Value = serde_json::from_slice(&bytes).unwrap_or(Value::Null);
    if let (Some(h), Some(id)) = (header, value.get("request_id").and_then(Value::as_str)) {
        assert_eq!(h.to_str().unwrap(), id);
    }
    (status, value)
}

fn scope(user: &str, session: &str) -> Value {
    json!({ "org_id": "acme", "project_id": "assist", "user_id": user, "agent_id": "helper", "session_id": session })
}

fn with(mut base: Value, extra: Value) -> Value {
    base.as_object_mut().unwrap().extend(extra.as_object().unwrap().clone());
    base
}

fn ts(i: i64) -> String {
    format!("2025-03-01T10:{:02}:{:02}.000Z", i / 60, i % 60)
}

fn ids(v: &Value) -> Vec<u64> {
    v["episode_ids"].as_array().unwrap().iter().map(|x| x.as_u64().unwrap()).collect()
}

#[tokio::test]
async fn minimal_body_is_created_at_sequence_zero() {
    let app = local_engine();
    let (status, body) = call(&app, "POST", "/v2/memories", Some(with(scope("u", "s"), json!({ "content": "hello there" })))).await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(body["sequence"], 0);
    assert!(body["request_id"].as_str().unwrap().starts_with("req-"));
}

#[tokio::test]
async fn validation_errors_use_the_envelope() {
    let app = local_engine();
    let mut missing = scope("u", "s");
    missing.as_object_mut().unwrap().remove("user_id");
    let (status, body) = call(&app, "POST", "/v2/memories", Some(with(missing, json!({ "content": "x" })))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let err: ErrorBody = serde_json::from_value(body).unwrap();
    assert_eq!(err.code, "ScopeInvalid");
    assert!(err.message.contains("user_id"));

    let (status, body) = call(&app, "POST", "/v2/memories", Some(with(scope("u", "s"), json!({ "content": "  " })))).await;
    assert_eq!((status, body["code"].as_str()), (StatusCode::BAD_REQUEST, Some("EmptyContent")));

    let first = with(scope("u", "s"), json!({ "content": "later", "timestamp": ts(10) }));
    assert_eq!(call(&app, "POST", "/v2/memories", Some(first)).await.0, StatusCode::CREATED);
    let earlier = with(scope("u", "s"), json!({ "content": "earlier", "timestamp": ts(5) }));
    let (status, body) = call(&app, "POST", "/v2/memories", Some(earlier)).await;
    assert_eq!((status, body["code"].as_str()), (StatusCode::CONFLICT, Some("TimestampRegression")));

    let request = Request::builder().method("POST").uri("/v2/memories").body(Body::from("{not json")).unwrap();
    let response = app.clone().oneshot(request).await.unwrap();
    assert_eq!(response.status(), StatusCode::BAD_REQUEST);

    let bad_override = with(scope("u", "s"), json!({ "query": "q", "config": { "top_k": 3 } }));
    let (status, body) = call(&app, "POST", "/v2/memories/search", Some(bad_override)).await;
    assert_eq!((status, body["code"].as_str()), (StatusCode::BAD_REQUEST, Some("InvalidBody")));

    let (status, body) = call(&app, "POST", "/v2/memories/search", Some(with(scope("u", "s"), json!({ "query": " " })))).await;
    assert_eq!((status, body["code"].as_str()), (StatusCode::BAD_REQUEST, Some("EmptyQuery")));

    let (status, body) = call(&app, "GET", "/v2/profile?org_id=acme&project_id=assist", None).await;
    assert_eq!((status, body["code"].as_str()), (StatusCode::BAD_REQUEST, Some("ScopeInvalid")));
}

#[tokio::test]
async fn full_round_trip_through_the_stub_providers() {
    let (app, stub) = remote_engine();
    let s = scope("ada", "s1");

    let mut transcript: Vec<String> = (0..30)
        .map(|i| format!("Turn {i}: we chatted about the weather and weekend plans."))
        .collect();
    transcript[4] = "I am vegetarian, so please remember that.".into();
    transcript[12] = "The storage locker code is 7731.".into();
    transcript[26] = "Update: I'm now vegan as of this month.".into();
    for (i, content) in transcript.iter().enumerate() {
        let producer = if i % 2 == 0 { "user" } else { "assistant" };
        let body = with(s.clone(), json!({ "content": content, "producer": producer, "timestamp": ts(i as i64) }));
        let (status, reply) = call(&app, "POST", "/v2/memories", Some(body)).await;
        assert_eq!(status, StatusCode::CREATED, "{reply}");
        assert_eq!(reply["sequence"], i);
    }

    let plain = with(s.clone(), json!({ "query": "what is the storage locker code" }));
    let (status, reply) = call(&app, "POST", "/v2/memories/search", Some(plain)).await;
    assert_eq!(status, StatusCode::OK, "{reply}");
    assert!(reply["outcome"]["rendered_context"].as_str().unwrap().contains("7731"));
    assert!(reply["route"].is_null());
    for node in ["router", "chain", "split", "direct"] {
        assert_eq!(reply["outcome"]["ledger"]["nodes"][node]["calls"], 0);
    }

    let agent = with(s.clone(), json!({ "query": "what is the storage locker code", "agent_mode": true }));
    let (status, reply) = call(&app, "POST", "/v2/memories/search", Some(agent)).await;
    assert_eq!(status, StatusCode::OK, "{reply}");
    assert_eq!(reply["route"]["route"], "chain");
    assert_eq!(reply["executed"], "chain");
    assert!(reply["outcome"]["rendered_context"].as_str().unwrap().contains("7731"));
    assert_eq!(reply["outcome"]["ledger"]["nodes"]["router"]["calls"], 1);

    let (status, profile) = call(&app, "GET", "/v2/profile?org_id=acme&project_id=assist&user_id=ada", None).await;
    assert_eq!(status, StatusCode::OK);
    let live = profile.as_array().unwrap();
    assert_eq!(live.len(), 1, "{profile}");
    assert_eq!((live[0]["key"].as_str(), live[0]["value"].as_str()), (Some("diet"), Some("vegan")));
    let (_, filtered) = call(&app, "GET", "/v2/profile?org_id=acme&project_id=assist&user_id=ada&category=preference&key=diet", None).await;
    assert_eq!(filtered, profile);

    let requests = stub.requests();
    assert!(requests.iter().all(|r| r.authorization.as_deref() == Some("Bearer test-key")));
    for path in ["/embeddings", "/chat/completions", "/rerank"] {
        assert!(requests.iter().any(|r| r.path.ends_with(path)), "no call to {path}");
    }
}

#[tokio::test]
async fn tenants_see_only_their_own_episodes() {
    let app = local_engine();
    let mut owned: Vec<Vec<u64>> = vec![Vec::new(), Vec::new()];
    for (t, user) in ["ann", "bob"].iter().enumerate() {
        for i in 0..5 {
            let body = with(scope(user, "s"), json!({ "content": format!("My favourite colour is colour{i}."), "timestamp": ts(i) }));
            let (_, reply) = call(&app, "POST", "/v2/memories", Some(body)).await;
            owned[t].push(reply["episode_id"].as_u64().unwrap());
        }
    }
    for (t, user) in ["ann", "bob"].iter().enumerate() {
        let body = with(scope(user, "s"), json!({ "query": "favourite colour", "filter": { "all_sessions": true } }));
        let (_, reply) = call(&app, "POST", "/v2/memories/search", Some(body)).await;
        let got = ids(&reply);
        assert!(!got.is_empty());
        assert!(got.iter().all(|id| owned[t].contains(id)), "{user} saw {got:?}");
    }
}

#[tokio::test]
async fn delete_then_search_is_empty_and_repeat_delete_removes_nothing() {
    let app = local_engine();
    for i in 0..3 {
        call(&app, "POST", "/v2/memories", Some(with(scope("u", "s"), json!({ "content": format!("fact {i}"), "timestamp": ts(i) })))).await;
    }
    let uri = "/v2/sessions?org_id=acme&project_id=assist&user_id=u&agent_id=helper&session_id=s";
    let (status, reply) = call(&app, "DELETE", uri, None).await;
    assert_eq!((status, reply["removed"].as_u64()), (StatusCode::OK, Some(3)));
    let (_, reply) = call(&app, "POST", "/v2/memories/search", Some(with(scope("u", "s"), json!({ "query": "fact" })))).await;
    assert!(ids(&reply).is_empty());
    let (status, reply) = call(&app, "DELETE", uri, None).await;
    assert_eq!((status, reply["removed"].as_u64()), (StatusCode::OK, Some(0)));

    let (status, reply) = call(&app, "GET", "/v2/profile?org_id=acme&project_id=assist&user_id=u", None).await;
    assert_eq!((status, reply), (StatusCode::OK, json!([])));
}

#[tokio::test]
async fn unavailable_provider_is_a_503_naming_the_port() {
    let app = local_engine();
    let body = with(scope("u", "s"), json!({ "query": "anything", "agent_mode": true }));
    let (status, reply) = call(&app, "POST", "/v2/memories/search", Some(body)).await;
    assert_eq!(status, StatusCode::SERVICE_UNAVAILABLE);
    assert_eq!(reply["port"], "chat");

    let dead = {
        let l = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        format!("http://{}/v1", l.local_addr().unwrap())
    };
    let mut config = EngineConfig::default();
    let mut e = endpoint(&dead);
    e.attempts = 1;
    config.providers.push(ProviderSpec::HttpEmbedder { id: "remote".into(), dimension: 8, endpoint: e });
    config.index.embedder_id = "remote".into();
    let app = router(AppState::new(Arc::new(MemoryEngine::from_config(config).unwrap())));
    let (status, reply) = call(&app, "POST", "/v2/memories", Some(with(scope("u", "s"), json!({ "content": "kept anyway" })))).await;
    assert_eq!(status, StatusCode::CREATED);
    assert!(!reply["warnings"].as_array().unwrap().is_empty());
    let (status, reply) = call(&app, "POST", "/v2/memories/search", Some(with(scope("u", "s"), json!({ "query": "kept" })))).await;
    assert_eq!(status, StatusCode::SERVICE_UNAVAILABLE, "{reply}");
    assert_eq!(reply["port"], "remote");
}

#[tokio::test]
async fn openapi_document_is_served() {
    let app = local_engine();
    let request = Request::builder().uri("/v2/openapi.yaml").body(Body::empty()).unwrap();
    let response = app.oneshot(request).await.unwrap();
    assert_eq!(response.status(), StatusCode::OK);
    let text = axum::body::to_bytes(response.into_body(), usize::MAX).await.unwrap();
    let text = String::from_utf8(text.to_vec()).unwrap();
    for path in ["/v2/memories:", "/v2/memories/search:", "/v2/profile:", "/v2/sessions:"] {
        assert!(text.contains(path));
    }
}

#[tokio::test]
async fn served_over_a_real_socket() {
    let engine = MemoryEngine::from_config(EngineConfig::default()).unwrap();
    let (addr, task) = mnemo_service::spawn("127.0.0.1:0".parse().unwrap(), AppState::new(Arc::new(engine)))
        .await
        .unwrap();
    let reply = tokio::task::spawn_blocking(move || {
        use std::io::{Read, Write};
        let mut s = std::net::TcpStream::connect(addr).unwrap();
        write!(s, "GET /healthz HTTP/1.1\r\nHost: x\r\nConnection: close\r\n\r\n").unwrap();
        let mut out = String::new();
        s.read_to_string(&mut out).unwrap();
        out
    })
    .await
    .unwrap();
    assert!(reply.starts_with("HTTP/1.1 200"));
    assert!(reply.ends_with("ok"));
    task.abort();
}
