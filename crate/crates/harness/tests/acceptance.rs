//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any failure.

use std::collections::{BTreeSet, HashSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use mnemo_core::agent::Executed;
use mnemo_core::config::ProviderSpec;
use mnemo_core::engine::{RetrievalOverrides, SearchOptions};
use mnemo_core::ledger::{LedgerNode, NodeUsage};
use mnemo_core::ltm::{default_abbreviations, normalize, segment_sentences, ExactIndex, SearchFilter, SentenceRecord, VectorIndex};
use mnemo_core::providers::http::EndpointConfig;
use mnemo_core::providers::stub::StubProviderServer;
use mnemo_core::providers::{HashEmbedder, OverlapReranker, ProviderRegistry, RecordingReranker, ScriptedChat};
use mnemo_core::recall::{contextualize, RetrievalConfig};
use mnemo_core::stm::StmConfig;
use mnemo_core::store::{EpisodeStore, MemoryStore, NewEpisode};
use mnemo_core::types::{EpisodeId, MemoryScope, Metadata, Producer, SentenceId, Timestamp};
use mnemo_core::{EngineConfig, MemoryEngine};
use mnemo_harness::diff::diff;
use mnemo_harness::report::diff_table;
use mnemo_harness::suites::{adjacency, late_binding, late_binding_cast, late_binding_question};
use mnemo_harness::Mode;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

type Check = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn scope(session: &str) -> MemoryScope {
    MemoryScope::new("o", "p", "u", "a", session)
}

fn episode(scope: &MemoryScope, content: String, ms: i64, producer: Producer) -> NewEpisode {
    NewEpisode {
        scope: scope.clone(),
        content,
        producer,
        timestamp: Timestamp::from_millis(ms),
        metadata: Metadata::new(),
    }
}

fn quiet_config() -> EngineConfig {
    let mut c = EngineConfig::default();
    c.stm = StmConfig {
        capacity: 2,
        summary_enabled: false,
    };
    c.profile.enabled = false;
    c
}

fn engine_with(config: EngineConfig, chat: Option<Arc<ScriptedChat>>, reranker: Option<Arc<RecordingReranker>>) -> MemoryEngine {
    let mut registry = ProviderRegistry::new().with_embedder(Arc::new(HashEmbedder::new("hash", 32)));
    registry = match reranker {
        Some(r) => registry.with_reranker(r),
        None => registry.with_reranker(Arc::new(OverlapReranker::default())),
    };
    let mut config = config;
    if let Some(chat) = chat {
        config.models.chat = Some("chat".into());
        registry = registry.with_chat(chat);
    }
    MemoryEngine::new(config, &registry, Arc::new(MemoryStore::new())).expect("engine builds")
}

const VOCAB: [&str; 24] = [
    "garden", "invoice", "piano", "harbor", "ticket", "recipe", "doctor", "budget", "camera", "river", "lesson",
    "printer", "jacket", "museum", "tennis", "coffee", "laptop", "rental", "violin", "bakery", "parcel", "ferry",
    "tulip", "census",
];

fn sentence(rng: &mut ChaCha8Rng) -> String {
    let n = rng.random_range(3..8);
    let words: Vec<&str> = (0..n).map(|_| *VOCAB.choose(rng).unwrap()).collect();
    let mut s = words.join(" ");
    s[..1].make_ascii_uppercase();
    s.push('.');
    s
}

fn fill_corpus(engine: &MemoryEngine, rng: &mut ChaCha8Rng, sessions: usize, turns: usize) -> Vec<MemoryScope> {
    let scopes: Vec<MemoryScope> = (0..sessions).map(|s| scope(&format!("s{s}"))).collect();
    let mut clock = 0;
    for sc in &scopes {
        for t in 0..turns {
            clock += 1000;
            let n = rng.random_range(1..4);
            let content = (0..n).map(|_| sentence(rng)).collect::<Vec<_>>().join(" ");
            let producer = if t % 2 == 0 { Producer::User } else { Producer::Agent };
            engine.add_episode(episode(sc, content, clock, producer)).expect("add");
        }
    }
    scopes
}

// 1
fn contextualization_geometry() -> Check {
    let store = MemoryStore::new();
    let sc = scope("s");
    let n = 200u64;
    let ids: Vec<EpisodeId> = (0..n)
        .map(|i| store.append(episode(&sc, format!("episode {i}"), i as i64 * 1000, Producer::User)).unwrap().id)
        .collect();
    let cfg = RetrievalConfig::default();
    ensure!((cfg.neighbors_before, cfg.neighbors_after) == (1, 2), "default neighbors are not (1, 2)");
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut mismatches = 0;
    for pick in 0..1000u64 {
        let i = rng.random_range(0..n);
        let record = SentenceRecord {
            id: SentenceId(pick),
            text: format!("episode {i}"),
            parent_episode: ids[i as usize],
            parent_sequence: i,
            position: 0,
            scope: sc.clone(),
            timestamp: Timestamp::from_millis(i as i64 * 1000),
            producer: Producer::User,
            metadata: Metadata::new(),
            embedding: vec![1.0],
        };
        let clusters = contextualize(&[(record, 1.0)], &cfg, &store);
        let got: Vec<u64> = clusters.iter().flat_map(|c| c.members.iter().map(|e| e.sequence)).collect();
        let want: Vec<u64> = (i.saturating_sub(1)..=(i + 2).min(n - 1)).collect();
        if clusters.len() != 1 || got != want {
            mismatches += 1;
        }
    }
    ensure!(mismatches == 0, "{mismatches} of 1000 clusters differ from the clamp oracle");
    Ok("1000 picks, 0 mismatches".into())
}

// 2
fn knn_oracle() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let sc = scope("s");
    for corpus in 0..50 {
        let dim = rng.random_range(4..48);
        let n = rng.random_range(1..=500u64);
        let k = rng.random_range(1..=50);
        let vector = |rng: &mut ChaCha8Rng| -> Vec<f32> { (0..dim).map(|_| rng.random_range(-2..=2) as f32).collect() };
        let records: Vec<SentenceRecord> = (0..n)
            .map(|i| {
                let mut v = vector(&mut rng);
                if v.iter().all(|x| *x == 0.0) {
                    v[0] = 1.0;
                }
                SentenceRecord {
                    id: SentenceId(i),
                    text: String::new(),
                    parent_episode: EpisodeId(i),
                    parent_sequence: i,
                    position: 0,
                    scope: sc.clone(),
                    timestamp: Timestamp::from_millis(i as i64),
                    producer: Producer::User,
                    metadata: Metadata::new(),
                    embedding: v,
                }
            })
            .collect();
        let index = ExactIndex::new(dim);
        index.insert(records.clone()).map_err(|e| e.to_string())?;
        let query = vector(&mut rng);
        let q = normalize(&query);
        let mut want: Vec<(u64, f64)> = records
            .iter()
            .map(|r| {
                let v = normalize(&r.embedding);
                (r.id.0, v.iter().zip(&q).map(|(a, b)| *a as f64 * *b as f64).sum())
            })
            .collect();
        want.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        want.truncate(k);
        let got = index.search(&sc, &query, k, &SearchFilter::default()).map_err(|e| e.to_string())?;
        ensure!(got.len() == want.len(), "corpus {corpus}: {} hits, oracle {}", got.len(), want.len());
        for (g, w) in got.iter().zip(&want) {
            ensure!(g.0.id.0 == w.0 && (g.1 - w.1).abs() < 1e-9, "corpus {corpus}: order differs from the full scan");
        }
    }
    let elapsed = start.elapsed();
    ensure!(elapsed.as_secs_f64() < 10.0, "took {elapsed:?}");
    Ok(format!("50 corpora in {:.2}s", elapsed.as_secs_f64()))
}

fn random_trial(trial: u64) -> (MemoryEngine, MemoryScope, String, SearchOptions) {
    let mut rng = ChaCha8Rng::seed_from_u64(1000 + trial);
    let mut config = quiet_config();
    config.stm.capacity = rng.random_range(1..6);
    let engine = engine_with(config, None, None);
    let sessions = rng.random_range(1..4);
    let turns = rng.random_range(5..40);
    let scopes = fill_corpus(&engine, &mut rng, sessions, turns);
    let nucleus_k = rng.random_range(1..20);
    let options = SearchOptions {
        agent_mode: false,
        config: RetrievalOverrides {
            nucleus_k: Some(nucleus_k),
            cluster_top_k: Some(rng.random_range(1..=nucleus_k.min(10))),
            neighbors_before: Some(rng.random_range(0..4)),
            neighbors_after: Some(rng.random_range(0..4)),
            ..RetrievalOverrides::default()
        },
        filter: SearchFilter {
            all_sessions: rng.random_bool(0.5),
            ..SearchFilter::default()
        },
    };
    let me = scopes.choose(&mut rng).unwrap().clone();
    let query = sentence(&mut rng);
    (engine, me, query, options)
}

// 3
fn determinism_and_disjointness() -> Check {
    for trial in 0..100 {
        let run = || {
            let (engine, sc, query, options) = random_trial(trial);
            engine.search(&sc, &query, &options).map(|r| r.outcome)
        };
        let a = run().map_err(|e| format!("trial {trial}: {e}"))?;
        let b = run().map_err(|e| format!("trial {trial}: {e}"))?;
        let (ja, jb) = (serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        ensure!(ja == jb, "trial {trial}: reruns differ");
        let ids = a.episode_ids();
        let unique: HashSet<_> = ids.iter().collect();
        ensure!(unique.len() == ids.len(), "trial {trial}: duplicate episode ids");
        for c in &a.ltm_clusters {
            ensure!(
                c.members.windows(2).all(|w| w[1].sequence == w[0].sequence + 1),
                "trial {trial}: cluster members not consecutive"
            );
        }
        ensure!(
            a.ltm_clusters.windows(2).all(|w| w[0].nucleus_timestamp() <= w[1].nucleus_timestamp()),
            "trial {trial}: clusters not chronological"
        );
    }
    Ok("100 trials byte-identical, disjoint, chronological".into())
}

// 4
fn late_binding_demo() -> Check {
    let mut worst_memory: f64 = 0.0;
    let mut max_iterations = 0;
    for v in 0..20 {
        let s = late_binding(v);
        let (_, agent) = s.run(Mode::Agent, RetrievalOverrides::default(), 1).map_err(|e| e.to_string())?;
        let (_, memory) = s.run(Mode::Memory, RetrievalOverrides::default(), 1).map_err(|e| e.to_string())?;
        let a = &agent.results[0];
        ensure!(a.recall == 1.0, "variant {v}: agent recall {}", a.recall);
        let iterations = a.chain_iterations.unwrap_or(usize::MAX);
        ensure!(iterations <= 3, "variant {v}: {iterations} chain iterations");
        max_iterations = max_iterations.max(iterations);
        worst_memory = worst_memory.max(memory.results[0].recall);
        ensure!(memory.results[0].recall <= 0.34, "variant {v}: memory recall {}", memory.results[0].recall);
    }

    // scripted confidence at or above the threshold on the first verdict ends the chain there
    let mut s = late_binding(0);
    s.chat = Some(Arc::new(ScriptedChat::from_fn("scripted", |p| {
        Some(if p.starts_with("You classify") {
            "ROUTE: chain\nRATIONALE: x".into()
        } else {
            "SUFFICIENT: yes\nCONFIDENCE: 0.8\nNEXT_QUERY: who else".into()
        })
    })));
    let cast = late_binding_cast(0);
    let engine = s.engine();
    s.ingest_into(&engine).map_err(|e| e.to_string())?;
    let options = SearchOptions {
        agent_mode: true,
        ..SearchOptions::default()
    };
    let r = engine.search(&scope_for(&s, "s1"), &late_binding_question(&cast), &options).map_err(|e| e.to_string())?;
    let chain = r.chain.ok_or("no chain state")?;
    ensure!(chain.iteration == 1 && chain.stopped_early, "confidence 0.8 did not stop early: {chain:?}");

    // below the threshold the chain keeps going up to the cap
    let counter = Mutex::new(0);
    s.chat = Some(Arc::new(ScriptedChat::from_fn("scripted", move |p| {
        let mut n = counter.lock().unwrap();
        *n += 1;
        Some(if p.starts_with("You classify") {
            "ROUTE: chain\nRATIONALE: x".into()
        } else {
            format!("SUFFICIENT: yes\nCONFIDENCE: 0.79\nNEXT_QUERY: probe number {n}")
        })
    })));
    let engine = s.engine();
    s.ingest_into(&engine).map_err(|e| e.to_string())?;
    let r = engine.search(&scope_for(&s, "s1"), &late_binding_question(&cast), &options).map_err(|e| e.to_string())?;
    let chain = r.chain.ok_or("no chain state")?;
    ensure!(chain.iteration == 3 && !chain.stopped_early, "confidence 0.79 chain: {chain:?}");

    Ok(format!(
        "agent recall 1.000 on 20 variants; memory recall max {worst_memory:.3}; max {max_iterations} iterations; early stop at 0.8"
    ))
}

fn scope_for(s: &mnemo_harness::suites::Suite, session: &str) -> MemoryScope {
    s.template.scope(session)
}

/// Chat double with random, sometimes malformed, replies.
fn fuzz_chat(seed: u64, queries: Arc<Mutex<u64>>) -> ScriptedChat {
    let rng = Mutex::new(ChaCha8Rng::seed_from_u64(seed));
    ScriptedChat::from_fn("chat", move |prompt| {
        let mut rng = rng.lock().unwrap();
        let fresh = || {
            let mut n = queries.lock().unwrap();
            *n += 1;
            format!("followup{n} {}", VOCAB[*n as usize % VOCAB.len()])
        };
        if rng.random_bool(0.05) {
            return None;
        }
        if rng.random_bool(0.08) {
            return Some("I am not sure what you mean.".into());
        }
        if prompt.starts_with("You classify") {
            let route = ["direct", "split", "chain"].choose(&mut *rng).unwrap();
            return Some(format!("ROUTE: {route}\nRATIONALE: fuzz"));
        }
        if prompt.starts_with("You decompose") {
            let k = rng.random_range(0..8);
            return Some((0..k).map(|_| format!("SUBQUERY: {}", fresh())).collect::<Vec<_>>().join("\n"));
        }
        if prompt.starts_with("You judge") {
            let sufficient = if rng.random_bool(0.3) { "yes" } else { "no" };
            let confidence: f64 = rng.random_range(0.0..1.0);
            let next = if rng.random_bool(0.8) { fresh() } else { "none".into() };
            return Some(format!("SUFFICIENT: {sufficient}\nCONFIDENCE: {confidence:.2}\nNEXT_QUERY: {next}"));
        }
        Some("summary".into())
    })
}

// 5
fn bounded_llm_calls() -> Check {
    let mut direct = 0;
    let mut retried_direct = 0;
    let mut worst = 0;
    for batch in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(5000 + batch);
        let mut config = quiet_config();
        config.agent.max_iterations = rng.random_range(1..6);
        let cap = 2 + (config.agent.max_iterations as u64 + 1).max(1);
        let chat = Arc::new(fuzz_chat(batch, Arc::new(Mutex::new(0))));
        let engine = engine_with(config, Some(chat.clone()), None);
        let scopes = fill_corpus(&engine, &mut rng, 2, 20);
        for q in 0..10 {
            let before = chat.call_count();
            let options = SearchOptions {
                agent_mode: true,
                ..SearchOptions::default()
            };
            let r = engine.search(&scopes[q % 2], &sentence(&mut rng), &options).map_err(|e| e.to_string())?;
            let calls = chat.call_count() - before;
            worst = worst.max(calls);
            ensure!(calls <= cap, "batch {batch} query {q}: {calls} chat calls, cap {cap}");
            if r.executed == Some(Executed::Direct) {
                let retried = r.outcome.ledger.warnings.iter().any(|w| w.starts_with("router reply unreadable"));
                let expected = if retried { 2 } else { 1 };
                ensure!(calls == expected, "direct query used {calls} chat calls (router retried: {retried})");
                ensure!(r.outcome.ledger.node(LedgerNode::Router).calls == expected, "router calls missing from the ledger");
                if retried {
                    retried_direct += 1;
                } else {
                    direct += 1;
                }
            }
        }
    }
    Ok(format!(
        "500 queries, max {worst} calls; {direct} direct with exactly 1 call; {retried_direct} direct after an unreadable first router reply used 2"
    ))
}

// 6
fn rerank_capture() -> Check {
    let mut runs = 0;
    let (mut chains, mut splits) = (0, 0);
    for batch in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(6000 + batch);
        let counter = Arc::new(Mutex::new(0u64));
        let c = counter.clone();
        let mode = Mutex::new(ChaCha8Rng::seed_from_u64(batch));
        let chat = Arc::new(ScriptedChat::from_fn("chat", move |prompt| {
            let mut rng = mode.lock().unwrap();
            let fresh = || {
                let mut n = c.lock().unwrap();
                *n += 1;
                format!("probe{n} {}", VOCAB[*n as usize % VOCAB.len()])
            };
            Some(if prompt.starts_with("You classify") {
                if rng.random_bool(0.5) { "ROUTE: chain" } else { "ROUTE: split" }.to_string()
            } else if prompt.starts_with("You decompose") {
                let k = rng.random_range(2..6);
                (0..k).map(|_| format!("SUBQUERY: {}", fresh())).collect::<Vec<_>>().join("\n")
            } else {
                let next = if rng.random_bool(0.7) { fresh() } else { "none".into() };
                format!("SUFFICIENT: no\nCONFIDENCE: 0.2\nNEXT_QUERY: {next}")
            })
        }));
        let reranker = Arc::new(RecordingReranker::new(Arc::new(OverlapReranker::default())));
        let mut config = quiet_config();
        config.stm.capacity = 1;
        let engine = engine_with(config, Some(chat), Some(reranker.clone()));
        let scopes = fill_corpus(&engine, &mut rng, 2, 25);
        for q in 0..10 {
            reranker.clear();
            let options = SearchOptions {
                agent_mode: true,
                ..SearchOptions::default()
            };
            let query = format!("question{batch}x{q} {}", sentence(&mut rng));
            let r = engine.search(&scopes[q % 2], &query, &options).map_err(|e| e.to_string())?;
            match r.executed {
                Some(Executed::Chain) => chains += 1,
                Some(Executed::Split) => splits += 1,
                other => return Err(format!("unexpected executed strategy {other:?}")),
            }
            let recorded = reranker.queries();
            let pooled = recorded.last().ok_or("reranker never called")?;
            let lines: Vec<&str> = pooled.lines().collect();
            for issued in &r.queries {
                let count = lines.iter().filter(|l| **l == issued.as_str()).count();
                ensure!(count == 1, "query `{issued}` appears {count} times in the pooled rerank input");
            }
            ensure!(lines.len() == r.queries.len(), "pooled input has {} lines for {} queries", lines.len(), r.queries.len());
            runs += 1;
        }
    }
    Ok(format!("{runs} runs ({chains} chain, {splits} split), every query exactly once"))
}

// 7
fn neighbor_expansion() -> Check {
    let s = adjacency(0);
    let (_, with) = s.run(Mode::Memory, RetrievalOverrides::default(), 1).map_err(|e| e.to_string())?;
    let zero = RetrievalOverrides {
        neighbors_before: Some(0),
        neighbors_after: Some(0),
        ..RetrievalOverrides::default()
    };
    let (_, without) = s.run(Mode::Memory, zero, 1).map_err(|e| e.to_string())?;
    ensure!(with.retrieval.cluster_top_k == without.retrieval.cluster_top_k, "cluster_top_k differs");
    let d = diff(&without, &with).map_err(|e| e.to_string())?;
    println!("{}", diff_table(&d).trim_end().lines().map(|l| format!("      {l}")).collect::<Vec<_>>().join("\n"));
    ensure!(
        with.aggregate.mean_recall > without.aggregate.mean_recall,
        "recall (1,2) {} vs (0,0) {}",
        with.aggregate.mean_recall,
        without.aggregate.mean_recall
    );
    Ok(format!(
        "recall (0,0) {:.3} -> (1,2) {:.3}",
        without.aggregate.mean_recall, with.aggregate.mean_recall
    ))
}

// 8
fn ledger_arithmetic() -> Check {
    let mut agent_off = 0;
    for batch in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(8000 + batch);
        let mut config = quiet_config();
        config.agent.max_iterations = rng.random_range(1..5);
        let chat = Arc::new(fuzz_chat(80 + batch, Arc::new(Mutex::new(0))));
        let engine = engine_with(config, Some(chat.clone()), None);
        let scopes = fill_corpus(&engine, &mut rng, 2, 12);
        for q in 0..20 {
            let agent_mode = rng.random_bool(0.5);
            let before = chat.call_count();
            let options = SearchOptions {
                agent_mode,
                ..SearchOptions::default()
            };
            let r = engine.search(&scopes[q % 2], &sentence(&mut rng), &options).map_err(|e| e.to_string())?;
            let ledger = &r.outcome.ledger;
            let mut sum = NodeUsage::default();
            let mut agent_sum = NodeUsage::default();
            for (node, usage) in ledger.nodes() {
                sum.calls += usage.calls;
                sum.input_tokens += usage.input_tokens;
                sum.output_tokens += usage.output_tokens;
                if LedgerNode::AGENT.contains(&node) {
                    agent_sum.calls += usage.calls;
                    agent_sum.input_tokens += usage.input_tokens;
                    agent_sum.output_tokens += usage.output_tokens;
                }
            }
            ensure!(ledger.totals() == sum, "totals differ from the per-node sum");
            ensure!(ledger.agent_totals() == agent_sum, "agent totals differ from the agent-node sum");
            ensure!(sum.calls == chat.call_count() - before, "ledger missed chat calls");
            if !agent_mode {
                agent_off += 1;
                for node in LedgerNode::AGENT {
                    ensure!(ledger.node(node) == NodeUsage::default(), "agent off but {node} is nonzero");
                }
                ensure!(r.route.is_none() && r.executed.is_none(), "agent off but a route was reported");
            }
        }
    }
    Ok(format!("1000 runs, {agent_off} with agent off and zero agent rows"))
}

// 9
fn isolation_fuzz() -> Check {
    let base = MemoryScope::new("o", "p", "u", "a", "s");
    let mut scopes = vec![base.clone()];
    let variants: [fn(&mut MemoryScope); 7] = [
        |s| s.org_id = "o2".into(),
        |s| s.project_id = "p2".into(),
        |s| s.user_id = "u2".into(),
        |s| s.agent_id = "a2".into(),
        |s| s.session_id = "s2".into(),
        |s| {
            s.user_id = "u2".into();
            s.session_id = "s2".into();
        },
        |s| {
            s.agent_id = "a2".into();
            s.session_id = "s3".into();
        },
    ];
    for f in variants {
        let mut s = base.clone();
        f(&mut s);
        scopes.push(s);
    }
    let owners = |text: &str| -> Vec<usize> {
        text.split_whitespace()
            .filter_map(|w| w.strip_prefix("mark"))
            .filter_map(|w| w.split('x').next()?.parse().ok())
            .collect()
    };
    let chat = ScriptedChat::from_fn("chat", |prompt| {
        if !prompt.starts_with("You extract durable facts") {
            return Some("recent notes".into());
        }
        let messages = prompt.rsplit("Messages:").next().unwrap_or("");
        let facts: Vec<String> = messages
            .split_whitespace()
            .filter(|w| w.starts_with("mark"))
            .map(|w| {
                let w = w.trim_matches(|c: char| !c.is_alphanumeric());
                format!("FACT: preference | {w} | {w}")
            })
            .collect();
        Some(facts.join("\n"))
    });
    let mut config = EngineConfig::default();
    config.stm.capacity = 2;
    let engine = engine_with(config, Some(Arc::new(chat)), None);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut counters = [0usize; 8];
    let mut observations = 0u64;
    for step in 0..10_000 {
        let me_i = rng.random_range(0..8);
        let me = &scopes[me_i];
        let roll = rng.random_range(0..10);
        if roll < 6 {
            counters[me_i] += 1;
            let content = format!("Entry mark{me_i}x{} about the shared topic.", counters[me_i]);
            engine.add_episode(episode(me, content, step as i64 * 1000, Producer::User)).map_err(|e| e.to_string())?;
        } else if roll < 9 {
            let mut options = SearchOptions::default();
            options.filter.all_sessions = rng.random_bool(0.5);
            let probe = rng.random_range(0..8);
            let r = engine.search(me, &format!("mark{probe}x1 shared topic"), &options).map_err(|e| e.to_string())?;
            let visible = |owner: usize| {
                if options.filter.all_sessions {
                    scopes[owner].agent_key() == me.agent_key()
                } else {
                    owner == me_i
                }
            };
            let o = &r.outcome;
            for ep in o.stm_episodes.iter().chain(o.ltm_clusters.iter().flat_map(|c| c.members.iter())) {
                observations += 1;
                let owner = scopes.iter().position(|s| s == &ep.scope).unwrap();
                ensure!(visible(owner), "step {step}: scope {me_i} saw an episode of scope {owner}");
            }
            for owner in owners(&o.rendered_context) {
                ensure!(visible(owner), "step {step}: scope {me_i} saw mark{owner} in context");
            }
            for owner in owners(&o.stm_summary) {
                ensure!(owner == me_i, "step {step}: summary leaked mark{owner}");
            }
            for entry in engine.query_profile(&me.user_scope(), None, None) {
                for owner in owners(&entry.value) {
                    ensure!(scopes[owner].user_scope() == me.user_scope(), "step {step}: profile leaked mark{owner}");
                }
            }
        } else {
            engine.delete_session(me).map_err(|e| e.to_string())?;
            counters[me_i] = 0;
            ensure!(engine.get_episodes(me, 0, u64::MAX).map_err(|e| e.to_string())?.is_empty(), "delete left episodes");
        }
    }
    Ok(format!("10000 operations, {observations} episodes observed, 0 cross-scope"))
}

// 10
fn segmentation_fixture() -> Check {
    #[derive(serde::Deserialize)]
    struct Passage {
        sentences: Vec<String>,
        #[serde(default)]
        sep: Option<String>,
    }
    let corpus: Vec<Passage> =
        serde_json::from_str(include_str!("../../core/tests/fixtures/segmentation.json")).map_err(|e| e.to_string())?;
    let abbreviations = default_abbreviations();
    let (mut total, mut matched) = (0, 0);
    let mut misses = Vec::new();
    for p in &corpus {
        let text = p.sentences.join(p.sep.as_deref().unwrap_or(" "));
        let got: BTreeSet<String> = segment_sentences(&text, &abbreviations).into_iter().collect();
        for gold in &p.sentences {
            total += 1;
            if got.contains(gold) {
                matched += 1;
            } else {
                misses.push(gold.clone());
            }
        }
    }
    let agreement = matched as f64 / total as f64;
    ensure!(total >= 50, "fixture has only {total} sentences");
    ensure!(agreement >= 0.95, "agreement {agreement:.3}; misses {misses:?}");
    Ok(format!("{matched}/{total} exact ({:.1}%), misses {misses:?}", agreement * 100.0))
}

// 11
fn service_round_trip() -> Check {
    let chat = ScriptedChat::from_fn("inner", |prompt| {
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
            "ROUTE: chain\nRATIONALE: lookup"
        } else if prompt.starts_with("You judge") {
            "SUFFICIENT: yes\nCONFIDENCE: 0.9\nNEXT_QUERY: none"
        } else if prompt.starts_with("You decompose") {
            "SUBQUERY: a\nSUBQUERY: b"
        } else {
            "Earlier turns covered plans and food."
        };
        Some(reply.to_string())
    });
    let stub = StubProviderServer::new()
        .embedder(Arc::new(HashEmbedder::new("inner", 32)))
        .chat(Arc::new(chat))
        .reranker(Arc::new(OverlapReranker::default()))
        .require_key("k")
        .start()
        .map_err(|e| e.to_string())?;
    let endpoint = || {
        let mut e = EndpointConfig::new(&stub.url(), "stub-model");
        e.api_key = Some("k".into());
        e.backoff_ms = 1;
        e
    };
    let mut config = EngineConfig::default();
    config.providers = vec![
        ProviderSpec::HttpEmbedder { id: "embed".into(), dimension: 32, endpoint: endpoint() },
        ProviderSpec::HttpChat { id: "chat".into(), endpoint: endpoint() },
        ProviderSpec::HttpReranker { id: "rerank".into(), endpoint: endpoint() },
    ];
    config.index.embedder_id = "embed".into();
    config.models.chat = Some("chat".into());
    config.models.reranker = "rerank".into();
    config.stm.capacity = 4;
    let engine = Arc::new(MemoryEngine::from_config(config).map_err(|e| e.to_string())?);

    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build().map_err(|e| e.to_string())?;
    let (addr, _server) = runtime
        .block_on(mnemo_service::spawn("127.0.0.1:0".parse().unwrap(), mnemo_service::AppState::new(engine)))
        .map_err(|e| e.to_string())?;
    let base = format!("http://{addr}");

    let mut lines: Vec<String> = (0..30).map(|i| format!("Turn {i}: we chatted about the weather.")).collect();
    lines[4] = "I am vegetarian, so please remember that.".into();
    lines[12] = "The storage locker code is 7731.".into();
    lines[26] = "Update: I'm now vegan as of this month.".into();
    let transcript: Vec<Value> = lines
        .iter()
        .enumerate()
        .map(|(i, content)| {
            json!({
                "session_id": "s1",
                "producer": if i % 2 == 0 { "user" } else { "assistant" },
                "timestamp": format!("2025-03-01T10:{:02}:{:02}Z", i / 60, i % 60),
                "content": content,
            })
        })
        .collect();
    let scope = json!({ "org_id": "acme", "project_id": "assist", "user_id": "ada", "agent_id": "helper" });
    let merge = |extra: &Value| {
        let mut v = scope.clone();
        v.as_object_mut().unwrap().extend(extra.as_object().unwrap().clone());
        v
    };
    for (i, line) in transcript.iter().enumerate() {
        let mut resp = ureq::post(&format!("{base}/v2/memories")).send_json(merge(line)).map_err(|e| format!("line {i}: {e}"))?;
        ensure!(resp.status() == 201, "line {i}: status {}", resp.status());
        let body: Value = resp.body_mut().read_json().map_err(|e| e.to_string())?;
        ensure!(body["sequence"] == i, "line {i}: sequence {}", body["sequence"]);
    }

    let mut checked = Vec::new();
    for agent_mode in [false, true] {
        let req = merge(&json!({ "session_id": "s1", "query": "what is the storage locker code", "agent_mode": agent_mode }));
        let mut resp = ureq::post(&format!("{base}/v2/memories/search")).send_json(req).map_err(|e| e.to_string())?;
        let body: Value = resp.body_mut().read_json().map_err(|e| e.to_string())?;
        ensure!(body["outcome"]["rendered_context"].as_str().unwrap_or("").contains("7731"), "agent_mode={agent_mode}: fact missing");
        let router_calls = &body["outcome"]["ledger"]["nodes"]["router"]["calls"];
        if agent_mode {
            ensure!(body["route"]["route"] == "chain" && router_calls == 1, "agent_mode=true: {}", body["route"]);
        } else {
            ensure!(body["route"].is_null() && router_calls == 0, "agent_mode=false reported a route");
        }
        checked.push(agent_mode);
    }

    let mut resp = ureq::get(&format!("{base}/v2/profile?org_id=acme&project_id=assist&user_id=ada"))
        .call()
        .map_err(|e| e.to_string())?;
    let profile: Value = resp.body_mut().read_json().map_err(|e| e.to_string())?;
    let live = profile.as_array().ok_or("profile is not an array")?;
    ensure!(live.len() == 1, "expected one live entry, got {profile}");
    ensure!(live[0]["key"] == "diet" && live[0]["value"] == "vegan", "profile is {profile}");
    let requests = stub.requests();
    ensure!(requests.iter().all(|r| r.authorization.as_deref() == Some("Bearer k")), "request without the key");
    drop(runtime);
    Ok(format!("30 turns over REST, search agent_mode {checked:?}, diet vegetarian -> vegan, {} provider calls", requests.len()))
}

fn main() {
    let criteria: [(&str, fn() -> Check); 11] = [
        ("contextualization geometry", contextualization_geometry),
        ("kNN oracle equivalence", knn_oracle),
        ("recall determinism and disjointness", determinism_and_disjointness),
        ("late-binding demonstration", late_binding_demo),
        ("bounded LLM calls", bounded_llm_calls),
        ("multi-query rerank capture", rerank_capture),
        ("neighbor-expansion benefit", neighbor_expansion),
        ("token-ledger arithmetic", ledger_arithmetic),
        ("multi-tenant isolation fuzz", isolation_fuzz),
        ("sentence segmentation fixture", segmentation_fixture),
        ("service round trip", service_round_trip),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS {:>2}. {name} [{secs:.2}s]: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2}. {name} [{secs:.2}s]: {detail}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
