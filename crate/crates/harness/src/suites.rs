//! Built-in synthetic suites with seeded embeddings and scripted chat.
//!
//! * `planted-fact`: ten facts, each the seeded nearest neighbor of its query.
//! * `adjacency`: the query matches an assistant question; the gold episode is
//!   the user's answer in the following turn, which only neighbor expansion
//!   brings back.
//! * `late-binding`: a three-hop question whose later hops name entities that
//!   only appear in earlier hops' evidence.

use std::sync::Arc;

use mnemo_core::engine::RetrievalOverrides;
use mnemo_core::providers::{
    keyed_unit_vector, stable_hash, HashEmbedder, OverlapReranker, ProviderRegistry, ScriptedChat, SeedTable,
};
use mnemo_core::stm::StmConfig;
use mnemo_core::store::MemoryStore;
use mnemo_core::types::{Metadata, Producer, Timestamp};
use mnemo_core::{EngineConfig, MemoryEngine};

use crate::error::HarnessError;
use crate::evaluate::{evaluate, EvalOptions, EvalReport, Mode};
use crate::ingest::{ingest, IngestReport};
use crate::queries::QuerySpec;
use crate::transcript::{NumberedLine, ScopeTemplate, TranscriptLine};

pub const SUITE_NAMES: [&str; 3] = ["planted-fact", "adjacency", "late-binding"];
pub const DIMENSION: usize = 64;

const BASE_MS: i64 = 1_735_689_600_000;

pub struct Suite {
    pub name: String,
    pub transcript: Vec<TranscriptLine>,
    pub queries: Vec<QuerySpec>,
    pub seeds: SeedTable,
    pub chat: Option<Arc<ScriptedChat>>,
    pub config: EngineConfig,
    pub template: ScopeTemplate,
}

impl Suite {
    pub fn registry(&self) -> ProviderRegistry {
        let mut registry = ProviderRegistry::new()
            .with_embedder(Arc::new(HashEmbedder::new("hash", DIMENSION).with_seeds(self.seeds.clone())))
            .with_reranker(Arc::new(OverlapReranker::default()));
        if let Some(chat) = &self.chat {
            registry = registry.with_chat(chat.clone());
        }
        registry
    }

    /// A fresh in-memory engine wired to the suite's doubles.
    pub fn engine(&self) -> MemoryEngine {
        MemoryEngine::new(self.config.clone(), &self.registry(), Arc::new(MemoryStore::new()))
            .expect("suite configuration is valid")
    }

    pub fn numbered(&self) -> Vec<NumberedLine> {
        self.transcript
            .iter()
            .enumerate()
            .map(|(i, entry)| NumberedLine {
                line: i + 1,
                entry: entry.clone(),
            })
            .collect()
    }

    pub fn ingest_into(&self, engine: &MemoryEngine) -> Result<IngestReport, HarnessError> {
        ingest(engine, &self.numbered(), &self.template)
    }

    /// Ingests into a fresh engine and evaluates every query.
    pub fn run(
        &self,
        mode: Mode,
        overrides: RetrievalOverrides,
        parallel: usize,
    ) -> Result<(IngestReport, EvalReport), HarnessError> {
        let engine = self.engine();
        let ingested = self.ingest_into(&engine)?;
        let opts = EvalOptions {
            mode: Some(mode),
            parallel,
            template: self.template.clone(),
            overrides,
            answer_chat: None,
            suite: Some(self.name.clone()),
        };
        Ok((ingested, evaluate(&engine, &self.queries, &opts)))
    }
}

pub fn suite(name: &str, variant: u64) -> Result<Suite, HarnessError> {
    match name {
        "planted-fact" => Ok(planted_fact(variant)),
        "adjacency" => Ok(adjacency(variant)),
        "late-binding" => Ok(late_binding(variant)),
        other => Err(HarnessError::UnknownSuite(other.into())),
    }
}

fn pick<'a>(items: &[&'a str], variant: u64, salt: &str) -> &'a str {
    items[(stable_hash(&format!("{salt}/{variant}")) % items.len() as u64) as usize]
}

fn number(variant: u64, salt: &str, lo: u64, hi: u64) -> u64 {
    lo + stable_hash(&format!("{salt}#{variant}")) % (hi - lo)
}

const USER_FILLER: [&str; 10] = [
    "We talked about the weather for a while.",
    "Lunch today was a big bowl of noodles.",
    "The train was late again this morning.",
    "I watched a documentary about whales.",
    "My neighbor is repainting the fence.",
    "Traffic downtown was terrible.",
    "I finally cleaned out the garage.",
    "The new coffee place opened on Main Street.",
    "We laughed about an old school story.",
    "The podcast episode ran long.",
];

const AGENT_FILLER: [&str; 6] = [
    "That sounds nice.",
    "Tell me more about that.",
    "Thanks for sharing that with me.",
    "Noted, happy to help with anything else.",
    "That must have been a long day.",
    "Good to hear from you again.",
];

fn producer_at(position: usize) -> Producer {
    if position.is_multiple_of(2) {
        Producer::User
    } else {
        Producer::Agent
    }
}

fn filler(position: usize, session: usize) -> String {
    match producer_at(position) {
        Producer::User => USER_FILLER[(position / 2 + session * 3) % USER_FILLER.len()].to_string(),
        _ => AGENT_FILLER[(position / 2 + session) % AGENT_FILLER.len()].to_string(),
    }
}

/// `sessions` sessions of `turns` alternating user/assistant turns with
/// `planted[(session, position)]` replacing the filler.
fn build_transcript(sessions: usize, turns: usize, planted: &[(usize, usize, String)]) -> Vec<TranscriptLine> {
    let mut out = Vec::new();
    for s in 0..sessions {
        for p in 0..turns {
            let content = planted
                .iter()
                .find(|(ps, pp, _)| *ps == s && *pp == p)
                .map(|(_, _, c)| c.clone())
                .unwrap_or_else(|| filler(p, s));
            out.push(TranscriptLine {
                session_id: format!("s{}", s + 1),
                producer: producer_at(p),
                timestamp: Timestamp::from_millis(BASE_MS + s as i64 * 86_400_000 + p as i64 * 60_000),
                content,
                metadata: Metadata::new(),
            });
        }
    }
    out
}

fn query(id: String, text: String, gold: Vec<String>, session: &str) -> QuerySpec {
    QuerySpec {
        id: Some(id),
        query: text,
        gold_episode_ids: gold,
        session_id: Some(session.into()),
        ..QuerySpec::default()
    }
}

/// Ten planted facts spread over three sessions, each seeded under its topic.
pub fn planted_fact(variant: u64) -> Suite {
    let days = ["Monday", "Tuesday", "Wednesday", "Thursday", "Friday"];
    let months = ["March", "April", "June", "October", "December"];
    let names = ["Mr. Okafor", "Ms. Lindqvist", "Mrs. Ramos", "Mr. Tanaka", "Ms. Byrne"];
    let allergies = ["peanuts", "shellfish", "penicillin", "bee stings", "latex"];
    let words = ["maple", "harbor", "juniper", "cobalt", "meadow"];
    let v = variant;
    let topics: Vec<(&str, String, String)> = vec![
        ("launch code", format!("The launch code for the demo is {}.", number(v, "code", 1000, 9999)), "What is the launch code for the demo?".into()),
        ("dentist appointment", format!("My dentist appointment moved to {}.", pick(&days, v, "dentist")), "When is my dentist appointment?".into()),
        ("wifi password", format!("The wifi password at the cabin is {}{}.", pick(&words, v, "wifi"), number(v, "wifi", 10, 99)), "What is the wifi password at the cabin?".into()),
        ("sister's birthday", format!("My sister's birthday is on {} {}.", pick(&months, v, "bday"), number(v, "bday", 1, 28)), "When is my sister's birthday?".into()),
        ("parking spot", format!("My parking spot at work is number {}.", number(v, "park", 1, 400)), "Which parking spot do I have at work?".into()),
        ("locker combination", format!("The gym locker combination is {}.", number(v, "locker", 100, 999)), "What is the gym locker combination?".into()),
        ("flight number", format!("My flight number for the trip is UA{}.", number(v, "flight", 100, 2000)), "What is my flight number for the trip?".into()),
        ("book club", format!("The book club meets every {} at {}pm.", pick(&days, v, "club"), number(v, "club", 5, 9)), "When does the book club meet?".into()),
        ("landlord's name", format!("Our landlord's name is {}.", pick(&names, v, "landlord")), "What is our landlord's name?".into()),
        ("allergy", format!("I have a severe allergy to {}.", pick(&allergies, v, "allergy")), "What allergy do I have?".into()),
    ];
    let mut seeds = SeedTable::new();
    let mut planted = Vec::new();
    let mut queries = Vec::new();
    for (k, (phrase, fact, q)) in topics.into_iter().enumerate() {
        seeds.insert(phrase, keyed_unit_vector(&format!("planted/{phrase}/{variant}"), DIMENSION));
        let session = k % 3;
        let position = 2 + 4 * (k / 3) + 2 * (variant as usize % 2);
        planted.push((session, position, fact));
        queries.push(query(
            format!("fact{:02}", k + 1),
            q,
            vec![format!("s{}:{position}", session + 1)],
            "s3",
        ));
    }
    Suite {
        name: "planted-fact".into(),
        transcript: build_transcript(3, 40, &planted),
        queries,
        seeds,
        chat: None,
        config: EngineConfig::default(),
        template: ScopeTemplate::default(),
    }
}

/// Assistant asks about a favourite thing; the user answers in the next turn.
pub fn adjacency(variant: u64) -> Suite {
    let topics: [(&str, &str); 10] = [
        ("dessert", "Tiramisu, without a doubt."),
        ("movie", "Probably the one with the talking robot."),
        ("city", "Lisbon, because of the hills."),
        ("band", "An old jazz trio from Chicago."),
        ("sport", "Rock climbing on weekends."),
        ("color", "Deep forest green."),
        ("novel", "A long Russian classic I reread yearly."),
        ("holiday", "The winter solstice gathering."),
        ("board game", "Anything with trading and bluffing."),
        ("car", "A tiny red hatchback from the nineties."),
    ];
    let mut seeds = SeedTable::new();
    let mut planted = Vec::new();
    let mut queries = Vec::new();
    for (k, (thing, answer)) in topics.iter().enumerate() {
        let phrase = format!("favourite {thing}");
        seeds.insert(&phrase, keyed_unit_vector(&format!("adjacency/{thing}/{variant}"), DIMENSION));
        let session = k % 3;
        let asked = 1 + 4 * (k / 3) + 2 * (variant as usize % 2);
        planted.push((session, asked, format!("What is your favourite {thing}?")));
        planted.push((session, asked + 1, answer.to_string()));
        queries.push(query(
            format!("fav{:02}", k + 1),
            format!("What did I say my favourite {thing} is?"),
            vec![format!("s{}:{}", session + 1, asked + 1)],
            "s3",
        ));
    }
    Suite {
        name: "adjacency".into(),
        transcript: build_transcript(3, 40, &planted),
        queries,
        seeds,
        chat: None,
        config: EngineConfig::default(),
        template: ScopeTemplate::default(),
    }
}

const CEOS: [&str; 20] = [
    "Dana", "Morgan", "Riley", "Casey", "Jordan", "Avery", "Quinn", "Harper", "Rowan", "Emerson", "Finley",
    "Hayden", "Kendall", "Logan", "Parker", "Reese", "Sawyer", "Taylor", "Skyler", "Blake",
];
const SPOUSES: [&str; 20] = [
    "Lee", "Sam", "Alex", "Jamie", "Robin", "Drew", "Jesse", "Kai", "Noel", "Ari", "Sage", "Remy", "Shay", "Toby",
    "Val", "Wren", "Yael", "Zion", "Eden", "Cory",
];
const FIRMS: [&str; 20] = [
    "Acme", "Initech", "Umbrella", "Hooli", "Vandelay", "Stark", "Tyrell", "Cyberdyne", "Soylent", "Wonka",
    "Oscorp", "Aperture", "Gekko", "Duff", "Monarch", "Piedmont", "Contoso", "Fabrikam", "Northwind", "Tailspin",
];
const EMPLOYERS: [&str; 20] = [
    "Globex", "Nakatomi", "Prestige", "Virtucon", "Dunder", "Sirius", "Zorg", "Weyland", "Encom", "Rekall",
    "Bluth", "Sterling", "Kramerica", "Spacely", "Cogswell", "Ollivander", "Massive", "Wernham", "Gringott", "Mooby",
];

/// Names used by one late-binding variant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LateBindingCast {
    pub ceo: &'static str,
    pub firm: &'static str,
    pub spouse: &'static str,
    pub employer: &'static str,
    pub positions: [usize; 3],
}

pub fn late_binding_cast(variant: u64) -> LateBindingCast {
    let v = variant as usize;
    LateBindingCast {
        ceo: CEOS[v % 20],
        spouse: SPOUSES[(v * 7 + 3) % 20],
        firm: FIRMS[(v * 3 + 1) % 20],
        employer: EMPLOYERS[(v * 11 + 5) % 20],
        positions: [3 + v % 5, 15 + v % 7, 27 + v % 4],
    }
}

pub fn late_binding_question(cast: &LateBindingCast) -> String {
    format!("What is the current employer of the spouse of the CEO of {}?", cast.firm)
}

/// Chat double for a late-binding variant: always routes to chain and
/// rewrites only from entities already present in the evidence.
pub fn late_binding_chat(cast: &LateBindingCast) -> ScriptedChat {
    let c = cast.clone();
    ScriptedChat::from_fn("scripted", move |prompt| {
        if prompt.starts_with("You classify") {
            return Some("ROUTE: chain\nRATIONALE: each hop depends on the previous answer".into());
        }
        if !prompt.starts_with("You judge") {
            return Some(String::new());
        }
        let evidence = prompt.split("Evidence:").nth(1).unwrap_or("");
        let reply = if evidence.contains(&format!("{} works at {}", c.spouse, c.employer)) {
            "SUFFICIENT: yes\nCONFIDENCE: 0.95\nNEXT_QUERY: none".to_string()
        } else if evidence.contains(&format!("{}'s spouse is {}", c.ceo, c.spouse)) {
            format!("SUFFICIENT: no\nCONFIDENCE: 0.5\nNEXT_QUERY: where does {} work", c.spouse)
        } else if evidence.contains(&format!("{} is the CEO", c.ceo)) {
            format!("SUFFICIENT: no\nCONFIDENCE: 0.3\nNEXT_QUERY: who is the spouse of {}", c.ceo)
        } else {
            "SUFFICIENT: no\nCONFIDENCE: 0.0\nNEXT_QUERY: none".to_string()
        };
        Some(reply)
    })
}

/// Three-hop fixture: CEO of a firm, that person's spouse, the spouse's employer.
pub fn late_binding(variant: u64) -> Suite {
    let cast = late_binding_cast(variant);
    let (a, b) = (cast.ceo.to_lowercase(), cast.spouse.to_lowercase());
    let firm = cast.firm.to_lowercase();
    let t = |hop: usize| keyed_unit_vector(&format!("late/{hop}/{variant}"), DIMENSION);
    let seeds = SeedTable::new()
        .with(&format!("ceo of {firm}"), t(1))
        .with(&format!("{a} is the ceo"), t(1))
        .with(&format!("spouse of {a}"), t(2))
        .with(&format!("{a}'s spouse is {b}"), t(2))
        .with(&format!("where does {b} work"), t(3))
        .with(&format!("{b} works at"), t(3));
    let [p1, p2, p3] = cast.positions;
    let planted = vec![
        (0, p1, format!("{} is the CEO of {}.", cast.ceo, cast.firm)),
        (0, p2, format!("{}'s spouse is {}.", cast.ceo, cast.spouse)),
        (0, p3, format!("{} works at {}.", cast.spouse, cast.employer)),
    ];
    let mut config = EngineConfig::default();
    config.stm = StmConfig {
        capacity: 1,
        summary_enabled: false,
    };
    config.profile.enabled = false;
    config.retrieval.nucleus_k = 1;
    config.retrieval.cluster_top_k = 1;
    config.retrieval.neighbors_before = 0;
    config.retrieval.neighbors_after = 0;
    config.models.chat = Some("scripted".into());
    Suite {
        name: "late-binding".into(),
        transcript: build_transcript(1, 40, &planted),
        queries: vec![query(
            format!("hop3-v{variant}"),
            late_binding_question(&cast),
            vec![format!("s1:{p1}"), format!("s1:{p2}"), format!("s1:{p3}")],
            "s1",
        )],
        seeds,
        chat: Some(Arc::new(late_binding_chat(&cast))),
        config,
        template: ScopeTemplate::default(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn planted_fact_recall_is_perfect_with_defaults() {
        let (_, report) = planted_fact(0).run(Mode::Memory, RetrievalOverrides::default(), 1).unwrap();
        assert_eq!(report.aggregate.queries, 10);
        assert_eq!(report.aggregate.mean_recall, 1.0, "{:?}", report.results.iter().filter(|r| !r.hit).map(|r| &r.id).collect::<Vec<_>>());
    }

    #[test]
    fn adjacency_needs_neighbors() {
        let s = adjacency(0);
        let (_, with) = s.run(Mode::Memory, RetrievalOverrides::default(), 1).unwrap();
        let none = RetrievalOverrides {
            neighbors_before: Some(0),
            neighbors_after: Some(0),
            ..Default::default()
        };
        let (_, without) = s.run(Mode::Memory, none, 1).unwrap();
        assert_eq!(with.aggregate.mean_recall, 1.0);
        assert!(without.aggregate.mean_recall < 1.0);
    }

    #[test]
    fn late_binding_needs_the_agent() {
        let s = late_binding(0);
        let (_, agent) = s.run(Mode::Agent, RetrievalOverrides::default(), 1).unwrap();
        let (_, memory) = s.run(Mode::Memory, RetrievalOverrides::default(), 1).unwrap();
        assert_eq!(agent.results[0].recall, 1.0, "{:?}", agent.results[0]);
        assert!(memory.results[0].recall <= 1.0 / 3.0 + 1e-9);
        assert_eq!(agent.results[0].chain_iterations, Some(3));
    }

    #[test]
    fn gold_references_point_at_planted_text() {
        for s in [planted_fact(1), adjacency(1), late_binding(1)] {
            for q in &s.queries {
                for g in &q.gold_episode_ids {
                    let (session, seq) = g.rsplit_once(':').unwrap();
                    let seq: usize = seq.parse().unwrap();
                    let line = s.transcript.iter().filter(|l| l.session_id == session).nth(seq).unwrap();
                    assert!(!USER_FILLER.contains(&line.content.as_str()), "{g} is filler");
                }
            }
        }
    }

    #[test]
    fn unknown_suite_is_an_error() {
        assert!(matches!(suite("nope", 0), Err(HarnessError::UnknownSuite(_))));
    }
}
