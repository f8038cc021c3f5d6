//! Opt-in retrieval agent: routes a query to direct search, parallel
//! decomposition or an iterative query chain, then reranks the pooled
//! evidence against every query it issued.

mod parse;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::ledger::{LedgerNode, TokenLedger};
use crate::ltm::SearchFilter;
use crate::prompts::{self, PromptSet};
use crate::providers::{ChatParams, ChatPort, Completion};
use crate::recall::{
    dedup, render_context, EpisodeCluster, FormatStyle, RecallError, RecallPipeline,
    RetrievalConfig, RetrievalOutcome,
};
use crate::types::MemoryScope;

pub use parse::{parse_route, parse_subqueries, parse_sufficiency, Sufficiency};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Route {
    Direct,
    Split,
    Chain,
}

impl Route {
    pub fn as_str(self) -> &'static str {
        match self {
            Route::Direct => "direct",
            Route::Split => "split",
            Route::Chain => "chain",
        }
    }
}

impl fmt::Display for Route {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Route {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_lowercase().as_str() {
            "direct" => Ok(Route::Direct),
            "split" => Ok(Route::Split),
            "chain" => Ok(Route::Chain),
            other => Err(format!("unknown route `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteDecision {
    pub route: Route,
    pub rationale: String,
    /// (input, output) tokens over all router calls for this query.
    pub router_tokens: (u64, u64),
    /// Set when the route was not read from the router's reply.
    pub fallback: bool,
}

/// What actually ran, which may differ from the routed strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Executed {
    Direct,
    Split,
    SplitWithFallback,
    Chain,
}

/// Advisory, static per-strategy properties.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentCostProfile {
    pub accuracy_score: f64,
    pub token_cost: f64,
    pub time_cost: f64,
}

impl AgentCostProfile {
    pub fn is_valid(&self) -> bool {
        [self.accuracy_score, self.token_cost, self.time_cost]
            .iter()
            .all(|v| v.is_finite() && *v >= 0.0)
    }
}

/// Placeholder values, not measured.
pub fn default_cost_profiles() -> BTreeMap<Route, AgentCostProfile> {
    BTreeMap::from([
        (Route::Direct, AgentCostProfile { accuracy_score: 0.6, token_cost: 1.0, time_cost: 1.0 }),
        (Route::Split, AgentCostProfile { accuracy_score: 0.75, token_cost: 2.0, time_cost: 1.5 }),
        (Route::Chain, AgentCostProfile { accuracy_score: 0.85, token_cost: 4.0, time_cost: 3.0 }),
    ])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgentConfig {
    pub max_iterations: usize,
    pub confidence_threshold: f64,
    pub max_subqueries: usize,
    pub min_subqueries: usize,
    pub cost_profiles: BTreeMap<Route, AgentCostProfile>,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            max_iterations: 3,
            confidence_threshold: 0.8,
            max_subqueries: 6,
            min_subqueries: 2,
            cost_profiles: default_cost_profiles(),
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.max_iterations == 0 {
            return Err("agent.max_iterations must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.confidence_threshold) {
            return Err("agent.confidence_threshold must lie in [0, 1]".into());
        }
        if self.min_subqueries < 2 || self.max_subqueries < self.min_subqueries {
            return Err("agent subquery bounds must satisfy 2 <= min <= max".into());
        }
        if let Some((route, _)) = self.cost_profiles.iter().find(|(_, p)| !p.is_valid()) {
            return Err(format!("cost profile of `{route}` has a negative or non-finite value"));
        }
        Ok(())
    }
}

/// Router root plus one leaf per strategy; built once per agent.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ToolNode {
    pub name: String,
    pub description: String,
    pub cost: Option<AgentCostProfile>,
    pub children: Vec<ToolNode>,
}

impl ToolNode {
    fn build(config: &AgentConfig) -> Self {
        let leaf = |route: Route, description: &str| ToolNode {
            name: route.as_str().into(),
            description: description.into(),
            cost: config.cost_profiles.get(&route).copied(),
            children: Vec::new(),
        };
        ToolNode {
            name: "router".into(),
            description: "classifies the query and dispatches to one strategy".into(),
            cost: None,
            children: vec![
                leaf(Route::Direct, "one search with the query as given"),
                leaf(Route::Split, "independent sub-queries searched in parallel and pooled"),
                leaf(Route::Chain, "search, judge sufficiency, rewrite, repeat"),
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainState {
    pub iteration: usize,
    pub current_query: String,
    pub evidence: Vec<EpisodeCluster>,
    pub query_history: Vec<String>,
    pub confidence: f64,
    pub stopped_early: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentOutcome {
    pub decision: RouteDecision,
    pub executed: Executed,
    /// Every query searched, original first.
    pub queries: Vec<String>,
    pub chain: Option<ChainState>,
    /// Router, strategy and recall warnings for this query.
    pub outcome: RetrievalOutcome,
}

/// Combines the per-query ledger of agent calls with what recall reported.
fn attach(mut outcome: RetrievalOutcome, mut ledger: TokenLedger) -> RetrievalOutcome {
    ledger.merge(&outcome.ledger);
    outcome.ledger = ledger;
    outcome
}

pub struct RetrievalAgent {
    pipeline: Arc<RecallPipeline>,
    chat: Arc<dyn ChatPort>,
    config: AgentConfig,
    prompts: PromptSet,
    tree: ToolNode,
}

impl RetrievalAgent {
    pub fn new(
        pipeline: Arc<RecallPipeline>,
        chat: Arc<dyn ChatPort>,
        config: AgentConfig,
        prompts: PromptSet,
    ) -> Self {
        let tree = ToolNode::build(&config);
        Self {
            pipeline,
            chat,
            config,
            prompts,
            tree,
        }
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    pub fn tool_tree(&self) -> &ToolNode {
        &self.tree
    }

    pub fn pipeline(&self) -> &Arc<RecallPipeline> {
        &self.pipeline
    }

    fn call(&self, node: LedgerNode, prompt: &str, ledger: &mut TokenLedger) -> Option<Completion> {
        match self.chat.complete(prompt, &ChatParams::default()) {
            Ok(c) => {
                ledger.record(node, &c);
                Some(c)
            }
            Err(e) => {
                ledger.record_failed_call(node);
                ledger.warn(format!("{node} call failed: {e}"));
                None
            }
        }
    }

    /// Classifies the query. An unreadable reply is retried once and then
    /// treated as `chain`; an unavailable model yields `direct`.
    pub fn route(&self, query: &str, ledger: &mut TokenLedger) -> RouteDecision {
        let prompt = prompts::fill(&self.prompts.router, &[("query", query)]);
        let mut tokens = (0, 0);
        for attempt in 0..2 {
            let Some(reply) = self.call(LedgerNode::Router, &prompt, ledger) else {
                return RouteDecision {
                    route: Route::Direct,
                    rationale: "router unavailable".into(),
                    router_tokens: tokens,
                    fallback: true,
                };
            };
            tokens.0 += reply.input_tokens;
            tokens.1 += reply.output_tokens;
            if let Some((route, rationale)) = parse_route(&reply.text) {
                return RouteDecision {
                    route,
                    rationale,
                    router_tokens: tokens,
                    fallback: false,
                };
            }
            if attempt == 0 {
                ledger.warn("router reply unreadable, retrying");
            }
        }
        ledger.warn("router reply unreadable twice, defaulting to chain");
        RouteDecision {
            route: Route::Chain,
            rationale: "unreadable router reply".into(),
            router_tokens: tokens,
            fallback: true,
        }
    }

    pub fn run_direct(
        &self,
        query: &str,
        scope: &MemoryScope,
        cfg: &RetrievalConfig,
        filter: &SearchFilter,
    ) -> Result<RetrievalOutcome, RecallError> {
        self.pipeline.search(scope, query, cfg, filter)
    }

    /// Returns the pooled outcome, the queries searched and whether the
    /// decomposition had to fall back to a direct search.
    pub fn run_split(
        &self,
        query: &str,
        scope: &MemoryScope,
        cfg: &RetrievalConfig,
        filter: &SearchFilter,
        ledger: &mut TokenLedger,
    ) -> Result<(RetrievalOutcome, Vec<String>, bool), RecallError> {
        let prompt = prompts::fill(&self.prompts.split, &[("query", query)]);
        let mut subqueries = match self.call(LedgerNode::Split, &prompt, ledger) {
            Some(reply) => parse_subqueries(&reply.text),
            None => Vec::new(),
        };
        if subqueries.len() < self.config.min_subqueries {
            ledger.warn(format!(
                "decomposition produced {} sub-queries, searching directly",
                subqueries.len()
            ));
            let outcome = self.run_direct(query, scope, cfg, filter)?;
            return Ok((outcome, vec![query.to_string()], true));
        }
        if subqueries.len() > self.config.max_subqueries {
            ledger.warn(format!(
                "decomposition produced {} sub-queries, keeping the first {}",
                subqueries.len(),
                self.config.max_subqueries
            ));
            subqueries.truncate(self.config.max_subqueries);
        }

        let results: Vec<Result<RetrievalOutcome, RecallError>> = std::thread::scope(|s| {
            let handles: Vec<_> = subqueries
                .iter()
                .map(|q| s.spawn(move || self.pipeline.search(scope, q, cfg, filter)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("sub-query search panicked"))
                .collect()
        });

        let mut pooled = Vec::new();
        for result in results {
            let outcome = result?;
            ledger.merge(&outcome.ledger);
            pooled.extend(outcome.ltm_clusters);
        }
        let mut queries = vec![query.to_string()];
        queries.extend(subqueries.iter().cloned());
        let budget = cfg.cluster_top_k * subqueries.len();
        let outcome = self.pipeline.finalize_pooled(
            scope,
            &queries,
            pooled,
            budget,
            cfg,
            std::mem::take(ledger),
        );
        *ledger = outcome.ledger.clone();
        Ok((outcome, queries, false))
    }

    pub fn run_chain(
        &self,
        query: &str,
        scope: &MemoryScope,
        cfg: &RetrievalConfig,
        filter: &SearchFilter,
        ledger: &mut TokenLedger,
    ) -> Result<(RetrievalOutcome, ChainState), RecallError> {
        let mut state = ChainState {
            iteration: 0,
            current_query: query.to_string(),
            evidence: Vec::new(),
            query_history: vec![query.to_string()],
            confidence: 0.0,
            stopped_early: false,
        };
        let mut retry_used = false;

        while state.iteration < self.config.max_iterations {
            state.iteration += 1;
            let outcome = self.pipeline.search(scope, &state.current_query, cfg, filter)?;
            ledger.merge(&outcome.ledger);
            let mut pool = std::mem::take(&mut state.evidence);
            pool.extend(outcome.ltm_clusters);
            state.evidence = dedup(pool, &[]);

            let evidence = render_context(
                "",
                &state.evidence,
                &outcome.stm_episodes,
                FormatStyle::StructuredLines,
            );
            let history = state
                .query_history
                .iter()
                .enumerate()
                .map(|(i, q)| format!("{}. {}", i + 1, q))
                .collect::<Vec<_>>()
                .join("\n");
            let evidence = if evidence.is_empty() { "(none)".to_string() } else { evidence };
            let prompt = prompts::fill(
                &self.prompts.sufficiency,
                &[("query", query), ("history", &history), ("evidence", &evidence)],
            );

            let mut verdict = None;
            while let Some(reply) = self.call(LedgerNode::Chain, &prompt, ledger) {
                verdict = parse_sufficiency(&reply.text);
                if verdict.is_some() || retry_used {
                    break;
                }
                retry_used = true;
                ledger.warn("sufficiency reply unreadable, retrying");
            }
            let Some(verdict) = verdict else {
                ledger.warn("sufficiency judgment unavailable, ending chain");
                break;
            };

            state.confidence = verdict.confidence;
            if verdict.sufficient && verdict.confidence >= self.config.confidence_threshold {
                state.stopped_early = true;
                break;
            }
            if state.iteration == self.config.max_iterations {
                break;
            }
            let Some(next) = verdict.next_query else {
                break;
            };
            if state.query_history.iter().any(|q| q.trim() == next.trim()) {
                ledger.warn("rewrite repeats an earlier query, ending chain");
                break;
            }
            state.query_history.push(next.clone());
            state.current_query = next;
        }

        let budget = cfg.cluster_top_k * state.query_history.len();
        let outcome = self.pipeline.finalize_pooled(
            scope,
            &state.query_history,
            state.evidence.clone(),
            budget,
            cfg,
            std::mem::take(ledger),
        );
        *ledger = outcome.ledger.clone();
        Ok((outcome, state))
    }

    /// Routes and executes one query.
    pub fn run(
        &self,
        query: &str,
        scope: &MemoryScope,
        cfg: &RetrievalConfig,
        filter: &SearchFilter,
    ) -> Result<AgentOutcome, RecallError> {
        let query = query.trim();
        if query.is_empty() {
            return Err(RecallError::EmptyQuery);
        }
        cfg.validate()?;
        let mut ledger = TokenLedger::new();
        let decision = self.route(query, &mut ledger);
        match decision.route {
            Route::Direct => {
                let outcome = self.run_direct(query, scope, cfg, filter)?;
                Ok(AgentOutcome {
                    decision,
                    executed: Executed::Direct,
                    queries: vec![query.to_string()],
                    chain: None,
                    outcome: attach(outcome, ledger),
                })
            }
            Route::Split => {
                let (outcome, queries, fell_back) =
                    self.run_split(query, scope, cfg, filter, &mut ledger)?;
                let outcome = if fell_back { attach(outcome, ledger) } else { outcome };
                Ok(AgentOutcome {
                    decision,
                    executed: if fell_back { Executed::SplitWithFallback } else { Executed::Split },
                    queries,
                    chain: None,
                    outcome,
                })
            }
            Route::Chain => {
                let (outcome, state) = self.run_chain(query, scope, cfg, filter, &mut ledger)?;
                Ok(AgentOutcome {
                    decision,
                    executed: Executed::Chain,
                    queries: state.query_history.clone(),
                    chain: Some(state),
                    outcome,
                })
            }
        }
    }
}
