//! Per-node accounting of chat-model token usage.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::providers::Completion;

/// Where a chat call was spent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LedgerNode {
    Router,
    Chain,
    Split,
    Direct,
    Summary,
    Profile,
}

impl LedgerNode {
    /// Nodes belonging to the retrieval agent.
    pub const AGENT: [LedgerNode; 4] = [
        LedgerNode::Router,
        LedgerNode::Chain,
        LedgerNode::Split,
        LedgerNode::Direct,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LedgerNode::Router => "router",
            LedgerNode::Chain => "chain",
            LedgerNode::Split => "split",
            LedgerNode::Direct => "direct",
            LedgerNode::Summary => "summary",
            LedgerNode::Profile => "profile",
        }
    }
}

impl fmt::Display for LedgerNode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeUsage {
    pub calls: u64,
    pub input_tokens: u64,
    pub output_tokens: u64,
}

impl NodeUsage {
    pub fn total_tokens(&self) -> u64 {
        self.input_tokens + self.output_tokens
    }

    fn add(&mut self, other: &NodeUsage) {
        self.calls += other.calls;
        self.input_tokens += other.input_tokens;
        self.output_tokens += other.output_tokens;
    }
}

/// Token usage per node plus warnings raised while producing a result.
///
/// The four agent nodes are always present so reports have stable rows.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenLedger {
    nodes: BTreeMap<LedgerNode, NodeUsage>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl Default for TokenLedger {
    fn default() -> Self {
        Self {
            nodes: LedgerNode::AGENT
                .iter()
                .map(|n| (*n, NodeUsage::default()))
                .collect(),
            warnings: Vec::new(),
        }
    }
}

impl TokenLedger {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records one chat call.
    pub fn record(&mut self, node: LedgerNode, completion: &Completion) {
        let usage = self.nodes.entry(node).or_default();
        usage.calls += 1;
        usage.input_tokens += completion.input_tokens;
        usage.output_tokens += completion.output_tokens;
    }

    /// Records a call that failed before reporting usage.
    pub fn record_failed_call(&mut self, node: LedgerNode) {
        self.nodes.entry(node).or_default().calls += 1;
    }

    pub fn warn(&mut self, message: impl Into<String>) {
        self.warnings.push(message.into());
    }

    pub fn node(&self, node: LedgerNode) -> NodeUsage {
        self.nodes.get(&node).copied().unwrap_or_default()
    }

    pub fn nodes(&self) -> impl Iterator<Item = (LedgerNode, NodeUsage)> + '_ {
        self.nodes.iter().map(|(n, u)| (*n, *u))
    }

    pub fn totals(&self) -> NodeUsage {
        let mut total = NodeUsage::default();
        for usage in self.nodes.values() {
            total.add(usage);
        }
        total
    }

    pub fn agent_totals(&self) -> NodeUsage {
        let mut total = NodeUsage::default();
        for node in LedgerNode::AGENT {
            total.add(&self.node(node));
        }
        total
    }

    pub fn merge(&mut self, other: &TokenLedger) {
        for (node, usage) in &other.nodes {
            self.nodes.entry(*node).or_default().add(usage);
        }
        self.warnings.extend(other.warnings.iter().cloned());
    }

    pub fn is_zero(&self) -> bool {
        self.totals() == NodeUsage::default()
    }
}

/// Flattened ledger view: one row per node plus a total row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostReport {
    pub rows: Vec<CostRow>,
    pub total: NodeUsage,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostRow {
    pub node: LedgerNode,
    #[serde(flatten)]
    pub usage: NodeUsage,
}

/// Builds the per-node and total cost report for a ledger.
pub fn account(ledger: &TokenLedger) -> CostReport {
    CostReport {
        rows: ledger
            .nodes()
            .map(|(node, usage)| CostRow { node, usage })
            .collect(),
        total: ledger.totals(),
        warnings: ledger.warnings.clone(),
    }
}

impl fmt::Display for CostReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<10} {:>6} {:>12} {:>12}", "node", "calls", "input", "output")?;
        for row in &self.rows {
            writeln!(
                f,
                "{:<10} {:>6} {:>12} {:>12}",
                row.node.as_str(),
                row.usage.calls,
                row.usage.input_tokens,
                row.usage.output_tokens
            )?;
        }
        write!(
            f,
            "{:<10} {:>6} {:>12} {:>12}",
            "total", self.total.calls, self.total.input_tokens, self.total.output_tokens
        )
    }
}
