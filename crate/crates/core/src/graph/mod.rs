//! Payment graph: addresses, observed payments, and the flow/transition
//! matrices derived from them.

mod flow;
mod ingest;

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use flow::{
    aggregate_flows, normalize, FlowMatrix, FlowParams, TransitionMatrix, DEFAULT_LAMBDA,
};
pub use ingest::{
    parse_timestamp, read_payments, read_payments_csv, read_payments_jsonl, IngestOptions,
};

pub const SECONDS_PER_DAY: f64 = 86_400.0;

/// Account identifier, normalized to lowercase.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Address(String);

impl Address {
    pub fn new(raw: &str) -> Result<Self> {
        let trimmed = raw.trim();
        if trimmed.is_empty() {
            return Err(Error::InvalidParameter("address must be non-empty".into()));
        }
        Ok(Address(trimmed.to_lowercase()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for Address {
    type Error = Error;

    fn try_from(value: String) -> Result<Self> {
        Address::new(&value)
    }
}

impl From<Address> for String {
    fn from(value: Address) -> Self {
        value.0
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::str::FromStr for Address {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Address::new(s)
    }
}

/// One observed payment. Timestamps are Unix seconds, UTC.
#[derive(Debug, Clone, PartialEq)]
pub struct PaymentEdge {
    pub payer: Address,
    pub payee: Address,
    pub value_usd: f64,
    pub timestamp: i64,
}

/// Inclusive `[start, end]` bounds in Unix seconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub start: i64,
    pub end: i64,
}

impl Window {
    pub fn new(start: i64, end: i64) -> Result<Self> {
        if start > end {
            return Err(Error::InvalidParameter(format!(
                "window start {start} is after end {end}"
            )));
        }
        Ok(Window { start, end })
    }

    pub fn contains(&self, timestamp: i64) -> bool {
        self.start <= timestamp && timestamp <= self.end
    }
}

/// A validated multigraph of payments.
///
/// Nodes are kept in a sorted set so every derived structure indexes
/// addresses in the same canonical order.
#[derive(Debug, Clone, Default)]
pub struct PaymentGraph {
    nodes: BTreeSet<Address>,
    edges: Vec<PaymentEdge>,
    window: Option<Window>,
    dropped_self_loops: usize,
    outside_window: usize,
}

impl PaymentGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_window(window: Window) -> Self {
        PaymentGraph {
            window: Some(window),
            ..Self::default()
        }
    }

    /// Adds a payment after validation. Self-loops are dropped and counted;
    /// payments outside the window are dropped and counted. Returns whether
    /// the edge was kept.
    pub fn add_payment(&mut self, edge: PaymentEdge) -> Result<bool> {
        if !edge.value_usd.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "value_usd must be finite, got {}",
                edge.value_usd
            )));
        }
        if edge.value_usd < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "value_usd must be non-negative, got {}",
                edge.value_usd
            )));
        }
        if edge.payer == edge.payee {
            self.dropped_self_loops += 1;
            return Ok(false);
        }
        if let Some(w) = self.window {
            if !w.contains(edge.timestamp) {
                self.outside_window += 1;
                return Ok(false);
            }
        }
        self.nodes.insert(edge.payer.clone());
        self.nodes.insert(edge.payee.clone());
        // -0.0 would otherwise survive into serialized output
        let edge = PaymentEdge {
            value_usd: edge.value_usd + 0.0,
            ..edge
        };
        self.edges.push(edge);
        Ok(true)
    }

    /// Adds an isolated node (e.g. a seeded address that has not transacted).
    pub fn add_node(&mut self, address: Address) -> bool {
        self.nodes.insert(address)
    }

    pub fn nodes(&self) -> &BTreeSet<Address> {
        &self.nodes
    }

    pub fn edges(&self) -> &[PaymentEdge] {
        &self.edges
    }

    pub fn window(&self) -> Option<Window> {
        self.window
    }

    pub fn dropped_self_loops(&self) -> usize {
        self.dropped_self_loops
    }

    pub fn outside_window(&self) -> usize {
        self.outside_window
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Addresses that received at least one payment, sorted.
    pub fn payees(&self) -> BTreeSet<Address> {
        self.edges.iter().map(|e| e.payee.clone()).collect()
    }

    pub fn max_timestamp(&self) -> Option<i64> {
        self.edges.iter().map(|e| e.timestamp).max()
    }

    pub fn min_timestamp(&self) -> Option<i64> {
        self.edges.iter().map(|e| e.timestamp).min()
    }

    /// Edges in canonical order: payer, payee, timestamp, value.
    pub fn sorted_edges(&self) -> Vec<&PaymentEdge> {
        let mut edges: Vec<&PaymentEdge> = self.edges.iter().collect();
        edges.sort_by(|a, b| {
            (&a.payer, &a.payee, a.timestamp)
                .cmp(&(&b.payer, &b.payee, b.timestamp))
                .then(a.value_usd.total_cmp(&b.value_usd))
        });
        edges
    }

    pub fn summary(&self) -> GraphSummary {
        GraphSummary {
            node_count: self.node_count(),
            edge_count: self.edge_count(),
            dropped_self_loops: self.dropped_self_loops,
            outside_window: self.outside_window,
            window: self.window,
            first_timestamp: self.min_timestamp(),
            last_timestamp: self.max_timestamp(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphSummary {
    pub node_count: usize,
    pub edge_count: usize,
    pub dropped_self_loops: usize,
    pub outside_window: usize,
    pub window: Option<Window>,
    pub first_timestamp: Option<i64>,
    pub last_timestamp: Option<i64>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn addr(s: &str) -> Address {
        Address::new(s).unwrap()
    }

    #[test]
    fn address_is_case_normalized() {
        assert_eq!(addr("0xABcd"), addr("0xabCD"));
        assert_eq!(addr("  0xAB ").as_str(), "0xab");
        assert!(Address::new("").is_err());
        assert!(Address::new("   ").is_err());
    }

    #[test]
    fn self_loop_is_dropped_and_counted() {
        let mut g = PaymentGraph::new();
        let kept = g
            .add_payment(PaymentEdge {
                payer: addr("0xA"),
                payee: addr("0xa"),
                value_usd: 3.0,
                timestamp: 0,
            })
            .unwrap();
        assert!(!kept);
        assert_eq!(g.dropped_self_loops(), 1);
        assert_eq!(g.edge_count(), 0);
        assert_eq!(g.node_count(), 0);
    }

    #[test]
    fn window_excludes_outside_records() {
        let mut g = PaymentGraph::with_window(Window::new(10, 20).unwrap());
        for ts in [5, 10, 15, 20, 25] {
            g.add_payment(PaymentEdge {
                payer: addr("a"),
                payee: addr("b"),
                value_usd: 1.0,
                timestamp: ts,
            })
            .unwrap();
        }
        assert_eq!(g.edge_count(), 3);
        assert_eq!(g.outside_window(), 2);
        assert!(g.edges().iter().all(|e| (10..=20).contains(&e.timestamp)));
    }

    #[test]
    fn negative_value_rejected() {
        let mut g = PaymentGraph::new();
        let err = g.add_payment(PaymentEdge {
            payer: addr("a"),
            payee: addr("b"),
            value_usd: -5.0,
            timestamp: 0,
        });
        assert!(err.is_err());
    }
}
