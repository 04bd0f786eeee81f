#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tracerank::graph::{aggregate_flows, normalize, FlowParams, TransitionMatrix};
use tracerank::{Address, PaymentEdge, PaymentGraph, SeedVector};

pub const DAY: i64 = 86_400;

pub fn addr(s: &str) -> Address {
    Address::new(s).unwrap()
}

pub fn node(k: usize) -> Address {
    addr(&format!("n{k:03}"))
}

/// A random payment graph with up to `max_nodes` nodes and `max_edges`
/// edges, payment values in [0, 1000) USD (about 5% exactly zero) and
/// timestamps over 90 days.
pub fn random_graph(rng: &mut ChaCha8Rng, max_nodes: usize, max_edges: usize) -> PaymentGraph {
    let n = rng.gen_range(2..=max_nodes);
    let m = rng.gen_range(0..=max_edges);
    let mut g = PaymentGraph::new();
    for k in 0..n {
        g.add_node(node(k));
    }
    for _ in 0..m {
        let payer = rng.gen_range(0..n);
        let mut payee = rng.gen_range(0..n - 1);
        if payee >= payer {
            payee += 1;
        }
        let value_usd = if rng.gen_bool(0.05) {
            0.0
        } else {
            rng.gen_range(0.0..1000.0)
        };
        g.add_payment(PaymentEdge {
            payer: node(payer),
            payee: node(payee),
            value_usd,
            timestamp: rng.gen_range(0..90 * DAY),
        })
        .unwrap();
    }
    g
}

pub fn random_seeds(rng: &mut ChaCha8Rng, g: &PaymentGraph) -> SeedVector {
    g.nodes()
        .iter()
        .map(|a| (a.clone(), rng.gen_range(0.0..1.0)))
        .collect()
}

pub fn transition(g: &PaymentGraph) -> TransitionMatrix {
    normalize(&aggregate_flows(g, &FlowParams::default()).unwrap())
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// The four-node propagation example: payers a (seed 0.9) and b (seed 0.1)
/// each pay services x and y with equal flows.
pub fn fig1() -> (PaymentGraph, SeedVector) {
    let mut g = PaymentGraph::new();
    for (p, q) in [("a", "x"), ("a", "y"), ("b", "x"), ("b", "y")] {
        g.add_payment(PaymentEdge {
            payer: addr(p),
            payee: addr(q),
            value_usd: 10.0,
            timestamp: 0,
        })
        .unwrap();
    }
    let seeds = [(addr("a"), 0.9), (addr("b"), 0.1)].into_iter().collect();
    (g, seeds)
}
