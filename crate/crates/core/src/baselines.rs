//! Reference rankings that ignore who paid: inbound payment count, inbound
//! USD volume, and unseeded PageRank.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Address, FlowMatrix, PaymentGraph};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaselineMethod {
    Count,
    Volume,
    PageRank,
}

impl fmt::Display for BaselineMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BaselineMethod::Count => "count",
            BaselineMethod::Volume => "volume",
            BaselineMethod::PageRank => "pagerank",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineScore {
    pub method: BaselineMethod,
    pub scores: BTreeMap<Address, f64>,
    /// Iterations used; 0 for the closed-form methods.
    pub iterations: usize,
    pub converged: bool,
}

impl BaselineScore {
    fn closed_form(method: BaselineMethod, scores: BTreeMap<Address, f64>) -> Self {
        BaselineScore {
            method,
            scores,
            iterations: 0,
            converged: true,
        }
    }

    pub fn get(&self, address: &Address) -> f64 {
        self.scores.get(address).copied().unwrap_or(0.0)
    }
}

fn zeros(graph: &PaymentGraph) -> BTreeMap<Address, f64> {
    graph.nodes().iter().map(|a| (a.clone(), 0.0)).collect()
}

/// Number of inbound payments per address.
pub fn count_rank(graph: &PaymentGraph) -> BaselineScore {
    let mut scores = zeros(graph);
    for e in graph.edges() {
        *scores.get_mut(&e.payee).expect("payee is a node") += 1.0;
    }
    BaselineScore::closed_form(BaselineMethod::Count, scores)
}

/// Inbound USD volume per address.
pub fn volume_rank(graph: &PaymentGraph) -> BaselineScore {
    let mut scores = zeros(graph);
    for e in graph.edges() {
        *scores.get_mut(&e.payee).expect("payee is a node") += e.value_usd;
    }
    BaselineScore::closed_form(BaselineMethod::Volume, scores)
}

/// Edge weights for unseeded PageRank.
#[derive(Debug, Clone, Copy)]
pub enum PageRankWeights<'a> {
    /// Aggregated flows, row-normalized over each payer's outflow.
    Flows(&'a FlowMatrix),
    /// One unit per distinct payer→payee pair.
    Adjacency,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PageRankConfig {
    pub damping: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PageRankConfig {
    fn default() -> Self {
        PageRankConfig {
            damping: 0.85,
            tol: 1e-9,
            max_iter: 200,
        }
    }
}

impl PageRankConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.damping > 0.0 && self.damping < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "damping must lie in (0, 1), got {}",
                self.damping
            )));
        }
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "tol must be a positive finite number, got {}",
                self.tol
            )));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidParameter("max_iter must be positive".into()));
        }
        Ok(())
    }
}

/// Classic PageRank with uniform teleportation; dangling nodes spread their
/// mass uniformly. Scores sum to 1.
pub fn pagerank_unseeded(
    graph: &PaymentGraph,
    weights: PageRankWeights<'_>,
    cfg: &PageRankConfig,
) -> Result<BaselineScore> {
    cfg.validate()?;
    let nodes: Vec<Address> = graph.nodes().iter().cloned().collect();
    let n = nodes.len();
    if n == 0 {
        return Err(Error::InvalidParameter(
            "pagerank needs a nonempty node set".into(),
        ));
    }
    let index = |a: &Address| nodes.binary_search(a).expect("address is a node");

    // raw weight per (payee, payer), column-major
    let mut raw: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    match weights {
        PageRankWeights::Flows(flows) => {
            if flows.nodes() != nodes.as_slice() {
                return Err(Error::InvalidParameter(
                    "flow matrix was built over a different address universe".into(),
                ));
            }
            for (j, i, f) in flows.entries() {
                if f > 0.0 {
                    raw.insert((i, j), f);
                }
            }
        }
        PageRankWeights::Adjacency => {
            for e in graph.edges() {
                raw.insert((index(&e.payee), index(&e.payer)), 1.0);
            }
        }
    }

    let mut out_total = vec![0.0; n];
    for (&(_, j), &w) in &raw {
        out_total[j] += w;
    }
    let dangling: Vec<usize> = (0..n).filter(|&j| out_total[j] == 0.0).collect();
    let mut incoming: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for (&(i, j), &w) in &raw {
        incoming[i].push((j, w / out_total[j]));
    }

    let d = cfg.damping;
    let nf = n as f64;
    let mut x = vec![1.0 / nf; n];
    let mut next = vec![0.0; n];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < cfg.max_iter {
        iterations += 1;
        let dangling_mass: f64 = dangling.iter().map(|&j| x[j]).sum();
        let base = (1.0 - d) / nf + d * dangling_mass / nf;
        for (i, slot) in next.iter_mut().enumerate() {
            let pulled: f64 = incoming[i].iter().map(|&(j, p)| p * x[j]).sum();
            *slot = base + d * pulled;
        }
        let diff: f64 = x.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
        std::mem::swap(&mut x, &mut next);
        if diff <= cfg.tol {
            converged = true;
            break;
        }
    }

    Ok(BaselineScore {
        method: BaselineMethod::PageRank,
        scores: nodes.into_iter().zip(x).collect(),
        iterations,
        converged,
    })
}
