//! Deterministic adversarial economies.
//!
//! The spam-service scenario pits a service farmed by many fresh, unseeded
//! wallets against a service used by a few reputable payers, and checks
//! which service each ranking method prefers.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::baselines::{
    count_rank, pagerank_unseeded, volume_rank, PageRankConfig, PageRankWeights,
};
use crate::error::{Error, Result};
use crate::graph::{aggregate_flows, normalize, Address, FlowParams, PaymentEdge, PaymentGraph};
use crate::retrieval::ServiceProfile;
use crate::solver::{tracerank_power, SeedVector, SolverConfig};

/// 2025-01-01T00:00:00Z
pub const DEFAULT_START: i64 = 1_735_689_600;
const DAY: i64 = 86_400;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioSpec {
    pub name: String,
    pub rng_seed: u64,
    pub parameters: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpamScenarioParams {
    pub n_spam_payers: usize,
    pub spam_value: f64,
    /// Payments per spam wallet; 1 means fresh wallets paying once.
    pub spam_payments_per_wallet: usize,
    pub spam_seed: f64,
    pub n_legit_payers: usize,
    pub legit_total: f64,
    pub legit_seed: f64,
    /// Relative spread of legit payment sizes in `[0, 1)`; 0 splits evenly.
    pub legit_spread: f64,
    pub legit_days: i64,
    pub spam_days: i64,
    pub start: i64,
    pub rng_seed: u64,
}

impl Default for SpamScenarioParams {
    fn default() -> Self {
        SpamScenarioParams {
            n_spam_payers: 10_000,
            spam_value: 1.0,
            spam_payments_per_wallet: 1,
            spam_seed: 0.0,
            n_legit_payers: 50,
            legit_total: 5_000.0,
            legit_seed: 0.9,
            legit_spread: 0.0,
            legit_days: 30,
            spam_days: 3,
            start: DEFAULT_START,
            rng_seed: 402,
        }
    }
}

impl SpamScenarioParams {
    pub fn validate(&self) -> Result<()> {
        let nonneg = |name: &str, v: f64| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!(
                    "{name} must be finite and >= 0, got {v}"
                )))
            }
        };
        nonneg("spam_value", self.spam_value)?;
        nonneg("spam_seed", self.spam_seed)?;
        nonneg("legit_total", self.legit_total)?;
        nonneg("legit_seed", self.legit_seed)?;
        if !(0.0..1.0).contains(&self.legit_spread) {
            return Err(Error::InvalidParameter(format!(
                "legit_spread must lie in [0, 1), got {}",
                self.legit_spread
            )));
        }
        if self.spam_payments_per_wallet == 0 {
            return Err(Error::InvalidParameter(
                "spam_payments_per_wallet must be positive".into(),
            ));
        }
        if self.legit_days <= 0 || self.spam_days <= 0 || self.spam_days > self.legit_days {
            return Err(Error::InvalidParameter(
                "need 0 < spam_days <= legit_days".into(),
            ));
        }
        Ok(())
    }

    pub fn spec(&self) -> ScenarioSpec {
        let parameters = [
            ("n_spam_payers", self.n_spam_payers as f64),
            ("spam_value", self.spam_value),
            (
                "spam_payments_per_wallet",
                self.spam_payments_per_wallet as f64,
            ),
            ("spam_seed", self.spam_seed),
            ("n_legit_payers", self.n_legit_payers as f64),
            ("legit_total", self.legit_total),
            ("legit_seed", self.legit_seed),
            ("legit_spread", self.legit_spread),
            ("legit_days", self.legit_days as f64),
            ("spam_days", self.spam_days as f64),
            ("start", self.start as f64),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        ScenarioSpec {
            name: "spam".into(),
            rng_seed: self.rng_seed,
            parameters,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub spec: ScenarioSpec,
    pub graph: PaymentGraph,
    pub seeds: SeedVector,
    pub profiles: Vec<ServiceProfile>,
    /// The spam service.
    pub service_a: Address,
    /// The legitimate service.
    pub service_b: Address,
}

struct AddressFactory {
    rng: ChaCha8Rng,
    used: BTreeSet<Address>,
}

impl AddressFactory {
    fn next(&mut self) -> Address {
        loop {
            let mut bytes = [0u8; 20];
            self.rng.fill_bytes(&mut bytes);
            let a = Address::new(&format!("0x{}", hex::encode(bytes))).expect("non-empty");
            if self.used.insert(a.clone()) {
                return a;
            }
        }
    }
}

fn legit_values(rng: &mut ChaCha8Rng, params: &SpamScenarioParams) -> Vec<f64> {
    let n = params.n_legit_payers;
    if n == 0 {
        return Vec::new();
    }
    if params.legit_spread == 0.0 {
        return vec![params.legit_total / n as f64; n];
    }
    let weights: Vec<f64> = (0..n)
        .map(|_| 1.0 + params.legit_spread * (2.0 * rng.gen::<f64>() - 1.0))
        .collect();
    let total_weight: f64 = weights.iter().sum();
    let mut values: Vec<f64> = weights
        .iter()
        .map(|w| params.legit_total * w / total_weight)
        .collect();
    let head: f64 = values[..n - 1].iter().sum();
    values[n - 1] = (params.legit_total - head).max(0.0);
    values
}

/// Builds the spam-service economy. Identical parameters (including
/// `rng_seed`) give identical graphs, seeds, and profiles.
pub fn scenario_spam(params: &SpamScenarioParams) -> Result<Scenario> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.rng_seed);
    let mut factory = AddressFactory {
        rng: ChaCha8Rng::seed_from_u64(params.rng_seed ^ 0x9e37_79b9_7f4a_7c15),
        used: BTreeSet::new(),
    };
    let service_a = factory.next();
    let service_b = factory.next();

    let end = params.start + params.legit_days * DAY;
    let spam_start = end - params.spam_days * DAY;

    let mut graph = PaymentGraph::new();
    let mut seeds = SeedVector::new();

    for value in legit_values(&mut rng, params) {
        let payer = factory.next();
        let timestamp = rng.gen_range(params.start..=end);
        seeds.insert(payer.clone(), params.legit_seed)?;
        graph.add_payment(PaymentEdge {
            payer,
            payee: service_b.clone(),
            value_usd: value,
            timestamp,
        })?;
    }
    for _ in 0..params.n_spam_payers {
        let payer = factory.next();
        if params.spam_seed > 0.0 {
            seeds.insert(payer.clone(), params.spam_seed)?;
        }
        for _ in 0..params.spam_payments_per_wallet {
            let timestamp = rng.gen_range(spam_start..=end);
            graph.add_payment(PaymentEdge {
                payer: payer.clone(),
                payee: service_a.clone(),
                value_usd: params.spam_value,
                timestamp,
            })?;
        }
    }
    graph.add_node(service_a.clone());
    graph.add_node(service_b.clone());

    let profiles = vec![
        ServiceProfile {
            address: service_a.clone(),
            description: "Send $1, receive 1M airdrop. Claim free airdrop tokens instantly, \
                          limited-time giveaway for early wallets."
                .into(),
            tags: vec!["airdrop".into(), "giveaway".into()],
            chain: Some("base".into()),
            embedding: None,
        },
        ServiceProfile {
            address: service_b.clone(),
            description: "Background check service for counterparties: identity verification, \
                          sanctions screening and due diligence reports for traders and protocols."
                .into(),
            tags: vec!["compliance".into(), "identity".into()],
            chain: Some("base".into()),
            embedding: None,
        },
    ];

    Ok(Scenario {
        spec: params.spec(),
        graph,
        seeds,
        profiles,
        service_a,
        service_b,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Winner {
    A,
    B,
    Tie,
}

impl Winner {
    fn of(score_a: f64, score_b: f64) -> Self {
        if score_a > score_b {
            Winner::A
        } else if score_b > score_a {
            Winner::B
        } else {
            Winner::Tie
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodOutcome {
    pub method: String,
    pub score_a: f64,
    pub score_b: f64,
    pub winner: Winner,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioVerdict {
    pub service_a: Address,
    pub service_b: Address,
    pub outcomes: Vec<MethodOutcome>,
    /// TraceRank strictly prefers B.
    pub tracerank_prefers_b: bool,
    /// Count, volume, and PageRank all strictly prefer A.
    pub baselines_prefer_a: bool,
    /// Both of the above.
    pub inversion: bool,
}

impl ScenarioVerdict {
    pub fn outcome(&self, method: &str) -> Option<&MethodOutcome> {
        self.outcomes.iter().find(|o| o.method == method)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct VerdictConfig {
    pub solver: SolverConfig,
    pub flows: FlowParams,
    pub pagerank: PageRankConfig,
}

/// Ranks the two services with every method and reports who wins.
pub fn scenario_verdict(scenario: &Scenario, cfg: &VerdictConfig) -> Result<ScenarioVerdict> {
    let (a, b) = (&scenario.service_a, &scenario.service_b);
    let flows = aggregate_flows(&scenario.graph, &cfg.flows)?;
    let w = normalize(&flows);
    let reputation = tracerank_power(&w, &scenario.seeds, &cfg.solver)?;
    reputation.ensure_converged()?;
    let pagerank = pagerank_unseeded(
        &scenario.graph,
        PageRankWeights::Flows(&flows),
        &cfg.pagerank,
    )?;
    if !pagerank.converged {
        return Err(Error::NotConverged {
            iterations: pagerank.iterations,
            residual: f64::NAN,
        });
    }
    let count = count_rank(&scenario.graph);
    let volume = volume_rank(&scenario.graph);

    let outcome = |method: &str, sa: f64, sb: f64| MethodOutcome {
        method: method.into(),
        score_a: sa,
        score_b: sb,
        winner: Winner::of(sa, sb),
    };
    let outcomes = vec![
        outcome("tracerank", reputation.get(a), reputation.get(b)),
        outcome("count", count.get(a), count.get(b)),
        outcome("volume", volume.get(a), volume.get(b)),
        outcome("pagerank", pagerank.get(a), pagerank.get(b)),
    ];
    let tracerank_prefers_b = outcomes[0].winner == Winner::B;
    let baselines_prefer_a = outcomes[1..].iter().all(|o| o.winner == Winner::A);
    Ok(ScenarioVerdict {
        service_a: a.clone(),
        service_b: b.clone(),
        outcomes,
        tracerank_prefers_b,
        baselines_prefer_a,
        inversion: tracerank_prefers_b && baselines_prefer_a,
    })
}
