//! Seeded reputation propagation: `r = s + alpha * W^T r`.
//!
//! [`tracerank_power`] runs the fixed-point iteration from `r0 = s`.
//! [`tracerank_direct`] solves `(I - alpha W^T) r = s` with a dense LU
//! factorization and is only meant for small graphs, mostly as a
//! cross-check of the iteration.

use std::collections::{BTreeMap, VecDeque};
use std::io::Read;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{Address, TransitionMatrix};

pub const DEFAULT_ALPHA: f64 = 0.85;
pub const DEFAULT_TOL: f64 = 1e-9;
pub const DEFAULT_MAX_ITER: usize = 200;
/// Largest universe accepted by the dense solver.
pub const DENSE_LIMIT: usize = 2_000;

/// Externally sourced per-address reputation. Absent addresses have seed 0.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SeedVector {
    scores: BTreeMap<Address, f64>,
}

impl SeedVector {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, address: Address, seed: f64) -> Result<()> {
        if !seed.is_finite() || seed < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "seed for {address} must be finite and >= 0, got {seed}"
            )));
        }
        self.scores.insert(address, seed + 0.0);
        Ok(())
    }

    pub fn get(&self, address: &Address) -> f64 {
        self.scores.get(address).copied().unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Address, f64)> {
        self.scores.iter().map(|(a, &s)| (a, s))
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.scores.values().sum()
    }

    /// Seeds aligned with `nodes`.
    pub fn dense(&self, nodes: &[Address]) -> Vec<f64> {
        nodes.iter().map(|a| self.get(a)).collect()
    }

    /// Multiplies every seed by `factor >= 0`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        let mut out = SeedVector::new();
        for (a, s) in self.iter() {
            out.insert(a.clone(), s * factor)?;
        }
        Ok(out)
    }

    /// Reads `address,seed` CSV with a header row. Repeated addresses are
    /// rejected.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr.headers()?.clone();
        let column = |name: &str| {
            headers
                .iter()
                .position(|h| h.eq_ignore_ascii_case(name))
                .ok_or_else(|| Error::record(1, format!("header is missing column `{name}`")))
        };
        let (addr_col, seed_col) = (column("address")?, column("seed")?);
        let mut seeds = SeedVector::new();
        for result in rdr.records() {
            let record = result.map_err(|e| {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                Error::record(line, e.to_string())
            })?;
            let line = record.position().map(|p| p.line()).unwrap_or(0);
            let raw_addr = record.get(addr_col).unwrap_or("");
            let raw_seed = record.get(seed_col).unwrap_or("");
            let address =
                Address::new(raw_addr).map_err(|_| Error::record(line, "address is empty"))?;
            let seed: f64 = raw_seed
                .parse()
                .map_err(|_| Error::record(line, format!("seed {raw_seed:?} is not a number")))?;
            if seeds.scores.contains_key(&address) {
                return Err(Error::record(line, format!("duplicate seed for {address}")));
            }
            seeds
                .insert(address, seed)
                .map_err(|e| Error::record(line, e.to_string()))?;
        }
        Ok(seeds)
    }
}

impl FromIterator<(Address, f64)> for SeedVector {
    /// Panics on negative or non-finite seeds; use [`SeedVector::insert`]
    /// for untrusted input.
    fn from_iter<I: IntoIterator<Item = (Address, f64)>>(iter: I) -> Self {
        let mut seeds = SeedVector::new();
        for (a, s) in iter {
            seeds.insert(a, s).expect("valid seed");
        }
        seeds
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolverConfig {
    pub alpha: f64,
    /// L1 threshold on successive iterates.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            alpha: DEFAULT_ALPHA,
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

impl SolverConfig {
    pub fn with_alpha(alpha: f64) -> Self {
        SolverConfig {
            alpha,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        validate_alpha(self.alpha)?;
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

fn validate_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )))
    }
}

/// Converged (or best-effort) reputation scores over a fixed universe.
#[derive(Debug, Clone, PartialEq)]
pub struct ReputationVector {
    nodes: Vec<Address>,
    scores: Vec<f64>,
    pub iterations_used: usize,
    /// L1 distance between the last two iterates (power iteration) or
    /// `||(I - alpha W^T) r - s||_1` (direct solve).
    pub residual_l1: f64,
    /// Per-iteration L1 residuals, empty for the direct solve.
    pub residuals: Vec<f64>,
    pub converged: bool,
}

impl ReputationVector {
    /// Wraps precomputed scores, e.g. scores read back from disk.
    pub fn from_scores(scores: impl IntoIterator<Item = (Address, f64)>, converged: bool) -> Self {
        let map: BTreeMap<Address, f64> = scores.into_iter().collect();
        let (nodes, scores) = map.into_iter().unzip();
        ReputationVector {
            nodes,
            scores,
            iterations_used: 0,
            residual_l1: 0.0,
            residuals: Vec::new(),
            converged,
        }
    }

    pub fn nodes(&self) -> &[Address] {
        &self.nodes
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    /// Score of `address`, 0 when outside the universe.
    pub fn get(&self, address: &Address) -> f64 {
        self.nodes
            .binary_search(address)
            .map(|i| self.scores[i])
            .unwrap_or(0.0)
    }

    pub fn contains(&self, address: &Address) -> bool {
        self.nodes.binary_search(address).is_ok()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Address, f64)> {
        self.nodes.iter().zip(self.scores.iter().copied())
    }

    pub fn l1_norm(&self) -> f64 {
        self.scores.iter().map(|x| x.abs()).sum()
    }

    /// Every score multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        ReputationVector {
            scores: self.scores.iter().map(|x| x * factor).collect(),
            ..self.clone()
        }
    }

    pub fn ensure_converged(&self) -> Result<()> {
        if self.converged {
            Ok(())
        } else {
            Err(Error::NotConverged {
                iterations: self.iterations_used,
                residual: self.residual_l1,
            })
        }
    }
}

fn l1_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// Power iteration `r(t+1) = s + alpha W^T r(t)` starting from `r(0) = s`.
///
/// Stops once the L1 change between iterates is at most `cfg.tol`. When
/// `cfg.max_iter` is exhausted the last iterate is returned with
/// `converged == false`.
pub fn tracerank_power(
    w: &TransitionMatrix,
    seeds: &SeedVector,
    cfg: &SolverConfig,
) -> Result<ReputationVector> {
    cfg.validate()?;
    let s = seeds.dense(w.nodes());
    let mut current = s.clone();
    let mut propagated = vec![0.0; s.len()];
    let mut residuals = Vec::new();
    let mut converged = false;

    for _ in 0..cfg.max_iter {
        w.transpose_mul(&current, &mut propagated);
        let next: Vec<f64> = s
            .iter()
            .zip(&propagated)
            .map(|(si, pi)| si + cfg.alpha * pi)
            .collect();
        let residual = l1_distance(&next, &current);
        residuals.push(residual);
        current = next;
        if residual <= cfg.tol {
            converged = true;
            break;
        }
    }

    Ok(ReputationVector {
        nodes: w.nodes().to_vec(),
        scores: current,
        iterations_used: residuals.len(),
        residual_l1: residuals.last().copied().unwrap_or(0.0),
        residuals,
        converged,
    })
}

/// Dense solve of `(I - alpha W^T) r = s`.
pub fn tracerank_direct(
    w: &TransitionMatrix,
    seeds: &SeedVector,
    alpha: f64,
) -> Result<ReputationVector> {
    validate_alpha(alpha)?;
    let n = w.len();
    if n > DENSE_LIMIT {
        return Err(Error::TooLargeForDense {
            nodes: n,
            limit: DENSE_LIMIT,
        });
    }
    let mut system = DMatrix::<f64>::identity(n, n);
    for (j, i, weight) in w.entries() {
        // row i of W^T holds column i of W
        system[(i, j)] -= alpha * weight;
    }
    let s = DVector::from_vec(seeds.dense(w.nodes()));
    let solution = system.clone().lu().solve(&s).ok_or(Error::Singular)?;
    let residual_l1 = (&system * &solution - &s).abs().sum();
    Ok(ReputationVector {
        nodes: w.nodes().to_vec(),
        // the exact solution is nonnegative; only rounding can go below 0
        scores: solution.iter().map(|x| x.max(0.0)).collect(),
        iterations_used: 0,
        residual_l1,
        residuals: Vec::new(),
        converged: true,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SybilReport {
    pub address: Address,
    pub score: f64,
    pub own_seed: f64,
    /// Addresses with a positive-weight path into `address`, excluding it.
    pub upstream_count: usize,
    /// Total seed over `address` and its upstream addresses.
    pub reachable_seed_mass: f64,
    /// True when no seed can reach `address`; the score is then exactly 0.
    pub zero_mass: bool,
    pub converged: bool,
}

/// Score of `service` together with the seed mass that can flow into it.
pub fn sybil_check(
    service: &Address,
    w: &TransitionMatrix,
    seeds: &SeedVector,
    cfg: &SolverConfig,
) -> Result<SybilReport> {
    let target = w
        .index_of(service)
        .ok_or_else(|| Error::UnknownAddress(service.to_string()))?;
    let reputation = tracerank_power(w, seeds, cfg)?;

    let mut seen = vec![false; w.len()];
    seen[target] = true;
    let mut queue = VecDeque::from([target]);
    let mut upstream_count = 0;
    let mut mass = 0.0;
    while let Some(i) = queue.pop_front() {
        mass += seeds.get(&w.nodes()[i]);
        for (j, weight) in w.column(i) {
            if weight > 0.0 && !seen[j] {
                seen[j] = true;
                upstream_count += 1;
                queue.push_back(j);
            }
        }
    }

    Ok(SybilReport {
        address: service.clone(),
        score: reputation.scores[target],
        own_seed: seeds.get(service),
        upstream_count,
        reachable_seed_mass: mass,
        zero_mass: mass == 0.0,
        converged: reputation.converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{normalize, FlowMatrix};

    fn addr(s: &str) -> Address {
        Address::new(s).unwrap()
    }

    fn matrix(edges: &[(&str, &str, f64)]) -> TransitionMatrix {
        let f = FlowMatrix::from_entries([], edges.iter().map(|&(j, i, f)| (addr(j), addr(i), f)))
            .unwrap();
        normalize(&f)
    }

    fn fig1() -> (TransitionMatrix, SeedVector) {
        let w = matrix(&[
            ("a", "x", 1.0),
            ("a", "y", 1.0),
            ("b", "x", 1.0),
            ("b", "y", 1.0),
        ]);
        let s: SeedVector = [(addr("a"), 0.9), (addr("b"), 0.1)].into_iter().collect();
        (w, s)
    }

    #[test]
    fn alpha_out_of_range_rejected() {
        let (w, s) = fig1();
        for alpha in [0.0, 1.0, 1.5, -0.2, f64::NAN] {
            assert!(tracerank_power(&w, &s, &SolverConfig::with_alpha(alpha)).is_err());
            assert!(tracerank_direct(&w, &s, alpha).is_err());
        }
        let bad_tol = SolverConfig {
            tol: 0.0,
            ..SolverConfig::default()
        };
        assert!(bad_tol.validate().is_err());
    }

    #[test]
    fn zero_seeds_converge_immediately() {
        let (w, _) = fig1();
        let r = tracerank_power(&w, &SeedVector::new(), &SolverConfig::default()).unwrap();
        assert!(r.converged);
        assert_eq!(r.iterations_used, 1);
        assert!(r.scores().iter().all(|&x| x == 0.0));
        let d = tracerank_direct(&w, &SeedVector::new(), 0.85).unwrap();
        assert!(d.scores().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn edgeless_graph_returns_seeds() {
        let w = TransitionMatrix::empty([addr("a"), addr("b"), addr("c")]);
        let s: SeedVector = [(addr("a"), 0.3), (addr("c"), 2.0)].into_iter().collect();
        let r = tracerank_power(&w, &s, &SolverConfig::default()).unwrap();
        assert_eq!(r.scores(), &[0.3, 0.0, 2.0]);
        assert_eq!(r.iterations_used, 1);
        let d = tracerank_direct(&w, &s, 0.5).unwrap();
        assert_eq!(d.scores(), &[0.3, 0.0, 2.0]);
    }

    #[test]
    fn fig1_power_and_direct_agree() {
        // oracle: x = y = 0.85 * (0.5 * 0.9 + 0.5 * 0.1) = 0.425
        let (w, s) = fig1();
        let expected = [0.9, 0.1, 0.425, 0.425];
        let p = tracerank_power(&w, &s, &SolverConfig::default()).unwrap();
        let d = tracerank_direct(&w, &s, 0.85).unwrap();
        assert!(p.converged);
        for ((pv, dv), ev) in p.scores().iter().zip(d.scores()).zip(expected) {
            assert!((pv - ev).abs() < 1e-12, "{pv} vs {ev}");
            assert!((dv - ev).abs() < 1e-12, "{dv} vs {ev}");
        }
        assert!(l1_distance(p.scores(), d.scores()) <= 1e-10);
    }

    #[test]
    fn non_convergence_is_reported() {
        // a 2-cycle with alpha close to 1 needs far more than 3 iterations
        let w = matrix(&[("a", "b", 1.0), ("b", "a", 1.0)]);
        let s: SeedVector = [(addr("a"), 1.0)].into_iter().collect();
        let cfg = SolverConfig {
            alpha: 0.99,
            tol: 1e-12,
            max_iter: 3,
        };
        let r = tracerank_power(&w, &s, &cfg).unwrap();
        assert!(!r.converged);
        assert_eq!(r.iterations_used, 3);
        assert_eq!(r.residuals.len(), 3);
        assert!(matches!(
            r.ensure_converged(),
            Err(Error::NotConverged { .. })
        ));
    }

    #[test]
    fn dense_guard() {
        let nodes: Vec<Address> = (0..=DENSE_LIMIT).map(|i| addr(&format!("n{i}"))).collect();
        let w = TransitionMatrix::empty(nodes);
        assert!(matches!(
            tracerank_direct(&w, &SeedVector::new(), 0.85),
            Err(Error::TooLargeForDense { .. })
        ));
    }

    #[test]
    fn sybil_many_zero_seed_payers() {
        let payers: Vec<String> = (0..10_000).map(|i| format!("bot{i:05}")).collect();
        let edges: Vec<(&str, &str, f64)> =
            payers.iter().map(|p| (p.as_str(), "svc", 1.0)).collect();
        let w = matrix(&edges);
        let report = sybil_check(
            &addr("svc"),
            &w,
            &SeedVector::new(),
            &SolverConfig::default(),
        )
        .unwrap();
        assert_eq!(report.score, 0.0);
        assert!(report.zero_mass);
        assert_eq!(report.upstream_count, 10_000);
    }

    #[test]
    fn sybil_single_seeded_payer() {
        // oracle: direct solve gives r_svc = 0.85 * 1.0
        let w = matrix(&[("p", "svc", 2.0)]);
        let s: SeedVector = [(addr("p"), 1.0)].into_iter().collect();
        let report = sybil_check(&addr("svc"), &w, &s, &SolverConfig::default()).unwrap();
        assert!((report.score - 0.85).abs() < 1e-12);
        assert_eq!(report.reachable_seed_mass, 1.0);
        assert!(!report.zero_mass);
    }

    #[test]
    fn sybil_own_seed_only() {
        let w = matrix(&[("svc", "other", 1.0)]);
        let s: SeedVector = [(addr("svc"), 0.2)].into_iter().collect();
        let report = sybil_check(&addr("svc"), &w, &s, &SolverConfig::default()).unwrap();
        assert_eq!(report.score, 0.2);
        assert_eq!(report.upstream_count, 0);
        assert!(sybil_check(&addr("ghost"), &w, &s, &SolverConfig::default()).is_err());
    }

    #[test]
    fn seeds_csv() {
        let data = "address,seed\n0xAA,0.9\n0xbb,0\n";
        let s = SeedVector::read_csv(data.as_bytes()).unwrap();
        assert_eq!(s.get(&addr("0xaa")), 0.9);
        assert_eq!(s.len(), 2);

        let dup = "address,seed\n0xAA,0.9\n0xaa,0.1\n";
        assert!(matches!(
            SeedVector::read_csv(dup.as_bytes()),
            Err(Error::Record { line: 3, .. })
        ));
        let neg = "address,seed\n0xAA,-1\n";
        assert!(matches!(
            SeedVector::read_csv(neg.as_bytes()),
            Err(Error::Record { line: 2, .. })
        ));
    }
}
