//! File-backed pipeline behind the command-line tool:
//! ingest → compute → rank / query / compare.
//!
//! Every stage reads and writes sorted CSV, JSON lines, and JSON summaries
//! inside a single directory, and records a manifest of SHA-256 digests so
//! reruns can be compared byte for byte.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::baselines::{
    count_rank, pagerank_unseeded, volume_rank, BaselineMethod, PageRankConfig, PageRankWeights,
};
use crate::error::{Error, Result};
use crate::graph::{
    aggregate_flows, normalize, read_payments, Address, FlowParams, GraphSummary, IngestOptions,
    PaymentGraph, Window,
};
use crate::output::{
    fmt_num, ser_sig, to_json, write_payments_csv, write_profiles_jsonl, write_seeds_csv,
};
use crate::retrieval::{
    read_profiles_jsonl, QueryOptions, RankedResult, ServiceIndex, ServiceProfile,
};
use crate::scenarios::{
    scenario_spam, scenario_verdict, ScenarioVerdict, SpamScenarioParams, VerdictConfig,
};
use crate::solver::{
    sybil_check, tracerank_power, ReputationVector, SeedVector, SolverConfig, SybilReport,
};

pub const PAYMENTS: &str = "payments.csv";
pub const SEEDS: &str = "seeds.csv";
pub const PROFILES: &str = "profiles.jsonl";
pub const GRAPH_SUMMARY: &str = "graph_summary.json";
pub const INGEST_MANIFEST: &str = "ingest_manifest.json";
pub const FLOWS: &str = "flows.csv";
pub const TRANSITION: &str = "transition.csv";
pub const TRANSITION_SUMMARY: &str = "transition_summary.json";
pub const SCORES_JSONL: &str = "scores.jsonl";
pub const SCORES_CSV: &str = "scores.csv";
pub const RESIDUALS: &str = "residuals.csv";
pub const COMPUTE_MANIFEST: &str = "compute_manifest.json";
pub const SCENARIO: &str = "scenario.json";
pub const VERDICT: &str = "verdict.json";

const INGESTED: [&str; 4] = [PAYMENTS, SEEDS, PROFILES, GRAPH_SUMMARY];

/// Inputs, parameters, and output digests of one command run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: String,
    pub params: BTreeMap<String, Value>,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

impl RunManifest {
    fn new(command: &str) -> Self {
        RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            params: BTreeMap::new(),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn file_name(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

/// Collects output files and writes them with their digests.
struct Outputs<'a> {
    dir: &'a Path,
    manifest: RunManifest,
}

impl<'a> Outputs<'a> {
    fn new(dir: &'a Path, command: &str) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(Outputs {
            dir,
            manifest: RunManifest::new(command),
        })
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        self.manifest
            .outputs
            .insert(name.to_string(), sha256_hex(bytes));
        Ok(())
    }

    fn input(&mut self, name: &str, bytes: &[u8]) {
        self.manifest
            .inputs
            .insert(name.to_string(), sha256_hex(bytes));
    }

    fn param(&mut self, key: &str, value: Value) {
        self.manifest.params.insert(key.to_string(), value);
    }

    fn finish(self, manifest_name: &str) -> Result<RunManifest> {
        let text = to_json(&self.manifest)?;
        let path = self.dir.join(manifest_name);
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        Ok(self.manifest)
    }
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

// ---------------------------------------------------------------- ingest

#[derive(Debug, Clone)]
pub struct IngestArgs {
    pub payments: PathBuf,
    pub seeds: Option<PathBuf>,
    pub profiles: Option<PathBuf>,
    pub window: Option<Window>,
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IngestSummary {
    #[serde(flatten)]
    pub graph: GraphSummary,
    pub seed_count: usize,
    /// Seeded addresses without any payment, added as isolated nodes.
    pub seed_only_nodes: usize,
    pub profile_count: usize,
}

#[derive(Debug, Clone)]
pub struct IngestOutcome {
    pub summary: IngestSummary,
    pub manifest: RunManifest,
    pub warnings: Vec<String>,
}

/// Validates the payments (and optional seeds and profiles) and writes
/// them in canonical form to `out_dir`.
pub fn cmd_ingest(args: &IngestArgs) -> Result<IngestOutcome> {
    let mut warnings = Vec::new();
    let payments_bytes = read_bytes(&args.payments)?;
    let mut graph = read_payments(
        &args.payments,
        IngestOptions {
            window: args.window,
        },
    )?;
    if graph.dropped_self_loops() > 0 {
        warnings.push(format!(
            "dropped {} self-payment record(s)",
            graph.dropped_self_loops()
        ));
    }
    if graph.outside_window() > 0 {
        warnings.push(format!(
            "excluded {} record(s) outside the observation window",
            graph.outside_window()
        ));
    }

    let (seeds, seeds_bytes) = match &args.seeds {
        Some(path) => {
            let bytes = read_bytes(path)?;
            (
                SeedVector::read_csv(bytes.as_slice())?,
                Some((file_name(path), bytes)),
            )
        }
        None => {
            warnings.push("no seeds file given; every seed defaults to 0".into());
            (SeedVector::new(), None)
        }
    };
    let graph_summary = graph.summary();
    let mut seed_only_nodes = 0;
    for (address, _) in seeds.iter() {
        if graph.add_node(address.clone()) {
            seed_only_nodes += 1;
        }
    }

    let (profiles, profiles_bytes) = match &args.profiles {
        Some(path) => {
            let bytes = read_bytes(path)?;
            let profiles = read_profiles_jsonl(bytes.as_slice())?;
            // duplicate and description checks
            ServiceIndex::build(profiles.clone(), profiles_dim(&profiles))?;
            (profiles, Some((file_name(path), bytes)))
        }
        None => (Vec::new(), None),
    };

    let summary = IngestSummary {
        graph: GraphSummary {
            node_count: graph.node_count(),
            ..graph_summary
        },
        seed_count: seeds.len(),
        seed_only_nodes,
        profile_count: profiles.len(),
    };

    let mut out = Outputs::new(&args.out_dir, "ingest")?;
    out.input(&file_name(&args.payments), &payments_bytes);
    if let Some((name, bytes)) = &seeds_bytes {
        out.input(name, bytes);
    }
    if let Some((name, bytes)) = &profiles_bytes {
        out.input(name, bytes);
    }
    out.param("window", json!(args.window));
    out.write(PAYMENTS, &csv_bytes(|b| write_payments_csv(&graph, b))?)?;
    out.write(SEEDS, &csv_bytes(|b| write_seeds_csv(&seeds, b))?)?;
    out.write(
        PROFILES,
        &csv_bytes(|b| write_profiles_jsonl(&profiles, b))?,
    )?;
    out.write(GRAPH_SUMMARY, to_json(&summary)?.as_bytes())?;
    let manifest = out.finish(INGEST_MANIFEST)?;
    Ok(IngestOutcome {
        summary,
        manifest,
        warnings,
    })
}

/// Dimension implied by precomputed embeddings, if any.
fn profiles_dim(profiles: &[ServiceProfile]) -> usize {
    profiles
        .iter()
        .find_map(|p| p.embedding.as_ref().map(Vec::len))
        .unwrap_or(crate::retrieval::DEFAULT_DIM)
}

/// Ingested artifacts loaded back from a directory.
#[derive(Debug, Clone)]
pub struct Ingested {
    pub graph: PaymentGraph,
    pub seeds: SeedVector,
    pub profiles: Vec<ServiceProfile>,
}

fn require(dir: &Path, name: &str) -> Result<PathBuf> {
    let path = dir.join(name);
    if path.is_file() {
        Ok(path)
    } else {
        Err(Error::MissingArtifact(path))
    }
}

pub fn load_ingested(dir: &Path) -> Result<Ingested> {
    let mut graph = read_payments(&require(dir, PAYMENTS)?, IngestOptions::default())?;
    let seeds = SeedVector::read_csv(read_bytes(&require(dir, SEEDS)?)?.as_slice())?;
    for (address, _) in seeds.iter() {
        graph.add_node(address.clone());
    }
    let profiles = match dir.join(PROFILES) {
        p if p.is_file() => read_profiles_jsonl(read_bytes(&p)?.as_slice())?,
        _ => Vec::new(),
    };
    Ok(Ingested {
        graph,
        seeds,
        profiles,
    })
}

// --------------------------------------------------------------- compute

#[derive(Debug, Clone)]
pub struct ComputeArgs {
    pub in_dir: PathBuf,
    pub out_dir: PathBuf,
    pub solver: SolverConfig,
    pub flows: FlowParams,
}

#[derive(Debug, Clone)]
pub struct ComputeOutcome {
    pub reputation: ReputationVector,
    pub manifest: RunManifest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub address: Address,
    #[serde(serialize_with = "ser_sig")]
    pub score: f64,
    #[serde(serialize_with = "ser_sig")]
    pub seed: f64,
    pub iterations_used: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct TransitionSummary {
    nodes: usize,
    entries: usize,
    sink_columns: usize,
    #[serde(serialize_with = "ser_sig")]
    max_column_deviation: f64,
    as_of: i64,
    lambda: f64,
}

/// Aggregates flows, normalizes, and solves for reputation. Artifacts are
/// written even when the iteration does not converge; callers check
/// `reputation.converged`.
pub fn cmd_compute(args: &ComputeArgs) -> Result<ComputeOutcome> {
    args.solver.validate()?;
    args.flows.validate()?;
    let ingested = load_ingested(&args.in_dir)?;
    let flows = aggregate_flows(&ingested.graph, &args.flows)?;
    let w = normalize(&flows);
    let reputation = tracerank_power(&w, &ingested.seeds, &args.solver)?;

    let mut out = Outputs::new(&args.out_dir, "compute")?;
    for name in [PAYMENTS, SEEDS, PROFILES] {
        let path = args.in_dir.join(name);
        if path.is_file() {
            out.input(name, &read_bytes(&path)?);
        }
    }
    if !same_dir(&args.in_dir, &args.out_dir) {
        for name in INGESTED {
            let path = args.in_dir.join(name);
            if path.is_file() {
                out.write(name, &read_bytes(&path)?)?;
            }
        }
    }
    out.param("alpha", json!(args.solver.alpha));
    out.param("tol", json!(args.solver.tol));
    out.param("max_iter", json!(args.solver.max_iter));
    out.param("lambda", json!(args.flows.lambda));
    out.param("as_of", json!(flows.as_of()));
    out.param("clamp_future", json!(args.flows.clamp_future));
    out.param("prune_below", json!(args.flows.prune_below));
    out.param("converged", json!(reputation.converged));
    out.param("iterations_used", json!(reputation.iterations_used));

    let nodes = flows.nodes();
    let flows_csv = csv_bytes(|b| {
        let mut wtr = csv::Writer::from_writer(b);
        wtr.write_record(["payer", "payee", "flow"])?;
        let mut rows: Vec<(usize, usize, f64)> = flows.entries().collect();
        rows.sort_by_key(|&(j, i, _)| (j, i));
        for (j, i, f) in rows {
            wtr.write_record([nodes[j].as_str(), nodes[i].as_str(), &fmt_num(f)])?;
        }
        wtr.flush().map_err(csv::Error::from)?;
        Ok(())
    })?;
    out.write(FLOWS, &flows_csv)?;

    let transition_csv = csv_bytes(|b| {
        let mut wtr = csv::Writer::from_writer(b);
        wtr.write_record(["payer", "payee", "weight"])?;
        let mut rows: Vec<(usize, usize, f64)> = w.entries().collect();
        rows.sort_by_key(|&(j, i, _)| (j, i));
        for (j, i, weight) in rows {
            wtr.write_record([nodes[j].as_str(), nodes[i].as_str(), &fmt_num(weight)])?;
        }
        wtr.flush().map_err(csv::Error::from)?;
        Ok(())
    })?;
    out.write(TRANSITION, &transition_csv)?;

    let summary = TransitionSummary {
        nodes: w.len(),
        entries: w.nnz(),
        sink_columns: w.sink_columns().len(),
        max_column_deviation: w.max_column_deviation(),
        as_of: flows.as_of(),
        lambda: flows.lambda(),
    };
    out.write(TRANSITION_SUMMARY, to_json(&summary)?.as_bytes())?;

    let records: Vec<ScoreRecord> = reputation
        .iter()
        .map(|(a, score)| ScoreRecord {
            address: a.clone(),
            score,
            seed: ingested.seeds.get(a),
            iterations_used: reputation.iterations_used,
        })
        .collect();
    let mut jsonl = String::new();
    for r in &records {
        jsonl.push_str(&serde_json::to_string(r)?);
        jsonl.push('\n');
    }
    out.write(SCORES_JSONL, jsonl.as_bytes())?;
    let scores_csv = csv_bytes(|b| {
        let mut wtr = csv::Writer::from_writer(b);
        wtr.write_record(["address", "score", "seed", "iterations_used"])?;
        for r in &records {
            wtr.write_record([
                r.address.as_str(),
                &fmt_num(r.score),
                &fmt_num(r.seed),
                &r.iterations_used.to_string(),
            ])?;
        }
        wtr.flush().map_err(csv::Error::from)?;
        Ok(())
    })?;
    out.write(SCORES_CSV, &scores_csv)?;

    let mut residuals = String::from("iteration,residual_l1\n");
    for (t, r) in reputation.residuals.iter().enumerate() {
        residuals.push_str(&format!("{},{}\n", t + 1, fmt_num(*r)));
    }
    out.write(RESIDUALS, residuals.as_bytes())?;

    let manifest = out.finish(COMPUTE_MANIFEST)?;
    Ok(ComputeOutcome {
        reputation,
        manifest,
    })
}

fn same_dir(a: &Path, b: &Path) -> bool {
    match (fs::canonicalize(a), fs::canonicalize(b)) {
        (Ok(x), Ok(y)) => x == y,
        _ => a == b,
    }
}

/// Computed scores and the parameters they were computed with.
#[derive(Debug, Clone)]
pub struct Computed {
    pub reputation: ReputationVector,
    pub flows: FlowParams,
    pub solver: SolverConfig,
}

pub fn load_computed(dir: &Path) -> Result<Computed> {
    let manifest: RunManifest =
        serde_json::from_slice(&read_bytes(&require(dir, COMPUTE_MANIFEST)?)?)?;
    let param = |key: &str| manifest.params.get(key).cloned().unwrap_or(Value::Null);
    let bad = |key: &str| Error::InvalidParameter(format!("{COMPUTE_MANIFEST}: bad `{key}`"));
    let converged = param("converged")
        .as_bool()
        .ok_or_else(|| bad("converged"))?;
    let flows = FlowParams {
        lambda: param("lambda").as_f64().ok_or_else(|| bad("lambda"))?,
        as_of: Some(param("as_of").as_i64().ok_or_else(|| bad("as_of"))?),
        clamp_future: param("clamp_future").as_bool().unwrap_or(false),
        prune_below: param("prune_below").as_f64(),
    };
    let solver = SolverConfig {
        alpha: param("alpha").as_f64().ok_or_else(|| bad("alpha"))?,
        tol: param("tol").as_f64().ok_or_else(|| bad("tol"))?,
        max_iter: param("max_iter").as_u64().ok_or_else(|| bad("max_iter"))? as usize,
    };

    let text = String::from_utf8_lossy(&read_bytes(&require(dir, SCORES_JSONL)?)?).into_owned();
    let mut scores = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: ScoreRecord = serde_json::from_str(line)
            .map_err(|e| Error::record(idx as u64 + 1, format!("{SCORES_JSONL}: {e}")))?;
        scores.push((rec.address, rec.score));
    }
    let mut reputation = ReputationVector::from_scores(scores, converged);
    reputation.iterations_used = param("iterations_used").as_u64().unwrap_or(0) as usize;
    Ok(Computed {
        reputation,
        flows,
        solver,
    })
}

// ------------------------------------------------------------------ rank

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RankMethod {
    TraceRank,
    Count,
    Volume,
    PageRank,
}

impl RankMethod {
    pub const ALL: [RankMethod; 4] = [
        RankMethod::TraceRank,
        RankMethod::Count,
        RankMethod::Volume,
        RankMethod::PageRank,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RankMethod::TraceRank => "tracerank",
            RankMethod::Count => "count",
            RankMethod::Volume => "volume",
            RankMethod::PageRank => "pagerank",
        }
    }
}

impl std::str::FromStr for RankMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        RankMethod::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                Error::InvalidParameter(format!(
                    "unknown method {s:?}; expected tracerank, count, volume or pagerank"
                ))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RankOptions {
    /// Plain adjacency instead of flow weights for PageRank.
    pub unweighted: bool,
    /// Rank every address instead of services only.
    pub all_addresses: bool,
    /// Accept non-converged reputation.
    pub force: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankEntry {
    pub rank: usize,
    pub address: Address,
    #[serde(serialize_with = "ser_sig")]
    pub score: f64,
    pub method: RankMethod,
}

/// Addresses that are ranked: payees and profiled services, or every node
/// when there are none (or when asked to).
fn candidates(ingested: &Ingested, all: bool) -> Vec<Address> {
    let mut set: BTreeSet<Address> = if all {
        BTreeSet::new()
    } else {
        let mut s = ingested.graph.payees();
        s.extend(ingested.profiles.iter().map(|p| p.address.clone()));
        s
    };
    if set.is_empty() {
        set = ingested.graph.nodes().clone();
    }
    set.into_iter().collect()
}

fn method_scores(
    dir: &Path,
    ingested: &Ingested,
    method: RankMethod,
    opts: &RankOptions,
) -> Result<BTreeMap<Address, f64>> {
    Ok(match method {
        RankMethod::TraceRank => {
            let computed = load_computed(dir)?;
            if !opts.force {
                computed.reputation.ensure_converged()?;
            }
            let r = computed.reputation;
            ingested
                .graph
                .nodes()
                .iter()
                .map(|a| (a.clone(), r.get(a)))
                .collect()
        }
        RankMethod::Count => count_rank(&ingested.graph).scores,
        RankMethod::Volume => volume_rank(&ingested.graph).scores,
        RankMethod::PageRank => {
            let computed = load_computed(dir)?;
            let cfg = PageRankConfig {
                damping: computed.solver.alpha,
                tol: computed.solver.tol,
                max_iter: computed.solver.max_iter,
            };
            if ingested.graph.node_count() == 0 {
                return Ok(BTreeMap::new());
            }
            let pr = if opts.unweighted {
                pagerank_unseeded(&ingested.graph, PageRankWeights::Adjacency, &cfg)?
            } else {
                let flows = aggregate_flows(&ingested.graph, &computed.flows)?;
                pagerank_unseeded(&ingested.graph, PageRankWeights::Flows(&flows), &cfg)?
            };
            if !pr.converged && !opts.force {
                return Err(Error::NotConverged {
                    iterations: pr.iterations,
                    residual: f64::NAN,
                });
            }
            debug_assert_eq!(pr.method, BaselineMethod::PageRank);
            pr.scores
        }
    })
}

/// Sorts by score descending, address ascending, and assigns 1-based ranks.
fn ranked(addresses: &[Address], scores: &BTreeMap<Address, f64>) -> Vec<(usize, Address, f64)> {
    let mut rows: Vec<(Address, f64)> = addresses
        .iter()
        .map(|a| (a.clone(), scores.get(a).copied().unwrap_or(0.0)))
        .collect();
    rows.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    rows.into_iter()
        .enumerate()
        .map(|(i, (a, s))| (i + 1, a, s))
        .collect()
}

pub fn cmd_rank(
    in_dir: &Path,
    method: RankMethod,
    top_n: usize,
    opts: &RankOptions,
) -> Result<Vec<RankEntry>> {
    if top_n == 0 {
        return Err(Error::InvalidParameter("top_n must be positive".into()));
    }
    let ingested = load_ingested(in_dir)?;
    let scores = method_scores(in_dir, &ingested, method, opts)?;
    let addresses = candidates(&ingested, opts.all_addresses);
    Ok(ranked(&addresses, &scores)
        .into_iter()
        .take(top_n)
        .map(|(rank, address, score)| RankEntry {
            rank,
            address,
            score,
            method,
        })
        .collect())
}

// ----------------------------------------------------------------- query

#[derive(Debug, Clone)]
pub struct QueryArgs {
    pub in_dir: PathBuf,
    pub text: String,
    pub options: QueryOptions,
    pub dim: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QueryResultOut {
    pub rank: usize,
    pub address: Address,
    #[serde(serialize_with = "ser_sig")]
    pub similarity: f64,
    #[serde(serialize_with = "ser_sig")]
    pub raw_similarity: f64,
    #[serde(serialize_with = "ser_sig")]
    pub tracerank: f64,
    #[serde(serialize_with = "ser_sig")]
    pub final_score: f64,
}

impl From<RankedResult> for QueryResultOut {
    fn from(r: RankedResult) -> Self {
        QueryResultOut {
            rank: r.rank,
            address: r.address,
            similarity: r.similarity,
            raw_similarity: r.raw_similarity,
            tracerank: r.tracerank,
            final_score: r.final_score,
        }
    }
}

pub fn cmd_query(args: &QueryArgs) -> Result<Vec<RankedResult>> {
    if args.options.k == 0 {
        return Err(Error::InvalidParameter("k must be positive".into()));
    }
    let ingested = load_ingested(&args.in_dir)?;
    let computed = load_computed(&args.in_dir)?;
    let index = ServiceIndex::build(ingested.profiles, args.dim)?.with_activity(&ingested.graph);
    index.query(&args.text, &args.options, &computed.reputation)
}

// --------------------------------------------------------------- compare

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodCell {
    #[serde(serialize_with = "ser_sig")]
    pub score: f64,
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareRow {
    pub address: Address,
    #[serde(serialize_with = "ser_sig")]
    pub seed: f64,
    pub tracerank: MethodCell,
    pub count: MethodCell,
    pub volume: MethodCell,
    pub pagerank: MethodCell,
}

impl CompareRow {
    pub fn cell(&self, method: RankMethod) -> &MethodCell {
        match method {
            RankMethod::TraceRank => &self.tracerank,
            RankMethod::Count => &self.count,
            RankMethod::Volume => &self.volume,
            RankMethod::PageRank => &self.pagerank,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareReport {
    pub rows: Vec<CompareRow>,
    /// Top address per method.
    pub leaders: BTreeMap<String, Address>,
    /// Baselines whose leader differs from the TraceRank leader.
    pub inverted_against: Vec<String>,
    /// TraceRank's leader differs from every baseline's leader.
    pub inversion: bool,
}

impl CompareReport {
    pub fn to_table(&self) -> String {
        let mut out = format!(
            "{:<44} {:>8} {:>16} {:>4} {:>10} {:>4} {:>14} {:>4} {:>16} {:>4}\n",
            "address", "seed", "tracerank", "#", "count", "#", "volume", "#", "pagerank", "#"
        );
        for row in &self.rows {
            out.push_str(&format!(
                "{:<44} {:>8} {:>16} {:>4} {:>10} {:>4} {:>14} {:>4} {:>16} {:>4}\n",
                row.address.as_str(),
                fmt_num(row.seed),
                fmt_num(row.tracerank.score),
                row.tracerank.rank,
                fmt_num(row.count.score),
                row.count.rank,
                fmt_num(row.volume.score),
                row.volume.rank,
                fmt_num(row.pagerank.score),
                row.pagerank.rank,
            ));
        }
        out.push('\n');
        for (method, leader) in &self.leaders {
            out.push_str(&format!("leader[{method}] = {leader}\n"));
        }
        out.push_str(&format!(
            "inversion: {} (tracerank leader differs from: {})\n",
            if self.inversion { "yes" } else { "no" },
            if self.inverted_against.is_empty() {
                "none".to_string()
            } else {
                self.inverted_against.join(", ")
            }
        ));
        out
    }
}

pub fn cmd_compare(in_dir: &Path, opts: &RankOptions) -> Result<CompareReport> {
    let ingested = load_ingested(in_dir)?;
    let addresses = candidates(&ingested, opts.all_addresses);
    let mut per_method: BTreeMap<RankMethod, BTreeMap<Address, MethodCell>> = BTreeMap::new();
    let mut leaders = BTreeMap::new();
    for method in RankMethod::ALL {
        let scores = method_scores(in_dir, &ingested, method, opts)?;
        let ranks = ranked(&addresses, &scores);
        if let Some((_, leader, _)) = ranks.first() {
            leaders.insert(method.name().to_string(), leader.clone());
        }
        per_method.insert(
            method,
            ranks
                .into_iter()
                .map(|(rank, a, score)| (a, MethodCell { score, rank }))
                .collect(),
        );
    }
    let cell = |m: RankMethod, a: &Address| per_method[&m][a].clone();
    let mut rows: Vec<CompareRow> = addresses
        .iter()
        .map(|a| CompareRow {
            address: a.clone(),
            seed: ingested.seeds.get(a),
            tracerank: cell(RankMethod::TraceRank, a),
            count: cell(RankMethod::Count, a),
            volume: cell(RankMethod::Volume, a),
            pagerank: cell(RankMethod::PageRank, a),
        })
        .collect();
    rows.sort_by_key(|r| r.tracerank.rank);

    let tr_leader = leaders.get("tracerank");
    let inverted_against: Vec<String> = ["count", "volume", "pagerank"]
        .into_iter()
        .filter(|m| leaders.get(*m) != tr_leader)
        .map(str::to_string)
        .collect();
    let inversion = tr_leader.is_some() && inverted_against.len() == 3;
    Ok(CompareReport {
        rows,
        leaders,
        inverted_against,
        inversion,
    })
}

// ----------------------------------------------------------------- sybil

pub fn cmd_sybil(in_dir: &Path, address: &Address) -> Result<SybilReport> {
    let ingested = load_ingested(in_dir)?;
    let computed = load_computed(in_dir)?;
    let flows = aggregate_flows(&ingested.graph, &computed.flows)?;
    sybil_check(
        address,
        &normalize(&flows),
        &ingested.seeds,
        &computed.solver,
    )
}

// -------------------------------------------------------------- scenario

#[derive(Debug, Clone, Serialize)]
struct ScenarioFile<'a> {
    #[serde(flatten)]
    spec: &'a crate::scenarios::ScenarioSpec,
    service_a: &'a Address,
    service_b: &'a Address,
}

/// Generates the spam scenario into `out_dir` as ordinary input files
/// (payments, seeds, profiles) plus the scenario description and verdict.
pub fn cmd_scenario_spam(
    params: &SpamScenarioParams,
    verdict_cfg: &VerdictConfig,
    out_dir: &Path,
) -> Result<ScenarioVerdict> {
    let scenario = scenario_spam(params)?;
    let verdict = scenario_verdict(&scenario, verdict_cfg)?;
    let mut out = Outputs::new(out_dir, "scenario")?;
    out.param("scenario", serde_json::to_value(&scenario.spec)?);
    out.write(
        PAYMENTS,
        &csv_bytes(|b| write_payments_csv(&scenario.graph, b))?,
    )?;
    out.write(SEEDS, &csv_bytes(|b| write_seeds_csv(&scenario.seeds, b))?)?;
    out.write(
        PROFILES,
        &csv_bytes(|b| write_profiles_jsonl(&scenario.profiles, b))?,
    )?;
    let file = ScenarioFile {
        spec: &scenario.spec,
        service_a: &scenario.service_a,
        service_b: &scenario.service_b,
    };
    out.write(SCENARIO, to_json(&file)?.as_bytes())?;
    out.write(VERDICT, to_json(&verdict)?.as_bytes())?;
    out.finish("scenario_manifest.json")?;
    Ok(verdict)
}
