//! Service discovery: exact cosine scan over service profiles, fused with
//! reputation as `clamp(cos(q, p), 0, 1) * tracerank`.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, BufReader, Read};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Address, PaymentGraph, Window};
use crate::solver::ReputationVector;

pub const DEFAULT_DIM: usize = 256;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

/// Lowercased alphanumeric tokens.
pub fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

/// Hashed bag-of-words embedding: each token's FNV-1a 64 hash picks a
/// bucket in `[0, dim)`, counts are accumulated and the result is
/// L2-normalized. Text without tokens maps to the zero vector.
pub fn embed_text(text: &str, dim: usize) -> Vec<f64> {
    assert!(dim > 0, "embedding dimension must be positive");
    let mut v = vec![0.0; dim];
    for token in tokenize(text) {
        v[(fnv1a64(token.as_bytes()) % dim as u64) as usize] += 1.0;
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    v
}

/// Cosine similarity; 0 when either vector has zero norm.
pub fn cosine(q: &[f64], p: &[f64]) -> Result<f64> {
    if q.len() != p.len() {
        return Err(Error::DimensionMismatch {
            expected: q.len(),
            got: p.len(),
        });
    }
    let dot: f64 = q.iter().zip(p).map(|(a, b)| a * b).sum();
    let nq = q.iter().map(|x| x * x).sum::<f64>().sqrt();
    let np = p.iter().map(|x| x * x).sum::<f64>().sqrt();
    if nq == 0.0 || np == 0.0 {
        return Ok(0.0);
    }
    Ok(dot / (nq * np))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceProfile {
    pub address: Address,
    pub description: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tags: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chain: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<Vec<f64>>,
}

impl ServiceProfile {
    pub fn new(address: Address, description: impl Into<String>) -> Self {
        ServiceProfile {
            address,
            description: description.into(),
            tags: Vec::new(),
            chain: None,
            embedding: None,
        }
    }
}

/// Reads profiles as JSON lines.
pub fn read_profiles_jsonl<R: Read>(reader: R) -> Result<Vec<ServiceProfile>> {
    let mut profiles = Vec::new();
    for (idx, line) in BufReader::new(reader).lines().enumerate() {
        let lineno = idx as u64 + 1;
        let line = line.map_err(|e| Error::record(lineno, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let profile: ServiceProfile =
            serde_json::from_str(&line).map_err(|e| Error::record(lineno, e.to_string()))?;
        if profile.description.trim().is_empty() {
            return Err(Error::record(lineno, "description must be non-empty"));
        }
        profiles.push(profile);
    }
    Ok(profiles)
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct QueryFilters {
    pub chain: Option<String>,
    /// Every listed tag must be present.
    pub tags: Vec<String>,
    /// The service must have received a payment inside this window.
    pub active_within: Option<Window>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryOptions {
    pub k: usize,
    pub filters: QueryFilters,
    /// Additive floor on reputation before fusion. Off (0) by default.
    pub epsilon: f64,
    /// Accept reputation that did not converge.
    pub force: bool,
}

impl QueryOptions {
    pub fn top(k: usize) -> Self {
        QueryOptions {
            k,
            filters: QueryFilters::default(),
            epsilon: 0.0,
            force: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankedResult {
    pub rank: usize,
    pub address: Address,
    /// Cosine similarity clamped to `[0, 1]`, the value used for fusion.
    pub similarity: f64,
    pub raw_similarity: f64,
    pub tracerank: f64,
    pub final_score: f64,
}

#[derive(Debug, Clone)]
struct IndexedService {
    profile: ServiceProfile,
    embedding: Vec<f64>,
}

/// In-memory profile store with exact top-k search.
#[derive(Debug, Clone)]
pub struct ServiceIndex {
    dim: usize,
    services: Vec<IndexedService>,
    /// Sorted inbound payment timestamps per payee.
    activity: Option<BTreeMap<Address, Vec<i64>>>,
}

impl ServiceIndex {
    /// Indexes `profiles`. Missing embeddings are filled in with
    /// [`embed_text`] over the description.
    pub fn build(profiles: impl IntoIterator<Item = ServiceProfile>, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter(
                "embedding dimension must be positive".into(),
            ));
        }
        let mut seen = BTreeSet::new();
        let mut services = Vec::new();
        for profile in profiles {
            if profile.description.trim().is_empty() {
                return Err(Error::InvalidParameter(format!(
                    "profile {} has an empty description",
                    profile.address
                )));
            }
            if !seen.insert(profile.address.clone()) {
                return Err(Error::InvalidParameter(format!(
                    "duplicate profile for {}",
                    profile.address
                )));
            }
            let embedding = match &profile.embedding {
                Some(e) if e.len() != dim => {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        got: e.len(),
                    })
                }
                Some(e) => e.clone(),
                None => embed_text(&profile.description, dim),
            };
            services.push(IndexedService { profile, embedding });
        }
        services.sort_by(|a, b| a.profile.address.cmp(&b.profile.address));
        Ok(ServiceIndex {
            dim,
            services,
            activity: None,
        })
    }

    /// Records inbound payment times so queries can filter by activity.
    pub fn with_activity(mut self, graph: &PaymentGraph) -> Self {
        let mut activity: BTreeMap<Address, Vec<i64>> = BTreeMap::new();
        for e in graph.edges() {
            activity
                .entry(e.payee.clone())
                .or_default()
                .push(e.timestamp);
        }
        activity.values_mut().for_each(|ts| ts.sort_unstable());
        self.activity = Some(activity);
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.services.len()
    }

    pub fn is_empty(&self) -> bool {
        self.services.is_empty()
    }

    pub fn profiles(&self) -> impl Iterator<Item = &ServiceProfile> {
        self.services.iter().map(|s| &s.profile)
    }

    fn active_within(&self, address: &Address, window: Window) -> bool {
        let Some(ts) = self.activity.as_ref().and_then(|a| a.get(address)) else {
            return false;
        };
        let first = ts.partition_point(|&t| t < window.start);
        ts.get(first).is_some_and(|&t| t <= window.end)
    }

    fn passes(&self, profile: &ServiceProfile, filters: &QueryFilters) -> bool {
        if let Some(chain) = &filters.chain {
            if !profile
                .chain
                .as_deref()
                .is_some_and(|c| c.eq_ignore_ascii_case(chain))
            {
                return false;
            }
        }
        let has_tags = filters
            .tags
            .iter()
            .all(|want| profile.tags.iter().any(|t| t.eq_ignore_ascii_case(want)));
        if !has_tags {
            return false;
        }
        match filters.active_within {
            Some(w) => self.active_within(&profile.address, w),
            None => true,
        }
    }

    /// Embeds `text` with the hashed embedder and runs [`Self::query_vector`].
    pub fn query(
        &self,
        text: &str,
        opts: &QueryOptions,
        reputation: &ReputationVector,
    ) -> Result<Vec<RankedResult>> {
        self.query_vector(&embed_text(text, self.dim), opts, reputation)
    }

    /// Top-k services by fused score, ties broken by address ascending.
    /// Filters are applied before scoring.
    pub fn query_vector(
        &self,
        q: &[f64],
        opts: &QueryOptions,
        reputation: &ReputationVector,
    ) -> Result<Vec<RankedResult>> {
        if opts.k == 0 {
            return Err(Error::InvalidParameter("k must be positive".into()));
        }
        if self.services.is_empty() {
            return Err(Error::EmptyIndex);
        }
        if q.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: q.len(),
            });
        }
        if !(opts.epsilon.is_finite() && opts.epsilon >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "epsilon must be finite and >= 0, got {}",
                opts.epsilon
            )));
        }
        if !opts.force {
            reputation.ensure_converged()?;
        }
        if opts.filters.active_within.is_some() && self.activity.is_none() {
            return Err(Error::InvalidParameter(
                "activity filter needs an index built with payment activity".into(),
            ));
        }

        let mut results = Vec::new();
        for service in &self.services {
            if !self.passes(&service.profile, &opts.filters) {
                continue;
            }
            let raw = cosine(q, &service.embedding)?;
            let similarity = raw.clamp(0.0, 1.0);
            let tracerank = reputation.get(&service.profile.address);
            results.push(RankedResult {
                rank: 0,
                address: service.profile.address.clone(),
                similarity,
                raw_similarity: raw,
                tracerank,
                final_score: similarity * (tracerank + opts.epsilon),
            });
        }
        results.sort_by(|a, b| {
            b.final_score
                .total_cmp(&a.final_score)
                .then_with(|| a.address.cmp(&b.address))
        });
        results.truncate(opts.k);
        for (i, r) in results.iter_mut().enumerate() {
            r.rank = i + 1;
        }
        Ok(results)
    }
}
