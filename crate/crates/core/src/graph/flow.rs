//! Aggregated payment flows and the column-normalized transition matrix.
//!
//! Each payer→payee flow is the sum over payments of `ln(1 + value_usd)`
//! discounted by `exp(-lambda * age_days)`. Flows are stored per payee
//! column as a common column factor times per-payer masses, where the
//! factor is the decay of the newest payment into that column. The
//! transition weights only depend on the masses, so a uniform age shift or
//! a uniform rescaling of a column changes the factor and nothing else.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Address, PaymentGraph, SECONDS_PER_DAY};
use crate::error::{Error, Result};

pub const DEFAULT_LAMBDA: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowParams {
    /// Decay rate in 1/day.
    pub lambda: f64,
    /// Age reference, Unix seconds. Defaults to the newest payment.
    pub as_of: Option<i64>,
    /// Treat payments newer than `as_of` as age 0 instead of failing.
    pub clamp_future: bool,
    /// Drop entries whose flow falls below this value.
    pub prune_below: Option<f64>,
}

impl Default for FlowParams {
    fn default() -> Self {
        FlowParams {
            lambda: DEFAULT_LAMBDA,
            as_of: None,
            clamp_future: false,
            prune_below: None,
        }
    }
}

impl FlowParams {
    pub fn with_lambda(lambda: f64) -> Self {
        FlowParams {
            lambda,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.lambda.is_finite() || self.lambda < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "lambda must be finite and >= 0, got {}",
                self.lambda
            )));
        }
        if let Some(p) = self.prune_below {
            if !p.is_finite() || p < 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "prune threshold must be finite and >= 0, got {p}"
                )));
            }
        }
        Ok(())
    }
}

/// Compressed sparse columns: column `i` holds the payers of address `i`.
#[derive(Debug, Clone, PartialEq)]
struct Columns {
    col_ptr: Vec<usize>,
    rows: Vec<usize>,
    values: Vec<f64>,
}

impl Columns {
    fn from_sorted(n: usize, entries: impl IntoIterator<Item = ((usize, usize), f64)>) -> Self {
        // entries keyed (column, row), already in ascending order
        let mut col_ptr = vec![0usize; n + 1];
        let mut rows = Vec::new();
        let mut values = Vec::new();
        for ((col, row), v) in entries {
            col_ptr[col + 1] += 1;
            rows.push(row);
            values.push(v);
        }
        for i in 0..n {
            col_ptr[i + 1] += col_ptr[i];
        }
        Columns {
            col_ptr,
            rows,
            values,
        }
    }

    fn column(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.col_ptr[i]..self.col_ptr[i + 1];
        self.rows[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    fn column_len(&self, i: usize) -> usize {
        self.col_ptr[i + 1] - self.col_ptr[i]
    }
}

fn index_of(nodes: &[Address], address: &Address) -> Option<usize> {
    nodes.binary_search(address).ok()
}

/// Neumaier-compensated sum in iteration order.
pub(crate) fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Aggregated flows `F[j -> i]` over a fixed address universe.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowMatrix {
    nodes: Vec<Address>,
    columns: Columns,
    column_factor: Vec<f64>,
    as_of: i64,
    lambda: f64,
}

impl FlowMatrix {
    /// Builds a flow matrix from explicit `(payer, payee, flow)` entries.
    /// Duplicate pairs are summed; zero flows create no entry. Endpoints are
    /// added to `nodes` if missing.
    pub fn from_entries(
        nodes: impl IntoIterator<Item = Address>,
        entries: impl IntoIterator<Item = (Address, Address, f64)>,
    ) -> Result<Self> {
        let entries: Vec<_> = entries.into_iter().collect();
        let mut universe: Vec<Address> = nodes.into_iter().collect();
        for (j, i, f) in &entries {
            if !f.is_finite() || *f < 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "flow {j} -> {i} must be finite and >= 0, got {f}"
                )));
            }
            universe.push(j.clone());
            universe.push(i.clone());
        }
        universe.sort();
        universe.dedup();

        let mut acc: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for (j, i, f) in entries {
            if f == 0.0 {
                continue;
            }
            let jj = index_of(&universe, &j).expect("payer in universe");
            let ii = index_of(&universe, &i).expect("payee in universe");
            *acc.entry((ii, jj)).or_insert(0.0) += f;
        }
        let n = universe.len();
        Ok(FlowMatrix {
            columns: Columns::from_sorted(n, acc),
            column_factor: vec![1.0; n],
            nodes: universe,
            as_of: 0,
            lambda: 0.0,
        })
    }

    pub fn nodes(&self) -> &[Address] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn index_of(&self, address: &Address) -> Option<usize> {
        index_of(&self.nodes, address)
    }

    pub fn as_of(&self) -> i64 {
        self.as_of
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn nnz(&self) -> usize {
        self.columns.rows.len()
    }

    /// `F[payer -> payee]`, zero when absent.
    pub fn flow(&self, payer: &Address, payee: &Address) -> f64 {
        let (Some(j), Some(i)) = (self.index_of(payer), self.index_of(payee)) else {
            return 0.0;
        };
        self.columns
            .column(i)
            .find(|&(row, _)| row == j)
            .map(|(_, m)| m * self.column_factor[i])
            .unwrap_or(0.0)
    }

    /// All stored entries as `(payer, payee, flow)` indices, column-major.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nodes.len()).flat_map(move |i| {
            let factor = self.column_factor[i];
            self.columns.column(i).map(move |(j, m)| (j, i, m * factor))
        })
    }

    /// Total inbound flow `S_i`.
    pub fn inflow(&self, payee: usize) -> f64 {
        self.column_factor[payee] * compensated_sum(self.columns.column(payee).map(|(_, m)| m))
    }

    /// Multiplies every flow into `payee` by `factor`.
    pub fn scale_column(&mut self, payee: &Address, factor: f64) -> Result<()> {
        if !factor.is_finite() || factor <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "column scale must be finite and > 0, got {factor}"
            )));
        }
        let i = self
            .index_of(payee)
            .ok_or_else(|| Error::UnknownAddress(payee.to_string()))?;
        self.column_factor[i] *= factor;
        Ok(())
    }
}

/// Aggregates payments into flows.
pub fn aggregate_flows(graph: &PaymentGraph, params: &FlowParams) -> Result<FlowMatrix> {
    params.validate()?;
    let nodes: Vec<Address> = graph.nodes().iter().cloned().collect();
    let as_of = params.as_of.or(graph.max_timestamp()).unwrap_or(0);

    // (payee, payer, log value, age in seconds) for each contributing edge
    let mut contributions = Vec::with_capacity(graph.edge_count());
    for edge in graph.edges() {
        let mut age = as_of - edge.timestamp;
        if age < 0 {
            if !params.clamp_future {
                return Err(Error::FutureEdge {
                    payer: edge.payer.to_string(),
                    payee: edge.payee.to_string(),
                    timestamp: edge.timestamp,
                    as_of,
                });
            }
            age = 0;
        }
        let log_value = edge.value_usd.ln_1p();
        if log_value <= 0.0 {
            continue;
        }
        let i = index_of(&nodes, &edge.payee).expect("payee in graph nodes");
        let j = index_of(&nodes, &edge.payer).expect("payer in graph nodes");
        contributions.push((i, j, log_value, age));
    }

    let n = nodes.len();
    let mut newest_age: Vec<Option<i64>> = vec![None; n];
    for &(i, _, _, age) in &contributions {
        let slot = &mut newest_age[i];
        *slot = Some(slot.map_or(age, |a| a.min(age)));
    }

    let lambda = params.lambda;
    let mut acc: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for &(i, j, log_value, age) in &contributions {
        let reference = newest_age[i].expect("column has a contribution");
        let rel_days = (age - reference) as f64 / SECONDS_PER_DAY;
        *acc.entry((i, j)).or_insert(0.0) += log_value * (-lambda * rel_days).exp();
    }
    let column_factor: Vec<f64> = newest_age
        .iter()
        .map(|a| match a {
            Some(age) => (-lambda * (*age as f64 / SECONDS_PER_DAY)).exp(),
            None => 1.0,
        })
        .collect();

    if let Some(threshold) = params.prune_below {
        acc.retain(|&(i, _), m| *m * column_factor[i] >= threshold);
    }

    Ok(FlowMatrix {
        columns: Columns::from_sorted(n, acc),
        column_factor,
        nodes,
        as_of,
        lambda,
    })
}

/// Column-stochastic transition matrix `W`, with `w[j][i]` the share of
/// `i`'s inbound flow contributed by `j`. Sink columns are all zero.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    nodes: Vec<Address>,
    columns: Columns,
    sinks: Vec<bool>,
}

/// Normalizes each column of `flows` by its total inbound flow.
pub fn normalize(flows: &FlowMatrix) -> TransitionMatrix {
    let n = flows.len();
    let mut sinks = vec![false; n];
    let mut values = Vec::with_capacity(flows.nnz());
    for (i, sink) in sinks.iter_mut().enumerate() {
        let total = compensated_sum(flows.columns.column(i).map(|(_, m)| m));
        if total > 0.0 {
            values.extend(flows.columns.column(i).map(|(_, m)| m / total));
        } else {
            *sink = true;
            values.extend(flows.columns.column(i).map(|_| 0.0));
        }
    }
    TransitionMatrix {
        nodes: flows.nodes.clone(),
        columns: Columns {
            col_ptr: flows.columns.col_ptr.clone(),
            rows: flows.columns.rows.clone(),
            values,
        },
        sinks,
    }
}

impl TransitionMatrix {
    /// The all-zero matrix over `nodes`.
    pub fn empty(nodes: impl IntoIterator<Item = Address>) -> Self {
        let mut nodes: Vec<Address> = nodes.into_iter().collect();
        nodes.sort();
        nodes.dedup();
        let n = nodes.len();
        TransitionMatrix {
            nodes,
            columns: Columns::from_sorted(n, std::iter::empty()),
            sinks: vec![true; n],
        }
    }

    pub fn nodes(&self) -> &[Address] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn index_of(&self, address: &Address) -> Option<usize> {
        index_of(&self.nodes, address)
    }

    pub fn nnz(&self) -> usize {
        self.columns.rows.len()
    }

    /// `(payer, weight)` pairs of column `i`, payers ascending.
    pub fn column(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.columns.column(i)
    }

    pub fn column_len(&self, i: usize) -> usize {
        self.columns.column_len(i)
    }

    pub fn weight(&self, payer: &Address, payee: &Address) -> f64 {
        let (Some(j), Some(i)) = (self.index_of(payer), self.index_of(payee)) else {
            return 0.0;
        };
        self.column(i)
            .find(|&(row, _)| row == j)
            .map(|(_, w)| w)
            .unwrap_or(0.0)
    }

    /// All stored entries `(payer, payee, weight)`, column-major.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nodes.len()).flat_map(move |i| self.column(i).map(move |(j, w)| (j, i, w)))
    }

    pub fn is_sink(&self, i: usize) -> bool {
        self.sinks[i]
    }

    pub fn sink_columns(&self) -> Vec<&Address> {
        self.nodes
            .iter()
            .zip(&self.sinks)
            .filter(|(_, &s)| s)
            .map(|(a, _)| a)
            .collect()
    }

    pub fn column_sum(&self, i: usize) -> f64 {
        self.column(i).map(|(_, w)| w).sum()
    }

    /// Largest `|sum_j w[j][i] - 1|` over non-sink columns.
    pub fn max_column_deviation(&self) -> f64 {
        (0..self.len())
            .filter(|&i| !self.sinks[i])
            .map(|i| (self.column_sum(i) - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// `out = W^T x`, i.e. `out[i] = sum_j w[j][i] * x[j]`, each column
    /// reduced in ascending payer order.
    pub fn transpose_mul(&self, x: &[f64], out: &mut [f64]) {
        assert_eq!(x.len(), self.len());
        assert_eq!(out.len(), self.len());
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.column(i).map(|(j, w)| w * x[j]).sum();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::PaymentEdge;
    use std::f64::consts::{E, LN_2};

    fn addr(s: &str) -> Address {
        Address::new(s).unwrap()
    }

    fn graph(edges: &[(&str, &str, f64, i64)]) -> PaymentGraph {
        let mut g = PaymentGraph::new();
        for &(p, q, v, t) in edges {
            g.add_payment(PaymentEdge {
                payer: addr(p),
                payee: addr(q),
                value_usd: v,
                timestamp: t,
            })
            .unwrap();
        }
        g
    }

    const DAY: i64 = 86_400;

    #[test]
    fn unit_log_value_at_age_zero() {
        let g = graph(&[("j", "i", E - 1.0, 0)]);
        let f = aggregate_flows(&g, &FlowParams::default()).unwrap();
        assert!((f.flow(&addr("j"), &addr("i")) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn zero_value_creates_no_entry() {
        let g = graph(&[("j", "i", 0.0, 0), ("j", "i", 0.0, -50 * DAY)]);
        let f = aggregate_flows(&g, &FlowParams::default()).unwrap();
        assert_eq!(f.nnz(), 0);
        assert_eq!(f.flow(&addr("j"), &addr("i")), 0.0);
        let w = normalize(&f);
        assert_eq!(w.sink_columns().len(), 2);
    }

    #[test]
    fn one_day_half_life() {
        // oracle: ln(1 + (e - 1)) * exp(-ln2 * 1) = 1 * 0.5
        let g = graph(&[("j", "i", E - 1.0, 0)]);
        let params = FlowParams {
            lambda: LN_2,
            as_of: Some(DAY),
            ..FlowParams::default()
        };
        let f = aggregate_flows(&g, &params).unwrap();
        assert!((f.flow(&addr("j"), &addr("i")) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn duplicate_pairs_are_summed() {
        // oracle: 2 * ln(10) = 4.605170185988092
        let g = graph(&[("j", "i", 9.0, 0), ("j", "i", 9.0, 0)]);
        let f = aggregate_flows(&g, &FlowParams::default()).unwrap();
        assert!((f.flow(&addr("j"), &addr("i")) - 4.605_170_185_988_092).abs() < 1e-12);
        assert_eq!(f.nnz(), 1);
    }

    #[test]
    fn mixed_ages_match_direct_formula() {
        let lambda = 0.2;
        let g = graph(&[
            ("a", "x", 4.0, 10 * DAY),
            ("a", "x", 7.0, 3 * DAY),
            ("b", "x", 2.0, 0),
        ]);
        let params = FlowParams {
            lambda,
            as_of: Some(12 * DAY),
            ..FlowParams::default()
        };
        let f = aggregate_flows(&g, &params).unwrap();
        let direct_a = 5f64.ln() * (-lambda * 2.0).exp() + 8f64.ln() * (-lambda * 9.0).exp();
        let direct_b = 3f64.ln() * (-lambda * 12.0).exp();
        assert!((f.flow(&addr("a"), &addr("x")) - direct_a).abs() < 1e-14);
        assert!((f.flow(&addr("b"), &addr("x")) - direct_b).abs() < 1e-14);
        assert!((f.inflow(f.index_of(&addr("x")).unwrap()) - direct_a - direct_b).abs() < 1e-14);
    }

    #[test]
    fn future_edge_errors_unless_clamped() {
        let g = graph(&[("j", "i", 1.0, 100)]);
        let mut params = FlowParams {
            as_of: Some(50),
            ..FlowParams::default()
        };
        assert!(matches!(
            aggregate_flows(&g, &params),
            Err(Error::FutureEdge { .. })
        ));
        params.clamp_future = true;
        let f = aggregate_flows(&g, &params).unwrap();
        assert!((f.flow(&addr("j"), &addr("i")) - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn as_of_defaults_to_newest_payment() {
        let g = graph(&[("a", "b", 1.0, 5 * DAY), ("c", "b", 1.0, 9 * DAY)]);
        let f = aggregate_flows(&g, &FlowParams::with_lambda(1.0)).unwrap();
        assert_eq!(f.as_of(), 9 * DAY);
        assert!((f.flow(&addr("c"), &addr("b")) - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn negative_lambda_rejected() {
        let g = graph(&[("a", "b", 1.0, 0)]);
        assert!(aggregate_flows(&g, &FlowParams::with_lambda(-0.1)).is_err());
        assert!(aggregate_flows(&g, &FlowParams::with_lambda(f64::NAN)).is_err());
    }

    #[test]
    fn pruning_is_opt_in() {
        let g = graph(&[("a", "x", 1.0, 0), ("b", "x", 1.0, 5000 * DAY)]);
        let params = FlowParams {
            lambda: 0.01,
            ..FlowParams::default()
        };
        let kept = aggregate_flows(&g, &params).unwrap();
        assert_eq!(kept.nnz(), 2);
        let pruned = aggregate_flows(
            &g,
            &FlowParams {
                prune_below: Some(1e-15),
                ..params
            },
        )
        .unwrap();
        assert_eq!(pruned.nnz(), 1);
    }

    #[test]
    fn proportional_split() {
        let f = FlowMatrix::from_entries(
            [],
            [(addr("a"), addr("i"), 1.0), (addr("b"), addr("i"), 3.0)],
        )
        .unwrap();
        let w = normalize(&f);
        assert_eq!(w.weight(&addr("a"), &addr("i")), 0.25);
        assert_eq!(w.weight(&addr("b"), &addr("i")), 0.75);
    }

    #[test]
    fn node_without_inbound_is_sink() {
        let f = FlowMatrix::from_entries([addr("lonely")], [(addr("a"), addr("i"), 2.0)]).unwrap();
        let w = normalize(&f);
        let sinks: Vec<&str> = w.sink_columns().iter().map(|a| a.as_str()).collect();
        assert_eq!(sinks, vec!["a", "lonely"]);
        let lonely = w.index_of(&addr("lonely")).unwrap();
        assert_eq!(w.column_len(lonely), 0);
        assert_eq!(w.column_sum(lonely), 0.0);
    }

    #[test]
    fn single_inbound_flow_has_unit_weight() {
        for magnitude in [1e-300, 1e-9, 1.0, 12345.678, 1e300] {
            let f = FlowMatrix::from_entries([], [(addr("a"), addr("i"), magnitude)]).unwrap();
            assert_eq!(normalize(&f).weight(&addr("a"), &addr("i")), 1.0);
        }
    }

    #[test]
    fn scale_column_leaves_weights_unchanged() {
        let mut f = FlowMatrix::from_entries(
            [],
            [(addr("a"), addr("i"), 1.3), (addr("b"), addr("i"), 0.7)],
        )
        .unwrap();
        let before = normalize(&f);
        f.scale_column(&addr("i"), 7.25).unwrap();
        assert!((f.flow(&addr("a"), &addr("i")) - 1.3 * 7.25).abs() < 1e-14);
        assert_eq!(normalize(&f), before);
        assert!(f.scale_column(&addr("i"), 0.0).is_err());
        assert!(f.scale_column(&addr("zz"), 2.0).is_err());
    }

    #[test]
    fn transpose_mul_matches_definition() {
        let f = FlowMatrix::from_entries(
            [],
            [
                (addr("a"), addr("x"), 1.0),
                (addr("b"), addr("x"), 1.0),
                (addr("a"), addr("y"), 3.0),
            ],
        )
        .unwrap();
        let w = normalize(&f);
        // nodes: a, b, x, y
        let r = [2.0, 4.0, 0.0, 0.0];
        let mut out = [0.0; 4];
        w.transpose_mul(&r, &mut out);
        assert_eq!(out, [0.0, 0.0, 3.0, 2.0]);
    }
}
