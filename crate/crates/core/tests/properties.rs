//! Randomized properties of flows, the transition matrix, and the solvers.

mod common;

use proptest::prelude::*;
use rand::Rng;

use common::{addr, l1, random_graph, random_seeds, rng, transition};
use tracerank::graph::TransitionMatrix;
use tracerank::solver::{sybil_check, tracerank_direct, tracerank_power};
use tracerank::{PaymentEdge, PaymentGraph, SeedVector, SolverConfig};

fn tight(alpha: f64) -> SolverConfig {
    SolverConfig {
        alpha,
        tol: 1e-13,
        max_iter: 100_000,
    }
}

fn case(seed: u64) -> (TransitionMatrix, SeedVector) {
    let mut r = rng(seed);
    let g = random_graph(&mut r, 30, 150);
    let s = random_seeds(&mut r, &g);
    (transition(&g), s)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn power_matches_direct(seed in any::<u64>(), alpha in 0.05f64..0.95) {
        let (w, s) = case(seed);
        let p = tracerank_power(&w, &s, &tight(alpha)).unwrap();
        let d = tracerank_direct(&w, &s, alpha).unwrap();
        prop_assert!(p.converged);
        prop_assert!(l1(p.scores(), d.scores()) <= 1e-8);
    }

    #[test]
    fn scores_dominate_seeds_and_are_sup_norm_bounded(seed in any::<u64>(), alpha in 0.05f64..0.95) {
        let (w, s) = case(seed);
        let r = tracerank_power(&w, &s, &tight(alpha)).unwrap();
        let s_max = s.iter().map(|(_, x)| x).fold(0.0, f64::max);
        for (a, score) in r.iter() {
            prop_assert!(score >= s.get(a));
            prop_assert!(score <= s_max / (1.0 - alpha) + 1e-9);
        }
    }

    /// W^T is row-substochastic, so successive differences shrink by alpha
    /// in the sup norm.
    #[test]
    fn sup_norm_contraction(seed in any::<u64>(), alpha in 0.05f64..0.95) {
        let (w, s) = case(seed);
        let cfg = SolverConfig { alpha, tol: f64::MIN_POSITIVE, max_iter: 30 };
        let nodes = w.nodes().to_vec();
        let mut iterates = vec![s.dense(&nodes)];
        for t in 1..=cfg.max_iter {
            let r = tracerank_power(&w, &s, &SolverConfig { max_iter: t, ..cfg }).unwrap();
            iterates.push(r.scores().to_vec());
        }
        let sup = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        let diffs: Vec<f64> = iterates.windows(2).map(|p| sup(&p[0], &p[1])).collect();
        for d in diffs.windows(2) {
            prop_assert!(d[1] <= alpha * d[0] + 1e-12);
        }
    }

    #[test]
    fn linear_in_seeds(seed in any::<u64>(), alpha in 0.05f64..0.95, c in 0.01f64..100.0) {
        let mut r = rng(seed);
        let g = random_graph(&mut r, 30, 150);
        let (s1, s2) = (random_seeds(&mut r, &g), random_seeds(&mut r, &g));
        let sum: SeedVector = s1.iter().map(|(a, x)| (a.clone(), x + c * s2.get(a))).collect();
        let w = transition(&g);
        let solve = |s: &SeedVector| tracerank_direct(&w, s, alpha).unwrap();
        let (r1, r2, r12) = (solve(&s1), solve(&s2), solve(&sum));
        for (a, x) in r12.iter() {
            prop_assert!((x - (r1.get(a) + c * r2.get(a))).abs() <= 1e-9 * (1.0 + x));
        }
    }

    #[test]
    fn monotone_in_seeds(seed in any::<u64>(), alpha in 0.05f64..0.95, bump in 0.0f64..1.0) {
        let mut r = rng(seed);
        let g = random_graph(&mut r, 30, 150);
        let s = random_seeds(&mut r, &g);
        let target = g.nodes().iter().nth(r.gen_range(0..g.node_count())).unwrap().clone();
        let raised: SeedVector = s
            .iter()
            .map(|(a, x)| (a.clone(), if *a == target { x + bump } else { x }))
            .collect();
        let w = transition(&g);
        let (lo, hi) = (
            tracerank_direct(&w, &s, alpha).unwrap(),
            tracerank_direct(&w, &raised, alpha).unwrap(),
        );
        for (a, x) in lo.iter() {
            prop_assert!(hi.get(a) >= x - 1e-12);
        }
    }

    /// A service whose upstream carries no seed scores exactly zero however
    /// many wallets pay it.
    #[test]
    fn unseeded_upstream_scores_exactly_zero(seed in any::<u64>(), n in 1usize..200) {
        let mut r = rng(seed);
        let mut g = random_graph(&mut r, 20, 80);
        let s = random_seeds(&mut r, &g);
        let service = addr("sybil-service");
        for k in 0..n {
            g.add_payment(PaymentEdge {
                payer: addr(&format!("fresh-{k}")),
                payee: service.clone(),
                value_usd: r.gen_range(0.0..100.0),
                timestamp: r.gen_range(0..1_000_000),
            }).unwrap();
        }
        let w = transition(&g);
        let report = sybil_check(&service, &w, &s, &SolverConfig::default()).unwrap();
        prop_assert!(report.zero_mass);
        prop_assert_eq!(report.score, 0.0);
        prop_assert_eq!(report.upstream_count, n);
    }

    #[test]
    fn payments_from_nobody_change_nothing_for_others(seed in any::<u64>()) {
        // adding an unseeded sink service leaves every other score identical
        let mut r = rng(seed);
        let g = random_graph(&mut r, 20, 80);
        let s = random_seeds(&mut r, &g);
        let base = tracerank_power(&transition(&g), &s, &SolverConfig::default()).unwrap();
        let mut extended: PaymentGraph = g.clone();
        extended.add_payment(PaymentEdge {
            payer: addr("fresh"),
            payee: addr("new-service"),
            value_usd: 1.0,
            timestamp: 0,
        }).unwrap();
        let more = tracerank_power(&transition(&extended), &s, &SolverConfig::default()).unwrap();
        for (a, x) in base.iter() {
            prop_assert_eq!(more.get(a).to_bits(), x.to_bits());
        }
    }
}
