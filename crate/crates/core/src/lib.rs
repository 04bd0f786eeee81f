//! Reputation ranking over payment graphs.
//!
//! Payments are endorsements: each payer→payee flow is log-scaled by value
//! and decayed by age, columns are normalized by inbound flow, and
//! externally sourced seed reputation is propagated with
//! `r = s + alpha * W^T r`. Addresses that only receive money from
//! unseeded wallets end up with zero reputation however many wallets pay
//! them. Service discovery fuses cosine similarity with that score.

pub mod baselines;
pub mod error;
pub mod graph;
pub mod output;
pub mod pipeline;
pub mod retrieval;
pub mod scenarios;
pub mod solver;

pub use error::{Error, Result};
pub use graph::{Address, PaymentEdge, PaymentGraph};
pub use solver::{ReputationVector, SeedVector, SolverConfig};
