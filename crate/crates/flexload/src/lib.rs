//! Threshold policies for flexible electric loads that buy energy and offer
//! reserve capacity under stochastic prices.
//!
//! A flexible load needs a total amount of energy by a deadline, subject to a
//! per-slot rate limit, while energy and reserve prices evolve stochastically.
//! The expected cost-to-go is piecewise linear and convex in the remaining
//! demand, which makes the optimal policy a multi-threshold rule: compare the
//! effective price (energy minus the positive part of the reserve price)
//! against one threshold per capacity-sized piece of demand and consume down
//! to the last piece still worth buying. This crate compiles those threshold
//! tables, executes the policy, validates both against a brute-force dynamic
//! program, and reproduces a fleet-level market study at desk scale.
//!
//! Modules:
//! - [`price`]: the price process, innovation distributions, effective-price
//!   distributions, path sampling.
//! - [`thresholds`]: backward recursions compiling threshold tables
//!   (independent fast path and correlated state grid), value functions,
//!   horizon extension for aggregator reuse.
//! - [`policy`]: the optimal decision rule plus baseline policies.
//! - [`oracle`]: exhaustive DP over discretized lattices; ground truth for
//!   differential tests.
//! - [`fleet`]: Monte Carlo fleet simulation with common random numbers.
//! - [`io`]: file formats (JSON configs, CSV tables/paths/results) and run
//!   manifests.
//!
//! Each major capability has a runnable example under `examples/`:
//!
//! ```bash
//! cargo run --release -p flexload --example worked_instance
//! cargo run --release -p flexload --example compile_thresholds
//! cargo run --release -p flexload --example policy_rollout
//! cargo run --release -p flexload --example oracle_crosscheck
//! cargo run --release -p flexload --example correlated_grid
//! cargo run --release -p flexload --example augment_horizon
//! cargo run --release -p flexload --example fleet_simulation
//! cargo run --release -p flexload --example bench_scaling
//! ```
//!
//! The `flexload` binary exposes the same functionality as subcommands
//! (`thresholds`, `policy`, `simulate`, `oracle-check`, `bench`).

pub mod bench;
pub mod fleet;
pub mod io;
pub mod numeric;
pub mod oracle;
pub mod policy;
pub mod price;
pub mod thresholds;

/// Crate-wide error type. The CLI maps validation errors to exit code 2,
/// numerical failures to 3 and oracle mismatches to 4.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Rejected inputs: malformed configs, violated preconditions, bad files.
    #[error("invalid input: {0}")]
    Invalid(String),
    /// Numerical failure: fixed point not bracketed, non-monotone
    /// coefficients, infeasible decisions.
    #[error("numerical failure: {0}")]
    Numerical(String),
    /// A compiled policy disagreed with the brute-force oracle.
    #[error("oracle mismatch: {0}")]
    OracleMismatch(String),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    /// Process exit code for the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Invalid(_) => 2,
            Error::Numerical(_) => 3,
            Error::OracleMismatch(_) => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub use fleet::{par, PolicyChoice, SimConfig, SimResult};
pub use policy::{optimal_decision, reserve_rule, Decision, LoadState};
pub use price::{effective_price, EffectiveDist, Innovation, PriceModel, PricePair};
pub use thresholds::{
    augment_horizon, compile_correlated, compile_independent, g_integral, value_function,
    GridConfig, LoadSpec, ThresholdTable,
};
