//! Batched nonparametric contextual bandits.
//!
//! The main policy, [`BankUcb`], scores each arm with an upper confidence
//! bound built from an adaptively sized nearest-neighbour estimate, and
//! only learns from rewards at batch boundaries fixed in advance by a
//! [`BatchGrid`]. [`BinSe`] is a binned successive-elimination baseline
//! driven by the same grid.
//!
//! ```
//! use bankucb::{make_grid, ExperimentConfig, Algorithm, run_experiment};
//!
//! let grid = make_grid(10_000, 5, 1.0, 2).unwrap();
//! assert_eq!(grid.endpoints().len(), 6);
//!
//! let mut cfg = ExperimentConfig::setting2(2, 500, 3, 2);
//! cfg.algorithms = vec![Algorithm::BankUcb, Algorithm::UniformRandom];
//! let out = run_experiment(&cfg).unwrap();
//! assert_eq!(out.results.len(), 2);
//! ```

pub mod bank_ucb;
pub mod binse;
pub mod config;
pub mod env;
pub mod error;
pub mod knn;
pub mod metrics;
pub mod output;
pub mod policy;
pub mod runner;
pub mod schedule;

pub use bank_ucb::{BankUcb, BankUcbConfig, UcbValue};
pub use binse::{BinSe, BinSeConfig};
pub use config::{parse_config, Algorithm, EnvironmentSpec, ExperimentConfig};
pub use env::{Draw, Environment};
pub use error::{ConfigError, EnvError, GridError, KnnError, MetricsError, PolicyError, RunError};
pub use knn::{AdaptiveK, ArmHistory, Context, Sample};
pub use metrics::RegretTrace;
pub use output::write_outcome;
pub use policy::{BatchedPolicy, UniformRandom};
pub use runner::{run_experiment, simulate, Delivery, ExperimentOutcome};
pub use schedule::{make_grid, BatchGrid};

// The guide's code listings run as doctests.
#[cfg(doctest)]
mod guide {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/grid.md")]
    mod grid {}
    #[doc = include_str!("../../../book/src/neighbors.md")]
    mod neighbors {}
    #[doc = include_str!("../../../book/src/policies.md")]
    mod policies {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}
