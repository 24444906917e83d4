//! Online bin packing under adversarial, random-order and i.i.d. arrivals,
//! with exact rational arithmetic throughout.
//!
//! - [`packing`]: Best Fit, First Fit and Next Fit over exact sizes.
//! - [`opt`]: the offline optimum (branch-and-bound, and a pairing solver
//!   for items larger than 1/3).
//! - [`engine`]: expected bin counts over uniformly random arrival orders
//!   (exact enumeration or seeded Monte Carlo) and over i.i.d. inputs.
//! - [`structure`]: good-order pairs, the Best Fit/optimum matching graph,
//!   and monotonicity checks with fuzzers.
//! - [`markov`]: the nine-state chain for Best Fit on sizes {1/4, 1/3}.
//! - [`families`]: named instances and random instance generators.
//! - [`experiments`]: named reproduction runs with declared targets.

pub mod engine;
pub mod error;
pub mod experiments;
pub mod families;
pub mod instance;
pub mod markov;
pub mod opt;
pub mod packing;
pub mod size;
pub mod structure;

pub use engine::{
    best_representative, exact_expectation, iid_exact_expectation, monte_carlo_expectation,
    DiscreteDistribution, EvalMode, ExpectationReport, Value,
};
pub use error::{Error, Result};
pub use experiments::{run_experiment, Check, ExperimentParams, ExperimentReport, EXPERIMENTS};
pub use families::{named_instance, named_order, NAMED_INSTANCES};
pub use instance::{parse_instance, serialize_instance, Instance, Permutation};
pub use opt::{opt, opt_exact, opt_large_items, size_lower_bound, OptMethod, OptResult};
pub use packing::{
    best_fit_pack, best_fit_step, bin_config, first_fit_pack, next_fit_pack, pack, Algorithm, Bin,
    BinConfig, Packing, TieBreak,
};
pub use size::{classify, fmt_rational, parse_ratio, rational_to_f64, Rational, Size, SizeClass};
pub use structure::{FuzzConfig, FuzzReport, FuzzTarget, LmInstance};
