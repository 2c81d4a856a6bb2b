//! Collective extortion (CE) for the federated edge learning incentive game.
//!
//! A server trains a shared model with data from `n` devices. Each round the
//! server decides whether to return the model (cooperate) or keep it, and each
//! device decides whether to contribute its full dataset or a fraction of it.
//! Defection dominates in the one-shot game; this crate builds the repeated
//! game, synthesises the server strategy that pins the long-run surplus of the
//! server to `χ` times the devices' total surplus, verifies that relation on
//! the Markov chain of play, and simulates evolutionary devices against CE and
//! classical baselines.
//!
//! - [`game`]: outcomes, utilities, viability and dominance checks.
//! - [`ce`]: the CE strategy vector and its feasible `(χ, γ)` region.
//! - [`markov`]: transition matrices, stationary distributions and the
//!   determinant cross-check.
//! - [`dynamics`]: round-by-round simulation and relative utilities.
//! - [`harness`]: parameter sampling and the figure scenarios.
//! - [`config`]: TOML game configs.
//! - [`cli`]: the `fel-ce` command line.
//!
//! ```
//! use fel_extortion::ce::{derive_ce_strategy, feasible_region};
//! use fel_extortion::game::UtilityTable;
//! use fel_extortion::harness::{sample_config, ParameterSampler};
//! use rand::SeedableRng;
//!
//! let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
//! let cfg = sample_config(&ParameterSampler::default(), &[1.0], &mut rng).unwrap().config;
//! let table = UtilityTable::build(&cfg).unwrap();
//! let gamma = feasible_region(&table, 1.0).midpoint_gamma().unwrap();
//! let ce = derive_ce_strategy(&table, 1.0, gamma).unwrap();
//! assert_eq!(ce.p[0], 1.0);
//! ```

pub mod ce;
pub mod cli;
pub mod config;
pub mod dynamics;
pub mod game;
pub mod harness;
mod linalg;
pub mod markov;
