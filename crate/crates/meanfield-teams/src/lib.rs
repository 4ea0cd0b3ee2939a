//! Solvers and simulators for teams of homogeneous Markov chains coupled
//! through their empirical state distribution.
//!
//! The library covers four layers:
//!
//! * [`model`]: affine mean-field models (tabulated or functional form),
//!   admissibility validation, and Lipschitz constant ledgers.
//! * [`simplex`]: the probability simplex, empirical distributions with
//!   denominator n, uniform quantization grids, and their enumerations.
//! * [`lift`]: local feedback policies and the lifted deterministic flow
//!   and cost they induce on the simplex.
//! * [`dp`] and [`sim`]: exact sharing-information dynamic programs,
//!   decentralized solvers (exact tree and quantized grid), strategy
//!   evaluation, population simulation, and deviation-rate experiments.
//!
//! The `mft` binary in this crate exposes the same functionality as
//! subcommands; see [`cli`].

pub mod cli;
pub mod dp;
pub mod lift;
pub mod model;
pub mod rng;
pub mod sim;
pub mod simplex;
