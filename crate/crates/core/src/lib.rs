//! Open quantum random walks and their quantum Markov chains.
//!
//! The crate simulates walks whose internal degree of freedom is moved
//! between sites by operators `B^i_j`, builds the nonhomogeneous quantum
//! Markov chain attached to a trajectory, evaluates it on cylinder
//! observables, and decides reducibility through several independent
//! criteria that are cross-checked against each other.
//!
//! Module map:
//!
//! - [`linalg`]: Hermitian spectra, supports, square roots.
//! - [`model`]: sites, transition operators, normalization checks, paths.
//! - [`evolution`]: block-diagonal states, the one-step map, trajectories,
//!   classical chains embedded as walks.
//! - [`invariant`]: vectorized dynamics and invariant states.
//! - [`qmc`]: transition expectations, limit operators, `E_{0]}` and the
//!   chain functional.
//! - [`reducibility`]: reducing projections, irreducibility certificates and
//!   the combined verdict.
//! - [`document`]: JSON model/state/cylinder documents and CSV output.
//! - [`cli`]: the `oqrw` command-line front end.

pub mod cli;
pub mod document;
pub mod evolution;
pub mod fixtures;
pub mod invariant;
pub mod linalg;
pub mod model;
pub mod qmc;
pub mod reducibility;

pub use evolution::{step, trajectory, BlockState, Trajectory};
pub use linalg::{CMat, C64};
pub use model::{OqrwModel, Path, SiteId};
