//! Almost-invariant pseudo norms for truncated reversible spectral systems.
//!
//! The construction: starting from the squared Sobolev norm, solve the
//! recursive homological equations exactly (coefficient division by signed
//! frequency sums) to produce a polynomial family whose time derivative
//! along the flow vanishes through a prescribed order. Concrete models are
//! Galerkin truncations of NLS with a convolution potential and of a
//! coupled, reversible but non-Hamiltonian NLS pair.

pub mod basis;
pub mod error;
pub mod family;
pub mod fitting;
pub mod flow;
pub mod harness;
pub mod jsonio;
pub mod lie;
pub mod models;
pub mod oracle;
pub mod poly;
pub mod selftest;
