//! Approximation machinery for the MAX-k-local Hamiltonian problem.
//!
//! The crate covers product-state approximation through recursive Schmidt
//! decomposition, the sample / linearize / solve pipeline for dense
//! instances, instance generators (random dense, CSP embedding, clock
//! construction) and brute-force oracles for small instances.

pub mod clock;
pub mod degree;
pub mod error;
pub mod instance;
pub mod operator;
pub mod pipeline;
pub mod product;
pub mod random;
pub mod sdp;

pub use error::{Error, Result};
pub use instance::{Direction, LocalHamiltonianInstance, LocalTerm, ProductAssignment};
pub use operator::{DensityOp, HermBasis, HermitianOp, PureState, C64};

/// Version tag written into every JSON document this crate produces.
pub const SCHEMA_VERSION: u32 = 1;
