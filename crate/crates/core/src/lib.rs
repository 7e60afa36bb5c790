//! Galerkin P1 finite elements for divergence-form elliptic Dirichlet
//! problems whose drift is only critically integrable.
//!
//! The library constructs a strictly positive weight on a container domain,
//! rewrites the drift through the induced divergence-free flux, solves the
//! transformed problem, and ships study drivers that measure every estimate
//! the construction is supposed to satisfy (maximum principle, contraction,
//! energy bound, mollifier stability, blow-up trends on the singular
//! counterexample field).

pub mod assembly;
pub mod error;
pub mod fields;
pub mod linsolve;
pub mod mesh;
pub mod pipeline;
pub mod quadrature;
pub mod verify;

pub use error::{Error, Result};
pub use mesh::{build_mesh, container_mesh, DomainSpec, Mesh, RegionTag};
