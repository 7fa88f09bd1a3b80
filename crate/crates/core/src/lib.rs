//! Parent Hamiltonians, exact counting, tensor networks and finite-temperature
//! protocols for ensembles of Hamiltonian cycles on rectangular grids.

pub mod count;
pub mod error;
pub mod exact;
pub mod io;
pub mod lattice;
pub mod linalg;
pub mod protocols;
pub mod rules;
pub mod tn;

pub use error::{Error, Result};
pub use lattice::{classify, ClassifyReport, DualConfig, LatticeShape};
