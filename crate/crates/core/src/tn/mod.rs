//! Tensor-network machinery on the snake chain of bulk plaquettes.

pub mod dmrg;
pub mod mpo;
pub mod mps;
pub mod report;

pub use dmrg::{dmrg, CountTarget, DmrgOptions, DmrgResult, SweepRecord};
pub use mpo::{build_mpo_hhc, build_mpo_hhc_sparse, Mpo};
pub use mps::{count_from_mps, entropy_profile, EntropyProfile, Mps};
pub use report::{quality_csv, quality_report, QualityReport};
