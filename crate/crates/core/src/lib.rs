//! Voxelized 2D lidar scan matching.
//!
//! The matcher ([`solver::icet_match`]) fits per-voxel Gaussian statistics of a
//! new scan to those of a reference scan with a weighted Gauss-Newton loop. It
//! discards measurement directions along extended surfaces before solving and
//! reports the covariance of its own estimate. When the remaining information is
//! rank deficient (a straight tunnel, for instance) the solution is restricted to
//! the well-conditioned subspace and the suppressed directions are reported.
//!
//! A point-to-distribution NDT matcher ([`ndt`]) and a raycasting simulator
//! ([`sim`]) are included for benchmarking.
//!
//! The crate is `no_std` and only needs `alloc`. Floating point transcendental
//! functions go through `libm`, so results are identical with or without `std`.

#![cfg_attr(not(test), no_std)]
// `!(x > 0.0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod error;
pub mod geometry;
mod linalg;
pub mod ndt;
pub mod sim;
pub mod solver;
pub mod voxel;

pub use crate::error::{Error, Result};
pub use crate::geometry::{
    apply_transform, transform_scan, FrameTag, Point2, ReducedCovariance, Scan, StateCovariance,
    StateVector,
};
pub use crate::linalg::{sym_eigen2, sym_eigen3, Eigen2, Eigen3};
pub use crate::ndt::{ndt_match, ndt_score, NdtConfig, NdtGrid, NdtSolution, NdtVoxel};
pub use crate::sim::{
    build_environment, generate_trial_pair, raycast_scan, CorridorParams, Environment,
    EnvironmentKind, ScanSpec, Segment, TrialPair, TrialSpec,
};
pub use crate::solver::{icet_match, IcetConfig, IcetSolution, MeasurementBlock};
pub use crate::voxel::{
    build_grid, correspond, eigen_prune, CellIndex, Correspondence, CorrespondenceMode,
    GridConfig, PruneResult, ReferenceGrid, VoxelStats,
};
