//! JSON views of grids and solutions, and ellipse tables for plotting.

use std::io::Write;

use icet_core::solver::IterationRecord;
use icet_core::{
    sym_eigen2, CellIndex, GridConfig, IcetSolution, NdtSolution, Point2, ReferenceGrid, Scan,
    StateVector,
};
use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoxelDump {
    pub index: CellIndex,
    pub count: usize,
    pub mean: Point2,
    pub covariance: [[f64; 2]; 2],
    /// Ascending.
    pub eigenvalues: [f64; 2],
    pub eigenvectors: [[f64; 2]; 2],
    /// Whether each eigen-direction is kept as a measurement direction.
    pub preserved: [bool; 2],
}

/// Per-voxel statistics and prune flags of a scan on the given grid.
pub fn voxel_dump(scan: &Scan, cfg: &GridConfig) -> Result<Vec<VoxelDump>> {
    let grid = ReferenceGrid::build(scan, cfg)?;
    Ok(grid
        .voxels()
        .iter()
        .zip(grid.prunes())
        .map(|(v, p)| {
            let c = v.covariance;
            VoxelDump {
                index: v.index,
                count: v.count,
                mean: v.mean,
                covariance: [[c[(0, 0)], c[(0, 1)]], [c[(1, 0)], c[(1, 1)]]],
                eigenvalues: p.eigenvalues,
                eigenvectors: p.eigenvectors.map(|e| [e.x, e.y]),
                preserved: [p.n >= 1, p.n >= 2],
            }
        })
        .collect())
}

/// A one-sigma ellipse.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ellipse {
    pub center_x: f64,
    pub center_y: f64,
    pub semi_major: f64,
    pub semi_minor: f64,
    /// Heading of the major axis, degrees in `[0, 180)`.
    pub angle_deg: f64,
}

impl Ellipse {
    pub fn from_covariance(center: Point2, cov: &nalgebra::Matrix2<f64>) -> Self {
        let e = sym_eigen2(cov);
        let major = e.vectors[1];
        let mut angle = major.y.atan2(major.x).to_degrees();
        if angle < 0.0 {
            angle += 180.0;
        }
        if angle >= 180.0 {
            angle -= 180.0;
        }
        Self {
            center_x: center.x,
            center_y: center.y,
            semi_major: e.values[1].max(0.0).sqrt(),
            semi_minor: e.values[0].max(0.0).sqrt(),
            angle_deg: angle,
        }
    }
}

#[derive(Serialize)]
struct EllipseRow {
    ix: i64,
    iy: i64,
    count: usize,
    center_x: f64,
    center_y: f64,
    semi_major: f64,
    semi_minor: f64,
    angle_deg: f64,
    preserved_dims: usize,
}

/// One row per voxel.
pub fn write_voxel_ellipses<W: Write>(out: W, voxels: &[VoxelDump]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for v in voxels {
        let c = nalgebra::Matrix2::new(
            v.covariance[0][0],
            v.covariance[0][1],
            v.covariance[1][0],
            v.covariance[1][1],
        );
        let e = Ellipse::from_covariance(v.mean, &c);
        w.serialize(EllipseRow {
            ix: v.index.ix,
            iy: v.index.iy,
            count: v.count,
            center_x: e.center_x,
            center_y: e.center_y,
            semi_major: e.semi_major,
            semi_minor: e.semi_minor,
            angle_deg: e.angle_deg,
            preserved_dims: v.preserved.iter().filter(|&&p| p).count(),
        })?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceJson {
    /// Full-state covariance. On the subspace path this is the lifted
    /// covariance and is singular along excluded directions.
    pub matrix: [[f64; 3]; 3],
    /// Orthonormal preserved directions, present on the subspace path.
    pub preserved_basis: Option<Vec<[f64; 3]>>,
    /// Covariance in preserved coordinates.
    pub subspace_covariance: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcludedJson {
    pub direction: [f64; 3],
    pub heading_deg: f64,
    pub eigenvalue: f64,
    pub summary: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Icet,
    Ndt,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionJson {
    pub algorithm: Algorithm,
    pub estimate: StateVector,
    /// Always null for NDT.
    pub covariance: Option<CovarianceJson>,
    pub iterations: usize,
    pub converged: bool,
    pub used_subspace: Option<bool>,
    pub excluded_directions: Vec<ExcludedJson>,
    pub residual_norm: Option<f64>,
    pub score: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub log: Option<Vec<IterationRecord>>,
}

fn rows3(m: &Matrix3<f64>) -> [[f64; 3]; 3] {
    [0, 1, 2].map(|i| [m[(i, 0)], m[(i, 1)], m[(i, 2)]])
}

impl SolutionJson {
    pub fn from_icet(sol: &IcetSolution, with_log: bool) -> Self {
        let reduced = sol.covariance.reduced.as_ref();
        Self {
            algorithm: Algorithm::Icet,
            estimate: sol.estimate,
            covariance: Some(CovarianceJson {
                matrix: rows3(&sol.covariance.matrix),
                preserved_basis: reduced.map(|r| r.basis.iter().map(|v| [v.x, v.y, v.z]).collect()),
                subspace_covariance: reduced.map(|r| r.cov.clone()),
            }),
            iterations: sol.iterations,
            converged: sol.converged,
            used_subspace: Some(sol.used_subspace),
            excluded_directions: sol
                .excluded_directions
                .iter()
                .map(|d| ExcludedJson {
                    direction: [d.direction.x, d.direction.y, d.direction.z],
                    heading_deg: d.heading_deg,
                    eigenvalue: d.eigenvalue,
                    summary: d.summary.clone(),
                })
                .collect(),
            residual_norm: Some(sol.residual_norm),
            score: None,
            log: with_log.then(|| sol.log.clone()),
        }
    }

    pub fn from_ndt(sol: &NdtSolution) -> Self {
        Self {
            algorithm: Algorithm::Ndt,
            estimate: sol.estimate,
            covariance: None,
            iterations: sol.iterations,
            converged: sol.converged,
            used_subspace: None,
            excluded_directions: Vec::new(),
            residual_norm: None,
            score: Some(sol.score),
            log: None,
        }
    }
}
