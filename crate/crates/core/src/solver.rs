//! Weighted Gauss-Newton matching of voxel means with measurement-direction
//! pruning, a condition-number guarded solve and predicted solution covariance.
//!
//! Each iteration transforms the new scan by the current estimate, re-bins it on
//! the reference grid, and pairs voxels. A pair contributes the residual of
//! the reference mean minus the new mean, projected onto the reference
//! voxel's compact eigen-directions, weighted by the inverse covariance of
//! the two sample means. The normal equations are accumulated per voxel,
//! never as a stacked system.
//!
//! If the accumulated information matrix is ill-conditioned, its weakest
//! eigen-directions are dropped one at a time until the rest is well
//! conditioned. Corrections then move the estimate only inside the preserved
//! subspace, and the reported covariance is restricted to it.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use nalgebra::{Matrix2, Matrix2x3, Matrix3, RowVector3, Vector2, Vector3};

use crate::error::{Error, Result};
use crate::geometry::{Point2, Scan, StateCovariance, StateVector};
use crate::linalg::sym_eigen3;
use crate::voxel::{voxelize, Correspondence, GridConfig, ReferenceGrid, VoxelStats};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct IcetConfig {
    pub max_iterations: usize,
    /// Converged once both translation corrections fall below this.
    pub translation_tol: f64,
    /// ... and the rotation correction falls below this (radians).
    pub rotation_tol: f64,
    /// Largest accepted ratio of extreme eigenvalues of the information matrix.
    pub condition_cutoff: f64,
    /// Diagonal jitter added to each voxel noise block. `None` means `1e-9 a^2`.
    pub r_jitter: Option<f64>,
    /// Keep a per-iteration log in the solution.
    pub record_log: bool,
}

impl Default for IcetConfig {
    fn default() -> Self {
        Self {
            max_iterations: 50,
            translation_tol: 1e-4,
            rotation_tol: 1e-6,
            condition_cutoff: 1e5,
            r_jitter: None,
            record_log: false,
        }
    }
}

impl IcetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::InvalidConfig("max_iterations must be positive"));
        }
        if !(self.translation_tol > 0.0 && self.rotation_tol > 0.0) {
            return Err(Error::InvalidConfig("convergence tolerances must be positive"));
        }
        if !(self.condition_cutoff > 1.0) {
            return Err(Error::InvalidConfig("condition cutoff must exceed 1"));
        }
        if let Some(eps) = self.r_jitter {
            if !(eps > 0.0) {
                return Err(Error::InvalidConfig("r_jitter must be positive"));
            }
        }
        Ok(())
    }

    pub fn jitter_for(&self, voxel_width: f64) -> f64 {
        self.r_jitter.unwrap_or(1e-9 * voxel_width * voxel_width)
    }

    fn converged(&self, delta: &Vector3<f64>) -> bool {
        delta.x.abs() < self.translation_tol
            && delta.y.abs() < self.translation_tol
            && delta.z.abs() < self.rotation_tol
    }
}

/// Jacobian of a voxel mean with respect to `(x, y, theta)`.
///
/// The rotation column is the voxel average of `dR/dtheta * p` over the original
/// (untransformed) new-scan points. An empty voxel gives a zero rotation column.
pub fn jacobian_block<I>(points: I, theta: f64) -> Matrix2x3<f64>
where
    I: IntoIterator<Item = Point2>,
{
    let (n, sx, sy) = points
        .into_iter()
        .fold((0usize, 0.0, 0.0), |(n, sx, sy), p| (n + 1, sx + p.x, sy + p.y));
    let (mx, my) = if n == 0 {
        (0.0, 0.0)
    } else {
        (sx / n as f64, sy / n as f64)
    };
    let (s, c) = libm::sincos(theta);
    #[rustfmt::skip]
    let h = Matrix2x3::new(
        -1.0, 0.0, -s * mx - c * my,
        0.0, -1.0, c * mx - s * my,
    );
    h
}

/// Covariance of the difference of two voxel means: `Q0/n0 + Q/n + jitter I`.
pub fn noise_block(reference: &VoxelStats, new: &VoxelStats, jitter: f64) -> Matrix2<f64> {
    reference.covariance / reference.count as f64
        + new.covariance / new.count as f64
        + Matrix2::identity() * jitter
}

/// One voxel's contribution after projection onto its preserved directions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MeasurementBlock {
    /// Both directions preserved.
    Full {
        h: Matrix2x3<f64>,
        r: Matrix2<f64>,
        dy: Vector2<f64>,
    },
    /// One preserved direction.
    Projected {
        h: RowVector3<f64>,
        r: f64,
        dy: f64,
    },
}

impl MeasurementBlock {
    pub fn dim(&self) -> usize {
        match self {
            MeasurementBlock::Full { .. } => 2,
            MeasurementBlock::Projected { .. } => 1,
        }
    }

    /// `(H^T R^-1 H, H^T R^-1 dy)`.
    pub fn information(&self) -> (Matrix3<f64>, Vector3<f64>) {
        match *self {
            MeasurementBlock::Full { h, r, dy } => {
                let w = inverse_sym2(&r);
                let hw = h.transpose() * w;
                (hw * h, hw * dy)
            }
            MeasurementBlock::Projected { h, r, dy } => {
                let ht = h.transpose();
                (ht * h / r, ht * (dy / r))
            }
        }
    }

    /// Squared residual length (unweighted).
    pub fn residual_sq(&self) -> f64 {
        match *self {
            MeasurementBlock::Full { dy, .. } => dy.norm_squared(),
            MeasurementBlock::Projected { dy, .. } => dy * dy,
        }
    }
}

fn inverse_sym2(r: &Matrix2<f64>) -> Matrix2<f64> {
    let (a, b, d) = (r[(0, 0)], 0.5 * (r[(0, 1)] + r[(1, 0)]), r[(1, 1)]);
    let det = a * d - b * b;
    Matrix2::new(d, -b, -b, a) / det
}

/// Projects a voxel's Jacobian, noise and residual onto the preserved
/// eigen-directions of the reference covariance. Fully extended voxels
/// contribute nothing.
pub fn reduce_block(
    corr: &Correspondence,
    h: &Matrix2x3<f64>,
    r: &Matrix2<f64>,
) -> Option<MeasurementBlock> {
    let dy = corr.reference.mean.to_vector() - corr.new.mean.to_vector();
    match corr.prune.n {
        2 => Some(MeasurementBlock::Full { h: *h, r: *r, dy }),
        1 => {
            let u = corr.prune.eigenvectors[0];
            Some(MeasurementBlock::Projected {
                h: u.transpose() * h,
                r: (u.transpose() * r * u)[(0, 0)],
                dy: u.dot(&dy),
            })
        }
        _ => None,
    }
}

/// Sums `H^T R^-1 H` and `H^T R^-1 dy` over blocks.
pub fn accumulate_normal_equations(blocks: &[MeasurementBlock]) -> (Matrix3<f64>, Vector3<f64>) {
    blocks.iter().fold(
        (Matrix3::zeros(), Vector3::zeros()),
        |(a, b), blk| {
            let (da, db) = blk.information();
            (a + da, b + db)
        },
    )
}

/// Ratio of extreme eigenvalues; infinite when the smallest is not positive.
pub fn condition_number(a: &Matrix3<f64>) -> f64 {
    let e = sym_eigen3(a);
    if e.values[0] <= 0.0 {
        f64::INFINITY
    } else {
        e.values[2] / e.values[0]
    }
}

/// Preserved and eliminated eigen-directions of an ill-conditioned
/// information matrix.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SubspaceInfo {
    pub preserved: Vec<Vector3<f64>>,
    pub preserved_eigenvalues: Vec<f64>,
    pub eliminated: Vec<Vector3<f64>>,
    pub eliminated_eigenvalues: Vec<f64>,
}

impl SubspaceInfo {
    /// Orthogonal projection onto the preserved directions.
    pub fn projector(&self) -> Matrix3<f64> {
        self.preserved
            .iter()
            .fold(Matrix3::zeros(), |m, v| m + v * v.transpose())
    }

    pub fn covariance(&self) -> StateCovariance {
        let variances: Vec<f64> = self.preserved_eigenvalues.iter().map(|g| 1.0 / g).collect();
        StateCovariance::from_subspace(self.preserved.clone(), &variances)
    }
}

/// Solves `A delta = b`, falling back to the well-conditioned eigen-subspace of
/// `A` when its condition number reaches `cfg.condition_cutoff`. The smallest
/// eigenvalue is dropped repeatedly until the retained ones pass.
pub fn solve_step(
    a: &Matrix3<f64>,
    b: &Vector3<f64>,
    cfg: &IcetConfig,
) -> Result<(Vector3<f64>, Option<SubspaceInfo>)> {
    let eig = sym_eigen3(a);
    let largest = eig.values[2];
    if !(largest > 0.0) || !largest.is_finite() {
        return Err(Error::NoObservableDirections);
    }
    let mut dropped = 0;
    while dropped < 2 && !(eig.values[dropped] > 0.0 && largest / eig.values[dropped] < cfg.condition_cutoff) {
        dropped += 1;
    }
    if dropped == 0 {
        let chol = a.cholesky().ok_or(Error::NoObservableDirections)?;
        return Ok((chol.solve(b), None));
    }
    let preserved: Vec<Vector3<f64>> = eig.vectors[dropped..].to_vec();
    let gammas: Vec<f64> = eig.values[dropped..].to_vec();
    let delta = preserved
        .iter()
        .zip(&gammas)
        .fold(Vector3::zeros(), |acc, (v, g)| acc + v * (v.dot(b) / g));
    Ok((
        delta,
        Some(SubspaceInfo {
            preserved,
            preserved_eigenvalues: gammas,
            eliminated: eig.vectors[..dropped].to_vec(),
            eliminated_eigenvalues: eig.values[..dropped].to_vec(),
        }),
    ))
}

/// A state-space direction the solution was not allowed to move along.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ExcludedDirection {
    /// Unit vector over `(x, y, theta)`.
    pub direction: Vector3<f64>,
    pub eigenvalue: f64,
    /// Heading of the translational part in degrees, folded into `[0, 180)`.
    pub heading_deg: f64,
    pub summary: String,
}

impl ExcludedDirection {
    fn new(direction: Vector3<f64>, eigenvalue: f64) -> Self {
        let mut heading = libm::atan2(direction.y, direction.x).to_degrees();
        if heading < 0.0 {
            heading += 180.0;
        }
        if heading >= 180.0 {
            heading -= 180.0;
        }
        let axis = match direction.iamax() {
            0 => "x translation",
            1 => "y translation",
            _ => "rotation",
        };
        let summary = format!(
            "suppressed {axis} (x {:.3}, y {:.3}, theta {:.3}; translation heading {:.1} deg)",
            direction.x, direction.y, direction.z, heading
        );
        Self {
            direction,
            eigenvalue,
            heading_deg: heading,
            summary,
        }
    }

    /// Angle in degrees between the translational part and a line at `axis_deg`.
    pub fn angle_to_axis_deg(&self, axis_deg: f64) -> f64 {
        let mut d = libm::fmod(self.heading_deg - axis_deg, 180.0);
        if d < 0.0 {
            d += 180.0;
        }
        d.min(180.0 - d)
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct IterationRecord {
    pub iteration: usize,
    pub delta: Vector3<f64>,
    pub estimate: StateVector,
    pub correspondences: usize,
    pub blocks: usize,
    pub residual_norm: f64,
    pub condition_number: f64,
    pub used_subspace: bool,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct IcetSolution {
    pub estimate: StateVector,
    pub covariance: StateCovariance,
    pub iterations: usize,
    pub converged: bool,
    pub used_subspace: bool,
    /// Preserved directions `V_P` when `used_subspace`.
    pub preserved_basis: Option<Vec<Vector3<f64>>>,
    pub excluded_directions: Vec<ExcludedDirection>,
    /// RMS of the reduced residuals at the last linearization point.
    pub residual_norm: f64,
    pub log: Vec<IterationRecord>,
}

struct Linearization {
    a: Matrix3<f64>,
    b: Vector3<f64>,
    correspondences: usize,
    blocks: usize,
    residual_norm: f64,
}

fn linearize(
    reference: &ReferenceGrid,
    new_points: &[Point2],
    estimate: &StateVector,
    jitter: f64,
) -> Result<Linearization> {
    let (s, c) = libm::sincos(estimate.theta);
    let moved: Vec<Point2> = new_points
        .iter()
        .map(|p| Point2::new(c * p.x - s * p.y - estimate.x, s * p.x + c * p.y - estimate.y))
        .collect();
    let voxels = voxelize(&moved, reference.config()).voxels;
    if voxels.is_empty() {
        return Err(Error::NoUsableVoxels);
    }
    let stats: Vec<VoxelStats> = voxels.iter().map(|v| v.stats).collect();
    let pairs = reference.match_indices(&stats);
    if pairs.is_empty() {
        return Err(Error::NoCorrespondences);
    }
    let mut blocks = Vec::with_capacity(pairs.len());
    for &(i, j) in &pairs {
        let corr = Correspondence {
            reference: reference.voxels()[j],
            new: stats[i],
            prune: reference.prunes()[j],
        };
        let h = jacobian_block(voxels[i].members.iter().map(|&k| new_points[k]), estimate.theta);
        let r = noise_block(&corr.reference, &corr.new, jitter);
        if let Some(blk) = reduce_block(&corr, &h, &r) {
            blocks.push(blk);
        }
    }
    if blocks.is_empty() {
        return Err(Error::NoObservableDirections);
    }
    let (a, b) = accumulate_normal_equations(&blocks);
    let dims: usize = blocks.iter().map(MeasurementBlock::dim).sum();
    let sq: f64 = blocks.iter().map(MeasurementBlock::residual_sq).sum();
    Ok(Linearization {
        a,
        b,
        correspondences: pairs.len(),
        blocks: blocks.len(),
        residual_norm: libm::sqrt(sq / dims as f64),
    })
}

/// Estimates the transform mapping `new_scan` into the frame of `ref_scan`.
///
/// Reference statistics and prune results are computed once. The new scan is
/// re-voxelized on the same grid at every iteration. Hitting `max_iterations`
/// returns the last iterate with `converged == false`.
pub fn icet_match(
    ref_scan: &Scan,
    new_scan: &Scan,
    grid_cfg: &GridConfig,
    cfg: &IcetConfig,
    x0: &StateVector,
) -> Result<IcetSolution> {
    cfg.validate()?;
    if new_scan.is_empty() {
        return Err(Error::EmptyScan);
    }
    if !x0.is_finite() {
        return Err(Error::NonFinite);
    }
    let reference = ReferenceGrid::build(ref_scan, grid_cfg)?;
    let jitter = cfg.jitter_for(grid_cfg.voxel_width);

    let mut estimate = StateVector::new(x0.x, x0.y, x0.theta);
    // Subspace path bookkeeping: anchor state and accumulated correction.
    let mut anchor = estimate;
    let mut offset = Vector3::zeros();
    let mut subspace: Option<SubspaceInfo> = None;
    let mut last_a = Matrix3::zeros();
    let mut residual_norm = 0.0;
    let mut converged = false;
    let mut iterations = 0;
    let mut log = Vec::new();

    while iterations < cfg.max_iterations {
        iterations += 1;
        let lin = linearize(&reference, new_scan.points(), &estimate, jitter)?;
        let (delta, info) = solve_step(&lin.a, &lin.b, cfg)?;
        match &info {
            None => estimate = estimate.plus(&delta),
            Some(_) => {
                if subspace.is_none() {
                    anchor = estimate;
                    offset = Vector3::zeros();
                }
                offset += delta;
                estimate = anchor.plus(&offset);
            }
        }
        subspace = info;
        last_a = lin.a;
        residual_norm = lin.residual_norm;
        if cfg.record_log {
            log.push(IterationRecord {
                iteration: iterations,
                delta,
                estimate,
                correspondences: lin.correspondences,
                blocks: lin.blocks,
                residual_norm: lin.residual_norm,
                condition_number: condition_number(&lin.a),
                used_subspace: subspace.is_some(),
            });
        }
        if cfg.converged(&delta) {
            converged = true;
            break;
        }
    }

    let (covariance, preserved_basis, excluded_directions) = match &subspace {
        None => {
            let p = last_a
                .cholesky()
                .map(|c| c.inverse())
                .ok_or(Error::NoObservableDirections)?;
            (StateCovariance::full((p + p.transpose()) * 0.5), None, Vec::new())
        }
        Some(info) => {
            // Only the preserved coordinates of the accumulated correction are kept.
            estimate = anchor.plus(&(info.projector() * offset));
            let excluded = info
                .eliminated
                .iter()
                .zip(&info.eliminated_eigenvalues)
                .map(|(v, g)| ExcludedDirection::new(*v, *g))
                .collect();
            (info.covariance(), Some(info.preserved.clone()), excluded)
        }
    };

    Ok(IcetSolution {
        estimate,
        covariance,
        iterations,
        converged,
        used_subspace: subspace.is_some(),
        preserved_basis,
        excluded_directions,
        residual_norm,
        log,
    })
}
