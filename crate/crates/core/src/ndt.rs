//! Point-to-distribution Normal Distributions Transform, the baseline matcher.
//!
//! Each reference voxel becomes a Gaussian. The score of a candidate transform
//! is the sum over transformed new points of the Gaussian kernel of the voxel
//! they fall into. The score is maximised by Newton's method with an analytic
//! gradient and Hessian, a positive-definiteness repair, and step halving.
//! No solution covariance is produced.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};

use crate::error::{Error, Result};
use crate::geometry::{Point2, Scan, StateVector};
use crate::linalg::sym_eigen2;
use crate::voxel::{build_grid, CellIndex, CorrespondenceMode, GridConfig, VoxelStats};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NdtConfig {
    pub voxel_width: f64,
    pub origin: Point2,
    pub min_points: usize,
    pub max_iterations: usize,
    pub translation_tol: f64,
    pub rotation_tol: f64,
    /// Covariance eigenvalues are raised to at least this fraction of the largest.
    pub eig_floor_ratio: f64,
    /// Co-located: a point scores against the voxel of its own cell.
    /// Nearest neighbour: against the nearest reference mean within `nn_radius`.
    pub correspondence: CorrespondenceMode,
    pub nn_radius: f64,
    /// Line-search budget per Newton step.
    pub max_halvings: usize,
}

impl NdtConfig {
    pub fn new(voxel_width: f64) -> Self {
        Self {
            voxel_width,
            origin: Point2::new(0.0, 0.0),
            min_points: 5,
            max_iterations: 50,
            translation_tol: 1e-4,
            rotation_tol: 1e-6,
            eig_floor_ratio: 1e-3,
            correspondence: CorrespondenceMode::NearestNeighbor,
            nn_radius: voxel_width,
            max_halvings: 10,
        }
    }

    /// Same grid, point threshold and matching rule as an ICET configuration.
    pub fn matching(grid: &GridConfig) -> Self {
        Self {
            origin: grid.origin,
            min_points: grid.min_points,
            correspondence: grid.correspondence,
            nn_radius: grid.nn_radius,
            ..Self::new(grid.voxel_width)
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.grid().validate()?;
        if self.max_iterations == 0 {
            return Err(Error::InvalidConfig("max_iterations must be positive"));
        }
        if !(self.translation_tol > 0.0 && self.rotation_tol > 0.0) {
            return Err(Error::InvalidConfig("convergence tolerances must be positive"));
        }
        if !(self.eig_floor_ratio > 0.0 && self.eig_floor_ratio <= 1.0) {
            return Err(Error::InvalidConfig("eig_floor_ratio must lie in (0, 1]"));
        }
        Ok(())
    }

    fn grid(&self) -> GridConfig {
        GridConfig {
            origin: self.origin,
            min_points: self.min_points,
            correspondence: self.correspondence,
            nn_radius: self.nn_radius,
            ..GridConfig::new(self.voxel_width)
        }
    }
}

impl Default for NdtConfig {
    fn default() -> Self {
        Self::new(50.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NdtVoxel {
    pub stats: VoxelStats,
    /// Covariance after eigenvalue flooring.
    pub covariance: Matrix2<f64>,
    pub information: Matrix2<f64>,
}

/// Reference Gaussians plus a per-cell list of candidate voxels.
#[derive(Debug, Clone)]
pub struct NdtGrid {
    cfg: GridConfig,
    voxels: Vec<NdtVoxel>,
    candidates: BTreeMap<CellIndex, Vec<usize>>,
}

impl NdtGrid {
    pub fn build(reference: &Scan, cfg: &NdtConfig) -> Result<Self> {
        cfg.validate()?;
        let stats = build_grid(reference, &cfg.grid())?;
        Self::from_voxels(&stats, cfg)
    }

    pub fn from_voxels(stats: &[VoxelStats], cfg: &NdtConfig) -> Result<Self> {
        cfg.validate()?;
        let grid = cfg.grid();
        let mut voxels = Vec::with_capacity(stats.len());
        for s in stats {
            let eig = sym_eigen2(&s.covariance);
            let top = eig.values[1];
            // Points without spread give no usable Gaussian.
            if !(top > 0.0) {
                continue;
            }
            let floor = cfg.eig_floor_ratio * top;
            let mut covariance = Matrix2::zeros();
            let mut information = Matrix2::zeros();
            for k in 0..2 {
                let v = eig.vectors[k];
                let lam = if eig.values[k] < floor { floor } else { eig.values[k] };
                covariance += v * v.transpose() * lam;
                information += v * v.transpose() / lam;
            }
            voxels.push(NdtVoxel { stats: *s, covariance, information });
        }
        if voxels.is_empty() {
            return Err(Error::NoUsableVoxels);
        }

        let mut candidates: BTreeMap<CellIndex, Vec<usize>> = BTreeMap::new();
        match grid.correspondence {
            CorrespondenceMode::CoLocated => {
                for (j, v) in voxels.iter().enumerate() {
                    candidates.entry(v.stats.index).or_default().push(j);
                }
            }
            CorrespondenceMode::NearestNeighbor => {
                // A cell lists every mean within the radius of some point of the cell.
                let a = grid.voxel_width;
                let r = grid.nn_radius;
                let reach = libm::ceil(r / a) as i64;
                for (j, v) in voxels.iter().enumerate() {
                    let home = grid.cell_of(&v.stats.mean);
                    for ix in home.ix - reach..=home.ix + reach {
                        for iy in home.iy - reach..=home.iy + reach {
                            let lo_x = grid.origin.x + ix as f64 * a;
                            let lo_y = grid.origin.y + iy as f64 * a;
                            let dx = gap(v.stats.mean.x, lo_x, lo_x + a);
                            let dy = gap(v.stats.mean.y, lo_y, lo_y + a);
                            if dx * dx + dy * dy <= r * r {
                                candidates.entry(CellIndex::new(ix, iy)).or_default().push(j);
                            }
                        }
                    }
                }
            }
        }
        Ok(Self { cfg: grid, voxels, candidates })
    }

    pub fn voxels(&self) -> &[NdtVoxel] {
        &self.voxels
    }

    /// The reference voxel a point in the reference frame scores against.
    pub fn voxel_for(&self, q: &Point2) -> Option<&NdtVoxel> {
        let list = self.candidates.get(&self.cfg.cell_of(q))?;
        match self.cfg.correspondence {
            CorrespondenceMode::CoLocated => list.first().map(|&j| &self.voxels[j]),
            CorrespondenceMode::NearestNeighbor => {
                let r2 = self.cfg.nn_radius * self.cfg.nn_radius;
                let mut best: Option<(f64, usize)> = None;
                for &j in list {
                    let m = self.voxels[j].stats.mean;
                    let d2 = (q.x - m.x) * (q.x - m.x) + (q.y - m.y) * (q.y - m.y);
                    if d2 <= r2 && best.is_none_or(|(bd, _)| d2 < bd) {
                        best = Some((d2, j));
                    }
                }
                best.map(|(_, j)| &self.voxels[j])
            }
        }
    }

    pub fn score(&self, x: &StateVector, points: &[Point2]) -> f64 {
        let (s, c) = (libm::sin(x.theta), libm::cos(x.theta));
        points
            .iter()
            .map(|p| {
                let q = Point2::new(c * p.x - s * p.y - x.x, s * p.x + c * p.y - x.y);
                match self.voxel_for(&q) {
                    Some(v) => {
                        let d = Vector2::new(q.x - v.stats.mean.x, q.y - v.stats.mean.y);
                        libm::exp(-0.5 * d.dot(&(v.information * d)))
                    }
                    None => 0.0,
                }
            })
            .sum()
    }

    /// Score, gradient and Hessian with respect to `(x, y, theta)`.
    pub fn score_derivatives(
        &self,
        x: &StateVector,
        points: &[Point2],
    ) -> (f64, Vector3<f64>, Matrix3<f64>) {
        let (s, c) = (libm::sin(x.theta), libm::cos(x.theta));
        let mut score = 0.0;
        let mut grad = Vector3::zeros();
        let mut hess = Matrix3::zeros();
        for p in points {
            let q = Point2::new(c * p.x - s * p.y - x.x, s * p.x + c * p.y - x.y);
            let Some(v) = self.voxel_for(&q) else {
                continue;
            };
            let d = Vector2::new(q.x - v.stats.mean.x, q.y - v.stats.mean.y);
            let w = v.information;
            let wd = w * d;
            let e = libm::exp(-0.5 * d.dot(&wd));
            // dq/dx = (-1, 0), dq/dy = (0, -1), dq/dtheta = R'p, d2q/dtheta2 = -Rp.
            let jt = Vector2::new(-s * p.x - c * p.y, c * p.x - s * p.y);
            let jtt = Vector2::new(-(c * p.x - s * p.y), -(s * p.x + c * p.y));
            let cols = [Vector2::new(-1.0, 0.0), Vector2::new(0.0, -1.0), jt];
            let g = Vector3::new(-wd.x, -wd.y, wd.dot(&jt));
            score += e;
            grad -= g * e;
            for k in 0..3 {
                for l in k..3 {
                    let mut h = g[k] * g[l] - cols[k].dot(&(w * cols[l]));
                    if k == 2 && l == 2 {
                        h -= wd.dot(&jtt);
                    }
                    hess[(k, l)] += e * h;
                    hess[(l, k)] = hess[(k, l)];
                }
            }
        }
        (score, grad, hess)
    }
}

fn gap(v: f64, lo: f64, hi: f64) -> f64 {
    if v < lo {
        lo - v
    } else if v > hi {
        v - hi
    } else {
        0.0
    }
}

/// Score of `new_scan` under transform `x` against the reference Gaussians.
pub fn ndt_score(x: &StateVector, new_scan: &Scan, grid: &NdtGrid) -> f64 {
    grid.score(x, new_scan.points())
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NdtSolution {
    pub estimate: StateVector,
    pub score: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Maximises the score from `x0`.
pub fn ndt_match(
    ref_scan: &Scan,
    new_scan: &Scan,
    cfg: &NdtConfig,
    x0: &StateVector,
) -> Result<NdtSolution> {
    if ref_scan.is_empty() || new_scan.is_empty() {
        return Err(Error::EmptyScan);
    }
    if !x0.is_finite() {
        return Err(Error::NonFinite);
    }
    let grid = NdtGrid::build(ref_scan, cfg)?;
    let points = new_scan.points();

    let mut x = *x0;
    let mut iterations = 0;
    let mut converged = false;
    let (mut score, mut grad, mut hess) = grid.score_derivatives(&x, points);
    while iterations < cfg.max_iterations {
        iterations += 1;
        let step = newton_step(&grad, &hess);
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..=cfg.max_halvings {
            let trial = x.plus(&(step * alpha));
            let s = grid.score(&trial, points);
            if s >= score {
                accepted = Some(trial);
                break;
            }
            alpha *= 0.5;
        }
        let taken = step * alpha;
        let small = libm::fabs(taken.x) < cfg.translation_tol
            && libm::fabs(taken.y) < cfg.translation_tol
            && libm::fabs(taken.z) < cfg.rotation_tol;
        let Some(next) = accepted else {
            // No ascent along the Newton direction: a local maximum up to
            // the line-search resolution.
            converged = small;
            break;
        };
        x = next;
        (score, grad, hess) = grid.score_derivatives(&x, points);
        if small {
            converged = true;
            break;
        }
    }
    if !x.is_finite() {
        return Err(Error::NonFinite);
    }
    Ok(NdtSolution { estimate: x, score, iterations, converged })
}

/// Newton step for minimising the negated score, with the Hessian shifted
/// until positive definite.
fn newton_step(grad: &Vector3<f64>, hess: &Matrix3<f64>) -> Vector3<f64> {
    let h = -hess;
    let g = -grad;
    let scale = (0..3).map(|k| libm::fabs(h[(k, k)])).fold(0.0, f64::max).max(1e-12);
    let mut shift = 0.0;
    loop {
        if let Some(ch) = (h + Matrix3::identity() * shift).cholesky() {
            return -ch.solve(&g);
        }
        shift = if shift == 0.0 { 1e-9 * scale } else { shift * 10.0 };
    }
}
