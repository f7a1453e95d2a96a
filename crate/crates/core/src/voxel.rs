//! Voxelization, per-voxel Gaussian statistics, eigen-pruning of extended
//! distributions, and voxel correspondence between scans.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use nalgebra::{Matrix2, Vector2};

use crate::error::{Error, Result};
use crate::geometry::{Point2, Scan};
use crate::linalg::sym_eigen2;

/// Eigenvalues closer than this to the threshold count as extended.
const THRESHOLD_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum CorrespondenceMode {
    /// Pair voxels that occupy the same grid cell.
    CoLocated,
    /// Pair each new-scan voxel with the nearest reference mean within `nn_radius`.
    #[default]
    NearestNeighbor,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GridConfig {
    pub voxel_width: f64,
    pub origin: Point2,
    /// Cells with fewer points are discarded.
    pub min_points: usize,
    /// Covariance eigenvalues at or above this are treated as extended.
    pub eigen_threshold: f64,
    pub correspondence: CorrespondenceMode,
    pub nn_radius: f64,
}

impl GridConfig {
    /// Defaults for a given voxel width: `min_points = 5`, threshold `a^2/16`,
    /// nearest-neighbour matching within one voxel width, origin at zero.
    pub fn new(voxel_width: f64) -> Self {
        Self {
            voxel_width,
            origin: Point2::new(0.0, 0.0),
            min_points: 5,
            eigen_threshold: voxel_width * voxel_width / 16.0,
            correspondence: CorrespondenceMode::NearestNeighbor,
            nn_radius: voxel_width,
        }
    }

    pub fn with_correspondence(mut self, mode: CorrespondenceMode) -> Self {
        self.correspondence = mode;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.voxel_width > 0.0 && self.voxel_width.is_finite()) {
            return Err(Error::InvalidConfig("voxel width must be positive"));
        }
        if !self.origin.is_finite() {
            return Err(Error::InvalidConfig("grid origin must be finite"));
        }
        if self.min_points < 3 {
            return Err(Error::InvalidConfig("min_points must be at least 3"));
        }
        if !(self.eigen_threshold > 0.0) {
            return Err(Error::InvalidConfig("eigen threshold must be positive"));
        }
        if !(self.nn_radius > 0.0) {
            return Err(Error::InvalidConfig("nn_radius must be positive"));
        }
        Ok(())
    }

    /// False when the voxel is not comfortably wider than the point noise
    /// (less than ten standard deviations).
    pub fn resolves_noise(&self, noise_sigma: f64) -> bool {
        self.voxel_width >= 10.0 * noise_sigma
    }

    pub fn cell_of(&self, p: &Point2) -> CellIndex {
        CellIndex {
            ix: libm::floor((p.x - self.origin.x) / self.voxel_width) as i64,
            iy: libm::floor((p.y - self.origin.y) / self.voxel_width) as i64,
        }
    }
}

impl Default for GridConfig {
    fn default() -> Self {
        Self::new(50.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CellIndex {
    pub ix: i64,
    pub iy: i64,
}

impl CellIndex {
    pub const fn new(ix: i64, iy: i64) -> Self {
        Self { ix, iy }
    }
}

/// Sample mean and `(n - 1)`-normalized covariance of the points in one cell.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct VoxelStats {
    pub index: CellIndex,
    pub count: usize,
    pub mean: Point2,
    pub covariance: Matrix2<f64>,
}

impl VoxelStats {
    /// Two-pass statistics. Needs at least two points.
    pub fn from_points<I>(index: CellIndex, points: I) -> Result<Self>
    where
        I: IntoIterator<Item = Point2>,
        I::IntoIter: Clone,
    {
        let it = points.into_iter();
        let (count, sx, sy) = it
            .clone()
            .fold((0usize, 0.0, 0.0), |(n, sx, sy), p| (n + 1, sx + p.x, sy + p.y));
        if count < 2 {
            return Err(Error::EmptyInput);
        }
        let inv = 1.0 / count as f64;
        let (mx, my) = (sx * inv, sy * inv);
        let (mut cxx, mut cxy, mut cyy) = (0.0, 0.0, 0.0);
        for p in it {
            let dx = p.x - mx;
            let dy = p.y - my;
            cxx += dx * dx;
            cxy += dx * dy;
            cyy += dy * dy;
        }
        let norm = 1.0 / (count - 1) as f64;
        Ok(Self {
            index,
            count,
            mean: Point2::new(mx, my),
            covariance: Matrix2::new(cxx * norm, cxy * norm, cxy * norm, cyy * norm),
        })
    }
}

/// A surviving cell together with the indices of its member points.
#[derive(Debug, Clone, PartialEq)]
pub struct Voxel {
    pub stats: VoxelStats,
    pub members: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Voxelization {
    /// Surviving voxels in ascending cell order.
    pub voxels: Vec<Voxel>,
    /// Points that fell in cells below the `min_points` cutoff.
    pub discarded_points: usize,
}

/// Groups point indices by grid cell, in ascending cell order.
pub fn bin_points(points: &[Point2], cfg: &GridConfig) -> BTreeMap<CellIndex, Vec<usize>> {
    let mut cells: BTreeMap<CellIndex, Vec<usize>> = BTreeMap::new();
    for (i, p) in points.iter().enumerate() {
        cells.entry(cfg.cell_of(p)).or_default().push(i);
    }
    cells
}

/// Bins `points` and keeps the cells holding at least `min_points` points.
pub fn voxelize(points: &[Point2], cfg: &GridConfig) -> Voxelization {
    let mut voxels = Vec::new();
    let mut discarded_points = 0;
    for (index, members) in bin_points(points, cfg) {
        if members.len() < cfg.min_points.max(2) {
            discarded_points += members.len();
            continue;
        }
        let stats = VoxelStats::from_points(index, members.iter().map(|&i| points[i]))
            .expect("cell holds at least two points");
        voxels.push(Voxel { stats, members });
    }
    Voxelization {
        voxels,
        discarded_points,
    }
}

/// Voxel statistics of a scan on the grid described by `cfg`.
pub fn build_grid(scan: &Scan, cfg: &GridConfig) -> Result<Vec<VoxelStats>> {
    cfg.validate()?;
    if scan.is_empty() {
        return Err(Error::EmptyScan);
    }
    let voxels: Vec<VoxelStats> = voxelize(scan.points(), cfg)
        .voxels
        .into_iter()
        .map(|v| v.stats)
        .collect();
    if voxels.is_empty() {
        return Err(Error::NoUsableVoxels);
    }
    Ok(voxels)
}

/// Eigen-split of a reference covariance into preserved (compact) and
/// eliminated (extended) directions.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PruneResult {
    /// Number of preserved directions (0, 1 or 2).
    pub n: usize,
    /// Eigenvalues, ascending. The first `n` are preserved.
    pub eigenvalues: [f64; 2],
    pub eigenvectors: [Vector2<f64>; 2],
}

impl PruneResult {
    pub fn preserved_vectors(&self) -> &[Vector2<f64>] {
        &self.eigenvectors[..self.n]
    }

    pub fn eliminated_vectors(&self) -> &[Vector2<f64>] {
        &self.eigenvectors[self.n..]
    }

    pub fn preserved_values(&self) -> &[f64] {
        &self.eigenvalues[..self.n]
    }

    pub fn eliminated_values(&self) -> &[f64] {
        &self.eigenvalues[self.n..]
    }
}

pub fn eigen_prune(q0: &Matrix2<f64>, threshold: f64) -> PruneResult {
    let eig = sym_eigen2(q0);
    let n = eig
        .values
        .iter()
        .take_while(|&&v| v < threshold - THRESHOLD_SLACK)
        .count();
    PruneResult {
        n,
        eigenvalues: eig.values,
        eigenvectors: eig.vectors,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Correspondence {
    pub reference: VoxelStats,
    pub new: VoxelStats,
    /// Always derived from the reference covariance.
    pub prune: PruneResult,
}

/// Reference voxels with their prune results, computed once and reused while
/// the new scan is re-voxelized.
#[derive(Debug, Clone)]
pub struct ReferenceGrid {
    cfg: GridConfig,
    voxels: Vec<VoxelStats>,
    prunes: Vec<PruneResult>,
    lookup: BTreeMap<CellIndex, usize>,
}

impl ReferenceGrid {
    pub fn build(scan: &Scan, cfg: &GridConfig) -> Result<Self> {
        let voxels = build_grid(scan, cfg)?;
        Self::from_voxels(voxels, cfg)
    }

    pub fn from_voxels(voxels: Vec<VoxelStats>, cfg: &GridConfig) -> Result<Self> {
        cfg.validate()?;
        if voxels.is_empty() {
            return Err(Error::NoUsableVoxels);
        }
        let prunes = voxels
            .iter()
            .map(|v| eigen_prune(&v.covariance, cfg.eigen_threshold))
            .collect();
        let lookup = voxels.iter().enumerate().map(|(i, v)| (v.index, i)).collect();
        Ok(Self {
            cfg: *cfg,
            voxels,
            prunes,
            lookup,
        })
    }

    pub fn config(&self) -> &GridConfig {
        &self.cfg
    }

    pub fn voxels(&self) -> &[VoxelStats] {
        &self.voxels
    }

    pub fn prunes(&self) -> &[PruneResult] {
        &self.prunes
    }

    /// Reference index matched to one new-scan voxel, if any.
    pub fn match_voxel(&self, new: &VoxelStats) -> Option<usize> {
        match self.cfg.correspondence {
            CorrespondenceMode::CoLocated => self.lookup.get(&new.index).copied(),
            CorrespondenceMode::NearestNeighbor => self.nearest(new),
        }
    }

    fn nearest(&self, new: &VoxelStats) -> Option<usize> {
        // A voxel mean lies inside its own cell, so candidates within the radius
        // sit at most floor(r / a) + 1 cells away from the query mean's cell.
        let home = self.cfg.cell_of(&new.mean);
        let reach = libm::floor(self.cfg.nn_radius / self.cfg.voxel_width) as i64 + 1;
        let mut best: Option<(f64, usize)> = None;
        for ix in home.ix - reach..=home.ix + reach {
            for iy in home.iy - reach..=home.iy + reach {
                let Some(&j) = self.lookup.get(&CellIndex::new(ix, iy)) else {
                    continue;
                };
                let d = self.voxels[j].mean.distance(&new.mean);
                if d > self.cfg.nn_radius {
                    continue;
                }
                let better = match best {
                    None => true,
                    Some((bd, bj)) => d < bd || (d == bd && self.voxels[j].index < self.voxels[bj].index),
                };
                if better {
                    best = Some((d, j));
                }
            }
        }
        best.map(|(_, j)| j)
    }

    /// `(new index, reference index)` pairs, in new-voxel order.
    pub fn match_indices(&self, new: &[VoxelStats]) -> Vec<(usize, usize)> {
        new.iter()
            .enumerate()
            .filter_map(|(i, v)| self.match_voxel(v).map(|j| (i, j)))
            .collect()
    }

    pub fn correspond(&self, new: &[VoxelStats]) -> Result<Vec<Correspondence>> {
        if new.is_empty() {
            return Err(Error::NoUsableVoxels);
        }
        let out: Vec<Correspondence> = self
            .match_indices(new)
            .into_iter()
            .map(|(i, j)| Correspondence {
                reference: self.voxels[j],
                new: new[i],
                prune: self.prunes[j],
            })
            .collect();
        if out.is_empty() {
            return Err(Error::NoCorrespondences);
        }
        Ok(out)
    }
}

pub fn correspond(
    reference: &[VoxelStats],
    new: &[VoxelStats],
    cfg: &GridConfig,
) -> Result<Vec<Correspondence>> {
    ReferenceGrid::from_voxels(reference.to_vec(), cfg)?.correspond(new)
}
