//! Raycasting 2D lidar simulator for corridor scenes.

use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::geometry::{FrameTag, Point2, Scan, StateVector};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Segment {
    pub a: Point2,
    pub b: Point2,
}

impl Segment {
    pub const fn new(a: Point2, b: Point2) -> Self {
        Self { a, b }
    }

    pub fn length(&self) -> f64 {
        self.a.distance(&self.b)
    }

    pub fn distance_to(&self, p: &Point2) -> f64 {
        let (dx, dy) = (self.b.x - self.a.x, self.b.y - self.a.y);
        let len2 = dx * dx + dy * dy;
        let s = (((p.x - self.a.x) * dx + (p.y - self.a.y) * dy) / len2).clamp(0.0, 1.0);
        p.distance(&Point2::new(self.a.x + s * dx, self.a.y + s * dy))
    }

    /// Ray parameter and hit point of the ray `origin + t * dir`, `t > 0`.
    fn intersect(&self, origin: &Point2, dir: (f64, f64)) -> Option<(f64, Point2)> {
        let (ex, ey) = (self.b.x - self.a.x, self.b.y - self.a.y);
        let denom = dir.0 * ey - dir.1 * ex;
        if denom == 0.0 {
            return None;
        }
        let (wx, wy) = (self.a.x - origin.x, self.a.y - origin.y);
        let t = (wx * ey - wy * ex) / denom;
        let s = (wx * dir.1 - wy * dir.0) / denom;
        if t <= 0.0 || !(0.0..=1.0).contains(&s) {
            return None;
        }
        // Interpolating along the segment keeps hits exactly on axis-aligned walls.
        Some((t, Point2::new(self.a.x + s * ex, self.a.y + s * ey)))
    }
}

/// Axis-aligned box of open space used to check sensor placement.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Rect {
    pub min: Point2,
    pub max: Point2,
}

impl Rect {
    pub fn contains(&self, p: &Point2) -> bool {
        p.x > self.min.x && p.x < self.max.x && p.y > self.min.y && p.y < self.max.y
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum EnvironmentKind {
    TIntersection,
    Tunnel,
    Custom,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Environment {
    pub kind: EnvironmentKind,
    pub segments: Vec<Segment>,
    /// Open space. Empty means sensor placement is not checked.
    #[cfg_attr(feature = "serde", serde(default))]
    pub free_space: Vec<Rect>,
}

impl Environment {
    pub fn new(kind: EnvironmentKind, segments: Vec<Segment>, free_space: Vec<Rect>) -> Result<Self> {
        let env = Self {
            kind,
            segments,
            free_space,
        };
        env.validate()?;
        Ok(env)
    }

    pub fn validate(&self) -> Result<()> {
        if self.segments.is_empty() {
            return Err(Error::InvalidEnvironment("no wall segments"));
        }
        for s in &self.segments {
            if !(s.a.is_finite() && s.b.is_finite()) {
                return Err(Error::NonFinite);
            }
            if !(s.length() > 0.0) {
                return Err(Error::InvalidEnvironment("degenerate segment"));
            }
        }
        Ok(())
    }

    pub fn contains(&self, p: &Point2) -> bool {
        self.free_space.is_empty() || self.free_space.iter().any(|r| r.contains(p))
    }
}

/// Dimensions of the built-in corridor scenes.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CorridorParams {
    pub width: f64,
    pub length: f64,
    /// T-intersection only: distance from the sensor up to the near wall of
    /// the cross corridor.
    #[cfg_attr(feature = "serde", serde(default = "default_junction_offset"))]
    pub junction_offset: f64,
}

fn default_junction_offset() -> f64 {
    25.0
}

impl CorridorParams {
    /// Default dimensions for `kind`: a 1200-long tunnel, or a T whose cross
    /// corridor spans 600 and whose stem reaches 325 below the sensor.
    pub fn for_kind(kind: EnvironmentKind) -> Self {
        match kind {
            EnvironmentKind::TIntersection => Self { length: 600.0, ..Self::default() },
            _ => Self::default(),
        }
    }
}

impl Default for CorridorParams {
    fn default() -> Self {
        Self {
            width: 150.0,
            length: 1200.0,
            junction_offset: default_junction_offset(),
        }
    }
}

/// Builds a scene around a sensor at the origin.
///
/// * Tunnel: two walls at `x = +-width/2` spanning `y` in `+-length/2`, open ends.
/// * T-intersection: the sensor sits in a stem corridor (`|x| < width/2`) just
///   below a cross corridor running along `x` (`junction_offset < y <
///   junction_offset + width`, `|x| < length/2`, open ends). The stem is capped
///   at `y = -(length/2 + junction_offset)`. Six walls.
///
/// With the [`CorridorParams::for_kind`] defaults and 50-unit voxels on a
/// grid anchored at the sensor, every wall runs through the middle of its
/// cells and every open end falls on a cell boundary.
pub fn build_environment(kind: EnvironmentKind, params: &CorridorParams) -> Result<Environment> {
    let (w, l, o) = (params.width, params.length, params.junction_offset);
    if !(w > 0.0 && l > 0.0 && w.is_finite() && l.is_finite()) {
        return Err(Error::InvalidEnvironment("corridor dimensions must be positive"));
    }
    if l <= w {
        return Err(Error::InvalidEnvironment("corridor must be longer than it is wide"));
    }
    let (hw, hl) = (w / 2.0, l / 2.0);
    let p = Point2::new;
    let seg = |a: Point2, b: Point2| Segment::new(a, b);
    match kind {
        EnvironmentKind::Tunnel => Environment::new(
            kind,
            alloc::vec![
                seg(p(-hw, -hl), p(-hw, hl)),
                seg(p(hw, -hl), p(hw, hl)),
            ],
            alloc::vec![Rect { min: p(-hw, -hl), max: p(hw, hl) }],
        ),
        EnvironmentKind::TIntersection => {
            if !(o > 0.0 && o < hl) {
                return Err(Error::InvalidEnvironment("junction offset must lie in (0, length/2)"));
            }
            let (near, far, bottom) = (o, o + w, -hl - o);
            Environment::new(
                kind,
                alloc::vec![
                    seg(p(-hl, far), p(hl, far)),
                    seg(p(-hl, near), p(-hw, near)),
                    seg(p(hw, near), p(hl, near)),
                    seg(p(-hw, near), p(-hw, bottom)),
                    seg(p(hw, near), p(hw, bottom)),
                    seg(p(-hw, bottom), p(hw, bottom)),
                ],
                alloc::vec![
                    Rect { min: p(-hl, near), max: p(hl, far) },
                    Rect { min: p(-hw, bottom), max: p(hw, far) },
                ],
            )
        }
        EnvironmentKind::Custom => Err(Error::InvalidEnvironment(
            "custom environments are loaded, not built",
        )),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ScanSpec {
    pub beam_count: usize,
    /// Standard deviation of the Cartesian noise added to each axis.
    pub noise_sigma: f64,
    pub max_range: f64,
    pub rng_seed: u64,
}

impl Default for ScanSpec {
    fn default() -> Self {
        Self {
            beam_count: 4200,
            noise_sigma: 2.0,
            max_range: 5000.0,
            rng_seed: 0,
        }
    }
}

impl ScanSpec {
    pub fn validate(&self) -> Result<()> {
        if self.beam_count == 0 {
            return Err(Error::InvalidConfig("beam_count must be positive"));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::InvalidConfig("noise_sigma must be non-negative"));
        }
        if !(self.max_range > 0.0) {
            return Err(Error::InvalidConfig("max_range must be positive"));
        }
        Ok(())
    }
}

/// A noiseless beam return.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub beam: usize,
    pub world: Point2,
    pub body: Point2,
}

/// Nearest wall hit of each beam, in beam order. Beams without a hit within
/// `max_range` are dropped. `sensor_pose` is the sensor position and heading in
/// the world frame.
pub fn raycast_hits(env: &Environment, sensor_pose: &StateVector, spec: &ScanSpec) -> Result<Vec<Hit>> {
    spec.validate()?;
    env.validate()?;
    let origin = Point2::new(sensor_pose.x, sensor_pose.y);
    if !sensor_pose.is_finite() || !env.contains(&origin) {
        return Err(Error::SensorOutside);
    }
    let (hs, hc) = libm::sincos(sensor_pose.theta);
    let step = core::f64::consts::TAU / spec.beam_count as f64;
    let mut hits = Vec::with_capacity(spec.beam_count);
    for beam in 0..spec.beam_count {
        let (s, c) = libm::sincos(sensor_pose.theta + step * beam as f64);
        let nearest = env
            .segments
            .iter()
            .filter_map(|seg| seg.intersect(&origin, (c, s)))
            .min_by(|a, b| a.0.total_cmp(&b.0));
        let Some((t, world)) = nearest else { continue };
        if t > spec.max_range {
            continue;
        }
        let (dx, dy) = (world.x - origin.x, world.y - origin.y);
        let body = Point2::new(hc * dx + hs * dy, -hs * dx + hc * dy);
        hits.push(Hit { beam, world, body });
    }
    if hits.is_empty() {
        return Err(Error::SensorOutside);
    }
    Ok(hits)
}

/// Simulated scan in the sensor body frame with independent Gaussian noise on
/// each Cartesian coordinate. Deterministic for a fixed `spec.rng_seed`.
pub fn raycast_scan(env: &Environment, sensor_pose: &StateVector, spec: &ScanSpec) -> Result<Scan> {
    let hits = raycast_hits(env, sensor_pose, spec)?;
    let points = if spec.noise_sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
        let normal = Normal::new(0.0, spec.noise_sigma).map_err(|_| Error::InvalidConfig("noise_sigma"))?;
        hits.iter()
            .map(|h| {
                let nx = normal.sample(&mut rng);
                let ny = normal.sample(&mut rng);
                Point2::new(h.body.x + nx, h.body.y + ny)
            })
            .collect()
    } else {
        hits.iter().map(|h| h.body).collect()
    };
    Scan::new(points, FrameTag::New)
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrialSpec {
    pub true_transform: StateVector,
    /// Use distinct seeds so the two scans carry independent noise.
    pub ref_seed: u64,
    pub new_seed: u64,
}

impl Default for TrialSpec {
    fn default() -> Self {
        Self {
            true_transform: StateVector::new(5.0, 10.0, 0.1),
            ref_seed: 0,
            new_seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialPair {
    pub reference: Scan,
    pub new: Scan,
    pub truth: StateVector,
}

/// Sensor pose of the new scan so that matching it against the reference scan
/// recovers `truth`: position `-(x, y)`, heading `theta`.
pub fn new_sensor_pose(truth: &StateVector) -> StateVector {
    StateVector::new(-truth.x, -truth.y, truth.theta)
}

/// Reference scan from the origin and new scan from the pose displaced by the
/// true transform, each in its own body frame.
pub fn generate_trial_pair(env: &Environment, trial: &TrialSpec, spec: &ScanSpec) -> Result<TrialPair> {
    let reference = raycast_scan(
        env,
        &StateVector::zero(),
        &ScanSpec {
            rng_seed: trial.ref_seed,
            ..*spec
        },
    )?
    .with_tag(FrameTag::Reference);
    let new = raycast_scan(
        env,
        &new_sensor_pose(&trial.true_transform),
        &ScanSpec {
            rng_seed: trial.new_seed,
            ..*spec
        },
    )?;
    Ok(TrialPair {
        reference,
        new,
        truth: trial.true_transform,
    })
}
