//! Points, the rigid-transform state and scan containers.

use alloc::vec::Vec;
use core::f64::consts::{PI, TAU};

use nalgebra::{Matrix3, Vector2, Vector3};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn to_vector(self) -> Vector2<f64> {
        Vector2::new(self.x, self.y)
    }

    pub fn from_vector(v: &Vector2<f64>) -> Self {
        Self::new(v.x, v.y)
    }

    pub fn distance(&self, other: &Point2) -> f64 {
        libm::hypot(self.x - other.x, self.y - other.y)
    }
}

/// Wraps an angle into `(-pi, pi]`. Angles already in range are returned untouched.
pub fn normalize_angle(angle: f64) -> f64 {
    if angle > -PI && angle <= PI {
        return angle;
    }
    angle - TAU * libm::ceil((angle - PI) / TAU)
}

/// Planar rigid transform `(x, y, theta)`.
///
/// It maps a point `p` of the new scan into the reference frame as
/// `q = R(theta) p - [x, y]`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StateVector {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl StateVector {
    /// Builds a state with `theta` wrapped into `(-pi, pi]`.
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self {
            x,
            y,
            theta: normalize_angle(theta),
        }
    }

    pub const fn zero() -> Self {
        Self {
            x: 0.0,
            y: 0.0,
            theta: 0.0,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.theta.is_finite()
    }

    pub fn to_vector(self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.theta)
    }

    pub fn from_vector(v: &Vector3<f64>) -> Self {
        Self::new(v.x, v.y, v.z)
    }

    /// The transform that undoes `self`: `theta -> -theta`, `t -> -R(-theta) t`.
    pub fn inverse(&self) -> Self {
        let (s, c) = libm::sincos(-self.theta);
        let tx = c * self.x - s * self.y;
        let ty = s * self.x + c * self.y;
        Self::new(-tx, -ty, -self.theta)
    }

    /// Adds a correction and re-wraps the angle.
    pub fn plus(&self, delta: &Vector3<f64>) -> Self {
        Self::new(self.x + delta.x, self.y + delta.y, self.theta + delta.z)
    }

    /// Component-wise difference with the angle wrapped, as a vector.
    pub fn error_from(&self, truth: &StateVector) -> Vector3<f64> {
        Vector3::new(
            self.x - truth.x,
            self.y - truth.y,
            normalize_angle(self.theta - truth.theta),
        )
    }
}

/// `q = R(theta) p - [x, y]`.
pub fn apply_transform(p: Point2, s: &StateVector) -> Point2 {
    let (sin, cos) = libm::sincos(s.theta);
    Point2::new(cos * p.x - sin * p.y - s.x, sin * p.x + cos * p.y - s.y)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum FrameTag {
    Reference,
    New,
    Transformed,
}

impl FrameTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            FrameTag::Reference => "reference",
            FrameTag::New => "new",
            FrameTag::Transformed => "transformed",
        }
    }
}

impl core::str::FromStr for FrameTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reference" => Ok(FrameTag::Reference),
            "new" => Ok(FrameTag::New),
            "transformed" => Ok(FrameTag::Transformed),
            _ => Err(Error::InvalidConfig("unknown frame tag")),
        }
    }
}

/// An ordered, immutable set of scan points.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct Scan {
    points: Vec<Point2>,
    frame_tag: FrameTag,
}

impl Scan {
    /// Rejects non-finite coordinates. An empty scan is representable but every
    /// matching operation refuses it.
    pub fn new(points: Vec<Point2>, frame_tag: FrameTag) -> Result<Self> {
        if points.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self { points, frame_tag })
    }

    pub fn points(&self) -> &[Point2] {
        &self.points
    }

    pub fn frame_tag(&self) -> FrameTag {
        self.frame_tag
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn with_tag(mut self, frame_tag: FrameTag) -> Self {
        self.frame_tag = frame_tag;
        self
    }
}

/// Applies `s` to every point. Order and count are preserved.
pub fn transform_scan(scan: &Scan, s: &StateVector) -> Result<Scan> {
    if scan.is_empty() {
        return Err(Error::EmptyScan);
    }
    let (sin, cos) = libm::sincos(s.theta);
    let points = scan
        .points
        .iter()
        .map(|p| Point2::new(cos * p.x - sin * p.y - s.x, sin * p.x + cos * p.y - s.y))
        .collect();
    Ok(Scan {
        points,
        frame_tag: FrameTag::Transformed,
    })
}

/// Covariance restricted to the well-conditioned subspace of the solution.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ReducedCovariance {
    /// Orthonormal columns spanning the preserved state directions.
    pub basis: Vec<Vector3<f64>>,
    /// Covariance of the solution coordinates along `basis` (row-major, n x n).
    pub cov: Vec<Vec<f64>>,
}

impl ReducedCovariance {
    pub fn dim(&self) -> usize {
        self.basis.len()
    }
}

/// Predicted covariance of a matching solution.
///
/// On the subspace path `matrix` is the rank-deficient lift `V_P cov V_P^T` and
/// `reduced` carries the subspace form.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StateCovariance {
    pub matrix: Matrix3<f64>,
    pub reduced: Option<ReducedCovariance>,
}

impl StateCovariance {
    pub fn full(matrix: Matrix3<f64>) -> Self {
        Self {
            matrix,
            reduced: None,
        }
    }

    pub fn from_subspace(basis: Vec<Vector3<f64>>, variances: &[f64]) -> Self {
        let mut matrix = Matrix3::zeros();
        for (v, var) in basis.iter().zip(variances) {
            matrix += v * v.transpose() * *var;
        }
        let n = variances.len();
        let cov = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| if i == j { variances[i] } else { 0.0 })
                    .collect()
            })
            .collect();
        Self {
            matrix,
            reduced: Some(ReducedCovariance { basis, cov }),
        }
    }

    /// Per-axis standard deviations from the diagonal.
    pub fn std_devs(&self) -> [f64; 3] {
        [
            libm::sqrt(self.matrix[(0, 0)].max(0.0)),
            libm::sqrt(self.matrix[(1, 1)].max(0.0)),
            libm::sqrt(self.matrix[(2, 2)].max(0.0)),
        ]
    }
}
