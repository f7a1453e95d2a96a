use nalgebra::{Matrix2, Matrix3, SymmetricEigen, Vector2, Vector3};

/// Eigenpairs of a symmetric 2x2 matrix, eigenvalues ascending.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Eigen2 {
    pub values: [f64; 2],
    pub vectors: [Vector2<f64>; 2],
}

/// Eigenpairs of a symmetric 3x3 matrix, eigenvalues ascending.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Eigen3 {
    pub values: [f64; 3],
    pub vectors: [Vector3<f64>; 3],
}

/// Closed-form decomposition of a symmetric 2x2 matrix.
///
/// Eigenvectors point into the right half plane (`x > 0`, or `x == 0, y > 0`).
/// Equal eigenvalues yield the coordinate axes, `+x` first.
pub fn sym_eigen2(m: &Matrix2<f64>) -> Eigen2 {
    let a = m[(0, 0)];
    let c = m[(1, 1)];
    let b = 0.5 * (m[(0, 1)] + m[(1, 0)]);
    let mean = 0.5 * (a + c);
    let half_gap = libm::hypot(0.5 * (a - c), b);
    if half_gap == 0.0 {
        return Eigen2 {
            values: [mean, mean],
            vectors: [Vector2::x(), Vector2::y()],
        };
    }
    if b == 0.0 {
        return if a <= c {
            Eigen2 {
                values: [a, c],
                vectors: [Vector2::x(), Vector2::y()],
            }
        } else {
            Eigen2 {
                values: [c, a],
                vectors: [Vector2::y(), Vector2::x()],
            }
        };
    }
    let hi = mean + half_gap;
    let lo = mean - half_gap;
    let phi = 0.5 * libm::atan2(2.0 * b, a - c);
    let (s, co) = libm::sincos(phi);
    let major = right_half(Vector2::new(co, s));
    let minor = right_half(Vector2::new(-s, co));
    Eigen2 {
        values: [lo, hi],
        vectors: [minor, major],
    }
}

fn right_half(v: Vector2<f64>) -> Vector2<f64> {
    if v.x < 0.0 || (v.x == 0.0 && v.y < 0.0) {
        -v
    } else {
        v
    }
}

/// Symmetric 3x3 decomposition, ascending, each eigenvector signed so its
/// largest-magnitude component is positive.
pub fn sym_eigen3(m: &Matrix3<f64>) -> Eigen3 {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let pick = |k: usize| {
        let v: Vector3<f64> = eig.eigenvectors.column(order[k]).into_owned();
        let imax = v.iamax();
        if v[imax] < 0.0 {
            -v
        } else {
            v
        }
    };
    Eigen3 {
        values: [
            eig.eigenvalues[order[0]],
            eig.eigenvalues[order[1]],
            eig.eigenvalues[order[2]],
        ],
        vectors: [pick(0), pick(1), pick(2)],
    }
}
