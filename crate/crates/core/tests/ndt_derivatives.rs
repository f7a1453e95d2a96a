mod common;

use common::pair;
use icet_core::*;
use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rel_close(a: f64, b: f64, scale: f64) -> bool {
    (a - b).abs() <= 1e-5 * scale.max(1.0)
}

#[test]
fn gradient_and_hessian_match_central_differences() {
    let p = pair(EnvironmentKind::TIntersection, 2.0, 0);
    let cfg = NdtConfig { correspondence: CorrespondenceMode::CoLocated, ..NdtConfig::default() };
    let grid = NdtGrid::build(&p.reference, &cfg).unwrap();
    let pts = p.new.points();
    let h = 1e-6;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut checked = 0;
    let mut tries = 0;
    while checked < 100 {
        tries += 1;
        assert!(tries < 1000, "too many states near cell boundaries");
        let x = StateVector::new(
            rng.random_range(2.0..8.0),
            rng.random_range(7.0..13.0),
            rng.random_range(0.08..0.12),
        );
        let (_, g, hess) = grid.score_derivatives(&x, pts);
        let mut fd_g = Vector3::zeros();
        let mut fd_h = Matrix3::zeros();
        let mut smooth = true;
        for k in 0..3 {
            let mut d = Vector3::zeros();
            d[k] = h;
            let (xp, xm) = (x.plus(&d), x.plus(&(-d)));
            // A point switching voxel inside the stencil makes the score kink.
            let members = |s: &StateVector| {
                let (sn, cs) = s.theta.sin_cos();
                pts.iter()
                    .map(|q| {
                        let t = Point2::new(cs * q.x - sn * q.y - s.x, sn * q.x + cs * q.y - s.y);
                        grid.voxel_for(&t).map(|v| v.stats.index)
                    })
                    .collect::<Vec<_>>()
            };
            if members(&xp) != members(&xm) {
                smooth = false;
                break;
            }
            fd_g[k] = (grid.score(&xp, pts) - grid.score(&xm, pts)) / (2.0 * h);
            let (_, gp, _) = grid.score_derivatives(&xp, pts);
            let (_, gm, _) = grid.score_derivatives(&xm, pts);
            fd_h.set_column(k, &((gp - gm) / (2.0 * h)));
        }
        if !smooth {
            continue;
        }
        for k in 0..3 {
            assert!(rel_close(g[k], fd_g[k], g.amax()), "grad {k}: {g} vs {fd_g}");
            for l in 0..3 {
                assert!(rel_close(hess[(k, l)], fd_h[(k, l)], hess.amax()), "hess: {hess} vs {fd_h}");
            }
        }
        checked += 1;
    }
}

#[test]
fn accepted_steps_never_lower_the_score() {
    let p = pair(EnvironmentKind::TIntersection, 2.0, 1);
    let cfg = NdtConfig::default();
    let grid = NdtGrid::build(&p.reference, &cfg).unwrap();
    let start = ndt_score(&StateVector::zero(), &p.new, &grid);
    let mut last = start;
    for iters in 1..=8 {
        let c = NdtConfig { max_iterations: iters, ..cfg };
        let sol = ndt_match(&p.reference, &p.new, &c, &StateVector::zero()).unwrap();
        assert!(sol.score >= last, "{} < {last}", sol.score);
        assert_eq!(sol.score, ndt_score(&sol.estimate, &p.new, &grid));
        last = sol.score;
    }
    assert!(last > start);
}
