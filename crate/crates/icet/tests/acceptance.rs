//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use icet::bench::{run_monte_carlo, AlgoSelection, McReport, ScenarioConfig, TrialRecord};
use icet::dump::{Algorithm, SolutionJson};
use icet::stats::mann_whitney;
use icet_core::solver::{accumulate_normal_equations, jacobian_block};
use icet_core::{
    apply_transform, build_environment, eigen_prune, generate_trial_pair, icet_match, ndt_match, transform_scan,
    CellIndex, CorrespondenceMode, CorridorParams, EnvironmentKind, FrameTag, GridConfig, IcetConfig,
    MeasurementBlock, NdtConfig, NdtGrid, Point2, Scan, ScanSpec, StateVector, TrialSpec, VoxelStats,
};
use nalgebra::{DMatrix, DVector, Matrix2, Matrix2x3, Matrix3, RowVector3, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

type Outcome = Result<String, String>;

const TRUTH: StateVector = StateVector { x: 5.0, y: 10.0, theta: 0.1 };
const AXES: [&str; 3] = ["x", "y", "theta"];

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn scenario(env: EnvironmentKind, trials: usize, base_seed: u64, mode: CorrespondenceMode) -> ScenarioConfig {
    let mut cfg = ScenarioConfig {
        environment: env,
        trials,
        base_seed,
        algorithms: AlgoSelection::Both,
        true_transform: TRUTH,
        ..ScenarioConfig::default()
    };
    cfg.grid = cfg.grid.with_correspondence(mode);
    cfg
}

fn monte_carlo(cfg: &ScenarioConfig) -> Result<McReport, String> {
    run_monte_carlo(cfg).map_err(|e| format!("benchmark failed: {e}"))
}

fn stds(report: &McReport, algo: Algorithm) -> Result<[Option<f64>; 3], String> {
    let summary = match algo {
        Algorithm::Icet => report.icet.as_ref(),
        Algorithm::Ndt => report.ndt.as_ref(),
    }
    .ok_or("missing summary")?;
    Ok([0, 1, 2].map(|k| summary.errors[k].std))
}

fn records(report: &McReport, algo: Algorithm) -> Vec<&TrialRecord> {
    report.records.iter().filter(|r| r.algorithm == algo).collect()
}

fn noiseless_exactness() -> Outcome {
    let spec = ScanSpec { noise_sigma: 0.0, ..ScanSpec::default() };
    let trial = TrialSpec { true_transform: TRUTH, ref_seed: 0, new_seed: 1 };
    let mut detail = Vec::new();
    for kind in [EnvironmentKind::TIntersection, EnvironmentKind::Tunnel] {
        let env = build_environment(kind, &CorridorParams::for_kind(kind)).map_err(|e| e.to_string())?;
        let pair = generate_trial_pair(&env, &trial, &spec).map_err(|e| e.to_string())?;
        let start = Instant::now();
        let sol = icet_match(&pair.reference, &pair.new, &GridConfig::new(50.0), &IcetConfig::default(), &StateVector::zero())
            .map_err(|e| format!("{kind:?}: {e}"))?;
        let elapsed = start.elapsed();
        ensure(elapsed < Duration::from_secs(5), || format!("{kind:?} took {elapsed:?}"))?;
        let e = sol.estimate.error_from(&TRUTH);
        let worst = match &sol.preserved_basis {
            Some(basis) => basis.iter().map(|v| v.dot(&e).abs()).fold(0.0, f64::max),
            None => e.amax(),
        };
        ensure(worst < 1e-3, || format!("{kind:?} error {worst:.3e} on checked axes"))?;
        detail.push(format!(
            "{kind:?} max err {worst:.1e}{} in {:.1} ms",
            if sol.used_subspace { " (preserved subspace)" } else { "" },
            elapsed.as_secs_f64() * 1e3
        ));
    }
    Ok(detail.join("; "))
}

fn predicted_vs_actual(t: &McReport) -> Outcome {
    let c = t.icet.as_ref().and_then(|s| s.consistency).ok_or("no consistency summary")?;
    let mut detail = Vec::new();
    for (k, axis) in AXES.iter().enumerate() {
        let r = c.ratios[k].ok_or_else(|| format!("no ratio for {axis}"))?;
        ensure((0.8..=1.25).contains(&r), || format!("{axis} actual/predicted {r:.3}"))?;
        detail.push(format!("{axis} ratio {r:.3}"));
    }
    let nees = c.nees_mean.ok_or("no NEES")?;
    let dof = c.nees_dof_mean.unwrap_or(f64::NAN);
    ensure((2.5..=3.5).contains(&nees), || format!("NEES mean {nees:.3}"))?;
    ensure(dof == 3.0, || format!("mean DOF {dof}"))?;
    detail.push(format!("NEES {nees:.3}"));
    Ok(detail.join(", "))
}

fn icet_beats_ndt(t: &McReport) -> Outcome {
    let icet = stds(t, Algorithm::Icet)?;
    let ndt = stds(t, Algorithm::Ndt)?;
    let mut detail = Vec::new();
    let mut failed = Vec::new();
    for (k, axis) in AXES.iter().enumerate() {
        let (i, n) = (icet[k].ok_or("missing ICET std")?, ndt[k].ok_or("missing NDT std")?);
        let s = format!("{axis} {i:.4}/{n:.4}={:.2}", i / n);
        if i > 0.5 * n {
            failed.push(s.clone());
        }
        detail.push(s);
    }
    let msg = format!("ICET/NDT std: {}", detail.join(", "));
    if failed.is_empty() {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn tunnel_ambiguity(tunnel: &McReport) -> Outcome {
    let rs = records(tunnel, Algorithm::Icet);
    ensure(rs.len() >= 100, || format!("only {} trials", rs.len()))?;
    let mut worst_angle: f64 = 0.0;
    for r in &rs {
        ensure(r.succeeded(), || format!("trial {} failed: {:?}", r.trial, r.failure))?;
        ensure(r.used_subspace == Some(true), || format!("trial {} solved in full", r.trial))?;
        let heading = r.excluded_heading_deg.ok_or_else(|| format!("trial {} has no excluded direction", r.trial))?;
        let angle = (heading - 90.0).abs();
        worst_angle = worst_angle.max(angle);
        ensure(angle <= 5.0, || format!("trial {} excluded heading {heading:.2} deg", r.trial))?;
        ensure(r.excluded_y && r.pred_y.is_none(), || format!("trial {} did not exclude y", r.trial))?;
    }
    let y_std = stds(tunnel, Algorithm::Icet)?[1];
    ensure(y_std.is_none(), || format!("summary reports a y std {y_std:?}"))?;
    Ok(format!(
        "{} trials, subspace 100%, y excluded 100% (N/A in summary), worst heading offset {worst_angle:.3} deg",
        rs.len()
    ))
}

fn ndt_tunnel_failure(tunnel: &McReport) -> Outcome {
    let ndt = stds(tunnel, Algorithm::Ndt)?;
    let (sx, sy) = (ndt[0].ok_or("no x std")?, ndt[1].ok_or("no y std")?);
    ensure(sy >= 10.0 * sx, || format!("NDT y std {sy:.4} vs x std {sx:.4}"))?;
    let rs = records(tunnel, Algorithm::Ndt);
    ensure(rs.len() >= 1000, || format!("only {} NDT trials", rs.len()))?;
    ensure(
        rs.iter().all(|r| r.pred_x.is_none() && r.pred_y.is_none() && r.pred_theta.is_none() && r.excluded_dims == 0),
        || "an NDT record carries a prediction or exclusion".into(),
    )?;
    let env = build_environment(EnvironmentKind::Tunnel, &CorridorParams::for_kind(EnvironmentKind::Tunnel))
        .map_err(|e| e.to_string())?;
    let pair = generate_trial_pair(&env, &TrialSpec { true_transform: TRUTH, ref_seed: 0, new_seed: 1 }, &ScanSpec::default())
        .map_err(|e| e.to_string())?;
    let sol = ndt_match(&pair.reference, &pair.new, &NdtConfig::default(), &StateVector::zero()).map_err(|e| e.to_string())?;
    let json = serde_json::to_value(SolutionJson::from_ndt(&sol)).map_err(|e| e.to_string())?;
    ensure(json["covariance"].is_null(), || "NDT covariance is not null".into())?;
    ensure(
        json["excluded_directions"].as_array().is_some_and(|a| a.is_empty()),
        || "NDT reported an excluded direction".into(),
    )?;
    Ok(format!("NDT y/x std {sy:.3}/{sx:.4} = {:.1}x, covariance null", sy / sx))
}

fn correspondence_equivalence(colocated: &McReport, nearest: &McReport) -> Outcome {
    let mut detail = Vec::new();
    let mut failed = false;
    for algo in [Algorithm::Icet, Algorithm::Ndt] {
        let (a, b) = (records(colocated, algo), records(nearest, algo));
        let mut ps = Vec::new();
        for (k, axis) in AXES.iter().enumerate() {
            let mags = |rs: &[&TrialRecord]| rs.iter().filter_map(|r| r.error(k)).map(f64::abs).collect::<Vec<_>>();
            let test = mann_whitney(&mags(&a), &mags(&b)).map_err(|e| e.to_string())?;
            failed |= test.p_value < 0.01;
            ps.push(format!("{axis} p={:.3}", test.p_value));
        }
        detail.push(format!("{algo:?} {}", ps.join(" ")));
    }
    let msg = format!("Mann-Whitney on |error|, {} vs {} trials: {}", records(colocated, Algorithm::Icet).len(), records(nearest, Algorithm::Icet).len(), detail.join("; "));
    if failed {
        Err(msg)
    } else {
        Ok(msg)
    }
}

fn random_spd2(rng: &mut ChaCha8Rng, scale: f64) -> Matrix2<f64> {
    let m = Matrix2::from_fn(|_, _| rng.random_range(-scale..scale));
    m * m.transpose() + Matrix2::identity() * 0.1
}

fn jacobian_oracle(rng: &mut ChaCha8Rng) -> Result<(), String> {
    let h = 1e-6;
    for _ in 0..100 {
        let pts: Vec<Point2> = (0..50)
            .map(|_| Point2::new(rng.random_range(0.0..50.0), rng.random_range(0.0..50.0)))
            .collect();
        let x = StateVector::new(rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0), 0.1);
        let mean = |s: &StateVector| {
            pts.iter()
                .map(|p| apply_transform(*p, s).to_vector())
                .sum::<Vector2<f64>>()
                / pts.len() as f64
        };
        let jac = jacobian_block(pts.iter().copied(), x.theta);
        for k in 0..3 {
            let mut d = Vector3::zeros();
            d[k] = h;
            let fd = (mean(&x.plus(&d)) - mean(&x.plus(&(-d)))) / (2.0 * h);
            let col: Vector2<f64> = jac.column(k).into();
            ensure((col - fd).amax() < 1e-6, || format!("Jacobian column {k}: {col} vs {fd}"))?;
        }
    }
    Ok(())
}

fn ndt_derivative_oracle(rng: &mut ChaCha8Rng) -> Result<(), String> {
    let kind = EnvironmentKind::TIntersection;
    let env = build_environment(kind, &CorridorParams::for_kind(kind)).map_err(|e| e.to_string())?;
    let pair = generate_trial_pair(&env, &TrialSpec { true_transform: TRUTH, ref_seed: 4, new_seed: 5 }, &ScanSpec::default())
        .map_err(|e| e.to_string())?;
    let cfg = NdtConfig { correspondence: CorrespondenceMode::CoLocated, ..NdtConfig::default() };
    let grid = NdtGrid::build(&pair.reference, &cfg).map_err(|e| e.to_string())?;
    let pts = pair.new.points();
    let rel = |a: f64, b: f64, scale: f64| (a - b).abs() <= 1e-5 * scale.max(1.0);
    let members = |s: &StateVector| {
        pts.iter()
            .map(|q| grid.voxel_for(&apply_transform(*q, s)).map(|v| v.stats.index))
            .collect::<Vec<_>>()
    };
    let h = 1e-6;
    let (mut checked, mut tries) = (0, 0);
    while checked < 100 {
        tries += 1;
        ensure(tries < 1000, || "too many states straddle cell boundaries".into())?;
        let x = StateVector::new(rng.random_range(2.0..8.0), rng.random_range(7.0..13.0), rng.random_range(0.08..0.12));
        let (_, g, hess) = grid.score_derivatives(&x, pts);
        let mut fd_g = Vector3::zeros();
        let mut fd_h = Matrix3::zeros();
        let mut smooth = true;
        for k in 0..3 {
            let mut d = Vector3::zeros();
            d[k] = h;
            let (xp, xm) = (x.plus(&d), x.plus(&(-d)));
            if members(&xp) != members(&xm) {
                smooth = false;
                break;
            }
            fd_g[k] = (grid.score(&xp, pts) - grid.score(&xm, pts)) / (2.0 * h);
            fd_h.set_column(k, &((grid.score_derivatives(&xp, pts).1 - grid.score_derivatives(&xm, pts).1) / (2.0 * h)));
        }
        if !smooth {
            continue;
        }
        for k in 0..3 {
            ensure(rel(g[k], fd_g[k], g.amax()), || format!("NDT gradient {g} vs {fd_g}"))?;
            for l in 0..3 {
                ensure(rel(hess[(k, l)], fd_h[(k, l)], hess.amax()), || format!("NDT Hessian {hess} vs {fd_h}"))?;
            }
        }
        checked += 1;
    }
    Ok(())
}

fn condensed_oracle(rng: &mut ChaCha8Rng) -> Result<(), String> {
    for _ in 0..50 {
        let count = rng.random_range(1..20);
        let blocks: Vec<MeasurementBlock> = (0..count)
            .map(|_| {
                if rng.random_bool(0.5) {
                    MeasurementBlock::Full {
                        h: Matrix2x3::from_fn(|_, _| rng.random_range(-3.0..3.0)),
                        r: random_spd2(rng, 2.0),
                        dy: Vector2::from_fn(|_, _| rng.random_range(-1.0..1.0)),
                    }
                } else {
                    MeasurementBlock::Projected {
                        h: RowVector3::from_fn(|_, _| rng.random_range(-3.0..3.0)),
                        r: rng.random_range(0.1..2.0),
                        dy: rng.random_range(-1.0..1.0),
                    }
                }
            })
            .collect();
        let rows: usize = blocks.iter().map(MeasurementBlock::dim).sum();
        let mut h = DMatrix::zeros(rows, 3);
        let mut r = DMatrix::zeros(rows, rows);
        let mut y = DVector::zeros(rows);
        let mut at = 0;
        for b in &blocks {
            match *b {
                MeasurementBlock::Full { h: hb, r: rb, dy } => {
                    h.view_mut((at, 0), (2, 3)).copy_from(&hb);
                    r.view_mut((at, at), (2, 2)).copy_from(&rb);
                    y.rows_mut(at, 2).copy_from(&dy);
                    at += 2;
                }
                MeasurementBlock::Projected { h: hb, r: rb, dy } => {
                    h.view_mut((at, 0), (1, 3)).copy_from(&hb);
                    r[(at, at)] = rb;
                    y[at] = dy;
                    at += 1;
                }
            }
        }
        let w = r.try_inverse().ok_or("singular stacked R")?;
        let dense_a = h.transpose() * &w * &h;
        let dense_b = h.transpose() * &w * &y;
        let (a, b) = accumulate_normal_equations(&blocks);
        for i in 0..3 {
            ensure((b[i] - dense_b[i]).abs() < 1e-9 * (1.0 + dense_b[i].abs()), || format!("b: {b} vs {dense_b}"))?;
            for j in 0..3 {
                ensure(
                    (a[(i, j)] - dense_a[(i, j)]).abs() < 1e-9 * (1.0 + dense_a[(i, j)].abs()),
                    || format!("A: {a} vs {dense_a}"),
                )?;
            }
        }
    }
    Ok(())
}

fn eigen_reconstruction_oracle(rng: &mut ChaCha8Rng) -> Result<(), String> {
    let threshold = GridConfig::new(50.0).eigen_threshold;
    for _ in 0..1000 {
        let q0 = random_spd2(rng, 15.0);
        let p = eigen_prune(&q0, threshold);
        let u = Matrix2::from_columns(&p.eigenvectors);
        let back = u * Matrix2::from_diagonal(&Vector2::from(p.eigenvalues)) * u.transpose();
        let err = (back - q0).norm();
        ensure(err < 1e-9, || format!("reconstruction error {err:.2e} for {q0}"))?;
        ensure(p.eigenvalues[0] <= p.eigenvalues[1], || "eigenvalues not ascending".into())?;
    }
    Ok(())
}

fn round_trip_oracle(rng: &mut ChaCha8Rng) -> Result<(), String> {
    for _ in 0..100 {
        let pts: Vec<Point2> = (0..100)
            .map(|_| Point2::new(rng.random_range(-500.0..500.0), rng.random_range(-500.0..500.0)))
            .collect();
        let scan = Scan::new(pts, FrameTag::New).map_err(|e| e.to_string())?;
        let s = StateVector::new(rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0), rng.random_range(-3.0..3.0));
        let there = transform_scan(&scan, &s).map_err(|e| e.to_string())?;
        let back = transform_scan(&there, &s.inverse()).map_err(|e| e.to_string())?;
        for (a, b) in scan.points().iter().zip(back.points()) {
            ensure((a.x - b.x).abs() < 1e-9 && (a.y - b.y).abs() < 1e-9, || format!("{a:?} came back as {b:?}"))?;
        }
    }
    Ok(())
}

fn numerical_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    jacobian_oracle(&mut rng)?;
    ndt_derivative_oracle(&mut rng)?;
    condensed_oracle(&mut rng)?;
    eigen_reconstruction_oracle(&mut rng)?;
    round_trip_oracle(&mut rng)?;
    Ok("Jacobian FD, NDT gradient/Hessian FD, condensed vs stacked, eigen reconstruction, transform round trip".into())
}

fn threshold_behaviour() -> Outcome {
    let a = 50.0;
    let cfg = GridConfig::new(a);
    let n = 500;
    let line: Vec<Point2> = (0..n).map(|i| Point2::new((i as f64 + 0.5) * a / n as f64, 25.0)).collect();
    let stats = VoxelStats::from_points(CellIndex::new(0, 0), line).map_err(|e| e.to_string())?;
    let var = stats.covariance[(0, 0)];
    let uniform = a * a / 12.0;
    ensure((var - uniform).abs() <= 0.1 * uniform, || format!("line variance {var:.2} vs {uniform:.2}"))?;
    ensure(eigen_prune(&stats.covariance, cfg.eigen_threshold).n == 1, || "full-width line was not pruned".into())?;
    let noise = Normal::new(0.0, 2.0).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for draw in 0..1000 {
        let blob: Vec<Point2> = (0..30)
            .map(|_| Point2::new(25.0 + noise.sample(&mut rng), 25.0 + noise.sample(&mut rng)))
            .collect();
        let stats = VoxelStats::from_points(CellIndex::new(0, 0), blob).map_err(|e| e.to_string())?;
        ensure(eigen_prune(&stats.covariance, cfg.eigen_threshold).n == 2, || format!("blob draw {draw} was pruned"))?;
    }
    Ok(format!("line variance {var:.2} vs a^2/12 {uniform:.2}, pruned; 1000 sigma=2 blobs kept"))
}

fn run(id: usize, name: &str, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| Err("panicked".into()));
    let secs = start.elapsed().as_secs_f64();
    match outcome {
        Ok(detail) => {
            println!("PASS {id} {name}: {detail} [{secs:.1} s]");
            true
        }
        Err(detail) => {
            println!("FAIL {id} {name}: {detail} [{secs:.1} s]");
            false
        }
    }
}

fn main() -> ExitCode {
    let nn = CorrespondenceMode::NearestNeighbor;
    let t = monte_carlo(&scenario(EnvironmentKind::TIntersection, 1000, 0, nn));
    let tunnel = monte_carlo(&scenario(EnvironmentKind::Tunnel, 1000, 0, nn));
    let colocated = monte_carlo(&scenario(EnvironmentKind::TIntersection, 500, 100_000, CorrespondenceMode::CoLocated));
    let nearest = monte_carlo(&scenario(EnvironmentKind::TIntersection, 500, 200_000, nn));

    let results = [
        run(1, "noiseless exactness", noiseless_exactness),
        run(2, "predicted vs actual covariance", || predicted_vs_actual(t.as_ref()?)),
        run(3, "ICET std at most half of NDT std", || icet_beats_ndt(t.as_ref()?)),
        run(4, "tunnel ambiguity detection", || tunnel_ambiguity(tunnel.as_ref()?)),
        run(5, "NDT tunnel failure mode", || ndt_tunnel_failure(tunnel.as_ref()?)),
        run(6, "correspondence-mode equivalence", || {
            correspondence_equivalence(colocated.as_ref()?, nearest.as_ref()?)
        }),
        run(7, "numerical oracle suite", numerical_oracles),
        run(8, "threshold behaviour", threshold_behaviour),
    ];
    let failed = results.iter().filter(|ok| !**ok).count();
    println!("{} passed, {failed} failed", results.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
