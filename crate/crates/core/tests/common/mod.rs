#![allow(dead_code)]

use icet_core::*;

pub const TRUTH: StateVector = StateVector { x: 5.0, y: 10.0, theta: 0.1 };

pub fn env(kind: EnvironmentKind) -> Environment {
    build_environment(kind, &CorridorParams::for_kind(kind)).unwrap()
}

pub fn pair(kind: EnvironmentKind, sigma: f64, trial: u64) -> TrialPair {
    let spec = ScanSpec { noise_sigma: sigma, ..ScanSpec::default() };
    let t = TrialSpec { true_transform: TRUTH, ref_seed: 2 * trial, new_seed: 2 * trial + 1 };
    generate_trial_pair(&env(kind), &t, &spec).unwrap()
}

pub fn grid() -> GridConfig {
    GridConfig::new(50.0)
}
