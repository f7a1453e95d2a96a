//! Monte-Carlo comparison of ICET and NDT on simulated scan pairs.

use std::io::{Read, Write};

use icet_core::{
    build_environment, generate_trial_pair, icet_match, ndt_match, CorridorParams, Environment,
    EnvironmentKind, GridConfig, IcetConfig, IcetSolution, NdtConfig, ScanSpec, StateVector,
    TrialSpec,
};
use log::warn;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dump::Algorithm;
use crate::error::{Error, Result};
use crate::stats::{consistency_check, error_statistics, AxisStats, Consistency};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlgoSelection {
    Icet,
    Ndt,
    #[default]
    Both,
}

impl AlgoSelection {
    pub fn runs_icet(self) -> bool {
        self != AlgoSelection::Ndt
    }

    pub fn runs_ndt(self) -> bool {
        self != AlgoSelection::Icet
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub environment: EnvironmentKind,
    /// Corridor dimensions. Defaults depend on the environment kind.
    pub corridor: Option<CorridorParams>,
    /// Required when `environment` is `custom`.
    pub custom_environment: Option<Environment>,
    pub trials: usize,
    pub true_transform: StateVector,
    /// Noise and beam settings. The seed field is replaced per trial.
    pub scan: ScanSpec,
    pub grid: GridConfig,
    pub icet: IcetConfig,
    /// Defaults to the grid's voxel width, point threshold and matching rule.
    pub ndt: Option<NdtConfig>,
    pub base_seed: u64,
    pub algorithms: AlgoSelection,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            environment: EnvironmentKind::TIntersection,
            corridor: None,
            custom_environment: None,
            trials: 1000,
            true_transform: StateVector::new(5.0, 10.0, 0.1),
            scan: ScanSpec::default(),
            grid: GridConfig::default(),
            icet: IcetConfig::default(),
            ndt: None,
            base_seed: 0,
            algorithms: AlgoSelection::Both,
        }
    }
}

impl ScenarioConfig {
    pub fn build_environment(&self) -> Result<Environment> {
        match self.environment {
            EnvironmentKind::Custom => {
                let env = self
                    .custom_environment
                    .clone()
                    .ok_or_else(|| Error::Scenario("custom environment without segments".into()))?;
                env.validate()?;
                Ok(env)
            }
            kind => {
                let params = self.corridor.unwrap_or_else(|| CorridorParams::for_kind(kind));
                Ok(build_environment(kind, &params)?)
            }
        }
    }

    pub fn ndt_config(&self) -> NdtConfig {
        self.ndt.unwrap_or_else(|| NdtConfig::matching(&self.grid))
    }

    /// Reference and new-scan seeds of a trial.
    pub fn trial_seeds(&self, trial: usize) -> (u64, u64) {
        let s = self.base_seed.wrapping_add(trial as u64).wrapping_mul(2);
        (s, s.wrapping_add(1))
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Scenario("at least one trial is required".into()));
        }
        if !self.true_transform.is_finite() {
            return Err(Error::Scenario("true transform must be finite".into()));
        }
        self.scan.validate()?;
        self.grid.validate()?;
        self.icet.validate()?;
        self.ndt_config().validate()?;
        self.build_environment()?;
        Ok(())
    }
}

/// One algorithm's outcome on one trial. Flat so it maps to a CSV row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub seed: u64,
    pub algorithm: Algorithm,
    /// Set when the trial produced no estimate.
    pub failure: Option<String>,
    pub err_x: Option<f64>,
    pub err_y: Option<f64>,
    pub err_theta: Option<f64>,
    /// Predicted standard deviations. Absent for NDT and for excluded axes.
    pub pred_x: Option<f64>,
    pub pred_y: Option<f64>,
    pub pred_theta: Option<f64>,
    /// An axis lying mostly in the suppressed subspace.
    pub excluded_x: bool,
    pub excluded_y: bool,
    pub excluded_theta: bool,
    pub used_subspace: Option<bool>,
    pub excluded_dims: usize,
    /// Translation heading of the weakest excluded direction, degrees in `[0, 180)`.
    pub excluded_heading_deg: Option<f64>,
    pub nees: Option<f64>,
    pub nees_dof: Option<usize>,
    pub iterations: Option<usize>,
    pub converged: Option<bool>,
}

impl TrialRecord {
    pub fn empty(trial: usize, seed: u64, algorithm: Algorithm) -> Self {
        Self {
            trial,
            seed,
            algorithm,
            failure: None,
            err_x: None,
            err_y: None,
            err_theta: None,
            pred_x: None,
            pred_y: None,
            pred_theta: None,
            excluded_x: false,
            excluded_y: false,
            excluded_theta: false,
            used_subspace: None,
            excluded_dims: 0,
            excluded_heading_deg: None,
            nees: None,
            nees_dof: None,
            iterations: None,
            converged: None,
        }
    }

    fn failed(trial: usize, seed: u64, algorithm: Algorithm, reason: String) -> Self {
        Self { failure: Some(reason), ..Self::empty(trial, seed, algorithm) }
    }

    pub fn succeeded(&self) -> bool {
        self.failure.is_none()
    }

    pub fn error(&self, axis: usize) -> Option<f64> {
        [self.err_x, self.err_y, self.err_theta][axis]
    }

    pub fn predicted_std(&self, axis: usize) -> Option<f64> {
        [self.pred_x, self.pred_y, self.pred_theta][axis]
    }

    pub fn excluded(&self, axis: usize) -> bool {
        [self.excluded_x, self.excluded_y, self.excluded_theta][axis]
    }

    fn set_error(&mut self, e: &nalgebra::Vector3<f64>) {
        [self.err_x, self.err_y, self.err_theta] = [Some(e.x), Some(e.y), Some(e.z)];
    }

    fn from_icet(trial: usize, seed: u64, sol: &IcetSolution, truth: &StateVector) -> Self {
        let mut r = Self::empty(trial, seed, Algorithm::Icet);
        let e = sol.estimate.error_from(truth);
        r.set_error(&e);
        r.used_subspace = Some(sol.used_subspace);
        r.iterations = Some(sol.iterations);
        r.converged = Some(sol.converged);
        r.excluded_dims = sol.excluded_directions.len();
        r.excluded_heading_deg = sol.excluded_directions.first().map(|d| d.heading_deg);
        let sd = sol.covariance.std_devs();
        let mut excluded = [false; 3];
        let mut pred = [None; 3];
        for k in 0..3 {
            excluded[k] = match &sol.preserved_basis {
                Some(basis) => basis.iter().map(|v| v[k] * v[k]).sum::<f64>() < 0.5,
                None => false,
            };
            pred[k] = (!excluded[k]).then_some(sd[k]);
        }
        [r.excluded_x, r.excluded_y, r.excluded_theta] = excluded;
        [r.pred_x, r.pred_y, r.pred_theta] = pred;
        (r.nees, r.nees_dof) = nees(sol, &e);
        r
    }
}

/// NEES of an error in the solution's preserved subspace.
fn nees(sol: &IcetSolution, e: &nalgebra::Vector3<f64>) -> (Option<f64>, Option<usize>) {
    match &sol.covariance.reduced {
        None => match sol.covariance.matrix.try_inverse() {
            Some(info) => (Some((e.transpose() * info * e)[(0, 0)]), Some(3)),
            None => (None, None),
        },
        Some(red) => {
            let d = red.dim();
            let cov = DMatrix::from_fn(d, d, |i, j| red.cov[i][j]);
            let ep = DVector::from_fn(d, |i, _| red.basis[i].dot(e));
            match cov.try_inverse() {
                Some(info) => (Some((ep.transpose() * info * ep)[(0, 0)]), Some(d)),
                None => (None, None),
            }
        }
    }
}

fn run_trial(cfg: &ScenarioConfig, env: &Environment, trial: usize) -> Vec<TrialRecord> {
    let (ref_seed, new_seed) = cfg.trial_seeds(trial);
    let seed = cfg.base_seed.wrapping_add(trial as u64);
    let spec = TrialSpec { true_transform: cfg.true_transform, ref_seed, new_seed };
    let algos: Vec<Algorithm> = [
        cfg.algorithms.runs_icet().then_some(Algorithm::Icet),
        cfg.algorithms.runs_ndt().then_some(Algorithm::Ndt),
    ]
    .into_iter()
    .flatten()
    .collect();
    let pair = match generate_trial_pair(env, &spec, &cfg.scan) {
        Ok(p) => p,
        Err(e) => {
            return algos
                .into_iter()
                .map(|a| TrialRecord::failed(trial, seed, a, format!("simulation: {e}")))
                .collect()
        }
    };
    let x0 = StateVector::zero();
    algos
        .into_iter()
        .map(|a| match a {
            Algorithm::Icet => match icet_match(&pair.reference, &pair.new, &cfg.grid, &cfg.icet, &x0) {
                Ok(sol) => TrialRecord::from_icet(trial, seed, &sol, &pair.truth),
                Err(e) => TrialRecord::failed(trial, seed, a, e.to_string()),
            },
            Algorithm::Ndt => match ndt_match(&pair.reference, &pair.new, &cfg.ndt_config(), &x0) {
                Ok(sol) => {
                    let mut r = TrialRecord::empty(trial, seed, Algorithm::Ndt);
                    r.set_error(&sol.estimate.error_from(&pair.truth));
                    r.iterations = Some(sol.iterations);
                    r.converged = Some(sol.converged);
                    r
                }
                Err(e) => TrialRecord::failed(trial, seed, a, e.to_string()),
            },
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeadingBin {
    pub lo_deg: f64,
    pub hi_deg: f64,
    pub count: usize,
}

pub const HEADING_BIN_DEG: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmSummary {
    pub algorithm: Algorithm,
    pub trials: usize,
    pub failures: usize,
    pub converged: usize,
    pub errors: [AxisStats; 3],
    /// ICET only.
    pub consistency: Option<Consistency>,
    /// Fraction of successful trials that took the subspace path. ICET only.
    pub ambiguity_rate: Option<f64>,
    pub excluded_heading_histogram: Option<Vec<HeadingBin>>,
}

impl AlgorithmSummary {
    pub fn from_records(algorithm: Algorithm, records: &[&TrialRecord]) -> Result<Self> {
        let owned: Vec<TrialRecord> = records.iter().map(|r| (*r).clone()).collect();
        let ok: Vec<&TrialRecord> = records.iter().copied().filter(|r| r.succeeded()).collect();
        let is_icet = algorithm == Algorithm::Icet;
        let histogram = is_icet.then(|| {
            let bins = (180.0 / HEADING_BIN_DEG) as usize;
            let mut counts = vec![0usize; bins];
            for h in ok.iter().filter_map(|r| r.excluded_heading_deg) {
                counts[((h / HEADING_BIN_DEG) as usize).min(bins - 1)] += 1;
            }
            counts
                .into_iter()
                .enumerate()
                .map(|(i, count)| HeadingBin {
                    lo_deg: i as f64 * HEADING_BIN_DEG,
                    hi_deg: (i + 1) as f64 * HEADING_BIN_DEG,
                    count,
                })
                .collect()
        });
        Ok(Self {
            algorithm,
            trials: records.len(),
            failures: records.len() - ok.len(),
            converged: ok.iter().filter(|r| r.converged == Some(true)).count(),
            errors: error_statistics(&owned)?,
            consistency: is_icet.then(|| consistency_check(&owned)),
            ambiguity_rate: is_icet.then(|| {
                ok.iter().filter(|r| r.used_subspace == Some(true)).count() as f64 / ok.len() as f64
            }),
            excluded_heading_histogram: histogram,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub scenario: ScenarioConfig,
    pub icet: Option<AlgorithmSummary>,
    pub ndt: Option<AlgorithmSummary>,
    /// In trial order, ICET before NDT within a trial.
    pub records: Vec<TrialRecord>,
}

impl McReport {
    /// Aggregates raw records. Fails when more than a tenth of either
    /// algorithm's trials produced no estimate.
    pub fn from_records(scenario: ScenarioConfig, records: Vec<TrialRecord>) -> Result<Self> {
        let summarize = |algorithm: Algorithm, name: &'static str| -> Result<Option<AlgorithmSummary>> {
            let rs: Vec<&TrialRecord> = records.iter().filter(|r| r.algorithm == algorithm).collect();
            if rs.is_empty() {
                return Ok(None);
            }
            let failed = rs.iter().filter(|r| !r.succeeded()).count();
            if failed * 10 > rs.len() {
                return Err(Error::TooManyFailures { algorithm: name, failed, total: rs.len() });
            }
            AlgorithmSummary::from_records(algorithm, &rs).map(Some)
        };
        Ok(Self {
            icet: summarize(Algorithm::Icet, "icet")?,
            ndt: summarize(Algorithm::Ndt, "ndt")?,
            scenario,
            records,
        })
    }
}

/// Runs every trial of the scenario, in parallel, from a zero initial guess.
pub fn run_monte_carlo(cfg: &ScenarioConfig) -> Result<McReport> {
    cfg.validate()?;
    let env = cfg.build_environment()?;
    if !cfg.grid.resolves_noise(cfg.scan.noise_sigma) {
        warn!(
            "voxel width {} is under ten noise standard deviations ({}); voxel statistics will be noise dominated",
            cfg.grid.voxel_width, cfg.scan.noise_sigma
        );
    }
    let records: Vec<TrialRecord> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| run_trial(cfg, &env, t))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect();
    for r in records.iter().filter(|r| !r.succeeded()) {
        warn!("trial {} ({:?}) failed: {}", r.trial, r.algorithm, r.failure.as_deref().unwrap_or(""));
    }
    McReport::from_records(cfg.clone(), records)
}

pub fn write_records<W: Write>(out: W, records: &[TrialRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records<R: Read>(input: R) -> Result<Vec<TrialRecord>> {
    let mut r = csv::Reader::from_reader(input);
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

/// Histogram of one axis's errors over successful, non-excluded records.
pub fn write_error_histogram<W: Write>(out: W, records: &[TrialRecord], axis: usize, bins: usize) -> Result<()> {
    let values: Vec<f64> = records
        .iter()
        .filter(|r| r.succeeded() && !r.excluded(axis))
        .filter_map(|r| r.error(axis))
        .collect();
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["lo", "hi", "count"])?;
    if let (Some(lo), Some(hi)) = (
        values.iter().copied().reduce(f64::min),
        values.iter().copied().reduce(f64::max),
    ) {
        let bins = bins.max(1);
        let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
        let mut counts = vec![0usize; bins];
        for v in &values {
            counts[(((v - lo) / width) as usize).min(bins - 1)] += 1;
        }
        for (i, c) in counts.iter().enumerate() {
            let a = lo + i as f64 * width;
            w.serialize((a, a + width, c))?;
        }
    }
    w.flush()?;
    Ok(())
}

fn cell(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "N/A".to_string(), |v| format!("{v:.digits$}"))
}

/// Text table of error standard deviations in the style of a results table.
pub fn render_table(report: &McReport) -> String {
    let mut out = format!(
        "{:?}, {} trials, truth ({}, {}, {})\n",
        report.scenario.environment,
        report.scenario.trials,
        report.scenario.true_transform.x,
        report.scenario.true_transform.y,
        report.scenario.true_transform.theta
    );
    out += &format!("{:<16}{:>12}{:>12}{:>12}\n", "", "x", "y", "theta");
    let mut row = |label: &str, vals: [Option<f64>; 3]| {
        out += &format!(
            "{label:<16}{:>12}{:>12}{:>12}\n",
            cell(vals[0], 4),
            cell(vals[1], 4),
            cell(vals[2], 5)
        );
    };
    if let Some(ndt) = &report.ndt {
        row("NDT Actual", ndt.errors.map(|a| a.std));
    }
    if let Some(icet) = &report.icet {
        row("ICET Actual", icet.errors.map(|a| a.std));
        if let Some(c) = &icet.consistency {
            let excluded: Vec<bool> = (0..3).map(|k| icet.errors[k].std.is_none()).collect();
            let pred = [0, 1, 2].map(|k| if excluded[k] { None } else { c.predicted_std[k] });
            row("ICET Predicted", pred);
        }
    }
    if let Some(icet) = &report.icet {
        if let Some(c) = &icet.consistency {
            out += &format!("ICET NEES mean  {}\n", cell(c.nees_mean, 3));
        }
        out += &format!("ICET subspace   {}\n", cell(icet.ambiguity_rate, 3));
    }
    out
}
