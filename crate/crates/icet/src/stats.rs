//! Error statistics, covariance consistency and a two-sample rank test.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::bench::TrialRecord;
use crate::error::{Error, Result};

/// Sample mean and `n - 1` standard deviation of one axis. `None` entries
/// mean the axis was not estimated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisStats {
    pub mean: Option<f64>,
    pub std: Option<f64>,
}

impl AxisStats {
    pub const NOT_AVAILABLE: AxisStats = AxisStats { mean: None, std: None };
}

/// Mean and standard deviation of a sample. The deviation needs two values.
pub fn sample_stats(values: &[f64]) -> Result<AxisStats> {
    if values.is_empty() {
        return Err(Error::NoRecords);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = (values.len() >= 2)
        .then(|| (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt());
    Ok(AxisStats { mean: Some(mean), std })
}

/// Per-axis error statistics over successful records. An axis that every
/// record reports as excluded is not available.
pub fn error_statistics(records: &[TrialRecord]) -> Result<[AxisStats; 3]> {
    let ok: Vec<&TrialRecord> = records.iter().filter(|r| r.succeeded()).collect();
    if ok.is_empty() {
        return Err(Error::NoRecords);
    }
    let mut out = [AxisStats::NOT_AVAILABLE; 3];
    for (k, slot) in out.iter_mut().enumerate() {
        if ok.iter().all(|r| r.excluded(k)) {
            continue;
        }
        let values: Vec<f64> = ok
            .iter()
            .filter(|r| !r.excluded(k))
            .filter_map(|r| r.error(k))
            .collect();
        *slot = sample_stats(&values)?;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Consistency {
    /// Mean normalised estimation error squared, each trial measured in its
    /// own preserved subspace.
    pub nees_mean: Option<f64>,
    /// Mean number of degrees of freedom behind the NEES values.
    pub nees_dof_mean: Option<f64>,
    /// Actual error std over mean predicted std, per axis.
    pub ratios: [Option<f64>; 3],
    pub predicted_std: [Option<f64>; 3],
}

/// Compares actual errors with predicted covariances. Records without a
/// prediction are ignored.
pub fn consistency_check(records: &[TrialRecord]) -> Consistency {
    let ok: Vec<&TrialRecord> = records
        .iter()
        .filter(|r| r.succeeded() && r.nees.is_some())
        .collect();
    let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
    let nees: Vec<f64> = ok.iter().filter_map(|r| r.nees).collect();
    let dof: Vec<f64> = ok.iter().filter_map(|r| r.nees_dof.map(|d| d as f64)).collect();
    let mut ratios = [None; 3];
    let mut predicted_std = [None; 3];
    for k in 0..3 {
        let preds: Vec<f64> = ok.iter().filter_map(|r| r.predicted_std(k)).collect();
        let errs: Vec<f64> = ok
            .iter()
            .filter(|r| r.predicted_std(k).is_some())
            .filter_map(|r| r.error(k))
            .collect();
        let p = mean(&preds);
        predicted_std[k] = p;
        let actual = sample_stats(&errs).ok().and_then(|s| s.std);
        ratios[k] = match (actual, p) {
            (Some(a), Some(p)) if p > 0.0 => Some(a / p),
            _ => None,
        };
    }
    Consistency {
        nees_mean: mean(&nees),
        nees_dof_mean: mean(&dof),
        ratios,
        predicted_std,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankTest {
    pub u: f64,
    pub z: f64,
    /// Two-sided, normal approximation with tie correction.
    pub p_value: f64,
}

/// Mann-Whitney U test of two independent samples.
pub fn mann_whitney(a: &[f64], b: &[f64]) -> Result<RankTest> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::NoRecords);
    }
    let (n1, n2) = (a.len() as f64, b.len() as f64);
    let mut all: Vec<(f64, bool)> = a.iter().map(|&v| (v, true)).chain(b.iter().map(|&v| (v, false))).collect();
    all.sort_by(|x, y| x.0.total_cmp(&y.0));
    let n = all.len();
    let mut rank_sum_a = 0.0;
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && all[j + 1].0 == all[i].0 {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        rank_sum_a += all[i..=j].iter().filter(|e| e.1).count() as f64 * rank;
        i = j + 1;
    }
    let u = rank_sum_a - n1 * (n1 + 1.0) / 2.0;
    let nt = n1 + n2;
    let var = n1 * n2 / 12.0 * ((nt + 1.0) - tie_term / (nt * (nt - 1.0)));
    let z = if var > 0.0 { (u - n1 * n2 / 2.0) / var.sqrt() } else { 0.0 };
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let p_value = (2.0 * (1.0 - std_normal.cdf(z.abs()))).min(1.0);
    Ok(RankTest { u, z, p_value })
}
