//! Paired t-scores and chi-square statistics over radiomics feature tables,
//! with the three-threshold significance summary.

use crate::analysis::radiomics::FeatureTable;
use crate::error::{Error, Result};

/// Critical values compared against |t| at 100 degrees of freedom for
/// significance levels 0.05, 0.01 and 0.001.
pub const T_THRESHOLDS: [f64; 3] = [1.660, 2.364, 3.390];

/// Paired t-score: `t = mean(d) / (std_sample(d) / sqrt(n))` with `d = x - y`
/// and the sample standard deviation (divisor n-1); dof is n-1. Zero variance
/// reports an infinite sentinel when the mean is nonzero, 0 otherwise.
pub fn paired_t_score(x: &[f64], y: &[f64]) -> Result<(f64, usize)> {
    if x.len() != y.len() {
        return Err(Error::Contract("paired samples must have equal length".into()));
    }
    let n = x.len();
    if n < 2 {
        return Err(Error::Argument("paired t-score needs at least 2 samples".into()));
    }
    let d: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
    let mean = d.iter().sum::<f64>() / n as f64;
    let var = d.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    let t = if var <= 0.0 {
        if mean == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        mean / (var.sqrt() / (n as f64).sqrt())
    };
    Ok((t, n - 1))
}

/// Two-sample chi-square over a shared equal-width binning of the pooled
/// range: `sum (Ox - Oy)^2 / (Ox + Oy)` over occupied bins; dof is the
/// occupied bin count minus one.
pub fn chi_square_stat(x: &[f64], y: &[f64], bins: usize) -> Result<(f64, usize)> {
    if bins == 0 {
        return Err(Error::Argument("chi-square needs at least one bin".into()));
    }
    if x.is_empty() || y.is_empty() {
        return Err(Error::Argument("chi-square needs nonempty samples".into()));
    }
    if x.len() < bins {
        return Err(Error::Argument(format!(
            "chi-square needs at least as many samples ({}) as bins ({bins})",
            x.len()
        )));
    }
    let lo = x.iter().chain(y).cloned().fold(f64::INFINITY, f64::min);
    let hi = x.iter().chain(y).cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    let bin_of = |v: f64| -> usize {
        if span <= 0.0 {
            0
        } else {
            ((((v - lo) / span) * bins as f64) as usize).min(bins - 1)
        }
    };
    let mut ox = vec![0.0f64; bins];
    let mut oy = vec![0.0f64; bins];
    for &v in x {
        ox[bin_of(v)] += 1.0;
    }
    for &v in y {
        oy[bin_of(v)] += 1.0;
    }
    let mut chi = 0.0;
    let mut occupied = 0usize;
    for b in 0..bins {
        let total = ox[b] + oy[b];
        if total > 0.0 {
            occupied += 1;
            let d = ox[b] - oy[b];
            chi += d * d / total;
        }
    }
    Ok((chi, occupied.saturating_sub(1)))
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct FeatureStat {
    pub name: String,
    pub t_score: f64,
    pub t_dof: usize,
    pub chi_square: f64,
    pub chi_dof: usize,
}

/// Per-feature statistics and how many features fall below each |t|
/// threshold. The counts are nested by construction.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct SignificanceReport {
    pub features: Vec<FeatureStat>,
    pub thresholds: [f64; 3],
    pub counts: [usize; 3],
    pub samples: usize,
}

/// Pair the two tables by feature name and sample id and run both statistics
/// per feature.
pub fn significance_report(
    pred: &FeatureTable,
    gt: &FeatureTable,
) -> Result<SignificanceReport> {
    if pred.names != gt.names {
        let missing: Vec<&String> = pred
            .names
            .iter()
            .filter(|n| !gt.names.contains(n))
            .chain(gt.names.iter().filter(|n| !pred.names.contains(n)))
            .collect();
        return Err(Error::Contract(format!("feature name mismatch: {missing:?}")));
    }
    if pred.ids != gt.ids {
        return Err(Error::Contract(format!(
            "sample id mismatch: pred {:?} vs gt {:?}",
            pred.ids, gt.ids
        )));
    }
    let n = pred.ids.len();
    if n < 2 {
        return Err(Error::Argument("significance analysis needs at least 2 samples".into()));
    }
    let chi_bins = 16.min(n).max(2);
    let mut features = Vec::with_capacity(pred.names.len());
    let mut counts = [0usize; 3];
    for (f, name) in pred.names.iter().enumerate() {
        let x = pred.column(f);
        let y = gt.column(f);
        let (t, t_dof) = paired_t_score(&x, &y)?;
        let (chi, chi_dof) = chi_square_stat(&x, &y, chi_bins)?;
        for (slot, &threshold) in counts.iter_mut().zip(&T_THRESHOLDS) {
            if t.abs() < threshold {
                *slot += 1;
            }
        }
        features.push(FeatureStat {
            name: name.clone(),
            t_score: t,
            t_dof,
            chi_square: chi,
            chi_dof,
        });
    }
    Ok(SignificanceReport { features, thresholds: T_THRESHOLDS, counts, samples: n })
}
