//! Population-weighted order statistics, exceedance shares, per-country
//! summaries and weighted Gaussian kernel density estimates.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::DomainError;
use crate::grid::{ExposureTable, WeightedDistribution};
use crate::inequality;
use crate::sum::NeumaierSum;

pub const DEFAULT_THRESHOLDS: [f64; 2] = [5.0, 10.0];
pub const DEFAULT_KDE_TRUNCATION: f64 = 150.0;
pub const DEFAULT_KDE_POINTS: usize = 512;

/// Gaussian terms beyond this many bandwidths underflow to exactly zero.
const KERNEL_CUTOFF: f64 = 40.0;

/// A distribution sorted ascending by value with inclusive cumulative
/// weights. Ties keep their input order.
#[derive(Debug, Clone)]
pub struct SortedDistribution {
    values: Vec<f64>,
    weights: Vec<f64>,
    cumulative: Vec<f64>,
    total_weight: f64,
    weighted_mean: f64,
}

impl SortedDistribution {
    pub fn new(dist: &WeightedDistribution) -> Self {
        let mut pairs: Vec<(f64, f64)> = dist.pairs().collect();
        // rayon's par_sort_by is stable, so the order equals a sequential stable sort
        pairs.par_sort_by(|a, b| a.0.total_cmp(&b.0));
        let (values, weights): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let mut acc = NeumaierSum::new();
        let cumulative = weights
            .iter()
            .map(|&w| {
                acc.add(w);
                acc.value()
            })
            .collect();
        Self {
            values,
            weights,
            cumulative,
            total_weight: dist.total_weight(),
            weighted_mean: dist.weighted_mean(),
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Inclusive running weight totals, aligned with [`Self::values`].
    pub fn cumulative(&self) -> &[f64] {
        &self.cumulative
    }

    pub fn total_weight(&self) -> f64 {
        self.total_weight
    }

    pub fn weighted_mean(&self) -> f64 {
        self.weighted_mean
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Lower weighted quantile: the smallest value whose cumulative weight
    /// reaches `q` of the total.
    pub fn quantile(&self, q: f64) -> Result<f64, DomainError> {
        if !(q > 0.0 && q < 1.0) {
            return Err(DomainError::QuantileOutOfRange(q));
        }
        let target = q * self.total_weight;
        let i = self.cumulative.partition_point(|&c| c < target);
        Ok(self.values[i.min(self.len() - 1)])
    }

    /// Weight share of elements strictly greater than `threshold`.
    pub fn share_above(&self, threshold: f64) -> f64 {
        let start = self.values.partition_point(|&v| v <= threshold);
        let tail: NeumaierSum = self.weights[start..].iter().copied().collect();
        tail.value() / self.total_weight
    }

    /// Distinct values with their summed weights, ascending.
    pub fn collapsed(&self) -> (Vec<f64>, Vec<f64>) {
        let mut values = Vec::new();
        let mut weights: Vec<NeumaierSum> = Vec::new();
        for (&v, &w) in self.values.iter().zip(&self.weights) {
            if values.last() == Some(&v) {
                weights.last_mut().unwrap().add(w);
            } else {
                values.push(v);
                let mut s = NeumaierSum::new();
                s.add(w);
                weights.push(s);
            }
        }
        (values, weights.into_iter().map(|s| s.value()).collect())
    }
}

/// Lower weighted quantile of `dist`; see [`SortedDistribution::quantile`].
pub fn weighted_quantile(dist: &WeightedDistribution, q: f64) -> Result<f64, DomainError> {
    if !(q > 0.0 && q < 1.0) {
        return Err(DomainError::QuantileOutOfRange(q));
    }
    SortedDistribution::new(dist).quantile(q)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Exceedance {
    pub threshold: f64,
    pub share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistributionSummary {
    pub mean: f64,
    pub p10: f64,
    pub p90: f64,
    /// `p90 / p10`; absent when `p10` is zero.
    pub r9010: Option<f64>,
    pub exceedance: Vec<Exceedance>,
}

impl DistributionSummary {
    /// Share strictly above `threshold`, if it was requested.
    pub fn share_over(&self, threshold: f64) -> Option<f64> {
        self.exceedance
            .iter()
            .find(|e| e.threshold == threshold)
            .map(|e| e.share)
    }
}

pub fn summarize(
    dist: &WeightedDistribution,
    exceedance_thresholds: &[f64],
) -> DistributionSummary {
    summarize_sorted(&SortedDistribution::new(dist), exceedance_thresholds)
}

pub fn summarize_sorted(
    sorted: &SortedDistribution,
    exceedance_thresholds: &[f64],
) -> DistributionSummary {
    let p10 = sorted.quantile(0.1).expect("0.1 is in range");
    let p90 = sorted.quantile(0.9).expect("0.9 is in range");
    DistributionSummary {
        mean: sorted.weighted_mean(),
        p10,
        p90,
        r9010: (p10 > 0.0).then(|| p90 / p10),
        exceedance: exceedance_thresholds
            .iter()
            .map(|&threshold| Exceedance {
                threshold,
                share: sorted.share_above(threshold),
            })
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityCurve {
    pub abscissae: Vec<f64>,
    pub densities: Vec<f64>,
    pub bandwidth: f64,
    pub truncation_max: f64,
}

impl DensityCurve {
    /// Trapezoid integral of the curve over its abscissae.
    pub fn trapezoid_integral(&self) -> f64 {
        self.abscissae
            .windows(2)
            .zip(self.densities.windows(2))
            .map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1]))
            .collect::<NeumaierSum>()
            .value()
    }
}

/// Silverman's rule of thumb, `σ (4 / 3n)^(1/5)`, with the weighted standard
/// deviation and the effective sample size `(Σw)² / Σw²`.
pub fn silverman_bandwidth(dist: &WeightedDistribution) -> Result<f64, DomainError> {
    let mean = dist.weighted_mean();
    let total = dist.total_weight();
    let mut sq_dev = NeumaierSum::new();
    let mut sq_w = NeumaierSum::new();
    for (v, w) in dist.pairs() {
        sq_dev.add(w * (v - mean) * (v - mean));
        sq_w.add(w * w);
    }
    let sigma = (sq_dev.value() / total).sqrt();
    let n_eff = total * total / sq_w.value();
    let h = sigma * (4.0 / (3.0 * n_eff)).powf(0.2);
    if h > 0.0 && h.is_finite() {
        Ok(h)
    } else {
        Err(DomainError::InvalidBandwidth(h))
    }
}

/// Weighted Gaussian KDE on `n_points` evenly spaced abscissae over
/// `[0, truncation_max]`.
///
/// Weights are normalised over the whole distribution, so mass outside the
/// displayed range is simply not shown.
pub fn weighted_kde(
    dist: &WeightedDistribution,
    bandwidth: f64,
    truncation_max: f64,
    n_points: usize,
) -> Result<DensityCurve, DomainError> {
    weighted_kde_sorted(
        &SortedDistribution::new(dist),
        bandwidth,
        truncation_max,
        n_points,
    )
}

pub fn weighted_kde_sorted(
    sorted: &SortedDistribution,
    bandwidth: f64,
    truncation_max: f64,
    n_points: usize,
) -> Result<DensityCurve, DomainError> {
    if !(bandwidth > 0.0 && bandwidth.is_finite()) {
        return Err(DomainError::InvalidBandwidth(bandwidth));
    }
    if n_points < 2 {
        return Err(DomainError::TooFewPoints(n_points));
    }
    if !(truncation_max > 0.0 && truncation_max.is_finite()) {
        return Err(DomainError::InvalidTruncation(truncation_max));
    }
    let (values, weights) = sorted.collapsed();
    let total = sorted.total_weight();
    let norm = 1.0 / (bandwidth * (2.0 * PI).sqrt() * total);
    let reach = KERNEL_CUTOFF * bandwidth;

    let abscissae: Vec<f64> = (0..n_points)
        .map(|i| truncation_max * i as f64 / (n_points - 1) as f64)
        .collect();
    let densities = abscissae
        .par_iter()
        .map(|&x| {
            let lo = values.partition_point(|&v| v < x - reach);
            let hi = values.partition_point(|&v| v <= x + reach);
            let mut acc = NeumaierSum::new();
            for (&v, &w) in values[lo..hi].iter().zip(&weights[lo..hi]) {
                let u = (x - v) / bandwidth;
                acc.add(w * (-0.5 * u * u).exp());
            }
            acc.value() * norm
        })
        .collect();
    Ok(DensityCurve {
        abscissae,
        densities,
        bandwidth,
        truncation_max,
    })
}

/// Country-level mean exposure and Gini.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupSummary {
    pub country: String,
    pub population: f64,
    pub mean: f64,
    /// Absent when the country's mean exposure is zero.
    pub gini: Option<f64>,
}

/// One row per country with positive matched population, sorted by name.
pub fn per_group_summary(table: &ExposureTable) -> Vec<GroupSummary> {
    let n = table.countries().len();
    let mut values: Vec<Vec<f64>> = vec![Vec::new(); n];
    let mut weights: Vec<Vec<f64>> = vec![Vec::new(); n];
    for c in table.cells() {
        if let Some(p) = c.exposure {
            values[c.country.index()].push(p);
            weights[c.country.index()].push(c.population);
        }
    }
    let mut rows: Vec<GroupSummary> = values
        .into_par_iter()
        .zip(weights)
        .enumerate()
        .filter_map(|(k, (v, w))| {
            let dist = WeightedDistribution::new(v, w).ok()?;
            Some(GroupSummary {
                country: table.countries()[k].clone(),
                population: dist.total_weight(),
                mean: dist.weighted_mean(),
                gini: inequality::gini(&dist).ok(),
            })
        })
        .collect();
    rows.sort_by(|a, b| a.country.cmp(&b.country));
    rows
}
