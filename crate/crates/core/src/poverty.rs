//! Upper-tail exposure analysis: the threshold above which a target
//! head-count lives, and the per-country breakdown of that tail.

use std::collections::HashMap;

use serde::Serialize;

use crate::error::DomainError;
use crate::grid::{ExposureTable, WeightedDistribution};
use crate::stats::SortedDistribution;
use crate::sum::NeumaierSum;

pub const DEFAULT_POVERTY_TARGET: f64 = 1e9;

/// Largest `τ` such that the weight of elements with value `≥ τ` reaches
/// `target`.
pub fn poverty_threshold(dist: &WeightedDistribution, target: f64) -> Result<f64, DomainError> {
    poverty_threshold_sorted(&SortedDistribution::new(dist), target)
}

pub fn poverty_threshold_sorted(
    sorted: &SortedDistribution,
    target: f64,
) -> Result<f64, DomainError> {
    let total = sorted.total_weight();
    if !(target > 0.0 && target <= total) {
        return Err(DomainError::InvalidTarget { target, total });
    }
    let mut tail = NeumaierSum::new();
    for (&v, &w) in sorted.values().iter().zip(sorted.weights()).rev() {
        tail.add(w);
        if tail.value() >= target {
            return Ok(v);
        }
    }
    // target == total but the running sum rounded just below it
    Ok(sorted.values()[0])
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PovertyRow {
    pub country: String,
    pub exposed_population: f64,
    pub exposed_share_of_country: f64,
    /// Matched population over the reference total; absent without one.
    pub coverage: Option<f64>,
    /// The reference (source) total population, when known.
    pub total_population: Option<f64>,
    /// Matched population of the country.
    pub sample_population: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PovertyReport {
    pub threshold: f64,
    pub target_population: Option<f64>,
    pub achieved_population: f64,
    /// Sorted by exposed population, descending; ties by country name.
    pub rows: Vec<PovertyRow>,
}

/// Per-country head-count at or above `threshold`.
///
/// Countries are listed when they have positive matched population.
pub fn poverty_breakdown(
    table: &ExposureTable,
    threshold: f64,
    reference_totals: &HashMap<String, f64>,
) -> PovertyReport {
    let k = table.countries().len();
    let mut exposed = vec![NeumaierSum::new(); k];
    let mut matched = vec![NeumaierSum::new(); k];
    let mut achieved = NeumaierSum::new();
    for c in table.cells() {
        let Some(p) = c.exposure else { continue };
        matched[c.country.index()].add(c.population);
        if p >= threshold {
            exposed[c.country.index()].add(c.population);
            achieved.add(c.population);
        }
    }
    let mut rows: Vec<PovertyRow> = (0..k)
        .filter_map(|i| {
            let sample = matched[i].value();
            if !(sample > 0.0) {
                return None;
            }
            let country = table.countries()[i].clone();
            let exposed = exposed[i].value();
            let total = reference_totals.get(&country).copied().filter(|t| *t > 0.0);
            Some(PovertyRow {
                exposed_population: exposed,
                exposed_share_of_country: exposed / sample,
                coverage: total.map(|t| sample / t),
                total_population: total,
                sample_population: sample,
                country,
            })
        })
        .collect();
    rows.sort_by(|a, b| {
        b.exposed_population
            .total_cmp(&a.exposed_population)
            .then_with(|| a.country.cmp(&b.country))
    });
    PovertyReport {
        threshold,
        target_population: None,
        achieved_population: achieved.value(),
        rows,
    }
}

/// Finds the threshold for `target` and breaks the tail down by country.
pub fn poverty_report(
    table: &ExposureTable,
    sorted: &SortedDistribution,
    target: f64,
    reference_totals: &HashMap<String, f64>,
) -> Result<PovertyReport, DomainError> {
    let threshold = poverty_threshold_sorted(sorted, target)?;
    let mut report = poverty_breakdown(table, threshold, reference_totals);
    report.target_population = Some(target);
    Ok(report)
}
