//! Core data model: the concentration raster, population cell records, the
//! exposure table and the weighted distribution every statistic consumes.
//!
//! Coordinates are anchored on cell centres throughout. A [`RasterGrid`]
//! stores the centre of its south-west cell; the ASCII reader converts the
//! corner-based file header on load.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::DomainError;
use crate::sum::NeumaierSum;

/// A regular lon/lat lattice of concentrations.
///
/// `values` is row-major with row 0 the southernmost row. A value equal to
/// `missing_sentinel` (or NaN) marks a cell without an estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterGrid {
    /// Longitude of the centre of the south-west cell.
    pub origin_lon: f64,
    /// Latitude of the centre of the south-west cell.
    pub origin_lat: f64,
    pub cell_size: f64,
    pub n_cols: usize,
    pub n_rows: usize,
    pub values: Vec<f64>,
    pub missing_sentinel: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GridViolation {
    #[error("value count {actual} does not match {n_cols} x {n_rows}")]
    DimensionMismatch {
        n_cols: usize,
        n_rows: usize,
        actual: usize,
    },
    #[error("grid must have at least one row and one column ({n_cols} x {n_rows})")]
    EmptyGrid { n_cols: usize, n_rows: usize },
    #[error("cell size must be positive and finite, got {0}")]
    NonPositiveCellSize(f64),
    #[error("origin ({lon}, {lat}) is not finite")]
    NonFiniteOrigin { lon: f64, lat: f64 },
    #[error("negative value {value} at col {col}, row {row}")]
    NegativeValue { col: usize, row: usize, value: f64 },
    #[error("infinite value at col {col}, row {row}")]
    InfiniteValue { col: usize, row: usize },
}

impl RasterGrid {
    /// Builds a grid and checks every invariant.
    pub fn new(
        origin_lon: f64,
        origin_lat: f64,
        cell_size: f64,
        n_cols: usize,
        n_rows: usize,
        values: Vec<f64>,
        missing_sentinel: f64,
    ) -> Result<Self, Vec<GridViolation>> {
        let grid = Self {
            origin_lon,
            origin_lat,
            cell_size,
            n_cols,
            n_rows,
            values,
            missing_sentinel,
        };
        grid.validate()?;
        Ok(grid)
    }

    /// Returns every invariant violation, or `Ok(())` if there are none.
    pub fn validate(&self) -> Result<(), Vec<GridViolation>> {
        let mut violations = Vec::new();
        if !(self.cell_size > 0.0 && self.cell_size.is_finite()) {
            violations.push(GridViolation::NonPositiveCellSize(self.cell_size));
        }
        if !(self.origin_lon.is_finite() && self.origin_lat.is_finite()) {
            violations.push(GridViolation::NonFiniteOrigin {
                lon: self.origin_lon,
                lat: self.origin_lat,
            });
        }
        if self.n_cols == 0 || self.n_rows == 0 {
            violations.push(GridViolation::EmptyGrid {
                n_cols: self.n_cols,
                n_rows: self.n_rows,
            });
        }
        if self.n_cols.checked_mul(self.n_rows) != Some(self.values.len()) {
            violations.push(GridViolation::DimensionMismatch {
                n_cols: self.n_cols,
                n_rows: self.n_rows,
                actual: self.values.len(),
            });
        }
        let n_cols = self.n_cols.max(1);
        for (i, &v) in self.values.iter().enumerate() {
            if self.is_missing_value(v) {
                continue;
            }
            let (col, row) = (i % n_cols, i / n_cols);
            if v.is_infinite() {
                violations.push(GridViolation::InfiniteValue { col, row });
            } else if v < 0.0 {
                violations.push(GridViolation::NegativeValue { col, row, value: v });
            }
        }
        if violations.is_empty() {
            Ok(())
        } else {
            Err(violations)
        }
    }

    #[inline]
    fn is_missing_value(&self, v: f64) -> bool {
        v.is_nan() || v == self.missing_sentinel
    }

    /// The concentration at `(col, row)`, or `None` when missing or outside
    /// the lattice.
    #[inline]
    pub fn get(&self, col: usize, row: usize) -> Option<f64> {
        if col >= self.n_cols || row >= self.n_rows {
            return None;
        }
        let v = self.values[row * self.n_cols + col];
        (!self.is_missing_value(v)).then_some(v)
    }

    /// Centre coordinates of cell `(col, row)`.
    pub fn cell_center(&self, col: usize, row: usize) -> (f64, f64) {
        (
            self.origin_lon + col as f64 * self.cell_size,
            self.origin_lat + row as f64 * self.cell_size,
        )
    }

    /// True when the columns cover the full 360 degrees of longitude.
    pub fn spans_full_longitude(&self) -> bool {
        (self.n_cols as f64 * self.cell_size - 360.0).abs() <= 1e-6 * 360.0
    }
}

/// Checks a grid against its invariants; see [`RasterGrid::validate`].
pub fn validate_grid(grid: &RasterGrid) -> Result<(), Vec<GridViolation>> {
    grid.validate()
}

/// Index into an [`ExposureTable`]'s country list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CountryId(pub u32);

impl CountryId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// One populated grid cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellRecord {
    pub lon: f64,
    pub lat: f64,
    /// Head-count, fractional.
    pub population: f64,
    pub country: CountryId,
    /// Matched concentration; `None` while unmatched.
    pub exposure: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CellViolation {
    #[error("cell {index}: population {value} is negative or not finite")]
    Population { index: usize, value: f64 },
    #[error("cell {index}: exposure {value} is negative or not finite")]
    Exposure { index: usize, value: f64 },
    #[error("cell {index}: longitude {value} outside [-180, 180]")]
    Longitude { index: usize, value: f64 },
    #[error("cell {index}: latitude {value} outside [-90, 90]")]
    Latitude { index: usize, value: f64 },
    #[error("cell {index}: country id {id} not in the country list")]
    UnknownCountry { index: usize, id: u32 },
}

impl CellRecord {
    fn check(&self, index: usize, n_countries: usize) -> Result<(), CellViolation> {
        if !(self.population >= 0.0 && self.population.is_finite()) {
            return Err(CellViolation::Population {
                index,
                value: self.population,
            });
        }
        if let Some(p) = self.exposure {
            if !(p >= 0.0 && p.is_finite()) {
                return Err(CellViolation::Exposure { index, value: p });
            }
        }
        if !(-180.0..=180.0).contains(&self.lon) {
            return Err(CellViolation::Longitude {
                index,
                value: self.lon,
            });
        }
        if !(-90.0..=90.0).contains(&self.lat) {
            return Err(CellViolation::Latitude {
                index,
                value: self.lat,
            });
        }
        if self.country.index() >= n_countries {
            return Err(CellViolation::UnknownCountry {
                index,
                id: self.country.0,
            });
        }
        Ok(())
    }
}

/// The pipeline's central dataset: every cell of one year with its
/// (possibly missing) matched exposure.
#[derive(Debug, Clone, PartialEq)]
pub struct ExposureTable {
    year: String,
    countries: Vec<String>,
    cells: Vec<CellRecord>,
    total_population: f64,
}

impl ExposureTable {
    pub fn new(
        year: impl Into<String>,
        countries: Vec<String>,
        cells: Vec<CellRecord>,
    ) -> Result<Self, CellViolation> {
        for (i, c) in cells.iter().enumerate() {
            c.check(i, countries.len())?;
        }
        Ok(Self::from_parts(year.into(), countries, cells))
    }

    /// Builds a table from cells that are already known to be valid.
    pub(crate) fn from_parts(year: String, countries: Vec<String>, cells: Vec<CellRecord>) -> Self {
        let total_population = matched_population(&cells);
        Self {
            year,
            countries,
            cells,
            total_population,
        }
    }

    /// Same year and country list, different cells.
    pub(crate) fn with_cells(&self, cells: Vec<CellRecord>) -> Self {
        Self::from_parts(self.year.clone(), self.countries.clone(), cells)
    }

    pub fn year(&self) -> &str {
        &self.year
    }

    pub fn countries(&self) -> &[String] {
        &self.countries
    }

    pub fn country_name(&self, id: CountryId) -> &str {
        &self.countries[id.index()]
    }

    pub fn country_id(&self, name: &str) -> Option<CountryId> {
        self.countries
            .iter()
            .position(|c| c == name)
            .map(|i| CountryId(i as u32))
    }

    pub fn cells(&self) -> &[CellRecord] {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// N: summed population over cells that carry an exposure.
    pub fn total_population(&self) -> f64 {
        self.total_population
    }

    /// Summed population over all cells, matched or not.
    pub fn gross_population(&self) -> f64 {
        self.cells
            .iter()
            .map(|c| c.population)
            .collect::<NeumaierSum>()
            .value()
    }

    /// Summed population per country over all cells, indexed by [`CountryId`].
    pub fn country_totals(&self, matched_only: bool) -> Vec<f64> {
        let mut acc = vec![NeumaierSum::new(); self.countries.len()];
        for c in &self.cells {
            if !matched_only || c.exposure.is_some() {
                acc[c.country.index()].add(c.population);
            }
        }
        acc.into_iter().map(|s| s.value()).collect()
    }

    /// Per-country totals keyed by country name.
    pub fn country_totals_by_name(&self, matched_only: bool) -> HashMap<String, f64> {
        self.countries
            .iter()
            .cloned()
            .zip(self.country_totals(matched_only))
            .collect()
    }
}

fn matched_population(cells: &[CellRecord]) -> f64 {
    cells
        .iter()
        .filter(|c| c.exposure.is_some())
        .map(|c| c.population)
        .collect::<NeumaierSum>()
        .value()
}

/// Interns country names while a table is being assembled.
#[derive(Debug, Default)]
pub struct CountryInterner {
    names: Vec<String>,
    ids: HashMap<String, CountryId>,
}

impl CountryInterner {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn intern(&mut self, name: &str) -> CountryId {
        if let Some(&id) = self.ids.get(name) {
            return id;
        }
        let id = CountryId(self.names.len() as u32);
        self.names.push(name.to_owned());
        self.ids.insert(name.to_owned(), id);
        id
    }

    pub fn into_names(self) -> Vec<String> {
        self.names
    }
}

/// `(value, weight)` pairs with cached total weight and weighted mean.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedDistribution {
    values: Vec<f64>,
    weights: Vec<f64>,
    total_weight: f64,
    weighted_mean: f64,
}

impl WeightedDistribution {
    pub fn new(values: Vec<f64>, weights: Vec<f64>) -> Result<Self, DomainError> {
        if values.len() != weights.len() {
            return Err(DomainError::LengthMismatch {
                values: values.len(),
                weights: weights.len(),
            });
        }
        for (index, &weight) in weights.iter().enumerate() {
            if !(weight >= 0.0 && weight.is_finite()) {
                return Err(DomainError::InvalidWeight { index, weight });
            }
        }
        for (index, &value) in values.iter().enumerate() {
            if !value.is_finite() {
                return Err(DomainError::NonFiniteValue { index, value });
            }
        }
        let mut total = NeumaierSum::new();
        let mut weighted = NeumaierSum::new();
        for (&v, &w) in values.iter().zip(&weights) {
            total.add(w);
            weighted.add(w * v);
        }
        let total_weight = total.value();
        if total_weight <= 0.0 {
            return Err(DomainError::EmptyDistribution);
        }
        Ok(Self {
            values,
            weights,
            total_weight,
            weighted_mean: weighted.value() / total_weight,
        })
    }

    /// Equal weights of 1.
    pub fn unweighted(values: Vec<f64>) -> Result<Self, DomainError> {
        let weights = vec![1.0; values.len()];
        Self::new(values, weights)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.total_weight
    }

    pub fn weighted_mean(&self) -> f64 {
        self.weighted_mean
    }

    /// Iterator over `(value, weight)` pairs.
    pub fn pairs(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.values
            .iter()
            .copied()
            .zip(self.weights.iter().copied())
    }
}

impl fmt::Display for WeightedDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} elements, total weight {}, mean {}",
            self.len(),
            self.total_weight,
            self.weighted_mean
        )
    }
}

/// The matched cells' `(exposure, population)` pairs.
pub fn build_distribution(table: &ExposureTable) -> Result<WeightedDistribution, DomainError> {
    let (values, weights): (Vec<f64>, Vec<f64>) = table
        .cells()
        .iter()
        .filter_map(|c| c.exposure.map(|p| (p, c.population)))
        .unzip();
    WeightedDistribution::new(values, weights)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(values: Vec<f64>) -> RasterGrid {
        RasterGrid {
            origin_lon: 0.005,
            origin_lat: 0.005,
            cell_size: 0.01,
            n_cols: 2,
            n_rows: 2,
            values,
            missing_sentinel: -999.0,
        }
    }

    fn table(rows: &[(f64, f64, &str, Option<f64>)]) -> ExposureTable {
        let mut interner = CountryInterner::new();
        let cells = rows
            .iter()
            .map(|&(lon, population, country, exposure)| CellRecord {
                lon,
                lat: 0.0,
                population,
                country: interner.intern(country),
                exposure,
            })
            .collect();
        ExposureTable::new("2020", interner.into_names(), cells).unwrap()
    }

    #[test]
    fn valid_two_by_two() {
        assert_eq!(validate_grid(&grid(vec![1.0, 2.0, 3.0, 4.0])), Ok(()));
    }

    #[test]
    fn dimension_mismatch() {
        let err = validate_grid(&grid(vec![1.0, 2.0, 3.0])).unwrap_err();
        assert!(matches!(
            err[0],
            GridViolation::DimensionMismatch { actual: 3, .. }
        ));
    }

    #[test]
    fn negative_value_but_sentinel_is_fine() {
        let err = validate_grid(&grid(vec![1.0, -5.0, -999.0, 4.0])).unwrap_err();
        assert_eq!(
            err,
            vec![GridViolation::NegativeValue {
                col: 1,
                row: 0,
                value: -5.0
            }]
        );
    }

    #[test]
    fn nonpositive_cell_size_reported_with_other_violations() {
        let mut g = grid(vec![1.0, -2.0, 3.0, 4.0]);
        g.cell_size = 0.0;
        let err = g.validate().unwrap_err();
        assert_eq!(err.len(), 2);
        assert_eq!(err[0], GridViolation::NonPositiveCellSize(0.0));
    }

    #[test]
    fn missing_lookup() {
        let g = grid(vec![1.0, f64::NAN, -999.0, 4.0]);
        assert_eq!(g.get(0, 0), Some(1.0));
        assert_eq!(g.get(1, 0), None);
        assert_eq!(g.get(0, 1), None);
        assert_eq!(g.get(2, 0), None);
    }

    #[test]
    fn distribution_means() {
        let t = table(&[(0.0, 1.0, "A", Some(10.0)), (0.0, 1.0, "A", Some(30.0))]);
        assert_eq!(build_distribution(&t).unwrap().weighted_mean(), 20.0);
        let t = table(&[(0.0, 3.0, "A", Some(10.0)), (0.0, 1.0, "A", Some(30.0))]);
        assert_eq!(build_distribution(&t).unwrap().weighted_mean(), 15.0);
    }

    #[test]
    fn unmatched_only_is_empty() {
        let t = table(&[(0.0, 5.0, "A", None), (1.0, 2.0, "B", None)]);
        assert_eq!(build_distribution(&t), Err(DomainError::EmptyDistribution));
        let t = table(&[(0.0, 0.0, "A", Some(3.0))]);
        assert_eq!(build_distribution(&t), Err(DomainError::EmptyDistribution));
    }

    #[test]
    fn total_population_counts_matched_only() {
        let t = table(&[(0.0, 5.0, "A", None), (1.0, 2.5, "B", Some(1.0))]);
        assert_eq!(t.total_population(), 2.5);
        assert_eq!(t.gross_population(), 7.5);
        assert_eq!(t.country_totals(false), vec![5.0, 2.5]);
        assert_eq!(t.country_totals(true), vec![0.0, 2.5]);
    }

    #[test]
    fn table_rejects_bad_cells() {
        let cell = CellRecord {
            lon: 181.0,
            lat: 0.0,
            population: 1.0,
            country: CountryId(0),
            exposure: None,
        };
        let err = ExposureTable::new("y", vec!["A".into()], vec![cell]).unwrap_err();
        assert!(matches!(err, CellViolation::Longitude { index: 0, .. }));
        let cell = CellRecord {
            lon: 0.0,
            population: -1.0,
            ..cell
        };
        assert!(ExposureTable::new("y", vec!["A".into()], vec![cell]).is_err());
    }

    #[test]
    fn distribution_rejects_negative_weight() {
        let err = WeightedDistribution::new(vec![1.0, 2.0], vec![1.0, -1.0]).unwrap_err();
        assert_eq!(
            err,
            DomainError::InvalidWeight {
                index: 1,
                weight: -1.0
            }
        );
        assert!(WeightedDistribution::new(vec![1.0], vec![1.0, 2.0]).is_err());
    }
}
