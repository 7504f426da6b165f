//! Readers and writers for the two interchange formats (ESRI ASCII grids and
//! cell CSV files) plus the sample filters applied before matching.

use std::collections::{HashMap, HashSet};
use std::io::{self, BufRead, Write};

use serde::Serialize;
use thiserror::Error;

use crate::grid::{
    CellRecord, CellViolation, CountryInterner, ExposureTable, GridViolation, RasterGrid,
};
use crate::sum::NeumaierSum;

/// Exact header of the cell CSV format.
pub const CELL_CSV_HEADER: &str = "lon,lat,population,country,pm25";

pub const DEFAULT_MIN_CELL_POPULATION: f64 = 1.0;
pub const DEFAULT_MIN_COUNTRY_POPULATION: f64 = 10_000.0;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("malformed grid header: {0}")]
    MalformedHeader(String),
    #[error("line {line}: expected {expected} values, found {found}")]
    TokenCount {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("expected {expected} data rows, found {found}")]
    RowCount { expected: usize, found: usize },
    #[error("line {line}: cannot parse {token:?} as a number")]
    ParseNumber { line: usize, token: String },
    #[error("invalid grid: {}", join_violations(.0))]
    InvalidGrid(Vec<GridViolation>),
    #[error("unexpected CSV header {found:?}; expected {CELL_CSV_HEADER:?}")]
    UnknownColumn { found: String },
    #[error("empty input: missing CSV header")]
    MissingHeader,
    #[error("line {line}: expected 5 fields, found {found}")]
    FieldCount { line: usize, found: usize },
    #[error("line {line}: negative population {value}")]
    NegativePopulation { line: usize, value: f64 },
    #[error("line {line}: negative exposure {value}")]
    NegativeExposure { line: usize, value: f64 },
    #[error("line {line}: coordinate ({lon}, {lat}) out of range")]
    CoordinateOutOfRange { line: usize, lon: f64, lat: f64 },
    #[error("line {line}: empty country identifier")]
    EmptyCountry { line: usize },
    #[error("invalid cell: {0}")]
    InvalidCell(#[from] CellViolation),
}

fn join_violations(v: &[GridViolation]) -> String {
    v.iter()
        .map(|e| e.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

/// Reads an ESRI ASCII grid.
///
/// Header keys are matched case-insensitively and may appear in any order;
/// all six of `NCOLS`, `NROWS`, `XLLCORNER`, `YLLCORNER`, `CELLSIZE` and
/// `NODATA_VALUE` are required. The first data row is the northernmost.
pub fn read_ascii_grid<R: BufRead>(mut source: R) -> Result<RasterGrid, IngestError> {
    let mut n_cols = None;
    let mut n_rows = None;
    let mut xll = None;
    let mut yll = None;
    let mut cell_size = None;
    let mut nodata = None;

    let mut line = String::new();
    let mut line_no = 0usize;
    let mut seen = 0;
    while seen < 6 {
        line.clear();
        if source.read_line(&mut line)? == 0 {
            return Err(IngestError::MalformedHeader(format!(
                "unexpected end of input after {seen} header lines"
            )));
        }
        line_no += 1;
        let mut tokens = line.split_whitespace();
        let Some(key) = tokens.next() else { continue };
        let value = tokens.next().ok_or_else(|| {
            IngestError::MalformedHeader(format!("line {line_no}: key {key} has no value"))
        })?;
        if tokens.next().is_some() {
            return Err(IngestError::MalformedHeader(format!(
                "line {line_no}: trailing tokens after {key}"
            )));
        }
        let key_lc = key.to_ascii_lowercase();
        let slot_is_set = match key_lc.as_str() {
            "ncols" => n_cols.replace(parse_header_count(key, value)?).is_some(),
            "nrows" => n_rows.replace(parse_header_count(key, value)?).is_some(),
            "xllcorner" => xll.replace(parse_header_f64(key, value)?).is_some(),
            "yllcorner" => yll.replace(parse_header_f64(key, value)?).is_some(),
            "cellsize" => cell_size.replace(parse_header_f64(key, value)?).is_some(),
            "nodata_value" => nodata.replace(parse_header_f64(key, value)?).is_some(),
            _ => {
                let missing = [
                    ("NCOLS", n_cols.is_some()),
                    ("NROWS", n_rows.is_some()),
                    ("XLLCORNER", xll.is_some()),
                    ("YLLCORNER", yll.is_some()),
                    ("CELLSIZE", cell_size.is_some()),
                    ("NODATA_VALUE", nodata.is_some()),
                ]
                .iter()
                .filter(|(_, set)| !set)
                .map(|(k, _)| *k)
                .collect::<Vec<_>>()
                .join(", ");
                return Err(IngestError::MalformedHeader(format!(
                    "line {line_no}: unexpected token {key:?}; missing {missing}"
                )));
            }
        };
        if slot_is_set {
            return Err(IngestError::MalformedHeader(format!("duplicate key {key}")));
        }
        seen += 1;
    }

    // All six slots are filled once the loop exits.
    let (n_cols, n_rows) = (n_cols.unwrap(), n_rows.unwrap());
    let (xll, yll, cell_size, nodata) = (
        xll.unwrap(),
        yll.unwrap(),
        cell_size.unwrap(),
        nodata.unwrap(),
    );

    let mut file_rows: Vec<Vec<f64>> = Vec::with_capacity(n_rows);
    loop {
        line.clear();
        if source.read_line(&mut line)? == 0 {
            break;
        }
        line_no += 1;
        if line.trim().is_empty() {
            continue;
        }
        if file_rows.len() == n_rows {
            return Err(IngestError::RowCount {
                expected: n_rows,
                found: n_rows + 1,
            });
        }
        let mut row = Vec::with_capacity(n_cols);
        for token in line.split_whitespace() {
            let v: f64 = token.parse().map_err(|_| IngestError::ParseNumber {
                line: line_no,
                token: token.to_owned(),
            })?;
            row.push(v);
        }
        if row.len() != n_cols {
            return Err(IngestError::TokenCount {
                line: line_no,
                expected: n_cols,
                found: row.len(),
            });
        }
        file_rows.push(row);
    }
    if file_rows.len() != n_rows {
        return Err(IngestError::RowCount {
            expected: n_rows,
            found: file_rows.len(),
        });
    }

    let values: Vec<f64> = file_rows.into_iter().rev().flatten().collect();
    RasterGrid::new(
        xll + 0.5 * cell_size,
        yll + 0.5 * cell_size,
        cell_size,
        n_cols,
        n_rows,
        values,
        nodata,
    )
    .map_err(IngestError::InvalidGrid)
}

fn parse_header_count(key: &str, value: &str) -> Result<usize, IngestError> {
    value
        .parse()
        .map_err(|_| IngestError::MalformedHeader(format!("{key} value {value:?} is not a count")))
}

fn parse_header_f64(key: &str, value: &str) -> Result<f64, IngestError> {
    value
        .parse()
        .map_err(|_| IngestError::MalformedHeader(format!("{key} value {value:?} is not a number")))
}

/// Writes a grid in ESRI ASCII format, northernmost row first.
pub fn write_ascii_grid<W: Write>(grid: &RasterGrid, mut out: W) -> io::Result<()> {
    writeln!(out, "ncols {}", grid.n_cols)?;
    writeln!(out, "nrows {}", grid.n_rows)?;
    writeln!(out, "xllcorner {}", grid.origin_lon - 0.5 * grid.cell_size)?;
    writeln!(out, "yllcorner {}", grid.origin_lat - 0.5 * grid.cell_size)?;
    writeln!(out, "cellsize {}", grid.cell_size)?;
    writeln!(out, "NODATA_value {}", grid.missing_sentinel)?;
    for row in (0..grid.n_rows).rev() {
        let start = row * grid.n_cols;
        let mut sep = "";
        for v in &grid.values[start..start + grid.n_cols] {
            write!(out, "{sep}{v}")?;
            sep = " ";
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Reads a cell CSV with header `lon,lat,population,country,pm25`.
///
/// An empty `pm25` field marks an unmatched cell. Row order is preserved.
pub fn read_cell_csv<R: BufRead>(mut source: R, year: &str) -> Result<ExposureTable, IngestError> {
    let mut line = String::new();
    if source.read_line(&mut line)? == 0 {
        return Err(IngestError::MissingHeader);
    }
    let header = line.trim_end_matches(['\n', '\r']);
    if header != CELL_CSV_HEADER {
        return Err(IngestError::UnknownColumn {
            found: header.to_owned(),
        });
    }

    let mut interner = CountryInterner::new();
    let mut cells = Vec::new();
    let mut line_no = 1usize;
    loop {
        line.clear();
        if source.read_line(&mut line)? == 0 {
            break;
        }
        line_no += 1;
        let record = line.trim_end_matches(['\n', '\r']);
        if record.is_empty() {
            continue;
        }
        let fields: Vec<&str> = record.split(',').collect();
        if fields.len() != 5 {
            return Err(IngestError::FieldCount {
                line: line_no,
                found: fields.len(),
            });
        }
        let num = |token: &str| -> Result<f64, IngestError> {
            token.trim().parse().map_err(|_| IngestError::ParseNumber {
                line: line_no,
                token: token.to_owned(),
            })
        };
        let lon = num(fields[0])?;
        let lat = num(fields[1])?;
        let population = num(fields[2])?;
        if !(-180.0..=180.0).contains(&lon) || !(-90.0..=90.0).contains(&lat) {
            return Err(IngestError::CoordinateOutOfRange {
                line: line_no,
                lon,
                lat,
            });
        }
        if !(population >= 0.0) || !population.is_finite() {
            return Err(IngestError::NegativePopulation {
                line: line_no,
                value: population,
            });
        }
        let country = fields[3].trim();
        if country.is_empty() {
            return Err(IngestError::EmptyCountry { line: line_no });
        }
        let exposure = match fields[4].trim() {
            "" => None,
            token => {
                let p = num(token)?;
                if !(p >= 0.0) || !p.is_finite() {
                    return Err(IngestError::NegativeExposure {
                        line: line_no,
                        value: p,
                    });
                }
                Some(p)
            }
        };
        cells.push(CellRecord {
            lon,
            lat,
            population,
            country: interner.intern(country),
            exposure,
        });
    }
    Ok(ExposureTable::new(year, interner.into_names(), cells)?)
}

/// Writes a table as cell CSV; unmatched cells get an empty `pm25`.
pub fn write_cell_csv<W: Write>(table: &ExposureTable, mut out: W) -> io::Result<()> {
    writeln!(out, "{CELL_CSV_HEADER}")?;
    for c in table.cells() {
        let country = table.country_name(c.country);
        match c.exposure {
            Some(p) => writeln!(
                out,
                "{},{},{},{},{}",
                c.lon, c.lat, c.population, country, p
            )?,
            None => writeln!(out, "{},{},{},{},", c.lon, c.lat, c.population, country)?,
        }
    }
    Ok(())
}

/// What the sample filters removed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FilterReport {
    pub cells_dropped_low_population: usize,
    /// Countries whose remaining cells were all dropped for falling under the
    /// country threshold, sorted by name.
    pub countries_dropped_small: Vec<String>,
    pub population_retained_fraction: f64,
}

/// Thresholds for [`apply_sample_filters_with`].
#[derive(Debug, Clone, PartialEq)]
pub struct SampleFilter<'a> {
    pub min_cell_population: f64,
    pub min_country_population: f64,
    /// Country totals to compare against instead of the table's own totals.
    /// Countries absent from the map fall back to their own total.
    pub reference_totals: Option<&'a HashMap<String, f64>>,
}

impl Default for SampleFilter<'_> {
    fn default() -> Self {
        Self {
            min_cell_population: DEFAULT_MIN_CELL_POPULATION,
            min_country_population: DEFAULT_MIN_COUNTRY_POPULATION,
            reference_totals: None,
        }
    }
}

/// Drops cells under `min_cell_population`, then every cell of any country
/// whose remaining population is under `min_country_population`. Both
/// comparisons are strict.
pub fn apply_sample_filters(
    table: &ExposureTable,
    min_cell_population: f64,
    min_country_population: f64,
) -> (ExposureTable, FilterReport) {
    apply_sample_filters_with(
        table,
        &SampleFilter {
            min_cell_population,
            min_country_population,
            reference_totals: None,
        },
    )
}

pub fn apply_sample_filters_with(
    table: &ExposureTable,
    filter: &SampleFilter<'_>,
) -> (ExposureTable, FilterReport) {
    let before = table.gross_population();

    let kept: Vec<CellRecord> = table
        .cells()
        .iter()
        .filter(|c| !(c.population < filter.min_cell_population))
        .copied()
        .collect();
    let cells_dropped_low_population = table.len() - kept.len();

    let n_countries = table.countries().len();
    let mut own = vec![NeumaierSum::new(); n_countries];
    let mut present = vec![false; n_countries];
    for c in &kept {
        own[c.country.index()].add(c.population);
        present[c.country.index()] = true;
    }
    let small: HashSet<usize> = (0..n_countries)
        .filter(|&k| present[k])
        .filter(|&k| {
            let name = &table.countries()[k];
            let total = filter
                .reference_totals
                .and_then(|r| r.get(name).copied())
                .unwrap_or_else(|| own[k].value());
            total < filter.min_country_population
        })
        .collect();

    let cells: Vec<CellRecord> = kept
        .into_iter()
        .filter(|c| !small.contains(&c.country.index()))
        .collect();
    let mut countries_dropped_small: Vec<String> = small
        .iter()
        .map(|&k| table.countries()[k].clone())
        .collect();
    countries_dropped_small.sort();

    let filtered = table.with_cells(cells);
    let after = filtered.gross_population();
    let population_retained_fraction = if before > 0.0 {
        (after / before).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (
        filtered,
        FilterReport {
            cells_dropped_low_population,
            countries_dropped_small,
            population_retained_fraction,
        },
    )
}

/// Per-country totals after the cell filter alone; used as the reference
/// for filtering other years.
pub fn reference_totals_after_cell_filter(
    table: &ExposureTable,
    min_cell_population: f64,
) -> HashMap<String, f64> {
    let mut acc = vec![NeumaierSum::new(); table.countries().len()];
    for c in table.cells() {
        if !(c.population < min_cell_population) {
            acc[c.country.index()].add(c.population);
        }
    }
    table
        .countries()
        .iter()
        .cloned()
        .zip(acc.into_iter().map(|s| s.value()))
        .collect()
}
