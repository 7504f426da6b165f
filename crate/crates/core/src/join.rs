//! Assigns a concentration to every population cell from the nearest raster
//! cell, falling back to the mean of the non-missing Moore neighbours when
//! the nearest value is missing.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::grid::{CellRecord, ExposureTable, RasterGrid};
use crate::sum::NeumaierSum;

/// Slack, in cell units, when deciding exact midpoints and extent edges.
/// Decimal coordinates such as 0.005 / 0.01 rarely divide exactly.
const INDEX_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
#[error("point ({lon}, {lat}) lies outside the grid extent")]
pub struct OutOfExtent {
    pub lon: f64,
    pub lat: f64,
}

/// How a cell obtained its exposure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MatchKind {
    Direct,
    Fallback,
    Unmatched,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatchReport {
    pub matched_direct: usize,
    pub matched_fallback: usize,
    pub unmatched_dropped: usize,
    pub population_matched_fraction: f64,
}

impl MatchReport {
    pub fn total_cells(&self) -> usize {
        self.matched_direct + self.matched_fallback + self.unmatched_dropped
    }

    pub fn matched(&self) -> usize {
        self.matched_direct + self.matched_fallback
    }
}

fn axis_index(coord: f64, origin: f64, cell_size: f64, n: usize) -> Option<usize> {
    let t = (coord - origin) / cell_size;
    if !(t >= -0.5 - INDEX_SLACK && t <= n as f64 - 0.5 + INDEX_SLACK) {
        return None;
    }
    // midpoints go to the larger index
    let idx = (t + 0.5 + INDEX_SLACK).floor().max(0.0) as usize;
    Some(idx.min(n - 1))
}

/// `(col, row)` of the cell whose centre is nearest to the point in plain
/// degree space. Points up to half a cell beyond the outermost centres are
/// accepted.
pub fn nearest_index(grid: &RasterGrid, lon: f64, lat: f64) -> Result<(usize, usize), OutOfExtent> {
    let col = axis_index(lon, grid.origin_lon, grid.cell_size, grid.n_cols);
    let row = axis_index(lat, grid.origin_lat, grid.cell_size, grid.n_rows);
    match (col, row) {
        (Some(c), Some(r)) => Ok((c, r)),
        _ => Err(OutOfExtent { lon, lat }),
    }
}

/// Arithmetic mean of the non-missing Moore neighbours of `(col, row)`.
///
/// Neighbours beyond the lattice edge count as missing, except across the
/// antimeridian on grids that span the full 360 degrees.
pub fn neighbor_mean(grid: &RasterGrid, col: usize, row: usize) -> Option<f64> {
    let wrap = grid.spans_full_longitude();
    let n_cols = grid.n_cols as isize;
    let mut sum = 0.0;
    let mut count = 0usize;
    for dr in -1isize..=1 {
        let r = row as isize + dr;
        if r < 0 || r >= grid.n_rows as isize {
            continue;
        }
        for dc in -1isize..=1 {
            if dr == 0 && dc == 0 {
                continue;
            }
            let mut c = col as isize + dc;
            if wrap {
                c = c.rem_euclid(n_cols);
            } else if c < 0 || c >= n_cols {
                continue;
            }
            if let Some(v) = grid.get(c as usize, r as usize) {
                sum += v;
                count += 1;
            }
        }
    }
    (count > 0).then(|| sum / count as f64)
}

/// Exposure for a single point.
pub fn match_point(
    grid: &RasterGrid,
    lon: f64,
    lat: f64,
    fallback_enabled: bool,
) -> (Option<f64>, MatchKind) {
    let Ok((col, row)) = nearest_index(grid, lon, lat) else {
        return (None, MatchKind::Unmatched);
    };
    if let Some(v) = grid.get(col, row) {
        return (Some(v), MatchKind::Direct);
    }
    if fallback_enabled {
        if let Some(v) = neighbor_mean(grid, col, row) {
            return (Some(v), MatchKind::Fallback);
        }
    }
    (None, MatchKind::Unmatched)
}

/// Matches every cell against `grid`, replacing any exposure the table
/// already carried. Population, country and coordinates are untouched.
pub fn assign_exposure(
    table: &ExposureTable,
    grid: &RasterGrid,
    fallback_enabled: bool,
) -> (ExposureTable, MatchReport) {
    let matched: Vec<(CellRecord, MatchKind)> = table
        .cells()
        .par_iter()
        .map(|cell| {
            let (exposure, kind) = match_point(grid, cell.lon, cell.lat, fallback_enabled);
            (CellRecord { exposure, ..*cell }, kind)
        })
        .collect();

    let mut report = MatchReport {
        matched_direct: 0,
        matched_fallback: 0,
        unmatched_dropped: 0,
        population_matched_fraction: 0.0,
    };
    let mut matched_pop = NeumaierSum::new();
    let mut cells = Vec::with_capacity(matched.len());
    for (cell, kind) in matched {
        match kind {
            MatchKind::Direct => report.matched_direct += 1,
            MatchKind::Fallback => report.matched_fallback += 1,
            MatchKind::Unmatched => report.unmatched_dropped += 1,
        }
        if kind != MatchKind::Unmatched {
            matched_pop.add(cell.population);
        }
        cells.push(cell);
    }
    let gross = table.gross_population();
    if gross > 0.0 {
        report.population_matched_fraction = (matched_pop.value() / gross).clamp(0.0, 1.0);
    }
    (table.with_cells(cells), report)
}
