//! Input generators shared by the benchmarks.

use airq_core::inequality::GroupedDistribution;
use airq_core::{CellRecord, CountryId, ExposureTable, RasterGrid, WeightedDistribution};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Log-normal-ish exposures with uneven populations, split over `groups`.
pub fn grouped_sample(n: usize, groups: usize, seed: u64) -> GroupedDistribution {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    let mut group_of = Vec::with_capacity(n);
    for _ in 0..n {
        let g = rng.random_range(0..groups);
        values.push(5.0 + 10.0 * g as f64 + rng.random_range(0.0f64..1.0).powi(3) * 80.0);
        weights.push(rng.random_range(1.0..5000.0));
        group_of.push(g);
    }
    let base = WeightedDistribution::new(values, weights).expect("valid sample");
    let labels = (0..groups).map(|g| format!("G{g:03}")).collect();
    GroupedDistribution::new(base, group_of, labels).expect("valid grouping")
}

/// A `side × side` grid with about 5% NODATA and one population point per
/// cell, jittered inside it.
pub fn join_inputs(side: usize, seed: u64) -> (ExposureTable, RasterGrid) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cs = 0.01;
    let values = (0..side * side)
        .map(|_| {
            if rng.random_bool(0.05) {
                -9999.0
            } else {
                rng.random_range(1.0..120.0)
            }
        })
        .collect();
    let grid = RasterGrid::new(0.005, 0.005, cs, side, side, values, -9999.0).expect("valid grid");
    let cells = (0..side * side)
        .map(|i| {
            let (lon, lat) = grid.cell_center(i % side, i / side);
            CellRecord {
                lon: lon + rng.random_range(-0.4..0.4) * cs,
                lat: lat + rng.random_range(-0.4..0.4) * cs,
                population: rng.random_range(1.0..1000.0),
                country: CountryId((i % 7) as u32),
                exposure: None,
            }
        })
        .collect();
    let names = (0..7).map(|k| format!("K{k}")).collect();
    let table = ExposureTable::new("bench", names, cells).expect("valid table");
    (table, grid)
}
