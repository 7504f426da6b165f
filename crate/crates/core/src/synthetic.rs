//! Deterministic synthetic fixtures: a population cell table and a matching
//! pollution grid with known country means and planted missing cells.
//!
//! Each country occupies its own rectangular block of the lattice. Blocks are
//! separated (and surrounded) by a one-cell NODATA border, so the fallback
//! neighbourhood of a planted cell never reaches another country. Planted
//! cells only sit at odd local (col, row) positions; no two of them are
//! neighbours, so every planted cell is recoverable by the fallback.

use std::fs;
use std::io::{self, BufWriter};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;
use thiserror::Error;

use crate::grid::{CellRecord, CountryId, ExposureTable, RasterGrid};
use crate::ingest::{write_ascii_grid, write_cell_csv};
use crate::sum::NeumaierSum;

pub const NODATA: f64 = -9999.0;
pub const CELL_SIZE: f64 = 0.01;
const ORIGIN_LON: f64 = 10.005;
const ORIGIN_LAT: f64 = 20.005;
/// Maximum point offset from its cell centre, in cells.
const JITTER: f64 = 0.3;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SyntheticSpec {
    pub n_countries: usize,
    pub cells_per_country: usize,
    /// Country means are spread evenly over `[mean_min, mean_max]`.
    pub mean_min: f64,
    pub mean_max: f64,
    /// Log-scale spread of cell values around the country mean; 0 makes
    /// every country internally constant.
    pub dispersion: f64,
    pub population_min: f64,
    pub population_max: f64,
    /// Probability that an eligible cell is planted as NODATA.
    pub missing_fraction: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_countries: 2,
            cells_per_country: 400,
            mean_min: 10.0,
            mean_max: 30.0,
            dispersion: 0.0,
            population_min: 100.0,
            population_max: 100.0,
            missing_fraction: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid synthetic spec: {0}")]
pub struct SpecError(String);

impl SyntheticSpec {
    fn validate(&self) -> Result<(), SpecError> {
        let fail = |m: &str| Err(SpecError(m.to_owned()));
        if self.n_countries == 0 || self.cells_per_country == 0 {
            return fail("n_countries and cells_per_country must be positive");
        }
        if !(self.mean_min > 0.0 && self.mean_max >= self.mean_min && self.mean_max.is_finite()) {
            return fail("need 0 < mean_min <= mean_max");
        }
        if !(self.dispersion >= 0.0 && self.dispersion.is_finite()) {
            return fail("dispersion must be finite and non-negative");
        }
        if !(self.population_min > 0.0
            && self.population_max >= self.population_min
            && self.population_max.is_finite())
        {
            return fail("need 0 < population_min <= population_max");
        }
        if !(0.0..=1.0).contains(&self.missing_fraction) {
            return fail("missing_fraction must lie in [0, 1]");
        }
        Ok(())
    }

    fn block_size(&self) -> (usize, usize) {
        let width = (self.cells_per_country as f64).sqrt().ceil() as usize;
        let height = self.cells_per_country.div_ceil(width);
        (width, height)
    }

    fn nominal_mean(&self, k: usize) -> f64 {
        if self.n_countries == 1 {
            self.mean_min
        } else {
            self.mean_min
                + (self.mean_max - self.mean_min) * k as f64 / (self.n_countries - 1) as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CountryExpectation {
    pub country: String,
    pub nominal_mean: f64,
    pub population: f64,
}

/// What the fixture was built to produce.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Expectation {
    pub seed: u64,
    pub spec: SyntheticSpec,
    pub countries: Vec<CountryExpectation>,
    pub planted_missing: usize,
    /// Closed-form Theil components; only defined when dispersion is 0.
    pub expected_within_theil: Option<f64>,
    pub expected_between_theil: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct SyntheticFixture {
    pub population: ExposureTable,
    pub grid: RasterGrid,
    pub planted: Vec<(usize, usize)>,
    pub expectation: Expectation,
}

pub fn gen_synthetic(seed: u64, spec: &SyntheticSpec) -> Result<SyntheticFixture, SpecError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (width, height) = spec.block_size();
    let n_cols = spec.n_countries * (width + 1) + 1;
    let n_rows = height + 2;
    let mut values = vec![NODATA; n_cols * n_rows];
    let mut planted = Vec::new();

    for k in 0..spec.n_countries {
        let mean = spec.nominal_mean(k);
        let col0 = 1 + k * (width + 1);
        for r in 0..height {
            for c in 0..width {
                let (col, row) = (col0 + c, 1 + r);
                let z: f64 = StandardNormal.sample(&mut rng);
                let d = spec.dispersion;
                let v = if d == 0.0 {
                    mean
                } else {
                    mean * (d * z - 0.5 * d * d).exp()
                };
                let eligible = c % 2 == 1 && r % 2 == 1;
                let plant = rng.random::<f64>() < spec.missing_fraction;
                if eligible && plant {
                    planted.push((col, row));
                } else {
                    values[row * n_cols + col] = v;
                }
            }
        }
    }
    let grid = RasterGrid::new(
        ORIGIN_LON, ORIGIN_LAT, CELL_SIZE, n_cols, n_rows, values, NODATA,
    )
    .expect("generated grid is valid");

    let mut cells = Vec::with_capacity(spec.n_countries * spec.cells_per_country);
    let mut countries = Vec::with_capacity(spec.n_countries);
    for k in 0..spec.n_countries {
        let name = format!("C{k:02}");
        let col0 = 1 + k * (width + 1);
        let mut pop = NeumaierSum::new();
        for j in 0..spec.cells_per_country {
            let (col, row) = (col0 + j % width, 1 + j / width);
            let (lon, lat) = grid.cell_center(col, row);
            let dx = rng.random_range(-JITTER..JITTER) * CELL_SIZE;
            let dy = rng.random_range(-JITTER..JITTER) * CELL_SIZE;
            let population = if spec.population_max > spec.population_min {
                rng.random_range(spec.population_min..spec.population_max)
            } else {
                spec.population_min
            };
            pop.add(population);
            cells.push(CellRecord {
                lon: lon + dx,
                lat: lat + dy,
                population,
                country: CountryId(k as u32),
                exposure: None,
            });
        }
        countries.push(CountryExpectation {
            country: name,
            nominal_mean: spec.nominal_mean(k),
            population: pop.value(),
        });
    }
    let names = countries.iter().map(|c| c.country.clone()).collect();
    let population =
        ExposureTable::new("synthetic", names, cells).expect("generated cells are valid");

    let (within, between) = if spec.dispersion == 0.0 {
        (Some(0.0), Some(closed_form_between_theil(&countries)))
    } else {
        (None, None)
    };
    let planted_missing = planted.len();
    Ok(SyntheticFixture {
        population,
        grid,
        planted,
        expectation: Expectation {
            seed,
            spec: spec.clone(),
            countries,
            planted_missing,
            expected_within_theil: within,
            expected_between_theil: between,
        },
    })
}

/// Theil index of the group means weighted by group population.
fn closed_form_between_theil(countries: &[CountryExpectation]) -> f64 {
    let n: f64 = countries.iter().map(|c| c.population).sum();
    let mu: f64 = countries
        .iter()
        .map(|c| c.population * c.nominal_mean)
        .sum::<f64>()
        / n;
    countries
        .iter()
        .map(|c| c.population / n * (c.nominal_mean / mu) * (c.nominal_mean / mu).ln())
        .sum()
}

pub const POPULATION_FILE: &str = "population.csv";
pub const POLLUTION_FILE: &str = "pollution.asc";
pub const EXPECTED_FILE: &str = "expected.json";
pub const CONFIG_FILE: &str = "config.json";

impl SyntheticFixture {
    /// Writes the population CSV, the ASCII grid, the expectation and a
    /// ready-to-run config into `dir`.
    pub fn write_to(&self, dir: &Path) -> io::Result<()> {
        fs::create_dir_all(dir)?;
        write_cell_csv(
            &self.population,
            BufWriter::new(fs::File::create(dir.join(POPULATION_FILE))?),
        )?;
        write_ascii_grid(
            &self.grid,
            BufWriter::new(fs::File::create(dir.join(POLLUTION_FILE))?),
        )?;
        let mut expected = serde_json::to_string_pretty(&self.expectation)?;
        expected.push('\n');
        fs::write(dir.join(EXPECTED_FILE), expected)?;

        let year = self.population.year();
        let total: f64 = self
            .expectation
            .countries
            .iter()
            .map(|c| c.population)
            .sum();
        let config = serde_json::json!({
            "years": [year],
            "population_inputs": { year: POPULATION_FILE },
            "pollution_inputs": { year: POLLUTION_FILE },
            "min_country_population": 0.0,
            "poverty_target": (total / 2.0).max(f64::MIN_POSITIVE),
            "output_dir": "out",
        });
        let mut config = serde_json::to_string_pretty(&config)?;
        config.push('\n');
        fs::write(dir.join(CONFIG_FILE), config)
    }
}
