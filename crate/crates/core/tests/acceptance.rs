//! Acceptance checks, one PASS/FAIL line per criterion.
//!
//! Every oracle below is written from the textbook definition and shares no
//! code with the library beyond input construction.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use airq_core::inequality::{decompose_ge, decompose_gini, ge, gini, GeAlpha, GroupedDistribution};
use airq_core::join::{assign_exposure, match_point, MatchKind};
use airq_core::pipeline::{run_pipeline, RunConfig};
use airq_core::poverty::poverty_threshold;
use airq_core::stats::{weighted_kde, weighted_quantile};
use airq_core::synthetic::{gen_synthetic, SyntheticSpec, CONFIG_FILE};
use airq_core::{CellRecord, CountryId, ExposureTable, RasterGrid, WeightedDistribution};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Check = fn() -> Outcome;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn dist(values: Vec<f64>, weights: Vec<f64>) -> WeightedDistribution {
    WeightedDistribution::new(values, weights).expect("valid distribution")
}

/// Values in (0, 100], weights in (0, 10].
fn random_sample(r: &mut ChaCha8Rng, max_n: usize) -> (Vec<f64>, Vec<f64>) {
    let n = r.random_range(2..=max_n);
    let values = (0..n).map(|_| 100.0 - r.random_range(0.0..100.0)).collect();
    let weights = (0..n).map(|_| 10.0 - r.random_range(0.0..10.0)).collect();
    (values, weights)
}

/// Weights that are multiples of 1/16 in (0, 10]: every partial sum of a few
/// thousand of them is exact, so oracles can be compared bit for bit.
fn dyadic_weight(r: &mut ChaCha8Rng) -> f64 {
    r.random_range(1..=160) as f64 / 16.0
}

fn rel_err(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

// ---------------------------------------------------------------------------
// oracles

/// Half the weighted mean absolute pairwise difference over the mean.
fn pairwise_gini(values: &[f64], weights: &[f64]) -> f64 {
    let n: f64 = weights.iter().sum();
    let mean = values.iter().zip(weights).map(|(v, w)| v * w).sum::<f64>() / n;
    let mut acc = 0.0;
    for (xi, wi) in values.iter().zip(weights) {
        for (xj, wj) in values.iter().zip(weights) {
            acc += wi * wj * (xi - xj).abs();
        }
    }
    acc / (2.0 * n * n * mean)
}

/// Smallest value whose cumulative sorted weight reaches `q` of the total.
fn scan_quantile(values: &[f64], weights: &[f64], q: f64) -> f64 {
    let mut pairs: Vec<(f64, f64)> = values
        .iter()
        .copied()
        .zip(weights.iter().copied())
        .collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let total: f64 = weights.iter().sum();
    let mut cum = 0.0;
    for (v, w) in &pairs {
        cum += w;
        if cum >= q * total {
            return *v;
        }
    }
    pairs.last().unwrap().0
}

/// Scans distinct values from the top and returns the first at which the
/// tail weight reaches `target`.
fn scan_threshold(values: &[f64], weights: &[f64], target: f64) -> f64 {
    let mut by_value: BTreeMap<u64, f64> = BTreeMap::new();
    for (v, w) in values.iter().zip(weights) {
        // positive floats order like their bit patterns
        *by_value.entry(v.to_bits()).or_insert(0.0) += w;
    }
    let mut tail = 0.0;
    for (bits, w) in by_value.iter().rev() {
        tail += w;
        if tail >= target {
            return f64::from_bits(*bits);
        }
    }
    f64::from_bits(*by_value.keys().next().unwrap())
}

fn tail_weight(values: &[f64], weights: &[f64], at_least: f64) -> f64 {
    values
        .iter()
        .zip(weights)
        .filter(|(v, _)| **v >= at_least)
        .map(|(_, w)| w)
        .sum()
}

// ---------------------------------------------------------------------------
// criteria

fn gini_oracle() -> Outcome {
    let mut r = rng(1);
    let start = Instant::now();
    let mut worst = 0.0f64;
    for i in 0..1000 {
        let (values, weights) = random_sample(&mut r, 200);
        let oracle = pairwise_gini(&values, &weights);
        let got = gini(&dist(values, weights)).map_err(|e| format!("sample {i}: {e}"))?;
        let e = rel_err(got, oracle);
        worst = worst.max(e);
        if e > 1e-10 {
            return Err(format!(
                "sample {i}: sorted {got} vs pairwise {oracle} (rel {e:.2e})"
            ));
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    if elapsed >= 10.0 {
        return Err(format!("took {elapsed:.2}s"));
    }
    Ok(format!(
        "1000 samples, worst rel err {worst:.2e}, {elapsed:.2}s"
    ))
}

fn random_grouping(r: &mut ChaCha8Rng, values: Vec<f64>, weights: Vec<f64>) -> GroupedDistribution {
    let k = r.random_range(1..=6usize);
    let group_of: Vec<usize> = (0..values.len()).map(|_| r.random_range(0..k)).collect();
    let labels = (0..k).map(|g| format!("G{g}")).collect();
    GroupedDistribution::new(dist(values, weights), group_of, labels).expect("valid grouping")
}

fn ge_identity() -> Outcome {
    let mut r = rng(2);
    let mut worst = 0.0f64;
    for i in 0..500 {
        let (values, weights) = random_sample(&mut r, 200);
        let g = random_grouping(&mut r, values, weights);
        for alpha in GeAlpha::ALL {
            let d = decompose_ge(&g, alpha).map_err(|e| format!("sample {i}: {e}"))?;
            let gap = (d.total - d.between - d.within).abs();
            let bound = 1e-10 * d.total.max(1.0);
            worst = worst.max(gap / d.total.max(1.0));
            if gap > bound {
                return Err(format!(
                    "sample {i}, alpha {}: total {} between {} within {}",
                    alpha.value(),
                    d.total,
                    d.between,
                    d.within
                ));
            }
        }
    }
    Ok(format!(
        "500 samples x 3 alphas, worst scaled gap {worst:.2e}"
    ))
}

fn gini_decomposition() -> Outcome {
    let mut r = rng(3);
    let mut worst_disjoint = 0.0f64;
    for i in 0..100 {
        // group g draws from (20g, 20g + 20]
        let k = r.random_range(2..=5usize);
        let n = r.random_range(k..=200);
        let group_of: Vec<usize> = (0..n)
            .map(|j| if j < k { j } else { r.random_range(0..k) })
            .collect();
        let values = group_of
            .iter()
            .map(|&g| 20.0 * g as f64 + 20.0 - r.random_range(0.0..20.0))
            .collect();
        let weights = (0..n).map(|_| 10.0 - r.random_range(0.0..10.0)).collect();
        let labels = (0..k).map(|g| format!("G{g}")).collect();
        let g = GroupedDistribution::new(dist(values, weights), group_of, labels)
            .expect("valid grouping");
        let d = decompose_gini(&g).map_err(|e| format!("disjoint {i}: {e}"))?;
        worst_disjoint = worst_disjoint.max(d.residual.abs());
        if d.residual.abs() > 1e-10 {
            return Err(format!("disjoint grouping {i}: residual {}", d.residual));
        }
    }
    let mut min_residual = f64::INFINITY;
    for i in 0..500 {
        let (values, weights) = random_sample(&mut r, 200);
        let g = random_grouping(&mut r, values, weights);
        let d = decompose_gini(&g).map_err(|e| format!("overlap {i}: {e}"))?;
        min_residual = min_residual.min(d.residual);
        if d.residual < -1e-10 {
            return Err(format!("overlapping grouping {i}: residual {}", d.residual));
        }
    }
    Ok(format!(
        "disjoint |residual| <= {worst_disjoint:.2e}; min overlapping residual {min_residual:.2e}"
    ))
}

/// Gini, MLD, Theil, half CV² and R9010.
fn five_indices(d: &WeightedDistribution) -> Result<[f64; 5], String> {
    let e = |e: airq_core::DomainError| e.to_string();
    Ok([
        gini(d).map_err(e)?,
        ge(d, GeAlpha::Zero).map_err(e)?,
        ge(d, GeAlpha::One).map_err(e)?,
        ge(d, GeAlpha::Two).map_err(e)?,
        weighted_quantile(d, 0.9).map_err(e)? / weighted_quantile(d, 0.1).map_err(e)?,
    ])
}

fn invariance() -> Outcome {
    const NAMES: [&str; 5] = ["gini", "mld", "theil", "half_cv2", "r9010"];
    let mut r = rng(4);
    let mut worst = 0.0f64;
    for i in 0..200 {
        let (values, weights) = random_sample(&mut r, 200);
        let base = five_indices(&dist(values.clone(), weights.clone()))?;
        let mut variants = Vec::new();
        for c in [0.1, 3.0, 1000.0] {
            variants.push((
                format!("scale {c}"),
                dist(values.iter().map(|v| c * v).collect(), weights.clone()),
            ));
        }
        for k in [2usize, 7] {
            let v = values
                .iter()
                .flat_map(|&v| std::iter::repeat_n(v, k))
                .collect();
            let w = weights
                .iter()
                .flat_map(|&w| std::iter::repeat_n(w / k as f64, k))
                .collect();
            variants.push((format!("split {k}"), dist(v, w)));
        }
        for (label, d) in variants {
            let got = five_indices(&d)?;
            for j in 0..5 {
                let e = rel_err(got[j], base[j]);
                worst = worst.max(e);
                if e > 1e-12 {
                    return Err(format!(
                        "sample {i}, {label}, {}: {} vs {} (rel {e:.2e})",
                        NAMES[j], got[j], base[j]
                    ));
                }
            }
        }
    }
    Ok(format!(
        "200 samples x 5 transforms, worst rel err {worst:.2e}"
    ))
}

fn threshold_finder() -> Outcome {
    let mut r = rng(5);
    for i in 0..200 {
        let n = r.random_range(1..=300usize);
        // a coarse value grid forces ties
        let levels = r.random_range(1..=n.max(2));
        let values: Vec<f64> = (0..n)
            .map(|_| 1.0 + r.random_range(0..levels) as f64 * 0.7)
            .collect();
        let weights: Vec<f64> = (0..n).map(|_| dyadic_weight(&mut r)).collect();
        let total: f64 = weights.iter().sum();
        let target = match i % 4 {
            0 => total,
            1 => weights[0],
            _ => r.random_range(1..=(total * 16.0) as u64) as f64 / 16.0,
        };
        let got = poverty_threshold(&dist(values.clone(), weights.clone()), target)
            .map_err(|e| format!("table {i}: {e}"))?;
        let oracle = scan_threshold(&values, &weights, target);
        if got.to_bits() != oracle.to_bits() {
            return Err(format!("table {i}: threshold {got} vs scan {oracle}"));
        }
        let achieved = tail_weight(&values, &weights, got);
        if achieved < target {
            return Err(format!("table {i}: tail {achieved} below target {target}"));
        }
        if let Some(next) = values.iter().copied().filter(|v| *v > got).reduce(f64::min) {
            let short = tail_weight(&values, &weights, next);
            if short >= target {
                return Err(format!(
                    "table {i}: next value {next} already reaches target ({short})"
                ));
            }
        }
    }
    Ok("200 tables match the descending scan bit for bit".into())
}

/// NODATA-free grid of quarter-integer values with planted missing cells.
fn planted_grid(r: &mut ChaCha8Rng, n_cols: usize, n_rows: usize, missing: f64) -> RasterGrid {
    let values = (0..n_cols * n_rows)
        .map(|_| {
            if r.random_bool(missing) {
                -9999.0
            } else {
                r.random_range(0..400) as f64 / 4.0
            }
        })
        .collect();
    RasterGrid::new(5.005, -3.005, 0.01, n_cols, n_rows, values, -9999.0).expect("valid grid")
}

fn hand_neighbor_mean(grid: &RasterGrid, col: usize, row: usize) -> Option<f64> {
    let mut sum = 0.0;
    let mut count = 0.0;
    for dr in -1i64..=1 {
        for dc in -1i64..=1 {
            let (c, r) = (col as i64 + dc, row as i64 + dr);
            if (dc, dr) == (0, 0)
                || c < 0
                || r < 0
                || c >= grid.n_cols as i64
                || r >= grid.n_rows as i64
            {
                continue;
            }
            if let Some(v) = grid.get(c as usize, r as usize) {
                sum += v;
                count += 1.0;
            }
        }
    }
    (count > 0.0).then(|| sum / count)
}

fn spatial_join() -> Outcome {
    let mut r = rng(6);
    let mut fallbacks = 0usize;
    for i in 0..50 {
        let (n_cols, n_rows) = (r.random_range(3..30), r.random_range(3..30));
        let missing = r.random_range(0.05..0.6);
        let grid = planted_grid(&mut r, n_cols, n_rows, missing);
        let mut cells = Vec::new();
        for row in 0..n_rows {
            for col in 0..n_cols {
                let (lon, lat) = grid.cell_center(col, row);
                let (dx, dy) = (r.random_range(-0.004..0.004), r.random_range(-0.004..0.004));
                cells.push(CellRecord {
                    lon: lon + dx,
                    lat: lat + dy,
                    population: dyadic_weight(&mut r),
                    country: CountryId(0),
                    exposure: None,
                });
                let (got, kind) = match_point(&grid, lon + dx, lat + dy, true);
                let expected = match grid.get(col, row) {
                    Some(v) => (Some(v), MatchKind::Direct),
                    None => match hand_neighbor_mean(&grid, col, row) {
                        Some(m) => (Some(m), MatchKind::Fallback),
                        None => (None, MatchKind::Unmatched),
                    },
                };
                if (got, kind) != expected {
                    return Err(format!(
                        "grid {i} cell ({col},{row}): {got:?}/{kind:?} vs {expected:?}"
                    ));
                }
            }
        }
        let table = ExposureTable::new("t", vec!["A".into()], cells).expect("valid table");
        let (_, with) = assign_exposure(&table, &grid, true);
        let (_, without) = assign_exposure(&table, &grid, false);
        fallbacks += with.matched_fallback;
        if without.matched_fallback != 0 {
            return Err(format!(
                "grid {i}: restricted mode reports {} fallbacks",
                without.matched_fallback
            ));
        }
        if with.matched_fallback > 0 && without.matched() >= with.matched() {
            return Err(format!(
                "grid {i}: restricted {} vs default {}",
                without.matched(),
                with.matched()
            ));
        }
        if without.matched() > with.matched() {
            return Err(format!("grid {i}: restricted mode matched more cells"));
        }
    }
    Ok(format!(
        "50 grids, {fallbacks} fallback cells equal hand-computed means"
    ))
}

fn kde_normalization() -> Outcome {
    let mut r = rng(7);
    let mut worst = 0.0f64;
    for i in 0..100 {
        let h = r.random_range(0.5..8.0);
        let n = r.random_range(1..=300);
        let values: Vec<f64> = (0..n)
            .map(|_| r.random_range(3.0 * h..150.0 - 3.0 * h))
            .collect();
        let weights: Vec<f64> = (0..n).map(|_| 10.0 - r.random_range(0.0..10.0)).collect();
        let curve = weighted_kde(&dist(values, weights), h, 150.0, 512)
            .map_err(|e| format!("sample {i}: {e}"))?;
        let integral = curve.trapezoid_integral();
        worst = worst.max((integral - 1.0).abs());
        if (integral - 1.0).abs() > 1e-3 {
            return Err(format!("sample {i}, h {h}: integral {integral}"));
        }
    }
    let mut worst_peak = 0.0f64;
    for (k, h) in [(100usize, 1.0), (255, 5.0), (400, 2.5)] {
        let x = 150.0 * k as f64 / 511.0;
        let curve =
            weighted_kde(&dist(vec![x], vec![3.0]), h, 150.0, 512).map_err(|e| e.to_string())?;
        let peak = curve.densities.iter().copied().fold(f64::MIN, f64::max);
        let expected = 1.0 / (h * (2.0 * std::f64::consts::PI).sqrt());
        worst_peak = worst_peak.max((peak - expected).abs());
        if (peak - expected).abs() > 1e-9 {
            return Err(format!(
                "single point at {x}, h {h}: peak {peak} vs {expected}"
            ));
        }
    }
    Ok(format!(
        "worst |integral - 1| {worst:.2e}; worst peak error {worst_peak:.2e}"
    ))
}

/// Theil between-component of two equal-population groups at means 10 and
/// 30, computed offline before the build: 0.25 ln 0.5 + 0.75 ln 1.5.
const CLOSED_FORM_BETWEEN_THEIL: f64 = 0.13081203594113697;

fn read_dir_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .expect("output dir")
        .map(|e| {
            let e = e.expect("dir entry");
            (
                e.file_name().to_string_lossy().into_owned(),
                std::fs::read(e.path()).expect("artifact"),
            )
        })
        .collect()
}

fn synthetic_end_to_end() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let spec = SyntheticSpec {
        n_countries: 2,
        mean_min: 10.0,
        mean_max: 30.0,
        dispersion: 0.0,
        ..SyntheticSpec::default()
    };
    let fixture = gen_synthetic(1, &spec).map_err(|e| e.to_string())?;
    let pops: Vec<f64> = fixture
        .expectation
        .countries
        .iter()
        .map(|c| c.population)
        .collect();
    if pops[0] != pops[1] {
        return Err(format!("fixture populations differ: {pops:?}"));
    }
    fixture.write_to(tmp.path()).map_err(|e| e.to_string())?;

    let mut bundles = Vec::new();
    for run in ["a", "b"] {
        let mut config =
            RunConfig::from_json_file(&tmp.path().join(CONFIG_FILE)).map_err(|e| e.to_string())?;
        config.output_dir = tmp.path().join(run);
        run_pipeline(&config).map_err(|e| e.to_string())?;
        bundles.push(read_dir_bytes(&config.output_dir));
    }
    let json: serde_json::Value =
        serde_json::from_slice(&bundles[0]["decomposition.json"]).map_err(|e| e.to_string())?;
    let theil = json[0]["decompositions"]
        .as_array()
        .and_then(|ds| ds.iter().find(|d| d["index_name"] == "theil"))
        .ok_or("no theil decomposition in bundle")?;
    let between = theil["between"].as_f64().ok_or("between missing")?;
    let within = theil["within"].as_f64().ok_or("within missing")?;
    if (between - CLOSED_FORM_BETWEEN_THEIL).abs() > 1e-9 {
        return Err(format!(
            "between-Theil {between} vs closed form {CLOSED_FORM_BETWEEN_THEIL}"
        ));
    }
    if within.abs() > 1e-9 {
        return Err(format!("within-Theil {within}"));
    }
    if bundles[0] != bundles[1] {
        return Err("rerun produced a different bundle".into());
    }
    Ok(format!(
        "between {between}, within {within}, {} artifacts byte-identical on rerun",
        bundles[0].len()
    ))
}

fn quantile_contract() -> Outcome {
    let mut r = rng(9);
    for i in 0..500 {
        let n = r.random_range(1..=300usize);
        let tied = i % 2 == 0;
        let values: Vec<f64> = (0..n)
            .map(|_| {
                if tied {
                    r.random_range(0..20) as f64
                } else {
                    100.0 - r.random_range(0.0..100.0)
                }
            })
            .collect();
        let weights: Vec<f64> = (0..n).map(|_| dyadic_weight(&mut r)).collect();
        let d = dist(values.clone(), weights.clone());
        for q in [0.1, 0.5, 0.9] {
            let got = weighted_quantile(&d, q).map_err(|e| e.to_string())?;
            let oracle = scan_quantile(&values, &weights, q);
            if got.to_bits() != oracle.to_bits() {
                return Err(format!("sample {i}, q {q}: {got} vs scan {oracle}"));
            }
        }
    }
    Ok("500 samples x 3 quantiles match the cumulative scan bit for bit".into())
}

fn main() -> ExitCode {
    let criteria: [(u8, &str, Check); 9] = [
        (1, "Gini oracle equivalence", gini_oracle),
        (2, "GE decomposition identity", ge_identity),
        (3, "Gini decomposition residual", gini_decomposition),
        (4, "scale and replication invariance", invariance),
        (5, "threshold finder", threshold_finder),
        (6, "spatial join fallback", spatial_join),
        (7, "KDE normalization", kde_normalization),
        (8, "synthetic end-to-end", synthetic_end_to_end),
        (9, "quantile contract", quantile_contract),
    ];
    let mut failed = 0;
    for (id, name, check) in criteria {
        match check() {
            Ok(detail) => println!("criterion {id} PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("criterion {id} FAIL  {name}: {detail}");
            }
        }
    }
    println!("criterion 10 SKIP  full-scale integration: needs the real gridded inputs");
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} acceptance criteria failed");
        ExitCode::FAILURE
    }
}
