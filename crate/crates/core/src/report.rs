//! Rendering of report artifacts and the hashed manifest.
//!
//! Floats are written with Rust's shortest round-trip formatting, so an
//! artifact is a pure function of the values it reports. The poverty table
//! alone rounds, mirroring the published layout: populations to 0.1 million
//! and shares to whole percent.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::grid::ExposureTable;
use crate::inequality::{DecompositionResult, IndexKind, IndexSet};
use crate::ingest::{self, FilterReport};
use crate::join::MatchReport;
use crate::poverty::PovertyReport;
use crate::stats::{DensityCurve, DistributionSummary, GroupSummary};

pub const MANIFEST_FILE: &str = "manifest.json";

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Threshold labels such as `5` or `2.5` for column names.
fn threshold_label(t: f64) -> String {
    t.to_string()
}

pub fn summary_csv(rows: &[(&str, &DistributionSummary)]) -> String {
    let mut out = String::from("year,mean,p10,p90,r9010");
    let thresholds: Vec<f64> = rows
        .first()
        .map(|(_, s)| s.exceedance.iter().map(|e| e.threshold).collect())
        .unwrap_or_default();
    for &t in &thresholds {
        let _ = write!(out, ",share_over_{}", threshold_label(t));
    }
    out.push('\n');
    for (year, s) in rows {
        let _ = write!(
            out,
            "{year},{},{},{},{}",
            s.mean,
            s.p10,
            s.p90,
            opt(s.r9010)
        );
        for &t in &thresholds {
            let _ = write!(out, ",{}", opt(s.share_over(t)));
        }
        out.push('\n');
    }
    out
}

pub fn indices_csv(rows: &[(&str, &IndexSet)]) -> String {
    let mut out = String::from("year,gini,mld,theil,half_cv2\n");
    for (year, i) in rows {
        let _ = writeln!(
            out,
            "{year},{},{},{},{}",
            i.gini, i.mld, i.theil, i.half_cv2
        );
    }
    out
}

/// Table layout with `total`, `between` and `within` rows per year; mean and
/// R9010 appear on the total row only.
pub fn decomposition_csv(
    rows: &[(&str, Option<&DistributionSummary>, &[DecompositionResult])],
) -> String {
    let mut out = String::from("year,row,mean,r9010,gini,mld,theil,half_cv2\n");
    for (year, summary, decomps) in rows {
        let pick = |kind: IndexKind, f: &dyn Fn(&DecompositionResult) -> f64| {
            decomps.iter().find(|d| d.kind == kind).map(f)
        };
        let line = |label: &str, f: &dyn Fn(&DecompositionResult) -> f64, with_summary: bool| {
            let (mean, r9010) = match (with_summary, summary) {
                (true, Some(s)) => (s.mean.to_string(), opt(s.r9010)),
                _ => (String::new(), String::new()),
            };
            let cols: Vec<String> = IndexKind::ALL.iter().map(|&k| opt(pick(k, f))).collect();
            format!("{year},{label},{mean},{r9010},{}\n", cols.join(","))
        };
        out.push_str(&line("total", &|d| d.total, true));
        out.push_str(&line("between", &|d| d.between, false));
        out.push_str(&line("within", &|d| d.within, false));
    }
    out
}

#[derive(Serialize)]
struct YearDecompositions<'a> {
    year: &'a str,
    decompositions: &'a [DecompositionResult],
}

pub fn decomposition_json(rows: &[(&str, &[DecompositionResult])]) -> String {
    let body: Vec<YearDecompositions<'_>> = rows
        .iter()
        .map(|(year, decompositions)| YearDecompositions {
            year,
            decompositions,
        })
        .collect();
    let mut s = serde_json::to_string_pretty(&body).expect("serializable");
    s.push('\n');
    s
}

pub fn countries_csv(rows: &[GroupSummary]) -> String {
    let mut out = String::from("country,population,mean,gini\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            r.country,
            r.population,
            r.mean,
            opt(r.gini)
        );
    }
    out
}

/// Per-country tail breakdown: `country,choking_millions,choking_pct,coverage_pct,total_pop_millions`.
pub fn poverty_csv(report: &PovertyReport) -> String {
    let mut out =
        String::from("country,choking_millions,choking_pct,coverage_pct,total_pop_millions\n");
    for r in &report.rows {
        let coverage = r
            .coverage
            .map(|c| format!("{:.0}", c * 100.0))
            .unwrap_or_default();
        let total = r
            .total_population
            .map(|t| format!("{:.1}", t / 1e6))
            .unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{:.1},{:.0},{},{}",
            r.country,
            r.exposed_population / 1e6,
            r.exposed_share_of_country * 100.0,
            coverage,
            total
        );
    }
    out
}

pub fn poverty_summary_csv(rows: &[(&str, &PovertyReport)]) -> String {
    let mut out = String::from("year,target_population,threshold,achieved_population\n");
    for (year, r) in rows {
        let _ = writeln!(
            out,
            "{year},{},{},{}",
            opt(r.target_population),
            r.threshold,
            r.achieved_population
        );
    }
    out
}

/// Matched cells with a 0/1 flag for exposure at or above `threshold`.
pub fn poverty_cells_csv(table: &ExposureTable, threshold: f64) -> String {
    let mut out = String::from("lon,lat,population,country,pm25,above_threshold\n");
    for c in table.cells() {
        let Some(p) = c.exposure else { continue };
        let flag = u8::from(p >= threshold);
        let _ = writeln!(
            out,
            "{},{},{},{},{},{flag}",
            c.lon,
            c.lat,
            c.population,
            table.country_name(c.country),
            p
        );
    }
    out
}

pub fn kde_csv(curve: &DensityCurve) -> String {
    let mut out = String::from("pm25,density\n");
    for (x, y) in curve.abscissae.iter().zip(&curve.densities) {
        let _ = writeln!(out, "{x},{y}");
    }
    out
}

pub fn match_csv(rows: &[(&str, &MatchReport)]) -> String {
    let mut out = String::from(
        "year,matched_direct,matched_fallback,unmatched_dropped,population_matched_fraction\n",
    );
    for (year, m) in rows {
        let _ = writeln!(
            out,
            "{year},{},{},{},{}",
            m.matched_direct,
            m.matched_fallback,
            m.unmatched_dropped,
            m.population_matched_fraction
        );
    }
    out
}

pub fn filter_csv(rows: &[(&str, &FilterReport)]) -> String {
    let mut out = String::from(
        "year,cells_dropped_low_population,countries_dropped_small,population_retained_fraction\n",
    );
    for (year, f) in rows {
        let _ = writeln!(
            out,
            "{year},{},{},{}",
            f.cells_dropped_low_population,
            f.countries_dropped_small.join(";"),
            f.population_retained_fraction
        );
    }
    out
}

pub fn cells_csv(table: &ExposureTable) -> Vec<u8> {
    let mut buf = Vec::new();
    ingest::write_cell_csv(table, &mut buf).expect("writing to a Vec cannot fail");
    buf
}

/// One output file held in memory until the whole bundle is ready.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub name: String,
    pub contents: Vec<u8>,
}

impl Artifact {
    pub fn new(name: impl Into<String>, contents: impl Into<Vec<u8>>) -> Self {
        Self {
            name: name.into(),
            contents: contents.into(),
        }
    }

    pub fn sha256(&self) -> String {
        hex::encode(Sha256::digest(&self.contents))
    }
}

#[derive(Debug, Serialize)]
struct ManifestEntry {
    path: String,
    bytes: usize,
    sha256: String,
}

#[derive(Debug, Serialize)]
struct Manifest<P: Serialize> {
    tool: &'static str,
    version: &'static str,
    parameters: P,
    artifacts: Vec<ManifestEntry>,
}

/// Renders the manifest listing every artifact, sorted by name.
pub fn manifest_json<P: Serialize>(artifacts: &[Artifact], parameters: &P) -> String {
    let mut entries: Vec<ManifestEntry> = artifacts
        .iter()
        .map(|a| ManifestEntry {
            path: a.name.clone(),
            bytes: a.contents.len(),
            sha256: a.sha256(),
        })
        .collect();
    entries.sort_by(|a, b| a.path.cmp(&b.path));
    let manifest = Manifest {
        tool: "airq",
        version: env!("CARGO_PKG_VERSION"),
        parameters,
        artifacts: entries,
    };
    let mut s = serde_json::to_string_pretty(&manifest).expect("serializable");
    s.push('\n');
    s
}

/// Writes every artifact and the manifest into `dir`.
pub fn write_bundle<P: Serialize>(
    dir: &Path,
    artifacts: &[Artifact],
    parameters: &P,
) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    for a in artifacts {
        fs::write(dir.join(&a.name), &a.contents)?;
    }
    fs::write(
        dir.join(MANIFEST_FILE),
        manifest_json(artifacts, parameters),
    )
}
