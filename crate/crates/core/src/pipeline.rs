//! End-to-end runs: read, filter, match, then compute every statistic for
//! each configured year and render the report bundle.
//!
//! All results are computed before anything is written, so a failing run
//! leaves no partial output behind.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::DomainError;
use crate::grid::{build_distribution, ExposureTable, RasterGrid};
use crate::inequality::{self, DecompositionResult, GroupedDistribution, IndexKind, IndexSet};
use crate::ingest::{self, FilterReport, IngestError, SampleFilter};
use crate::join::{self, MatchReport};
use crate::poverty::{self, PovertyReport};
use crate::report::{self, Artifact};
use crate::stats::{self, DensityCurve, DistributionSummary, GroupSummary, SortedDistribution};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Data {
        path: PathBuf,
        #[source]
        source: IngestError,
    },
    #[error("year {year}: {source}")]
    Domain {
        year: String,
        #[source]
        source: DomainError,
    },
}

impl PipelineError {
    /// 1 I/O, 2 configuration, 3 data validation, 4 domain error.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Io { .. } => 1,
            PipelineError::Data {
                source: IngestError::Io(_),
                ..
            } => 1,
            PipelineError::Config(_) => 2,
            PipelineError::Data { .. } => 3,
            PipelineError::Domain { .. } => 4,
        }
    }

    fn domain(year: &str) -> impl FnOnce(DomainError) -> Self + '_ {
        move |source| PipelineError::Domain {
            year: year.to_owned(),
            source,
        }
    }
}

fn default_true() -> bool {
    true
}
fn default_min_cell() -> f64 {
    ingest::DEFAULT_MIN_CELL_POPULATION
}
fn default_min_country() -> f64 {
    ingest::DEFAULT_MIN_COUNTRY_POPULATION
}
fn default_thresholds() -> Vec<f64> {
    stats::DEFAULT_THRESHOLDS.to_vec()
}
fn default_target() -> f64 {
    poverty::DEFAULT_POVERTY_TARGET
}
fn default_truncation() -> f64 {
    stats::DEFAULT_KDE_TRUNCATION
}
fn default_points() -> usize {
    stats::DEFAULT_KDE_POINTS
}
fn default_output() -> PathBuf {
    PathBuf::from("airq-out")
}

/// A flat JSON run description. Relative input paths resolve against the
/// config file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub years: Vec<String>,
    #[serde(default)]
    pub population_inputs: BTreeMap<String, PathBuf>,
    #[serde(default)]
    pub pollution_inputs: BTreeMap<String, PathBuf>,
    #[serde(default = "default_true")]
    pub fallback_enabled: bool,
    #[serde(default = "default_min_cell")]
    pub min_cell_population: f64,
    #[serde(default = "default_min_country")]
    pub min_country_population: f64,
    /// Year whose country totals drive the country filter for every year.
    #[serde(default)]
    pub reference_year: Option<String>,
    #[serde(default = "default_thresholds")]
    pub thresholds: Vec<f64>,
    #[serde(default = "default_target")]
    pub poverty_target: f64,
    /// Overrides the Silverman bandwidth.
    #[serde(default)]
    pub kde_bandwidth: Option<f64>,
    #[serde(default = "default_truncation")]
    pub kde_truncation_max: f64,
    #[serde(default = "default_points")]
    pub kde_points: usize,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

impl RunConfig {
    pub fn from_json_str(text: &str) -> Result<Self, PipelineError> {
        serde_json::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))
    }

    /// Loads a config file, resolving relative input paths against its
    /// directory.
    pub fn from_json_file(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|source| PipelineError::Io {
            path: path.to_owned(),
            source,
        })?;
        let mut config = Self::from_json_str(&text)?;
        if let Some(base) = path.parent() {
            config.resolve_inputs(base);
        }
        Ok(config)
    }

    pub fn resolve_inputs(&mut self, base: &Path) {
        for p in self
            .population_inputs
            .values_mut()
            .chain(self.pollution_inputs.values_mut())
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let fail = |m: String| Err(PipelineError::Config(m));
        if self.years.is_empty() {
            return fail("no years configured".into());
        }
        let mut seen = std::collections::HashSet::new();
        for year in &self.years {
            if year.is_empty()
                || !year
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c))
            {
                return fail(format!(
                    "year label {year:?} must be non-empty [A-Za-z0-9._-]"
                ));
            }
            if !seen.insert(year) {
                return fail(format!("year {year} listed twice"));
            }
            if !self.population_inputs.contains_key(year) {
                return fail(format!("year {year} has no population input"));
            }
            if !self.pollution_inputs.contains_key(year) {
                return fail(format!("year {year} has no pollution input"));
            }
        }
        if let Some(r) = &self.reference_year {
            if !self.population_inputs.contains_key(r) {
                return fail(format!("reference year {r} has no population input"));
            }
        }
        if !(self.poverty_target > 0.0 && self.poverty_target.is_finite()) {
            return fail(format!(
                "poverty_target must be positive, got {}",
                self.poverty_target
            ));
        }
        if !(self.min_cell_population >= 0.0 && self.min_country_population >= 0.0) {
            return fail("population thresholds must be non-negative".into());
        }
        if self.thresholds.iter().any(|t| !t.is_finite()) {
            return fail("exceedance thresholds must be finite".into());
        }
        if let Some(h) = self.kde_bandwidth {
            if !(h > 0.0 && h.is_finite()) {
                return fail(format!("kde_bandwidth must be positive, got {h}"));
            }
        }
        if !(self.kde_truncation_max > 0.0 && self.kde_truncation_max.is_finite()) {
            return fail("kde_truncation_max must be positive".into());
        }
        if self.kde_points < 2 {
            return fail("kde_points must be at least 2".into());
        }
        Ok(())
    }

    /// Validates the config and checks that every referenced input exists.
    pub fn preflight(&self) -> Result<(), PipelineError> {
        self.validate()?;
        let inputs = self
            .years
            .iter()
            .flat_map(|y| [&self.population_inputs[y], &self.pollution_inputs[y]])
            .chain(
                self.reference_year
                    .iter()
                    .map(|r| &self.population_inputs[r]),
            );
        for path in inputs {
            std::fs::metadata(path).map_err(|source| PipelineError::Io {
                path: path.clone(),
                source,
            })?;
        }
        Ok(())
    }

    /// Restricts the run to one year.
    pub fn select_year(&mut self, year: &str) -> Result<(), PipelineError> {
        if !self.years.iter().any(|y| y == year) {
            return Err(PipelineError::Config(format!(
                "year {year} is not configured"
            )));
        }
        self.years = vec![year.to_owned()];
        Ok(())
    }
}

/// Parameters echoed into the manifest (paths are left out so that bundles
/// from relocated inputs compare equal).
#[derive(Debug, Serialize)]
pub struct RunParameters<'a> {
    pub years: &'a [String],
    pub fallback_enabled: bool,
    pub min_cell_population: f64,
    pub min_country_population: f64,
    pub reference_year: Option<&'a str>,
    pub thresholds: &'a [f64],
    pub poverty_target: f64,
    /// Bandwidth actually used per year, when a density was estimated.
    pub kde_bandwidths: BTreeMap<String, f64>,
    pub kde_truncation_max: f64,
    pub kde_points: usize,
}

impl<'a> RunParameters<'a> {
    pub fn new(config: &'a RunConfig, kde_bandwidths: BTreeMap<String, f64>) -> Self {
        Self {
            years: &config.years,
            fallback_enabled: config.fallback_enabled,
            min_cell_population: config.min_cell_population,
            min_country_population: config.min_country_population,
            reference_year: config.reference_year.as_deref(),
            thresholds: &config.thresholds,
            poverty_target: config.poverty_target,
            kde_bandwidths,
            kde_truncation_max: config.kde_truncation_max,
            kde_points: config.kde_points,
        }
    }
}

fn open(path: &Path) -> Result<BufReader<File>, PipelineError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|source| PipelineError::Io {
            path: path.to_owned(),
            source,
        })
}

pub fn read_population(path: &Path, year: &str) -> Result<ExposureTable, PipelineError> {
    ingest::read_cell_csv(open(path)?, year).map_err(|source| PipelineError::Data {
        path: path.to_owned(),
        source,
    })
}

pub fn read_pollution(path: &Path) -> Result<RasterGrid, PipelineError> {
    ingest::read_ascii_grid(open(path)?).map_err(|source| PipelineError::Data {
        path: path.to_owned(),
        source,
    })
}

/// One year after filtering and matching.
#[derive(Debug, Clone)]
pub struct MatchedYear {
    pub year: String,
    pub table: ExposureTable,
    pub filter: FilterReport,
    pub matching: MatchReport,
    /// Per-country population of the unfiltered input; the coverage
    /// denominator.
    pub source_totals: HashMap<String, f64>,
}

/// Country totals of the reference year after the cell filter.
pub fn reference_totals(config: &RunConfig) -> Result<Option<HashMap<String, f64>>, PipelineError> {
    let Some(year) = &config.reference_year else {
        return Ok(None);
    };
    let table = read_population(&config.population_inputs[year], year)?;
    Ok(Some(ingest::reference_totals_after_cell_filter(
        &table,
        config.min_cell_population,
    )))
}

pub fn match_year(
    config: &RunConfig,
    year: &str,
    reference: Option<&HashMap<String, f64>>,
) -> Result<MatchedYear, PipelineError> {
    let raw = read_population(&config.population_inputs[year], year)?;
    let grid = read_pollution(&config.pollution_inputs[year])?;
    let (filtered, filter) = ingest::apply_sample_filters_with(
        &raw,
        &SampleFilter {
            min_cell_population: config.min_cell_population,
            min_country_population: config.min_country_population,
            reference_totals: reference,
        },
    );
    let (table, matching) = join::assign_exposure(&filtered, &grid, config.fallback_enabled);
    Ok(MatchedYear {
        year: year.to_owned(),
        source_totals: raw.country_totals_by_name(false),
        table,
        filter,
        matching,
    })
}

/// Matches every configured year, in config order.
pub fn match_all(config: &RunConfig) -> Result<Vec<MatchedYear>, PipelineError> {
    let reference = reference_totals(config)?;
    let results: Vec<Result<MatchedYear, PipelineError>> = config
        .years
        .par_iter()
        .map(|y| match_year(config, y, reference.as_ref()))
        .collect();
    results.into_iter().collect()
}

/// Every statistic of one matched year.
#[derive(Debug, Clone)]
pub struct YearReport {
    pub year: String,
    pub summary: DistributionSummary,
    pub indices: IndexSet,
    pub decompositions: Vec<DecompositionResult>,
    pub countries: Vec<GroupSummary>,
    pub poverty: PovertyReport,
    pub kde: DensityCurve,
}

pub fn analyze_year(
    config: &RunConfig,
    matched: &MatchedYear,
) -> Result<YearReport, PipelineError> {
    let year = matched.year.as_str();
    let err = || PipelineError::domain(year);
    let dist = build_distribution(&matched.table).map_err(err())?;
    let sorted = SortedDistribution::new(&dist);
    let summary = stats::summarize_sorted(&sorted, &config.thresholds);

    let grouped = GroupedDistribution::from_table(&matched.table).map_err(err())?;
    let decompositions = inequality::decompose_all(&grouped).map_err(err())?;
    let total = |kind: IndexKind| {
        decompositions
            .iter()
            .find(|d| d.kind == kind)
            .map(|d| d.total)
            .unwrap()
    };
    let indices = IndexSet {
        gini: total(IndexKind::Gini),
        mld: total(IndexKind::Ge(inequality::GeAlpha::Zero)),
        theil: total(IndexKind::Ge(inequality::GeAlpha::One)),
        half_cv2: total(IndexKind::Ge(inequality::GeAlpha::Two)),
    };
    let countries = stats::per_group_summary(&matched.table);
    let poverty = poverty::poverty_report(
        &matched.table,
        &sorted,
        config.poverty_target,
        &matched.source_totals,
    )
    .map_err(err())?;
    let h = bandwidth(config, &dist).map_err(err())?;
    let kde = stats::weighted_kde_sorted(&sorted, h, config.kde_truncation_max, config.kde_points)
        .map_err(err())?;
    Ok(YearReport {
        year: year.to_owned(),
        summary,
        indices,
        decompositions,
        countries,
        poverty,
        kde,
    })
}

/// Results of a full run.
#[derive(Debug, Clone)]
pub struct ReportBundle {
    pub matched: Vec<MatchedYear>,
    pub reports: Vec<YearReport>,
}

impl ReportBundle {
    /// Every output file of a full run except the manifest.
    pub fn artifacts(&self) -> Vec<Artifact> {
        let mut out = Vec::new();
        out.extend(match_artifacts(&self.matched));
        out.extend(analysis_artifacts(&self.matched, &self.reports));
        out
    }

    pub fn parameters<'a>(&'a self, config: &'a RunConfig) -> RunParameters<'a> {
        let bandwidths = self
            .reports
            .iter()
            .map(|r| (r.year.clone(), r.kde.bandwidth))
            .collect();
        RunParameters::new(config, bandwidths)
    }

    pub fn write(&self, config: &RunConfig) -> Result<(), PipelineError> {
        let dir = &config.output_dir;
        report::write_bundle(dir, &self.artifacts(), &self.parameters(config)).map_err(|source| {
            PipelineError::Io {
                path: dir.clone(),
                source,
            }
        })
    }
}

pub fn match_artifacts(matched: &[MatchedYear]) -> Vec<Artifact> {
    let mut out = vec![
        Artifact::new(
            "match.csv",
            report::match_csv(
                &matched
                    .iter()
                    .map(|m| (m.year.as_str(), &m.matching))
                    .collect::<Vec<_>>(),
            ),
        ),
        Artifact::new(
            "filter.csv",
            report::filter_csv(
                &matched
                    .iter()
                    .map(|m| (m.year.as_str(), &m.filter))
                    .collect::<Vec<_>>(),
            ),
        ),
    ];
    for m in matched {
        out.push(Artifact::new(
            format!("cells_{}.csv", m.year),
            report::cells_csv(&m.table),
        ));
    }
    out
}

pub fn analysis_artifacts(matched: &[MatchedYear], reports: &[YearReport]) -> Vec<Artifact> {
    let mut out = vec![
        Artifact::new(
            "summary.csv",
            report::summary_csv(
                &reports
                    .iter()
                    .map(|r| (r.year.as_str(), &r.summary))
                    .collect::<Vec<_>>(),
            ),
        ),
        Artifact::new(
            "indices.csv",
            report::indices_csv(
                &reports
                    .iter()
                    .map(|r| (r.year.as_str(), &r.indices))
                    .collect::<Vec<_>>(),
            ),
        ),
        Artifact::new(
            "decomposition.csv",
            report::decomposition_csv(
                &reports
                    .iter()
                    .map(|r| {
                        (
                            r.year.as_str(),
                            Some(&r.summary),
                            r.decompositions.as_slice(),
                        )
                    })
                    .collect::<Vec<_>>(),
            ),
        ),
        Artifact::new(
            "decomposition.json",
            report::decomposition_json(
                &reports
                    .iter()
                    .map(|r| (r.year.as_str(), r.decompositions.as_slice()))
                    .collect::<Vec<_>>(),
            ),
        ),
        Artifact::new(
            "poverty_summary.csv",
            report::poverty_summary_csv(
                &reports
                    .iter()
                    .map(|r| (r.year.as_str(), &r.poverty))
                    .collect::<Vec<_>>(),
            ),
        ),
    ];
    for (m, r) in matched.iter().zip(reports) {
        out.push(Artifact::new(
            format!("countries_{}.csv", r.year),
            report::countries_csv(&r.countries),
        ));
        out.push(Artifact::new(
            format!("poverty_{}.csv", r.year),
            report::poverty_csv(&r.poverty),
        ));
        out.push(Artifact::new(
            format!("poverty_cells_{}.csv", r.year),
            report::poverty_cells_csv(&m.table, r.poverty.threshold),
        ));
        out.push(Artifact::new(
            format!("kde_{}.csv", r.year),
            report::kde_csv(&r.kde),
        ));
    }
    out
}

/// Computes the full bundle without writing anything.
pub fn compute_bundle(config: &RunConfig) -> Result<ReportBundle, PipelineError> {
    config.preflight()?;
    let matched = match_all(config)?;
    let reports: Vec<Result<YearReport, PipelineError>> = matched
        .par_iter()
        .map(|m| analyze_year(config, m))
        .collect();
    let reports = reports.into_iter().collect::<Result<Vec<_>, _>>()?;
    Ok(ReportBundle { matched, reports })
}

/// read → filter → match → statistics → indices → decompositions → poverty
/// → KDE for every year, then writes the bundle to `config.output_dir`.
pub fn run_pipeline(config: &RunConfig) -> Result<ReportBundle, PipelineError> {
    let bundle = compute_bundle(config)?;
    bundle.write(config)?;
    Ok(bundle)
}

/// A subset of the full run, one per CLI subcommand.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Match,
    Stats,
    Inequality,
    Decompose,
    Poverty,
    Kde,
    Report,
}

fn per_year<T: Send>(
    matched: &[MatchedYear],
    f: impl Fn(&MatchedYear) -> Result<T, DomainError> + Sync,
) -> Result<Vec<T>, PipelineError> {
    let results: Vec<Result<T, PipelineError>> = matched
        .par_iter()
        .map(|m| f(m).map_err(PipelineError::domain(&m.year)))
        .collect();
    results.into_iter().collect()
}

fn bandwidth(
    config: &RunConfig,
    dist: &crate::grid::WeightedDistribution,
) -> Result<f64, DomainError> {
    match config.kde_bandwidth {
        Some(h) => Ok(h),
        None => stats::silverman_bandwidth(dist),
    }
}

/// Computes the artifacts of one stage, plus the KDE bandwidths used.
pub fn stage_artifacts(
    config: &RunConfig,
    stage: Stage,
) -> Result<(Vec<Artifact>, BTreeMap<String, f64>), PipelineError> {
    if stage == Stage::Report {
        let bundle = compute_bundle(config)?;
        let bandwidths = bundle
            .reports
            .iter()
            .map(|r| (r.year.clone(), r.kde.bandwidth))
            .collect();
        return Ok((bundle.artifacts(), bandwidths));
    }
    config.preflight()?;
    let matched = match_all(config)?;
    let years: Vec<&str> = matched.iter().map(|m| m.year.as_str()).collect();
    let mut bandwidths = BTreeMap::new();
    let artifacts = match stage {
        Stage::Match => match_artifacts(&matched),
        Stage::Stats => {
            let rows = per_year(&matched, |m| {
                let dist = build_distribution(&m.table)?;
                Ok((
                    stats::summarize(&dist, &config.thresholds),
                    stats::per_group_summary(&m.table),
                ))
            })?;
            let summaries: Vec<_> = years.iter().zip(&rows).map(|(y, r)| (*y, &r.0)).collect();
            let mut out = vec![Artifact::new(
                "summary.csv",
                report::summary_csv(&summaries),
            )];
            for (y, r) in years.iter().zip(&rows) {
                out.push(Artifact::new(
                    format!("countries_{y}.csv"),
                    report::countries_csv(&r.1),
                ));
            }
            out
        }
        Stage::Inequality => {
            let rows = per_year(&matched, |m| {
                inequality::index_set(&build_distribution(&m.table)?)
            })?;
            let rows: Vec<_> = years.iter().copied().zip(&rows).collect();
            vec![Artifact::new("indices.csv", report::indices_csv(&rows))]
        }
        Stage::Decompose => {
            let rows = per_year(&matched, |m| {
                let grouped = GroupedDistribution::from_table(&m.table)?;
                let summary = stats::summarize(grouped.base(), &config.thresholds);
                Ok((summary, inequality::decompose_all(&grouped)?))
            })?;
            let csv_rows: Vec<_> = years
                .iter()
                .zip(&rows)
                .map(|(y, r)| (*y, Some(&r.0), r.1.as_slice()))
                .collect();
            let json_rows: Vec<_> = years
                .iter()
                .zip(&rows)
                .map(|(y, r)| (*y, r.1.as_slice()))
                .collect();
            vec![
                Artifact::new("decomposition.csv", report::decomposition_csv(&csv_rows)),
                Artifact::new("decomposition.json", report::decomposition_json(&json_rows)),
            ]
        }
        Stage::Poverty => {
            let rows = per_year(&matched, |m| {
                let sorted = SortedDistribution::new(&build_distribution(&m.table)?);
                poverty::poverty_report(&m.table, &sorted, config.poverty_target, &m.source_totals)
            })?;
            let summary: Vec<_> = years.iter().copied().zip(&rows).collect();
            let mut out = vec![Artifact::new(
                "poverty_summary.csv",
                report::poverty_summary_csv(&summary),
            )];
            for (m, r) in matched.iter().zip(&rows) {
                out.push(Artifact::new(
                    format!("poverty_{}.csv", m.year),
                    report::poverty_csv(r),
                ));
                out.push(Artifact::new(
                    format!("poverty_cells_{}.csv", m.year),
                    report::poverty_cells_csv(&m.table, r.threshold),
                ));
            }
            out
        }
        Stage::Kde => {
            let curves = per_year(&matched, |m| {
                let dist = build_distribution(&m.table)?;
                stats::weighted_kde(
                    &dist,
                    bandwidth(config, &dist)?,
                    config.kde_truncation_max,
                    config.kde_points,
                )
            })?;
            let mut out = Vec::new();
            for (y, c) in years.iter().zip(&curves) {
                bandwidths.insert(y.to_string(), c.bandwidth);
                out.push(Artifact::new(format!("kde_{y}.csv"), report::kde_csv(c)));
            }
            out
        }
        Stage::Report => unreachable!("handled above"),
    };
    Ok((artifacts, bandwidths))
}

/// Runs one stage and writes its artifacts and manifest into
/// `config.output_dir`; returns the artifact names.
pub fn run_stage(config: &RunConfig, stage: Stage) -> Result<Vec<String>, PipelineError> {
    let (artifacts, bandwidths) = stage_artifacts(config, stage)?;
    let dir = &config.output_dir;
    report::write_bundle(dir, &artifacts, &RunParameters::new(config, bandwidths)).map_err(
        |source| PipelineError::Io {
            path: dir.clone(),
            source,
        },
    )?;
    Ok(artifacts.into_iter().map(|a| a.name).collect())
}
