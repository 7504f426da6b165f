//! Population-weighted exposure statistics over gridded population and
//! pollutant-concentration data.
//!
//! The pipeline joins population cells to a concentration raster
//! ([`join`]), turns the matched cells into a [`WeightedDistribution`], and
//! computes order statistics ([`stats`]), inequality indices and their
//! group decompositions ([`inequality`]), and upper-tail exposure breakdowns
//! ([`poverty`]). [`pipeline`] wires everything into reproducible runs that
//! write CSV/JSON report bundles.

// `!(x > 0.0)` is used deliberately so that NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod grid;
pub mod inequality;
pub mod ingest;
pub mod join;
pub mod pipeline;
pub mod poverty;
pub mod report;
pub mod stats;
pub mod sum;
pub mod synthetic;

pub use error::DomainError;
pub use grid::{
    CellRecord, CountryId, ExposureTable, GridViolation, RasterGrid, WeightedDistribution,
};
pub use inequality::{DecompositionResult, GeAlpha, GroupedDistribution, IndexKind};
pub use ingest::{FilterReport, IngestError};
pub use join::{MatchReport, OutOfExtent};
pub use pipeline::{PipelineError, ReportBundle, RunConfig};
pub use poverty::PovertyReport;
pub use stats::{DensityCurve, DistributionSummary, SortedDistribution};
pub use sum::NeumaierSum;
