use std::path::PathBuf;
use std::process::ExitCode;

use airq_core::pipeline::{run_stage, Stage};
use airq_core::synthetic::{gen_synthetic, SyntheticSpec};
use airq_core::{PipelineError, RunConfig};
use clap::{Args, Parser, Subcommand, ValueEnum};

const EXIT_CODES: &str = "\
Exit codes:
  0  success
  1  I/O error (unreadable input, unwritable output)
  2  configuration error (invalid config file or flags)
  3  data validation error (malformed grid or cell table)
  4  domain error (e.g. zero exposure with a log index, poverty target above total population)";

/// Population-weighted PM2.5 exposure inequality toolkit.
#[derive(Debug, Parser)]
#[command(name = "airq", version, after_help = EXIT_CODES)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Filter the population cells and join them to the pollution grid.
    Match(RunArgs),
    /// Weighted mean, percentiles, R9010, exceedance shares, per-country table.
    Stats(RunArgs),
    /// Gini, MLD, Theil and half CV² per year.
    Inequality(RunArgs),
    /// Between/within decompositions by country.
    Decompose(RunArgs),
    /// Exposure threshold for the target head-count and its per-country breakdown.
    Poverty(RunArgs),
    /// Population-weighted Gaussian density curves.
    Kde(RunArgs),
    /// Full pipeline: every artifact above plus the manifest.
    Report(RunArgs),
    /// Write a deterministic synthetic fixture with a ready-to-run config.
    GenSynthetic(SyntheticArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum QuantileMethod {
    /// Smallest value whose cumulative weight reaches q of the total.
    Lower,
}

#[derive(Debug, Args)]
#[command(after_help = EXIT_CODES)]
struct RunArgs {
    /// Flat JSON run configuration.
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Restrict the run to one configured year.
    #[arg(long, value_name = "LABEL")]
    year: Option<String>,
    /// Nearest-cell matching only (drops cells whose nearest grid value is missing).
    #[arg(long, conflicts_with = "fallback_enabled")]
    no_fallback: bool,
    #[arg(long, value_name = "BOOL")]
    fallback_enabled: Option<bool>,
    #[arg(long, value_name = "PERSONS")]
    min_cell_population: Option<f64>,
    #[arg(long, value_name = "PERSONS")]
    min_country_population: Option<f64>,
    /// Year whose country totals drive the country filter.
    #[arg(long, value_name = "LABEL")]
    reference_year: Option<String>,
    /// Exceedance thresholds in µg/m³, comma separated.
    #[arg(long, value_name = "LIST", value_delimiter = ',')]
    thresholds: Option<Vec<f64>>,
    #[arg(long, value_name = "N")]
    poverty_target: Option<f64>,
    /// Fixed KDE bandwidth instead of Silverman's rule.
    #[arg(long, value_name = "H")]
    kde_bandwidth: Option<f64>,
    #[arg(long, value_name = "µg/m³")]
    kde_truncation_max: Option<f64>,
    #[arg(long, value_name = "N")]
    kde_points: Option<usize>,
    /// Output directory (overrides output_dir).
    #[arg(long, visible_alias = "output-dir", value_name = "DIR")]
    output: Option<PathBuf>,
    /// Worker threads [default: available parallelism].
    #[arg(long, value_name = "N")]
    threads: Option<usize>,
    #[arg(long, value_enum, default_value_t = QuantileMethod::Lower)]
    quantile_method: QuantileMethod,
}

impl RunArgs {
    fn to_config(&self) -> Result<RunConfig, PipelineError> {
        let mut c = RunConfig::from_json_file(&self.config)?;
        if let Some(y) = &self.year {
            c.select_year(y)?;
        }
        if self.no_fallback {
            c.fallback_enabled = false;
        }
        if let Some(v) = self.fallback_enabled {
            c.fallback_enabled = v;
        }
        if let Some(v) = self.min_cell_population {
            c.min_cell_population = v;
        }
        if let Some(v) = self.min_country_population {
            c.min_country_population = v;
        }
        if let Some(v) = &self.reference_year {
            c.reference_year = Some(v.clone());
        }
        if let Some(v) = &self.thresholds {
            c.thresholds = v.clone();
        }
        if let Some(v) = self.poverty_target {
            c.poverty_target = v;
        }
        if let Some(v) = self.kde_bandwidth {
            c.kde_bandwidth = Some(v);
        }
        if let Some(v) = self.kde_truncation_max {
            c.kde_truncation_max = v;
        }
        if let Some(v) = self.kde_points {
            c.kde_points = v;
        }
        if let Some(v) = &self.output {
            c.output_dir = v.clone();
        }
        Ok(c)
    }
}

#[derive(Debug, Args)]
struct SyntheticArgs {
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Directory for population.csv, pollution.asc, expected.json, config.json.
    #[arg(long, value_name = "DIR")]
    output: PathBuf,
    #[arg(long, default_value_t = 2)]
    n_countries: usize,
    #[arg(long, default_value_t = 400)]
    cells_per_country: usize,
    #[arg(long, default_value_t = 10.0)]
    mean_min: f64,
    #[arg(long, default_value_t = 30.0)]
    mean_max: f64,
    /// Log-scale within-country spread; 0 gives constant countries.
    #[arg(long, default_value_t = 0.0)]
    dispersion: f64,
    #[arg(long, default_value_t = 100.0)]
    population_min: f64,
    #[arg(long, default_value_t = 100.0)]
    population_max: f64,
    #[arg(long, default_value_t = 0.2)]
    missing_fraction: f64,
}

fn run_analysis(args: &RunArgs, stage: Stage) -> Result<(), PipelineError> {
    let config = args.to_config()?;
    if let Some(n) = args.threads {
        if n == 0 {
            return Err(PipelineError::Config("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
    }
    for name in run_stage(&config, stage)? {
        println!("{}", config.output_dir.join(name).display());
    }
    Ok(())
}

fn run_synthetic(args: &SyntheticArgs) -> Result<(), PipelineError> {
    let spec = SyntheticSpec {
        n_countries: args.n_countries,
        cells_per_country: args.cells_per_country,
        mean_min: args.mean_min,
        mean_max: args.mean_max,
        dispersion: args.dispersion,
        population_min: args.population_min,
        population_max: args.population_max,
        missing_fraction: args.missing_fraction,
    };
    let fixture =
        gen_synthetic(args.seed, &spec).map_err(|e| PipelineError::Config(e.to_string()))?;
    fixture
        .write_to(&args.output)
        .map_err(|source| PipelineError::Io {
            path: args.output.clone(),
            source,
        })?;
    println!("{}", args.output.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Match(a) => run_analysis(a, Stage::Match),
        Command::Stats(a) => run_analysis(a, Stage::Stats),
        Command::Inequality(a) => run_analysis(a, Stage::Inequality),
        Command::Decompose(a) => run_analysis(a, Stage::Decompose),
        Command::Poverty(a) => run_analysis(a, Stage::Poverty),
        Command::Kde(a) => run_analysis(a, Stage::Kde),
        Command::Report(a) => run_analysis(a, Stage::Report),
        Command::GenSynthetic(a) => run_synthetic(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("airq: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
