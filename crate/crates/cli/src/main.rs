mod plot;
mod summary;

use clap::{Args, Parser, Subcommand};
use frailtime_core::analysis1d::{profile_1d, ProfileOptions};
use frailtime_core::dataio::{self, build_design, resolve_censoring, ColumnEncoding, DataError, Dataset, FormulaSpec, Table};
use frailtime_core::inference::survival_for_design;
use frailtime_core::optimizer::{fit_context, FitOptions, OptimError};
use frailtime_core::params::{Category, ParamBounds, ParamVector};
use frailtime_core::simulate::{simulate_dataset, truth_vector, CovariateSpec, SimError, SimSpec};
use frailtime_core::{FitReport, SurvivalTable, LikelihoodContext, LikelihoodError, TimeGrid, DEFAULT_CATEGORY_MAX, DEFAULT_CATEGORY_MIN};
use plot::{color, step_points, Figure, Series, Style};
use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const EXIT_USAGE: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_NUMERICAL: u8 = 4;

#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(e: impl Display) -> Self {
        Self { code: EXIT_USAGE, message: e.to_string() }
    }
    fn data(e: impl Display) -> Self {
        Self { code: EXIT_DATA, message: e.to_string() }
    }
    fn numerical(e: impl Display) -> Self {
        Self { code: EXIT_NUMERICAL, message: e.to_string() }
    }
}

impl From<OptimError> for Failure {
    fn from(e: OptimError) -> Self {
        match e {
            OptimError::Params(_) | OptimError::Options(_) | OptimError::EmptyInterval { .. } => Failure::usage(e),
            other => Failure::numerical(other),
        }
    }
}

impl From<LikelihoodError> for Failure {
    fn from(e: LikelihoodError) -> Self {
        match e {
            LikelihoodError::Grid(_) => Failure::data(e),
            other => Failure::numerical(other),
        }
    }
}

type CliResult<T> = Result<T, Failure>;

#[derive(Parser)]
#[command(name = "frailtime", version, about = "Time-dependent shared gamma frailty Cox model")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the model and write the result document.
    Fit(FitArgs),
    /// Conditional survival curves from a fitted model.
    Survival(SurvivalArgs),
    /// One-dimensional log-likelihood profile of a single parameter.
    #[command(name = "profile1d")]
    Profile1d(ProfileArgs),
    /// Simulate a clustered dataset from known parameters.
    Simulate(SimulateArgs),
}

#[derive(Args)]
struct ModelInput {
    /// CSV file with a header row.
    #[arg(long)]
    data: PathBuf,
    /// Model formula, e.g. `time_to_event ~ Gender + CFUP + cluster(group)`.
    #[arg(long)]
    formula: Option<String>,
    /// Interval boundaries a_0,...,a_L.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    time_axis: Option<Vec<f64>>,
    /// Lower bounds for (phi, beta, mu1, nu, gamma).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, num_args = 1)]
    range_min: Option<Vec<f64>>,
    /// Upper bounds for (phi, beta, mu1, nu, gamma).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, num_args = 1)]
    range_max: Option<Vec<f64>>,
    /// 0/1 event column; without it, any time within the follow-up is an event.
    #[arg(long)]
    status_col: Option<String>,
    /// Center and scale numeric covariates.
    #[arg(long)]
    standardize: bool,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    input: ModelInput,
    #[arg(long, default_value_t = 60)]
    n_extrarun: usize,
    #[arg(long, default_value_t = 1e-6)]
    tol_ll: f64,
    #[arg(long, default_value_t = 1e-6)]
    tol_optimize: f64,
    #[arg(long, default_value_t = 1e-3)]
    h_dd: f64,
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    #[arg(long)]
    seed: u64,
    /// Log the log-likelihood after every run.
    #[arg(long)]
    verbose: bool,
    /// Report only the time-varying part mu2*gamma_k of the frailty variance.
    #[arg(long)]
    partial_sd: bool,
    /// Use 1.96 instead of the normal quantile for parameter intervals.
    #[arg(long)]
    literal_z: bool,
    /// Result JSON path.
    #[arg(long)]
    out: PathBuf,
    /// Write SVG figures into this directory.
    #[arg(long)]
    plot_dir: Option<PathBuf>,
    /// Plot only the time-varying posterior component.
    #[arg(long, conflicts_with = "plot_alpha")]
    plot_eps: bool,
    /// Plot only the group-constant posterior component.
    #[arg(long)]
    plot_alpha: bool,
}

#[derive(Args)]
struct SurvivalArgs {
    /// Result JSON written by `fit`.
    #[arg(long)]
    fit: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Output CSV (`group,S_1..S_L`).
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    out_svg: Option<PathBuf>,
}

#[derive(Args)]
struct ProfileArgs {
    #[command(flatten)]
    input: ModelInput,
    /// 0-based parameter position.
    #[arg(long)]
    index: usize,
    /// Hold the other parameters at the optimum of this fit.
    #[arg(long)]
    fixed_from: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    n_iter: usize,
    #[arg(long, default_value_t = 50)]
    n_points: usize,
    #[arg(long, default_value_t = 1e-6)]
    tol_optimize: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Evenly spaced curve abscissae.
    #[arg(long)]
    grid: bool,
    #[arg(long)]
    out_csv: PathBuf,
    #[arg(long)]
    out_svg: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    n_groups: usize,
    #[arg(long)]
    units_per_group: usize,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    time_axis: Vec<f64>,
    /// Baseline log-hazards: one value per interval, or one value for all.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    phi: Vec<f64>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    beta: Vec<f64>,
    #[arg(long)]
    mu1: f64,
    #[arg(long)]
    nu: f64,
    /// One value per interval, or one value for all.
    #[arg(long, value_delimiter = ',')]
    gamma: Vec<f64>,
    /// `name:normal` or `name:bernoulli(p)` per regressor; default x1..xR normal.
    #[arg(long, value_delimiter = ',')]
    covariates: Option<Vec<String>>,
    /// Replace every frailty draw by this constant.
    #[arg(long)]
    frailty_override: Option<f64>,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out_dir: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let verbose = matches!(&cli.command, Command::Fit(a) if a.verbose);
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(if verbose { "info" } else { "warn" }))
        .format_timestamp(None)
        .init();
    if let Err(f) = configure_threads() {
        eprintln!("error: {}", f.message);
        return ExitCode::from(f.code);
    }
    let outcome = match cli.command {
        Command::Fit(a) => cmd_fit(a),
        Command::Survival(a) => cmd_survival(a),
        Command::Profile1d(a) => cmd_profile1d(a),
        Command::Simulate(a) => cmd_simulate(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn configure_threads() -> CliResult<()> {
    let Ok(raw) = std::env::var("FRAILTIME_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| Failure::usage(format!("FRAILTIME_THREADS must be a positive integer, got `{raw}`")))?;
    if n == 0 {
        return Err(Failure::usage("FRAILTIME_THREADS must be at least 1"));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(Failure::usage)
}

fn category_array(values: Option<&[f64]>, default: [f64; 5], flag: &str) -> CliResult<[f64; 5]> {
    match values {
        None => Ok(default),
        Some(v) => v
            .try_into()
            .map_err(|_| Failure::usage(format!("--{flag} needs 5 values (phi, beta, mu1, nu, gamma), got {}", v.len()))),
    }
}

fn data_error(e: DataError) -> Failure {
    match e {
        DataError::MissingTilde
        | DataError::MissingResponse
        | DataError::ClusterCount(_)
        | DataError::NoCovariates
        | DataError::DuplicateTerm(_)
        | DataError::BadTerm(_) => Failure::usage(e),
        other => Failure::data(other),
    }
}

fn read_table(path: &Path) -> CliResult<Table> {
    Table::from_path(path).map_err(|e| Failure::data(format!("{}: {e}", path.display())))
}

fn read_report(path: &Path) -> CliResult<FitReport> {
    let text = fs::read_to_string(path).map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
    let report: FitReport =
        serde_json::from_str(&text).map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
    report.check().map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
    Ok(report)
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> CliResult<()> {
    fs::write(path, contents).map_err(|e| Failure::data(format!("{}: {e}", path.display())))
}

fn create_file(path: &Path) -> CliResult<fs::File> {
    fs::File::create(path).map_err(|e| Failure::data(format!("{}: {e}", path.display())))
}

/// Read the table and assemble a dataset with events resolved against `grid`.
fn load_dataset(
    table: &Table,
    spec: &FormulaSpec,
    grid: &TimeGrid,
    status_col: Option<&str>,
    encoding: Option<&[ColumnEncoding]>,
    standardize: bool,
) -> CliResult<Dataset> {
    let dataset = match encoding {
        Some(enc) => dataio::build_dataset_with_encoding(table, spec, enc),
        None => dataio::build_dataset(table, spec, standardize),
    }
    .map_err(data_error)?;
    let status = match status_col {
        Some(col) => Some(dataio::read_status(table, col).map_err(data_error)?),
        None => None,
    };
    let event = resolve_censoring(dataset.time(), grid.end(), status.as_deref()).map_err(data_error)?;
    Ok(dataset.with_event(event))
}

fn cmd_fit(a: FitArgs) -> CliResult<()> {
    let formula = a.input.formula.as_deref().ok_or_else(|| Failure::usage("--formula is required"))?;
    let spec = dataio::parse_formula(formula).map_err(data_error)?;
    let axis = a.input.time_axis.clone().ok_or_else(|| Failure::usage("--time-axis is required"))?;
    let grid = TimeGrid::new(axis).map_err(Failure::usage)?;
    let cmin = category_array(a.input.range_min.as_deref(), DEFAULT_CATEGORY_MIN, "range-min")?;
    let cmax = category_array(a.input.range_max.as_deref(), DEFAULT_CATEGORY_MAX, "range-max")?;
    let options = FitOptions {
        n_extrarun: a.n_extrarun,
        tol_ll: a.tol_ll,
        tol_optimize: a.tol_optimize,
        h_dd: a.h_dd,
        level: a.level,
        seed: a.seed,
        verbose: a.verbose,
        full_sd: !a.partial_sd,
        literal_z: a.literal_z,
    };
    options.validate().map_err(Failure::usage)?;

    let table = read_table(&a.input.data)?;
    let dataset = load_dataset(&table, &spec, &grid, a.input.status_col.as_deref(), None, a.input.standardize)?;
    let n_units = dataset.n_units();
    let ctx = LikelihoodContext::new(dataset, grid)?;
    let bounds = ParamBounds::expand(cmin, cmax, ctx.layout()).map_err(Failure::usage)?;
    let fit = fit_context(&ctx, &bounds, &options)?;

    let mut report = FitReport::new(&fit, &spec);
    report.status_column = a.input.status_col.clone();
    let json = serde_json::to_string_pretty(&report).map_err(Failure::data)?;
    write_file(&a.out, json + "\n")?;
    print!("{}", summary::render(&report, n_units));

    if let Some(dir) = &a.plot_dir {
        fs::create_dir_all(dir).map_err(|e| Failure::data(format!("{}: {e}", dir.display())))?;
        write_fit_figures(&report, dir, a.plot_eps, a.plot_alpha)?;
        let table_s = fit.survival(ctx.dataset());
        write_file(&dir.join("survival.svg"), survival_figure(&report, &table_s).render())?;
    }
    Ok(())
}

fn write_fit_figures(report: &FitReport, dir: &Path, only_eps: bool, only_alpha: bool) -> CliResult<()> {
    let grid = &report.time_domain;
    let mids = grid.midpoints();

    let mut hazard = Figure::new("Baseline hazard", "Time", "Values");
    hazard.push(Series::new(step_points(grid.boundaries(), &report.baseline_hazard), Style::Line, color(0)));
    write_file(&dir.join("baseline_hazard.svg"), hazard.render())?;

    let mut sd = Figure::new("Frailty standard deviation", "Time", "Values");
    let pts = mids.iter().copied().zip(report.frailty_dispersion.sd.iter().copied()).collect();
    sd.push(Series::new(pts, Style::Points, color(0)).radius(4.0));
    write_file(&dir.join("frailty_sd.svg"), sd.render())?;

    let post = &report.posterior_frailty_estimates;
    let title = if only_eps {
        "Posterior frailty estimates (eps)"
    } else if only_alpha {
        "Posterior frailty estimates (alpha)"
    } else {
        "Posterior frailty estimates"
    };
    let mut fig = Figure::new(title, "Time", "Values");
    for (j, name) in report.group_names.iter().enumerate() {
        let values: Vec<f64> = if only_eps {
            post.eps[j].clone()
        } else if only_alpha {
            vec![post.alpha[j]; mids.len()]
        } else {
            post.z[j].clone()
        };
        let pts = mids.iter().copied().zip(values).collect();
        fig.push(Series::new(pts, Style::LinePoints, color(j)).label(name.clone()));
    }
    write_file(&dir.join("posterior_frailty.svg"), fig.render())
}

fn cmd_survival(a: SurvivalArgs) -> CliResult<()> {
    let report = read_report(&a.fit)?;
    let spec = dataio::parse_formula(&report.formula).map_err(Failure::data)?;
    let table = read_table(&a.data)?;
    let design = build_design(&table, &spec, &report.encoding, Some(&report.group_names)).map_err(data_error)?;
    if design.covariate_names != report.regressors {
        return Err(Failure::data(format!(
            "data encodes regressors {:?}, fit has {:?}",
            design.covariate_names, report.regressors
        )));
    }
    let p = report.optimal().map_err(Failure::data)?;
    let table_s = survival_for_design(
        &design.design,
        &design.cluster_of,
        &design.group_names,
        &report.time_domain,
        p.phi(),
        p.beta(),
        &report.posterior_frailty_estimates.z,
    );
    table_s.write_csv(create_file(&a.out)?).map_err(Failure::data)?;
    println!("wrote survival table for {} units to {}", table_s.groups.len(), a.out.display());

    if let Some(svg) = &a.out_svg {
        write_file(svg, survival_figure(&report, &table_s).render())?;
    }
    Ok(())
}

/// One polyline per unit over the interval right endpoints, starting at S = 1.
fn survival_figure(report: &FitReport, table: &SurvivalTable) -> Figure {
    let b = report.time_domain.boundaries();
    let mut fig = Figure::new("Conditional survival", "Time", "Values");
    for (g, row) in table.groups.iter().zip(&table.values) {
        let j = report.group_names.iter().position(|n| n == g).unwrap_or(0);
        let pts = std::iter::once((b[0], 1.0)).chain(b[1..].iter().copied().zip(row.iter().copied())).collect();
        fig.push(Series::new(pts, Style::Line, color(j)).label(g.clone()));
    }
    fig
}

fn cmd_profile1d(a: ProfileArgs) -> CliResult<()> {
    let report = match &a.fixed_from {
        Some(path) => Some(read_report(path)?),
        None => None,
    };
    let formula = a
        .input
        .formula
        .clone()
        .or_else(|| report.as_ref().map(|r| r.formula.clone()))
        .ok_or_else(|| Failure::usage("--formula is required without --fixed-from"))?;
    let spec = dataio::parse_formula(&formula).map_err(data_error)?;
    let grid = match (&a.input.time_axis, &report) {
        (Some(axis), _) => TimeGrid::new(axis.clone()).map_err(Failure::usage)?,
        (None, Some(r)) => r.time_domain.clone(),
        (None, None) => return Err(Failure::usage("--time-axis is required without --fixed-from")),
    };
    let (def_min, def_max) = match &report {
        Some(r) => (r.categories_range.min, r.categories_range.max),
        None => (DEFAULT_CATEGORY_MIN, DEFAULT_CATEGORY_MAX),
    };
    let cmin = category_array(a.input.range_min.as_deref(), def_min, "range-min")?;
    let cmax = category_array(a.input.range_max.as_deref(), def_max, "range-max")?;
    let status_col = a
        .input
        .status_col
        .clone()
        .or_else(|| report.as_ref().and_then(|r| r.status_column.clone()));

    let table = read_table(&a.input.data)?;
    let encoding = report.as_ref().map(|r| r.encoding.as_slice());
    let dataset = load_dataset(&table, &spec, &grid, status_col.as_deref(), encoding, a.input.standardize)?;
    let ctx = LikelihoodContext::new(dataset, grid)?;
    let layout = ctx.layout();
    if let Some(r) = &report {
        if r.layout() != layout || r.regressors != ctx.dataset().covariate_names() {
            return Err(Failure::data("data and fit describe different models"));
        }
    }
    let bounds = ParamBounds::expand(cmin, cmax, layout).map_err(Failure::usage)?;
    let fixed = match &report {
        Some(r) => Some(ParamVector::within(r.optimal_parameters.clone(), &bounds).map_err(Failure::usage)?),
        None => None,
    };
    let category = layout
        .category_of(a.index)
        .ok_or_else(|| Failure::usage(format!("--index {} out of range for {} parameters", a.index, layout.n_params())))?;
    let options = ProfileOptions {
        n_iter: a.n_iter,
        n_points: a.n_points,
        tol: a.tol_optimize,
        seed: a.seed,
        even_grid: a.grid,
    };
    let result = profile_1d(&ctx, &bounds, a.index, fixed.as_ref(), &options)?;
    result.write_csv(create_file(&a.out_csv)?).map_err(Failure::data)?;

    let local = a.index - layout.range(category).start;
    println!(
        "Profile of parameter {} ({}[{}]), {} mode",
        a.index,
        category,
        local + 1,
        if fixed.is_some() { "fixed" } else { "random" }
    );
    for (i, it) in result.iterations.iter().enumerate() {
        println!("iter {}: EstimatedParameter {} OptimizedLoglikelihood {}", i + 1, it.x_star, it.ll_star);
    }

    if let Some(svg) = &a.out_svg {
        let label = if category == Category::Phi || category == Category::Beta || category == Category::Gamma {
            format!("{category}[{}]", local + 1)
        } else {
            category.to_string()
        };
        let mut fig = Figure::new(&format!("Log-likelihood profile of {label}"), &label, "Log-likelihood");
        let samples = result.iterations.iter().flat_map(|it| it.curve.iter().copied()).collect();
        fig.push(Series::new(samples, Style::Points, "#555555").radius(2.5));
        let maxima = result.iterations.iter().map(|it| (it.x_star, it.ll_star)).collect();
        fig.push(Series::new(maxima, Style::Points, "#d62728").radius(5.0).label("maximizer"));
        write_file(svg, fig.render())?;
    }
    Ok(())
}

fn expand_per_interval(values: &[f64], l: usize, flag: &str) -> CliResult<Vec<f64>> {
    match values.len() {
        1 => Ok(vec![values[0]; l]),
        n if n == l => Ok(values.to_vec()),
        n => Err(Failure::usage(format!("--{flag} needs 1 or {l} values, got {n}"))),
    }
}

fn sim_error(e: SimError) -> Failure {
    match e {
        SimError::Csv(_) | SimError::Json(_) | SimError::Io(_) => Failure::data(e),
        other => Failure::usage(other),
    }
}

fn cmd_simulate(a: SimulateArgs) -> CliResult<()> {
    let grid = TimeGrid::new(a.time_axis.clone()).map_err(Failure::usage)?;
    let l = grid.n_intervals();
    let phi = expand_per_interval(&a.phi, l, "phi")?;
    let gamma = expand_per_interval(&a.gamma, l, "gamma")?;
    if a.beta.is_empty() {
        return Err(Failure::usage("--beta needs at least one value"));
    }
    if a.n_groups == 0 || a.units_per_group == 0 {
        return Err(Failure::usage("--n-groups and --units-per-group must be positive"));
    }
    let covariates: Vec<CovariateSpec> = match &a.covariates {
        Some(list) => list.iter().map(|s| s.parse()).collect::<Result<_, _>>().map_err(sim_error)?,
        None => (1..=a.beta.len()).map(|r| format!("x{r}:normal").parse()).collect::<Result<_, _>>().map_err(sim_error)?,
    };
    let spec = SimSpec {
        truth: truth_vector(&phi, &a.beta, a.mu1, a.nu, &gamma).map_err(sim_error)?,
        grid,
        units_per_group: vec![a.units_per_group; a.n_groups],
        covariates,
        frailty_override: a.frailty_override,
        seed: a.seed,
    };
    let data = simulate_dataset(&spec).map_err(sim_error)?;
    fs::create_dir_all(&a.out_dir).map_err(|e| Failure::data(format!("{}: {e}", a.out_dir.display())))?;
    let csv_path = a.out_dir.join("data.csv");
    let truth_path = a.out_dir.join("truth.json");
    data.write_csv(create_file(&csv_path)?).map_err(sim_error)?;
    data.write_truth(create_file(&truth_path)?).map_err(sim_error)?;
    let events = data.status.iter().filter(|&&s| s).count();
    println!(
        "simulated {} units in {} groups ({} events); wrote {} and {}",
        data.n_units(),
        a.n_groups,
        events,
        csv_path.display(),
        truth_path.display()
    );
    Ok(())
}
