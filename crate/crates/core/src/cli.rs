//! Command-line front end: training from CSV, solving the supported
//! problem classes, the peaks benchmark sweep and a single Bayesian
//! optimization step.
//!
//! Exit codes: 0 on success (including a proven-infeasible problem), 1 when a
//! solver limit stopped the search, 2 on usage, input or IO errors.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::bnb::{solve, BnBResult, Settings, Status};
use crate::envelopes::acquisition::AcquisitionSpec;
use crate::envelopes::KernelKind;
use crate::error::{Error, Result};
use crate::gp::GpModel;
use crate::interval::Interval;
use crate::problem::{build_acquisition, build_chance_constrained, build_fs_mean, build_rs_mean, Formulation, Problem, Sense};
use crate::train::{lhs_sample, map_train, PriorSpec, TrainingData};

pub const EXIT_OK: i32 = 0;
pub const EXIT_LIMIT: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Largest number of integer assignments `bayesopt-step` will enumerate.
pub const MAX_INTEGER_ASSIGNMENTS: usize = 1000;

pub const BENCHMARK_HEADER: &str = "N,nu,formulation,envelopes,rep,wall_time_s,iterations,time_per_iter_s,ub,lb,status";

/// The peaks test function.
pub fn peaks(x1: f64, x2: f64) -> f64 {
    3.0 * (1.0 - x1).powi(2) * (-x1 * x1 - (x2 + 1.0).powi(2)).exp()
        - 10.0 * (x1 / 5.0 - x1.powi(3) - x2.powi(5)) * (-x1 * x1 - x2 * x2).exp()
        - (-(x1 + 1.0).powi(2) - x2 * x2).exp() / 3.0
}

pub fn peaks_bounds() -> Vec<Interval> {
    vec![Interval::raw(-3.0, 3.0); 2]
}

/// Latin hypercube sample of the peaks function on `[-3, 3]^2`.
pub fn peaks_dataset(n: usize, seed: u64) -> Result<TrainingData> {
    let bounds = peaks_bounds();
    let x = lhs_sample(n, &bounds, seed);
    let y = x.iter().map(|p| peaks(p[0], p[1])).collect();
    TrainingData::new(x, y, bounds)
}

/// Synthetic four-input process: a yield-like response to maximize and an
/// impurity-like response to keep below a threshold, both on the unit box.
pub fn chance_response(x: &[f64]) -> (f64, f64) {
    let rate = (2.5 * x[0]).exp();
    let conversion = 1.0 - (-1.2 * rate * (0.2 + x[1])).exp();
    let yield_ = 90.0 * conversion * (-3.0 * (x[2] - 0.55).powi(2)).exp() + 4.0 * x[3];
    let impurity = 0.5 + 3.0 * conversion * x[0] * x[0] + 2.0 * (x[3] - 0.3).powi(2) + 0.8 * (3.0 * x[2]).sin();
    (yield_, impurity)
}

/// Training sets for the synthetic chance-constrained case.
pub fn chance_datasets(n: usize, seed: u64) -> Result<(TrainingData, TrainingData)> {
    let bounds = vec![Interval::raw(0.0, 1.0); 4];
    let x = lhs_sample(n, &bounds, seed);
    let (ya, yb): (Vec<f64>, Vec<f64>) = x.iter().map(|p| chance_response(p)).unzip();
    Ok((TrainingData::new(x.clone(), ya, bounds.clone())?, TrainingData::new(x, yb, bounds)?))
}

/// MAP training with the default prior.
pub fn train(data: &TrainingData, kernel: KernelKind, restarts: usize, seed: u64) -> Result<(GpModel, f64)> {
    let prior = PriorSpec::default_for(data.dim());
    let out = map_train(data, kernel, &prior, restarts, seed)?;
    Ok((out.model, out.value))
}

/// Reads training data: a header row, then `D` input columns and one output.
pub fn read_training_csv(path: &Path, bounds: Option<Vec<Interval>>) -> Result<TrainingData> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).flexible(true).trim(csv::Trim::All).from_path(path).map_err(csv_error)?;
    let width = reader.headers().map_err(csv_error)?.len();
    if width < 2 {
        return Err(Error::Csv { line: 1, message: "need at least one input and one output column".into() });
    }
    let (mut x, mut y) = (Vec::new(), Vec::new());
    for record in reader.records() {
        let record = record.map_err(csv_error)?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != width {
            return Err(Error::Csv { line, message: format!("expected {width} fields, found {}", record.len()) });
        }
        let mut row = Vec::with_capacity(width);
        for field in record.iter() {
            let v: f64 =
                field.parse().map_err(|_| Error::Csv { line, message: format!("`{field}` is not a number") })?;
            if !v.is_finite() {
                return Err(Error::Csv { line, message: format!("non-finite value `{field}`") });
            }
            row.push(v);
        }
        y.push(row.pop().expect("width >= 2"));
        x.push(row);
    }
    if x.is_empty() {
        return Err(Error::Csv { line: 1, message: "no data rows".into() });
    }
    match bounds {
        Some(b) => TrainingData::new(x, y, b),
        None => TrainingData::with_data_bounds(x, y),
    }
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Csv { line, message: format!("{other:?}") },
    }
}

/// Parses `lo:hi,lo:hi,...`.
pub fn parse_bounds(s: &str) -> Result<Vec<Interval>> {
    s.split(',')
        .map(|part| {
            let (lo, hi) = part
                .split_once(':')
                .ok_or_else(|| Error::InvalidInput(format!("bound `{part}` is not of the form lo:hi")))?;
            let parse = |t: &str| t.trim().parse::<f64>().map_err(|_| Error::InvalidInput(format!("bad bound `{t}`")));
            Interval::new(parse(lo)?, parse(hi)?)
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    MeanMin,
    Chance,
    Ei,
    Pi,
    Lcb,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum FormulationArg {
    Rs,
    Fs,
}

impl From<FormulationArg> for Formulation {
    fn from(f: FormulationArg) -> Self {
        match f {
            FormulationArg::Rs => Formulation::Rs,
            FormulationArg::Fs => Formulation::Fs,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum EnvelopeMode {
    On,
    Off,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum AcqArg {
    Ei,
    Pi,
    Lcb,
}

#[derive(Parser, Debug)]
#[command(name = "gpopt", version, about = "Global optimization with trained Gaussian processes embedded")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train a GP on CSV data and write the model document.
    Train(TrainArgs),
    /// Solve an optimization problem over trained models.
    Solve(SolveArgs),
    /// Run the peaks scaling study and write one CSV row per run.
    BenchmarkPeaks(BenchArgs),
    /// Find the acquisition-optimal next sample.
    BayesoptStep(BayesArgs),
}

#[derive(Args, Debug, Clone)]
pub struct SolverArgs {
    #[arg(long, default_value_t = 1e-3)]
    pub abs_tol: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub rel_tol: f64,
    #[arg(long, default_value_t = 1e-6)]
    pub feas_tol: f64,
    /// Wall-clock limit in seconds.
    #[arg(long, default_value_t = 60.0)]
    pub time_limit: f64,
    #[arg(long, default_value_t = 100_000)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 20)]
    pub multistart: usize,
    #[arg(long, value_enum, default_value_t = EnvelopeMode::On)]
    pub envelopes: EnvelopeMode,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Print progress to stderr every 100 iterations.
    #[arg(long)]
    pub verbose: bool,
}

impl SolverArgs {
    pub fn settings(&self) -> Result<Settings> {
        if !(self.time_limit.is_finite() && self.time_limit >= 0.0) {
            return Err(Error::InvalidInput("time limit must be a non-negative number of seconds".into()));
        }
        Ok(Settings {
            abs_tol: self.abs_tol,
            rel_tol: self.rel_tol,
            feas_tol: self.feas_tol,
            max_time: Duration::from_secs_f64(self.time_limit),
            max_iter: self.max_iter,
            multistart_count: self.multistart,
            use_envelopes: self.envelopes == EnvelopeMode::On,
            seed: self.seed,
            log_progress: self.verbose,
            ..Settings::default()
        })
    }
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// CSV with a header row, D input columns and one output column.
    pub csv: PathBuf,
    #[arg(long, default_value = "5/2")]
    pub nu: String,
    /// Input bounds `lo:hi,...`; defaults to the data range.
    #[arg(long, allow_hyphen_values = true)]
    pub bounds: Option<String>,
    #[arg(long, default_value_t = 10)]
    pub restarts: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct SolveArgs {
    /// Model document (the objective model in chance mode).
    pub model: PathBuf,
    #[arg(long, value_enum, default_value_t = Mode::MeanMin)]
    pub mode: Mode,
    #[arg(long, value_enum, default_value_t = FormulationArg::Rs)]
    pub formulation: FormulationArg,
    /// Constraint model for chance mode.
    #[arg(long)]
    pub con_model: Option<PathBuf>,
    /// Chance-constraint threshold.
    #[arg(long, allow_hyphen_values = true)]
    pub c: Option<f64>,
    /// Chance-constraint quantile.
    #[arg(long, default_value_t = 1.96)]
    pub z: f64,
    /// Incumbent for EI and PI; defaults to the best training output.
    #[arg(long, allow_hyphen_values = true)]
    pub fmin: Option<f64>,
    #[arg(long)]
    pub kappa: Option<f64>,
    /// Write the result as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    /// Training set sizes, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = [10, 20, 30, 40, 50, 60, 70, 80, 90, 100])]
    pub ns: Vec<usize>,
    #[arg(long, default_value_t = 5)]
    pub reps: usize,
    #[arg(long, default_value = "5/2")]
    pub nu: String,
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [FormulationArg::Rs, FormulationArg::Fs])]
    pub formulations: Vec<FormulationArg>,
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [EnvelopeMode::On, EnvelopeMode::Off])]
    pub envelopes: Vec<EnvelopeMode>,
    /// Per-solve wall-clock limit in seconds.
    #[arg(long, default_value_t = 60.0)]
    pub time_limit: f64,
    #[arg(long, default_value_t = 5)]
    pub restarts: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads; timings are most comparable with one.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct BayesArgs {
    /// Model document; alternatively train from `--csv`.
    #[arg(long, conflicts_with = "csv", required_unless_present = "csv")]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[arg(long, default_value = "5/2")]
    pub nu: String,
    #[arg(long, allow_hyphen_values = true)]
    pub bounds: Option<String>,
    #[arg(long, default_value_t = 10)]
    pub restarts: usize,
    #[arg(long, value_enum, default_value_t = AcqArg::Ei)]
    pub acquisition: AcqArg,
    #[arg(long, allow_hyphen_values = true)]
    pub fmin: Option<f64>,
    #[arg(long, default_value_t = 2.0)]
    pub kappa: f64,
    /// Input dimensions restricted to integer values, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub int_dims: Vec<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub solver: SolverArgs,
}

/// Lowest training output in raw units.
pub fn best_training_output(model: &GpModel) -> f64 {
    model.y_scaled.iter().map(|v| model.output_mean + model.output_std * v).fold(f64::INFINITY, f64::min)
}

fn exit_for(status: Status) -> i32 {
    match status {
        Status::Optimal | Status::Infeasible => EXIT_OK,
        Status::TimeLimit | Status::IterLimit => EXIT_LIMIT,
    }
}

#[derive(Serialize, Debug, Clone)]
pub struct SolveReport {
    pub mode: String,
    pub formulation: String,
    pub status: String,
    /// Objective in minimization form.
    pub ub: f64,
    pub lb: f64,
    pub gap: f64,
    pub incumbent: Option<Vec<f64>>,
    pub iterations: usize,
    pub wall_time_s: f64,
}

impl SolveReport {
    fn new(mode: &str, formulation: Formulation, p: &Problem, r: &BnBResult) -> Self {
        SolveReport {
            mode: mode.to_string(),
            formulation: formulation.to_string(),
            status: r.status.to_string(),
            ub: r.ub,
            lb: r.lb,
            gap: r.gap(),
            incumbent: r.incumbent.as_ref().map(|x| x[..p.n_dof].to_vec()),
            iterations: r.iterations,
            wall_time_s: r.wall_time,
        }
    }

    fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "status      {}", self.status);
        let _ = writeln!(s, "ub          {:.10e}", self.ub);
        let _ = writeln!(s, "lb          {:.10e}", self.lb);
        let _ = writeln!(s, "gap         {:.3e}", self.gap);
        match &self.incumbent {
            Some(x) => {
                let xs: Vec<String> = x.iter().map(|v| format!("{v:.8}")).collect();
                let _ = writeln!(s, "incumbent   [{}]", xs.join(", "));
            }
            None => {
                let _ = writeln!(s, "incumbent   none");
            }
        }
        let _ = writeln!(s, "iterations  {}", self.iterations);
        let _ = write!(s, "time        {:.3} s", self.wall_time_s);
        s
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::InvalidInput(e.to_string()))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

fn cmd_train(a: &TrainArgs) -> Result<i32> {
    let kernel: KernelKind = a.nu.parse()?;
    let bounds = a.bounds.as_deref().map(parse_bounds).transpose()?;
    let data = read_training_csv(&a.csv, bounds)?;
    let (model, value) = train(&data, kernel, a.restarts, a.seed)?;
    model.save(&a.out)?;
    println!("negative log posterior {value:.10e}");
    Ok(EXIT_OK)
}

/// Builds the problem requested by `solve` flags.
pub fn build_problem(a: &SolveArgs, model: Arc<GpModel>) -> Result<Problem> {
    let usage = |m: &str| Err(Error::InvalidInput(m.to_string()));
    if a.formulation == FormulationArg::Fs && a.mode != Mode::MeanMin {
        return usage("the full-space formulation is available for mean-min only");
    }
    if a.mode != Mode::Chance && (a.con_model.is_some() || a.c.is_some()) {
        return usage("--con-model and --c apply to chance mode only");
    }
    if !matches!(a.mode, Mode::Ei | Mode::Pi) && a.fmin.is_some() {
        return usage("--fmin applies to ei and pi only");
    }
    if a.mode != Mode::Lcb && a.kappa.is_some() {
        return usage("--kappa applies to lcb only");
    }
    match a.mode {
        Mode::MeanMin => match a.formulation {
            FormulationArg::Rs => build_rs_mean(model, Sense::Min),
            FormulationArg::Fs => build_fs_mean(model, Sense::Min),
        },
        Mode::Chance => {
            let (Some(path), Some(c)) = (&a.con_model, a.c) else {
                return usage("chance mode needs --con-model and --c");
            };
            let con = GpModel::load(path)?;
            build_chance_constrained(model, con, c, a.z)
        }
        Mode::Ei | Mode::Pi => {
            let f_min = a.fmin.unwrap_or_else(|| best_training_output(&model));
            let spec = if a.mode == Mode::Ei { AcquisitionSpec::ei(f_min)? } else { AcquisitionSpec::pi(f_min)? };
            build_acquisition(model, &spec)
        }
        Mode::Lcb => {
            let Some(kappa) = a.kappa else {
                return usage("lcb mode needs --kappa");
            };
            build_acquisition(model, &AcquisitionSpec::lcb(kappa)?)
        }
    }
}

fn cmd_solve(a: &SolveArgs) -> Result<i32> {
    let settings = a.solver.settings()?;
    let model = Arc::new(GpModel::load(&a.model)?);
    let p = build_problem(a, model)?;
    let r = solve(&p, &settings)?;
    let mode = a.mode.to_possible_value().map(|v| v.get_name().to_string()).unwrap_or_default();
    let report = SolveReport::new(&mode, a.formulation.into(), &p, &r);
    println!("{}", report.render());
    if let Some(out) = &a.out {
        write_json(out, &report)?;
    }
    Ok(exit_for(r.status))
}

/// One benchmark run.
#[derive(Clone, Debug, PartialEq)]
pub struct BenchmarkRow {
    pub n: usize,
    pub kernel: KernelKind,
    pub formulation: Formulation,
    pub use_envelopes: bool,
    pub repetition: usize,
    pub wall_time: f64,
    pub iterations: usize,
    pub time_per_iteration: f64,
    pub ub: f64,
    pub lb: f64,
    pub status: String,
}

impl BenchmarkRow {
    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{:.6e},{},{:.6e},{:.12e},{:.12e},{}",
            self.n,
            self.kernel,
            self.formulation,
            self.use_envelopes,
            self.repetition,
            self.wall_time,
            self.iterations,
            self.time_per_iteration,
            self.ub,
            self.lb,
            self.status
        )
    }
}

#[derive(Clone, Debug)]
pub struct BenchmarkConfig {
    pub ns: Vec<usize>,
    pub reps: usize,
    pub kernel: KernelKind,
    pub formulations: Vec<Formulation>,
    pub envelopes: Vec<bool>,
    pub time_limit: Duration,
    pub restarts: usize,
    pub seed: u64,
    pub jobs: usize,
}

fn cell_seed(seed: u64, n: usize, rep: usize) -> u64 {
    seed.wrapping_mul(1_000_003).wrapping_add((n as u64) << 20).wrapping_add(rep as u64)
}

fn run_cell(cfg: &BenchmarkConfig, n: usize, rep: usize) -> Vec<BenchmarkRow> {
    let seed = cell_seed(cfg.seed, n, rep);
    let failed = |formulation, use_envelopes, status: String| BenchmarkRow {
        n,
        kernel: cfg.kernel,
        formulation,
        use_envelopes,
        repetition: rep,
        wall_time: 0.0,
        iterations: 0,
        time_per_iteration: 0.0,
        ub: f64::NAN,
        lb: f64::NAN,
        status,
    };
    let model = peaks_dataset(n, seed).and_then(|d| train(&d, cfg.kernel, cfg.restarts, seed)).map(|(m, _)| Arc::new(m));
    let mut rows = Vec::new();
    for &formulation in &cfg.formulations {
        for &use_envelopes in &cfg.envelopes {
            let model = match &model {
                Ok(m) => m.clone(),
                Err(_) => {
                    rows.push(failed(formulation, use_envelopes, "train_error".into()));
                    continue;
                }
            };
            let problem = match formulation {
                Formulation::Rs => build_rs_mean(model, Sense::Min),
                Formulation::Fs => build_fs_mean(model, Sense::Min),
            };
            let settings = Settings { max_time: cfg.time_limit, use_envelopes, seed, ..Settings::default() };
            match problem.and_then(|p| solve(&p, &settings)) {
                Ok(r) => rows.push(BenchmarkRow {
                    n,
                    kernel: cfg.kernel,
                    formulation,
                    use_envelopes,
                    repetition: rep,
                    wall_time: r.wall_time,
                    iterations: r.iterations,
                    time_per_iteration: r.time_per_iteration,
                    ub: r.ub,
                    lb: r.lb,
                    status: r.status.to_string(),
                }),
                Err(_) => rows.push(failed(formulation, use_envelopes, "solver_error".into())),
            }
        }
    }
    rows
}

/// Runs the full sweep. Rows come back ordered by N, repetition,
/// formulation and envelope mode regardless of `jobs`.
pub fn run_benchmark(cfg: &BenchmarkConfig) -> Vec<BenchmarkRow> {
    let cells: Vec<(usize, usize)> = cfg.ns.iter().flat_map(|&n| (0..cfg.reps).map(move |r| (n, r))).collect();
    let jobs = cfg.jobs.max(1).min(cells.len().max(1));
    let mut results: Vec<Vec<BenchmarkRow>> = vec![Vec::new(); cells.len()];
    if jobs == 1 {
        for (slot, &(n, r)) in results.iter_mut().zip(&cells) {
            *slot = run_cell(cfg, n, r);
        }
    } else {
        let next = std::sync::atomic::AtomicUsize::new(0);
        let done = std::sync::Mutex::new(&mut results);
        std::thread::scope(|s| {
            for _ in 0..jobs {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                    let Some(&(n, r)) = cells.get(i) else { break };
                    let rows = run_cell(cfg, n, r);
                    done.lock().expect("worker panicked")[i] = rows;
                });
            }
        });
    }
    results.into_iter().flatten().collect()
}

pub fn write_benchmark_csv(path: &Path, rows: &[BenchmarkRow]) -> Result<()> {
    let mut text = String::from(BENCHMARK_HEADER);
    text.push('\n');
    for r in rows {
        text.push_str(&r.to_csv_line());
        text.push('\n');
    }
    std::fs::write(path, text)?;
    Ok(())
}

pub fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(f64::total_cmp);
    let m = values.len() / 2;
    if values.len() % 2 == 1 {
        values[m]
    } else {
        0.5 * (values[m - 1] + values[m])
    }
}

/// Least-squares slope of `log y` against `log x` over positive pairs.
pub fn loglog_slope(points: &[(f64, f64)]) -> f64 {
    let pts: Vec<(f64, f64)> =
        points.iter().filter(|(x, y)| *x > 0.0 && *y > 0.0).map(|(x, y)| (x.ln(), y.ln())).collect();
    let n = pts.len() as f64;
    if pts.len() < 2 {
        return f64::NAN;
    }
    let (mx, my) = (pts.iter().map(|p| p.0).sum::<f64>() / n, pts.iter().map(|p| p.1).sum::<f64>() / n);
    let sxy: f64 = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = pts.iter().map(|(x, _)| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// Median of `field` over the rows of one configuration at one N.
pub fn median_of(rows: &[BenchmarkRow], n: usize, f: Formulation, env: bool, field: fn(&BenchmarkRow) -> f64) -> f64 {
    let mut v: Vec<f64> = rows
        .iter()
        .filter(|r| r.n == n && r.formulation == f && r.use_envelopes == env && r.status != "train_error" && r.status != "solver_error")
        .map(field)
        .collect();
    median(&mut v)
}

fn summarize(cfg: &BenchmarkConfig, rows: &[BenchmarkRow]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{:>5} {:>4} {:>5} {:>12} {:>10} {:>14}", "N", "form", "env", "median_t_s", "median_it", "median_t/it_s");
    for &f in &cfg.formulations {
        for &env in &cfg.envelopes {
            let mut time_pts = Vec::new();
            let mut tpi_pts = Vec::new();
            for &n in &cfg.ns {
                let t = median_of(rows, n, f, env, |r| r.wall_time);
                let it = median_of(rows, n, f, env, |r| r.iterations as f64);
                let tpi = median_of(rows, n, f, env, |r| r.time_per_iteration);
                let _ = writeln!(s, "{n:>5} {f:>4} {env:>5} {t:>12.4e} {it:>10.1} {tpi:>14.4e}");
                time_pts.push((n as f64, t));
                tpi_pts.push((n as f64, tpi));
            }
            let reference = if f == Formulation::Fs { 2.958 } else { 1.156 };
            let _ = writeln!(
                s,
                "slope {f} env={env}: time ~ N^{:.3}, time/iter ~ N^{:.3} (published time exponent {reference})",
                loglog_slope(&time_pts),
                loglog_slope(&tpi_pts)
            );
        }
    }
    s
}

fn cmd_benchmark(a: &BenchArgs) -> Result<i32> {
    if a.ns.is_empty() || a.ns.contains(&0) || a.reps == 0 {
        return Err(Error::InvalidInput("need positive training sizes and repetitions".into()));
    }
    if !(a.time_limit.is_finite() && a.time_limit >= 0.0) {
        return Err(Error::InvalidInput("time limit must be a non-negative number of seconds".into()));
    }
    let mut formulations: Vec<Formulation> = a.formulations.iter().map(|&f| f.into()).collect();
    formulations.dedup();
    let mut envelopes: Vec<bool> = a.envelopes.iter().map(|&e| e == EnvelopeMode::On).collect();
    envelopes.dedup();
    let cfg = BenchmarkConfig {
        ns: a.ns.clone(),
        reps: a.reps,
        kernel: a.nu.parse()?,
        formulations,
        envelopes,
        time_limit: Duration::from_secs_f64(a.time_limit),
        restarts: a.restarts,
        seed: a.seed,
        jobs: a.jobs,
    };
    let rows = run_benchmark(&cfg);
    write_benchmark_csv(&a.out, &rows)?;
    print!("{}", summarize(&cfg, &rows));
    Ok(EXIT_OK)
}

/// Outcome of one acquisition-optimization step.
#[derive(Serialize, Debug, Clone)]
pub struct BayesoptOutcome {
    pub acquisition: String,
    /// Next sample; `None` if no assignment had a feasible incumbent.
    pub point: Option<Vec<f64>>,
    pub mean: f64,
    pub std_dev: f64,
    /// Acquisition value in its natural sense.
    pub value: f64,
    pub inner_solves: usize,
    pub status: String,
}

/// Integer levels of each listed dimension inside the model's input box.
pub fn integer_assignments(model: &GpModel, int_dims: &[usize]) -> Result<Vec<Vec<(usize, f64)>>> {
    let mut combos: Vec<Vec<(usize, f64)>> = vec![Vec::new()];
    let mut seen = Vec::new();
    for &d in int_dims {
        if d >= model.dim || seen.contains(&d) {
            return Err(Error::InvalidInput(format!("invalid or repeated integer dimension {d}")));
        }
        seen.push(d);
        let b = model.input_bounds[d];
        let (lo, hi) = (b.lo.ceil(), b.hi.floor());
        if lo > hi {
            return Err(Error::InvalidInput(format!("dimension {d} has no integer value in [{}, {}]", b.lo, b.hi)));
        }
        let levels = (hi - lo) as usize + 1;
        if combos.len().saturating_mul(levels) > MAX_INTEGER_ASSIGNMENTS {
            return Err(Error::InvalidInput(format!("more than {MAX_INTEGER_ASSIGNMENTS} integer assignments")));
        }
        combos = combos
            .into_iter()
            .flat_map(|c| {
                (0..levels).map(move |k| {
                    let mut c = c.clone();
                    c.push((d, lo + k as f64));
                    c
                })
            })
            .collect();
    }
    Ok(combos)
}

/// Solves the acquisition problem once per integer assignment and keeps
/// the best incumbent.
pub fn bayesopt_step(
    model: Arc<GpModel>,
    spec: &AcquisitionSpec,
    int_dims: &[usize],
    settings: &Settings,
) -> Result<BayesoptOutcome> {
    let assignments = integer_assignments(&model, int_dims)?;
    let base = build_acquisition(model.clone(), spec)?;
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut limited = false;
    for assignment in &assignments {
        let mut p = base.clone();
        for &(d, v) in assignment {
            p.bounds[d] = Interval::point(v);
        }
        let r = solve(&p, settings)?;
        limited |= matches!(r.status, Status::TimeLimit | Status::IterLimit);
        if let Some(x) = r.incumbent {
            if best.as_ref().is_none_or(|(ub, _)| r.ub < *ub) {
                best = Some((r.ub, x[..p.n_dof].to_vec()));
            }
        }
    }
    let status = if best.is_none() {
        Status::Infeasible
    } else if limited {
        Status::TimeLimit
    } else {
        Status::Optimal
    };
    let (point, mean, std_dev, value) = match best {
        Some((_, x)) => {
            let mu = model.predict_mean(&x);
            let sd = model.predict_variance(&x).sqrt();
            let v = spec.value(mu, sd)?;
            (Some(x), mu, sd, v)
        }
        None => (None, f64::NAN, f64::NAN, f64::NAN),
    };
    Ok(BayesoptOutcome {
        acquisition: spec.kind.to_string(),
        point,
        mean,
        std_dev,
        value,
        inner_solves: assignments.len(),
        status: status.to_string(),
    })
}

fn cmd_bayesopt(a: &BayesArgs) -> Result<i32> {
    let settings = a.solver.settings()?;
    let model = match (&a.model, &a.csv) {
        (Some(path), _) => GpModel::load(path)?,
        (None, Some(csv)) => {
            let bounds = a.bounds.as_deref().map(parse_bounds).transpose()?;
            let data = read_training_csv(csv, bounds)?;
            train(&data, a.nu.parse()?, a.restarts, a.solver.seed)?.0
        }
        (None, None) => return Err(Error::InvalidInput("need --model or --csv".into())),
    };
    let spec = match a.acquisition {
        AcqArg::Ei => AcquisitionSpec::ei(a.fmin.unwrap_or_else(|| best_training_output(&model)))?,
        AcqArg::Pi => AcquisitionSpec::pi(a.fmin.unwrap_or_else(|| best_training_output(&model)))?,
        AcqArg::Lcb => AcquisitionSpec::lcb(a.kappa)?,
    };
    let out = bayesopt_step(Arc::new(model), &spec, &a.int_dims, &settings)?;
    match &out.point {
        Some(x) => {
            let xs: Vec<String> = x.iter().map(|v| format!("{v:.8}")).collect();
            println!("point        [{}]", xs.join(", "));
        }
        None => println!("point        none"),
    }
    println!("mean         {:.10e}", out.mean);
    println!("std_dev      {:.10e}", out.std_dev);
    println!("{:<12} {:.10e}", out.acquisition, out.value);
    println!("inner_solves {}", out.inner_solves);
    println!("status       {}", out.status);
    if let Some(path) = &a.out {
        write_json(path, &out)?;
    }
    Ok(match out.status.as_str() {
        "time_limit" => EXIT_LIMIT,
        _ => EXIT_OK,
    })
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let result = match &cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Solve(a) => cmd_solve(a),
        Command::BenchmarkPeaks(a) => cmd_benchmark(a),
        Command::BayesoptStep(a) => cmd_bayesopt(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_USAGE
        }
    }
}
