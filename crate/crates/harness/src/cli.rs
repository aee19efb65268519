//! Command line interface of the `anm` binary.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use anm_modal::measure::{apply, draw_scheme_with, Dims, SchemeKind, SpatialDistribution};
use anm_modal::modal::{extract, LocateOptions};
use anm_modal::sdpsolve::{certificate_check, solve, SolveMode};
use anm_modal::structsim::solve_modes;
use anm_modal::{AnmProblem, CMatrix, SolverOptions, C64};
use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, SystemFile};
use crate::presets::{preset, NAMES};
use crate::sweep::{run_to_files, summary_path, SummaryRow};
use crate::trial::scheme_budget;
use crate::HarnessError;

#[derive(Debug, Parser)]
#[command(name = "anm", version, about = "Gridless modal analysis by atomic norm minimization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a preset or a JSON experiment config.
    Run(RunArgs),
    /// List the built-in presets.
    ListPresets,
    /// Print a preset as a JSON config.
    ShowPreset { name: String },
    /// Recover modes from a data matrix under a random observation scheme.
    Solve(SolveArgs),
    /// Print the modal parameters of a structural system.
    Modes { system: PathBuf },
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Preset name or path to a config file.
    target: String,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    /// Row CSV; the summary goes next to it with suffix `.summary.csv`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: available parallelism).
    #[arg(long)]
    threads: Option<usize>,
    #[command(flatten)]
    solver: SolverFlags,
    #[arg(long = "locate.eps-peak")]
    eps_peak: Option<f64>,
}

#[derive(Debug, Default, Args)]
struct SolverFlags {
    #[arg(long = "solver.rho")]
    rho: Option<f64>,
    #[arg(long = "solver.max-iters")]
    max_iters: Option<usize>,
    #[arg(long = "solver.tol-abs")]
    tol_abs: Option<f64>,
    #[arg(long = "solver.tol-rel")]
    tol_rel: Option<f64>,
    #[arg(long = "solver.adapt-rho")]
    adapt_rho: Option<bool>,
    #[arg(long = "solver.anderson-memory")]
    anderson_memory: Option<usize>,
    #[arg(long = "solver.certificate-tolerance")]
    certificate_tolerance: Option<f64>,
}

impl SolverFlags {
    fn apply(&self, o: &mut SolverOptions) {
        if self.rho.is_some() {
            o.rho = self.rho;
        }
        if let Some(v) = self.max_iters {
            o.max_iters = v;
        }
        if let Some(v) = self.tol_abs {
            o.tol_abs = v;
        }
        if let Some(v) = self.tol_rel {
            o.tol_rel = v;
        }
        if let Some(v) = self.adapt_rho {
            o.adapt_rho = v;
        }
        if let Some(v) = self.anderson_memory {
            o.anderson_memory = v;
        }
        if let Some(v) = self.certificate_tolerance {
            o.certificate_tolerance = v;
        }
    }
}

#[derive(Debug, Args)]
struct SolveArgs {
    /// JSON data file: `{"real": [[..]], "imag": [[..]]}`, rows index time.
    data: PathBuf,
    #[arg(long, default_value = "full")]
    scheme: SchemeKind,
    /// Kept rows (sync), samples per sensor on average (async) or M′
    /// (temporal); defaults to M.
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Penalized problem with this λ instead of exact recovery.
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    solver: SolverFlags,
    #[arg(long = "locate.eps-peak")]
    eps_peak: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct DataFile {
    pub real: Vec<Vec<f64>>,
    #[serde(default)]
    pub imag: Option<Vec<Vec<f64>>>,
}

impl DataFile {
    pub fn from_matrix(x: &CMatrix) -> Self {
        let rows = |f: fn(&C64) -> f64| x.row_iter().map(|r| r.iter().map(f).collect()).collect();
        DataFile { real: rows(|c| c.re), imag: Some(rows(|c| c.im)) }
    }

    fn matrix(&self) -> Result<CMatrix, HarnessError> {
        let m = self.real.len();
        let n = self.real.first().map_or(0, Vec::len);
        let rect = |rows: &Vec<Vec<f64>>| rows.len() == m && rows.iter().all(|r| r.len() == n);
        if m == 0 || n == 0 || !rect(&self.real) || self.imag.as_ref().is_some_and(|i| !rect(i)) {
            return Err(HarnessError::Config("data must be a nonempty rectangular M x N array".into()));
        }
        Ok(CMatrix::from_fn(m, n, |i, j| C64::new(self.real[i][j], self.imag.as_ref().map_or(0.0, |im| im[i][j]))))
    }
}

#[derive(Debug, Serialize)]
struct SolveReport {
    scheme: SchemeKind,
    measurements: usize,
    frequencies: Vec<f64>,
    amplitudes: Vec<f64>,
    /// N rows of `[re, im]` per mode.
    mode_shapes: Vec<Vec<[f64; 2]>>,
    objective: f64,
    iterations: usize,
    converged: bool,
    certificate_passed: bool,
    dual_norm: f64,
}

fn load_config(target: &str) -> Result<ExperimentConfig, HarnessError> {
    if NAMES.contains(&target) {
        return preset(target);
    }
    let path = Path::new(target);
    if path.exists() {
        return ExperimentConfig::load(path);
    }
    Err(HarnessError::Usage(format!("'{target}' is neither a preset ({}) nor a config file", NAMES.join(", "))))
}

fn default_threads() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn print_summary<W: Write>(out: &mut W, rows: &[SummaryRow]) -> std::io::Result<()> {
    writeln!(out, "{:<13} {:<9} {:>3} {:>2} {:>6} {:>9} {:>6} {:>6} {:>8} {:>10}", "method", "scheme", "N", "K", "budget", "sigma", "shape", "data", "mac", "mse")?;
    for s in rows {
        let p = &s.point;
        writeln!(
            out,
            "{:<13} {:<9} {:>3} {:>2} {:>6} {:>9.3e} {:>6.3} {:>6.3} {:>8.4} {:>10}",
            p.method.name(),
            p.scheme.name(),
            p.sensors,
            p.order,
            p.budget,
            p.sigma,
            s.shape_success_rate,
            s.data_success_rate,
            s.mean_mac,
            s.mean_mse.map_or("-".into(), |v| format!("{v:.3e}")),
        )?;
    }
    Ok(())
}

fn run(args: RunArgs, out: &mut impl Write) -> Result<(), HarnessError> {
    let mut cfg = load_config(&args.target)?;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(t) = args.trials {
        cfg.trials = t;
    }
    let mut o = cfg.solver.options();
    args.solver.apply(&mut o);
    cfg.solver = crate::config::SolverConfig {
        rho: o.rho,
        max_iters: o.max_iters,
        tol_abs: o.tol_abs,
        tol_rel: o.tol_rel,
        adapt_rho: o.adapt_rho,
        anderson_memory: o.anderson_memory,
        certificate_tolerance: o.certificate_tolerance,
        ..cfg.solver
    };
    if let Some(e) = args.eps_peak {
        cfg.locate.eps_peak = e;
    }
    cfg.validate()?;
    let path = args.out.or_else(|| cfg.output.clone()).unwrap_or_else(|| PathBuf::from(format!("{}.csv", cfg.name)));
    let summary = run_to_files(&cfg, &path, args.threads.unwrap_or_else(default_threads))?;
    print_summary(out, &summary)?;
    writeln!(out, "wrote {} and {}", path.display(), summary_path(&path).display())?;
    Ok(())
}

fn solve_cmd(args: SolveArgs, out: &mut impl Write) -> Result<(), HarnessError> {
    let text = std::fs::read_to_string(&args.data)?;
    let x = serde_json::from_str::<DataFile>(&text)?.matrix()?;
    let (m, n) = x.shape();
    let budget = scheme_budget(args.scheme, args.budget.unwrap_or(m), n);
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let spec = draw_scheme_with(args.scheme, Dims { rows: m, cols: n, budget }, SpatialDistribution::Gaussian, &mut rng)
        .map_err(|e| HarnessError::Usage(e.to_string()))?;
    let obs = apply(&spec, &x)?;
    let mode = match args.lambda {
        Some(l) => SolveMode::Penalized(l),
        None => SolveMode::Exact,
    };
    let problem = AnmProblem::new(spec, obs, mode).map_err(|e| HarnessError::Usage(e.to_string()))?;
    let mut opts = SolverOptions::default();
    args.solver.apply(&mut opts);
    let sol = solve(&problem, &opts)?;
    let check = certificate_check(&sol, &problem, opts.certificate_tolerance);
    let mut locate = LocateOptions::default();
    if let Some(e) = args.eps_peak {
        locate.eps_peak = e;
    }
    let est = extract(&sol, &locate)?;
    let report = SolveReport {
        scheme: args.scheme,
        measurements: problem.spec.measurements(),
        frequencies: est.frequencies.clone(),
        amplitudes: est.amplitudes.clone(),
        mode_shapes: est.mode_shapes.column_iter().map(|c| c.iter().map(|v| [v.re, v.im]).collect()).collect(),
        objective: sol.objective,
        iterations: sol.iterations,
        converged: sol.converged,
        certificate_passed: check.passed(),
        dual_norm: check.dual_norm,
    };
    let json = serde_json::to_string_pretty(&report)?;
    match args.out {
        Some(p) => std::fs::write(p, json + "\n")?,
        None => writeln!(out, "{json}")?,
    }
    Ok(())
}

fn modes_cmd(path: &Path, out: &mut impl Write) -> Result<(), HarnessError> {
    let sys = SystemFile::load(path)?.build()?;
    let modes = solve_modes(&sys)?;
    writeln!(out, "{:>4} {:>10} {:>10} {:>8}  shape", "mode", "F (Hz)", "Fd (Hz)", "zeta")?;
    for k in 0..sys.dof() {
        let shape: Vec<String> = modes.mode_shapes.column(k).iter().map(|v| format!("{v:+.4}")).collect();
        writeln!(
            out,
            "{:>4} {:>10.4} {:>10.4} {:>8.4}  {}",
            k + 1,
            modes.natural_frequencies[k],
            modes.damped_frequencies[k],
            modes.damping_ratios[k],
            shape.join(" ")
        )?;
    }
    Ok(())
}

fn dispatch(cli: Cli, out: &mut impl Write) -> Result<(), HarnessError> {
    match cli.command {
        Command::Run(a) => run(a, out),
        Command::ListPresets => {
            for n in NAMES {
                writeln!(out, "{n}")?;
            }
            Ok(())
        }
        Command::ShowPreset { name } => {
            writeln!(out, "{}", preset(&name)?.to_json())?;
            Ok(())
        }
        Command::Solve(a) => solve_cmd(a, out),
        Command::Modes { system } => modes_cmd(&system, out),
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the exit code: 0 on success, 2 on usage errors, 1 on runtime failures.
pub fn main_with<I, T>(args: I, out: &mut impl Write, err: &mut impl Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { write!(out, "{text}") } else { write!(err, "{text}") };
            return code;
        }
    };
    match dispatch(cli, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}
