//! Batch front-end. Exit codes: 0 success, 1 solver failure, 2 validation
//! failure, 3 I/O or parse error.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};

use crate::analysis::{stability_sweep, AnalysisError};
use crate::config::{parse_config, ConfigError};
use crate::control::{solve_constrained, solve_mckean_vlasov, InitialLawPolicy, SolveError, SolveReport, SolverOptions};
use crate::dynamics::Dynamics;
use crate::fp::{log_density_diagnostics, FpError, MarginalFlow};
use crate::hjb::{estimate_bounds, feedback_control, ValueField};
use crate::io::{self, IoError, RunManifest};
use crate::oracle::{brute_force_oracle, OracleError, OracleGrid};
use crate::particles::{girsanov_cost, gibbs_conditioning, path_density_check, simulate_with, ParticleError, SimConfig};

#[derive(Debug, Parser)]
#[command(name = "entroproj", version, about = "Entropic projection of diffusions under running distributional constraints")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve the constrained problem (law-dependent drifts frozen at ν₀).
    Solve(Flags),
    /// Solve with the McKean-Vlasov fixed point over the drift's law.
    MkvSolve(Flags),
    /// Stability sweep over ε against the ε = 0 solution.
    Sweep(Flags),
    /// Simulate the optimal controlled diffusion and check costs.
    Particles(Flags),
    /// Rejection-sampling conditioning experiment.
    Gibbs(Flags),
    /// Log-density diagnostics and derivative bounds of a solved run.
    Diagnose(Flags),
    /// Tiny finite-chain reference solution compared with the grid solver.
    Oracle(Flags),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum LawFlag {
    Optimal,
    AtomTilt,
}

#[derive(Debug, clap::Args)]
struct Flags {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// Defaults to the config's solver seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated ε values for the sweep.
    #[arg(long, value_delimiter = ',')]
    epsilon_list: Option<Vec<f64>>,
    #[arg(long, default_value_t = 1000)]
    paths: usize,
    /// Population size for gibbs (default: 8, 16, 32 and 64).
    #[arg(long)]
    particles: Option<usize>,
    #[arg(long, default_value_t = 500)]
    reps: usize,
    #[arg(long, value_enum, default_value = "optimal")]
    initial_law: LawFlag,
    /// Directory of a previous solve for diagnose (solves afresh if absent).
    #[arg(long)]
    run_dir: Option<PathBuf>,
    /// Lattice window of the oracle chain.
    #[arg(long, value_delimiter = ',', default_value = "-4,4", allow_hyphen_values = true)]
    oracle_window: Vec<f64>,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Particles(#[from] ParticleError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Fp(#[from] FpError),
    #[error("{0}")]
    Usage(String),
}

fn solve_code(e: &SolveError) -> i32 {
    match e {
        SolveError::Validation(_) | SolveError::Model(_) => 2,
        _ => 1,
    }
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(ConfigError::Model(_)) => 2,
            CliError::Config(_) | CliError::Io(_) | CliError::Usage(_) => 3,
            CliError::Solve(e) => solve_code(e),
            CliError::Oracle(OracleError::Size { .. }) => 3,
            CliError::Oracle(OracleError::LawDependent | OracleError::Infeasible { .. }) => 2,
            CliError::Oracle(OracleError::OracleNotConverged { .. }) => 1,
            CliError::Particles(ParticleError::Solve(e)) => solve_code(e),
            CliError::Particles(ParticleError::NonPositiveEpsilon) => 2,
            CliError::Particles(_) => 1,
            CliError::Analysis(AnalysisError::Baseline(e) | AnalysisError::Solve(e)) => solve_code(e),
            CliError::Analysis(AnalysisError::LawDependentDrift) => 2,
            CliError::Analysis(_) => 1,
            CliError::Fp(_) => 1,
        }
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn run<I: IntoIterator<Item = String>>(args: I) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 3 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

struct Context {
    name: &'static str,
    flags: Flags,
    scenario: crate::model::Scenario,
    options: SolverOptions,
    seed: u64,
    config_bytes: Vec<u8>,
    started: Instant,
    outputs: Vec<PathBuf>,
}

impl Context {
    fn out(&self, name: &str) -> PathBuf {
        self.flags.out_dir.join(name)
    }

    fn csv(&mut self, name: &str, csv: io::Csv) -> Result<(), CliError> {
        let p = self.out(name);
        csv.write(&p)?;
        self.outputs.push(p);
        Ok(())
    }

    fn json<T: serde::Serialize>(&mut self, name: &str, v: &T) -> Result<(), CliError> {
        let p = self.out(name);
        io::write_json(&p, v)?;
        self.outputs.push(p);
        Ok(())
    }

    fn solve(&self, mkv: bool) -> Result<SolveReport, CliError> {
        Ok(if mkv { solve_mckean_vlasov(&self.scenario, &self.options)? } else { solve_constrained(&self.scenario, &self.options)? })
    }

    fn finish(mut self) -> Result<(), CliError> {
        let manifest = RunManifest {
            command: self.name.into(),
            config_hash: io::config_hash(&self.config_bytes),
            seed: self.seed,
            tool_version: env!("CARGO_PKG_VERSION").into(),
            wall_time_seconds: self.started.elapsed().as_secs_f64(),
            outputs: self.outputs.iter().map(|p| p.display().to_string()).collect(),
        };
        let p = self.out("manifest.json");
        io::write_json(&p, &manifest)?;
        self.outputs.push(p);
        eprintln!("{}: wrote {} files to {}", self.name, self.outputs.len(), self.flags.out_dir.display());
        Ok(())
    }
}

fn load(name: &'static str, flags: Flags) -> Result<Context, CliError> {
    let config_bytes = std::fs::read(&flags.config).map_err(|e| ConfigError::Read { path: flags.config.clone(), message: e.to_string() })?;
    let cfg = parse_config(&flags.config)?;
    let mut options = cfg.options;
    options.initial_law = match flags.initial_law {
        LawFlag::Optimal => InitialLawPolicy::Optimal,
        LawFlag::AtomTilt => InitialLawPolicy::AtomTilt,
    };
    let seed = flags.seed.unwrap_or(options.seed);
    options.seed = seed;
    Ok(Context { name, flags, scenario: cfg.scenario, options, seed, config_bytes, started: Instant::now(), outputs: Vec::new() })
}

#[derive(serde::Serialize)]
struct SweepSummary<'a> {
    slopes: &'a crate::analysis::Slopes,
    active_intervals: usize,
    pinsker_holds: bool,
    failed: &'a [(f64, String)],
    local_max_derivative: Vec<(f64, f64)>,
}

#[derive(serde::Serialize)]
struct ParticleSummary {
    paths: usize,
    optimal_value: f64,
    girsanov_cost: crate::particles::Estimate,
    path_density: crate::particles::PathDensityCheck,
}

#[derive(serde::Serialize)]
struct OracleSummary {
    oracle_value: f64,
    oracle_iterations: usize,
    oracle_support: [bool; 3],
    grid_value: f64,
    grid_support: [bool; 3],
    relative_difference: f64,
}

fn execute(command: Command) -> Result<(), CliError> {
    match command {
        Command::Solve(f) => {
            let mut ctx = load("solve", f)?;
            let report = ctx.solve(false)?;
            ctx.outputs.extend(io::write_report(&ctx.flags.out_dir, &report)?);
            ctx.finish()
        }
        Command::MkvSolve(f) => {
            let mut ctx = load("mkv-solve", f)?;
            let report = ctx.solve(true)?;
            ctx.outputs.extend(io::write_report(&ctx.flags.out_dir, &report)?);
            ctx.finish()
        }
        Command::Sweep(f) => {
            let mut ctx = load("sweep", f)?;
            let eps = ctx.flags.epsilon_list.clone().unwrap_or_else(|| (3..=7).map(|p| 0.5f64.powi(p)).collect());
            if eps.iter().any(|e| !(*e > 0.0)) {
                return Err(CliError::Usage("--epsilon-list must contain positive values".into()));
            }
            let sweep = stability_sweep(&ctx.scenario, &eps, &ctx.options)?;
            ctx.csv("stability.csv", io::stability_csv(&sweep))?;
            let summary = SweepSummary {
                slopes: &sweep.slopes,
                active_intervals: sweep.active_intervals,
                pinsker_holds: sweep.pinsker_holds,
                failed: &sweep.failed,
                local_max_derivative: sweep.records.iter().map(|r| (r.epsilon, r.local_max_derivative)).collect(),
            };
            ctx.json("stability_summary.json", &summary)?;
            let p = ctx.out("stability.gp");
            io::write_text(&p, &io::sweep_plot_script("stability.csv"))?;
            ctx.outputs.push(p);
            ctx.finish()
        }
        Command::Particles(f) => {
            let mut ctx = load("particles", f)?;
            let report = ctx.solve(true)?;
            let s = &ctx.scenario;
            let frozen = Dynamics::new(s, if s.mckean_vlasov { Some(&report.flow.densities) } else { None });
            let alpha = feedback_control(&report.value_field, s);
            let cfg = SimConfig {
                control: Some(&alpha),
                initial: Some(&report.tilted_init),
                frozen: Some(&frozen),
                ..SimConfig::new(ctx.flags.paths, ctx.seed)
            };
            let e = simulate_with(s, &cfg)?;
            let nu0 = s.initial_density().map_err(SolveError::from)?;
            let summary = ParticleSummary {
                paths: ctx.flags.paths,
                optimal_value: report.optimal_value,
                girsanov_cost: girsanov_cost(&e, &alpha, &report.tilted_init, &nu0),
                path_density: path_density_check(&report, s, ctx.flags.paths, ctx.seed)?,
            };
            ctx.csv("ensemble.csv", io::ensemble_csv(&e))?;
            ctx.json("particles.json", &summary)?;
            ctx.finish()
        }
        Command::Gibbs(f) => {
            let mut ctx = load("gibbs", f)?;
            let report = ctx.solve(true)?;
            let pops = ctx.flags.particles.map_or(vec![8, 16, 32, 64], |n| vec![n]);
            let rows = gibbs_conditioning(&ctx.scenario, &report, &pops, ctx.flags.reps, ctx.seed)?;
            ctx.csv("gibbs.csv", io::gibbs_csv(&rows))?;
            ctx.finish()
        }
        Command::Diagnose(f) => {
            let mut ctx = load("diagnose", f)?;
            let g = ctx.scenario.grid;
            let (flow, value) = match &ctx.flags.run_dir {
                Some(dir) => read_run(dir, &g)?,
                None => {
                    let r = ctx.solve(true)?;
                    (r.flow, r.value_field)
                }
            };
            let records = log_density_diagnostics(&flow)?;
            ctx.csv("log_density.csv", io::log_density_csv(&records))?;
            ctx.json("bounds.json", &estimate_bounds(&value))?;
            ctx.finish()
        }
        Command::Oracle(f) => {
            let mut ctx = load("oracle", f)?;
            let w = &ctx.flags.oracle_window;
            if w.len() != 2 || !(w[1] > w[0]) {
                return Err(CliError::Usage("--oracle-window takes two increasing values".into()));
            }
            let grid = OracleGrid { x_min: w[0], x_max: w[1], nx: crate::oracle::MAX_STATES, nt: crate::oracle::MAX_STEPS };
            let sol = brute_force_oracle(&ctx.scenario, grid)?;
            let report = ctx.solve(false)?;
            let mut csv = io::Csv::new(&["node", "t", "node_mass", "constraint_gap"]);
            for (k, (l, gap)) in sol.node_masses.iter().zip(&sol.constraint_gap).enumerate() {
                csv.row(&[k.to_string(), io::num(k as f64 * sol.dt), io::num(*l), io::num(*gap)]);
            }
            ctx.csv("oracle.csv", csv)?;
            let dt = ctx.scenario.grid.dt();
            let summary = OracleSummary {
                oracle_value: sol.value,
                oracle_iterations: sol.iterations,
                oracle_support: sol.multiplier.support(sol.dt, 0.01),
                grid_value: report.optimal_value,
                grid_support: report.lambda.support(dt, 0.01),
                relative_difference: (sol.value - report.optimal_value).abs() / report.optimal_value.abs().max(1e-12),
            };
            ctx.json("oracle.json", &summary)?;
            ctx.finish()
        }
    }
}

fn read_run(dir: &Path, g: &crate::model::SpaceTimeGrid) -> Result<(MarginalFlow, ValueField), CliError> {
    let densities = io::read_grid_csv(&dir.join("flow.csv"), 2, g)?;
    let phi = io::read_grid_csv(&dir.join("value.csv"), 2, g)?;
    let n = densities.len();
    let flow = MarginalFlow { grid: *g, densities, leaked_mass: vec![0.0; n], substeps: 0 };
    Ok((flow, ValueField::from_phi(*g, phi)))
}
