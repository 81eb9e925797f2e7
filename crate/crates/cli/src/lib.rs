//! Command-line front end for the mixed-market solver.

pub mod config;
pub mod format;

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use mixmarket_core::general::{complement_outcome, solve_general};
use mixmarket_core::oracle::{
    grid_argmax_revenue, posted_price_best_response, simulate_market, two_step_dominance_check,
    verify_ic_ir,
};
use mixmarket_core::solver::{mechanism_at_cutoff, solve_cutoff_with_tolerance};
use mixmarket_core::welfare::{aggregate_surplus_of, capacity_grid, hazard_criterion, surplus_at};
use mixmarket_core::{check_condition, solve_mechanism, sweep, Error, RegularDistribution, Timing};

use config::{parse_config, ConfigError, ConfigErrorKind, MarketConfig};
use format::{short, write_row, write_simulation, write_sweep, SURPLUS_HEADER};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NOT_REGULAR: i32 = 3;
pub const EXIT_CONVERGENCE: i32 = 4;

/// Thread-count override for the rayon pool.
pub const THREADS_ENV: &str = "MIXMARKET_THREADS";

pub const SWEEP_DEFAULT: (f64, f64, usize) = (0.01, 0.99, 99);
pub const FIGURE_DEFAULT: (f64, f64, usize) = (1e-6, 1.0 - 1e-4, 99);

#[derive(Debug, Parser)]
#[command(
    name = "mixmarket",
    version,
    about = "Monopoly pricing against a rationed public option"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, clap::Args)]
pub struct Common {
    /// Market configuration file.
    #[arg(long)]
    pub config: PathBuf,
    /// Output file; defaults to a file in the config's out_dir, else stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Figure {
    #[value(name = "1a")]
    F1a,
    #[value(name = "1b")]
    F1b,
    #[value(name = "2a")]
    F2a,
    #[value(name = "2b")]
    F2b,
}

impl Figure {
    fn file_name(self) -> &'static str {
        match self {
            Figure::F1a => "fig1a.csv",
            Figure::F1b => "fig1b.csv",
            Figure::F2a => "fig2a.csv",
            Figure::F2b => "fig2b.csv",
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Optimal mechanism at the configured capacity.
    Solve(Common),
    /// Equilibrium quantities and capacity derivatives over a capacity grid.
    Sweep(Common),
    /// Where capacity expansion lowers the monopoly price.
    Condition(Common),
    /// Finite-population market with a rationing lottery.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Posted price; defaults to the optimal price.
        #[arg(long)]
        price: Option<f64>,
        /// Number of consecutive seeds starting at the configured seed.
        #[arg(long, default_value_t = 1)]
        seeds: u64,
    },
    /// Cross-checks the solved mechanism against brute-force oracles.
    Verify(Common),
    /// Plot data: surplus by type (1a, 2a) or capacity sweeps (1b, 2b).
    Figures {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        which: Figure,
    },
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Solve(c) | Command::Sweep(c) | Command::Condition(c) | Command::Verify(c) => c,
            Command::Simulate { common, .. } | Command::Figures { common, .. } => common,
        }
    }
}

#[derive(Debug)]
pub enum CliError {
    Config(ConfigError),
    Core(Error),
    Io(PathBuf, io::Error),
    Usage(String),
    CheckFailed(Vec<String>),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(e) => write!(f, "config: {e}"),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Io(p, e) => write!(f, "{}: {e}", p.display()),
            CliError::Usage(m) => f.write_str(m),
            CliError::CheckFailed(names) => write!(f, "failed checks: {}", names.join(", ")),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

fn core_exit_code(e: &Error) -> i32 {
    match e {
        Error::NotRegular { .. } => EXIT_NOT_REGULAR,
        Error::Convergence(_) | Error::DegenerateSlope { .. } => EXIT_CONVERGENCE,
        Error::SweepPoint { source, .. } => core_exit_code(source),
        Error::Parameter(_) | Error::Domain { .. } => EXIT_CONFIG,
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(e) if e.kind == ConfigErrorKind::NotRegular => EXIT_NOT_REGULAR,
            CliError::Config(_) | CliError::Usage(_) => EXIT_CONFIG,
            CliError::Core(e) => core_exit_code(e),
            CliError::Io(..) => EXIT_IO,
            CliError::CheckFailed(_) => EXIT_CONVERGENCE,
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

pub fn load_config(path: &Path) -> CliResult<MarketConfig> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Io(path.to_path_buf(), e))?;
    parse_config(&text).map_err(CliError::Config)
}

/// Where CSV output goes, and where one-line summaries go alongside it.
struct Sink {
    path: Option<PathBuf>,
}

impl Sink {
    fn resolve(common: &Common, config: &MarketConfig, default_name: &str) -> Sink {
        let path = common
            .out
            .clone()
            .or_else(|| config.out_dir.as_ref().map(|d| d.join(default_name)));
        Sink { path }
    }

    fn write(
        &self,
        stdout: &mut dyn Write,
        body: impl FnOnce(&mut dyn Write) -> io::Result<()>,
    ) -> CliResult<()> {
        match &self.path {
            Some(path) => {
                if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                    fs::create_dir_all(dir).map_err(|e| CliError::Io(dir.to_path_buf(), e))?;
                }
                let mut buf = Vec::new();
                body(&mut buf).map_err(|e| CliError::Io(path.clone(), e))?;
                fs::write(path, buf).map_err(|e| CliError::Io(path.clone(), e))?;
                writeln!(stdout, "out={}", path.display())
                    .map_err(|e| CliError::Io(PathBuf::from("<stdout>"), e))
            }
            None => body(stdout).map_err(|e| CliError::Io(PathBuf::from("<stdout>"), e)),
        }
    }

    /// Summaries go to stdout unless stdout carries the CSV.
    fn summary<'a>(
        &self,
        stdout: &'a mut dyn Write,
        stderr: &'a mut dyn Write,
    ) -> &'a mut dyn Write {
        if self.path.is_some() {
            stdout
        } else {
            stderr
        }
    }
}

fn put(out: &mut dyn Write, key: &str, value: impl std::fmt::Display) -> CliResult<()> {
    writeln!(out, "{key}={value}").map_err(|e| CliError::Io(PathBuf::from("<output>"), e))
}

fn require_baseline(config: &MarketConfig, command: &str) -> CliResult<()> {
    if config.params().is_baseline() {
        Ok(())
    } else {
        Err(CliError::Usage(format!(
            "{command} needs the baseline market (quality_ratio = 1, public_price = 0, \
             timing = substitute)"
        )))
    }
}

fn capacity_grid_for(config: &MarketConfig, default: (f64, f64, usize)) -> CliResult<Vec<f64>> {
    let lo = config.k_min.unwrap_or(default.0);
    let hi = config.k_max.unwrap_or(default.1);
    let n = config.k_steps.unwrap_or(default.2);
    if lo >= hi {
        return Err(CliError::Usage(format!(
            "k_min {lo} must be below k_max {hi}"
        )));
    }
    Ok(capacity_grid(lo, hi, n))
}

fn solve(config: &MarketConfig, dist: &RegularDistribution, out: &mut dyn Write) -> CliResult<()> {
    let params = config.params();
    let k = config.capacity;
    if params.timing == Timing::Complement {
        let c = complement_outcome(dist, k)?;
        put(out, "price", short(c.price))?;
        put(out, "producer_surplus", short(c.producer_surplus))?;
        put(out, "consumer_surplus", short(c.aggregate_consumer_surplus))?;
        return Ok(());
    }
    if params.is_baseline() {
        let cutoff = solve_cutoff_with_tolerance(dist, k, config.tolerance)?;
        let m = mechanism_at_cutoff(dist, k, cutoff);
        let cs = aggregate_surplus_of(dist, &m)?;
        put(out, "cutoff", short(m.cutoff))?;
        put(out, "price", short(m.price))?;
        put(out, "pi", short(m.rationing_prob))?;
        put(out, "producer_surplus", short(m.producer_surplus))?;
        put(out, "consumer_surplus", short(cs))?;
        put(out, "total_surplus", short(cs + m.producer_surplus))?;
        put(out, "foc_residual", short(m.foc_residual))?;
        return Ok(());
    }
    let g = solve_general(dist, &params)?;
    put(out, "cutoff", short(g.cutoff))?;
    put(out, "price", short(g.price))?;
    put(
        out,
        "pi",
        short(mixmarket_core::general::service_prob(dist, k, g.cutoff)),
    )?;
    put(out, "producer_surplus", short(g.objective_value))?;
    put(
        out,
        "regime",
        match g.regime {
            mixmarket_core::Regime::Rationed => "rationed",
            mixmarket_core::Regime::Slack => "slack",
        },
    )?;
    put(out, "near_tie", g.near_tie)
}

fn surplus_by_type(
    out: &mut dyn Write,
    dist: &RegularDistribution,
    config: &MarketConfig,
) -> CliResult<()> {
    let k = config.capacity;
    let m = solve_mechanism(dist, k)?;
    let v_m = dist.standard_monopoly_price();
    let n = config.type_grid;
    let rows: Vec<[f64; 4]> = (0..n)
        .map(|i| {
            let v = if i + 1 == n {
                dist.v_hi()
            } else {
                dist.v_lo() + dist.width() * i as f64 / (n - 1) as f64
            };
            [v, surplus_at(&m, v), (v - v_m).max(0.0), k * v]
        })
        .collect();
    let write = |w: &mut dyn Write| -> io::Result<()> {
        writeln!(w, "{SURPLUS_HEADER}")?;
        for r in &rows {
            write_row(w, r)?;
        }
        Ok(())
    };
    write(out).map_err(|e| CliError::Io(PathBuf::from("<output>"), e))
}

struct Check {
    name: &'static str,
    passed: bool,
    detail: String,
}

fn verify(config: &MarketConfig, dist: &RegularDistribution) -> CliResult<Vec<Check>> {
    let k = config.capacity;
    let m = solve_mechanism(dist, k)?;
    let mut checks = Vec::new();

    let n = config.grid_size;
    let grid_step = (dist.v_hi() - dist.quantile(k)) / n as f64;
    let argmax = grid_argmax_revenue(dist, k, n)?;
    checks.push(Check {
        name: "grid_argmax",
        passed: (argmax - m.cutoff).abs() <= grid_step,
        detail: format!(
            "gap={} step={}",
            short((argmax - m.cutoff).abs()),
            short(grid_step)
        ),
    });

    let ic = verify_ic_ir(dist, k, &m, 501)?;
    checks.push(Check {
        name: "ic_ir",
        passed: ic.max_ic_violation <= 1e-12 && ic.max_ir_violation <= 1e-12,
        detail: format!(
            "ic={} ir={}",
            short(ic.max_ic_violation),
            short(ic.max_ir_violation)
        ),
    });

    let scan = posted_price_best_response(dist, k, 1001)?;
    let price_step = dist.v_hi() * (1.0 - k) / 1000.0;
    checks.push(Check {
        name: "posted_price",
        passed: (scan.best_price - m.price).abs() <= price_step,
        detail: format!(
            "gap={} step={}",
            short((scan.best_price - m.price).abs()),
            short(price_step)
        ),
    });

    let excess = two_step_dominance_check(dist, k, 1000, config.seed)?;
    checks.push(Check {
        name: "two_step",
        passed: excess <= 1e-12,
        detail: format!("max_excess={}", short(excess)),
    });

    checks.push(Check {
        name: "foc_residual",
        passed: m.foc_residual.abs() <= 1e-8,
        detail: format!("residual={}", short(m.foc_residual)),
    });
    Ok(checks)
}

fn execute(cli: &Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> CliResult<()> {
    let common = cli.command.common();
    let config = load_config(&common.config)?;
    let dist = config.distribution.build().map_err(CliError::Usage)?;
    dist.ensure_regular()?;

    match &cli.command {
        Command::Solve(_) => solve(&config, &dist, stdout),
        Command::Sweep(_) => {
            require_baseline(&config, "sweep")?;
            let grid = capacity_grid_for(&config, SWEEP_DEFAULT)?;
            let result = sweep(&dist, &grid)?;
            let sink = Sink::resolve(common, &config, "sweep.csv");
            sink.write(stdout, |w| write_sweep(w, &result.rows))?;
            put(sink.summary(stdout, stderr), "rows", result.len())
        }
        Command::Condition(_) => {
            let report = check_condition(&dist, config.grid_size)?;
            let hazard = hazard_criterion(&dist);
            let sink = Sink::resolve(common, &config, "condition.csv");
            if sink.path.is_some() {
                sink.write(stdout, |w| {
                    writeln!(w, "v,lhs")?;
                    for &(v, l) in &report.lhs_samples {
                        write_row(w, &[v, l])?;
                    }
                    Ok(())
                })?;
            }
            put(
                stdout,
                "monopoly_price",
                short(dist.standard_monopoly_price()),
            )?;
            put(stdout, "holds_everywhere", report.holds_everywhere)?;
            put(stdout, "failing_intervals", report.failing_intervals.len())?;
            for (a, b) in &report.failing_intervals {
                put(stdout, "failing", format!("{} {}", short(*a), short(*b)))?;
            }
            match report.threshold_root {
                Some(r) => put(stdout, "threshold_root", short(r))?,
                None => put(stdout, "threshold_root", "none")?,
            }
            put(stdout, "hazard_criterion_applicable", hazard.applicable)?;
            put(
                stdout,
                "hazard_criterion_price_decreasing",
                hazard.price_decreasing,
            )
        }
        Command::Simulate { price, seeds, .. } => {
            if *seeds == 0 {
                return Err(CliError::Usage("--seeds must be at least 1".into()));
            }
            let price = match price {
                Some(p) => *p,
                None => solve_mechanism(&dist, config.capacity)?.price,
            };
            let results = (0..*seeds)
                .map(|s| {
                    simulate_market(
                        &dist,
                        config.capacity,
                        price,
                        config.buyers,
                        config.seed + s,
                    )
                })
                .collect::<mixmarket_core::Result<Vec<_>>>()?;
            let sink = Sink::resolve(common, &config, "simulation.csv");
            sink.write(stdout, |w| write_simulation(w, &results))?;
            let summary = sink.summary(stdout, stderr);
            put(summary, "price", short(price))?;
            for r in &results {
                put(
                    summary,
                    &format!("seed_{}", r.seed),
                    format!(
                        "revenue={} rationing_prob={} mean_cs={} stderr_cs={}",
                        short(r.realized_revenue),
                        short(r.realized_rationing_prob),
                        short(r.mean_consumer_surplus),
                        short(r.std_error_cs)
                    ),
                )?;
            }
            Ok(())
        }
        Command::Verify(_) => {
            require_baseline(&config, "verify")?;
            let checks = verify(&config, &dist)?;
            for c in &checks {
                let status = if c.passed { "pass" } else { "fail" };
                put(stdout, c.name, format!("{status} {}", c.detail))?;
            }
            let failed: Vec<String> = checks
                .iter()
                .filter(|c| !c.passed)
                .map(|c| c.name.to_string())
                .collect();
            if failed.is_empty() {
                Ok(())
            } else {
                Err(CliError::CheckFailed(failed))
            }
        }
        Command::Figures { which, .. } => {
            require_baseline(&config, "figures")?;
            let sink = Sink::resolve(common, &config, which.file_name());
            match which {
                Figure::F1a | Figure::F2a => {
                    let mut buf = Vec::new();
                    surplus_by_type(&mut buf, &dist, &config)?;
                    sink.write(stdout, |w| w.write_all(&buf))?;
                    put(sink.summary(stdout, stderr), "rows", config.type_grid)
                }
                Figure::F1b | Figure::F2b => {
                    let grid = capacity_grid_for(&config, FIGURE_DEFAULT)?;
                    let result = sweep(&dist, &grid)?;
                    sink.write(stdout, |w| write_sweep(w, &result.rows))?;
                    let cs = result.column(|r| r.consumer_surplus);
                    let summary = sink.summary(stdout, stderr);
                    put(summary, "rows", result.len())?;
                    put(summary, "consumer_surplus_first", short(cs[0]))?;
                    put(summary, "consumer_surplus_last", short(cs[cs.len() - 1]))
                }
            }
        }
    }
}

/// Sets up the thread pool from `MIXMARKET_THREADS`; ignored when unset.
pub fn init_threads() -> Result<(), String> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| format!("{THREADS_ENV}={value} is not a positive integer"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

/// Runs one invocation and returns the process exit code.
pub fn run_command<I, T>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = write!(stderr, "{e}");
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match execute(&cli, stdout, stderr) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}
