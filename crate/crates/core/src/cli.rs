//! Command-line front end.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::array_model::{angle_grid, beampattern, power_db};
use crate::beamform::{self, Method};
use crate::config::Config;
use crate::error::{Error, Result};
use crate::eval::{self, Averaging, SinrCurve, SweepVariable};
use crate::linalg::HermitianEigen;
use crate::sector::{constraint_term, SectorModel};
use crate::sim::{draw_actual_steering, generate_snapshots, sample_covariance, stream, SampleCovariance, Scenario};
use crate::svest::{self, SvEstimate};

/// Environment variable holding the Monte-Carlo worker thread count.
pub const THREADS_ENV: &str = "SVBEAM_THREADS";

pub const CURVE_HEADER: &str = "x,method,mean_sinr_db,stderr_db,failures";
pub const PATTERN_HEADER: &str = "angle_deg,value_db";
/// Pattern pseudo-method for `d^H(θ) C̃ d(θ)`.
pub const CONSTRAINT_TERM: &str = "constraint-term";

pub mod exit {
    pub const OK: i32 = 0;
    pub const OTHER: i32 = 1;
    pub const CONFIG: i32 = 2;
    pub const FAILURES: i32 = 3;
    pub const INFEASIBLE: i32 = 4;
}

#[derive(Debug, Parser)]
#[command(name = "svbeam", version, about = "Steering-vector estimation beamformer experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SweepArg {
    Snapshots,
    Snr,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum AvgArg {
    Db,
    Linear,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Monte-Carlo mean output SINR versus snapshots or SNR.
    RunCurve {
        config: PathBuf,
        #[arg(long, value_enum, default_value = "snapshots")]
        sweep: SweepArg,
        #[arg(long)]
        runs: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum)]
        avg: Option<AvgArg>,
    },
    /// Solve the estimator once and print its certificates.
    EstimateSv {
        config: PathBuf,
        #[arg(long)]
        dump_certificates: bool,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Beampattern of one method, or the constraint term.
    Pattern {
        config: PathBuf,
        #[arg(long)]
        method: String,
        #[arg(long, default_value_t = 0.5)]
        grid: f64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

/// Error code for a library error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => exit::CONFIG,
        Error::Infeasible { .. } | Error::BoundaryFeasible { .. } => exit::INFEASIBLE,
        _ => exit::OTHER,
    }
}

fn threads_from_env() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(Error::Config(format!("{THREADS_ENV} must be a positive integer, got '{v}'"))),
        },
        Err(_) => Ok(None),
    }
}

fn write_output(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

pub fn curve_csv(curve: &SinrCurve) -> String {
    let mut s = String::from(CURVE_HEADER);
    s.push('\n');
    for p in &curve.points {
        for st in &p.stats {
            let _ = writeln!(
                s,
                "{:.6},{},{:.6},{:.6},{}",
                p.x, st.series, st.mean_sinr_db, st.stderr_db, st.failures
            );
        }
    }
    s
}

pub fn pattern_csv(rows: &[(f64, f64)]) -> String {
    let mut s = String::from(PATTERN_HEADER);
    s.push('\n');
    for (a, v) in rows {
        let _ = writeln!(s, "{a:.6},{v:.6}");
    }
    s
}

fn load(config: &Path, seed: Option<u64>) -> Result<Config> {
    let mut cfg = Config::load(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn run_curve(
    config: &Path,
    sweep: SweepArg,
    runs: Option<usize>,
    out: Option<&Path>,
    seed: Option<u64>,
    avg: Option<AvgArg>,
) -> Result<i32> {
    let mut cfg = load(config, seed)?;
    if let Some(r) = runs {
        if r == 0 {
            return Err(Error::Config("--runs must be >= 1".into()));
        }
        cfg.runs = r;
    }
    if let Some(a) = avg {
        cfg.averaging = match a {
            AvgArg::Db => Averaging::Db,
            AvgArg::Linear => Averaging::Linear,
        };
    }
    let variable = match sweep {
        SweepArg::Snapshots => SweepVariable::Snapshots,
        SweepArg::Snr => SweepVariable::SnrDb,
    };
    let mut opts = cfg.harness_options();
    opts.threads = threads_from_env()?;
    let curve = eval::run_monte_carlo(&cfg.scenario()?, &cfg.sweep(variable)?, &opts)?;
    write_output(out, &curve_csv(&curve))?;
    if curve.is_valid() {
        Ok(exit::OK)
    } else {
        for p in &curve.points {
            for st in p.stats.iter().filter(|s| !s.valid) {
                eprintln!(
                    "svbeam: {} failed in {} of {} runs at x = {}",
                    st.series, st.failures, curve.runs, p.x
                );
            }
        }
        Ok(exit::FAILURES)
    }
}

/// Covariance estimate of run 0 of the configured scenario.
fn single_run(cfg: &Config, scenario: &Scenario) -> Result<(SampleCovariance, nalgebra::DVector<crate::linalg::C64>)> {
    let actual = draw_actual_steering(scenario, &mut scenario.rng(0, stream::MISMATCH))?.into_inner();
    let x = generate_snapshots(
        scenario,
        &crate::array_model::SteeringVector::from_vector(actual.clone()),
        &mut scenario.rng(0, stream::SNAPSHOTS),
    )?;
    let mut r = sample_covariance(&x)?;
    if let Some(d) = cfg.diagonal_loading {
        r = r.with_diagonal_loading(d)?;
    }
    Ok((r, actual))
}

fn sector_model(cfg: &Config, scenario: &Scenario) -> Result<SectorModel> {
    eval::build_sector_model(scenario, &cfg.harness_options())
}

pub fn estimate_report(cfg: &Config, dump: bool) -> Result<(String, SvEstimate)> {
    let scenario = cfg.scenario()?;
    let sector = sector_model(cfg, &scenario)?;
    let (r_hat, _) = single_run(cfg, &scenario)?;
    let r_inv = r_hat.inverse()?;
    let m = scenario.num_elements();
    let opts: svest::SolverOptions = cfg.solver.into();
    let est = svest::estimate(&r_inv, &sector.c_tilde, sector.delta0, m, opts)?;

    let mut s = String::new();
    let _ = writeln!(s, "elements: {m}");
    let _ = writeln!(s, "snapshots: {}", scenario.num_snapshots);
    let _ = writeln!(s, "seed: {}", scenario.seed);
    let _ = writeln!(
        s,
        "sector_deg: [{:.6}, {:.6}]",
        sector.sector.theta_min(),
        sector.sector.theta_max()
    );
    let _ = writeln!(s, "delta0: {:.9e}", sector.delta0);
    let _ = writeln!(s, "gamma1: {:.9e}", est.dual.gamma1);
    let _ = writeln!(s, "gamma2: {:.9e}", est.dual.gamma2);
    let _ = writeln!(s, "null_dim: {}", est.dual.null_dim);
    let _ = writeln!(s, "recovery: {}", serde_json::to_string(&est.case).unwrap_or_default().trim_matches('"'));
    let _ = writeln!(s, "objective: {:.9e}", est.objective);
    let _ = writeln!(s, "dual_value: {:.9e}", est.dual.dual_value);
    let _ = writeln!(s, "duality_gap: {:.3e}", est.duality_gap());
    let _ = writeln!(s, "kkt_stationarity: {:.3e}", est.kkt.stationarity);
    let _ = writeln!(s, "kkt_norm_gap: {:.3e}", est.kkt.norm_gap);
    let _ = writeln!(s, "kkt_slackness: {:.3e}", est.kkt.slackness);
    let _ = writeln!(s, "constraint_margin: {:.9e}", est.kkt.constraint_margin);
    if est.constraint_inactive() {
        let _ = writeln!(
            s,
            "constraint: inactive (gamma2 = 0; estimate is the minimum eigenvector of the inverse covariance, same as sir-infinite)"
        );
    } else {
        let _ = writeln!(s, "constraint: active");
    }
    if dump {
        let n = r_inv.nrows();
        let cert = &r_inv - nalgebra::DMatrix::identity(n, n).scale(est.dual.gamma1)
            + sector.c_tilde.scale(est.dual.gamma2);
        let fmt = |e: &HermitianEigen| {
            e.values
                .iter()
                .map(|v| format!("{v:.9e}"))
                .collect::<Vec<_>>()
                .join(", ")
        };
        let _ = writeln!(s, "certificate_eigenvalues: [{}]", fmt(&HermitianEigen::new(&cert)));
        let _ = writeln!(s, "c_tilde_eigenvalues: [{}]", fmt(&HermitianEigen::new(&sector.c_tilde)));
        let _ = writeln!(s, "inverse_covariance_eigenvalues: [{}]", fmt(&HermitianEigen::new(&r_inv)));
        let _ = writeln!(s, "bisection_iterations: {}", est.dual.iterations);
        let _ = writeln!(s, "null_rtol: {:.3e}", est.dual.null_rtol);
    }
    let _ = writeln!(s, "element,magnitude,phase_deg");
    for (i, z) in est.a_hat.iter().enumerate() {
        let _ = writeln!(s, "{i},{:.6},{:.6}", z.norm(), z.arg().to_degrees());
    }
    Ok((s, est))
}

pub fn pattern_rows(cfg: &Config, method: &str, step: f64) -> Result<Vec<(f64, f64)>> {
    if !(step > 0.0) {
        return Err(Error::Config(format!("--grid must be positive, got {step}")));
    }
    let grid = angle_grid(-90.0, 90.0, step)?;
    let scenario = cfg.scenario()?;
    if method == CONSTRAINT_TERM {
        let sector = SectorModel::build(
            &scenario.geometry,
            scenario.sector()?,
            cfg.quadrature_step_deg,
            cfg.num_dominant,
        )?;
        return Ok(grid
            .iter()
            .map(|&t| (t, power_db(constraint_term(&scenario.geometry, &sector.c_tilde, t))))
            .collect());
    }
    let method: Method = method.parse().map_err(|_| {
        Error::Config(format!(
            "unknown method '{method}'; expected one of {}, {CONSTRAINT_TERM}",
            Method::ALL.map(|m| m.name()).join(", ")
        ))
    })?;
    let sector = sector_model(cfg, &scenario)?;
    let (r_hat, _) = single_run(cfg, &scenario)?;
    let presumed = scenario.presumed()?.into_inner();
    let bw = beamform::build(method, &r_hat, &presumed, &sector, &cfg.method_params())?;
    beampattern(&scenario.geometry, &bw.w, &grid)
}

fn dispatch(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::RunCurve {
            config,
            sweep,
            runs,
            out,
            seed,
            avg,
        } => run_curve(&config, sweep, runs, out.as_deref(), seed, avg),
        Command::EstimateSv {
            config,
            dump_certificates,
            seed,
        } => {
            let cfg = load(&config, seed)?;
            let (text, _) = estimate_report(&cfg, dump_certificates)?;
            write_output(None, &text)?;
            Ok(exit::OK)
        }
        Command::Pattern {
            config,
            method,
            grid,
            out,
            seed,
        } => {
            let cfg = load(&config, seed)?;
            let rows = pattern_rows(&cfg, &method, grid)?;
            write_output(out.as_deref(), &pattern_csv(&rows))?;
            Ok(exit::OK)
        }
    }
}

/// Parse arguments, run, and return the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { exit::CONFIG } else { exit::OK };
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("svbeam: {e}");
            exit_code(&e)
        }
    }
}
