use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use slns_core::compare::{check_gates, compare_run, write_table, Oracle};
use slns_core::config::SolverConfig;
use slns_core::convergence::{convergence_study, default_oracle, default_reference, Axis, Reference};
use slns_core::run::{run, write_manifest, MANIFEST_FILE};
use slns_core::{snapshot, Error};

const EXIT_OK: u8 = 0;
const EXIT_CONFIG: u8 = 1;
const EXIT_CFL: u8 = 2;
const EXIT_NON_INVERTIBLE: u8 = 3;
const EXIT_GATE: u8 = 4;

#[derive(Parser)]
#[command(name = "slns", version, about = "Stochastic Lagrangian Monte Carlo flow solver")]
struct Cli {
    /// Print progress (repeat for per-step output).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct RunArgs {
    /// Override the ensemble seed.
    #[arg(long)]
    seed: Option<u64>,

    /// Worker threads for the realization loop.
    #[arg(long, env = "SLNS_WORKERS")]
    workers: Option<usize>,

    /// Run directory (default: the config's output.dir, else out/<config name>).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run a configuration to its end time.
    Run {
        config: PathBuf,
        #[command(flatten)]
        args: RunArgs,
    },
    /// Compare the snapshots of a run directory with an oracle.
    Compare {
        run_dir: PathBuf,
        /// cole_hopf, spectral_ns, analytic, or another run directory.
        #[arg(long, default_value = "analytic")]
        oracle: String,
    },
    /// Refinement study along dt, n or m.
    Convergence {
        config: PathBuf,
        #[arg(long)]
        axis: String,
        #[arg(long, default_value_t = 3)]
        levels: usize,
        /// Error reference: oracle, finest, or an oracle name. Defaults by axis.
        #[arg(long)]
        against: Option<String>,
        #[command(flatten)]
        args: RunArgs,
    },
    /// Describe a config file, snapshot file or run directory.
    Info { path: PathBuf },
}

enum Failure {
    Solver(Error),
    Gate(Vec<String>),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Solver(e)
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::CflViolation { .. } => EXIT_CFL,
        Error::NonInvertible { .. } => EXIT_NON_INVERTIBLE,
        _ => EXIT_CONFIG,
    }
}

fn workers(args: &RunArgs) -> usize {
    args.workers
        .filter(|&w| w > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

fn load(path: &Path, args: &RunArgs) -> Result<SolverConfig, Error> {
    let mut cfg = SolverConfig::from_file(path)?;
    if let Some(seed) = args.seed {
        cfg.ensemble.seed = seed;
    }
    if let Some(out) = &args.out {
        cfg.output.dir = Some(out.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn out_dir(cfg: &SolverConfig, config_path: &Path) -> PathBuf {
    cfg.output.dir.clone().unwrap_or_else(|| {
        let stem = config_path
            .file_stem()
            .map_or("run".into(), |s| s.to_string_lossy().into_owned());
        Path::new("out").join(stem)
    })
}

fn cmd_run(config: &Path, args: &RunArgs) -> Result<(), Failure> {
    let cfg = load(config, args)?;
    let dir = out_dir(&cfg, config);
    let out = run(&cfg, workers(args), Some(&dir))?;
    println!("{} out={}", out.summary.line(), dir.display());
    Ok(())
}

fn cmd_compare(run_dir: &Path, oracle: &str) -> Result<(), Failure> {
    let oracle: Oracle = oracle.parse()?;
    let (cfg, rows) = compare_run(run_dir, &oracle)?;
    let name = match &oracle {
        Oracle::Run(_) => "run".to_string(),
        o => o.to_string(),
    };
    let table = run_dir.join(format!("compare_{name}.csv"));
    write_table(&table, &rows)?;
    write_manifest(run_dir)?;
    for r in &rows {
        println!(
            "t={:<10.6} l2={:.3e} linf={:.3e} energy_rel={:.3e}",
            r.time,
            r.l2,
            r.linf,
            r.energy_rel()
        );
    }
    let failed = check_gates(&rows, &cfg.tolerance);
    if failed.is_empty() {
        println!("compare vs {oracle}: all gates passed ({})", table.display());
        Ok(())
    } else {
        Err(Failure::Gate(failed))
    }
}

fn cmd_convergence(
    config: &Path,
    axis: &str,
    levels: usize,
    against: Option<&str>,
    args: &RunArgs,
) -> Result<(), Failure> {
    let cfg = load(config, args)?;
    let axis: Axis = axis.parse()?;
    let reference = match against {
        None => default_reference(&cfg, axis),
        Some("finest") => Reference::FinestLevel,
        Some("standard_error") => Reference::StandardError,
        Some("oracle") => default_oracle(&cfg)
            .map(Reference::Oracle)
            .ok_or_else(|| Error::Config("no oracle for this configuration; use --against finest".into()))?,
        Some(name) => Reference::Oracle(name.parse()?),
    };
    let started = Instant::now();
    let table = convergence_study(&cfg, axis, levels, reference, workers(args))?;
    let dir = out_dir(&cfg, config);
    std::fs::create_dir_all(&dir).map_err(|e| Error::Io {
        path: dir.clone(),
        source: e,
    })?;
    let path = dir.join(format!("convergence_{axis}.csv"));
    table.write_csv(&path)?;
    write_manifest(&dir)?;
    print!("{}", table.to_csv());
    println!(
        "axis={axis} reference={} fitted_order={:.3} wall={:.2}s out={}",
        table.reference,
        table.fitted_order(),
        started.elapsed().as_secs_f64(),
        path.display()
    );
    Ok(())
}

fn cmd_info(path: &Path) -> Result<(), Failure> {
    if path.is_dir() {
        let manifest = path.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&manifest).map_err(|e| Error::Io {
            path: manifest.clone(),
            source: e,
        })?;
        println!("run directory {}", path.display());
        print!("{text}");
        return Ok(());
    }
    if path.extension().is_some_and(|e| e == "slnsf") {
        let s = snapshot::read(path)?;
        let g = s.field.grid();
        println!(
            "snapshot dim={} n={} length={} components={} time={} max_abs={:.6e} energy={:.10e}",
            g.dim(),
            g.n(),
            g.length(),
            s.field.components(),
            s.time,
            s.field.max_abs(),
            s.field.energy()
        );
        return Ok(());
    }
    let cfg = SolverConfig::from_file(path)?;
    cfg.validate()?;
    let grid = cfg.grid()?;
    let u0 = cfg.problem.initial.build(grid)?;
    let dt = cfg.effective_dt()?;
    println!(
        "equation={:?} dim={} n={} h={:.6e} steps={} dt={:.6e} sigma={:.6e} realizations={} cfl0={:.4}",
        cfg.problem.equation,
        grid.dim(),
        grid.n(),
        grid.spacing(),
        cfg.steps()?,
        dt,
        cfg.sigma(),
        cfg.ensemble.realizations,
        dt * u0.max_norm() / grid.spacing()
    );
    print!("{}", cfg.to_toml()?);
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = match &cli.command {
        Command::Run { config, args } => cmd_run(config, args),
        Command::Compare { run_dir, oracle } => cmd_compare(run_dir, oracle),
        Command::Convergence {
            config,
            axis,
            levels,
            against,
            args,
        } => cmd_convergence(config, axis, *levels, against.as_deref(), args),
        Command::Info { path } => cmd_info(path),
    };
    match result {
        Ok(()) => ExitCode::from(EXIT_OK),
        Err(Failure::Solver(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
        Err(Failure::Gate(failed)) => {
            for f in &failed {
                eprintln!("gate failed: {f}");
            }
            ExitCode::from(EXIT_GATE)
        }
    }
}
