//! Error tables of a run directory against deterministic oracles or another run.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rustfft::num_complex::Complex64;

use crate::config::{Equation, ForcingSpec, SolverConfig, ToleranceConfig};
use crate::error::{Error, Result};
use crate::field::Field;
use crate::grid::PeriodicGrid;
use crate::reference::{cole_hopf_burgers, taylor_green_2d_at, InitialCondition, SpectralNs};
use crate::run::{list_snapshots, CONFIG_FILE};
use crate::snapshot;
use crate::solver::build_forcing;
use crate::spectral::SpectralWorkspace;

/// Potential samples used by the Cole-Hopf oracle, whatever the run grid.
const POTENTIAL_SAMPLES: usize = 2048;

#[derive(Debug, Clone, PartialEq)]
pub enum Oracle {
    ColeHopf,
    SpectralNs,
    Analytic,
    /// Snapshots of another run directory with the same grid.
    Run(PathBuf),
}

impl FromStr for Oracle {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "cole_hopf" => Oracle::ColeHopf,
            "spectral_ns" => Oracle::SpectralNs,
            "analytic" => Oracle::Analytic,
            other if Path::new(other).is_dir() => Oracle::Run(PathBuf::from(other)),
            other => {
                return Err(Error::InvalidArgument(format!(
                    "unknown oracle '{other}' (cole_hopf, spectral_ns, analytic, or a run directory)"
                )))
            }
        })
    }
}

impl fmt::Display for Oracle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Oracle::ColeHopf => write!(f, "cole_hopf"),
            Oracle::SpectralNs => write!(f, "spectral_ns"),
            Oracle::Analytic => write!(f, "analytic"),
            Oracle::Run(p) => write!(f, "run:{}", p.display()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorRow {
    pub step: u64,
    pub time: f64,
    /// Root-mean-square pointwise error norm.
    pub l2: f64,
    pub linf: f64,
    pub energy: f64,
    pub energy_ref: f64,
}

impl ErrorRow {
    pub const HEADER: &'static str = "step,time,l2,linf,energy,energy_ref,energy_rel";

    pub fn energy_rel(&self) -> f64 {
        if self.energy_ref == 0.0 {
            (self.energy - self.energy_ref).abs()
        } else {
            (self.energy - self.energy_ref).abs() / self.energy_ref
        }
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{:e},{:e},{:e},{:e},{:e},{:e}",
            self.step,
            self.time,
            self.l2,
            self.linf,
            self.energy,
            self.energy_ref,
            self.energy_rel()
        )
    }
}

/// RMS and max pointwise differences between two fields of the same shape.
pub fn error_norms(a: &Field, b: &Field) -> Result<(f64, f64)> {
    let e = a.sub(b)?;
    Ok((e.rms(), e.max_abs()))
}

/// Samples of `psi` with `d psi / dx = u` (zero mean), by spectral
/// integration of `u` evaluated on `samples` points.
pub fn burgers_potential(u0: &Field, samples: usize) -> Result<Field> {
    let grid = *u0.grid();
    if grid.dim() != 1 {
        return Err(Error::InvalidArgument("Burgers potential needs a 1D field".into()));
    }
    let mut ws = SpectralWorkspace::new(grid);
    let spec = ws.forward(u0.component(0));
    let n = grid.n();
    let mean = spec[0].re / n as f64;
    if mean.abs() > 1e-12 * u0.max_abs().max(1.0) {
        return Err(Error::InvalidArgument(format!(
            "velocity mean {mean:.3e} is not zero; it has no periodic potential"
        )));
    }
    let mut modes = Vec::new();
    for (i, s) in spec.iter().enumerate().skip(1) {
        if 2 * i == n {
            continue;
        }
        let k = ws.wavevector(i)[0];
        modes.push((k, *s / (Complex64::new(0.0, k) * n as f64)));
    }
    let fine = PeriodicGrid::new(1, samples, grid.length())?;
    Ok(Field::from_fn(fine, 1, |p, _| {
        modes
            .iter()
            .map(|&(k, c)| (c * Complex64::from_polar(1.0, k * p[0])).re)
            .sum()
    }))
}

fn initial_velocity(cfg: &SolverConfig, grid: PeriodicGrid) -> Result<Field> {
    let u0 = cfg.problem.initial.build(grid)?;
    if cfg.problem.equation == Equation::Burgers {
        Ok(u0)
    } else {
        SpectralWorkspace::new(grid).leray_project(&u0)
    }
}

/// Reference velocities at the given `(step, time)` pairs. For LANS-alpha the
/// transport velocity `u` is returned.
pub fn reference_fields(cfg: &SolverConfig, oracle: &Oracle, at: &[(u64, f64)]) -> Result<Vec<Field>> {
    let grid = cfg.grid()?;
    let eq = cfg.problem.equation;
    let nu = cfg.problem.nu;
    match oracle {
        Oracle::ColeHopf => {
            if eq != Equation::Burgers || grid.dim() != 1 {
                return Err(Error::Config("cole_hopf oracle needs a 1D Burgers run".into()));
            }
            if cfg.problem.forcing != ForcingSpec::None {
                return Err(Error::Config("cole_hopf oracle does not support forcing".into()));
            }
            let psi = burgers_potential(&initial_velocity(cfg, grid)?, POTENTIAL_SAMPLES.max(grid.n()))?;
            let xs: Vec<f64> = grid.positions().map(|p| p[0]).collect();
            at.iter()
                .map(|&(_, t)| Field::from_values(grid, 1, cole_hopf_burgers(&psi, nu, t, &xs)?))
                .collect()
        }
        Oracle::SpectralNs => {
            if !matches!(eq, Equation::NavierStokes | Equation::Euler) {
                return Err(Error::Config(
                    "spectral_ns oracle needs a navier_stokes or euler run".into(),
                ));
            }
            let u0 = initial_velocity(cfg, grid)?;
            let forcing = build_forcing(cfg, &u0)?;
            let mut ns = SpectralNs::new(&u0, nu, forcing.as_deref().map(|f| f as _))?;
            // two reference steps per solver step
            let h = 0.5 * cfg.effective_dt()?;
            let mut done = 0u64;
            let mut out = Vec::with_capacity(at.len());
            for &(step, _) in at {
                if step < done {
                    return Err(Error::InvalidArgument("reference times must be increasing".into()));
                }
                for _ in 0..2 * (step - done) {
                    ns.step(h);
                }
                done = step;
                out.push(ns.velocity());
            }
            let frac = ns.cutoff_energy_fraction();
            if frac > 1e-8 {
                log::warn!("spectral reference under-resolved: cutoff energy fraction {frac:.2e}");
            }
            Ok(out)
        }
        Oracle::Analytic => {
            let forcing = &cfg.problem.forcing;
            if *forcing == ForcingSpec::ManufacturedSteady && matches!(eq, Equation::NavierStokes | Equation::Euler) {
                let u0 = initial_velocity(cfg, grid)?;
                return Ok(vec![u0; at.len()]);
            }
            let amplitude =
                match cfg.problem.initial {
                    InitialCondition::TaylorGreen { amplitude }
                        if grid.dim() == 2 && *forcing == ForcingSpec::None && eq != Equation::Burgers =>
                    {
                        amplitude
                    }
                    _ => return Err(Error::Config(
                        "no analytic solution for this configuration (2D Taylor-Green or manufactured steady forcing)"
                            .into(),
                    )),
                };
            let mut ws = SpectralWorkspace::new(grid);
            at.iter()
                .map(|&(_, t)| {
                    // the Taylor-Green mode is an eigenfunction of both the
                    // Laplacian and the Helmholtz operator
                    let v = taylor_green_2d_at(grid, amplitude, nu, t)?;
                    if eq == Equation::LansAlpha {
                        ws.helmholtz_invert(&v, cfg.problem.alpha)
                    } else {
                        Ok(v)
                    }
                })
                .collect()
        }
        Oracle::Run(dir) => at
            .iter()
            .map(|&(step, _)| {
                let path = dir.join(crate::run::snapshot_name("u", step));
                Ok(snapshot::read(&path)?.field)
            })
            .collect(),
    }
}

fn step_of(path: &Path) -> Result<u64> {
    path.file_stem()
        .and_then(|s| s.to_str())
        .and_then(|s| s.rsplit('_').next())
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::InvalidArgument(format!("cannot read a step index from {}", path.display())))
}

/// Compare every velocity snapshot of `run_dir` with `oracle`.
pub fn compare_run(run_dir: &Path, oracle: &Oracle) -> Result<(SolverConfig, Vec<ErrorRow>)> {
    let cfg = SolverConfig::from_file(&run_dir.join(CONFIG_FILE))?;
    let paths = list_snapshots(run_dir, "u")?;
    if paths.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "no velocity snapshots in {}",
            run_dir.display()
        )));
    }
    let snaps = paths
        .iter()
        .map(|p| Ok((step_of(p)?, snapshot::read(p)?)))
        .collect::<Result<Vec<_>>>()?;
    let at: Vec<(u64, f64)> = snaps.iter().map(|(s, snap)| (*s, snap.time)).collect();
    let refs = reference_fields(&cfg, oracle, &at)?;
    let rows = snaps
        .iter()
        .zip(&refs)
        .map(|((step, snap), r)| {
            let (l2, linf) = error_norms(&snap.field, r)?;
            Ok(ErrorRow {
                step: *step,
                time: snap.time,
                l2,
                linf,
                energy: snap.field.energy(),
                energy_ref: r.energy(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((cfg, rows))
}

/// Names of the failed gates, each with its worst value.
pub fn check_gates(rows: &[ErrorRow], tol: &ToleranceConfig) -> Vec<String> {
    let worst = |f: &dyn Fn(&ErrorRow) -> f64| rows.iter().map(f).fold(0.0, f64::max);
    let mut failed = Vec::new();
    let checks: [(&str, Option<f64>, f64); 3] = [
        ("l2", tol.l2, worst(&|r| r.l2)),
        ("linf", tol.linf, worst(&|r| r.linf)),
        ("energy_rel", tol.energy_rel, worst(&|r| r.energy_rel())),
    ];
    for (name, gate, value) in checks {
        if let Some(g) = gate {
            if !(value <= g) {
                failed.push(format!("{name} = {value:.3e} > {g:.3e}"));
            }
        }
    }
    failed
}

pub fn write_table(path: &Path, rows: &[ErrorRow]) -> Result<()> {
    let mut text = String::from(ErrorRow::HEADER);
    text.push('\n');
    for r in rows {
        text.push_str(&r.csv_row());
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
