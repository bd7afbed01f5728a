//! Refinement studies along one discretization axis.
//!
//! - `dt`: halve the step at each level. Every level draws its Brownian
//!   increments from the same finest-level path (common random numbers), so
//!   differences between levels are systematic rather than statistical.
//! - `n`: double the grid at each level, same noise and step.
//! - `m`: quadruple the realization count; the error column is the RMS Monte
//!   Carlo standard error of the final velocity.
//!
//! The `order` column is the local slope of `ln(error)` against
//! `ln(param)`, where `param` is `dt`, the grid spacing, or `M`.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::compare::{error_norms, reference_fields, Oracle};
use crate::config::{Equation, ForcingSpec, SolverConfig};
use crate::error::{Error, Result};
use crate::field::Field;
use crate::reference::InitialCondition;
use crate::run::run;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Dt,
    N,
    M,
}

impl FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dt" => Ok(Axis::Dt),
            "n" => Ok(Axis::N),
            "m" => Ok(Axis::M),
            other => Err(Error::InvalidArgument(format!("unknown axis '{other}' (dt, n or m)"))),
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axis::Dt => "dt",
            Axis::N => "n",
            Axis::M => "m",
        })
    }
}

/// What the error of each level is measured against.
#[derive(Debug, Clone, PartialEq)]
pub enum Reference {
    Oracle(Oracle),
    FinestLevel,
    StandardError,
}

impl fmt::Display for Reference {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Reference::Oracle(o) => write!(f, "{o}"),
            Reference::FinestLevel => f.write_str("finest"),
            Reference::StandardError => f.write_str("standard_error"),
        }
    }
}

/// Deterministic oracle available for `cfg`, if any.
pub fn default_oracle(cfg: &SolverConfig) -> Option<Oracle> {
    let p = &cfg.problem;
    match p.equation {
        Equation::Burgers if p.dim == 1 && p.nu > 0.0 && p.forcing == ForcingSpec::None => Some(Oracle::ColeHopf),
        Equation::Burgers => None,
        _ if p.forcing == ForcingSpec::ManufacturedSteady && p.equation != Equation::LansAlpha => {
            Some(Oracle::Analytic)
        }
        _ if p.dim == 2
            && p.forcing == ForcingSpec::None
            && matches!(p.initial, InitialCondition::TaylorGreen { .. }) =>
        {
            Some(Oracle::Analytic)
        }
        Equation::NavierStokes | Equation::Euler => Some(Oracle::SpectralNs),
        Equation::LansAlpha => None,
    }
}

pub fn default_reference(cfg: &SolverConfig, axis: Axis) -> Reference {
    match axis {
        Axis::M => Reference::StandardError,
        Axis::N => Reference::FinestLevel,
        Axis::Dt => default_oracle(cfg).map_or(Reference::FinestLevel, Reference::Oracle),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceRow {
    pub level: usize,
    pub param: f64,
    pub error: f64,
    pub order: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ConvergenceTable {
    pub axis: Axis,
    pub reference: Reference,
    pub rows: Vec<ConvergenceRow>,
}

impl ConvergenceTable {
    /// Least-squares slope of `ln(error)` against `ln(param)` over all rows.
    pub fn fitted_order(&self) -> f64 {
        let xs: Vec<f64> = self.rows.iter().map(|r| r.param.ln()).collect();
        let ys: Vec<f64> = self.rows.iter().map(|r| r.error.ln()).collect();
        fit_slope(&xs, &ys)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("level,param,error,order\n");
        for r in &self.rows {
            let order = r.order.map_or(String::new(), |o| format!("{o:.6}"));
            s.push_str(&format!("{},{:e},{:e},{}\n", r.level, r.param, r.error, order));
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// Ordinary least-squares slope.
pub fn fit_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// Configuration of refinement `level` out of `levels`.
pub fn level_config(base: &SolverConfig, axis: Axis, level: usize, levels: usize) -> SolverConfig {
    let mut cfg = base.clone();
    match axis {
        Axis::Dt => {
            cfg.time.dt = base.time.dt / (1u64 << level) as f64;
            cfg.ensemble.noise_refinement = base.ensemble.noise_refinement << (levels - 1 - level);
        }
        Axis::N => cfg.problem.n = base.problem.n << level,
        Axis::M => cfg.ensemble.realizations = base.ensemble.realizations << (2 * level),
    }
    cfg
}

fn param(cfg: &SolverConfig, axis: Axis) -> Result<f64> {
    Ok(match axis {
        Axis::Dt => cfg.effective_dt()?,
        Axis::N => cfg.grid()?.spacing(),
        Axis::M => cfg.ensemble.realizations as f64,
    })
}

/// Restrict a field to a coarser grid whose points it contains.
fn subsample(fine: &Field, coarse_n: usize) -> Result<Field> {
    let fg = *fine.grid();
    let ratio = fg.n() / coarse_n;
    let cg = crate::grid::PeriodicGrid::new(fg.dim(), coarse_n, fg.length())?;
    let c = fine.components();
    let mut values = vec![0.0; c * cg.len()];
    for idx in 0..cg.len() {
        let mut mi = cg.multi_index(idx);
        for m in mi.iter_mut().take(fg.dim()) {
            *m *= ratio;
        }
        let fidx = fg.flat_index(mi);
        for comp in 0..c {
            values[comp * cg.len() + idx] = fine.values()[comp * fg.len() + fidx];
        }
    }
    Field::from_values(cg, c, values)
}

pub fn convergence_study(
    base: &SolverConfig,
    axis: Axis,
    levels: usize,
    reference: Reference,
    workers: usize,
) -> Result<ConvergenceTable> {
    if levels < 3 {
        return Err(Error::InvalidArgument(format!(
            "a convergence study needs at least 3 levels, got {levels}"
        )));
    }
    if reference == Reference::StandardError && axis != Axis::M {
        return Err(Error::InvalidArgument(
            "the standard-error measure only applies to the m axis".into(),
        ));
    }
    let mut params = Vec::with_capacity(levels);
    let mut finals = Vec::with_capacity(levels);
    let mut errors = Vec::with_capacity(levels);
    for level in 0..levels {
        let cfg = level_config(base, axis, level, levels);
        cfg.validate()?;
        params.push(param(&cfg, axis)?);
        let out = run(&cfg, workers, None)?;
        log::info!("{axis} level {level}: {}", out.summary.line());
        match &reference {
            Reference::StandardError => {
                let se = &out.standard_error;
                errors.push((se.iter().map(|s| s * s).sum::<f64>() / se.len() as f64).sqrt());
            }
            Reference::Oracle(o) => {
                let r = reference_fields(&cfg, o, &[(out.summary.steps, out.summary.time)])?;
                errors.push(error_norms(&out.velocity, &r[0])?.0);
            }
            Reference::FinestLevel => {}
        }
        finals.push(out.velocity);
    }
    if reference == Reference::FinestLevel {
        let finest = finals.last().unwrap();
        for f in &finals[..levels - 1] {
            let r = if axis == Axis::N {
                subsample(finest, f.grid().n())?
            } else {
                finest.clone()
            };
            errors.push(error_norms(f, &r)?.0);
        }
        params.pop();
    }
    let rows = errors
        .iter()
        .zip(&params)
        .enumerate()
        .map(|(k, (&error, &param))| ConvergenceRow {
            level: k,
            param,
            error,
            order: (k > 0).then(|| (error / errors[k - 1]).ln() / (param / params[k - 1]).ln()),
        })
        .collect();
    Ok(ConvergenceTable { axis, reference, rows })
}
