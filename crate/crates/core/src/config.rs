//! Run configuration, read from and written as sectioned `key = value` TOML.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{PeriodicGrid, Point};
use crate::interp::InterpScheme;
use crate::reference::{step_count, InitialCondition};
use crate::weber::ForcingQuadrature;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Equation {
    NavierStokes,
    Burgers,
    LansAlpha,
    Euler,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    #[default]
    DirectSde,
    TranslatedFlow,
}

/// Source of `grad A` in the Weber integrand.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradA {
    /// Inverse of the forward-map Jacobian found during Newton inversion.
    #[default]
    Newton,
    /// Spectral derivative of the sampled `A - I`.
    Spectral,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ForcingSpec {
    #[default]
    None,
    /// `f = -nu lap u0`, which makes `u0` a steady solution when `u0` is a
    /// steady Euler flow.
    ManufacturedSteady,
    /// Taylor-Green shaped body force of the given amplitude.
    TaylorGreen {
        amplitude: f64,
    },
    Constant {
        value: [f64; 3],
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub equation: Equation,
    #[serde(default)]
    pub alpha: f64,
    pub dim: usize,
    pub n: usize,
    #[serde(default = "default_length")]
    pub length: f64,
    #[serde(default)]
    pub nu: f64,
    pub initial: InitialCondition,
    #[serde(default)]
    pub forcing: ForcingSpec,
    #[serde(default)]
    pub forcing_quadrature: ForcingQuadrature,
    /// Also carry the vorticity representation alongside the velocity.
    #[serde(default)]
    pub track_vorticity: bool,
}

fn default_length() -> f64 {
    std::f64::consts::TAU
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    pub dt: f64,
    pub t_end: f64,
    #[serde(default = "default_cfl")]
    pub cfl_max: f64,
}

fn default_cfl() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    #[serde(default = "one_usize")]
    pub realizations: usize,
    #[serde(default)]
    pub seed: u64,
    /// Each step's Brownian increment is the sum of this many finer ones.
    #[serde(default = "one_usize")]
    pub noise_refinement: usize,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            realizations: 1,
            seed: 0,
            noise_refinement: 1,
        }
    }
}

fn one_usize() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodConfig {
    #[serde(default = "one_usize")]
    pub reset_interval: usize,
    #[serde(default = "default_picard")]
    pub picard_iters: usize,
    #[serde(default = "default_picard_tol")]
    pub picard_tol: f64,
    #[serde(default)]
    pub backend: Backend,
    #[serde(default)]
    pub interpolation: InterpScheme,
    /// Newton tolerance as a fraction of the period.
    #[serde(default = "default_inverse_tol")]
    pub inverse_tol: f64,
    #[serde(default = "default_inverse_iter")]
    pub inverse_max_iter: usize,
    #[serde(default)]
    pub grad_a: GradA,
}

impl Default for MethodConfig {
    fn default() -> Self {
        Self {
            reset_interval: 1,
            picard_iters: default_picard(),
            picard_tol: default_picard_tol(),
            backend: Backend::default(),
            interpolation: InterpScheme::default(),
            inverse_tol: default_inverse_tol(),
            inverse_max_iter: default_inverse_iter(),
            grad_a: GradA::default(),
        }
    }
}

fn default_picard() -> usize {
    2
}

fn default_picard_tol() -> f64 {
    1e-10
}

fn default_inverse_tol() -> f64 {
    1e-8
}

fn default_inverse_iter() -> usize {
    25
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// Run directory; the CLI `--out` flag overrides it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    /// Snapshot every this many steps (0: initial and final only).
    #[serde(default)]
    pub snapshot_interval: usize,
    #[serde(default)]
    pub snapshot_csv: bool,
    /// Realizations whose circulation is tracked (2D/3D only).
    #[serde(default = "default_tracked")]
    pub circulation_realizations: Vec<usize>,
    /// Circle radius; defaults to `L / (2 pi)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub circulation_radius: Option<f64>,
    #[serde(default = "default_quadrature")]
    pub quadrature_n: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: None,
            snapshot_interval: 0,
            snapshot_csv: false,
            circulation_realizations: default_tracked(),
            circulation_radius: None,
            quadrature_n: default_quadrature(),
        }
    }
}

fn default_tracked() -> Vec<usize> {
    vec![0]
}

fn default_quadrature() -> usize {
    256
}

/// Gates applied by `compare`; absent entries are not checked.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub linf: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energy_rel: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub problem: ProblemConfig,
    pub time: TimeConfig,
    #[serde(default)]
    pub ensemble: EnsembleConfig,
    #[serde(default)]
    pub method: MethodConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub tolerance: ToleranceConfig,
}

impl SolverConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Every field materialized, suitable for re-running.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn grid(&self) -> Result<PeriodicGrid> {
        PeriodicGrid::new(self.problem.dim, self.problem.n, self.problem.length)
    }

    pub fn steps(&self) -> Result<usize> {
        step_count(self.time.dt, self.time.t_end)
    }

    /// Step size actually used: `t_end` split into [`Self::steps`] equal steps.
    pub fn effective_dt(&self) -> Result<f64> {
        let s = self.steps()?;
        Ok(if s == 0 {
            self.time.dt
        } else {
            self.time.t_end / s as f64
        })
    }

    pub fn sigma(&self) -> f64 {
        (2.0 * self.problem.nu).sqrt()
    }

    /// Default circulation curve: circle in the first two axes centered half a
    /// cell off the domain midpoint.
    pub fn circle(&self) -> Result<crate::weber::Circle> {
        let g = self.grid()?;
        let c = 0.5 * g.length() + 0.5 * g.spacing();
        let center: Point = [c, c, if g.dim() == 3 { c } else { 0.0 }];
        Ok(crate::weber::Circle {
            center,
            radius: self
                .output
                .circulation_radius
                .unwrap_or(g.length() / std::f64::consts::TAU),
        })
    }

    pub fn validate(&self) -> Result<()> {
        let p = &self.problem;
        let bad = |m: String| Err(Error::Config(m));
        let grid = self.grid().map_err(|e| Error::Config(e.to_string()))?;
        if !(p.nu >= 0.0 && p.nu.is_finite()) {
            return bad(format!("nu must be finite and >= 0, got {}", p.nu));
        }
        match p.equation {
            Equation::Euler if p.nu != 0.0 => return bad("equation = euler requires nu = 0".into()),
            Equation::Burgers => {
                if p.forcing != ForcingSpec::None {
                    return bad("forcing is only supported for incompressible equations".into());
                }
                if p.track_vorticity {
                    return bad("track_vorticity needs an incompressible equation".into());
                }
            }
            _ if grid.dim() < 2 => return bad(format!("{:?} needs dim >= 2", p.equation)),
            _ => {}
        }
        if !(p.alpha >= 0.0 && p.alpha.is_finite()) {
            return bad(format!("alpha must be >= 0, got {}", p.alpha));
        }
        if p.alpha != 0.0 && p.equation != Equation::LansAlpha {
            return bad("alpha is only used with equation = lans_alpha".into());
        }
        let t = &self.time;
        if !(t.dt > 0.0 && t.dt.is_finite()) {
            return bad(format!("dt must be positive, got {}", t.dt));
        }
        if !(t.t_end >= 0.0 && t.t_end.is_finite()) {
            return bad(format!("t_end must be >= 0, got {}", t.t_end));
        }
        if !(t.cfl_max > 0.0) {
            return bad("cfl_max must be positive".into());
        }
        let e = &self.ensemble;
        if e.realizations == 0 || e.noise_refinement == 0 {
            return bad("realizations and noise_refinement must be >= 1".into());
        }
        let m = &self.method;
        if m.reset_interval == 0 || m.picard_iters == 0 || m.inverse_max_iter == 0 {
            return bad("reset_interval, picard_iters and inverse_max_iter must be >= 1".into());
        }
        if !(m.inverse_tol > 0.0) || !(m.picard_tol >= 0.0) {
            return bad("inverse_tol must be > 0 and picard_tol >= 0".into());
        }
        if let Some(r) = self
            .output
            .circulation_realizations
            .iter()
            .find(|r| **r >= e.realizations)
        {
            return bad(format!("tracked realization {r} exceeds the ensemble size"));
        }
        if self.output.quadrature_n == 0 {
            return bad("quadrature_n must be >= 1".into());
        }
        if self.output.circulation_radius.is_some_and(|r| !(r > 0.0)) {
            return bad("circulation_radius must be positive".into());
        }
        Ok(())
    }
}
