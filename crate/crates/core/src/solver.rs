//! Time stepping of the self-consistent stochastic Lagrangian system: the
//! current velocity drives every realization's flow map, and the ensemble
//! average of the recovered fields gives the next velocity.

use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::config::{Backend, Equation, ForcingSpec, GradA, SolverConfig};
use crate::error::{Error, Result};
use crate::field::Field;
use crate::flow::{
    invert_displacement, invert_translated_displacement, FlowState, InversionOptions, InversionStats, RealizationMaps,
};
use crate::grid::{PeriodicGrid, Point};
use crate::interp::Interpolant;
use crate::spectral::SpectralWorkspace;
use crate::weber::{
    add_forcing, circulation, inverse_gradient, transport_integrand, vorticity_integrand, weber_integrand, Circle,
    ForcingQuadrature,
};
use crate::wiener::WienerEnsemble;

/// Realizations per reduction chunk. Partial sums are formed per chunk and
/// combined in chunk order, so results do not depend on the worker count.
const CHUNK: usize = 8;

/// Boxed external force `f(x, t)`.
pub type BoxedForcing = Box<dyn Fn(Point, f64) -> [f64; 3] + Send + Sync>;

/// One row of the diagnostics table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepDiagnostics {
    pub step: u64,
    pub time: f64,
    pub energy: f64,
    pub enstrophy: f64,
    pub omega_max: f64,
    pub div_max: f64,
    pub det_dev: f64,
    pub circ_defect: f64,
    pub se_probe: f64,
    pub se_rms: f64,
    pub energy_se: f64,
}

impl StepDiagnostics {
    pub const HEADER: &'static str =
        "step,time,energy,enstrophy,omega_max,div_max,det_dev,circ_defect,se_probe,se_rms,energy_se";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
            self.step,
            self.time,
            self.energy,
            self.enstrophy,
            self.omega_max,
            self.div_max,
            self.det_dev,
            self.circ_defect,
            self.se_probe,
            self.se_rms,
            self.energy_se
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CirculationRecord {
    pub time: f64,
    pub realization: usize,
    pub gamma_initial: f64,
    pub gamma_transported: f64,
}

impl CirculationRecord {
    pub const HEADER: &'static str = "time,realization,gamma_initial,gamma_transported,defect";

    pub fn defect(&self) -> f64 {
        self.gamma_transported - self.gamma_initial
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{:e},{},{:e},{:e},{:e}",
            self.time,
            self.realization,
            self.gamma_initial,
            self.gamma_transported,
            self.defect()
        )
    }
}

#[derive(Debug, Clone)]
pub struct StepReport {
    pub diagnostics: StepDiagnostics,
    pub circulation: Vec<CirculationRecord>,
    pub picard_passes: usize,
    pub inversion: InversionStats,
    pub wall_seconds: f64,
    /// Whether the label window was reset at the end of this step.
    pub reset: bool,
}

struct Member {
    maps: RealizationMaps,
    trial: Field,
    dw: [f64; 3],
    phi: Option<Field>,
    phi_trial: Option<Field>,
}

/// Velocity, momentum, vorticity, SE^2, energy SE^2 and inversion stats of
/// one Picard pass.
type PassOutcome = (Field, Option<Field>, Option<Field>, Vec<f64>, f64, InversionStats);

struct ChunkSum {
    dev: Vec<f64>,
    dev2: Vec<f64>,
    omega: Vec<f64>,
    e: f64,
    e2: f64,
    stats: InversionStats,
}

/// Build the configured body force. Manufactured forcing interpolates
/// `-nu lap u0`.
pub fn build_forcing(cfg: &SolverConfig, u0: &Field) -> Result<Option<BoxedForcing>> {
    let grid = *u0.grid();
    let d = grid.dim();
    let k = std::f64::consts::TAU / grid.length();
    Ok(match cfg.problem.forcing {
        ForcingSpec::None => None,
        ForcingSpec::ManufacturedSteady => {
            let mut lap = SpectralWorkspace::new(grid).laplacian(u0)?;
            lap.scale(-cfg.problem.nu);
            let spline = Interpolant::new(&lap, cfg.method.interpolation);
            Some(Box::new(move |p, _| {
                let mut o = [0.0; 3];
                spline.eval(p, &mut o);
                o
            }))
        }
        ForcingSpec::TaylorGreen { amplitude } => Some(Box::new(move |p, _| {
            let (x, y) = (k * p[0], k * p[1]);
            if d == 2 {
                [amplitude * x.cos() * y.sin(), -amplitude * x.sin() * y.cos(), 0.0]
            } else {
                let z = (k * p[2]).cos();
                [
                    amplitude * x.sin() * y.cos() * z,
                    -amplitude * x.cos() * y.sin() * z,
                    0.0,
                ]
            }
        })),
        ForcingSpec::Constant { value } => Some(Box::new(move |_, _| value)),
    })
}

/// Four fixed probe points, spread over the domain.
fn probe_indices(grid: &PeriodicGrid) -> Vec<usize> {
    let n = grid.n();
    let frac = [1, 3, 5, 7];
    (0..4)
        .map(|k| {
            let mut mi = [0; 3];
            for (axis, slot) in mi.iter_mut().enumerate().take(grid.dim()) {
                *slot = frac[(k + axis) % 4] * n / 8;
            }
            grid.flat_index(mi)
        })
        .collect()
}

pub struct Solver {
    cfg: SolverConfig,
    grid: PeriodicGrid,
    dt: f64,
    steps: usize,
    ensemble: WienerEnsemble,
    pool: rayon::ThreadPool,
    ws: SpectralWorkspace,
    opts: InversionOptions,
    u0: Field,
    u: Field,
    v: Option<Field>,
    label: Field,
    omega: Option<Field>,
    omega_label: Option<Field>,
    forcing: Option<BoxedForcing>,
    members: Vec<Member>,
    epoch: u64,
    steps_in_window: usize,
    step_index: u64,
    time: f64,
    se2_closed: Vec<f64>,
    se2_window: Vec<f64>,
    energy_se2_closed: f64,
    energy_se2_window: f64,
    probes: Vec<usize>,
    circle: Circle,
}

impl Solver {
    pub fn new(cfg: &SolverConfig, workers: usize) -> Result<Self> {
        cfg.validate()?;
        let grid = cfg.grid()?;
        let d = grid.dim();
        let mut ws = SpectralWorkspace::new(grid);
        let mut u0 = cfg.problem.initial.build(grid)?;
        if u0.components() != d {
            return Err(Error::Config(format!(
                "initial field has {} components, need {d}",
                u0.components()
            )));
        }
        let eq = cfg.problem.equation;
        if eq != Equation::Burgers {
            let p = ws.leray_project(&u0)?;
            let change = p.sub(&u0)?.max_abs();
            if change > 1e-10 * u0.max_abs().max(1.0) {
                log::warn!("initial field was not divergence-free; projected (max change {change:.3e})");
            }
            u0 = p;
        }
        let (u, v) = if eq == Equation::LansAlpha {
            (ws.helmholtz_invert(&u0, cfg.problem.alpha)?, Some(u0.clone()))
        } else {
            (u0.clone(), None)
        };
        let omega_label = if cfg.problem.track_vorticity {
            Some(ws.curl(&u0)?)
        } else {
            None
        };
        let forcing = build_forcing(cfg, &u0)?;
        let m = cfg.ensemble.realizations;
        let members = (0..m)
            .map(|_| Member {
                maps: RealizationMaps::identity(grid),
                trial: Field::zeros(grid, d),
                dw: [0.0; 3],
                phi: forcing.as_ref().map(|_| u0.clone()),
                phi_trial: None,
            })
            .collect();
        let ensemble = WienerEnsemble::new(m, d, cfg.ensemble.seed)?.with_refinement(cfg.ensemble.noise_refinement);
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers.max(1))
            .build()
            .map_err(|e| Error::InvalidArgument(format!("cannot start worker pool: {e}")))?;
        let opts = InversionOptions {
            tol: cfg.method.inverse_tol * grid.length(),
            max_iter: cfg.method.inverse_max_iter,
            scheme: cfg.method.interpolation,
            store_jacobian: eq != Equation::Burgers && cfg.method.grad_a == GradA::Newton,
        };
        let nvals = d * grid.len();
        Ok(Self {
            cfg: cfg.clone(),
            grid,
            dt: cfg.effective_dt()?,
            steps: cfg.steps()?,
            ensemble,
            pool,
            ws,
            opts,
            omega: omega_label.clone(),
            omega_label,
            label: u0.clone(),
            u0,
            u,
            v,
            forcing,
            members,
            epoch: 0,
            steps_in_window: 0,
            step_index: 0,
            time: 0.0,
            se2_closed: vec![0.0; nvals],
            se2_window: vec![0.0; nvals],
            energy_se2_closed: 0.0,
            energy_se2_window: 0.0,
            probes: probe_indices(&grid),
            circle: cfg.circle()?,
        })
    }

    pub fn config(&self) -> &SolverConfig {
        &self.cfg
    }

    pub fn grid(&self) -> &PeriodicGrid {
        &self.grid
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn step_index(&self) -> u64 {
        self.step_index
    }

    pub fn total_steps(&self) -> usize {
        self.steps
    }

    pub fn is_done(&self) -> bool {
        self.step_index as usize >= self.steps
    }

    /// Initial velocity after projection (the LANS momentum for `lans_alpha`).
    pub fn initial_velocity(&self) -> &Field {
        &self.u0
    }

    /// Transport velocity `u`.
    pub fn velocity(&self) -> &Field {
        &self.u
    }

    /// Field carried on labels: `v` for LANS-alpha, `u` otherwise.
    pub fn momentum(&self) -> &Field {
        self.v.as_ref().unwrap_or(&self.u)
    }

    /// Vorticity from the transport representation, when tracked.
    pub fn vorticity(&self) -> Option<&Field> {
        self.omega.as_ref()
    }

    pub fn label(&self) -> &Field {
        &self.label
    }

    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    /// Copy of the per-realization maps of the current window.
    pub fn flow_state(&self) -> FlowState {
        FlowState {
            time: self.time,
            epoch: self.epoch,
            steps_in_window: self.steps_in_window,
            maps: self.members.iter().map(|m| m.maps.clone()).collect(),
        }
    }

    /// Monte Carlo standard error of each velocity sample, component-major.
    pub fn standard_error(&self) -> Vec<f64> {
        self.se2_closed
            .iter()
            .zip(&self.se2_window)
            .map(|(a, b)| (a + b).sqrt())
            .collect()
    }

    fn member_label(&self, r: usize) -> &Field {
        self.members[r].phi.as_ref().unwrap_or(&self.label)
    }

    /// Unprojected Weber (or Burgers) integrand of realization `r` for the
    /// current maps.
    fn integrand(&self, r: usize) -> Result<Field> {
        let mem = &self.members[r];
        let spline = Interpolant::new(self.member_label(r), self.cfg.method.interpolation);
        let mut w = Field::zeros(self.grid, self.grid.dim());
        if self.cfg.problem.equation == Equation::Burgers {
            transport_integrand(&spline, &mem.maps, &mut w);
        } else {
            let ga = inverse_gradient(&mem.maps, &mut self.ws.clone())?;
            weber_integrand(&spline, &mem.maps, &ga, &mut w);
        }
        Ok(w)
    }

    /// Per-realization stochastic velocity `P[(grad^T A)(label o A)]`.
    pub fn stochastic_velocity(&self, r: usize) -> Result<Field> {
        if r >= self.members.len() {
            return Err(Error::InvalidArgument(format!("no realization {r}")));
        }
        let w = self.integrand(r)?;
        if self.cfg.problem.equation == Equation::Burgers {
            return Ok(w);
        }
        self.ws.clone().leray_project(&w)
    }

    /// Both sides of the circulation identity for realization `r` on the
    /// configured circle.
    pub fn circulation_of(&self, r: usize) -> Result<CirculationRecord> {
        let ut = self.stochastic_velocity(r)?;
        let s = circulation(
            &ut,
            &self.members[r].maps.forward,
            self.member_label(r),
            &self.circle,
            self.cfg.output.quadrature_n,
            self.cfg.method.interpolation,
        )?;
        Ok(CirculationRecord {
            time: self.time,
            realization: r,
            gamma_initial: s.initial,
            gamma_transported: s.transported,
        })
    }

    pub fn circle(&self) -> Circle {
        self.circle
    }

    fn check_cfl(&self) -> Result<()> {
        let cfl = self.dt * self.u.max_norm() / self.grid.spacing();
        if !(cfl <= self.cfg.time.cfl_max) {
            return Err(Error::CflViolation {
                time: self.time,
                cfl,
                limit: self.cfg.time.cfl_max,
            });
        }
        Ok(())
    }

    /// Advance one step.
    pub fn step(&mut self) -> Result<StepReport> {
        let started = Instant::now();
        self.check_cfl()?;
        let grid = self.grid;
        let d = grid.dim();
        let npts = grid.len();
        let nvals = d * npts;
        let dt = self.dt;
        let t = self.time;
        let sigma = self.cfg.sigma();
        let mcount = self.members.len();
        let eq = self.cfg.problem.equation;
        let scheme = self.cfg.method.interpolation;
        let backend = self.cfg.method.backend;
        let grad_a = self.cfg.method.grad_a;
        let quadrature = self.cfg.problem.forcing_quadrature;
        let fresh = self.steps_in_window == 0;
        let step_index = self.step_index;
        let omega_comps = self.omega_label.as_ref().map_or(0, |w| w.components());

        let drift_n = Interpolant::new(&self.u, scheme);
        let shared_label = self.forcing.is_none().then(|| Interpolant::new(&self.label, scheme));
        let omega_spline = self.omega_label.as_ref().map(|w| Interpolant::new(w, scheme));
        let reference = self.momentum().clone();
        let mean_target = self.mean_target(&reference);

        let mut predictor: Option<(Field, Interpolant)> = None;
        let mut outcome: Option<PassOutcome> = None;
        let mut passes = 0;

        for pass in 0..self.cfg.method.picard_iters {
            let u_star = predictor.as_ref().map(|(_, s)| s);
            let ensemble = &self.ensemble;
            let opts = &self.opts;
            let ws_proto = &self.ws;
            let forcing = self.forcing.as_deref();
            let u_n = self.u.values();
            let ref_vals = reference.values();
            let shared_label = shared_label.as_ref();
            let omega_spline = omega_spline.as_ref();
            let drift_n = &drift_n;
            let noise_total = |mem: &Member| {
                let mut w = [0.0; 3];
                for j in 0..d {
                    w[j] = sigma * (mem.maps.noise[j] + mem.dw[j]);
                }
                w
            };

            let partials: Vec<ChunkSum> = self.pool.install(|| {
                self.members
                    .par_chunks_mut(CHUNK)
                    .enumerate()
                    .map(|(ci, chunk)| -> Result<ChunkSum> {
                        let mut ws = ws_proto.clone();
                        let mut acc = ChunkSum {
                            dev: vec![0.0; nvals],
                            dev2: vec![0.0; nvals],
                            omega: vec![0.0; omega_comps * npts],
                            e: 0.0,
                            e2: 0.0,
                            stats: InversionStats {
                                max_residual: 0.0,
                                max_iterations: 0,
                                min_det: f64::INFINITY,
                                max_det: f64::NEG_INFINITY,
                            },
                        };
                        let mut w = Field::zeros(grid, d);
                        let mut om = Field::zeros(grid, omega_comps.max(1));
                        let (mut k1, mut k2) = ([0.0; 3], [0.0; 3]);
                        for (k, mem) in chunk.iter_mut().enumerate() {
                            let m = ci * CHUNK + k;
                            if pass == 0 {
                                mem.dw = if sigma > 0.0 {
                                    ensemble.increment(m, step_index, dt)
                                } else {
                                    [0.0; 3]
                                };
                                if let (Some(f), Some(phi)) = (forcing, mem.phi.as_mut()) {
                                    let weight = match quadrature {
                                        ForcingQuadrature::Left => dt,
                                        ForcingQuadrature::Trapezoid => 0.5 * dt,
                                    };
                                    add_forcing(phi, &mem.maps.forward, f, t, weight, &mut ws)?;
                                }
                            }
                            let shift = [sigma * mem.dw[0], sigma * mem.dw[1], sigma * mem.dw[2]];
                            let prev = mem.maps.forward.values();
                            let trial = mem.trial.values_mut();
                            for idx in 0..npts {
                                let a = grid.position(idx);
                                if fresh {
                                    for j in 0..d {
                                        k1[j] = u_n[j * npts + idx];
                                    }
                                } else {
                                    let mut p = a;
                                    for j in 0..d {
                                        p[j] += prev[j * npts + idx];
                                    }
                                    drift_n.eval(p, &mut k1);
                                }
                                match u_star {
                                    None => {
                                        for j in 0..d {
                                            trial[j * npts + idx] = prev[j * npts + idx] + dt * k1[j] + shift[j];
                                        }
                                    }
                                    Some(us) => {
                                        let mut q = a;
                                        for j in 0..d {
                                            q[j] += trial[j * npts + idx];
                                        }
                                        us.eval(q, &mut k2);
                                        for j in 0..d {
                                            trial[j * npts + idx] =
                                                prev[j * npts + idx] + 0.5 * dt * (k1[j] + k2[j]) + shift[j];
                                        }
                                    }
                                }
                            }
                            mem.trial.check_finite("forward map")?;

                            let mut jac = opts.store_jacobian.then(|| {
                                mem.maps
                                    .inverse_jacobian
                                    .take()
                                    .unwrap_or_else(|| Field::zeros(grid, d * d))
                            });
                            let stats = match backend {
                                Backend::DirectSde => {
                                    invert_displacement(&mem.trial, opts, &mut mem.maps.inverse, jac.as_mut())?
                                }
                                Backend::TranslatedFlow => invert_translated_displacement(
                                    &mem.trial,
                                    noise_total(mem),
                                    opts,
                                    &mut ws,
                                    &mut mem.maps.inverse,
                                    jac.as_mut(),
                                )?,
                            };
                            mem.maps.inverse_jacobian = jac;
                            acc.stats.merge(&stats);

                            // label data of this realization for this pass
                            let own_label;
                            let label = match shared_label {
                                Some(s) => s,
                                None => {
                                    let phi = mem.phi.as_ref().expect("forcing keeps per-realization labels");
                                    if quadrature == ForcingQuadrature::Trapezoid {
                                        let mut pt = phi.clone();
                                        let f = forcing.expect("forcing present");
                                        add_forcing(&mut pt, &mem.trial, f, t + dt, 0.5 * dt, &mut ws)?;
                                        own_label = Interpolant::new(&pt, scheme);
                                        mem.phi_trial = Some(pt);
                                    } else {
                                        own_label = Interpolant::new(phi, scheme);
                                    }
                                    &own_label
                                }
                            };

                            let ga = if eq == Equation::Burgers {
                                None
                            } else if grad_a == GradA::Spectral {
                                mem.maps.inverse_jacobian = None;
                                Some(inverse_gradient(&mem.maps, &mut ws)?)
                            } else {
                                None
                            };
                            let ga_ref = ga.as_ref().or(mem.maps.inverse_jacobian.as_ref());
                            match ga_ref {
                                None => transport_integrand(label, &mem.maps, &mut w),
                                Some(g) => weber_integrand(label, &mem.maps, g, &mut w),
                            }

                            if let Some(os) = omega_spline {
                                if omega_comps == 1 {
                                    transport_integrand(os, &mem.maps, &mut om);
                                } else {
                                    let g = ga_ref.expect("3D vorticity needs grad A");
                                    vorticity_integrand(os, &mem.maps, g, &mut om);
                                }
                                for (a, b) in acc.omega.iter_mut().zip(om.values()) {
                                    *a += b;
                                }
                            }

                            let mut e = 0.0;
                            for ((x, r), (s1, s2)) in w
                                .values()
                                .iter()
                                .zip(ref_vals)
                                .zip(acc.dev.iter_mut().zip(acc.dev2.iter_mut()))
                            {
                                let dv = x - r;
                                *s1 += dv;
                                *s2 += dv * dv;
                                e += r * dv;
                            }
                            e *= grid.cell_volume();
                            acc.e += e;
                            acc.e2 += e * e;
                        }
                        Ok(acc)
                    })
                    .collect::<Result<Vec<_>>>()
            })?;

            let mut dev = vec![0.0; nvals];
            let mut dev2 = vec![0.0; nvals];
            let mut omega_sum = vec![0.0; omega_comps * npts];
            let (mut e, mut e2) = (0.0, 0.0);
            let mut stats = partials[0].stats;
            for p in &partials {
                for (a, b) in dev.iter_mut().zip(&p.dev) {
                    *a += b;
                }
                for (a, b) in dev2.iter_mut().zip(&p.dev2) {
                    *a += b;
                }
                for (a, b) in omega_sum.iter_mut().zip(&p.omega) {
                    *a += b;
                }
                e += p.e;
                e2 += p.e2;
                stats.merge(&p.stats);
            }
            let mf = mcount as f64;
            let mean_vals: Vec<f64> = ref_vals.iter().zip(&dev).map(|(r, s)| r + s / mf).collect();
            let mut mean = Field::from_values(grid, d, mean_vals)?;
            // interpolation does not conserve the mean exactly; the flow does
            for (c, target) in mean_target.iter().enumerate().take(d) {
                let shift = target - mean.mean(c);
                mean.component_mut(c).iter_mut().for_each(|v| *v += shift);
            }
            let var_scale = if mcount > 1 { 1.0 / ((mf - 1.0) * mf) } else { 0.0 };
            let se2: Vec<f64> = dev
                .iter()
                .zip(&dev2)
                .map(|(s, s2)| ((s2 - s * s / mf) * var_scale).max(0.0))
                .collect();
            let energy_se2 = ((e2 - e * e / mf) * var_scale).max(0.0);

            let (u_new, v_new) = match eq {
                Equation::Burgers => (mean, None),
                Equation::NavierStokes | Equation::Euler => (self.ws.leray_project(&mean)?, None),
                Equation::LansAlpha => {
                    let v = self.ws.leray_project(&mean)?;
                    (self.ws.helmholtz_invert(&v, self.cfg.problem.alpha)?, Some(v))
                }
            };
            let omega_new = if omega_comps > 0 {
                let vals = omega_sum.iter().map(|x| x / mf).collect();
                Some(Field::from_values(grid, omega_comps, vals)?)
            } else {
                None
            };
            passes += 1;
            let converged = predictor.as_ref().is_some_and(|(prev, _)| {
                u_new.sub(prev).map(|d| d.max_abs()).unwrap_or(f64::INFINITY) <= self.cfg.method.picard_tol
            });
            let last = converged || pass + 1 == self.cfg.method.picard_iters;
            if !last {
                predictor = Some((u_new.clone(), Interpolant::new(&u_new, scheme)));
            }
            outcome = Some((u_new, v_new, omega_new, se2, energy_se2, stats));
            if last {
                break;
            }
        }

        let (u_new, v_new, omega_new, se2, energy_se2, stats) = outcome.expect("at least one pass");
        for mem in &mut self.members {
            std::mem::swap(&mut mem.maps.forward, &mut mem.trial);
            for j in 0..3 {
                mem.maps.noise[j] += mem.dw[j];
            }
            if let Some(pt) = mem.phi_trial.take() {
                mem.phi = Some(pt);
            }
        }
        self.u = u_new;
        self.v = v_new;
        if omega_new.is_some() {
            self.omega = omega_new;
        }
        self.step_index += 1;
        self.time = self.step_index as f64 * dt;
        self.steps_in_window += 1;
        self.se2_window = se2;
        self.energy_se2_window = energy_se2;
        self.u.check_finite("velocity")?;

        let mut circ = Vec::new();
        if d >= 2 && eq != Equation::Burgers {
            for &r in &self.cfg.output.circulation_realizations {
                circ.push(self.circulation_of(r)?);
            }
        }
        let diagnostics = self.diagnostics(&stats, &circ)?;

        let reset = self.step_index.is_multiple_of(self.cfg.method.reset_interval as u64);
        if reset {
            self.reset_labels();
        }
        Ok(StepReport {
            diagnostics,
            circulation: circ,
            picard_passes: passes,
            inversion: stats,
            wall_seconds: started.elapsed().as_secs_f64(),
            reset,
        })
    }

    /// Spatial mean of the momentum after this step: unchanged without
    /// forcing, otherwise advanced by the mean force under the configured
    /// quadrature.
    fn mean_target(&self, reference: &Field) -> [f64; 3] {
        let d = self.grid.dim();
        let mut target = [0.0; 3];
        for (c, t) in target.iter_mut().enumerate().take(d) {
            *t = reference.mean(c);
        }
        if let Some(f) = &self.forcing {
            let npts = self.grid.len();
            let mean_force = |t: f64| {
                let mut acc = [0.0; 3];
                for idx in 0..npts {
                    let v = f(self.grid.position(idx), t);
                    for j in 0..d {
                        acc[j] += v[j];
                    }
                }
                acc.map(|a| a / npts as f64)
            };
            let (t, dt) = (self.time, self.dt);
            let inc = match self.cfg.problem.forcing_quadrature {
                ForcingQuadrature::Left => mean_force(t).map(|a| a * dt),
                ForcingQuadrature::Trapezoid => {
                    let (a, b) = (mean_force(t), mean_force(t + dt));
                    [0, 1, 2].map(|j| 0.5 * dt * (a[j] + b[j]))
                }
            };
            for j in 0..d {
                target[j] += inc[j];
            }
        }
        target
    }

    /// Start a new label window from the current fields.
    pub fn reset_labels(&mut self) {
        for (c, w) in self.se2_closed.iter_mut().zip(self.se2_window.iter_mut()) {
            *c += *w;
            *w = 0.0;
        }
        self.energy_se2_closed += self.energy_se2_window;
        self.energy_se2_window = 0.0;
        self.label = self.momentum().clone();
        if let Some(w) = &self.omega {
            self.omega_label = Some(w.clone());
        }
        for mem in &mut self.members {
            mem.maps.reset();
            if let Some(phi) = mem.phi.as_mut() {
                phi.values_mut().copy_from_slice(self.label.values());
            }
        }
        self.epoch += 1;
        self.steps_in_window = 0;
    }

    fn diagnostics(&mut self, stats: &InversionStats, circ: &[CirculationRecord]) -> Result<StepDiagnostics> {
        let d = self.grid.dim();
        let npts = self.grid.len();
        let (enstrophy, omega_max) = if d >= 2 {
            let w = self.ws.curl(&self.u)?;
            (w.inner(&w), w.max_norm())
        } else {
            (0.0, 0.0)
        };
        let div_max = self.ws.divergence(&self.u)?.max_abs();
        let se = self.standard_error();
        let se_probe = self
            .probes
            .iter()
            .flat_map(|&p| (0..d).map(move |c| c * npts + p))
            .map(|i| se[i])
            .fold(0.0, f64::max);
        let se_rms = (se.iter().map(|s| s * s).sum::<f64>() / se.len() as f64).sqrt();
        Ok(StepDiagnostics {
            step: self.step_index,
            time: self.time,
            energy: self.u.energy(),
            enstrophy,
            omega_max,
            div_max,
            det_dev: stats.det_deviation(),
            circ_defect: circ.iter().map(|c| c.defect().abs()).fold(0.0, f64::max),
            se_probe,
            se_rms,
            energy_se: (self.energy_se2_closed + self.energy_se2_window).sqrt(),
        })
    }
}
