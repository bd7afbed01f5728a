//! Deterministic oracles: analytic fields, a pseudo-spectral Navier-Stokes
//! solver, the Cole-Hopf solution of viscous Burgers, and an independent
//! finite-difference Burgers solver used to cross-check it.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::Field;
use crate::grid::{PeriodicGrid, Point};
use crate::spectral::{k2, SpectralWorkspace};
use crate::weber::ForcingFn;

fn require_dim(grid: &PeriodicGrid, dims: &[usize], what: &str) -> Result<()> {
    if !dims.contains(&grid.dim()) {
        return Err(Error::InvalidArgument(format!(
            "{what} is not defined in {}D",
            grid.dim()
        )));
    }
    Ok(())
}

fn wavenumber(grid: &PeriodicGrid) -> f64 {
    TAU / grid.length()
}

/// `amp (cos kx sin ky, -sin kx cos ky)` with `k = 2 pi / L`.
pub fn taylor_green_2d(grid: PeriodicGrid, amp: f64) -> Result<Field> {
    require_dim(&grid, &[2], "2D Taylor-Green")?;
    let k = wavenumber(&grid);
    Ok(Field::from_fn(grid, 2, |p, c| {
        let (x, y) = (k * p[0], k * p[1]);
        if c == 0 {
            amp * x.cos() * y.sin()
        } else {
            -amp * x.sin() * y.cos()
        }
    }))
}

/// Scalar vorticity of [`taylor_green_2d`]: `-2 amp k cos kx cos ky`.
pub fn taylor_green_2d_vorticity(grid: PeriodicGrid, amp: f64) -> Result<Field> {
    require_dim(&grid, &[2], "2D Taylor-Green")?;
    let k = wavenumber(&grid);
    Ok(Field::from_fn(grid, 1, |p, _| {
        -2.0 * amp * k * (k * p[0]).cos() * (k * p[1]).cos()
    }))
}

/// Kinetic energy `1/2 int |u|^2` of [`taylor_green_2d`].
pub fn taylor_green_2d_energy(length: f64, amp: f64) -> f64 {
    amp * amp * length * length / 4.0
}

/// Exact Navier-Stokes evolution of [`taylor_green_2d`]: decays as `exp(-2 nu k^2 t)`.
pub fn taylor_green_2d_at(grid: PeriodicGrid, amp: f64, nu: f64, t: f64) -> Result<Field> {
    let k = wavenumber(&grid);
    taylor_green_2d(grid, amp * (-2.0 * nu * k * k * t).exp())
}

/// `amp (sin kx cos ky cos kz, -cos kx sin ky cos kz, 0)`.
pub fn taylor_green_3d(grid: PeriodicGrid, amp: f64) -> Result<Field> {
    require_dim(&grid, &[3], "3D Taylor-Green")?;
    let k = wavenumber(&grid);
    Ok(Field::from_fn(grid, 3, |p, c| {
        let (x, y, z) = (k * p[0], k * p[1], k * p[2]);
        match c {
            0 => amp * x.sin() * y.cos() * z.cos(),
            1 => -amp * x.cos() * y.sin() * z.cos(),
            _ => 0.0,
        }
    }))
}

/// Arnold-Beltrami-Childress field
/// `(a sin kz + c cos ky, b sin kx + a cos kz, c sin ky + b cos kx)`; its curl is `k u`.
pub fn abc_flow(grid: PeriodicGrid, a: f64, b: f64, c: f64) -> Result<Field> {
    require_dim(&grid, &[3], "ABC flow")?;
    let k = wavenumber(&grid);
    Ok(Field::from_fn(grid, 3, |p, comp| {
        let (x, y, z) = (k * p[0], k * p[1], k * p[2]);
        match comp {
            0 => a * z.sin() + c * y.cos(),
            1 => b * x.sin() + a * z.cos(),
            _ => c * y.sin() + b * x.cos(),
        }
    }))
}

/// `amplitude * sin(2 pi m . x / L)`, one vector per point.
pub fn single_mode(grid: PeriodicGrid, mode: [i64; 3], amplitude: &[f64]) -> Field {
    let k = wavenumber(&grid);
    let d = grid.dim();
    Field::from_fn(grid, amplitude.len(), |p, c| {
        let phase: f64 = (0..d).map(|j| k * mode[j] as f64 * p[j]).sum();
        amplitude[c] * phase.sin()
    })
}

/// Seeded random divergence-free field with modes `|m|_inf <= kmax`, scaled
/// to the requested RMS. Coefficients are drawn per mode in a fixed order, so
/// the same seed gives the same continuous field on every grid that resolves
/// it.
pub fn random_divergence_free(grid: PeriodicGrid, seed: u64, kmax: i64, rms: f64) -> Result<Field> {
    require_dim(&grid, &[2, 3], "random divergence-free field")?;
    if kmax < 1 || kmax as usize >= grid.n() / 2 {
        return Err(Error::InvalidArgument(format!("kmax {kmax} outside 1..N/2")));
    }
    let d = grid.dim();
    let k = wavenumber(&grid);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let third = if d == 3 { -kmax..=kmax } else { 0..=0 };
    let mut modes = Vec::new();
    for a in -kmax..=kmax {
        for b in -kmax..=kmax {
            for c in third.clone() {
                // one of each +-m pair; the mean mode is left out
                let m = [a, b, c];
                if m.iter().find(|x| **x != 0).is_some_and(|x| *x > 0) {
                    let mut amp = [[0.0; 2]; 3];
                    for slot in amp.iter_mut().take(d) {
                        *slot = [rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5];
                    }
                    modes.push((m, amp));
                }
            }
        }
    }
    let raw = Field::from_fn(grid, d, |p, comp| {
        modes
            .iter()
            .map(|(m, amp)| {
                let phase = k * (0..d).map(|j| m[j] as f64 * p[j]).sum::<f64>();
                amp[comp][0] * phase.cos() + amp[comp][1] * phase.sin()
            })
            .sum()
    });
    let mut out = SpectralWorkspace::new(grid).leray_project(&raw)?;
    let r = out.rms();
    if r > 0.0 {
        out.scale(rms / r);
    }
    Ok(out)
}

/// Named initial conditions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialCondition {
    TaylorGreen {
        #[serde(default = "one")]
        amplitude: f64,
    },
    TaylorGreen3d {
        #[serde(default = "one")]
        amplitude: f64,
    },
    Abc {
        #[serde(default = "one")]
        a: f64,
        #[serde(default = "one")]
        b: f64,
        #[serde(default = "one")]
        c: f64,
    },
    /// `amplitude * sin(k x_1)` in the first component.
    Sine {
        #[serde(default = "one")]
        amplitude: f64,
    },
    SingleMode {
        mode: [i64; 3],
        amplitude: [f64; 3],
    },
    RandomDivergenceFree {
        seed: u64,
        kmax: i64,
        #[serde(default = "one")]
        rms: f64,
    },
}

fn one() -> f64 {
    1.0
}

impl InitialCondition {
    pub fn build(&self, grid: PeriodicGrid) -> Result<Field> {
        match *self {
            Self::TaylorGreen { amplitude } => taylor_green_2d(grid, amplitude),
            Self::TaylorGreen3d { amplitude } => taylor_green_3d(grid, amplitude),
            Self::Abc { a, b, c } => abc_flow(grid, a, b, c),
            Self::Sine { amplitude } => {
                let k = wavenumber(&grid);
                Ok(Field::from_fn(grid, grid.dim(), |p, c| {
                    if c == 0 {
                        amplitude * (k * p[0]).sin()
                    } else {
                        0.0
                    }
                }))
            }
            Self::SingleMode { mode, amplitude } => Ok(single_mode(grid, mode, &amplitude[..grid.dim()])),
            Self::RandomDivergenceFree { seed, kmax, rms } => random_divergence_free(grid, seed, kmax, rms),
        }
    }
}

/// Build a named analytic field. Parameters are positional and optional:
/// `taylor_green [amp]`, `taylor_green_3d [amp]`, `abc [a b c]`, `sine [amp]`,
/// `random_divergence_free seed kmax [rms]`.
pub fn analytic_library(name: &str, grid: PeriodicGrid, params: &[f64]) -> Result<Field> {
    let p = |i: usize, default: f64| params.get(i).copied().unwrap_or(default);
    let ic = match name {
        "taylor_green" => InitialCondition::TaylorGreen { amplitude: p(0, 1.0) },
        "taylor_green_3d" => InitialCondition::TaylorGreen3d { amplitude: p(0, 1.0) },
        "abc" => InitialCondition::Abc {
            a: p(0, 1.0),
            b: p(1, 1.0),
            c: p(2, 1.0),
        },
        "sine" => InitialCondition::Sine { amplitude: p(0, 1.0) },
        "random_divergence_free" => InitialCondition::RandomDivergenceFree {
            seed: p(0, 0.0) as u64,
            kmax: p(1, 4.0) as i64,
            rms: p(2, 1.0),
        },
        other => return Err(Error::InvalidArgument(format!("unknown analytic field '{other}'"))),
    };
    ic.build(grid)
}

/// Number of equal steps of size close to `dt` that land exactly on `t_end`.
pub fn step_count(dt: f64, t_end: f64) -> Result<usize> {
    if !(dt > 0.0 && dt.is_finite()) || !(t_end >= 0.0 && t_end.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "bad time stepping dt = {dt}, t_end = {t_end}"
        )));
    }
    Ok((t_end / dt - 1e-9).ceil().max(0.0) as usize)
}

/// Integrating-factor RK4 pseudo-spectral Navier-Stokes solver with 2/3-rule
/// dealiasing.
pub struct SpectralNs<'a> {
    grid: PeriodicGrid,
    ws: SpectralWorkspace,
    nu: f64,
    keep: Vec<bool>,
    lap: Vec<f64>,
    spec: Vec<Vec<Complex64>>,
    forcing: Option<ForcingFn<'a>>,
    time: f64,
}

impl<'a> SpectralNs<'a> {
    pub fn new(u0: &Field, nu: f64, forcing: Option<ForcingFn<'a>>) -> Result<Self> {
        let grid = *u0.grid();
        require_dim(&grid, &[2, 3], "spectral Navier-Stokes")?;
        u0.require_vector()?;
        u0.check_finite("initial velocity")?;
        if !(nu >= 0.0) {
            return Err(Error::InvalidArgument(format!("viscosity must be >= 0, got {nu}")));
        }
        let mut ws = SpectralWorkspace::new(grid);
        let cut = grid.n() as i64 / 3;
        let keep = (0..grid.len())
            .map(|i| ws.mode_numbers(i).iter().all(|m| m.abs() <= cut))
            .collect();
        let lap = (0..grid.len()).map(|i| -k2(ws.wavevector(i))).collect();
        let proj = ws.leray_project(u0)?;
        let spec = (0..grid.dim()).map(|c| ws.forward(proj.component(c))).collect();
        let mut me = Self {
            grid,
            ws,
            nu,
            keep,
            lap,
            spec,
            forcing,
            time: 0.0,
        };
        me.dealias();
        Ok(me)
    }

    fn dealias(&mut self) {
        for s in &mut self.spec {
            for (v, k) in s.iter_mut().zip(&self.keep) {
                if !k {
                    *v = Complex64::new(0.0, 0.0);
                }
            }
        }
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn velocity(&mut self) -> Field {
        let mut out = Field::zeros(self.grid, self.grid.dim());
        for c in 0..self.grid.dim() {
            let vals = self.ws.inverse(self.spec[c].clone());
            out.component_mut(c).copy_from_slice(&vals);
        }
        out
    }

    /// Fraction of spectral energy in the outermost retained shell.
    pub fn cutoff_energy_fraction(&self) -> f64 {
        let cut = self.grid.n() as i64 / 3;
        let (mut shell, mut total) = (0.0, 0.0);
        for idx in 0..self.grid.len() {
            let m = self.ws.mode_numbers(idx);
            let e: f64 = self.spec.iter().map(|s| s[idx].norm_sqr()).sum();
            total += e;
            if m.iter().map(|x| x.abs()).max().unwrap_or(0) >= cut - 1 {
                shell += e;
            }
        }
        if total == 0.0 {
            0.0
        } else {
            shell / total
        }
    }

    /// `-P[(u . grad) u] + P f`, dealiased, in spectral space.
    fn rhs(&mut self, spec: &[Vec<Complex64>], t: f64) -> Vec<Vec<Complex64>> {
        let d = self.grid.dim();
        let npts = self.grid.len();
        let u: Vec<Vec<f64>> = spec.iter().map(|s| self.ws.inverse(s.clone())).collect();
        let mut nl = vec![vec![0.0; npts]; d];
        for (i, s) in spec.iter().enumerate() {
            for j in 0..d {
                let mut ds = s.clone();
                for (idx, v) in ds.iter_mut().enumerate() {
                    *v *= Complex64::new(0.0, self.ws.wavevector(idx)[j]);
                }
                let dij = self.ws.inverse(ds);
                for p in 0..npts {
                    nl[i][p] += u[j][p] * dij[p];
                }
            }
        }
        if let Some(f) = self.forcing {
            for p in 0..npts {
                let fv = f(self.grid.position(p), t);
                for i in 0..d {
                    nl[i][p] -= fv[i];
                }
            }
        }
        let mut out: Vec<Vec<Complex64>> = nl.iter().map(|v| self.ws.forward(v)).collect();
        for idx in 0..npts {
            if !self.keep[idx] {
                for o in out.iter_mut() {
                    o[idx] = Complex64::new(0.0, 0.0);
                }
                continue;
            }
            let k = self.ws.wavevector(idx);
            let kk = k2(k);
            let mut kn = Complex64::new(0.0, 0.0);
            if kk > 0.0 {
                for j in 0..d {
                    kn += out[j][idx] * k[j];
                }
            }
            for j in 0..d {
                let proj = if kk > 0.0 {
                    out[j][idx] - kn * (k[j] / kk)
                } else {
                    out[j][idx]
                };
                out[j][idx] = -proj;
            }
        }
        out
    }

    pub fn step(&mut self, dt: f64) {
        let e_half: Vec<f64> = self.lap.iter().map(|l| (self.nu * l * dt * 0.5).exp()).collect();
        let t = self.time;
        let y0 = self.spec.clone();
        let comb = |base: &[Vec<Complex64>], add: &[Vec<Complex64>], s: f64, fac: &[f64], fac_add: bool| {
            base.iter()
                .zip(add)
                .map(|(b, a)| {
                    b.iter()
                        .zip(a)
                        .zip(fac)
                        .map(|((bv, av), f)| if fac_add { (bv + av * s) * f } else { bv * f + av * s })
                        .collect()
                })
                .collect::<Vec<Vec<Complex64>>>()
        };
        let scale = |v: &[Vec<Complex64>], fac: &[f64]| -> Vec<Vec<Complex64>> {
            v.iter()
                .map(|c| c.iter().zip(fac).map(|(x, f)| x * f).collect())
                .collect()
        };
        let k1 = self.rhs(&y0, t);
        // y0 e^{L h/2} + (h/2) k1 e^{L h/2}
        let y1 = comb(&y0, &k1, 0.5 * dt, &e_half, true);
        let k2v = self.rhs(&y1, t + 0.5 * dt);
        // y0 e^{L h/2} + (h/2) k2
        let y2 = comb(&y0, &k2v, 0.5 * dt, &e_half, false);
        let k3 = self.rhs(&y2, t + 0.5 * dt);
        // y0 e^{L h} + h k3 e^{L h/2}
        let y3 = comb(&scale(&y0, &e_half), &scale(&k3, &e_half), dt, &e_half, false);
        let k4 = self.rhs(&y3, t + dt);
        let e_full: Vec<f64> = e_half.iter().map(|e| e * e).collect();
        for c in 0..self.spec.len() {
            for idx in 0..self.grid.len() {
                self.spec[c][idx] = y0[c][idx] * e_full[idx]
                    + (k1[c][idx] * e_full[idx] + (k2v[c][idx] + k3[c][idx]) * (2.0 * e_half[idx]) + k4[c][idx])
                        * (dt / 6.0);
            }
        }
        self.time += dt;
    }
}

/// Run the pseudo-spectral solver to `t_end`, returning `(t, u)` at time zero,
/// every `save_every` steps, and the final time.
pub fn spectral_ns_run(
    u0: &Field,
    nu: f64,
    dt: f64,
    t_end: f64,
    forcing: Option<ForcingFn<'_>>,
    save_every: usize,
) -> Result<Vec<(f64, Field)>> {
    let steps = step_count(dt, t_end)?;
    let mut solver = SpectralNs::new(u0, nu, forcing)?;
    let mut traj = vec![(0.0, solver.velocity())];
    if steps == 0 {
        return Ok(traj);
    }
    let h = t_end / steps as f64;
    for s in 1..=steps {
        solver.step(h);
        if s == steps || (save_every > 0 && s % save_every == 0) {
            traj.push((solver.time(), solver.velocity()));
        }
    }
    let frac = solver.cutoff_energy_fraction();
    if frac > 1e-8 {
        log::warn!("reference solver under-resolved: {frac:.2e} of the energy sits at the cutoff shell");
    }
    Ok(traj)
}

/// Viscous Burgers `u_t + u u_x = nu u_xx` from potential samples `psi0`
/// (`u0 = d psi0 / dx`) via Cole-Hopf: `u = -2 nu theta_x / theta`, with the
/// heat solution `theta` summed as a Fourier series truncated at machine
/// precision.
pub fn cole_hopf_burgers(psi0: &Field, nu: f64, t: f64, x_points: &[f64]) -> Result<Vec<f64>> {
    let grid = *psi0.grid();
    require_dim(&grid, &[1], "Cole-Hopf")?;
    if !(nu > 0.0 && nu.is_finite()) {
        return Err(Error::InvalidArgument(format!("Cole-Hopf needs nu > 0, got {nu}")));
    }
    if !(t >= 0.0) {
        return Err(Error::InvalidArgument(format!("negative time {t}")));
    }
    psi0.check_finite("potential")?;
    let phase: Vec<f64> = psi0.values().iter().map(|p| -p / (2.0 * nu)).collect();
    let top = phase.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let theta: Vec<f64> = phase.iter().map(|p| (p - top).exp()).collect();
    let mut ws = SpectralWorkspace::new(grid);
    let n = grid.n();
    let spec = ws.forward(&theta);
    let base = TAU / grid.length();
    let c0 = spec[0].norm() / n as f64;
    let mut terms = Vec::new();
    for (i, s) in spec.iter().enumerate() {
        let m = if i <= n / 2 { i as i64 } else { i as i64 - n as i64 };
        let k = base * m as f64;
        let mut c = *s / n as f64 * (-nu * k * k * t).exp();
        if i == n / 2 {
            // cos term only; its sine partner is not representable
            c = Complex64::new(c.re, 0.0);
        }
        if c.norm() > 1e-17 * c0 {
            terms.push((k, c));
        }
    }
    Ok(x_points
        .iter()
        .map(|&x| {
            let (mut th, mut thx) = (0.0, 0.0);
            for &(k, c) in &terms {
                let e = Complex64::from_polar(1.0, k * x);
                th += (c * e).re;
                thx += (c * e * Complex64::new(0.0, k)).re;
            }
            -2.0 * nu * thx / th
        })
        .collect())
}

/// Cole-Hopf solution from an analytic potential, sampled on `samples` points.
pub fn cole_hopf_from_potential(
    psi0: impl Fn(f64) -> f64,
    length: f64,
    samples: usize,
    nu: f64,
    t: f64,
    x_points: &[f64],
) -> Result<Vec<f64>> {
    let grid = PeriodicGrid::new(1, samples, length)?;
    let psi = Field::from_fn(grid, 1, |p, _| psi0(p[0]));
    cole_hopf_burgers(&psi, nu, t, x_points)
}

/// Fourth-order central finite differences in space, classical RK4 in time,
/// for `u_t + (u^2/2)_x = nu u_xx` on a 1D periodic grid.
pub fn fd_burgers(u0: &Field, nu: f64, t_end: f64) -> Result<Field> {
    let grid = *u0.grid();
    require_dim(&grid, &[1], "finite-difference Burgers")?;
    u0.check_finite("initial velocity")?;
    let n = grid.n();
    let h = grid.spacing();
    let umax = u0.max_abs().max(1e-12);
    let mut dt = (0.5 * h / umax).min(if nu > 0.0 { 0.25 * h * h / nu } else { f64::INFINITY });
    let steps = step_count(dt, t_end)?;
    if steps == 0 {
        return Ok(u0.clone());
    }
    dt = t_end / steps as f64;
    let rhs = |u: &[f64], out: &mut [f64]| {
        let at = |i: isize| u[(i.rem_euclid(n as isize)) as usize];
        for i in 0..n as isize {
            let f = |j: isize| 0.5 * at(j) * at(j);
            let fx = (-f(i + 2) + 8.0 * f(i + 1) - 8.0 * f(i - 1) + f(i - 2)) / (12.0 * h);
            let uxx = (-at(i + 2) + 16.0 * at(i + 1) - 30.0 * at(i) + 16.0 * at(i - 1) - at(i - 2)) / (12.0 * h * h);
            out[i as usize] = -fx + nu * uxx;
        }
    };
    let mut u = u0.values().to_vec();
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut tmp = vec![0.0; n];
    for _ in 0..steps {
        rhs(&u, &mut k1);
        for i in 0..n {
            tmp[i] = u[i] + 0.5 * dt * k1[i];
        }
        rhs(&tmp, &mut k2);
        for i in 0..n {
            tmp[i] = u[i] + 0.5 * dt * k2[i];
        }
        rhs(&tmp, &mut k3);
        for i in 0..n {
            tmp[i] = u[i] + dt * k3[i];
        }
        rhs(&tmp, &mut k4);
        for i in 0..n {
            u[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    Field::from_values(grid, 1, u)
}

/// Exact heat evolution `exp(-nu k^2 t) sin(k x_1)` of a single sine mode, as
/// produced by pure-noise transport.
pub fn heat_sine(grid: PeriodicGrid, components: usize, nu: f64, t: f64) -> Field {
    let k = wavenumber(&grid);
    let decay = (-nu * k * k * t).exp();
    Field::from_fn(
        grid,
        components,
        |p: Point, c| if c == 0 { decay * (k * p[0]).sin() } else { 0.0 },
    )
}

/// Burgers potential of `u0 = amp sin(k x)`.
pub fn sine_potential(length: f64, amp: f64) -> impl Fn(f64) -> f64 {
    let k = TAU / length;
    move |x| -amp * (k * x).cos() / k
}
