//! Stochastic flow maps: forward maps `X`, back-to-labels maps `A = X^{-1}`,
//! both stored as periodic displacements `X - I` and `A - I`.

use crate::error::{Error, Result};
use crate::field::Field;
use crate::grid::{PeriodicGrid, Point};
use crate::interp::{InterpScheme, Interpolant};
use crate::spectral::SpectralWorkspace;

/// Newton settings for map inversion. `tol` is absolute (a length).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InversionOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub scheme: InterpScheme,
    /// Keep `grad A = (grad X o A)^{-1}` from the final Newton Jacobian.
    pub store_jacobian: bool,
}

impl InversionOptions {
    pub fn for_grid(grid: &PeriodicGrid) -> Self {
        Self {
            tol: 1e-8 * grid.length(),
            max_iter: 25,
            scheme: InterpScheme::CubicSpline,
            store_jacobian: true,
        }
    }
}

/// Worst-case figures from one inversion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InversionStats {
    pub max_residual: f64,
    pub max_iterations: usize,
    /// Extremes of `det grad X` at the recovered labels.
    pub min_det: f64,
    pub max_det: f64,
}

impl InversionStats {
    fn empty() -> Self {
        Self {
            max_residual: 0.0,
            max_iterations: 0,
            min_det: f64::INFINITY,
            max_det: f64::NEG_INFINITY,
        }
    }

    pub fn merge(&mut self, o: &InversionStats) {
        self.max_residual = self.max_residual.max(o.max_residual);
        self.max_iterations = self.max_iterations.max(o.max_iterations);
        self.min_det = self.min_det.min(o.min_det);
        self.max_det = self.max_det.max(o.max_det);
    }

    /// `max |det grad X - 1|`.
    pub fn det_deviation(&self) -> f64 {
        if self.min_det > self.max_det {
            return 0.0;
        }
        (self.max_det - 1.0).abs().max((1.0 - self.min_det).abs())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RealizationMaps {
    /// `X - I` sampled on the label grid.
    pub forward: Field,
    /// `A - I` sampled on the position grid.
    pub inverse: Field,
    /// `grad A`, component `i * d + j` = `d A_i / d x_j`.
    pub inverse_jacobian: Option<Field>,
    /// Brownian displacement accumulated since the window start.
    pub noise: [f64; 3],
}

impl RealizationMaps {
    pub fn identity(grid: PeriodicGrid) -> Self {
        let d = grid.dim();
        Self {
            forward: Field::zeros(grid, d),
            inverse: Field::zeros(grid, d),
            inverse_jacobian: None,
            noise: [0.0; 3],
        }
    }

    pub fn reset(&mut self) {
        self.forward.values_mut().fill(0.0);
        self.inverse.values_mut().fill(0.0);
        self.inverse_jacobian = None;
        self.noise = [0.0; 3];
    }
}

/// Per-realization maps over one label window. `epoch` increments on every
/// reset; windows with different epochs never mix.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowState {
    pub time: f64,
    pub epoch: u64,
    pub steps_in_window: usize,
    pub maps: Vec<RealizationMaps>,
}

impl FlowState {
    pub fn identity(grid: PeriodicGrid, realizations: usize, time: f64) -> Self {
        Self {
            time,
            epoch: 0,
            steps_in_window: 0,
            maps: (0..realizations).map(|_| RealizationMaps::identity(grid)).collect(),
        }
    }

    pub fn grid(&self) -> &PeriodicGrid {
        self.maps[0].forward.grid()
    }

    pub fn reset(&mut self) {
        for m in &mut self.maps {
            m.reset();
        }
        self.epoch += 1;
        self.steps_in_window = 0;
    }

    pub fn jacobian_determinants(&self) -> Result<Vec<Field>> {
        let mut ws = SpectralWorkspace::new(*self.grid());
        self.maps
            .iter()
            .map(|m| jacobian_determinant(&m.forward, &mut ws))
            .collect()
    }
}

pub(crate) fn det(m: &[f64], d: usize) -> f64 {
    match d {
        1 => m[0],
        2 => m[0] * m[3] - m[1] * m[2],
        _ => {
            m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) + m[2] * (m[3] * m[7] - m[4] * m[6])
        }
    }
}

/// Inverse of a row-major `d x d` matrix with known determinant.
pub(crate) fn invert_matrix(m: &[f64], d: usize, det: f64) -> [f64; 9] {
    let mut o = [0.0; 9];
    let r = 1.0 / det;
    match d {
        1 => o[0] = r,
        2 => {
            o[0] = m[3] * r;
            o[1] = -m[1] * r;
            o[2] = -m[2] * r;
            o[3] = m[0] * r;
        }
        _ => {
            o[0] = (m[4] * m[8] - m[5] * m[7]) * r;
            o[1] = (m[2] * m[7] - m[1] * m[8]) * r;
            o[2] = (m[1] * m[5] - m[2] * m[4]) * r;
            o[3] = (m[5] * m[6] - m[3] * m[8]) * r;
            o[4] = (m[0] * m[8] - m[2] * m[6]) * r;
            o[5] = (m[2] * m[3] - m[0] * m[5]) * r;
            o[6] = (m[3] * m[7] - m[4] * m[6]) * r;
            o[7] = (m[1] * m[6] - m[0] * m[7]) * r;
            o[8] = (m[0] * m[4] - m[1] * m[3]) * r;
        }
    }
    o
}

fn check_increments(state: &FlowState, dw: &[[f64; 3]]) -> Result<()> {
    if dw.len() != state.maps.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} increments for {} realizations",
            dw.len(),
            state.maps.len()
        )));
    }
    Ok(())
}

/// One Euler-Maruyama step of a single displacement field:
/// `X <- X + dt u(X) + shift`.
pub fn euler_maruyama_displacement(forward: &mut Field, drift: &Interpolant, dt: f64, shift: [f64; 3]) {
    let grid = *forward.grid();
    let d = grid.dim();
    let npts = grid.len();
    let mut uv = [0.0; 3];
    let vals = forward.values_mut();
    for idx in 0..npts {
        let mut p = grid.position(idx);
        for j in 0..d {
            p[j] += vals[j * npts + idx];
        }
        drift.eval(p, &mut uv);
        for j in 0..d {
            vals[j * npts + idx] += dt * uv[j] + shift[j];
        }
    }
}

/// Advance every realization's forward map by one Euler-Maruyama step with
/// frozen drift `u`: `X <- X + dt u(X) + sqrt(2 nu) dW`.
pub fn advance_forward_map(
    state: &mut FlowState,
    u: &Field,
    dt: f64,
    dw: &[[f64; 3]],
    nu: f64,
    scheme: InterpScheme,
) -> Result<()> {
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
    }
    u.check_finite("drift velocity")?;
    u.require_vector()?;
    check_increments(state, dw)?;
    let sigma = (2.0 * nu).sqrt();
    let drift = Interpolant::new(u, scheme);
    for (maps, w) in state.maps.iter_mut().zip(dw) {
        let shift = [sigma * w[0], sigma * w[1], sigma * w[2]];
        euler_maruyama_displacement(&mut maps.forward, &drift, dt, shift);
        for j in 0..3 {
            maps.noise[j] += w[j];
        }
        maps.forward.check_finite("forward map")?;
    }
    state.time += dt;
    state.steps_in_window += 1;
    Ok(())
}

/// Invert `x = a + D(a)` at every grid point by damped Newton iteration from
/// the guess `a = x - D(x)`. Writes `A - I` into `inverse` and, if requested,
/// `grad A` into `jacobian`.
pub fn invert_displacement(
    forward: &Field,
    opts: &InversionOptions,
    inverse: &mut Field,
    jacobian: Option<&mut Field>,
) -> Result<InversionStats> {
    forward.require_vector()?;
    let spline = Interpolant::new(forward, opts.scheme);
    let jac = jacobian.map(|j| j.values_mut());
    match forward.grid().dim() {
        1 => invert_dim::<1>(forward, &spline, opts, inverse.values_mut(), jac),
        2 => invert_dim::<2>(forward, &spline, opts, inverse.values_mut(), jac),
        _ => invert_dim::<3>(forward, &spline, opts, inverse.values_mut(), jac),
    }
}

fn invert_dim<const D: usize>(
    forward: &Field,
    spline: &Interpolant,
    opts: &InversionOptions,
    inv: &mut [f64],
    mut jac: Option<&mut [f64]>,
) -> Result<InversionStats> {
    let grid = *forward.grid();
    let npts = grid.len();
    let fwd = forward.values();
    let mut stats = InversionStats::empty();
    let mut dv = [0.0; 3];
    let mut g = [0.0; 9];
    let fail = |residual, iterations| Error::NonInvertible {
        residual,
        tol: opts.tol,
        iterations,
    };

    for idx in 0..npts {
        let x = grid.position(idx);
        let mut a: Point = [0.0; 3];
        for j in 0..D {
            a[j] = x[j] - fwd[j * npts + idx];
        }
        let residual = |a: &Point, dv: &[f64; 3]| -> ([f64; 3], f64) {
            let mut r = [0.0; 3];
            let mut m = 0.0f64;
            for j in 0..D {
                r[j] = a[j] + dv[j] - x[j];
                m = m.max(r[j].abs());
            }
            (r, m)
        };
        spline.eval_grad(a, &mut dv, &mut g);
        let (mut r, mut rmax) = residual(&a, &dv);
        let mut iters = 0;
        while rmax > opts.tol {
            if iters == opts.max_iter {
                return Err(fail(rmax, iters));
            }
            iters += 1;
            for j in 0..D {
                g[j * D + j] += 1.0;
            }
            let dj = det(&g, D);
            if !(dj > 0.0) {
                return Err(fail(rmax, iters));
            }
            let ji = invert_matrix(&g, D, dj);
            let mut step = [0.0; 3];
            for i in 0..D {
                for j in 0..D {
                    step[i] -= ji[i * D + j] * r[j];
                }
            }
            let mut lambda = 1.0;
            loop {
                let mut trial = a;
                for j in 0..D {
                    trial[j] += lambda * step[j];
                }
                spline.eval_grad(trial, &mut dv, &mut g);
                let (rt, mt) = residual(&trial, &dv);
                if mt < rmax || lambda < 1.0 / 1024.0 {
                    a = trial;
                    r = rt;
                    rmax = mt;
                    break;
                }
                lambda *= 0.5;
            }
        }
        for j in 0..D {
            g[j * D + j] += 1.0;
        }
        let dj = det(&g, D);
        if !(dj > 0.0) {
            return Err(fail(rmax, iters));
        }
        for j in 0..D {
            inv[j * npts + idx] = a[j] - x[j];
        }
        if let Some(jv) = jac.as_deref_mut() {
            let ji = invert_matrix(&g, D, dj);
            for c in 0..D * D {
                jv[c * npts + idx] = ji[c];
            }
        }
        stats.max_residual = stats.max_residual.max(rmax);
        stats.max_iterations = stats.max_iterations.max(iters);
        stats.min_det = stats.min_det.min(dj);
        stats.max_det = stats.max_det.max(dj);
    }
    Ok(stats)
}

/// Invert one realization's forward map in place.
pub fn invert_realization(maps: &mut RealizationMaps, opts: &InversionOptions) -> Result<InversionStats> {
    let grid = *maps.forward.grid();
    let d = grid.dim();
    let mut jac = if opts.store_jacobian {
        Some(
            maps.inverse_jacobian
                .take()
                .unwrap_or_else(|| Field::zeros(grid, d * d)),
        )
    } else {
        None
    };
    let stats = invert_displacement(&maps.forward, opts, &mut maps.inverse, jac.as_mut())?;
    maps.inverse_jacobian = jac;
    Ok(stats)
}

/// Recompute `A` for every realization.
pub fn invert_map(state: &mut FlowState, opts: &InversionOptions) -> Result<InversionStats> {
    let mut stats = InversionStats::empty();
    for maps in &mut state.maps {
        stats.merge(&invert_realization(maps, opts)?);
    }
    Ok(stats)
}

/// Pointwise `det grad X` from the spectral gradient of `X - I`.
pub fn jacobian_determinant(forward: &Field, ws: &mut SpectralWorkspace) -> Result<Field> {
    forward.require_vector()?;
    let grid = *forward.grid();
    let d = grid.dim();
    let npts = grid.len();
    let g = ws.gradient(forward)?;
    let mut out = Field::zeros(grid, 1);
    let o = out.values_mut();
    let mut m = [0.0; 9];
    for (idx, v) in o.iter_mut().enumerate() {
        for c in 0..d * d {
            m[c] = g.values()[c * npts + idx];
        }
        for j in 0..d {
            m[j * d + j] += 1.0;
        }
        *v = det(&m, d);
    }
    Ok(out)
}

/// Invert through the translated flow: with `Y = X - w`, find `B = Y^{-1}`
/// and set `A(x) = B(x - w)`, translating `B - I` spectrally. `w` is the
/// Brownian displacement `sqrt(2 nu) W` of the window.
pub fn invert_translated_displacement(
    forward: &Field,
    w: [f64; 3],
    opts: &InversionOptions,
    ws: &mut SpectralWorkspace,
    inverse: &mut Field,
    jacobian: Option<&mut Field>,
) -> Result<InversionStats> {
    let grid = *forward.grid();
    let d = grid.dim();
    let mut y = forward.clone();
    for j in 0..d {
        for v in y.component_mut(j) {
            *v -= w[j];
        }
    }
    let mut b = Field::zeros(grid, d);
    let mut jb = jacobian.is_some().then(|| Field::zeros(grid, d * d));
    let stats = invert_displacement(&y, opts, &mut b, jb.as_mut())?;
    let mut a = ws.translate(&b, w)?;
    for j in 0..d {
        for v in a.component_mut(j) {
            *v -= w[j];
        }
    }
    *inverse = a;
    if let (Some(out), Some(jb)) = (jacobian, jb) {
        *out = ws.translate(&jb, w)?;
    }
    Ok(stats)
}

/// [`invert_translated_displacement`] for one realization, with `w = sigma * noise`.
pub fn invert_translated(
    maps: &mut RealizationMaps,
    sigma: f64,
    opts: &InversionOptions,
    ws: &mut SpectralWorkspace,
) -> Result<InversionStats> {
    let grid = *maps.forward.grid();
    let d = grid.dim();
    let w = [sigma * maps.noise[0], sigma * maps.noise[1], sigma * maps.noise[2]];
    let mut jac = opts.store_jacobian.then(|| Field::zeros(grid, d * d));
    let stats = invert_translated_displacement(&maps.forward, w, opts, ws, &mut maps.inverse, jac.as_mut())?;
    maps.inverse_jacobian = jac;
    Ok(stats)
}

/// Build one realization's maps over a window through the deterministic
/// translated flow `dY/dt = u(Y + W_t, t)`, integrated with Heun's method.
///
/// `velocities[n]` is the velocity at step `n` (length `steps + 1`);
/// `w_path[n]` is the scaled Brownian position `sqrt(2 nu) W` at step `n`,
/// starting from zero.
pub fn translated_flow_backend(
    velocities: &[Field],
    w_path: &[[f64; 3]],
    dt: f64,
    opts: &InversionOptions,
) -> Result<RealizationMaps> {
    if velocities.len() < 2 || w_path.len() != velocities.len() {
        return Err(Error::InvalidArgument(
            "need matching velocity and Brownian paths of at least two samples".into(),
        ));
    }
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
    }
    let grid = *velocities[0].grid();
    let d = grid.dim();
    let npts = grid.len();
    let splines: Vec<Interpolant> = velocities
        .iter()
        .map(|u| {
            u.check_finite("drift velocity")?;
            Ok(Interpolant::new(u, opts.scheme))
        })
        .collect::<Result<_>>()?;
    let mut y = Field::zeros(grid, d);
    let (mut k1, mut k2) = ([0.0; 3], [0.0; 3]);
    for n in 0..velocities.len() - 1 {
        let (w0, w1) = (w_path[n], w_path[n + 1]);
        let vals = y.values_mut();
        for idx in 0..npts {
            let a = grid.position(idx);
            let mut p = a;
            for j in 0..d {
                p[j] += vals[j * npts + idx] + w0[j];
            }
            splines[n].eval(p, &mut k1);
            let mut q = a;
            for j in 0..d {
                q[j] += vals[j * npts + idx] + dt * k1[j] + w1[j];
            }
            splines[n + 1].eval(q, &mut k2);
            for j in 0..d {
                vals[j * npts + idx] += 0.5 * dt * (k1[j] + k2[j]);
            }
        }
    }
    let w_end = *w_path.last().unwrap();
    let mut forward = y;
    for j in 0..d {
        for v in forward.component_mut(j) {
            *v += w_end[j];
        }
    }
    forward.check_finite("forward map")?;
    let mut maps = RealizationMaps {
        forward,
        inverse: Field::zeros(grid, d),
        inverse_jacobian: None,
        noise: w_end,
    };
    let mut ws = SpectralWorkspace::new(grid);
    // noise already holds the scaled displacement, hence sigma = 1
    invert_translated(&mut maps, 1.0, opts, &mut ws)?;
    Ok(maps)
}

/// Discrete residual of the back-to-labels SPDE
/// `dA + (u . grad) A dt - nu lap A dt + sqrt(2 nu) (grad A) dW = 0`
/// over one step, as an RMS per realization. `before` and `after` must be
/// consecutive states of the same label window.
pub fn spde_residual(
    before: &FlowState,
    after: &FlowState,
    u: &Field,
    nu: f64,
    dw: &[[f64; 3]],
    dt: f64,
) -> Result<Vec<f64>> {
    if before.epoch != after.epoch || after.steps_in_window != before.steps_in_window + 1 {
        return Err(Error::InvalidArgument(
            "SPDE residual window crosses a label reset".into(),
        ));
    }
    check_increments(before, dw)?;
    if after.maps.len() != before.maps.len() {
        return Err(Error::ShapeMismatch("realization counts differ".into()));
    }
    let grid = *before.grid();
    let d = grid.dim();
    let npts = grid.len();
    let sigma = (2.0 * nu).sqrt();
    let mut ws = SpectralWorkspace::new(grid);
    let uv = u.values();
    before
        .maps
        .iter()
        .zip(&after.maps)
        .zip(dw)
        .map(|((m0, m1), w)| {
            let a0 = m0.inverse.values();
            let a1 = m1.inverse.values();
            let g = ws.gradient(&m0.inverse)?;
            let lap = ws.laplacian(&m0.inverse)?;
            let (gv, lv) = (g.values(), lap.values());
            let mut sum = 0.0;
            for i in 0..d {
                for idx in 0..npts {
                    let k = i * npts + idx;
                    let mut adv = uv[k];
                    let mut noise = w[i];
                    for j in 0..d {
                        let gij = gv[(i * d + j) * npts + idx];
                        adv += uv[j * npts + idx] * gij;
                        noise += gij * w[j];
                    }
                    let r = a1[k] - a0[k] + dt * (adv - nu * lv[k]) + sigma * noise;
                    sum += r * r;
                }
            }
            Ok((sum / (d * npts) as f64).sqrt())
        })
        .collect()
}
