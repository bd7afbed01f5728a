//! Recovery of velocity and vorticity from back-to-labels maps, forcing
//! accumulators, the LANS-alpha filter, and circulation along transported
//! curves.

use crate::error::{Error, Result};
use crate::field::Field;
use crate::flow::{det, invert_matrix, FlowState, RealizationMaps};
use crate::grid::{PeriodicGrid, Point};
use crate::interp::{InterpScheme, Interpolant};
use crate::spectral::SpectralWorkspace;

/// External force sampled at an arbitrary point and time.
pub type ForcingFn<'a> = &'a (dyn Fn(Point, f64) -> [f64; 3] + Sync);

/// `grad A` of one realization (`d * d` components, `i * d + j` = `d A_i / d x_j`),
/// taken from the stored Newton Jacobian when present, otherwise spectrally.
pub fn inverse_gradient(maps: &RealizationMaps, ws: &mut SpectralWorkspace) -> Result<Field> {
    if let Some(j) = &maps.inverse_jacobian {
        return Ok(j.clone());
    }
    let d = maps.inverse.grid().dim();
    let mut g = ws.gradient(&maps.inverse)?;
    for i in 0..d {
        for v in g.component_mut(i * d + i) {
            *v += 1.0;
        }
    }
    Ok(g)
}

fn label_point(grid: &PeriodicGrid, inverse: &[f64], idx: usize) -> Point {
    let npts = grid.len();
    let mut p = grid.position(idx);
    for j in 0..grid.dim() {
        p[j] += inverse[j * npts + idx];
    }
    p
}

/// `label o A` for any number of components.
pub fn transport_integrand(label: &Interpolant, maps: &RealizationMaps, out: &mut Field) {
    let grid = *maps.inverse.grid();
    let npts = grid.len();
    let c = label.components();
    let inv = maps.inverse.values();
    let o = out.values_mut();
    let mut v = [0.0; 9];
    for idx in 0..npts {
        label.eval(label_point(&grid, inv, idx), &mut v);
        for k in 0..c {
            o[k * npts + idx] = v[k];
        }
    }
}

/// Unprojected Weber integrand `(grad^T A)(label o A)`.
pub fn weber_integrand(label: &Interpolant, maps: &RealizationMaps, grad_a: &Field, out: &mut Field) {
    let grid = *maps.inverse.grid();
    let d = grid.dim();
    let npts = grid.len();
    let inv = maps.inverse.values();
    let ga = grad_a.values();
    let o = out.values_mut();
    let mut v = [0.0; 3];
    for idx in 0..npts {
        label.eval(label_point(&grid, inv, idx), &mut v);
        for j in 0..d {
            let mut s = 0.0;
            for i in 0..d {
                s += ga[(i * d + j) * npts + idx] * v[i];
            }
            o[j * npts + idx] = s;
        }
    }
}

/// Unprojected 3D vorticity integrand `((grad X) omega_label) o A`, using
/// `(grad X) o A = (grad A)^{-1}`.
pub fn vorticity_integrand(label: &Interpolant, maps: &RealizationMaps, grad_a: &Field, out: &mut Field) {
    let grid = *maps.inverse.grid();
    let npts = grid.len();
    let inv = maps.inverse.values();
    let ga = grad_a.values();
    let o = out.values_mut();
    let mut v = [0.0; 3];
    let mut m = [0.0; 9];
    for idx in 0..npts {
        label.eval(label_point(&grid, inv, idx), &mut v);
        for c in 0..9 {
            m[c] = ga[c * npts + idx];
        }
        let jx = invert_matrix(&m, 3, det(&m, 3));
        for i in 0..3 {
            o[i * npts + idx] = jx[i * 3] * v[0] + jx[i * 3 + 1] * v[1] + jx[i * 3 + 2] * v[2];
        }
    }
}

fn check_label(state: &FlowState, label: &Field, components: usize, what: &str) -> Result<()> {
    if state.maps.is_empty() {
        return Err(Error::InvalidArgument("empty ensemble".into()));
    }
    if label.grid() != state.grid() || label.components() != components {
        return Err(Error::ShapeMismatch(format!(
            "{what} needs {components} components on the flow grid"
        )));
    }
    label.check_finite("label data")
}

fn average(
    state: &FlowState,
    components: usize,
    mut per: impl FnMut(&RealizationMaps, &mut Field) -> Result<()>,
) -> Result<Field> {
    let grid = *state.grid();
    let mut sum = Field::zeros(grid, components);
    let mut w = Field::zeros(grid, components);
    for maps in &state.maps {
        per(maps, &mut w)?;
        sum.axpy(1.0, &w);
    }
    sum.scale(1.0 / state.maps.len() as f64);
    Ok(sum)
}

/// Per-realization stochastic velocity `P[(grad^T A)(u0 o A)]`.
pub fn stochastic_velocity(
    maps: &RealizationMaps,
    u0: &Field,
    scheme: InterpScheme,
    ws: &mut SpectralWorkspace,
) -> Result<Field> {
    u0.require_vector()?;
    let spline = Interpolant::new(u0, scheme);
    let ga = inverse_gradient(maps, ws)?;
    let mut w = Field::zeros(*u0.grid(), u0.components());
    weber_integrand(&spline, maps, &ga, &mut w);
    ws.leray_project(&w)
}

/// `u = E P[(grad^T A)(u0 o A)]`, projecting once after averaging.
pub fn weber_velocity(state: &FlowState, u0: &Field, scheme: InterpScheme) -> Result<Field> {
    let d = state.grid().dim();
    check_label(state, u0, d, "Weber label data")?;
    let spline = Interpolant::new(u0, scheme);
    let mut ws = SpectralWorkspace::new(*state.grid());
    let mean = average(state, d, |maps, w| {
        let ga = inverse_gradient(maps, &mut ws)?;
        weber_integrand(&spline, maps, &ga, w);
        Ok(())
    })?;
    ws.leray_project(&mean)
}

/// `u = E[u0 o A]`.
pub fn burgers_velocity(state: &FlowState, u0: &Field, scheme: InterpScheme) -> Result<Field> {
    let d = state.grid().dim();
    check_label(state, u0, d, "Burgers label data")?;
    let spline = Interpolant::new(u0, scheme);
    average(state, d, |maps, w| {
        transport_integrand(&spline, maps, w);
        Ok(())
    })
}

/// `omega = E[omega0 o A]` in two dimensions.
pub fn vorticity_2d(state: &FlowState, omega0: &Field, scheme: InterpScheme) -> Result<Field> {
    if state.grid().dim() != 2 {
        return Err(Error::InvalidArgument("vorticity_2d needs a 2D grid".into()));
    }
    check_label(state, omega0, 1, "2D vorticity")?;
    let spline = Interpolant::new(omega0, scheme);
    average(state, 1, |maps, w| {
        transport_integrand(&spline, maps, w);
        Ok(())
    })
}

/// `omega = E[((grad X) omega0) o A]` in three dimensions.
pub fn vorticity_3d(state: &FlowState, omega0: &Field, scheme: InterpScheme) -> Result<Field> {
    if state.grid().dim() != 3 {
        return Err(Error::InvalidArgument("vorticity_3d needs a 3D grid".into()));
    }
    check_label(state, omega0, 3, "3D vorticity")?;
    let spline = Interpolant::new(omega0, scheme);
    let mut ws = SpectralWorkspace::new(*state.grid());
    average(state, 3, |maps, w| {
        let ga = inverse_gradient(maps, &mut ws)?;
        vorticity_integrand(&spline, maps, &ga, w);
        Ok(())
    })
}

/// LANS-alpha recovery: momentum `v = E P[(grad^T A)(v0 o A)]` and transport
/// velocity `u = (1 - alpha^2 lap)^{-1} v`.
pub fn lans_alpha_velocity(state: &FlowState, v0: &Field, alpha: f64, scheme: InterpScheme) -> Result<(Field, Field)> {
    let v = weber_velocity(state, v0, scheme)?;
    let u = SpectralWorkspace::new(*state.grid()).helmholtz_invert(&v, alpha)?;
    Ok((v, u))
}

/// Quadrature rule in time for the forcing integral.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForcingQuadrature {
    #[default]
    Left,
    Trapezoid,
}

/// `phi += weight * (grad^T X) f(X, t)` on the label grid for one realization.
pub fn add_forcing(
    phi: &mut Field,
    forward: &Field,
    f: ForcingFn<'_>,
    t: f64,
    weight: f64,
    ws: &mut SpectralWorkspace,
) -> Result<()> {
    let grid = *forward.grid();
    let d = grid.dim();
    let npts = grid.len();
    let identity = forward.values().iter().all(|v| *v == 0.0);
    let gx = if identity { None } else { Some(ws.gradient(forward)?) };
    let fw = forward.values();
    let pv = phi.values_mut();
    for idx in 0..npts {
        let mut p = grid.position(idx);
        for j in 0..d {
            p[j] += fw[j * npts + idx];
        }
        let fv = f(p, t);
        for j in 0..d {
            let mut s = fv[j];
            if let Some(g) = &gx {
                // (grad^T X)_{ji} = d X_i / d a_j
                for i in 0..d {
                    s += g.values()[(i * d + j) * npts + idx] * fv[i];
                }
            }
            pv[j * npts + idx] += weight * s;
        }
    }
    Ok(())
}

/// Per-realization `phi_t = u0 + int_0^t (grad^T X) f(X_s, s) ds` over the
/// current label window.
#[derive(Debug, Clone, PartialEq)]
pub struct ForcingAccumulator {
    pub phi: Vec<Field>,
    pub quadrature: ForcingQuadrature,
}

impl ForcingAccumulator {
    pub fn new(u0: &Field, realizations: usize, quadrature: ForcingQuadrature) -> Self {
        Self {
            phi: vec![u0.clone(); realizations],
            quadrature,
        }
    }

    /// Restart every realization from new label data.
    pub fn reset(&mut self, label: &Field) {
        for p in &mut self.phi {
            p.values_mut().copy_from_slice(label.values());
        }
    }
}

/// Add one step of forcing using the maps in `before` (time `t`) and, for the
/// trapezoidal rule, `after` (time `t + dt`).
pub fn accumulate_forcing(
    acc: &mut ForcingAccumulator,
    before: &FlowState,
    after: Option<&FlowState>,
    f: ForcingFn<'_>,
    t: f64,
    dt: f64,
) -> Result<()> {
    if acc.phi.len() != before.maps.len() {
        return Err(Error::ShapeMismatch("accumulator and ensemble sizes differ".into()));
    }
    let mut ws = SpectralWorkspace::new(*before.grid());
    match (acc.quadrature, after) {
        (ForcingQuadrature::Left, _) => {
            for (phi, m) in acc.phi.iter_mut().zip(&before.maps) {
                add_forcing(phi, &m.forward, f, t, dt, &mut ws)?;
            }
        }
        (ForcingQuadrature::Trapezoid, Some(after)) => {
            for ((phi, m0), m1) in acc.phi.iter_mut().zip(&before.maps).zip(&after.maps) {
                add_forcing(phi, &m0.forward, f, t, 0.5 * dt, &mut ws)?;
                add_forcing(phi, &m1.forward, f, t + dt, 0.5 * dt, &mut ws)?;
            }
        }
        (ForcingQuadrature::Trapezoid, None) => {
            return Err(Error::InvalidArgument(
                "trapezoidal forcing needs the end-of-step maps".into(),
            ));
        }
    }
    Ok(())
}

/// A closed parametric curve `q(s)`, `s` in `[0, 1)`.
pub trait Curve {
    fn point(&self, s: f64) -> Point;
    /// `dq/ds`.
    fn tangent(&self, s: f64) -> Point;
}

/// Circle in the plane of axes 0 and 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Circle {
    pub center: Point,
    pub radius: f64,
}

impl Curve for Circle {
    fn point(&self, s: f64) -> Point {
        let th = std::f64::consts::TAU * s;
        let mut p = self.center;
        p[0] += self.radius * th.cos();
        p[1] += self.radius * th.sin();
        p
    }

    fn tangent(&self, s: f64) -> Point {
        let th = std::f64::consts::TAU * s;
        let r = std::f64::consts::TAU * self.radius;
        [-r * th.sin(), r * th.cos(), 0.0]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CirculationSample {
    /// `int_Gamma u0 . dr`
    pub initial: f64,
    /// `int_{X(Gamma)} u_tilde . dr`
    pub transported: f64,
}

impl CirculationSample {
    pub fn defect(&self) -> f64 {
        self.transported - self.initial
    }
}

/// Both sides of the circulation identity for one realization, by the
/// periodic trapezoidal rule with `n` panels.
pub fn circulation(
    u_tilde: &Field,
    forward: &Field,
    label: &Field,
    curve: &dyn Curve,
    n: usize,
    scheme: InterpScheme,
) -> Result<CirculationSample> {
    let d = forward.grid().dim();
    if d < 2 {
        return Err(Error::InvalidArgument("circulation needs d >= 2".into()));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("quadrature needs at least one panel".into()));
    }
    let (q0, q1) = (curve.point(0.0), curve.point(1.0));
    let gap = (0..3).map(|j| (q1[j] - q0[j]).abs()).fold(0.0, f64::max);
    if gap > 1e-12 {
        return Err(Error::InvalidArgument(format!("curve is not closed (gap {gap:.3e})")));
    }
    let su = Interpolant::new(u_tilde, scheme);
    let sl = Interpolant::new(label, scheme);
    let sx = Interpolant::new(forward, scheme);
    let (mut v, mut dx, mut gx) = ([0.0; 3], [0.0; 3], [0.0; 9]);
    let (mut g0, mut g1) = (0.0, 0.0);
    for k in 0..n {
        let s = k as f64 / n as f64;
        let q = curve.point(s);
        let t = curve.tangent(s);
        sl.eval(q, &mut v);
        g0 += (0..d).map(|j| v[j] * t[j]).sum::<f64>();
        sx.eval_grad(q, &mut dx, &mut gx);
        let mut p = q;
        let mut tt = [0.0; 3];
        for i in 0..d {
            p[i] += dx[i];
            tt[i] = t[i] + (0..d).map(|j| gx[i * d + j] * t[j]).sum::<f64>();
        }
        su.eval(p, &mut v);
        g1 += (0..d).map(|j| v[j] * tt[j]).sum::<f64>();
    }
    Ok(CirculationSample {
        initial: g0 / n as f64,
        transported: g1 / n as f64,
    })
}
