//! FFT-based differentiation, Leray-Hodge projection and Helmholtz inversion.
//!
//! Wavenumbers follow the usual symmetric layout `0, 1, .., N/2 - 1, -N/2, .., -1`
//! scaled by `2 pi / L`. Derivative multipliers use a copy with the Nyquist
//! entry set to zero, so every operator here (gradient, divergence, curl,
//! Laplacian, projection) is built from the same `ik` and they compose
//! exactly: `div(grad q) == lap(q)` and `div(P v) == 0` to rounding.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::field::Field;
use crate::grid::PeriodicGrid;

/// Per-worker FFT plans and scratch. Cheap to clone; not shareable across
/// threads while in use.
#[derive(Clone)]
pub struct SpectralWorkspace {
    grid: PeriodicGrid,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    scratch: Vec<Complex64>,
    line: Vec<Complex64>,
    /// Derivative wavenumber per 1D index, Nyquist zeroed.
    kd: Vec<f64>,
    /// Signed integer mode number per 1D index (Nyquist reported as -N/2).
    modes: Vec<i64>,
}

impl std::fmt::Debug for SpectralWorkspace {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectralWorkspace").field("grid", &self.grid).finish()
    }
}

impl SpectralWorkspace {
    pub fn new(grid: PeriodicGrid) -> Self {
        let n = grid.n();
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        let scratch_len = fwd.get_inplace_scratch_len().max(inv.get_inplace_scratch_len());
        let modes: Vec<i64> = (0..n)
            .map(|i| if i < n / 2 { i as i64 } else { i as i64 - n as i64 })
            .collect();
        let base = 2.0 * PI / grid.length();
        let kd = modes
            .iter()
            .enumerate()
            .map(|(i, &m)| if i == n / 2 { 0.0 } else { base * m as f64 })
            .collect();
        Self {
            grid,
            fwd,
            inv,
            scratch: vec![Complex64::new(0.0, 0.0); scratch_len],
            line: vec![Complex64::new(0.0, 0.0); n],
            kd,
            modes,
        }
    }

    pub fn grid(&self) -> &PeriodicGrid {
        &self.grid
    }

    /// Derivative wavevector of flat spectral index `idx` (Nyquist components zeroed).
    pub fn wavevector(&self, idx: usize) -> [f64; 3] {
        let m = self.grid.multi_index(idx);
        let mut k = [0.0; 3];
        for axis in 0..self.grid.dim() {
            k[axis] = self.kd[m[axis]];
        }
        k
    }

    /// Integer mode numbers of flat spectral index `idx`.
    pub fn mode_numbers(&self, idx: usize) -> [i64; 3] {
        let m = self.grid.multi_index(idx);
        let mut k = [0; 3];
        for axis in 0..self.grid.dim() {
            k[axis] = self.modes[m[axis]];
        }
        k
    }

    fn transform(&mut self, buf: &mut [Complex64], forward: bool) {
        let n = self.grid.n();
        let plan = if forward { &self.fwd } else { &self.inv };
        for axis in 0..self.grid.dim() {
            let stride = self.grid.stride(axis);
            if stride == 1 {
                plan.process_with_scratch(buf, &mut self.scratch);
                continue;
            }
            let block = stride * n;
            for start in (0..buf.len()).step_by(block) {
                for offset in 0..stride {
                    let base = start + offset;
                    for (j, slot) in self.line.iter_mut().enumerate() {
                        *slot = buf[base + j * stride];
                    }
                    plan.process_with_scratch(&mut self.line, &mut self.scratch);
                    for (j, v) in self.line.iter().enumerate() {
                        buf[base + j * stride] = *v;
                    }
                }
            }
        }
    }

    /// Unnormalized forward transform of real samples.
    pub fn forward(&mut self, data: &[f64]) -> Vec<Complex64> {
        debug_assert_eq!(data.len(), self.grid.len());
        let mut buf: Vec<Complex64> = data.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.transform(&mut buf, true);
        buf
    }

    /// Inverse transform (normalized), returning the real part.
    pub fn inverse(&mut self, mut spec: Vec<Complex64>) -> Vec<f64> {
        self.transform(&mut spec, false);
        let norm = 1.0 / self.grid.len() as f64;
        spec.into_iter().map(|c| c.re * norm).collect()
    }

    /// Apply a per-mode multiplier to one real component.
    pub fn apply_multiplier(&mut self, data: &[f64], mult: impl Fn([f64; 3]) -> Complex64) -> Vec<f64> {
        let mut spec = self.forward(data);
        for (idx, s) in spec.iter_mut().enumerate() {
            *s *= mult(self.wavevector(idx));
        }
        self.inverse(spec)
    }

    /// Gradient of every component: output component `c * d + j` is `d f_c / d x_j`.
    pub fn gradient(&mut self, f: &Field) -> Result<Field> {
        self.check_grid(f)?;
        let d = self.grid.dim();
        let mut out = Field::zeros(self.grid, f.components() * d);
        for c in 0..f.components() {
            let spec = self.forward(f.component(c));
            for j in 0..d {
                let mut s = spec.clone();
                for (idx, v) in s.iter_mut().enumerate() {
                    let k = self.wavevector(idx)[j];
                    *v *= Complex64::new(0.0, k);
                }
                let vals = self.inverse(s);
                out.component_mut(c * d + j).copy_from_slice(&vals);
            }
        }
        Ok(out)
    }

    pub fn divergence(&mut self, v: &Field) -> Result<Field> {
        self.check_grid(v)?;
        v.require_vector()?;
        let d = self.grid.dim();
        let mut acc = vec![Complex64::new(0.0, 0.0); self.grid.len()];
        for j in 0..d {
            let spec = self.forward(v.component(j));
            for (idx, (a, s)) in acc.iter_mut().zip(spec).enumerate() {
                *a += Complex64::new(0.0, self.wavevector(idx)[j]) * s;
            }
        }
        let vals = self.inverse(acc);
        Field::from_values(self.grid, 1, vals)
    }

    /// Scalar curl in 2D, vector curl in 3D.
    pub fn curl(&mut self, v: &Field) -> Result<Field> {
        self.check_grid(v)?;
        v.require_vector()?;
        let g = self.gradient(v)?;
        let npts = self.grid.len();
        // g component i*d + j = d v_i / d x_j
        match self.grid.dim() {
            2 => {
                let mut out = Field::zeros(self.grid, 1);
                let w = out.component_mut(0);
                for p in 0..npts {
                    w[p] = g.values()[2 * npts + p] - g.values()[npts + p];
                }
                Ok(out)
            }
            3 => {
                let at = |i: usize, j: usize, p: usize| g.values()[(i * 3 + j) * npts + p];
                let mut out = Field::zeros(self.grid, 3);
                let vals = out.values_mut();
                for p in 0..npts {
                    vals[p] = at(2, 1, p) - at(1, 2, p);
                    vals[npts + p] = at(0, 2, p) - at(2, 0, p);
                    vals[2 * npts + p] = at(1, 0, p) - at(0, 1, p);
                }
                Ok(out)
            }
            d => Err(Error::InvalidArgument(format!("curl is undefined in {d}D"))),
        }
    }

    pub fn laplacian(&mut self, f: &Field) -> Result<Field> {
        self.check_grid(f)?;
        let mut out = f.clone();
        for c in 0..f.components() {
            let vals = self.apply_multiplier(f.component(c), |k| Complex64::new(-k2(k), 0.0));
            out.component_mut(c).copy_from_slice(&vals);
        }
        Ok(out)
    }

    /// Leray-Hodge projection `v - grad lap^{-1} div v`. The mean mode, and
    /// any mode whose derivative wavevector vanishes, pass through unchanged.
    pub fn leray_project(&mut self, v: &Field) -> Result<Field> {
        self.check_grid(v)?;
        v.require_vector()?;
        let d = self.grid.dim();
        let specs: Vec<Vec<Complex64>> = (0..d).map(|j| self.forward(v.component(j))).collect();
        let mut out_specs = specs.clone();
        for idx in 0..self.grid.len() {
            let k = self.wavevector(idx);
            let kk = k2(k);
            if kk == 0.0 {
                continue;
            }
            let mut kdotv = Complex64::new(0.0, 0.0);
            for j in 0..d {
                kdotv += specs[j][idx] * k[j];
            }
            for j in 0..d {
                out_specs[j][idx] -= kdotv * (k[j] / kk);
            }
        }
        let mut out = Field::zeros(self.grid, d);
        for (j, s) in out_specs.into_iter().enumerate() {
            let vals = self.inverse(s);
            out.component_mut(j).copy_from_slice(&vals);
        }
        Ok(out)
    }

    /// `(1 - alpha^2 lap)^{-1} v`, componentwise. `alpha == 0` returns the input
    /// bit-for-bit.
    pub fn helmholtz_invert(&mut self, v: &Field, alpha: f64) -> Result<Field> {
        self.check_grid(v)?;
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidArgument(format!("alpha must be >= 0, got {alpha}")));
        }
        if alpha == 0.0 {
            return Ok(v.clone());
        }
        let a2 = alpha * alpha;
        let mut out = v.clone();
        for c in 0..v.components() {
            let vals = self.apply_multiplier(v.component(c), |k| Complex64::new(1.0 / (1.0 + a2 * k2(k)), 0.0));
            out.component_mut(c).copy_from_slice(&vals);
        }
        Ok(out)
    }

    /// `(1 - alpha^2 lap) u`, the forward Helmholtz operator.
    pub fn helmholtz_apply(&mut self, u: &Field, alpha: f64) -> Result<Field> {
        self.check_grid(u)?;
        let a2 = alpha * alpha;
        let mut out = u.clone();
        for c in 0..u.components() {
            let vals = self.apply_multiplier(u.component(c), |k| Complex64::new(1.0 + a2 * k2(k), 0.0));
            out.component_mut(c).copy_from_slice(&vals);
        }
        Ok(out)
    }

    /// Translate every component by `shift`: `out(x) = f(x - shift)`, exact for
    /// band-limited data.
    pub fn translate(&mut self, f: &Field, shift: [f64; 3]) -> Result<Field> {
        self.check_grid(f)?;
        let n = self.grid.n();
        let base = 2.0 * PI / self.grid.length();
        let mut out = f.clone();
        for c in 0..f.components() {
            let mut spec = self.forward(f.component(c));
            for (idx, s) in spec.iter_mut().enumerate() {
                let m = self.grid.multi_index(idx);
                let mut phase = 0.0;
                for axis in 0..self.grid.dim() {
                    // Nyquist is real-valued; shifting it is ambiguous so it is dropped.
                    if m[axis] == n / 2 {
                        *s = Complex64::new(0.0, 0.0);
                    }
                    phase -= base * self.modes[m[axis]] as f64 * shift[axis];
                }
                *s *= Complex64::from_polar(1.0, phase);
            }
            let vals = self.inverse(spec);
            out.component_mut(c).copy_from_slice(&vals);
        }
        Ok(out)
    }

    fn check_grid(&self, f: &Field) -> Result<()> {
        if *f.grid() != self.grid {
            return Err(Error::ShapeMismatch(format!(
                "field grid {:?} does not match workspace grid {:?}",
                f.grid(),
                self.grid
            )));
        }
        Ok(())
    }
}

pub(crate) fn k2(k: [f64; 3]) -> f64 {
    k[0] * k[0] + k[1] * k[1] + k[2] * k[2]
}

pub fn leray_project(v: &Field) -> Result<Field> {
    SpectralWorkspace::new(*v.grid()).leray_project(v)
}

pub fn gradient(f: &Field) -> Result<Field> {
    SpectralWorkspace::new(*f.grid()).gradient(f)
}

pub fn divergence(v: &Field) -> Result<Field> {
    SpectralWorkspace::new(*v.grid()).divergence(v)
}

pub fn curl(v: &Field) -> Result<Field> {
    SpectralWorkspace::new(*v.grid()).curl(v)
}

pub fn helmholtz_invert(v: &Field, alpha: f64) -> Result<Field> {
    SpectralWorkspace::new(*v.grid()).helmholtz_invert(v, alpha)
}

#[cfg(test)]
mod tests {
    use super::*;

    const TAU: f64 = 2.0 * PI;

    fn tg(n: usize) -> Field {
        let g = PeriodicGrid::new(2, n, TAU).unwrap();
        Field::from_fn(g, 2, |p, c| {
            if c == 0 {
                p[0].cos() * p[1].sin()
            } else {
                -p[0].sin() * p[1].cos()
            }
        })
    }

    #[test]
    fn gradient_of_constant_is_exactly_zero() {
        let g = PeriodicGrid::new(2, 16, 3.0).unwrap();
        let f = Field::constant(g, &[2.5]);
        let df = gradient(&f).unwrap();
        assert_eq!(df.max_abs(), 0.0);
    }

    #[test]
    fn gradient_of_single_mode() {
        let l = 3.0;
        let g = PeriodicGrid::new(1, 32, l).unwrap();
        let k = TAU / l;
        let f = Field::from_fn(g, 1, |p, _| (k * p[0]).sin());
        let df = gradient(&f).unwrap();
        let exact = Field::from_fn(g, 1, |p, _| k * (k * p[0]).cos());
        assert!(df.sub(&exact).unwrap().max_abs() <= 1e-10);
    }

    #[test]
    fn projection_of_divergence_free_is_identity() {
        let u = tg(32);
        let pu = leray_project(&u).unwrap();
        assert!(pu.sub(&u).unwrap().max_abs() <= 1e-12 * u.max_abs());
    }

    #[test]
    fn projection_examples_on_two_torus() {
        let g = PeriodicGrid::new(2, 16, TAU).unwrap();
        let shear = Field::from_fn(g, 2, |p, c| if c == 0 { p[1].sin() } else { 0.0 });
        let p = leray_project(&shear).unwrap();
        assert!(p.sub(&shear).unwrap().max_abs() < 1e-13);
        // (sin x, 0) = grad(-cos x): the direct per-mode formula gives zero on all
        // four active modes k = (+-1, 0).
        let grad = Field::from_fn(g, 2, |p, c| if c == 0 { p[0].sin() } else { 0.0 });
        let p = leray_project(&grad).unwrap();
        assert!(p.max_abs() < 1e-13);
    }

    #[test]
    fn divergence_examples() {
        let u = tg(32);
        assert!(divergence(&u).unwrap().max_abs() <= 1e-12);
        let g = *u.grid();
        let v = Field::from_fn(g, 2, |p, c| if c == 0 { p[0].sin() } else { 0.0 });
        let div = divergence(&v).unwrap();
        let exact = Field::from_fn(g, 1, |p, _| p[0].cos());
        assert!(div.sub(&exact).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn curl_of_taylor_green_by_hand() {
        // u1 = cos x sin y, u2 = -sin x cos y:
        // d1 u2 = -cos x cos y, d2 u1 = cos x cos y  =>  w = -2 cos x cos y
        let u = tg(32);
        let w = curl(&u).unwrap();
        let exact = Field::from_fn(*u.grid(), 1, |p, _| -2.0 * p[0].cos() * p[1].cos());
        assert!(w.sub(&exact).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn curl_of_abc_field_by_hand() {
        // v = (sin z, sin x, sin y):
        // w1 = d2 v3 - d3 v2 = cos y, w2 = d3 v1 - d1 v3 = cos z, w3 = d1 v2 - d2 v1 = cos x
        let g = PeriodicGrid::new(3, 16, TAU).unwrap();
        let v = Field::from_fn(g, 3, |p, c| [p[2].sin(), p[0].sin(), p[1].sin()][c]);
        let w = curl(&v).unwrap();
        let exact = Field::from_fn(g, 3, |p, c| [p[1].cos(), p[2].cos(), p[0].cos()][c]);
        assert!(w.sub(&exact).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn curl_rejects_one_dimension() {
        let g = PeriodicGrid::new(1, 16, 1.0).unwrap();
        assert!(curl(&Field::zeros(g, 1)).is_err());
    }

    #[test]
    fn helmholtz_single_mode() {
        let g = PeriodicGrid::new(1, 16, TAU).unwrap();
        let v = Field::from_fn(g, 1, |p, _| p[0].sin());
        let u = helmholtz_invert(&v, 1.0).unwrap();
        let exact = Field::from_fn(g, 1, |p, _| 0.5 * p[0].sin());
        assert!(u.sub(&exact).unwrap().max_abs() < 1e-14);
        assert_eq!(helmholtz_invert(&v, 0.0).unwrap(), v);
        assert!(helmholtz_invert(&v, -1.0).is_err());
    }

    #[test]
    fn translate_moves_modes() {
        let g = PeriodicGrid::new(2, 16, TAU).unwrap();
        let f = Field::from_fn(g, 1, |p, _| (p[0] + 2.0 * p[1]).sin());
        let s = [0.3, -0.7, 0.0];
        let t = SpectralWorkspace::new(g).translate(&f, s).unwrap();
        let exact = Field::from_fn(g, 1, |p, _| ((p[0] - s[0]) + 2.0 * (p[1] - s[1])).sin());
        assert!(t.sub(&exact).unwrap().max_abs() < 1e-12);
    }
}
