//! Sampled scalar, vector and matrix fields on a [`PeriodicGrid`].

use crate::error::{Error, Result};
use crate::grid::{PeriodicGrid, Point};

/// Component-major sample storage: component `c` occupies
/// `values[c * npts .. (c + 1) * npts]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: PeriodicGrid,
    components: usize,
    values: Vec<f64>,
}

impl Field {
    pub fn zeros(grid: PeriodicGrid, components: usize) -> Self {
        Self {
            grid,
            components,
            values: vec![0.0; components * grid.len()],
        }
    }

    pub fn constant(grid: PeriodicGrid, value: &[f64]) -> Self {
        let mut f = Self::zeros(grid, value.len());
        for (c, v) in value.iter().enumerate() {
            f.component_mut(c).fill(*v);
        }
        f
    }

    /// Sample `f(position, component)` at every grid point.
    pub fn from_fn(grid: PeriodicGrid, components: usize, f: impl Fn(Point, usize) -> f64) -> Self {
        let npts = grid.len();
        let mut values = vec![0.0; components * npts];
        for idx in 0..npts {
            let p = grid.position(idx);
            for c in 0..components {
                values[c * npts + idx] = f(p, c);
            }
        }
        Self {
            grid,
            components,
            values,
        }
    }

    /// Wrap raw values, rejecting wrong shapes and non-finite samples.
    pub fn from_values(grid: PeriodicGrid, components: usize, values: Vec<f64>) -> Result<Self> {
        if components == 0 || values.len() != components * grid.len() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} x {} values, got {}",
                components,
                grid.len(),
                values.len()
            )));
        }
        let f = Self {
            grid,
            components,
            values,
        };
        f.check_finite("field values")?;
        Ok(f)
    }

    pub fn grid(&self) -> &PeriodicGrid {
        &self.grid
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn component(&self, c: usize) -> &[f64] {
        let n = self.grid.len();
        &self.values[c * n..(c + 1) * n]
    }

    pub fn component_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.grid.len();
        &mut self.values[c * n..(c + 1) * n]
    }

    /// Value vector at one grid point.
    pub fn at(&self, idx: usize) -> [f64; 9] {
        let n = self.grid.len();
        let mut out = [0.0; 9];
        for c in 0..self.components.min(9) {
            out[c] = self.values[c * n + idx];
        }
        out
    }

    pub fn check_finite(&self, what: &'static str) -> Result<()> {
        if self.values.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite(what))
        }
    }

    pub fn require_vector(&self) -> Result<()> {
        if self.components != self.grid.dim() {
            return Err(Error::ShapeMismatch(format!(
                "expected a {}-component vector field, got {} components",
                self.grid.dim(),
                self.components
            )));
        }
        Ok(())
    }

    pub fn require_same_shape(&self, other: &Field) -> Result<()> {
        if self.grid != other.grid || self.components != other.components {
            return Err(Error::ShapeMismatch(format!(
                "fields differ: {} components on {:?} vs {} components on {:?}",
                self.components, self.grid, other.components, other.grid
            )));
        }
        Ok(())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Largest pointwise Euclidean norm over components.
    pub fn max_norm(&self) -> f64 {
        let n = self.grid.len();
        (0..n)
            .map(|i| {
                (0..self.components)
                    .map(|c| self.values[c * n + i].powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(0.0, f64::max)
    }

    /// Root-mean-square over grid points of the pointwise Euclidean norm.
    pub fn rms(&self) -> f64 {
        (self.values.iter().map(|v| v * v).sum::<f64>() / self.grid.len() as f64).sqrt()
    }

    /// Discrete L2 inner product `h^d sum f.g`.
    pub fn inner(&self, other: &Field) -> f64 {
        self.grid.cell_volume() * self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum::<f64>()
    }

    /// Discrete L2 norm `sqrt(h^d sum |f|^2)`.
    pub fn l2_norm(&self) -> f64 {
        self.inner(self).sqrt()
    }

    /// Kinetic energy `0.5 * ||u||_2^2`.
    pub fn energy(&self) -> f64 {
        0.5 * self.inner(self)
    }

    pub fn mean(&self, c: usize) -> f64 {
        self.component(c).iter().sum::<f64>() / self.grid.len() as f64
    }

    pub fn min_max(&self, c: usize) -> (f64, f64) {
        self.component(c)
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    pub fn scale(&mut self, s: f64) {
        self.values.iter_mut().for_each(|v| *v *= s);
    }

    /// `self += a * other`
    pub fn axpy(&mut self, a: f64, other: &Field) {
        debug_assert_eq!(self.values.len(), other.values.len());
        for (x, y) in self.values.iter_mut().zip(&other.values) {
            *x += a * y;
        }
    }

    pub fn sub(&self, other: &Field) -> Result<Field> {
        self.require_same_shape(other)?;
        let mut out = self.clone();
        out.axpy(-1.0, other);
        Ok(out)
    }
}
