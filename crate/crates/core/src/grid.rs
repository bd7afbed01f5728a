//! Uniform periodic grids on the torus `[0, L)^d`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point in up to three dimensions; unused trailing coordinates are zero.
pub type Point = [f64; 3];

/// Uniform collocation grid with `n` points per axis on `[0, length)^dim`.
///
/// Flat indices are row-major with axis 0 slowest: in 2D, `idx = i0 * n + i1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeriodicGrid {
    dim: usize,
    n: usize,
    length: f64,
}

impl PeriodicGrid {
    pub fn new(dim: usize, n: usize, length: f64) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::InvalidGrid(format!("dimension must be 1, 2 or 3, got {dim}")));
        }
        if n < 8 || !n.is_power_of_two() {
            return Err(Error::InvalidGrid(format!(
                "points per dimension must be a power of two >= 8, got {n}"
            )));
        }
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::InvalidGrid(format!("period must be positive, got {length}")));
        }
        Ok(Self { dim, n, length })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn spacing(&self) -> f64 {
        self.length / self.n as f64
    }

    /// Number of grid points, `n^dim`.
    pub fn len(&self) -> usize {
        1 << (self.shift() * self.dim as u32)
    }

    /// `log2(n)`; `n` is a power of two.
    #[inline]
    fn shift(&self) -> u32 {
        self.n.trailing_zeros()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Volume of one grid cell, `h^dim`.
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    /// Stride of `axis` in the flat layout.
    #[inline]
    pub fn stride(&self, axis: usize) -> usize {
        1 << (self.shift() * (self.dim - 1 - axis) as u32)
    }

    #[inline]
    pub fn multi_index(&self, flat: usize) -> [usize; 3] {
        let mut out = [0; 3];
        let (shift, mask) = (self.shift(), self.n - 1);
        let mut rem = flat;
        for axis in (0..self.dim).rev() {
            out[axis] = rem & mask;
            rem >>= shift;
        }
        out
    }

    pub fn flat_index(&self, multi: [usize; 3]) -> usize {
        (0..self.dim).fold(0, |acc, axis| acc * self.n + multi[axis])
    }

    /// Physical position of a grid point. Computed from the integer index so
    /// repeated queries never accumulate rounding drift.
    #[inline]
    pub fn position(&self, flat: usize) -> Point {
        let h = self.spacing();
        let m = self.multi_index(flat);
        let mut p = [0.0; 3];
        for axis in 0..self.dim {
            p[axis] = m[axis] as f64 * h;
        }
        p
    }

    /// Reduce a coordinate into `[0, L)`.
    pub fn wrap(&self, x: f64) -> f64 {
        let w = x.rem_euclid(self.length);
        // rem_euclid can round up to exactly L for tiny negative inputs.
        if w >= self.length {
            0.0
        } else {
            w
        }
    }

    pub fn positions(&self) -> impl Iterator<Item = Point> + '_ {
        (0..self.len()).map(move |i| self.position(i))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_sizes() {
        assert!(PeriodicGrid::new(2, 4, 1.0).is_err());
        assert!(PeriodicGrid::new(2, 48, 1.0).is_err());
        assert!(PeriodicGrid::new(4, 16, 1.0).is_err());
        assert!(PeriodicGrid::new(0, 16, 1.0).is_err());
        assert!(PeriodicGrid::new(2, 16, 0.0).is_err());
        assert!(PeriodicGrid::new(2, 16, f64::NAN).is_err());
        assert!(PeriodicGrid::new(3, 8, 2.0).is_ok());
    }

    #[test]
    fn index_round_trip() {
        let g = PeriodicGrid::new(3, 8, 1.0).unwrap();
        for flat in 0..g.len() {
            assert_eq!(g.flat_index(g.multi_index(flat)), flat);
        }
        assert_eq!(g.stride(0), 64);
        assert_eq!(g.stride(2), 1);
    }

    #[test]
    fn wrap_is_exact_and_in_range() {
        let g = PeriodicGrid::new(1, 16, 2.0).unwrap();
        assert_eq!(g.wrap(2.5), 0.5);
        assert_eq!(g.wrap(-0.5), 1.5);
        assert_eq!(g.wrap(-1e-300), 0.0);
        let mut x = 0.3;
        for _ in 0..1000 {
            x = g.wrap(x + 2.0);
        }
        assert!((x - 0.3).abs() < 1e-12);
    }
}
