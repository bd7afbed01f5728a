//! Measurement helpers shared by the integration test targets.

#![allow(dead_code)]

use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use slns_core::{interp, spectral, Field, InterpScheme, PeriodicGrid};

pub fn grid(dim: usize, n: usize) -> PeriodicGrid {
    PeriodicGrid::new(dim, n, TAU).unwrap()
}

/// Random trigonometric polynomial with modes `|m|_inf <= kmax`, as a closure.
pub fn trig_poly(dim: usize, seed: u64, kmax: i64) -> impl Fn([f64; 3]) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut terms = Vec::new();
    let range = |d: usize| if d < dim { -kmax..=kmax } else { 0..=0 };
    for a in range(0) {
        for b in range(1) {
            for c in range(2) {
                terms.push((
                    [a as f64, b as f64, c as f64],
                    rng.random::<f64>() - 0.5,
                    rng.random::<f64>() * TAU,
                ));
            }
        }
    }
    move |p| {
        terms
            .iter()
            .map(|(m, amp, ph)| amp * (m[0] * p[0] + m[1] * p[1] + m[2] * p[2] + ph).cos())
            .sum()
    }
}

pub fn scalar(g: PeriodicGrid, f: impl Fn([f64; 3]) -> f64) -> Field {
    Field::from_fn(g, 1, |p, _| f(p))
}

/// Vector field whose components are independent random trig polynomials.
pub fn random_vector(g: PeriodicGrid, seed: u64, kmax: i64) -> Field {
    let polys: Vec<_> = (0..g.dim())
        .map(|c| trig_poly(g.dim(), seed * 31 + c as u64, kmax))
        .collect();
    Field::from_fn(g, g.dim(), |p, c| polys[c](p))
}

/// `(||P P v - P v||_inf / ||v||_inf, ||P grad q||_inf / ||grad q||_inf,
///   |<P v, grad q>| / (||v|| ||grad q||))`
pub fn projection_defects(g: PeriodicGrid, seed: u64) -> (f64, f64, f64) {
    let v = random_vector(g, seed, 3);
    let q = scalar(g, trig_poly(g.dim(), seed + 1000, 3));
    let pv = spectral::leray_project(&v).unwrap();
    let ppv = spectral::leray_project(&pv).unwrap();
    let idem = ppv.sub(&pv).unwrap().max_abs() / v.max_abs();
    let gq = spectral::gradient(&q).unwrap();
    let pgq = spectral::leray_project(&gq).unwrap();
    let annih = pgq.max_abs() / gq.max_abs();
    let orth = pv.inner(&gq).abs() / (v.l2_norm() * gq.l2_norm());
    (idem, annih, orth)
}

/// Fourth-order centered difference along `axis` of component 0.
pub fn fd4(f: &Field, axis: usize) -> Vec<f64> {
    let g = *f.grid();
    let n = g.n() as isize;
    let h = g.spacing();
    (0..g.len())
        .map(|idx| {
            let mi = g.multi_index(idx);
            let at = |s: isize| {
                let mut m = mi;
                m[axis] = ((mi[axis] as isize + s).rem_euclid(n)) as usize;
                f.values()[g.flat_index(m)]
            };
            (-at(2) + 8.0 * at(1) - 8.0 * at(-1) + at(-2)) / (12.0 * h)
        })
        .collect()
}

/// Local orders `log2(e_k / e_{k+1})` of a sequence measured with halving spacing.
pub fn halving_orders(errors: &[f64]) -> Vec<f64> {
    errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect()
}

/// Max difference between the spectral gradient and fourth-order finite
/// differences of a band-limited 2D field, for each `n`.
pub fn derivative_errors(ns: &[usize]) -> Vec<f64> {
    let f = trig_poly(2, 7, 3);
    ns.iter()
        .map(|&n| {
            let g = grid(2, n);
            let s = scalar(g, &f);
            let grad = spectral::gradient(&s).unwrap();
            (0..2)
                .map(|axis| {
                    fd4(&s, axis)
                        .iter()
                        .zip(grad.component(axis))
                        .map(|(a, b)| (a - b).abs())
                        .fold(0.0, f64::max)
                })
                .fold(0.0, f64::max)
        })
        .collect()
}

/// Max cubic-spline error at cell midpoints of the smooth, non-band-limited
/// `exp(sin x + cos 2y) / e` in 2D, for each `n`.
pub fn interpolation_errors(ns: &[usize]) -> Vec<f64> {
    let f = |p: [f64; 3]| (p[0].sin() + (2.0 * p[1]).cos() - 1.0).exp();
    ns.iter()
        .map(|&n| {
            let g = grid(2, n);
            let field = scalar(g, f);
            let h = g.spacing();
            let pts: Vec<[f64; 3]> = (0..g.len())
                .map(|idx| {
                    let p = g.position(idx);
                    [p[0] + 0.5 * h, p[1] + 0.5 * h, 0.0]
                })
                .collect();
            let vals = interp::interpolate(&field, &pts, InterpScheme::CubicSpline).unwrap();
            pts.iter()
                .zip(&vals)
                .map(|(p, v)| (v - f(*p)).abs())
                .fold(0.0, f64::max)
        })
        .collect()
}

/// Taylor-Green velocity `(cos x sin y, -sin x cos y)` on `[0, 2 pi)^2`.
pub fn taylor_green(g: PeriodicGrid) -> Field {
    Field::from_fn(g, 2, |p, c| {
        if c == 0 {
            p[0].cos() * p[1].sin()
        } else {
            -p[0].sin() * p[1].cos()
        }
    })
}

pub const HALF_PI: f64 = PI / 2.0;
