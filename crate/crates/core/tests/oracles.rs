mod common;

use std::f64::consts::{PI, TAU};

use common::*;
use slns_core::flow::{
    advance_forward_map, invert_displacement, invert_map, spde_residual, translated_flow_backend, FlowState,
    InversionOptions,
};
use slns_core::reference::{
    cole_hopf_burgers, cole_hopf_from_potential, fd_burgers, heat_sine, random_divergence_free, sine_potential,
    spectral_ns_run, taylor_green_2d, taylor_green_2d_at,
};
use slns_core::weber::{burgers_velocity, vorticity_2d, ForcingFn};
use slns_core::{Field, InterpScheme, PeriodicGrid, SpectralWorkspace, WienerEnsemble};

#[test]
fn cole_hopf_and_finite_differences_agree_on_the_sine_test() {
    let x = [HALF_PI];
    let ch = cole_hopf_from_potential(sine_potential(TAU, 1.0), TAU, 512, 0.1, 1.0, &x).unwrap()[0];
    let g = grid(1, 1024);
    let u0 = Field::from_fn(g, 1, |p, _| p[0].sin());
    let fd = fd_burgers(&u0, 0.1, 1.0).unwrap();
    let at = fd.values()[g.n() / 4];
    assert!((ch - at).abs() <= 1e-6, "cole-hopf {ch} vs fd {at}");
}

#[test]
fn cole_hopf_recovers_initial_data_and_zero() {
    let pts: Vec<f64> = (0..17).map(|i| i as f64 * TAU / 17.0).collect();
    let u = cole_hopf_from_potential(sine_potential(TAU, 1.0), TAU, 512, 0.1, 1e-12, &pts).unwrap();
    for (x, v) in pts.iter().zip(&u) {
        assert!((v - x.sin()).abs() <= 1e-8);
    }
    let zero = Field::zeros(grid(1, 64), 1);
    let u = cole_hopf_burgers(&zero, 0.1, 0.7, &pts).unwrap();
    assert!(u.iter().all(|v| v.abs() <= 1e-15));
}

#[test]
fn spectral_taylor_green_matches_exact_decay() {
    let g = grid(2, 64);
    let u0 = taylor_green_2d(g, 1.0).unwrap();
    let traj = spectral_ns_run(&u0, 0.05, 1e-2, 1.0, None, 0).unwrap();
    let (t, u) = traj.last().unwrap();
    assert!((t - 1.0).abs() < 1e-12);
    let exact = taylor_green_2d_at(g, 1.0, 0.05, 1.0).unwrap();
    assert!(u.sub(&exact).unwrap().max_abs() <= 1e-8);
}

fn perturbed_tg(g: PeriodicGrid) -> Field {
    let mut u = taylor_green_2d(g, 1.0).unwrap();
    u.axpy(1.0, &random_divergence_free(g, 11, 4, 0.3).unwrap());
    u
}

#[test]
fn spectral_solver_self_converges_at_fourth_order() {
    let g = grid(2, 32);
    let u0 = perturbed_tg(g);
    let end = |dt: f64| spectral_ns_run(&u0, 0.05, dt, 0.5, None, 0).unwrap().pop().unwrap().1;
    let fine = end(0.1 / 16.0);
    let errs: Vec<f64> = [0.1, 0.05, 0.025]
        .iter()
        .map(|&dt| end(dt).sub(&fine).unwrap().max_abs())
        .collect();
    let orders = halving_orders(&errs);
    assert!(orders.iter().all(|o| *o >= 3.5), "orders {orders:?} errors {errs:?}");
}

#[test]
fn inviscid_spectral_energy_is_conserved() {
    let g = grid(2, 32);
    let u0 = perturbed_tg(g);
    let traj = spectral_ns_run(&u0, 0.0, 1e-3, 0.05, None, 0).unwrap();
    let e0 = traj[0].1.energy();
    let e1 = traj.last().unwrap().1.energy();
    assert!((e1 - e0).abs() <= 1e-8 * e0);
}

#[test]
fn manufactured_forcing_keeps_the_spectral_solution_steady() {
    let g = grid(2, 32);
    let nu = 0.05;
    let u0 = taylor_green_2d(g, 1.0).unwrap();
    // -nu lap u0 = 2 nu u0 for the unit Taylor-Green mode
    let f = move |p: [f64; 3], _t: f64| {
        [
            2.0 * nu * p[0].cos() * p[1].sin(),
            -2.0 * nu * p[0].sin() * p[1].cos(),
            0.0,
        ]
    };
    let forcing: ForcingFn = &f;
    let traj = spectral_ns_run(&u0, nu, 1e-2, 1.0, Some(forcing), 0).unwrap();
    assert!(traj.last().unwrap().1.sub(&u0).unwrap().max_abs() <= 1e-8);
}

/// `M` realizations of pure Brownian translation over time `t`.
fn translated_ensemble(g: PeriodicGrid, m: usize, nu: f64, t: f64, seed: u64) -> FlowState {
    let ens = WienerEnsemble::new(m, g.dim(), seed).unwrap();
    let sigma = (2.0 * nu).sqrt();
    let mut st = FlowState::identity(g, m, t);
    for (r, maps) in st.maps.iter_mut().enumerate() {
        let w = ens.increment(r, 0, t);
        let c: Vec<f64> = (0..g.dim()).map(|j| sigma * w[j]).collect();
        let neg: Vec<f64> = c.iter().map(|v| -v).collect();
        maps.forward = Field::constant(g, &c);
        maps.inverse = Field::constant(g, &neg);
        maps.noise = w;
    }
    st
}

#[test]
fn pure_noise_transport_is_heat_evolution() {
    let g = grid(1, 64);
    let (nu, t, m) = (0.1, 0.5, 4000);
    let st = translated_ensemble(g, m, nu, t, 3);
    let u0 = Field::from_fn(g, 1, |p, _| p[0].sin());
    let u = burgers_velocity(&st, &u0, InterpScheme::CubicSpline).unwrap();
    let exact = heat_sine(g, 1, nu, t);
    let err = u.sub(&exact).unwrap().max_abs();
    assert!(err <= 3.0 / (m as f64).sqrt() * u0.max_abs(), "{err:e}");

    let g2 = grid(2, 32);
    let st = translated_ensemble(g2, m, nu, t, 4);
    let w0 = Field::from_fn(g2, 1, |p, _| p[0].sin());
    let w = vorticity_2d(&st, &w0, InterpScheme::CubicSpline).unwrap();
    let exact = heat_sine(g2, 1, nu, t);
    assert!(w.sub(&exact).unwrap().max_abs() <= 3.0 / (m as f64).sqrt());
}

fn bisect(x: f64, f: impl Fn(f64) -> f64) -> f64 {
    let (mut lo, mut hi) = (x - 1.0, x + 1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < x {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn newton_inversion_matches_bisection() {
    let g = grid(1, 256);
    let eps = 0.01 * TAU;
    let forward = Field::from_fn(g, 1, |p, _| eps * p[0].sin());
    let mut inv = Field::zeros(g, 1);
    let mut opts = InversionOptions::for_grid(&g);
    opts.tol = 1e-14;
    invert_displacement(&forward, &opts, &mut inv, None).unwrap();
    for idx in 0..g.len() {
        let x = g.position(idx)[0];
        let a = bisect(x, |a| a + eps * a.sin());
        assert!((inv.values()[idx] - (a - x)).abs() <= 1e-10, "at {x}");
    }
}

#[test]
fn inversion_commutes_with_grid_translation() {
    let g = grid(2, 32);
    let h = g.spacing();
    let forward = Field::from_fn(g, 2, |p, c| {
        0.1 * if c == 0 { (p[1] + 0.3).sin() } else { (2.0 * p[0]).cos() }
    });
    let c = [3.0 * h, -5.0 * h];
    let mut shifted = forward.clone();
    for (j, cj) in c.iter().enumerate() {
        shifted.component_mut(j).iter_mut().for_each(|v| *v += cj);
    }
    let mut opts = InversionOptions::for_grid(&g);
    opts.tol = 1e-13;
    let (mut a, mut b) = (Field::zeros(g, 2), Field::zeros(g, 2));
    invert_displacement(&forward, &opts, &mut a, None).unwrap();
    invert_displacement(&shifted, &opts, &mut b, None).unwrap();
    // A'(x) = A(x - c), so (A' - I)(x) = (A - I)(x - c) - c
    for idx in 0..g.len() {
        let mi = g.multi_index(idx);
        let src = g.flat_index([(mi[0] + 32 - 3) % 32, (mi[1] + 5) % 32, 0]);
        for (j, cj) in c.iter().enumerate() {
            let expect = a.values()[j * g.len() + src] - cj;
            assert!((b.values()[j * g.len() + idx] - expect).abs() <= 1e-10);
        }
    }
}

fn rk4_tg(a: [f64; 2], dt: f64) -> [f64; 2] {
    let u = |p: [f64; 2]| [p[0].cos() * p[1].sin(), -p[0].sin() * p[1].cos()];
    let add = |p: [f64; 2], k: [f64; 2], s: f64| [p[0] + s * k[0], p[1] + s * k[1]];
    let k1 = u(a);
    let k2 = u(add(a, k1, dt / 2.0));
    let k3 = u(add(a, k2, dt / 2.0));
    let k4 = u(add(a, k3, dt));
    [
        a[0] + dt / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
        a[1] + dt / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
    ]
}

#[test]
fn euler_maruyama_step_is_second_order_locally() {
    let g = grid(2, 32);
    let u = taylor_green(g);
    let err = |dt: f64| {
        let mut st = FlowState::identity(g, 1, 0.0);
        advance_forward_map(&mut st, &u, dt, &[[0.0; 3]], 0.0, InterpScheme::CubicSpline).unwrap();
        (0..g.len())
            .map(|idx| {
                let a = g.position(idx);
                let exact = rk4_tg([a[0], a[1]], dt);
                (0..2)
                    .map(|j| (a[j] + st.maps[0].forward.values()[j * g.len() + idx] - exact[j]).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
    };
    let (e1, e2) = (err(1e-3), err(5e-4));
    assert!(e1 <= 1e-6, "{e1:e}");
    assert!((e1 / e2).log2() >= 1.8, "{e1:e} {e2:e}");
}

#[test]
fn divergence_free_drift_preserves_volume() {
    let g = grid(2, 64);
    let u = taylor_green(g);
    let mut st = FlowState::identity(g, 1, 0.0);
    for _ in 0..10 {
        advance_forward_map(&mut st, &u, 1e-3, &[[0.0; 3]], 0.0, InterpScheme::CubicSpline).unwrap();
    }
    let det = st.jacobian_determinants().unwrap();
    let dev = det[0].values().iter().map(|v| (v - 1.0).abs()).fold(0.0, f64::max);
    assert!(dev <= 1e-4, "{dev:e}");
}

#[test]
fn inversion_is_consistent_both_ways() {
    let g = grid(2, 64);
    let u = taylor_green(g);
    let mut st = FlowState::identity(g, 1, 0.0);
    for _ in 0..5 {
        advance_forward_map(&mut st, &u, 1e-2, &[[0.0; 3]], 0.0, InterpScheme::CubicSpline).unwrap();
    }
    let opts = InversionOptions::for_grid(&g);
    let stats = invert_map(&mut st, &opts).unwrap();
    assert!(stats.max_residual <= opts.tol);
    // A o X - I, evaluated at the grid labels through the spline of A - I
    let m = &st.maps[0];
    let a_spline = slns_core::Interpolant::new(&m.inverse, InterpScheme::CubicSpline);
    let mut worst = 0.0f64;
    let mut v = [0.0; 3];
    for idx in 0..g.len() {
        let a = g.position(idx);
        let x = [
            a[0] + m.forward.values()[idx],
            a[1] + m.forward.values()[g.len() + idx],
            0.0,
        ];
        a_spline.eval(x, &mut v);
        for j in 0..2 {
            worst = worst.max((x[j] + v[j] - a[j]).abs());
        }
    }
    assert!(worst <= 10.0 * opts.tol.max(1e-6), "{worst:e}");
}

#[test]
fn backends_agree_exactly_without_drift() {
    let g = grid(2, 16);
    let u = Field::zeros(g, 2);
    let nu: f64 = 0.2;
    let sigma = (2.0 * nu).sqrt();
    let dws = [[0.03, -0.02, 0.0], [-0.01, 0.05, 0.0], [0.02, 0.02, 0.0]];
    let mut st = FlowState::identity(g, 1, 0.0);
    let mut path = vec![[0.0; 3]];
    for w in &dws {
        advance_forward_map(&mut st, &u, 0.01, &[*w], nu, InterpScheme::CubicSpline).unwrap();
        let last = *path.last().unwrap();
        path.push([last[0] + sigma * w[0], last[1] + sigma * w[1], 0.0]);
    }
    let opts = InversionOptions::for_grid(&g);
    invert_map(&mut st, &opts).unwrap();
    let vel = vec![u.clone(); dws.len() + 1];
    let alt = translated_flow_backend(&vel, &path, 0.01, &opts).unwrap();
    assert!(alt.forward.sub(&st.maps[0].forward).unwrap().max_abs() <= 1e-14);
    assert!(alt.inverse.sub(&st.maps[0].inverse).unwrap().max_abs() <= 1e-12);
}

#[test]
fn spde_residual_vanishes_for_pure_noise() {
    let g = grid(2, 16);
    let u = Field::zeros(g, 2);
    let opts = InversionOptions::for_grid(&g);
    for nu in [0.0, 0.3] {
        let mut st = FlowState::identity(g, 2, 0.0);
        let dw0 = [[0.1, 0.0, 0.0], [0.0, -0.2, 0.0]];
        advance_forward_map(&mut st, &u, 0.01, &dw0, nu, InterpScheme::CubicSpline).unwrap();
        invert_map(&mut st, &opts).unwrap();
        let before = st.clone();
        let dw1 = [[-0.05, 0.07, 0.0], [0.02, 0.01, 0.0]];
        advance_forward_map(&mut st, &u, 0.01, &dw1, nu, InterpScheme::CubicSpline).unwrap();
        invert_map(&mut st, &opts).unwrap();
        let r = spde_residual(&before, &st, &u, nu, &dw1, 0.01).unwrap();
        assert!(r.iter().all(|v| *v <= 1e-13), "{r:?}");
    }
}

#[test]
fn jacobian_of_translation_is_identity() {
    let g = grid(3, 8);
    let mut ws = SpectralWorkspace::new(g);
    let f = Field::constant(g, &[0.3, PI, -1.0]);
    let det = slns_core::flow::jacobian_determinant(&f, &mut ws).unwrap();
    assert!(det.values().iter().all(|v| (v - 1.0).abs() <= 1e-14));
}
