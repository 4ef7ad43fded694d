//! Cross-module oracles for the dynamics engine: closed-form damped Rabi
//! solution, linearity and state-validity invariants, and the Gaussian
//! quadrature against an independent adaptive integrator.

use ndarray::Array2;
use num_complex::Complex64 as C64;
use std::f64::consts::TAU;
use trion_core::fit::eval_pumping_rate;
use trion_core::lindblad::{
    build_collapse_channels, build_hamiltonian, evolve, pure_state, DriveTerm, Envelope,
    FrameSpec,
};
use trion_core::model::{
    ChargeSpecies, DecayRates, FieldEnvironment, Level, LevelScheme,
};
use trion_core::noise::gauss_average;
use trion_core::ode::OdeOptions;
use trion_core::rng::RngStream;

fn xm_scheme() -> LevelScheme {
    LevelScheme::new(ChargeSpecies::Xm, 315.97, TAU * 10.0, TAU * 8.4).unwrap()
}

fn env() -> FieldEnvironment {
    FieldEnvironment::new(2.0, 0.0, 4.0, 0.357).unwrap()
}

/// Closed-form excited population of the resonantly driven, damped two-level
/// system (decay gamma entirely back to the ground state), from the 2x2
/// matrix exponential of the reduced Bloch equations:
/// p_e' = -gamma p_e - Omega v,  v' = Omega p_e - Omega/2 - (gamma/2) v.
fn torrey_excited_population(omega: f64, gamma: f64, t: f64) -> f64 {
    // x' = A x + b around the steady state x_ss = -A^-1 b
    let a = [[-gamma, -omega], [omega, -0.5 * gamma]];
    let b = [0.0, -0.5 * omega];
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    let x_ss = [
        -(a[1][1] * b[0] - a[0][1] * b[1]) / det,
        -(a[0][0] * b[1] - a[1][0] * b[0]) / det,
    ];
    // exp(At) = e^{mt} [cosh(qt) I + sinh(qt)/q (A - m I)], m = tr A / 2
    let m = 0.5 * (a[0][0] + a[1][1]);
    let q2 = C64::new(m * m - det, 0.0);
    let q = q2.sqrt();
    let (ch, shq) = if q.norm() < 1e-14 {
        (C64::new(1.0, 0.0), C64::new(t, 0.0))
    } else {
        ((q * t).cosh(), (q * t).sinh() / q)
    };
    let emt = C64::new((m * t).exp(), 0.0);
    let dx0 = [-x_ss[0], -x_ss[1]]; // x0 = (0, 0), starting in the ground state
    let e00 = emt * (ch + shq * (a[0][0] - m));
    let e01 = emt * shq * a[0][1];
    x_ss[0] + (e00 * dx0[0] + e01 * dx0[1]).re
}

#[test]
fn two_level_reduction_matches_analytic_damped_rabi() {
    // only g1 and e1 coupled and populated; e1 decays exclusively to g1
    let scheme = xm_scheme();
    let gamma = 3.07;
    let rates = DecayRates::new(0.0, 0.0, gamma, 0.0, 0.0, 0.0).unwrap();
    let channels = build_collapse_channels(&rates, &scheme, &env());
    for &omega in &[0.8, 3.07, 9.0] {
        let drive = DriveTerm::resonant(Level::G1, Level::E1, Envelope::Constant(omega));
        let h = build_hamiltonian(&scheme, &[drive], FrameSpec::AnchorDrives, 0.0, 0.0).unwrap();
        let times: Vec<f64> = (0..=400).map(|i| i as f64 * 0.02).collect();
        let traj = evolve(&pure_state(Level::G1), &h, &channels, &times, &OdeOptions::default())
            .unwrap();
        for (t, p) in times.iter().zip(traj.population(Level::E1)) {
            let exact = torrey_excited_population(omega, gamma, *t);
            assert!(
                (p - exact).abs() < 1e-5,
                "Omega={omega}, t={t}: {p} vs {exact}"
            );
        }
    }
}

#[test]
fn evolve_is_linear_in_the_initial_state() {
    let scheme = xm_scheme();
    let rates = DecayRates::new(0.12857, 0.11443, 2.71257, 0.11443, 0.0, 0.005).unwrap();
    let channels = build_collapse_channels(&rates, &scheme, &env());
    let drive = DriveTerm::resonant(Level::G1, Level::E1, Envelope::Constant(2.0));
    let h = build_hamiltonian(&scheme, &[drive], FrameSpec::AnchorDrives, 0.3, 0.1).unwrap();
    let times: Vec<f64> = (0..=50).map(|i| i as f64 * 0.5).collect();

    let mut rng = RngStream::new(31, 0);
    for trial in 0..4 {
        // two random diagonal-dominant density matrices
        let mut random_rho = || -> Array2<C64> {
            let mut d: Vec<f64> = (0..4).map(|_| rng.uniform()).collect();
            let s: f64 = d.iter().sum();
            d.iter_mut().for_each(|v| *v /= s);
            let mut m = Array2::<C64>::zeros((4, 4));
            for i in 0..4 {
                m[(i, i)] = C64::new(d[i], 0.0);
            }
            // small coherence between the grounds, kept PSD
            let c = 0.4 * (d[0] * d[1]).sqrt() * (rng.uniform() - 0.5);
            m[(0, 1)] = C64::new(c, 0.0);
            m[(1, 0)] = C64::new(c, 0.0);
            m
        };
        let rho1 = random_rho();
        let rho2 = random_rho();
        let alpha = 0.3 + 0.4 * rng.uniform();
        let mix = &rho1 * C64::new(alpha, 0.0) + &rho2 * C64::new(1.0 - alpha, 0.0);

        let opts = OdeOptions::default();
        let t1 = evolve(&rho1, &h, &channels, &times, &opts).unwrap();
        let t2 = evolve(&rho2, &h, &channels, &times, &opts).unwrap();
        let tm = evolve(&mix, &h, &channels, &times, &opts).unwrap();
        for k in 0..times.len() {
            let expect =
                &t1.states[k] * C64::new(alpha, 0.0) + &t2.states[k] * C64::new(1.0 - alpha, 0.0);
            let diff = (&tm.states[k] - &expect)
                .iter()
                .map(|v| v.norm())
                .fold(0.0f64, f64::max);
            assert!(diff < 1e-8, "trial {trial}, t={}: {diff:e}", times[k]);
        }
    }
}

#[test]
fn trajectories_stay_valid_under_drive_and_noise() {
    let scheme = xm_scheme();
    let rates = DecayRates::new(0.12857, 0.11443, 2.71257, 0.11443, 0.02, 0.01).unwrap();
    let channels = build_collapse_channels(&rates, &scheme, &env());
    let drive = DriveTerm {
        lower: Level::G1,
        upper: Level::E1,
        rabi: Envelope::Pulse {
            amplitude: 4.0,
            t_on: 5.0,
            t_off: 60.0,
            rise_ns: 0.1,
        },
        detuning: 0.9,
        phase: 0.4,
    };
    let h = build_hamiltonian(&scheme, &[drive], FrameSpec::AnchorDrives, -1.2, 0.2).unwrap();
    let times: Vec<f64> = (0..=300).map(|i| i as f64 * 0.3).collect();
    let traj = evolve(
        &trion_core::lindblad::ground_mixture(0.53, 0.47),
        &h,
        &channels,
        &times,
        &OdeOptions::default(),
    )
    .unwrap();
    traj.validate().unwrap();
}

/// Adaptive Simpson quadrature, refined until the local error estimate is
/// below the tolerance.
fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, m: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (f(a) + 4.0 * f(m) + f(b))
    }
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        m: f64,
        b: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let left = simpson(f, a, lm, m);
        let right = simpson(f, m, rm, b);
        if depth > 40 || (left + right - whole).abs() < 15.0 * tol {
            left + right + (left + right - whole) / 15.0
        } else {
            recurse(f, a, lm, m, left, tol / 2.0, depth + 1)
                + recurse(f, m, rm, b, right, tol / 2.0, depth + 1)
        }
    }
    let m = 0.5 * (a + b);
    recurse(f, a, m, b, simpson(f, a, m, b), tol, 0)
}

#[test]
fn gauss_hermite_matches_adaptive_quadrature_on_pumping_integrand() {
    // Lorentzian integrand of the pumping-rate average at P = P_sat
    for &(gamma_0, sigma_mhz) in &[(3.07, 140.0), (2.48, 345.0), (3.07, 700.0)] {
        let sigma = TAU * sigma_mhz * 1e-3;
        let g0sq: f64 = gamma_0 * gamma_0;
        let omega_sq = g0sq;
        let f = move |d: f64| omega_sq / (2.0 * omega_sq + g0sq + 4.0 * d * d);
        let gh = gauss_average(f, sigma, 64).unwrap();
        let gauss =
            move |d: f64| f(d) * (-0.5 * (d / sigma).powi(2)).exp() / (sigma * TAU.sqrt());
        let reference = adaptive_simpson(&gauss, -8.0 * sigma, 8.0 * sigma, 1e-14);
        assert!(
            ((gh - reference) / reference).abs() < 1e-8,
            "gamma_0={gamma_0}, sigma={sigma_mhz} MHz: {gh} vs {reference}"
        );
    }
}

#[test]
fn gauss_hermite_node_count_is_converged() {
    // doubling 64 -> 128 nodes moves the pumping-rate average by < 1e-10
    // relative on all acceptance parameter sets
    for &(gamma_x, gamma_0, sigma_mhz) in &[
        (0.243, 3.07, 140.0),
        (0.158, 2.48, 345.0),
        (0.128, 3.07, 700.0),
        (0.243, 3.07, 0.0),
    ] {
        let sigma = TAU * sigma_mhz * 1e-3;
        for &p in &[0.05, 0.5, 1.0, 4.0, 8.0] {
            let a = eval_pumping_rate(p, gamma_x, gamma_0, sigma, 64).unwrap();
            let b = eval_pumping_rate(p, gamma_x, gamma_0, sigma, 128).unwrap();
            assert!(
                ((a - b) / b).abs() < 1e-10,
                "P={p}, sigma={sigma_mhz}: {a} vs {b}"
            );
        }
    }
}

#[test]
fn spectral_diffusion_offset_shifts_the_resonance() {
    // a drive detuned by exactly the realization offset is back on
    // resonance: pumping proceeds at the sigma = 0 rate
    let scheme = xm_scheme();
    let rates = DecayRates::new(0.12857, 0.11443, 2.71257, 0.11443, 0.0, 0.0).unwrap();
    let channels = build_collapse_channels(&rates, &scheme, &env());
    let offset = 1.7;
    let drive = DriveTerm {
        lower: Level::G1,
        upper: Level::E1,
        rabi: Envelope::Constant(3.07),
        detuning: offset,
        phase: 0.0,
    };
    let h = build_hamiltonian(&scheme, &[drive], FrameSpec::AnchorDrives, offset, 0.0).unwrap();
    let times: Vec<f64> = (0..=200).map(|i| i as f64 * 0.25).collect();
    let traj = evolve(&pure_state(Level::G1), &h, &channels, &times, &OdeOptions::default())
        .unwrap();
    // population transfer completes as on resonance
    let p_g2 = traj.population(Level::G2).last().cloned().unwrap();
    assert!(p_g2 > 0.98, "pumped fraction {p_g2}");
}
