use std::f64::consts::PI;

use num_complex::Complex64;
use proptest::prelude::*;

use bec_interferometer::grid::{fidelity, inner_product, make_grid, spectral_norm_sqr, Fourier, WaveFunction};
use bec_interferometer::observables::{gpe_energy, populations, Populations};
use bec_interferometer::potentials::{double_well, imprint_phase, separation, TrapProtocol};
use bec_interferometer::stationary::{ground_state, first_excited};
use bec_interferometer::two_mode::{imprint_amplitudes, integrate_two_mode, ModeData, ModeTable, TwoModeState};

fn wave(n: usize, l: f64, coeffs: &[(f64, f64, f64, f64)]) -> WaveFunction {
    let grid = make_grid(n, l).unwrap();
    WaveFunction::from_fn(grid, |x| {
        coeffs
            .iter()
            .map(|&(a, b, x0, w)| Complex64::new(a, b) * (-(x - x0).powi(2) / (2.0 * w * w)).exp())
            .sum()
    })
    .normalized()
}

fn packets() -> impl Strategy<Value = Vec<(f64, f64, f64, f64)>> {
    prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64, -3.0..3.0f64, 0.5..2.0f64), 1..4)
        .prop_filter("non-zero field", |c| c.iter().any(|p| p.0.abs() + p.1.abs() > 0.1))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn grid_spacing_and_wavenumbers(exp in 3u32..12, l in 0.5..40.0f64) {
        let n = 1usize << exp;
        let grid = make_grid(n, l).unwrap();
        prop_assert!((grid.dx() - 2.0 * l / n as f64).abs() < 1e-14 * l);
        prop_assert!(grid.wavenumbers().iter().sum::<f64>().abs() < 1e-9 * n as f64 / l);
        prop_assert!((grid.x()[0] + l).abs() < 1e-12 * l);
    }

    #[test]
    fn inner_product_is_hermitian(a in packets(), b in packets()) {
        let psi = wave(128, 10.0, &a);
        let phi = wave(128, 10.0, &b);
        let ab = inner_product(&psi, &phi).unwrap();
        let ba = inner_product(&phi, &psi).unwrap();
        prop_assert!((ab - ba.conj()).norm() < 1e-14);
        let aa = inner_product(&psi, &psi).unwrap();
        prop_assert!(aa.im.abs() < 1e-15 && aa.re > 0.0);
        prop_assert!((aa.re - psi.norm_sqr()).abs() < 1e-14);
    }

    #[test]
    fn parseval(a in packets()) {
        let psi = wave(256, 12.0, &a);
        let spectral = spectral_norm_sqr(&psi, &Fourier::new(256));
        prop_assert!((spectral - psi.norm_sqr()).abs() < 1e-12);
    }

    #[test]
    fn potential_is_symmetric_and_non_negative(x in -20.0..20.0f64, d in 0.0..8.0f64) {
        let v = double_well(x, d);
        prop_assert!(v >= 0.0);
        prop_assert_eq!(v, double_well(-x, d));
        if d > 0.0 {
            prop_assert!(double_well(d, d).abs() < 1e-12 * (1.0 + d * d));
        }
    }

    #[test]
    fn separation_schedule_bounds(a in 0.0..4.0f64, tau in 1.0..200.0f64, s in 0.0..1.0f64) {
        let p = TrapProtocol::new(a, tau, 0.0, 0.0).unwrap();
        let d = separation(s * tau, &p);
        prop_assert!(d >= 0.0 && d <= 2.0 * a + 1e-12);
        prop_assert!((d - separation((1.0 - s) * tau, &p)).abs() < 1e-9 * (1.0 + a));
    }

    #[test]
    fn imprint_keeps_density(a in packets(), theta in 0.0..(2.0 * PI)) {
        let psi = wave(128, 10.0, &a);
        let mut imprinted = psi.clone();
        imprint_phase(&mut imprinted, theta);
        for (r0, r1) in psi.density().iter().zip(imprinted.density()) {
            prop_assert!((r0 - r1).abs() <= 1e-14 * r0.max(1e-300));
        }
    }

    #[test]
    fn energy_is_reflection_invariant(a in packets(), g in 0.0..20.0f64, d in 0.0..4.0f64) {
        let psi = wave(128, 10.0, &a);
        let grid = psi.grid().clone();
        let v = grid.sample(|x| double_well(x, d));
        let e = gpe_energy(&psi, &v, g);
        let e_r = gpe_energy(&psi.reflected(), &v, g);
        prop_assert!((e - e_r).abs() < 1e-10 * e.abs().max(1.0));
    }

    #[test]
    fn imprint_map_is_unitary(theta in 0.0..(2.0 * PI), re in -1.0..1.0f64, im in -1.0..1.0f64, phase in 0.0..(2.0 * PI)) {
        let r = (re * re + im * im).min(1.0);
        let c = TwoModeState {
            c0: Complex64::new(r.sqrt(), 0.0),
            c1: Complex64::from_polar((1.0 - r).sqrt(), phase),
            time: 0.0,
        };
        let out = imprint_amplitudes(theta, c);
        prop_assert!((out.norm_sqr() - 1.0).abs() < 1e-14);
    }
}

fn synthetic_table(g: f64, mu: (f64, f64), o: (f64, f64, f64)) -> ModeTable {
    let entries = (0..16)
        .map(|i| {
            let d = 4.0 * i as f64 / 15.0;
            let s = (-0.5 * d).exp();
            ModeData {
                d,
                mu0: mu.0 + 0.1 * d,
                mu1: mu.1 * (1.0 - 0.2 * s) + 0.1 * d,
                o00: o.0 * (1.0 + 0.1 * s),
                o01: o.1 * (1.0 - 0.3 * s),
                o11: o.2,
            }
        })
        .collect();
    ModeTable::from_entries(g, entries)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn two_mode_conserves_norm_and_respects_swap(
        g in 0.0..10.0f64,
        theta in 0.0..(2.0 * PI),
        mu in (0.5..3.0f64, 0.5..3.0f64),
        o in (0.15..0.4f64, 0.05..0.15f64, 0.15..0.4f64),
        x in 0.0..1.0f64,
    ) {
        let protocol = TrapProtocol::new(2.0, 10.0, theta, 0.0).unwrap();
        let table = synthetic_table(g, mu, o);
        let start = TwoModeState { c0: Complex64::new(x.sqrt(), 0.0), c1: Complex64::new(0.0, (1.0 - x).sqrt()), time: 0.0 };
        let mirror = TwoModeState { c0: start.c1, c1: start.c0, time: 0.0 };
        let flat = |m: (f64, f64), o: (f64, f64, f64)| ModeTable::from_entries(g, (0..8).map(|i| ModeData {
            d: i as f64 * 4.0 / 7.0, mu0: m.0, mu1: m.1, o00: o.0, o01: o.1, o11: o.2,
        }).collect());
        let run = integrate_two_mode(start, &protocol, &table, 1e-3, 1.0).unwrap();
        prop_assert!(run.max_norm_drift < 1e-9);
        let a = integrate_two_mode(start, &protocol, &flat(mu, o), 1e-3, 1.0).unwrap();
        let b = integrate_two_mode(mirror, &protocol, &flat((mu.1, mu.0), (o.2, o.1, o.0)), 1e-3, 1.0).unwrap();
        let (p0, p1) = a.final_state.populations();
        let (q0, q1) = b.final_state.populations();
        prop_assert!((p0 - q1).abs() < 1e-9 && (p1 - q0).abs() < 1e-9);
    }
}

#[test]
fn populations_of_random_superpositions_stay_bounded() {
    let grid = make_grid(128, 10.0).unwrap();
    let v = grid.sample(|x| 0.5 * x * x);
    let phi0 = ground_state(&grid, &v, 5.0, 1e-9).unwrap();
    let phi1 = first_excited(&grid, &v, 5.0, 1e-9).unwrap();
    let mut runner = proptest::test_runner::TestRunner::new(ProptestConfig::with_cases(64));
    runner
        .run(&packets(), |c| {
            let psi = wave(128, 10.0, &c);
            let Populations { p0, p1, p_ex } = populations(&psi, &phi0, &phi1).unwrap();
            prop_assert!(p0 + p1 <= 1.0 + 1e-9);
            prop_assert!((0.0..=1.0).contains(&p_ex));
            prop_assert!((fidelity(&psi, &psi).unwrap() - 1.0).abs() < 1e-12);
            Ok(())
        })
        .unwrap();
}
