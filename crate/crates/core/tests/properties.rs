use std::sync::Arc;

use proptest::prelude::*;

use qsp::coefficient::{Coefficient, Potentials};
use qsp::diagnostics::{check_lemma4, lyapunov_l1, moment_mq, sigma};
use qsp::harness::run::Check;
use qsp::regime::{
    build_majorant, classify, compute_gamma, default_candidates, design_blowup, lambda_value,
    verify_majorant,
};
use qsp::solver::{run_f, run_u, Outcome, RunParams};
use qsp::transform::{f_to_u, pam_profile, u_to_f, FieldF, FieldU};

fn pot(spec: &str) -> Potentials {
    Potentials::new(Arc::new(Coefficient::from_spec(spec).unwrap())).unwrap()
}

fn smooth_u(n: usize, mass: f64, c1: f64, c2: f64) -> FieldU {
    FieldU::from_fn(n, mass, |x| {
        let pi = std::f64::consts::PI;
        mass * (1.0 + c1 * (pi * x).cos() + c2 * (2.0 * pi * x).cos())
    })
    .unwrap()
}

fn short_run(t_max: f64) -> RunParams {
    RunParams {
        t_max,
        output_interval: t_max / 4.0,
        ..RunParams::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn transform_normalises_and_reverses_order(c1 in -0.45f64..0.45, c2 in -0.45f64..0.45, mass in 0.5f64..4.0) {
        let u = smooth_u(200, mass, c1, c2);
        let f = u_to_f(&u, 300).unwrap();
        prop_assert!((f.integral() - 1.0).abs() < 1e-14);
        prop_assert!((f.max() - 1.0 / u.min()).abs() < 0.02 / u.min());
        prop_assert!((f.min() - 1.0 / u.max()).abs() < 0.02 / u.min());
        let back = f_to_u(&f, 200).unwrap();
        prop_assert!((back.discrete_mass() - mass).abs() < 1e-14 * mass);
    }

    #[test]
    fn increasing_u_gives_decreasing_f(slope in 0.05f64..0.9) {
        let u = FieldU::from_fn(100, 1.0, |x| 1.0 + slope * (x - 0.5)).unwrap();
        let f = u_to_f(&u, 150).unwrap();
        prop_assert!(f.values().windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn gradient_estimates_hold(seed in 0u64..10_000, beta in -2.5f64..-0.5) {
        let p = pot(&format!("shift(1,{beta})"));
        for f in qsp::harness::validate::random_profiles(seed, 3, 1.0, 200).unwrap() {
            let s = check_lemma4(&p, &f).unwrap();
            prop_assert!(s.gex5 >= -1e-8 && s.gex6 >= -1e-8, "{s:?}");
        }
    }

    #[test]
    fn majorant_dominates_and_is_concave(beta in -3.0f64..-1.2) {
        let p = pot(&format!("shift(1,{beta})"));
        let g = compute_gamma(&p).unwrap();
        let b = build_majorant(&p, g.value, 20).unwrap();
        let rep = verify_majorant(&p, &b, 200).unwrap();
        prop_assert!(rep.failures.is_empty() && rep.slopes_decreasing);
        prop_assert!(rep.min_slack >= 0.0);
    }

    #[test]
    fn lambda_is_monotone(m1 in 0.0f64..10.0, dm in 0.0f64..10.0) {
        let d = design_blowup(&pot("shift(1,-2)"), 1.0, 0.5, 2.0, 400).unwrap();
        prop_assert!(lambda_value(&d, m1) <= lambda_value(&d, m1 + dm));
        prop_assert!(lambda_value(&d, 0.0) < 0.0);
    }

    #[test]
    fn f_runs_conserve_and_stay_positive(c1 in -0.4f64..0.4, c2 in -0.4f64..0.4) {
        let p = pot("shift(1,-1)");
        let f0 = u_to_f(&smooth_u(100, 1.0, c1, c2), 100).unwrap();
        let traj = run_f(&p, &f0, &short_run(0.2)).unwrap();
        prop_assert_eq!(traj.outcome, Outcome::GlobalSoFar);
        let m0 = (1.0 / f0.max()).min(1.0);
        for s in &traj.snapshots {
            prop_assert!(s.state.min() > 0.0);
            prop_assert!((s.state.integral() - 1.0).abs() <= 1e-10 * s.t + 1e-13);
            prop_assert!(s.state.max() <= sigma(1.0, m0, s.t).unwrap() + 1e-8);
        }
        for w in traj.snapshots.windows(2) {
            let (l0, l1) = (lyapunov_l1(&p, &w[0].state).unwrap(), lyapunov_l1(&p, &w[1].state).unwrap());
            prop_assert!(l1 <= l0 + 1e-8 * (w[1].t - w[0].t));
        }
    }

    #[test]
    fn u_runs_conserve_mass(c1 in -0.4f64..0.4, c2 in -0.4f64..0.4) {
        let c = Coefficient::from_spec("shift(1,-1)").unwrap();
        let u0 = smooth_u(100, 1.0, c1, c2);
        let traj = run_u(&c, &u0, &short_run(0.05)).unwrap();
        for s in &traj.snapshots {
            prop_assert!(s.state.u.min() > 0.0);
            prop_assert!((s.state.u.discrete_mass() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn checks_report_the_first_violation(slacks in prop::collection::vec(-1.0f64..1.0, 0..40), tol in 0.0f64..0.5) {
        let c = Check::from_slacks("x", tol, slacks.iter().enumerate().map(|(i, &s)| (i, i as f64, s)));
        let first = slacks.iter().position(|&s| s < -tol);
        prop_assert_eq!(c.passed, first.is_none());
        prop_assert_eq!(c.first_violation.map(|v| v.record), first);
        prop_assert_eq!(c.records, slacks.len());
    }
}

#[test]
fn classify_is_deterministic() {
    for spec in ["(1+r)^-2", "(1+r)*r^-2.5", "shift(1,-1)"] {
        let p = pot(spec);
        let first = classify(&p, &default_candidates()).unwrap();
        for _ in 0..9 {
            assert_eq!(classify(&p, &default_candidates()).unwrap(), first);
        }
    }
}

#[test]
fn designed_certificate_invariants() {
    let p = pot("shift(1,-2)");
    let d = design_blowup(&p, 1.0, 0.5, 2.0, 400).unwrap();
    assert!(d.k0 > 1.0 && d.mu_m > 0.0);
    assert!(d.certified && d.lambda_mq0 < 0.0);
    assert!(lambda_value(&d, d.mq0) < 0.0);
    let lambdas: Vec<f64> = d.trace.iter().map(|t| t.lambda).collect();
    assert!(lambdas.windows(2).all(|w| w[1] <= w[0]), "{lambdas:?}");
}

#[test]
fn functionals_match_refined_grid() {
    let profiles = |n: usize| -> Vec<FieldF> {
        vec![
            u_to_f(&FieldU::cosine(n, 1.0, 0.5).unwrap(), n).unwrap(),
            FieldF::from_fn(n, 1.0, |y| 1.0 + 0.4 * (std::f64::consts::PI * y).cos()).unwrap(),
        ]
    };
    let (coarse, fine) = (profiles(400), profiles(100_000));
    for spec in ["shift(1,-1)", "shift(1,-2)"] {
        let p = pot(spec);
        for (c, f) in coarse.iter().zip(&fine) {
            let pairs = [
                (lyapunov_l1(&p, c).unwrap(), lyapunov_l1(&p, f).unwrap()),
                (moment_mq(c, 4.0), moment_mq(f, 4.0)),
            ];
            for (a, b) in pairs {
                assert!(((a - b) / b).abs() <= 5e-3, "{spec}: {a} vs {b}");
            }
        }
    }
}

// Continuum value for a = (1+r)^-2: exact gradient term, midpoint bulk on the ramp.
fn pam_l1_continuum(mass: f64, q: f64, delta: f64) -> f64 {
    let dq = delta.powf(q);
    let s = 2.0 * (1.0 - mass * dq) / (delta * delta);
    let psi = |r: f64| r / (1.0 + r) - 0.5;
    let psi1 = |r: f64| ((1.0 + r) / 2.0).ln() + 0.5 - r / (1.0 + r);
    let bulk = |r: f64| psi(r) - mass * psi1(r);
    let f0 = s * delta + dq;
    let grad = 0.5 * s * ((1.0 + dq).powi(-3) - (1.0 + f0).powi(-3)) / 3.0;
    let n = 1_000_000;
    let h = delta / n as f64;
    let ramp: f64 = (0..n).map(|i| bulk(s * (delta - (i as f64 + 0.5) * h) + dq)).sum::<f64>() * h;
    grad + ramp + (mass - delta) * bulk(dq)
}

#[test]
fn pam_energy_matches_continuum() {
    let p = pot("shift(1,-2)");
    let exact = pam_l1_continuum(1.0, 4.0, 0.1);
    let prof = pam_profile(1.0, 4.0, 0.1, 400_000).unwrap();
    let l1 = lyapunov_l1(&p, &prof.field).unwrap();
    assert!(((l1 - exact) / exact).abs() <= 1e-3, "{l1} vs {exact}");
}
