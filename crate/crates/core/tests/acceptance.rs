//! Acceptance criteria, one line each. Exits non-zero if any criterion fails.

use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use qsp::coefficient::{Coefficient, Potentials};
use qsp::diagnostics::check_lemma4;
use qsp::expr::parse_coefficient;
use qsp::harness::config::{from_table, set_key};
use qsp::harness::presets::preset;
use qsp::harness::run::{execute, RunOutput};
use qsp::harness::validate::random_profiles;
use qsp::regime::{
    build_majorant, classify, compute_gamma, default_candidates, lambda_value, verify_majorant,
    Clause,
};
use qsp::solver::Outcome;
use qsp::transform::{f_to_u, u_to_f, FieldU};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Verdict = Result<String, String>;

fn pot(spec: &str) -> Potentials {
    Potentials::new(Arc::new(Coefficient::from_spec(spec).unwrap())).unwrap()
}

fn run_preset(name: &str, grid: Option<i64>) -> RunOutput {
    let mut t = preset(name).unwrap();
    if let Some(n) = grid {
        set_key(&mut t, "grid.n", toml::Value::Integer(n)).unwrap();
        set_key(&mut t, "grid.n_y", toml::Value::Integer(n)).unwrap();
    }
    execute(&from_table(t, None).unwrap()).unwrap()
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(limit: Duration, start: Instant) -> Result<(), String> {
    let e = start.elapsed();
    ensure(e < limit, || format!("took {e:.2?}, limit {limit:?}"))
}

fn regime_dichotomy() -> Verdict {
    let one_second = Duration::from_secs(1);
    for spec in ["(1+r)^-1", "1", "(1+r)/(2+r)", "shift(1,-1)", "shift(2,-0.5)", "const(3)", "singular(1,1,1)"] {
        let start = Instant::now();
        let r = classify(&pot(spec), &default_candidates()).map_err(|e| e.to_string())?;
        within(one_second, start)?;
        ensure(r.clause == Clause::Global, || format!("{spec}: {}", r.clause.as_str()))?;
    }
    let start = Instant::now();
    let p = pot("(1+r)^-2");
    let r = classify(&p, &default_candidates()).map_err(|e| e.to_string())?;
    within(one_second, start)?;
    ensure(r.clause == Clause::BlowupViaGamma, || format!("(1+r)^-2: {}", r.clause.as_str()))?;
    ensure((r.gamma - 0.5).abs() <= 1e-6, || format!("gamma = {}", r.gamma))?;
    let start = Instant::now();
    let p = pot("(1+r)*r^-2.5");
    let r = classify(&p, &[(0.5, 1.5)]).map_err(|e| e.to_string())?;
    within(one_second, start)?;
    ensure(r.clause == Clause::BlowupViaDecr, || format!("(1+r)r^-5/2: {}", r.clause.as_str()))?;
    let d = r.decr.ok_or("no decay constants")?;
    ensure(
        (d.gamma_theta - 2.0).abs() <= 1e-6 && (d.c_inf - 2.0).abs() <= 1e-6,
        || format!("gamma_theta = {}, C_inf = {}", d.gamma_theta, d.c_inf),
    )?;
    Ok(format!("gamma = {}, gamma_theta = {}, C_inf = {}", 0.5, d.gamma_theta, d.c_inf))
}

fn blowup_reproduction() -> Verdict {
    let start = Instant::now();
    let out = run_preset("blowup-demo", None);
    within(Duration::from_secs(60), start)?;
    let s = &out.summary;
    let d = s.design.as_ref().ok_or("no design")?;
    ensure(d.n_y == 400, || format!("n_y = {}", d.n_y))?;
    ensure(s.verdict == Outcome::Blowup, || format!("verdict {}", s.verdict.as_str()))?;
    let tb = s.blowup_time.ok_or("no blowup time")?;
    ensure(tb.is_finite() && tb < 50.0, || format!("blowup time {tb}"))?;
    let last = out.series_f.last().unwrap();
    ensure(last.f_min.unwrap() < 1e-6, || format!("last f_min {:e}", last.f_min.unwrap()))?;
    let m: Vec<(f64, f64)> = out.series_f.iter().map(|r| (r.t, r.m_q.unwrap())).collect();
    for (i, w) in m.windows(2).enumerate() {
        ensure(w[1].1 < w[0].1, || format!("m_q not decreasing on interval {i}"))?;
    }
    let lambda0 = lambda_value(d, m[0].1);
    ensure(lambda0 < 0.0 && d.lambda_mq0 < 0.0, || format!("Lambda(m_q(0)) = {lambda0}"))?;
    let tol = 1e-3 * lambda0.abs();
    let mut min_slack = f64::INFINITY;
    for (i, w) in m.windows(2).enumerate() {
        let slack = lambda_value(d, w[0].1) - (w[1].1 - w[0].1) / (w[1].0 - w[0].0);
        ensure(slack >= -tol, || format!("moment slack {slack:e} < -{tol:e} on interval {i}"))?;
        min_slack = min_slack.min(slack);
    }
    Ok(format!(
        "touch-down at t = {tb:.6e}, {} intervals, Lambda(m_q(0)) = {lambda0:.4e}, min moment slack {min_slack:.3e}",
        m.len() - 1
    ))
}

fn global_reproduction() -> Verdict {
    let start = Instant::now();
    let out = run_preset("global-demo", None);
    within(Duration::from_secs(60), start)?;
    let s = &out.summary;
    ensure(s.verdict == Outcome::GlobalSoFar, || format!("verdict {}", s.verdict.as_str()))?;
    ensure(s.final_time == 5.0, || format!("final time {}", s.final_time))?;
    let mut worst = (f64::INFINITY, f64::INFINITY, f64::INFINITY);
    for r in &out.series_f {
        let (cmp, bar, pr) = (
            r.sigma.unwrap() + 1e-8 - r.f_max.unwrap(),
            r.slack_barrier.unwrap(),
            r.slack_prandtl.unwrap(),
        );
        ensure(cmp >= 0.0, || format!("f > sigma + 1e-8 at t = {}", r.t))?;
        ensure(bar >= 0.0, || format!("barrier violated at t = {}", r.t))?;
        ensure(pr >= -1e-8, || format!("prandtl slack {pr:e} at t = {}", r.t))?;
        worst = (worst.0.min(cmp), worst.1.min(bar), worst.2.min(pr));
    }
    Ok(format!(
        "{} records to t = 5; min slacks: comparison {:.3e}, barrier {:.3e}, prandtl {:.3e}",
        out.series_f.len(),
        worst.0,
        worst.1,
        worst.2
    ))
}

fn lyapunov_monotone() -> Verdict {
    let mut detail = Vec::new();
    for name in ["blowup-demo", "global-demo"] {
        let out = run_preset(name, None);
        let mut min_slack = f64::INFINITY;
        for w in out.series_f.windows(2) {
            let slack = w[0].l1.unwrap() + 1e-8 * (w[1].t - w[0].t) - w[1].l1.unwrap();
            ensure(slack >= 0.0, || format!("{name}: L1 increases at t = {}", w[1].t))?;
            min_slack = min_slack.min(slack);
        }
        detail.push(format!("{name} {} intervals, min slack {min_slack:.3e}", out.series_f.len() - 1));
    }
    Ok(detail.join("; "))
}

fn corollary_suite() -> Verdict {
    // a = (1+r)^-2: Ψ'(r) = (1+r)^-2 with Ψ(1) = 0, so Ψ(0) = -1/2 and Ψ̃(2) = 2/3
    let (psi0, pt2, m): (f64, f64, f64) = (-0.5, 2.0 / 3.0, 1.0);
    let mu = 1.0 + 128.0 * m.powi(4) - 32.0 * m * m * psi0 + 64.0 * m * m * pt2 + 8.0 * pt2 * pt2
        + psi0 * psi0
        - 32.0 * m * psi0;
    ensure((mu - 207.472_222_222_222_2).abs() < 1e-9, || format!("oracle mu_M = {mu}"))?;
    let out = run_preset("blowup-demo", None);
    let d = out.summary.design.as_ref().ok_or("no design")?;
    ensure((d.mu_m - mu).abs() <= 1e-9 * mu, || format!("mu_M = {} vs {mu}", d.mu_m))?;
    let mut min_slack = f64::INFINITY;
    for r in &out.series_f {
        let s = r.slack_corollary.ok_or("missing corollary slack")?;
        ensure(s >= -1e-6, || format!("corollary slack {s:e} at t = {}", r.t))?;
        min_slack = min_slack.min(s);
    }
    Ok(format!("mu_M = {:.10}, {} records, min slack {min_slack:.4e}", d.mu_m, out.series_f.len()))
}

fn lemma4_suite() -> Verdict {
    let mut detail = Vec::new();
    for (seed, spec) in [(11u64, "shift(1,-1)"), (12, "shift(1,-2)")] {
        let p = pot(spec);
        let mut worst = f64::INFINITY;
        let profiles = random_profiles(seed, 50, 1.0, 400).map_err(|e| e.to_string())?;
        for f in &profiles {
            ensure((f.integral() - 1.0).abs() < 1e-14 && f.min() > 0.0, || "bad profile".into())?;
            let s = check_lemma4(&p, f).map_err(|e| e.to_string())?;
            ensure(s.gex5 >= -1e-8 && s.gex6 >= -1e-8, || format!("{spec}: slacks {:e}, {:e}", s.gex5, s.gex6))?;
            worst = worst.min(s.gex5).min(s.gex6);
        }
        detail.push(format!("{spec} min slack {worst:.3e}"));
    }
    Ok(detail.join("; "))
}

fn majorant_suite() -> Verdict {
    let p = pot("shift(1,-2)");
    let gamma = compute_gamma(&p).map_err(|e| e.to_string())?.value;
    let b = build_majorant(&p, gamma, 40).map_err(|e| e.to_string())?;
    for (i, bi) in b.slopes.iter().enumerate() {
        let exact = 1.0 / (1.0 + 2f64.powi(i as i32));
        ensure((bi - exact).abs() <= 1e-10, || format!("b_{i} = {bi} vs {exact}"))?;
    }
    let b3 = b.value(3.0);
    ensure((b3 - 11.0 / 6.0).abs() <= 1e-10, || format!("B(3) = {b3}"))?;
    let rep = verify_majorant(&p, &b, 200).map_err(|e| e.to_string())?;
    ensure(rep.failures.is_empty(), || format!("B < -rA at {} samples", rep.failures.len()))?;
    ensure(rep.slopes_decreasing, || "slopes not strictly decreasing".into())?;
    let top = 2f64.powi(40);
    let ratio = b.value(top) / top;
    let bound = 2e-12 + b.slopes[39];
    ensure(ratio <= bound, || format!("B(2^40)/2^40 = {ratio:.4e} exceeds 2e-12 + b_39 = {bound:.4e}"))?;
    Ok(format!("B(3) = {b3}, min slack {:.3e}, B(2^40)/2^40 = {ratio:.3e}", rep.min_slack))
}

fn cross_formulation() -> Verdict {
    let gap = |n| -> Result<f64, String> {
        let out = run_preset("crossval", Some(n));
        let c = out.summary.crossval.ok_or("cross-check skipped")?;
        ensure((c.t - 0.1).abs() < 1e-12, || format!("compared at t = {}", c.t))?;
        Ok(c.l1_gap)
    };
    let (g400, g800) = (gap(400)?, gap(800)?);
    ensure(g400 <= 0.02, || format!("gap at N = 400 is {g400:.3e}"))?;
    ensure(g800 <= 0.6 * g400, || format!("gap ratio {:.3}", g800 / g400))?;
    Ok(format!("gap {g400:.3e} at N = 400, {g800:.3e} at N = 800, ratio {:.3}", g800 / g400))
}

fn round_trip_error(n: usize, amplitude: f64) -> Result<f64, String> {
    let u = FieldU::cosine(n, 1.0, amplitude).map_err(|e| e.to_string())?;
    let back = f_to_u(&u_to_f(&u, 4 * n).map_err(|e| e.to_string())?, n).map_err(|e| e.to_string())?;
    Ok(u.values().iter().zip(back.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
}

fn transform_and_parser() -> Verdict {
    let start = Instant::now();
    let mut ratios = Vec::new();
    for amplitude in [0.3, 0.5, 0.8] {
        let (e1, e2) = (round_trip_error(100, amplitude)?, round_trip_error(200, amplitude)?);
        let ratio = e1 / e2;
        ensure((3.0..=5.0).contains(&ratio), || format!("amplitude {amplitude}: ratio {ratio:.3}"))?;
        ratios.push(ratio);
    }
    let golden = [
        ("(1+r)^-2", 1.0, 0.25),
        ("2^3^2", 0.5, 512.0),
        ("-2^2", 1.0, -4.0),
        ("2^-2", 1.0, 0.25),
        ("2*3+4", 1.0, 10.0),
        ("2+3*4", 1.0, 14.0),
        ("-r*2", 3.0, -6.0),
        ("(1+r)/r^2.5", 1.0, 2.0),
        ("pow(r, 3) - sqrt(r) + exp(0)", 4.0, 63.0),
    ];
    for (text, r, want) in golden {
        let got = parse_coefficient(text).and_then(|t| t.evaluate(r)).map_err(|e| e.to_string())?;
        ensure(got == want, || format!("{text} at {r} = {got}, expected {want}"))?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..500 {
        let (a, b, c): (f64, f64, f64) = (rng.gen_range(0.01..100.0), rng.gen_range(0.01..100.0), rng.gen_range(0.01..100.0));
        let sum = parse_coefficient(&format!("{a:?}+{b:?}*{c:?}")).and_then(|t| t.evaluate(1.0));
        ensure(sum == Ok(a + b * c), || format!("a+b*c for {a}, {b}, {c}"))?;
        let pow = parse_coefficient(&format!("{a:?}*{b:?}^{c:?}")).and_then(|t| t.evaluate(1.0));
        ensure(pow == Ok(a * b.powf(c)), || format!("a*b^c for {a}, {b}, {c}"))?;
        let tree = parse_coefficient(&format!("({a:?}+r)^-{c:?}/r-{b:?}*r")).map_err(|e| e.to_string())?;
        let again = parse_coefficient(&tree.to_string()).map_err(|e| e.to_string())?;
        let r = rng.gen_range(1e-3..1e3);
        ensure(tree.evaluate(r) == again.evaluate(r), || format!("printing changes `{tree}`"))?;
    }
    within(Duration::from_secs(10), start)?;
    Ok(format!(
        "round-trip ratios {}; golden and precedence checks pass",
        ratios.iter().map(|r| format!("{r:.3}")).collect::<Vec<_>>().join(", ")
    ))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Verdict); 9] = [
        ("regime dichotomy", regime_dichotomy),
        ("blowup reproduction", blowup_reproduction),
        ("global reproduction", global_reproduction),
        ("Lyapunov monotonicity", lyapunov_monotone),
        ("corollary bound", corollary_suite),
        ("gradient estimates on random profiles", lemma4_suite),
        ("concave majorant", majorant_suite),
        ("cross-formulation consistency", cross_formulation),
        ("transform and parser properties", transform_and_parser),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let verdict = check();
        let secs = start.elapsed().as_secs_f64();
        match verdict {
            Ok(detail) => println!("criterion {} PASS  {name} ({secs:.2} s): {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {} FAIL  {name} ({secs:.2} s): {why}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
