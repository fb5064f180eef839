//! Invariant suite over the builtin coefficients.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::coefficient::{Coefficient, Potentials};
use crate::diagnostics::{check_lemma4, lyapunov_l1, ANALYTIC_TOL};
use crate::error::Result;
use crate::expr::parse_coefficient;
use crate::regime::{build_majorant, compute_gamma, verify_majorant};
use crate::solver::{run_f, Outcome, RunParams};
use crate::transform::{f_to_u, u_to_f, FieldF, FieldU};

pub const BUILTINS: [&str; 4] = ["shift(1,-1)", "shift(1,-2)", "const(1)", "singular(1,2.5,1)"];

/// `f = (1 + Σ c_k cos(kπy/M)) / M` with `Σ|c_k| ≤ 0.9`, rescaled to discrete integral 1.
pub fn random_profile(rng: &mut impl Rng, mass: f64, n_y: usize, modes: usize) -> Result<FieldF> {
    let raw: Vec<f64> = (0..modes).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let total: f64 = raw.iter().map(|c| c.abs()).sum::<f64>().max(1e-300);
    let scale = rng.gen_range(0.0..0.9) / total;
    let coeffs: Vec<f64> = raw.iter().map(|c| c * scale).collect();
    FieldF::from_fn(n_y, mass, |y| {
        let s: f64 = coeffs
            .iter()
            .enumerate()
            .map(|(k, c)| c * ((k + 1) as f64 * std::f64::consts::PI * y / mass).cos())
            .sum();
        (1.0 + s) / mass
    })
}

/// Seeded profiles, reproducible across runs.
pub fn random_profiles(seed: u64, count: usize, mass: f64, n_y: usize) -> Result<Vec<FieldF>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let modes = rng.gen_range(1..=8);
            random_profile(&mut rng, mass, n_y, modes)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Outcomes {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn record(out: &mut Vec<Outcomes>, name: String, r: Result<(bool, String)>) {
    let (passed, detail) = r.unwrap_or_else(|e| (false, e.to_string()));
    out.push(Outcomes { name, passed, detail });
}

fn parser_golden() -> Result<(bool, String)> {
    let cases = [
        ("(1+r)^-2", 3.0, 1.0 / 16.0),
        ("2*r^2+1", 2.0, 9.0),
        ("-r^2+10", 3.0, 1.0),
        ("2^3^2", 1.0, 512.0),
        ("(1+r)/r^2.5", 1.0, 2.0),
        ("exp(-r)+1", 0.0, 2.0),
    ];
    let mut worst = 0.0f64;
    for (text, r, want) in cases {
        let got = parse_coefficient(text)?.evaluate(r)?;
        worst = worst.max(((got - want) / want).abs());
    }
    Ok((worst < 1e-14, format!("max relative error {worst:e}")))
}

fn potentials(p: &Potentials) -> Result<(bool, String)> {
    let mut worst = 0.0f64;
    for r in [0.05, 0.3, 1.0, 2.0, 7.5] {
        let h = 1e-5 * r;
        let fd = (p.psi(r + h)? - p.psi(r - h)?) / (2.0 * h);
        let exact = p.coefficient().eval_a(1.0 / r)? / (r * r);
        worst = worst.max(((fd - exact) / exact).abs());
        if p.diffusion_potential(2.0 * r)? <= p.diffusion_potential(r)? {
            return Ok((false, format!("potential not increasing at {r}")));
        }
    }
    Ok((worst < 1e-6, format!("max relative error of psi' {worst:e}")))
}

fn round_trip() -> Result<(bool, String)> {
    let u = FieldU::cosine(400, 1.0, 0.5)?;
    let back = f_to_u(&u_to_f(&u, 400)?, 400)?;
    let err = u
        .values()
        .iter()
        .zip(back.values())
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
        * u.h();
    Ok((err < 1e-4, format!("L1 round-trip error {err:e}")))
}

fn majorant(p: &Potentials) -> Result<(bool, String)> {
    let g = compute_gamma(p)?;
    let b = build_majorant(p, g.value, 40)?;
    let rep = verify_majorant(p, &b, 200)?;
    Ok((
        rep.failures.is_empty() && rep.slopes_decreasing,
        format!("min slack {:e}, gamma {}", rep.min_slack, g.value),
    ))
}

fn lemma4(p: &Potentials, seed: u64) -> Result<(bool, String)> {
    let mut worst = f64::INFINITY;
    for f in random_profiles(seed, 50, 1.0, 200)? {
        let s = check_lemma4(p, &f)?;
        worst = worst.min(s.gex5).min(s.gex6);
    }
    Ok((worst >= -ANALYTIC_TOL, format!("min slack {worst:e} over 50 profiles")))
}

fn stationary(p: &Potentials) -> Result<(bool, String)> {
    let f0 = FieldF::constant(100, 1.0)?;
    let params = RunParams {
        t_max: 1.0,
        output_interval: 0.25,
        ..RunParams::default()
    };
    let traj = run_f(p, &f0, &params)?;
    let l0 = lyapunov_l1(p, &f0)?;
    let mut drift = 0.0f64;
    for s in &traj.snapshots {
        drift = drift.max((lyapunov_l1(p, &s.state)? - l0).abs());
    }
    Ok((
        traj.outcome == Outcome::GlobalSoFar && drift <= 1e-10,
        format!("L1 drift {drift:e}"),
    ))
}

/// Every invariant on every builtin; never stops at the first failure.
pub fn run_validation() -> Vec<Outcomes> {
    let mut out = Vec::new();
    record(&mut out, "parser/golden".into(), parser_golden());
    record(&mut out, "transform/round_trip".into(), round_trip());
    for (i, spec) in BUILTINS.iter().enumerate() {
        let pot = Coefficient::from_spec(spec).and_then(|c| Potentials::new(Arc::new(c)));
        let p = match pot {
            Ok(p) => p,
            Err(e) => {
                record(&mut out, format!("{spec}/construct"), Err(e));
                continue;
            }
        };
        record(&mut out, format!("{spec}/potentials"), potentials(&p));
        record(&mut out, format!("{spec}/lemma4"), lemma4(&p, 1000 + i as u64));
        record(&mut out, format!("{spec}/stationary"), stationary(&p));
        if p.tail_integrable() && compute_gamma(&p).is_ok_and(|g| g.value.is_finite()) {
            record(&mut out, format!("{spec}/majorant"), majorant(&p));
        }
    }
    out
}
