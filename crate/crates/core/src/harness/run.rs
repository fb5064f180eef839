//! One configured experiment: classify, design, integrate, evaluate every bound.

use std::sync::Arc;

use serde::Serialize;

use crate::coefficient::{Coefficient, Potentials};
use crate::diagnostics::{
    check_corollary_bound, check_global_bounds, check_lemma4, check_moment_ode, lyapunov_l1, m0_of,
    moment_mq, sigma, DiagnosticsRecord, ANALYTIC_TOL,
};
use crate::error::{Error, Result};
use crate::harness::config::{Formulation, InitialSpec, RunConfig, SampledField};
use crate::regime::{
    classify, design_blowup, design_exponents, design_with_delta, lambda_value, mu_m, BlowupDesign,
    RegimeReport,
};
use crate::solver::{l1_gap, run_f, run_u, Outcome, Thresholds, Trajectory, UState};
use crate::transform::{f_to_u, pam_profile, read_samples_csv, u_to_f, FieldF, FieldU};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Violation {
    pub record: usize,
    pub t: f64,
    pub slack: f64,
}

/// A named suite of signed slacks; it passes when every slack is `≥ −tolerance`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub tolerance: f64,
    pub records: usize,
    pub min_slack: Option<f64>,
    pub first_violation: Option<Violation>,
}

impl Check {
    pub fn from_slacks(name: &str, tolerance: f64, slacks: impl IntoIterator<Item = (usize, f64, f64)>) -> Check {
        let mut records = 0;
        let mut min_slack: Option<f64> = None;
        let mut first_violation = None;
        for (record, t, slack) in slacks {
            records += 1;
            min_slack = Some(min_slack.map_or(slack, |m| m.min(slack)));
            if !(slack >= -tolerance) && first_violation.is_none() {
                first_violation = Some(Violation { record, t, slack });
            }
        }
        Check {
            name: name.to_string(),
            passed: first_violation.is_none(),
            tolerance,
            records,
            min_slack,
            first_violation,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FormRun {
    pub formulation: &'static str,
    pub verdict: Outcome,
    pub blowup_time: Option<f64>,
    pub final_time: f64,
    pub steps: usize,
    pub rejected_steps: usize,
    pub records: usize,
    pub message: Option<String>,
    pub thresholds: Thresholds,
}

impl FormRun {
    fn new<S>(formulation: &'static str, t: &Trajectory<S>) -> Self {
        FormRun {
            formulation,
            verdict: t.outcome,
            blowup_time: t.blowup_time,
            final_time: t.final_time,
            steps: t.steps,
            rejected_steps: t.rejected,
            records: t.snapshots.len(),
            message: t.message.clone(),
            thresholds: t.thresholds,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Crossval {
    pub t: f64,
    pub n: usize,
    /// `∫|u_from_f − u_direct| / M`
    pub l1_gap: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InitialEcho {
    pub min: f64,
    pub max: f64,
    /// `min u₀ = 1 / max f₀`
    pub m0: f64,
    pub l1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub verdict: Outcome,
    pub blowup_time: Option<f64>,
    pub final_time: f64,
    pub runs: Vec<FormRun>,
    pub regime: RegimeReport,
    pub design: Option<BlowupDesign>,
    pub notes: Vec<String>,
    pub initial: InitialEcho,
    pub checks: Vec<Check>,
    pub crossval: Option<Crossval>,
    pub config: RunConfig,
}

impl RunSummary {
    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub summary: RunSummary,
    pub series_f: Vec<DiagnosticsRecord>,
    pub series_u: Vec<DiagnosticsRecord>,
    pub final_f: Option<FieldF>,
    pub final_u: Option<FieldU>,
}

struct Prepared {
    pot: Potentials,
    regime: RegimeReport,
    design: Option<BlowupDesign>,
    /// Moment order for `m_q` when no design exists.
    q: Option<f64>,
    notes: Vec<String>,
}

fn prepare(cfg: &RunConfig) -> Result<Prepared> {
    let coef = Coefficient::from_spec(&cfg.coefficient)
        .map_err(|e| Error::config("coefficient.spec", e.to_string()))?;
    let pot = Potentials::new(Arc::new(coef))?;
    let regime = classify(&pot, &cfg.candidates)?;
    let mut notes = Vec::new();
    let mut design = None;
    let mut q = None;
    if let InitialSpec::Pam { q: user_q, delta } = cfg.initial {
        match (design_exponents(&regime), delta) {
            (Some((theta, alpha)), None) => {
                let d = design_blowup(&pot, cfg.mass, theta, alpha, cfg.n_y)?;
                if let Some(uq) = user_q {
                    if (uq - d.q).abs() > 1e-12 {
                        return Err(Error::config(
                            "initial.q",
                            format!("automatic delta uses the designed q = {}, got {uq}", d.q),
                        ));
                    }
                }
                design = Some(d);
            }
            (Some((theta, alpha)), Some(delta)) => {
                let d = design_with_delta(&pot, cfg.mass, theta, alpha, cfg.n_y, delta)?;
                match user_q {
                    Some(uq) if (uq - d.q).abs() > 1e-12 => {
                        notes.push(format!(
                            "q = {uq} differs from the designed q = {}: no certificate",
                            d.q
                        ));
                        q = Some(uq);
                    }
                    _ => {
                        if !d.certified {
                            notes.push(format!(
                                "delta = {delta} does not certify blowup: Lambda(m_q(0)) = {:e}",
                                d.lambda_mq0
                            ));
                        }
                        design = Some(d);
                    }
                }
            }
            (None, Some(_)) => {
                q = Some(user_q.ok_or_else(|| {
                    Error::config("initial.q", "q = \"auto\" needs the decay condition")
                })?);
                notes.push("decay condition unavailable: no blowup certificate".into());
            }
            (None, None) => {
                return Err(Error::config(
                    "initial.delta",
                    "delta = \"auto\" needs the decay condition; give delta and q explicitly",
                ))
            }
        }
    }
    Ok(Prepared {
        pot,
        regime,
        design,
        q,
        notes,
    })
}

enum Start {
    U(FieldU),
    F(FieldF),
}

fn initial_f(cfg: &RunConfig, prep: &Prepared) -> Result<FieldF> {
    Ok(match start(cfg, prep)? {
        Start::F(f) => f,
        Start::U(u) => u_to_f(&u, cfg.n_y)?,
    })
}

fn initial_u(cfg: &RunConfig, prep: &Prepared) -> Result<FieldU> {
    Ok(match start(cfg, prep)? {
        Start::U(u) => u,
        Start::F(f) => f_to_u(&f, cfg.n)?,
    })
}

fn start(cfg: &RunConfig, prep: &Prepared) -> Result<Start> {
    let m = cfg.mass;
    Ok(match &cfg.initial {
        InitialSpec::Constant => Start::U(FieldU::constant(cfg.n, m)?),
        InitialSpec::Cosine { amplitude } => Start::U(FieldU::cosine(cfg.n, m, *amplitude)?),
        InitialSpec::Pam { delta, .. } => {
            let (q, delta) = match (&prep.design, delta) {
                (Some(d), _) => (d.q, d.delta),
                (None, Some(delta)) => (prep.q.expect("explicit q"), *delta),
                (None, None) => unreachable!("auto delta always has a design"),
            };
            Start::F(pam_profile(m, q, delta, cfg.n_y)?.field)
        }
        InitialSpec::Samples { file, field } => {
            let reader = std::io::BufReader::new(
                std::fs::File::open(file)
                    .map_err(|e| Error::config("initial.file", format!("{}: {e}", file.display())))?,
            );
            let values = read_samples_csv(reader)?;
            match field {
                SampledField::U => Start::U(FieldU::new(values, m)?),
                SampledField::F => Start::F(FieldF::new(values, m)?),
            }
        }
    })
}

fn f_series(
    prep: &Prepared,
    traj: &Trajectory<FieldF>,
    checks: &mut Vec<Check>,
) -> Result<Vec<DiagnosticsRecord>> {
    let p = &prep.pot;
    let snaps = &traj.snapshots;
    let f0 = &snaps[0].state;
    let mass = f0.mass();
    let l1_0 = lyapunov_l1(p, f0)?;
    let m0 = m0_of(f0);
    let q = prep.design.as_ref().map(|d| d.q).or(prep.q);
    let mu = if p.tail_integrable() { Some(mu_m(p, mass)?) } else { None };
    let mut rows = Vec::with_capacity(snaps.len());
    let mut lemma3 = Vec::new();
    let mut corollary = Vec::new();
    let mut gex5 = Vec::new();
    let mut gex6 = Vec::new();
    let mut prandtl = Vec::new();
    let mut l1_norm = Vec::new();
    let mut barrier = Vec::new();
    let mut comparison = Vec::new();
    let mut drift = Vec::new();
    for (i, s) in snaps.iter().enumerate() {
        let f = &s.state;
        let l1 = lyapunov_l1(p, f)?;
        let mass_err = (f.integral() - 1.0).abs();
        drift.push((i, s.t, 1e-10 * s.t + 1e-13 - mass_err));
        let sig = sigma(mass, m0, s.t)?;
        comparison.push((i, s.t, sig - f.max()));
        let mut row = DiagnosticsRecord {
            t: s.t,
            dt: s.dt,
            f_min: Some(f.min()),
            f_max: Some(f.max()),
            u_max: Some(1.0 / f.min()),
            mass_err,
            l1: Some(l1),
            m_q: q.map(|q| moment_mq(f, q)),
            sigma: Some(sig),
            slack_comparison: Some(sig - f.max()),
            ..DiagnosticsRecord::default()
        };
        if let Some(mu) = mu {
            let c = check_corollary_bound(p, f, l1_0, l1, mu)?;
            row.slack_corollary = Some(c.corollary);
            row.slack_lemma3 = Some(c.lemma3);
            corollary.push((i, s.t, c.corollary));
            lemma3.push((i, s.t, c.lemma3));
        }
        let g = check_lemma4(p, f)?;
        row.slack_gex5 = Some(g.gex5);
        row.slack_gex6 = Some(g.gex6);
        gex5.push((i, s.t, g.gex5));
        gex6.push((i, s.t, g.gex6));
        if !p.tail_integrable() {
            let b = check_global_bounds(p, f, s.t, l1_0, m0)?;
            row.slack_prandtl = Some(b.prandtl);
            row.slack_l1_norm = Some(b.l1_norm);
            row.slack_barrier = Some(b.barrier_slack);
            row.h1_norm = Some(b.h1_norm);
            prandtl.push((i, s.t, b.prandtl));
            l1_norm.push((i, s.t, b.l1_norm));
            barrier.push((i, s.t, b.barrier_slack));
        }
        rows.push(row);
    }
    checks.push(Check::from_slacks("integral_drift", 0.0, drift));
    let lyap = rows.windows(2).enumerate().map(|(i, w)| {
        let (a, b) = (&w[0], &w[1]);
        (i + 1, b.t, a.l1.unwrap() + 1e-8 * (b.t - a.t) - b.l1.unwrap())
    });
    checks.push(Check::from_slacks("lyapunov", 0.0, lyap));
    if mu.is_some() {
        checks.push(Check::from_slacks("corollary", 1e-6, corollary));
        checks.push(Check::from_slacks("lemma3", 1e-6, lemma3));
    }
    checks.push(Check::from_slacks("gex5", ANALYTIC_TOL, gex5));
    checks.push(Check::from_slacks("gex6", ANALYTIC_TOL, gex6));
    checks.push(Check::from_slacks("comparison", ANALYTIC_TOL, comparison));
    if !p.tail_integrable() {
        checks.push(Check::from_slacks("prandtl", ANALYTIC_TOL, prandtl));
        checks.push(Check::from_slacks("l1_norm", ANALYTIC_TOL, l1_norm));
        checks.push(Check::from_slacks("barrier", 0.0, barrier));
    }
    if let Some(d) = &prep.design {
        let q = d.q;
        let series: Vec<(f64, f64)> = snaps.iter().map(|s| (s.t, moment_mq(&s.state, q))).collect();
        let mc = check_moment_ode(&series, Some(d))?;
        for (i, s) in mc.slacks.iter().enumerate() {
            rows[i + 1].slack_moment_ode = Some(*s);
        }
        checks.push(Check::from_slacks(
            "moment_ode",
            mc.tolerance,
            mc.slacks.iter().enumerate().map(|(i, s)| (i + 1, series[i + 1].0, *s)),
        ));
        checks.push(Check::from_slacks(
            "moment_decreasing",
            0.0,
            series.windows(2).enumerate().map(|(i, w)| {
                let gap = w[0].1 - w[1].1;
                (i + 1, w[1].0, if gap > 0.0 { gap } else { -f64::MIN_POSITIVE.max(-gap) })
            }),
        ));
        checks.push(Check::from_slacks(
            "lambda_chain",
            0.0,
            series
                .iter()
                .enumerate()
                .map(|(i, &(t, m))| (i, t, (-mc.lambda0).min(mc.lambda0 - lambda_value(d, m)))),
        ));
    }
    Ok(rows)
}

fn u_series(traj: &Trajectory<UState>, checks: &mut Vec<Check>) -> Vec<DiagnosticsRecord> {
    let rows: Vec<DiagnosticsRecord> = traj
        .snapshots
        .iter()
        .map(|s| {
            let u = &s.state.u;
            DiagnosticsRecord {
                t: s.t,
                dt: s.dt,
                f_min: Some(1.0 / u.max()),
                f_max: Some(1.0 / u.min()),
                u_max: Some(u.max()),
                mass_err: ((u.discrete_mass() - u.mass()) / u.mass()).abs(),
                ..DiagnosticsRecord::default()
            }
        })
        .collect();
    checks.push(Check::from_slacks(
        "u_mass",
        0.0,
        rows.iter().enumerate().map(|(i, r)| (i, r.t, 1e-12 - r.mass_err)),
    ));
    rows
}

/// Run one configured experiment in memory.
pub fn execute(cfg: &RunConfig) -> Result<RunOutput> {
    let prep = prepare(cfg)?;
    let mut checks = Vec::new();
    let mut runs = Vec::new();
    let mut notes = prep.notes.clone();
    notes.extend(prep.regime.notes.iter().cloned());
    let (mut series_f, mut series_u) = (Vec::new(), Vec::new());
    let (mut final_f, mut final_u) = (None, None);
    let mut initial = None;
    if cfg.formulation.has_f() {
        let f0 = initial_f(cfg, &prep)?;
        initial = Some(InitialEcho {
            min: f0.min(),
            max: f0.max(),
            m0: m0_of(&f0),
            l1: Some(lyapunov_l1(&prep.pot, &f0)?),
        });
        let traj = run_f(&prep.pot, &f0, &cfg.params)?;
        series_f = f_series(&prep, &traj, &mut checks)?;
        runs.push(FormRun::new("f", &traj));
        final_f = traj.snapshots.last().map(|s| s.state.clone());
    }
    if cfg.formulation.has_u() {
        let u0 = initial_u(cfg, &prep)?;
        if initial.is_none() {
            initial = Some(InitialEcho {
                min: u0.min(),
                max: u0.max(),
                m0: u0.min(),
                l1: None,
            });
        }
        let traj = run_u(prep.pot.coefficient(), &u0, &cfg.params)?;
        series_u = u_series(&traj, &mut checks);
        runs.push(FormRun::new("u", &traj));
        final_u = traj.snapshots.last().map(|s| s.state.u.clone());
    }
    let mut crossval = None;
    if cfg.formulation == Formulation::Both {
        let (rf, ru) = (&runs[0], &runs[1]);
        if rf.verdict == Outcome::GlobalSoFar && ru.verdict == Outcome::GlobalSoFar {
            let from_f = f_to_u(final_f.as_ref().expect("f run"), cfg.n)?;
            let gap = l1_gap(&from_f, final_u.as_ref().expect("u run"))?;
            crossval = Some(Crossval {
                t: rf.final_time,
                n: cfg.n,
                l1_gap: gap,
            });
            checks.push(Check::from_slacks("crossval", 0.0, [(0, rf.final_time, 0.02 - gap)]));
        } else {
            notes.push("cross-check skipped: a formulation did not reach t_max".into());
        }
    }
    let verdict = if runs.iter().any(|r| r.verdict == Outcome::Inconclusive) {
        Outcome::Inconclusive
    } else {
        runs[0].verdict
    };
    let summary = RunSummary {
        verdict,
        blowup_time: runs[0].blowup_time,
        final_time: runs[0].final_time,
        runs,
        regime: prep.regime,
        design: prep.design,
        notes,
        initial: initial.expect("at least one formulation"),
        checks,
        crossval,
        config: cfg.clone(),
    };
    Ok(RunOutput {
        summary,
        series_f,
        series_u,
        final_f,
        final_u,
    })
}
