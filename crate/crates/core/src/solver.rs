//! Time integration of the f-equation `f_t = Ψ(f)_yy − 1 + Mf` (Neumann) and of
//! the original system `u_t = (a(u)u_x − u v_x)_x`, `v_xx = M − u`.
//!
//! Both steps are backward Euler with Newton on a tridiagonal system; the drift in
//! the u-form is explicit and upwinded. A step that fails is retried with half the
//! step size until the step size underflows.

use serde::Serialize;

use crate::coefficient::{Coefficient, Potentials};
use crate::error::{Error, Result};
use crate::transform::{FieldF, FieldU};

/// Mean-zero potential `v` on the u-grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldV {
    values: Vec<f64>,
    /// `(v_{i+1} − v_i)/h` on the `N−1` interior faces.
    grad: Vec<f64>,
}

impl FieldV {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn face_gradient(&self) -> &[f64] {
        &self.grad
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}

/// Solve `v'' = M − u` with `v' = 0` at both ends and zero mean.
///
/// The three-point system with reflected ghosts is lower bidiagonal in the face
/// gradients, so elimination reduces to a running sum; `u` is first projected onto
/// the exact mass.
pub fn solve_poisson(u: &FieldU) -> Result<FieldV> {
    let m = u.mass();
    let h = u.h();
    let mass = u.discrete_mass();
    if ((mass - m) / m).abs() > 1e-10 {
        return Err(Error::Field(format!(
            "Poisson data incompatible: mass {mass} differs from {m}"
        )));
    }
    let k = m / mass;
    let n = u.len();
    let mut grad = Vec::with_capacity(n - 1);
    let mut w = 0.0;
    for &ui in &u.values()[..n - 1] {
        w += h * (m - k * ui);
        grad.push(w);
    }
    let mut values = Vec::with_capacity(n);
    values.push(0.0);
    for (i, g) in grad.iter().enumerate() {
        values.push(values[i] + h * g);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    values.iter_mut().for_each(|v| *v -= mean);
    Ok(FieldV { values, grad })
}

/// Thomas algorithm; `lower[0]` and `upper[n−1]` are ignored.
fn thomas(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Option<Vec<f64>> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut beta = diag[0];
    if beta == 0.0 || !beta.is_finite() {
        return None;
    }
    c[0] = upper[0] / beta;
    d[0] = rhs[0] / beta;
    for i in 1..n {
        beta = diag[i] - lower[i] * c[i - 1];
        if beta == 0.0 || !beta.is_finite() {
            return None;
        }
        c[i] = if i + 1 < n { upper[i] / beta } else { 0.0 };
        d[i] = (rhs[i] - lower[i] * d[i - 1]) / beta;
    }
    for i in (0..n - 1).rev() {
        d[i] -= c[i] * d[i + 1];
    }
    d.iter().all(|v| v.is_finite()).then_some(d)
}

const NEWTON_MAX: usize = 40;
const RESIDUAL_TOL: f64 = 1e-13;
const STAGNATION: f64 = 1e-15;

/// Outcome of one nonlinear solve attempt.
enum Attempt<T> {
    Done(T),
    Retry(String),
}

/// Differences `Φ_{j+1} − Φ_j` on interior faces, zero flux at both ends.
fn lap(phi: &[f64], out: &mut [f64], scale: &mut [f64]) {
    let n = phi.len();
    for j in 0..n {
        let right = if j + 1 < n { phi[j + 1] - phi[j] } else { 0.0 };
        let left = if j > 0 { phi[j] - phi[j - 1] } else { 0.0 };
        out[j] = right - left;
        let r = if j + 1 < n { phi[j + 1].abs() } else { 0.0 };
        let l = if j > 0 { phi[j - 1].abs() } else { 0.0 };
        scale[j] = r + 2.0 * phi[j].abs() + l;
    }
}

fn try_step_f(p: &Potentials, f_old: &FieldF, dt: f64) -> Result<Attempt<FieldF>> {
    let m = f_old.mass();
    let h = f_old.h();
    let old = f_old.values();
    let n = old.len();
    let k = dt / (h * h);
    let mut f = old.to_vec();
    let mut phi = vec![0.0; n];
    let mut dphi = vec![0.0; n];
    let mut l = vec![0.0; n];
    let mut sc = vec![0.0; n];
    let mut res = vec![0.0; n];
    let (mut lo, mut di, mut up) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    for _ in 0..NEWTON_MAX {
        for j in 0..n {
            phi[j] = p.diffusion_potential(f[j])?;
            dphi[j] = p.psi_prime(f[j])?;
        }
        lap(&phi, &mut l, &mut sc);
        let mut converged = true;
        for j in 0..n {
            res[j] = f[j] - old[j] - k * l[j] + dt - dt * m * f[j];
            let scale = f[j] + old[j] + k * sc[j] + dt * (1.0 + m * f[j]);
            if res[j].abs() > RESIDUAL_TOL * scale {
                converged = false;
            }
        }
        if converged {
            return Ok(Attempt::Done(flux_update_f(old, &f, &l, k, dt, m)));
        }
        for j in 0..n {
            let nb = if j == 0 || j + 1 == n { 1.0 } else { 2.0 };
            di[j] = 1.0 + k * nb * dphi[j] - dt * m;
            lo[j] = if j > 0 { -k * dphi[j - 1] } else { 0.0 };
            up[j] = if j + 1 < n { -k * dphi[j + 1] } else { 0.0 };
            res[j] = -res[j];
        }
        let Some(delta) = thomas(&lo, &di, &up, &res) else {
            return Ok(Attempt::Retry("singular Newton matrix".into()));
        };
        let mut lambda = 1.0;
        while (0..n).any(|j| f[j] + lambda * delta[j] <= 0.0) {
            lambda *= 0.5;
            if lambda < 1e-6 {
                return Ok(Attempt::Retry("positivity lost in Newton update".into()));
            }
        }
        let mut rel = 0.0f64;
        for j in 0..n {
            let step = lambda * delta[j];
            f[j] += step;
            rel = rel.max(step.abs() / f[j]);
        }
        if rel <= STAGNATION {
            for j in 0..n {
                phi[j] = p.diffusion_potential(f[j])?;
            }
            lap(&phi, &mut l, &mut sc);
            return Ok(Attempt::Done(flux_update_f(old, &f, &l, k, dt, m)));
        }
    }
    Ok(Attempt::Retry("Newton did not converge".into()))
}

/// Conservative reconstruction from the converged iterate: the face differences
/// telescope, so the integral balance holds to rounding.
fn flux_update_f(old: &[f64], f: &[f64], l: &[f64], k: f64, dt: f64, m: f64) -> FieldF {
    let upd: Vec<f64> = (0..old.len())
        .map(|j| old[j] + k * l[j] - dt + dt * m * f[j])
        .collect();
    let values = if upd.iter().all(|v| *v > 0.0) { upd } else { f.to_vec() };
    FieldF::from_raw(values, m)
}

/// One backward-Euler step of the f-equation, halving `dt` on failure.
/// Returns the new field and the step size actually used.
pub fn step_f(p: &Potentials, f: &FieldF, dt: f64, dt_underflow: f64, t: f64) -> Result<(FieldF, f64)> {
    let mut dt = dt;
    let mut reason = format!("requested step {dt:e} below {dt_underflow:e}");
    while dt >= dt_underflow {
        match try_step_f(p, f, dt)? {
            Attempt::Done(next) => return Ok((next, dt)),
            Attempt::Retry(why) => reason = why,
        }
        dt *= 0.5;
    }
    Err(Error::Solver {
        t,
        reason: format!("step size underflow ({reason})"),
    })
}

fn harmonic(x: f64, y: f64) -> f64 {
    2.0 * x * y / (x + y)
}

/// `a` and a central-difference `a'` at `u`.
fn a_and_slope(c: &Coefficient, u: f64) -> Result<(f64, f64)> {
    let a = c.eval_a(u)?;
    let e = 1e-6 * u;
    Ok((a, (c.eval_a(u + e)? - c.eval_a(u - e)?) / (2.0 * e)))
}

fn try_step_u(c: &Coefficient, u_old: &FieldU, v: &FieldV, dt: f64) -> Result<Attempt<FieldU>> {
    let h = u_old.h();
    let old = u_old.values();
    let n = old.len();
    let w = v.face_gradient();
    let k = dt / h;
    // explicit upwind drift: A_{i+1/2} = w · u_upwind
    let mut rhs = old.to_vec();
    for (i, &wi) in w.iter().enumerate() {
        if (k * wi).abs() > 0.5 {
            return Ok(Attempt::Retry("drift CFL exceeded".into()));
        }
        let flux = wi * if wi > 0.0 { old[i] } else { old[i + 1] };
        rhs[i] -= k * flux;
        rhs[i + 1] += k * flux;
    }
    if rhs.iter().any(|r| *r <= 0.0) {
        return Ok(Attempt::Retry("negative drift update".into()));
    }
    let mut u = rhs.clone();
    let mut a = vec![0.0; n];
    let mut da = vec![0.0; n];
    let mut d = vec![0.0; n - 1];
    let mut d_left = vec![0.0; n - 1];
    let mut d_right = vec![0.0; n - 1];
    let mut res = vec![0.0; n];
    let (mut lo, mut di, mut up) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    for _ in 0..NEWTON_MAX {
        for i in 0..n {
            (a[i], da[i]) = a_and_slope(c, u[i])?;
        }
        for i in 0..n - 1 {
            let (x, y) = (a[i], a[i + 1]);
            let hm = harmonic(x, y);
            let jump = u[i + 1] - u[i];
            let s2 = (x + y) * (x + y);
            d[i] = hm * jump / h;
            d_left[i] = (2.0 * y * y / s2 * da[i] * jump - hm) / h;
            d_right[i] = (2.0 * x * x / s2 * da[i + 1] * jump + hm) / h;
        }
        let mut converged = true;
        for i in 0..n {
            let right = if i + 1 < n { d[i] } else { 0.0 };
            let left = if i > 0 { d[i - 1] } else { 0.0 };
            res[i] = u[i] - rhs[i] - k * (right - left);
            let scale = u[i] + rhs[i] + k * (right.abs() + left.abs());
            if res[i].abs() > RESIDUAL_TOL * scale {
                converged = false;
            }
        }
        if converged {
            return Ok(Attempt::Done(flux_update_u(u_old.mass(), &rhs, &u, &d, k)));
        }
        for i in 0..n {
            let (mut diag, mut l, mut r) = (1.0, 0.0, 0.0);
            if i + 1 < n {
                diag -= k * d_left[i];
                r = -k * d_right[i];
            }
            if i > 0 {
                diag += k * d_right[i - 1];
                l = k * d_left[i - 1];
            }
            di[i] = diag;
            lo[i] = l;
            up[i] = r;
            res[i] = -res[i];
        }
        let Some(delta) = thomas(&lo, &di, &up, &res) else {
            return Ok(Attempt::Retry("singular Newton matrix".into()));
        };
        let mut lambda = 1.0;
        while (0..n).any(|i| u[i] + lambda * delta[i] <= 0.0) {
            lambda *= 0.5;
            if lambda < 1e-6 {
                return Ok(Attempt::Retry("positivity lost in Newton update".into()));
            }
        }
        let mut rel = 0.0f64;
        for i in 0..n {
            let step = lambda * delta[i];
            u[i] += step;
            rel = rel.max(step.abs() / u[i]);
        }
        if rel <= STAGNATION {
            for i in 0..n {
                a[i] = c.eval_a(u[i])?;
            }
            for i in 0..n - 1 {
                d[i] = harmonic(a[i], a[i + 1]) * (u[i + 1] - u[i]) / h;
            }
            return Ok(Attempt::Done(flux_update_u(u_old.mass(), &rhs, &u, &d, k)));
        }
    }
    Ok(Attempt::Retry("Newton did not converge".into()))
}

fn flux_update_u(mass: f64, rhs: &[f64], u: &[f64], d: &[f64], k: f64) -> FieldU {
    let n = u.len();
    let upd: Vec<f64> = (0..n)
        .map(|i| {
            let right = if i + 1 < n { d[i] } else { 0.0 };
            let left = if i > 0 { d[i - 1] } else { 0.0 };
            rhs[i] + k * (right - left)
        })
        .collect();
    let values = if upd.iter().all(|v| *v > 0.0) { upd } else { u.to_vec() };
    FieldU::from_raw(values, mass)
}

/// u-form state: density and its potential.
#[derive(Debug, Clone, PartialEq)]
pub struct UState {
    pub u: FieldU,
    pub v: FieldV,
}

impl UState {
    pub fn new(u: FieldU) -> Result<Self> {
        let v = solve_poisson(&u)?;
        Ok(UState { u, v })
    }
}

/// One step of the original system, halving `dt` on failure.
pub fn step_u(c: &Coefficient, s: &UState, dt: f64, dt_underflow: f64, t: f64) -> Result<(UState, f64)> {
    let mut dt = dt;
    let mut reason = format!("requested step {dt:e} below {dt_underflow:e}");
    while dt >= dt_underflow {
        match try_step_u(c, &s.u, &s.v, dt)? {
            Attempt::Done(u) => return Ok((UState::new(u)?, dt)),
            Attempt::Retry(why) => reason = why,
        }
        dt *= 0.5;
    }
    Err(Error::Solver {
        t,
        reason: format!("step size underflow ({reason})"),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RunParams {
    pub t_max: f64,
    pub dt_init: f64,
    pub dt_max: f64,
    pub output_interval: f64,
    /// Also record every this many accepted steps; 0 disables.
    pub every_steps: usize,
    /// Touch-down threshold before scaling by the initial minimum of `f`.
    pub touchdown: f64,
    /// Target relative change of the monitored extremum per step.
    pub rel_change: f64,
    pub max_steps: usize,
}

impl Default for RunParams {
    fn default() -> Self {
        RunParams {
            t_max: 5.0,
            dt_init: 1e-4,
            dt_max: 1e-2,
            output_interval: 0.05,
            every_steps: 0,
            touchdown: 1e-6,
            rel_change: 0.05,
            max_steps: 2_000_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Outcome {
    Blowup,
    GlobalSoFar,
    Inconclusive,
}

impl Outcome {
    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Blowup => "blowup",
            Outcome::GlobalSoFar => "global-so-far",
            Outcome::Inconclusive => "inconclusive",
        }
    }
}

/// Effective thresholds after scaling by the initial data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Thresholds {
    pub touchdown: f64,
    pub dt_floor: f64,
    pub dt_underflow: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot<S> {
    pub t: f64,
    pub dt: f64,
    pub step: usize,
    pub state: S,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<S> {
    pub snapshots: Vec<Snapshot<S>>,
    pub outcome: Outcome,
    pub blowup_time: Option<f64>,
    pub final_time: f64,
    pub steps: usize,
    pub rejected: usize,
    pub message: Option<String>,
    pub thresholds: Thresholds,
}

/// Shared time loop. `monitor` is the extremum whose relative change drives the
/// step size; `singular` decides the blowup verdict on an accepted state.
fn integrate<S: Clone>(
    s0: S,
    params: &RunParams,
    th: Thresholds,
    dt_start: f64,
    mut step: impl FnMut(&S, f64, f64) -> Result<(S, f64)>,
    monitor: impl Fn(&S) -> f64,
    singular: impl Fn(&S) -> bool,
) -> Trajectory<S> {
    let mut snaps = vec![Snapshot {
        t: 0.0,
        dt: 0.0,
        step: 0,
        state: s0.clone(),
    }];
    let mut traj = Trajectory {
        snapshots: Vec::new(),
        outcome: Outcome::GlobalSoFar,
        blowup_time: None,
        final_time: 0.0,
        steps: 0,
        rejected: 0,
        message: None,
        thresholds: th,
    };
    if singular(&s0) {
        traj.outcome = Outcome::Blowup;
        traj.blowup_time = Some(0.0);
        traj.snapshots = snaps;
        return traj;
    }
    let mut s = s0;
    let mut t = 0.0;
    let mut dt_ctrl = dt_start.clamp(th.dt_floor, params.dt_max);
    let interval = if params.output_interval > 0.0 {
        params.output_interval
    } else {
        params.t_max
    };
    let mut k_out = 1u64;
    let mut last_dt = 0.0;
    let mut recorded_last = true;
    loop {
        let next_out = (k_out as f64 * interval).min(params.t_max);
        if t >= params.t_max || params.t_max - t <= 1e-14 * params.t_max {
            break;
        }
        if traj.steps >= params.max_steps {
            traj.outcome = Outcome::Inconclusive;
            traj.message = Some(format!("step budget {} exhausted", params.max_steps));
            break;
        }
        let mut dt = dt_ctrl;
        let landing = t + dt * (1.0 + 1e-9) >= next_out;
        if landing {
            dt = next_out - t;
        }
        let (next, used) = match step(&s, dt, t) {
            Ok(r) => r,
            Err(Error::Solver { reason, .. }) => {
                traj.outcome = Outcome::Blowup;
                traj.blowup_time = Some(t);
                traj.message = Some(format!("near-singularity: {reason}"));
                break;
            }
            Err(e) => {
                traj.outcome = Outcome::Inconclusive;
                traj.message = Some(e.to_string());
                break;
            }
        };
        let before = monitor(&s);
        let rel = ((monitor(&next) - before) / before).abs();
        if rel > 2.0 * params.rel_change && used > th.dt_floor {
            traj.rejected += 1;
            dt_ctrl = (0.5 * used).max(th.dt_floor);
            continue;
        }
        let base = if landing && used == dt { dt_ctrl } else { used };
        dt_ctrl = if rel > params.rel_change {
            0.5 * base
        } else if rel < 0.5 * params.rel_change {
            2.0 * base
        } else {
            base
        }
        .clamp(th.dt_floor, params.dt_max);
        t = if landing && used == dt { next_out } else { t + used };
        s = next;
        traj.steps += 1;
        last_dt = used;
        let hit_output = landing && used == dt;
        if hit_output {
            k_out += 1;
        }
        let every = params.every_steps > 0 && traj.steps % params.every_steps == 0;
        recorded_last = hit_output || every;
        if recorded_last {
            snaps.push(Snapshot {
                t,
                dt: used,
                step: traj.steps,
                state: s.clone(),
            });
        }
        if singular(&s) {
            traj.outcome = Outcome::Blowup;
            traj.blowup_time = Some(t);
            break;
        }
    }
    if !recorded_last {
        snaps.push(Snapshot {
            t,
            dt: last_dt,
            step: traj.steps,
            state: s,
        });
    }
    traj.final_time = t;
    traj.snapshots = snaps;
    traj
}

fn thresholds(params: &RunParams, scale: f64) -> Thresholds {
    let scale = scale.min(1.0);
    Thresholds {
        touchdown: params.touchdown * scale,
        dt_floor: 1e-12 * scale,
        dt_underflow: 1e-14 * scale,
    }
}

fn check_params(params: &RunParams, mass: f64) -> Result<RunParams> {
    for (key, v) in [
        ("t_max", params.t_max),
        ("dt_init", params.dt_init),
        ("dt_max", params.dt_max),
        ("touchdown", params.touchdown),
        ("rel_change", params.rel_change),
    ] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::Config {
                key: key.into(),
                msg: format!("must be positive, got {v}"),
            });
        }
    }
    let mut p = *params;
    // keeps 1 − dt·M bounded away from zero in the f-step
    p.dt_max = p.dt_max.min(0.5 / mass);
    Ok(p)
}

/// Integrate the f-equation until touch-down or `t_max`.
///
/// Thresholds scale with `min(1, min f₀)` so that data starting below the nominal
/// touch-down level are still followed to a genuine approach to zero.
pub fn run_f(p: &Potentials, f0: &FieldF, params: &RunParams) -> Result<Trajectory<FieldF>> {
    let params = check_params(params, f0.mass())?;
    let th = thresholds(&params, f0.min());
    let dt_start = params.dt_init.min(1e-2 * f0.min());
    Ok(integrate(
        f0.clone(),
        &params,
        th,
        dt_start,
        |f, dt, t| step_f(p, f, dt, th.dt_underflow, t),
        |f| f.min(),
        |f| f.min() < th.touchdown,
    ))
}

/// Integrate the original system until `max u > 1/ε` or `t_max`.
pub fn run_u(c: &Coefficient, u0: &FieldU, params: &RunParams) -> Result<Trajectory<UState>> {
    let params = check_params(params, u0.mass())?;
    let th = thresholds(&params, 1.0 / u0.max());
    let s0 = UState::new(u0.clone())?;
    Ok(integrate(
        s0,
        &params,
        th,
        params.dt_init,
        |s, dt, t| step_u(c, s, dt, th.dt_underflow, t),
        |s| s.u.max(),
        |s| s.u.max() > 1.0 / th.touchdown,
    ))
}

/// Relative `L¹` distance `∫|u₁ − u₂| / M` on a common grid.
pub fn l1_gap(a: &FieldU, b: &FieldU) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Field("fields live on different grids".into()));
    }
    let d: f64 = a
        .values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| (x - y).abs())
        .sum();
    Ok(d * a.h() / a.mass())
}
