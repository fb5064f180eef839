//! Functionals and bound checks evaluated on discrete profiles.
//!
//! Conventions shared by every quantity here: derivatives are face differences
//! `(h_{j+1} − h_j)/Δy` on the `N−1` interior faces, integrals are midpoint sums.
//! Every check returns a signed slack; negative means the bound is violated.

use serde::Serialize;

use crate::coefficient::Potentials;
use crate::error::{Error, Result};
use crate::regime::{lambda_value, BlowupDesign};
use crate::transform::FieldF;

/// Analytic inequalities are allowed this much rounding.
pub const ANALYTIC_TOL: f64 = 1e-8;

fn grad_norm2(values: &[f64], h: f64) -> f64 {
    values
        .windows(2)
        .map(|w| (w[1] - w[0]) * (w[1] - w[0]))
        .sum::<f64>()
        / h
}

fn map_values(values: &[f64], g: impl Fn(f64) -> Result<f64>) -> Result<Vec<f64>> {
    values.iter().map(|&v| g(v)).collect()
}

/// `L₁ = ½‖∂_yΨ(f)‖² + ∫(Ψ(f) − MΨ₁(f))`.
pub fn lyapunov_l1(p: &Potentials, f: &FieldF) -> Result<f64> {
    let m = f.mass();
    let h = f.h();
    let phi = map_values(f.values(), |v| p.diffusion_potential(v))?;
    let mut bulk = 0.0;
    for &v in f.values() {
        bulk += p.psi(v)? - m * p.psi1(v)?;
    }
    Ok(0.5 * grad_norm2(&phi, h) + h * bulk)
}

/// `E₁(h) = ½‖∂_y h‖² + ∫ min(h, 0)` for samples on `[0, length]`.
pub fn energy_e1(values: &[f64], length: f64) -> f64 {
    let h = length / values.len() as f64;
    0.5 * grad_norm2(values, h) + h * values.iter().map(|v| v.min(0.0)).sum::<f64>()
}

/// `m_q = ∫ y^q f dy`.
pub fn moment_mq(f: &FieldF, q: f64) -> f64 {
    let h = f.h();
    f.values()
        .iter()
        .enumerate()
        .map(|(j, v)| ((j as f64 + 0.5) * h).powf(q) * v)
        .sum::<f64>()
        * h
}

/// Spatially constant supersolution `Σ(t) = 1/M + e^{Mt}(1/m₀ − 1/M)`.
pub fn sigma(mass: f64, m0: f64, t: f64) -> Result<f64> {
    if !(m0 > 0.0 && m0 <= mass) {
        return Err(Error::Range {
            what: "sigma m0",
            value: m0,
            lo: 0.0,
            hi: mass,
        });
    }
    Ok(1.0 / mass + (mass * t).exp() * (1.0 / m0 - 1.0 / mass))
}

/// The `m₀` of a profile: `min u₀ = 1 / max f₀`, capped at `M`.
pub fn m0_of(f: &FieldF) -> f64 {
    (1.0 / f.max()).min(f.mass())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CorollarySlack {
    /// `√(32M max{L₁(f₀),0} + μ_M) − max Ψ̃(f)`
    pub corollary: f64,
    /// `32M L₁(f) + μ_M − ‖Ψ̃(f)‖²_∞`
    pub lemma3: f64,
    pub max_psi_tilde: f64,
}

/// Sup-norm bound on `Ψ̃(f)` in the integrable-tail regime.
pub fn check_corollary_bound(
    p: &Potentials,
    f: &FieldF,
    l1_f0: f64,
    l1_f: f64,
    mu_m: f64,
) -> Result<CorollarySlack> {
    if !p.tail_integrable() {
        return Err(Error::Hypothesis(
            "sup bound on the shifted potential needs an integrable tail".into(),
        ));
    }
    let m = f.mass();
    let mut max_pt = 0.0f64;
    for &v in f.values() {
        max_pt = max_pt.max(p.psi_tilde(v)?);
    }
    Ok(CorollarySlack {
        corollary: (32.0 * m * l1_f0.max(0.0) + mu_m).sqrt() - max_pt,
        lemma3: 32.0 * m * l1_f + mu_m - max_pt * max_pt,
        max_psi_tilde: max_pt,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Lemma4Slack {
    /// `E₁(h) − (¼‖h'‖² − M³ − M|Ψ(1/M)|)`
    pub gex5: f64,
    /// `M^{3/2}‖h'‖ + M|Ψ(1/M)| − ‖h‖₁`
    pub gex6: f64,
}

/// Energy and `L¹` lower/upper bounds for `h = Ψ(f)` with `∫f = 1`.
pub fn check_lemma4(p: &Potentials, f: &FieldF) -> Result<Lemma4Slack> {
    let m = f.mass();
    let dy = f.h();
    let h = map_values(f.values(), |v| p.psi(v))?;
    let g2 = grad_norm2(&h, dy);
    let shift = m * p.psi(1.0 / m)?.abs();
    let e1 = energy_e1(&h, m);
    let l1: f64 = h.iter().map(|v| v.abs()).sum::<f64>() * dy;
    Ok(Lemma4Slack {
        gex5: e1 - (0.25 * g2 - m.powi(3) - shift),
        gex6: m.powf(1.5) * g2.sqrt() + shift - l1,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentCheck {
    pub lambda0: f64,
    /// Slack per interval `[t_i, t_{i+1}]`.
    pub slacks: Vec<f64>,
    pub tolerance: f64,
    pub min_slack: f64,
    pub first_slack_violation: Option<usize>,
    pub strictly_decreasing: bool,
    pub first_nondecrease: Option<usize>,
    /// `Λ(m_q(t)) ≤ Λ(m_q(0)) < 0` at every record.
    pub chain_holds: bool,
}

impl MomentCheck {
    pub fn passed(&self) -> bool {
        self.first_slack_violation.is_none() && self.strictly_decreasing && self.chain_holds
    }
}

/// Moment inequality `dm_q/dt ≤ Λ(m_q)` on consecutive records `(t, m_q)`.
pub fn check_moment_ode(series: &[(f64, f64)], design: Option<&BlowupDesign>) -> Result<MomentCheck> {
    let d = design.ok_or_else(|| Error::Hypothesis("moment check needs a blowup design".into()))?;
    if series.is_empty() {
        return Err(Error::Hypothesis("empty series".into()));
    }
    let lambda0 = lambda_value(d, series[0].1);
    let tolerance = 1e-3 * lambda0.abs();
    let mut slacks = Vec::with_capacity(series.len().saturating_sub(1));
    let mut first_slack_violation = None;
    let mut first_nondecrease = None;
    for (i, w) in series.windows(2).enumerate() {
        let (t0, m0) = w[0];
        let (t1, m1) = w[1];
        let s = lambda_value(d, m0) - (m1 - m0) / (t1 - t0);
        if s < -tolerance && first_slack_violation.is_none() {
            first_slack_violation = Some(i);
        }
        if !(m1 < m0) && first_nondecrease.is_none() {
            first_nondecrease = Some(i);
        }
        slacks.push(s);
    }
    let chain_holds = lambda0 < 0.0 && series.iter().all(|&(_, m)| lambda_value(d, m) <= lambda0);
    Ok(MomentCheck {
        lambda0,
        min_slack: slacks.iter().copied().fold(f64::INFINITY, f64::min),
        slacks,
        tolerance,
        first_slack_violation,
        strictly_decreasing: first_nondecrease.is_none(),
        first_nondecrease,
        chain_holds,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GlobalBounds {
    pub sigma: f64,
    /// `Σ(t) − max f`
    pub comparison: f64,
    /// `R(t) − ¼‖∂_yΨ(f)‖²` with `R = L₁(0) + M³ + M|Ψ(1/M)| + M²Ψ₁(Σ)`
    pub prandtl: f64,
    /// `2M^{3/2}√R + M|Ψ(1/M)| − ‖Ψ(f)‖₁`
    pub l1_norm: f64,
    /// `(1/M)·(2M^{3/2}√R + M|Ψ(1/M)|) + M^{1/2}·2√R`
    pub c7: f64,
    /// `Ψ⁻¹(−C₇)`, zero when `−C₇` lies below the range of `Ψ`.
    pub barrier: f64,
    pub min_f: f64,
    /// `min f − Ψ⁻¹(−C₇)`
    pub barrier_slack: f64,
    pub h1_norm: f64,
}

/// Explicit bound chain of the divergent-tail regime at one record.
pub fn check_global_bounds(
    p: &Potentials,
    f: &FieldF,
    t: f64,
    l1_0: f64,
    m0: f64,
) -> Result<GlobalBounds> {
    if p.tail_integrable() {
        return Err(Error::Hypothesis(
            "global bound chain applies to a divergent tail".into(),
        ));
    }
    let m = f.mass();
    let dy = f.h();
    let sig = sigma(m, m0, t)?;
    let h = map_values(f.values(), |v| p.psi(v))?;
    let g2 = grad_norm2(&h, dy);
    let shift = m * p.psi(1.0 / m)?.abs();
    let r = l1_0 + m.powi(3) + shift + m * m * p.psi1(sig)?;
    let sqrt_r = r.max(0.0).sqrt();
    let rhs_l1 = 2.0 * m.powf(1.5) * sqrt_r + shift;
    let l1: f64 = h.iter().map(|v| v.abs()).sum::<f64>() * dy;
    let c7 = rhs_l1 / m + m.sqrt() * 2.0 * sqrt_r;
    let barrier = if -c7 <= p.limits().psi0 {
        0.0
    } else {
        p.psi_inverse(-c7)?
    };
    let min_f = f.min();
    let h2: f64 = h.iter().map(|v| v * v).sum::<f64>() * dy;
    Ok(GlobalBounds {
        sigma: sig,
        comparison: sig - f.max(),
        prandtl: r - 0.25 * g2,
        l1_norm: rhs_l1 - l1,
        c7,
        barrier,
        min_f,
        barrier_slack: min_f - barrier,
        h1_norm: (h2 + g2).sqrt(),
    })
}

/// One row of the diagnostics series; absent quantities are `None`.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub dt: f64,
    pub f_min: Option<f64>,
    pub f_max: Option<f64>,
    pub u_max: Option<f64>,
    pub mass_err: f64,
    pub l1: Option<f64>,
    pub m_q: Option<f64>,
    pub sigma: Option<f64>,
    pub slack_corollary: Option<f64>,
    pub slack_lemma3: Option<f64>,
    pub slack_gex5: Option<f64>,
    pub slack_gex6: Option<f64>,
    pub slack_moment_ode: Option<f64>,
    pub slack_prandtl: Option<f64>,
    pub slack_l1_norm: Option<f64>,
    pub slack_comparison: Option<f64>,
    pub slack_barrier: Option<f64>,
    pub h1_norm: Option<f64>,
}
