//! Diffusion coefficients `a(r)` and the potentials derived from them:
//!
//! * `Ψ(r)  = ∫_{1/r}^1 a(s) ds`, so `Ψ'(r) = a(1/r)/r²` and `Ψ(1) = 0`;
//! * `Ψ₁(r) = ∫_{1/r}^1 a(s)/s ds`, so `Ψ₁'(r) = r Ψ'(r)` and `Ψ₁(1) = 0`;
//! * `Ψ̃(r) = Ψ(r) − Ψ(0) = ∫_{1/r}^∞ a(s) ds` when `a ∈ L¹(1,∞)`;
//! * the tail antiderivative `A(r) = −∫_r^∞ a(s) ds`.
//!
//! Builtin families carry closed forms; parsed expressions go through
//! adaptive quadrature.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::expr::{parse_coefficient, ExprError, ExpressionTree};
use crate::quad::{self, Tolerance};

/// Builtin coefficient families.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Builtin {
    /// `c (1+r)^β`
    Shift { c: f64, beta: f64 },
    /// `c r^{-p} (1+r)^β`
    Singular { c: f64, p: f64, beta: f64 },
    /// `c`
    Constant { c: f64 },
}

impl Builtin {
    fn eval(&self, r: f64) -> f64 {
        match *self {
            Builtin::Shift { c, beta } => c * (1.0 + r).powf(beta),
            Builtin::Singular { c, p, beta } => c * r.powf(-p) * (1.0 + r).powf(beta),
            Builtin::Constant { c } => c,
        }
    }
}

impl fmt::Display for Builtin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Builtin::Shift { c, beta } => write!(f, "shift({c}, {beta})"),
            Builtin::Singular { c, p, beta } => write!(f, "singular({c}, {p}, {beta})"),
            Builtin::Constant { c } => write!(f, "const({c})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Source {
    Builtin(Builtin),
    Expr(ExpressionTree),
}

/// Closed-form machinery behind a builtin.
#[derive(Debug, Clone, PartialEq)]
enum Closed {
    Shift { c: f64, beta: f64 },
    /// `Σ c_k s^{e_k}`
    Powers(Vec<(f64, f64)>),
    None,
}

/// Where a verdict came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Certainty {
    ClosedForm,
    Numeric,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Verdict {
    pub holds: bool,
    pub certainty: Certainty,
}

/// `A(r)`: finite and `≤ 0`, or the tail of `a` is not integrable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Tail {
    Finite(f64),
    Divergent,
}

impl Tail {
    pub fn finite(self) -> Option<f64> {
        match self {
            Tail::Finite(v) => Some(v),
            Tail::Divergent => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Coefficient {
    source: Source,
    closed: Closed,
    integrable_inf: Verdict,
    integrable_zero: Verdict,
    /// `a(s)/s ∈ L¹(1,∞)`, i.e. `Ψ₁(0) > −∞`.
    weighted_integrable_inf: Verdict,
}

const TOL: Tolerance = Tolerance {
    abs: 1e-10,
    rel: 1e-10,
    max_intervals: 4000,
};

fn exact(holds: bool) -> Verdict {
    Verdict {
        holds,
        certainty: Certainty::ClosedForm,
    }
}

fn binomial(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// `∫_{1/r}^1 s^e ds`
fn power_term_psi(e: f64, r: f64) -> f64 {
    let k = e + 1.0;
    if k == 0.0 {
        r.ln()
    } else {
        -(-k * r.ln()).exp_m1() / k
    }
}

impl Coefficient {
    pub fn builtin(b: Builtin) -> Result<Self> {
        let closed = match b {
            Builtin::Shift { c, beta } => Closed::Shift { c, beta },
            Builtin::Constant { c } => Closed::Powers(vec![(c, 0.0)]),
            Builtin::Singular { c, p, beta }
                if beta >= 0.0 && beta.fract() == 0.0 && beta <= 32.0 =>
            {
                let n = beta as u32;
                Closed::Powers(
                    (0..=n)
                        .map(|k| (c * binomial(n, k), k as f64 - p))
                        .collect(),
                )
            }
            Builtin::Singular { .. } => Closed::None,
        };
        let (c, inf, zero, winf) = match b {
            Builtin::Shift { c, beta } => (c, beta < -1.0, true, beta < 0.0),
            Builtin::Singular { c, p, beta } => (c, beta - p < -1.0, p < 1.0, beta - p < 0.0),
            Builtin::Constant { c } => (c, false, true, true),
        };
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::Hypothesis(format!(
                "builtin coefficient needs a positive prefactor, got {c}"
            )));
        }
        Ok(Coefficient {
            source: Source::Builtin(b),
            closed,
            integrable_inf: exact(inf),
            integrable_zero: exact(zero),
            weighted_integrable_inf: exact(winf),
        })
    }

    pub fn shift(c: f64, beta: f64) -> Self {
        Self::builtin(Builtin::Shift { c, beta }).expect("valid builtin")
    }

    pub fn singular(c: f64, p: f64, beta: f64) -> Self {
        Self::builtin(Builtin::Singular { c, p, beta }).expect("valid builtin")
    }

    pub fn constant(c: f64) -> Self {
        Self::builtin(Builtin::Constant { c }).expect("valid builtin")
    }

    /// Wrap a parsed expression. Integrability is decided numerically.
    pub fn from_expr(tree: ExpressionTree) -> Result<Self> {
        let mut coef = Coefficient {
            source: Source::Expr(tree),
            closed: Closed::None,
            integrable_inf: exact(false),
            integrable_zero: exact(false),
            weighted_integrable_inf: exact(false),
        };
        coef.integrable_inf = coef.dyadic_verdict(false, false)?;
        coef.integrable_zero = coef.dyadic_verdict(true, false)?;
        coef.weighted_integrable_inf = coef.dyadic_verdict(false, true)?;
        Ok(coef)
    }

    /// Accepts `shift(c, beta)`, `singular(c, p, beta)`, `const(c)` or an expression in `r`.
    pub fn from_spec(text: &str) -> Result<Self> {
        let t = text.trim();
        let builtin_args = |name: &str| -> Option<Vec<f64>> {
            let inner = t.strip_prefix(name)?.trim_start().strip_prefix('(')?;
            let inner = inner.strip_suffix(')')?;
            inner.split(',').map(|s| s.trim().parse::<f64>().ok()).collect()
        };
        let bad = |n: usize| {
            Error::Expr(ExprError::Arity {
                name: t.split('(').next().unwrap_or("").to_string(),
                expected: n,
                got: 0,
            })
        };
        if let Some(args) = builtin_args("shift") {
            let [c, beta] = args[..] else { return Err(bad(2)) };
            return Self::builtin(Builtin::Shift { c, beta });
        }
        if let Some(args) = builtin_args("singular") {
            let [c, p, beta] = args[..] else { return Err(bad(3)) };
            return Self::builtin(Builtin::Singular { c, p, beta });
        }
        if let Some(args) = builtin_args("const") {
            let [c] = args[..] else { return Err(bad(1)) };
            return Self::builtin(Builtin::Constant { c });
        }
        Self::from_expr(parse_coefficient(t)?)
    }

    pub fn source(&self) -> &Source {
        &self.source
    }

    pub fn describe(&self) -> String {
        match &self.source {
            Source::Builtin(b) => b.to_string(),
            Source::Expr(t) => t.source().to_string(),
        }
    }

    pub fn has_closed_tail(&self) -> bool {
        match &self.closed {
            Closed::Shift { .. } | Closed::Powers(_) => true,
            Closed::None => false,
        }
    }

    /// `a(r)` for `r > 0`.
    pub fn eval_a(&self, r: f64) -> Result<f64> {
        if !(r > 0.0) {
            return Err(ExprError::Domain {
                r,
                msg: "coefficient evaluated at non-positive r".into(),
            }
            .into());
        }
        let v = match &self.source {
            Source::Builtin(b) => b.eval(r),
            Source::Expr(t) => t.evaluate(r)?,
        };
        if !v.is_finite() {
            return Err(ExprError::Overflow { r }.into());
        }
        if v <= 0.0 {
            return Err(ExprError::Domain {
                r,
                msg: format!("coefficient is not positive: a = {v:e}"),
            }
            .into());
        }
        Ok(v)
    }

    pub fn integrable_at_infinity(&self) -> Verdict {
        self.integrable_inf
    }

    pub fn integrable_at_zero(&self) -> Verdict {
        self.integrable_zero
    }

    /// Dyadic-block heuristic: integrable when the block integrals over
    /// `[2^k, 2^{k+1}]` (or `[2^{-k-1}, 2^{-k}]`) decay geometrically.
    fn dyadic_verdict(&self, near_zero: bool, weighted: bool) -> Result<Verdict> {
        const BLOCKS: usize = 40;
        let mut blocks = Vec::with_capacity(BLOCKS);
        for k in 0..BLOCKS {
            let (lo, hi) = if near_zero {
                (0.5f64.powi(k as i32 + 1), 0.5f64.powi(k as i32))
            } else {
                (2f64.powi(k as i32), 2f64.powi(k as i32 + 1))
            };
            let e = quad::integrate_log(
                |s| {
                    let a = self.eval_a(s)?;
                    Ok(if weighted { a / s } else { a })
                },
                lo,
                hi,
                Tolerance {
                    abs: 1e-300,
                    rel: 1e-10,
                    max_intervals: 200,
                },
            )?;
            blocks.push(e.value);
        }
        let geometric = blocks[BLOCKS - 11..].windows(2).all(|w| {
            if w[0] < 1e-280 {
                true
            } else {
                w[1] / w[0] <= 0.99
            }
        });
        Ok(Verdict {
            holds: geometric,
            certainty: Certainty::Numeric,
        })
    }

    /// `A(r) = −∫_r^∞ a(s) ds`.
    pub fn tail_integral(&self, r: f64) -> Result<Tail> {
        if !(r > 0.0) {
            return Err(Error::Range {
                what: "tail_integral",
                value: r,
                lo: 0.0,
                hi: f64::INFINITY,
            });
        }
        if !self.integrable_inf.holds {
            return Ok(Tail::Divergent);
        }
        let v = match &self.closed {
            Closed::Shift { c, beta } => c * (1.0 + r).powf(beta + 1.0) / (beta + 1.0),
            Closed::Powers(terms) => terms
                .iter()
                .map(|&(c, e)| c * r.powf(e + 1.0) / (e + 1.0))
                .sum(),
            Closed::None => -quad::integrate_tail(|s| self.eval_a(s), r, TOL)?.value,
        };
        Ok(Tail::Finite(v))
    }

    /// `Ψ(r) = ∫_{1/r}^1 a(s) ds`.
    pub fn psi(&self, r: f64) -> Result<f64> {
        check_positive("psi", r)?;
        match &self.closed {
            Closed::Shift { c, beta } => {
                let k = beta + 1.0;
                if k == 0.0 {
                    Ok(c * (2.0 * r / (1.0 + r)).ln())
                } else {
                    // (1 + 1/r)^k = ((1+r)/r)^k
                    Ok(c * (2f64.powf(k) - ((1.0 + r) / r).powf(k)) / k)
                }
            }
            Closed::Powers(terms) => Ok(terms.iter().map(|&(c, e)| c * power_term_psi(e, r)).sum()),
            Closed::None => Ok(quad::integrate_log(|s| self.eval_a(s), 1.0 / r, 1.0, TOL)?.value),
        }
    }

    /// `Ψ₁(r) = ∫_{1/r}^1 a(s)/s ds`.
    pub fn psi1(&self, r: f64) -> Result<f64> {
        check_positive("psi1", r)?;
        match &self.closed {
            Closed::Shift { c, beta } if *beta == 0.0 => Ok(c * r.ln()),
            Closed::Shift { c, beta } if *beta == -1.0 => Ok(c * (0.5 * (1.0 + r)).ln()),
            Closed::Shift { c, beta } if *beta == -2.0 => {
                Ok(c * ((0.5 * (1.0 + r)).ln() + 0.5 - r / (1.0 + r)))
            }
            Closed::Powers(terms) => Ok(terms
                .iter()
                .map(|&(c, e)| c * power_term_psi(e - 1.0, r))
                .sum()),
            _ => Ok(quad::integrate_log(|s| Ok(self.eval_a(s)? / s), 1.0 / r, 1.0, TOL)?.value),
        }
    }

    /// `Ψ̃(r) = ∫_{1/r}^∞ a(s) ds`; requires `a ∈ L¹(1,∞)`.
    pub fn psi_tilde(&self, r: f64) -> Result<f64> {
        check_positive("psi_tilde", r)?;
        if !self.integrable_inf.holds {
            return Err(Error::Hypothesis(
                "psi_tilde needs a coefficient integrable at infinity".into(),
            ));
        }
        match &self.closed {
            Closed::Shift { c, beta } => {
                let k = beta + 1.0;
                Ok(c * (r / (1.0 + r)).powf(-k) / -k)
            }
            Closed::Powers(terms) => Ok(terms
                .iter()
                .map(|&(c, e)| c * r.powf(-(e + 1.0)) / -(e + 1.0))
                .sum()),
            Closed::None => Ok(quad::integrate_tail(|s| self.eval_a(s), 1.0 / r, TOL)?.value),
        }
    }

    /// Limits of `Ψ`, `Ψ₁` at 0 and of `Ψ` at ∞ together with the integrability flags.
    pub fn compute_limits(&self) -> Result<Limits> {
        let psi0 = match self.tail_integral(1.0)? {
            Tail::Finite(v) => v,
            Tail::Divergent => f64::NEG_INFINITY,
        };
        let psi1_0 = if !self.weighted_integrable_inf.holds {
            f64::NEG_INFINITY
        } else {
            match &self.closed {
                Closed::Shift { c, beta } if *beta == -1.0 => c * 0.5f64.ln(),
                Closed::Shift { c, beta } if *beta == -2.0 => c * (0.5f64.ln() + 0.5),
                Closed::Powers(terms) => terms.iter().map(|&(c, e)| c / e).sum(),
                _ => -quad::integrate_tail(|s| Ok(self.eval_a(s)? / s), 1.0, TOL)?.value,
            }
        };
        let psi_inf = if !self.integrable_zero.holds {
            f64::INFINITY
        } else {
            match &self.closed {
                Closed::Shift { c, beta } => {
                    let k = beta + 1.0;
                    if k == 0.0 {
                        c * 2f64.ln()
                    } else {
                        c * (2f64.powf(k) - 1.0) / k
                    }
                }
                Closed::Powers(terms) => terms.iter().map(|&(c, e)| c / (e + 1.0)).sum(),
                Closed::None => {
                    quad::integrate_tail(|t| Ok(self.eval_a(1.0 / t)? / (t * t)), 1.0, TOL)?.value
                }
            }
        };
        Ok(Limits {
            psi0,
            psi1_0,
            psi_inf,
            integrable_inf: self.integrable_inf,
            integrable_zero: self.integrable_zero,
        })
    }
}

fn check_positive(what: &'static str, r: f64) -> Result<()> {
    if r > 0.0 && r.is_finite() {
        Ok(())
    } else {
        Err(Error::Range {
            what,
            value: r,
            lo: 0.0,
            hi: f64::INFINITY,
        })
    }
}

/// Serialize a possibly infinite value as a number or the string `"inf"` / `"-inf"`.
pub fn serialize_extended<S: serde::Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else if *v > 0.0 {
        s.serialize_str("inf")
    } else {
        s.serialize_str("-inf")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Limits {
    /// `Ψ(0) = −‖a‖_{L¹(1,∞)}` or `−∞`.
    #[serde(serialize_with = "serialize_extended")]
    pub psi0: f64,
    /// `Ψ₁(0) = −∫_1^∞ a(s)/s ds` or `−∞`.
    #[serde(serialize_with = "serialize_extended")]
    pub psi1_0: f64,
    /// `lim_{r→∞} Ψ(r) = ‖a‖_{L¹(0,1)}` or `+∞`.
    #[serde(serialize_with = "serialize_extended")]
    pub psi_inf: f64,
    pub integrable_inf: Verdict,
    pub integrable_zero: Verdict,
}

/// Immutable evaluator bundle for `Ψ`, `Ψ₁`, `Ψ̃` with cached limits.
#[derive(Debug, Clone)]
pub struct Potentials {
    coef: Arc<Coefficient>,
    limits: Limits,
}

impl Potentials {
    pub fn new(coef: Arc<Coefficient>) -> Result<Self> {
        let limits = coef.compute_limits()?;
        Ok(Potentials { coef, limits })
    }

    pub fn coefficient(&self) -> &Coefficient {
        &self.coef
    }

    pub fn coefficient_arc(&self) -> &Arc<Coefficient> {
        &self.coef
    }

    pub fn limits(&self) -> &Limits {
        &self.limits
    }

    pub fn tail_integrable(&self) -> bool {
        self.limits.psi0.is_finite()
    }

    pub fn psi(&self, r: f64) -> Result<f64> {
        self.coef.psi(r)
    }

    pub fn psi1(&self, r: f64) -> Result<f64> {
        self.coef.psi1(r)
    }

    pub fn psi_tilde(&self, r: f64) -> Result<f64> {
        self.coef.psi_tilde(r)
    }

    /// `Ψ'(r) = a(1/r)/r²`.
    pub fn psi_prime(&self, r: f64) -> Result<f64> {
        check_positive("psi_prime", r)?;
        Ok(self.coef.eval_a(1.0 / r)? / (r * r))
    }

    /// `Ψ` shifted by a constant: `Ψ̃` when `Ψ(0)` is finite, else `Ψ`.
    /// Differences (and hence the diffusion term) are unchanged, but values near
    /// `r = 0` keep full relative precision.
    pub fn diffusion_potential(&self, r: f64) -> Result<f64> {
        if self.tail_integrable() {
            self.coef.psi_tilde(r)
        } else {
            self.coef.psi(r)
        }
    }

    /// Solve `Ψ(r) = h` for `r > 0`.
    pub fn psi_inverse(&self, h: f64) -> Result<f64> {
        let (lo_lim, hi_lim) = (self.limits.psi0, self.limits.psi_inf);
        if !(h > lo_lim && h < hi_lim) {
            return Err(Error::Range {
                what: "psi_inverse",
                value: h,
                lo: lo_lim,
                hi: hi_lim,
            });
        }
        if h == 0.0 {
            return Ok(1.0);
        }
        let (mut lo, mut hi) = (1.0f64, 1.0f64);
        if h > 0.0 {
            while self.psi(hi)? < h {
                lo = hi;
                hi *= 2.0;
                if hi > 1e300 {
                    return Err(Error::Range {
                        what: "psi_inverse",
                        value: h,
                        lo: lo_lim,
                        hi: hi_lim,
                    });
                }
            }
        } else {
            while self.psi(lo)? > h {
                hi = lo;
                lo *= 0.5;
                if lo < 1e-300 {
                    return Err(Error::Range {
                        what: "psi_inverse",
                        value: h,
                        lo: lo_lim,
                        hi: hi_lim,
                    });
                }
            }
        }
        // bisection in log r
        for _ in 0..200 {
            let mid = (lo * hi).sqrt();
            if mid <= lo || mid >= hi || (hi - lo) <= 4.0 * f64::EPSILON * hi {
                break;
            }
            if self.psi(mid)? < h {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let (plo, phi) = (self.psi(lo)?, self.psi(hi)?);
        let r = if (plo - h).abs() <= (phi - h).abs() { lo } else { hi };
        Ok(r)
    }
}
