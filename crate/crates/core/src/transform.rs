//! Eulerian density `u` on `[0,1]` and its mass-Lagrangian counterpart `f` on `[0,M]`.
//!
//! With `U(x) = ∫_0^x u` and `F = U⁻¹`, `f = F'` satisfies `f(y) u(F(y)) = 1`.
//! Both fields live on uniform cell-centred grids; the discrete mass of `u`
//! equals `M` and the discrete integral of `f` equals 1.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};

/// Below this `f` no longer maps back to a bounded `u`.
pub const TOUCHDOWN_CONVERSION: f64 = 1e-9;

fn validate(values: &[f64], what: &str) -> Result<()> {
    if values.len() < 2 {
        return Err(Error::Field(format!("{what} needs at least two cells")));
    }
    if let Some((i, v)) = values
        .iter()
        .enumerate()
        .find(|(_, v)| !(v.is_finite() && **v > 0.0))
    {
        return Err(Error::Field(format!("{what}[{i}] = {v} is not positive")));
    }
    Ok(())
}

fn rescale(values: &mut [f64], h: f64, target: f64) {
    let total: f64 = values.iter().sum::<f64>() * h;
    let k = target / total;
    values.iter_mut().for_each(|v| *v *= k);
}

fn midpoint(values: &[f64], h: f64) -> f64 {
    values.iter().sum::<f64>() * h
}

/// Cell-centred density on `[0,1]` with discrete mass `M`.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldU {
    mass: f64,
    values: Vec<f64>,
}

impl FieldU {
    /// Build from samples; a single multiplicative factor fixes the mass to `mass`.
    pub fn new(mut values: Vec<f64>, mass: f64) -> Result<Self> {
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(Error::Field(format!("mass must be positive, got {mass}")));
        }
        validate(&values, "u")?;
        let h = 1.0 / values.len() as f64;
        rescale(&mut values, h, mass);
        Ok(FieldU { mass, values })
    }

    pub fn from_fn(n: usize, mass: f64, g: impl Fn(f64) -> f64) -> Result<Self> {
        let h = 1.0 / n as f64;
        Self::new((0..n).map(|i| g((i as f64 + 0.5) * h)).collect(), mass)
    }

    pub fn constant(n: usize, mass: f64) -> Result<Self> {
        Self::from_fn(n, mass, |_| mass)
    }

    /// `u₀(x) = M (1 + A cos(πx))`, `|A| < 1`.
    pub fn cosine(n: usize, mass: f64, amplitude: f64) -> Result<Self> {
        if !(amplitude.abs() < 1.0) {
            return Err(Error::Field(format!(
                "cosine amplitude must lie in (-1, 1), got {amplitude}"
            )));
        }
        Self::from_fn(n, mass, |x| {
            mass * (1.0 + amplitude * (std::f64::consts::PI * x).cos())
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn h(&self) -> f64 {
        1.0 / self.values.len() as f64
    }

    pub fn discrete_mass(&self) -> f64 {
        midpoint(&self.values, self.h())
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn centre(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.h()
    }

    /// Replace the samples without renormalising. Used by the solver, whose flux
    /// form conserves mass on its own.
    pub(crate) fn from_raw(values: Vec<f64>, mass: f64) -> Self {
        FieldU { mass, values }
    }
}

/// Cell-centred profile on `[0,M]` with unit discrete integral.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldF {
    mass: f64,
    values: Vec<f64>,
}

impl FieldF {
    pub fn new(mut values: Vec<f64>, mass: f64) -> Result<Self> {
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(Error::Field(format!("mass must be positive, got {mass}")));
        }
        validate(&values, "f")?;
        let h = mass / values.len() as f64;
        rescale(&mut values, h, 1.0);
        Ok(FieldF { mass, values })
    }

    pub fn from_fn(n: usize, mass: f64, g: impl Fn(f64) -> f64) -> Result<Self> {
        let h = mass / n as f64;
        Self::new((0..n).map(|j| g((j as f64 + 0.5) * h)).collect(), mass)
    }

    pub fn constant(n: usize, mass: f64) -> Result<Self> {
        Self::from_fn(n, mass, |_| 1.0 / mass)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn h(&self) -> f64 {
        self.mass / self.values.len() as f64
    }

    pub fn integral(&self) -> f64 {
        midpoint(&self.values, self.h())
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn centre(&self, j: usize) -> f64 {
        (j as f64 + 0.5) * self.h()
    }

    pub(crate) fn from_raw(values: Vec<f64>, mass: f64) -> Self {
        FieldF { mass, values }
    }
}

/// Linear interpolation of cell-centred samples, linear extrapolation into the
/// outer half cells (falling back to the edge value if that would not be positive).
fn sample_linear(values: &[f64], h: f64, x: f64) -> f64 {
    let n = values.len();
    let s = x / h - 0.5;
    let (i, w) = if s <= 0.0 {
        (0, s)
    } else if s >= (n - 1) as f64 {
        (n - 2, s - (n - 2) as f64)
    } else {
        let i = (s.floor() as usize).min(n - 2);
        (i, s - i as f64)
    };
    let v = values[i] + w * (values[i + 1] - values[i]);
    if v > 0.0 {
        v
    } else if s <= 0.0 {
        values[0]
    } else {
        values[n - 1]
    }
}

/// Pseudo-inverse change of variables: a positive density `src` on `[0, src_len]`
/// whose integral is `out_len` becomes the reciprocal density on `[0, out_len]`
/// with integral `src_len`.
fn pseudo_inverse(src: &[f64], src_len: f64, n_out: usize, out_len: f64) -> Result<Vec<f64>> {
    let n = src.len();
    let h = src_len / n as f64;
    let mut cumulative = Vec::with_capacity(n + 1);
    cumulative.push(0.0);
    for (i, v) in src.iter().enumerate() {
        cumulative.push(cumulative[i] + h * v);
    }
    for w in cumulative.windows(2) {
        if !(w[1] > w[0]) {
            return Err(Error::Field("cumulative is not strictly increasing".into()));
        }
    }
    // Rounding in the running sum: pin the endpoint.
    cumulative[n] = out_len;
    let h_out = out_len / n_out as f64;
    let mut out = Vec::with_capacity(n_out);
    let mut i = 0;
    for j in 0..n_out {
        let y = (j as f64 + 0.5) * h_out;
        while i + 1 < n && cumulative[i + 1] <= y {
            i += 1;
        }
        let x = (i as f64 * h + (y - cumulative[i]) / src[i]).clamp(0.0, src_len);
        out.push(1.0 / sample_linear(src, h, x));
    }
    rescale(&mut out, h_out, src_len);
    Ok(out)
}

/// `u ↦ f = 1/u(F(y))` on `n_y` cells of `[0,M]`.
pub fn u_to_f(u: &FieldU, n_y: usize) -> Result<FieldF> {
    let values = pseudo_inverse(&u.values, 1.0, n_y, u.mass)?;
    FieldF::new(values, u.mass)
}

/// `f ↦ u` on `n` cells of `[0,1]`. Fails once `f` has (numerically) touched down.
pub fn f_to_u(f: &FieldF, n: usize) -> Result<FieldU> {
    let min_f = f.min();
    if min_f <= TOUCHDOWN_CONVERSION {
        return Err(Error::TouchDown { min_f });
    }
    let values = pseudo_inverse(&f.values, f.mass, n, 1.0)?;
    FieldU::new(values, f.mass)
}

/// Admissible range `(0, min{1, 2M, (2M)^{-1/q}})` for the blowup profile parameter.
pub fn pam_delta_bound(mass: f64, q: f64) -> f64 {
    1f64.min(2.0 * mass).min((2.0 * mass).powf(-1.0 / q))
}

/// `f₀(y) = 2(1 − Mδ^q)/δ² (δ − y)_+ + δ^q`.
pub fn pam_value(mass: f64, q: f64, delta: f64, y: f64) -> f64 {
    let dq = delta.powf(q);
    2.0 * (1.0 - mass * dq) / (delta * delta) * (delta - y).max(0.0) + dq
}

#[derive(Debug, Clone, PartialEq)]
pub struct PamProfile {
    pub field: FieldF,
    /// `‖f₀‖_∞` of the continuum profile, `2(1 − Mδ^q)/δ + δ^q`.
    pub sup_continuum: f64,
    pub sup_discrete: f64,
    /// `‖f₀‖_∞ ≤ 2/δ`
    pub sup_bound_holds: bool,
}

/// Sample the blowup profile at cell centres and renormalise to unit integral.
pub fn pam_profile(mass: f64, q: f64, delta: f64, n_y: usize) -> Result<PamProfile> {
    let bound = pam_delta_bound(mass, q);
    if !(delta > 0.0 && delta < bound) {
        return Err(Error::Range {
            what: "pam delta",
            value: delta,
            lo: 0.0,
            hi: bound,
        });
    }
    let field = FieldF::from_fn(n_y, mass, |y| pam_value(mass, q, delta, y))?;
    let sup_continuum = pam_value(mass, q, delta, 0.0);
    let sup_discrete = field.max();
    Ok(PamProfile {
        sup_bound_holds: sup_continuum <= 2.0 / delta,
        field,
        sup_continuum,
        sup_discrete,
    })
}

/// One row per cell: `index,coordinate,value`.
pub fn write_field_csv<W: Write>(mut w: W, h: f64, values: &[f64]) -> Result<()> {
    writeln!(w, "index,coordinate,value")?;
    for (i, v) in values.iter().enumerate() {
        writeln!(w, "{},{:.16e},{:.16e}", i, (i as f64 + 0.5) * h, v)?;
    }
    Ok(())
}

/// Reads the last column of each data row; a non-numeric first row is treated as a header.
pub fn read_samples_csv<R: BufRead>(r: R) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let last = line.rsplit(',').next().unwrap_or("").trim();
        match last.parse::<f64>() {
            Ok(v) => out.push(v),
            Err(_) if lineno == 0 => continue,
            Err(_) => {
                return Err(Error::Field(format!(
                    "line {}: cannot parse `{last}` as a number",
                    lineno + 1
                )))
            }
        }
    }
    Ok(out)
}
