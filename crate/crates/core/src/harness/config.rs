//! Run configuration: TOML with flat sections. Unknown keys are errors.
//!
//! ```toml
//! [coefficient]
//! spec = "shift(1,-2)"      # or: expr = "(1+r)^-2"
//! theta = 0.5               # optional decay exponents
//! alpha = 2.0
//!
//! [problem]
//! mass = 1.0
//!
//! [initial]
//! kind = "pam"              # constant | cosine | pam | samples
//! q = "auto"
//! delta = "auto"
//!
//! [grid]
//! n = 400
//!
//! [run]
//! formulation = "f"         # f | u | both
//! t_max = 50.0
//!
//! [output]
//! every_steps = 4
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::error::{Error, Result};
use crate::solver::RunParams;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCoefficient {
    spec: Option<String>,
    expr: Option<String>,
    theta: Option<f64>,
    alpha: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProblem {
    mass: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum NumOrText {
    Num(f64),
    Text(String),
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInitial {
    kind: Option<String>,
    amplitude: Option<f64>,
    q: Option<NumOrText>,
    delta: Option<NumOrText>,
    file: Option<String>,
    field: Option<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    n: Option<i64>,
    n_y: Option<i64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRun {
    formulation: Option<String>,
    t_max: Option<f64>,
    dt_init: Option<f64>,
    dt_max: Option<f64>,
    output_interval: Option<f64>,
    max_steps: Option<i64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTolerance {
    touchdown: Option<f64>,
    rel_change: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    dir: Option<String>,
    every_steps: Option<i64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    coefficient: RawCoefficient,
    #[serde(default)]
    problem: RawProblem,
    #[serde(default)]
    initial: RawInitial,
    #[serde(default)]
    grid: RawGrid,
    #[serde(default)]
    run: RawRun,
    #[serde(default)]
    tolerance: RawTolerance,
    #[serde(default)]
    output: RawOutput,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialSpec {
    Constant,
    Cosine {
        amplitude: f64,
    },
    /// `None` means "auto".
    Pam {
        q: Option<f64>,
        delta: Option<f64>,
    },
    Samples {
        file: PathBuf,
        field: SampledField,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SampledField {
    U,
    F,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Formulation {
    F,
    U,
    Both,
}

impl Formulation {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "f" => Ok(Formulation::F),
            "u" => Ok(Formulation::U),
            "both" => Ok(Formulation::Both),
            _ => Err(Error::config("run.formulation", format!("expected f, u or both, got `{s}`"))),
        }
    }

    pub fn has_f(self) -> bool {
        self != Formulation::U
    }

    pub fn has_u(self) -> bool {
        self != Formulation::F
    }
}

/// Fully validated run configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub coefficient: String,
    pub candidates: Vec<(f64, f64)>,
    pub mass: f64,
    pub initial: InitialSpec,
    pub formulation: Formulation,
    pub n: usize,
    pub n_y: usize,
    pub params: RunParams,
    #[serde(skip)]
    pub out_dir: Option<PathBuf>,
}

fn positive(key: &str, v: Option<f64>, default: f64) -> Result<f64> {
    let v = v.unwrap_or(default);
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::config(key, format!("must be a positive number, got {v}")))
    }
}

fn count(key: &str, v: Option<i64>, default: usize, min: usize) -> Result<usize> {
    match v {
        None => Ok(default),
        Some(x) if x >= min as i64 => Ok(x as usize),
        Some(x) => Err(Error::config(key, format!("must be an integer ≥ {min}, got {x}"))),
    }
}

fn auto_or(key: &str, v: Option<NumOrText>) -> Result<Option<f64>> {
    match v {
        None => Ok(None),
        Some(NumOrText::Text(t)) if t == "auto" => Ok(None),
        Some(NumOrText::Text(t)) => Err(Error::config(key, format!("expected a number or \"auto\", got `{t}`"))),
        Some(NumOrText::Num(x)) if x > 0.0 && x.is_finite() => Ok(Some(x)),
        Some(NumOrText::Num(x)) => Err(Error::config(key, format!("must be positive, got {x}"))),
    }
}

/// Validate a parsed table. Relative `initial.file` paths resolve against `base`.
pub fn from_table(table: Table, base: Option<&Path>) -> Result<RunConfig> {
    let raw: RawConfig = Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| Error::config("config", e.message().trim().to_string()))?;
    let coefficient = match (raw.coefficient.spec, raw.coefficient.expr) {
        (Some(_), Some(_)) => {
            return Err(Error::config(
                "coefficient.expr",
                "give either coefficient.spec or coefficient.expr, not both",
            ))
        }
        (Some(s), None) | (None, Some(s)) => s,
        (None, None) => return Err(Error::config("coefficient.spec", "missing coefficient")),
    };
    let candidates = match (raw.coefficient.theta, raw.coefficient.alpha) {
        (Some(t), Some(a)) => vec![(t, a)],
        (None, None) => Vec::new(),
        _ => {
            return Err(Error::config(
                "coefficient.theta",
                "theta and alpha must be given together",
            ))
        }
    };
    let mass = positive("mass", raw.problem.mass, 1.0)?;
    let ini = raw.initial;
    let kind = ini.kind.as_deref().unwrap_or("constant");
    let used = |k: &str, present: bool, allowed: &[&str]| -> Result<()> {
        if present && !allowed.contains(&kind) {
            Err(Error::config(format!("initial.{k}"), format!("not used by kind `{kind}`")))
        } else {
            Ok(())
        }
    };
    used("amplitude", ini.amplitude.is_some(), &["cosine"])?;
    used("q", ini.q.is_some(), &["pam"])?;
    used("delta", ini.delta.is_some(), &["pam"])?;
    used("file", ini.file.is_some(), &["samples"])?;
    used("field", ini.field.is_some(), &["samples"])?;
    let initial = match kind {
        "constant" => InitialSpec::Constant,
        "cosine" => {
            let amplitude = ini.amplitude.unwrap_or(0.5);
            if !(amplitude.abs() < 1.0) {
                return Err(Error::config("initial.amplitude", "must lie in (-1, 1)"));
            }
            InitialSpec::Cosine { amplitude }
        }
        "pam" => InitialSpec::Pam {
            q: auto_or("initial.q", ini.q)?,
            delta: auto_or("initial.delta", ini.delta)?,
        },
        "samples" => {
            let file = ini
                .file
                .ok_or_else(|| Error::config("initial.file", "required for kind `samples`"))?;
            let mut path = PathBuf::from(file);
            if let (true, Some(b)) = (path.is_relative(), base) {
                path = b.join(path);
            }
            let field = match ini.field.as_deref().unwrap_or("u") {
                "u" => SampledField::U,
                "f" => SampledField::F,
                other => return Err(Error::config("initial.field", format!("expected u or f, got `{other}`"))),
            };
            InitialSpec::Samples { file: path, field }
        }
        other => {
            return Err(Error::config(
                "initial.kind",
                format!("expected constant, cosine, pam or samples, got `{other}`"),
            ))
        }
    };
    let formulation = Formulation::parse(raw.run.formulation.as_deref().unwrap_or("f"))?;
    let n = count("grid.n", raw.grid.n, 400, 4)?;
    let n_y = count("grid.n_y", raw.grid.n_y, n, 4)?;
    let d = RunParams::default();
    let params = RunParams {
        t_max: positive("run.t_max", raw.run.t_max, d.t_max)?,
        dt_init: positive("run.dt_init", raw.run.dt_init, d.dt_init)?,
        dt_max: positive("run.dt_max", raw.run.dt_max, d.dt_max)?,
        output_interval: positive("run.output_interval", raw.run.output_interval, d.output_interval)?,
        every_steps: count("output.every_steps", raw.output.every_steps, 0, 0)?,
        touchdown: positive("tolerance.touchdown", raw.tolerance.touchdown, d.touchdown)?,
        rel_change: positive("tolerance.rel_change", raw.tolerance.rel_change, d.rel_change)?,
        max_steps: count("run.max_steps", raw.run.max_steps, d.max_steps, 1)?,
    };
    Ok(RunConfig {
        coefficient,
        candidates,
        mass,
        initial,
        formulation,
        n,
        n_y,
        params,
        out_dir: raw.output.dir.map(PathBuf::from),
    })
}

pub fn parse_table(text: &str) -> Result<Table> {
    text.parse::<Table>()
        .map_err(|e| Error::config("config", e.message().trim().to_string()))
}

/// Read and validate a config file.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::config("config", format!("{}: {e}", path.display())))?;
    from_table(parse_table(&text)?, path.parent())
}

/// Parse `value` as a TOML scalar, falling back to a bare string.
pub fn parse_value(value: &str) -> Value {
    format!("v = {value}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(value.to_string()))
}

/// Set `section.key = value` in a table.
pub fn set_key(table: &mut Table, dotted: &str, value: Value) -> Result<()> {
    let (section, key) = dotted
        .split_once('.')
        .ok_or_else(|| Error::config(dotted, "override keys have the form section.key"))?;
    let entry = table
        .entry(section.to_string())
        .or_insert_with(|| Value::Table(Table::new()));
    match entry {
        Value::Table(t) => {
            t.insert(key.to_string(), value);
            Ok(())
        }
        _ => Err(Error::config(section, "is not a section")),
    }
}

pub fn remove_key(table: &mut Table, dotted: &str) {
    if let Some((section, key)) = dotted.split_once('.') {
        if let Some(Value::Table(t)) = table.get_mut(section) {
            t.remove(key);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(text: &str) -> Result<RunConfig> {
        from_table(parse_table(text)?, None)
    }

    #[test]
    fn defaults() {
        let c = cfg("[coefficient]\nspec = \"shift(1,-1)\"\n").unwrap();
        assert_eq!(c.n, 400);
        assert_eq!(c.n_y, 400);
        assert_eq!(c.mass, 1.0);
        assert_eq!(c.initial, InitialSpec::Constant);
        assert_eq!(c.formulation, Formulation::F);
    }

    #[test]
    fn pam_auto() {
        let c = cfg("[coefficient]\nspec = \"shift(1,-2)\"\n[initial]\nkind = \"pam\"\ndelta = \"auto\"\nq = 4.0\n").unwrap();
        assert_eq!(
            c.initial,
            InitialSpec::Pam {
                q: Some(4.0),
                delta: None
            }
        );
    }

    #[test]
    fn errors_name_keys() {
        let e = cfg("[coefficient]\nspec = \"c\"\n[problem]\nmass = -1.0\n").unwrap_err();
        assert!(e.to_string().contains("mass"));
        let e = cfg("[coefficient]\nspec = \"c\"\n[grid]\nnn = 3\n").unwrap_err();
        assert!(e.to_string().contains("nn"));
        let e = cfg("[coefficient]\nspec = \"c\"\n[grid]\nn = \"many\"\n").unwrap_err();
        assert!(e.to_string().contains("config"));
        let e = cfg("[coefficient]\nspec = \"c\"\n[initial]\nkind = \"cosine\"\ndelta = 0.1\n").unwrap_err();
        assert!(e.to_string().contains("initial.delta"));
        assert!(cfg("[problem]\nmass = 1.0\n").is_err());
        assert!(cfg("[coefficient]\nspec = \"c\"\n[run]\nformulation = \"x\"\n").is_err());
        assert!(cfg("[coefficient]\nspec = \"c\"\n[bogus]\nx = 1\n").is_err());
    }

    #[test]
    fn overrides() {
        let mut t = parse_table("[coefficient]\nspec = \"shift(1,-1)\"\n").unwrap();
        set_key(&mut t, "grid.n", parse_value("200")).unwrap();
        set_key(&mut t, "run.formulation", parse_value("both")).unwrap();
        set_key(&mut t, "problem.mass", parse_value("0.5")).unwrap();
        let c = from_table(t, None).unwrap();
        assert_eq!((c.n, c.formulation, c.mass), (200, Formulation::Both, 0.5));
        assert_eq!(parse_value("(1+r)^-2"), Value::String("(1+r)^-2".into()));
    }
}
