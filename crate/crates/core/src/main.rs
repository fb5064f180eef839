use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use toml::{Table, Value};

use qsp::coefficient::{Coefficient, Potentials};
use qsp::harness::config::{from_table, parse_table, parse_value, remove_key, set_key, RunConfig};
use qsp::harness::output::{write_run, Timing};
use qsp::harness::presets::preset;
use qsp::harness::run::execute;
use qsp::harness::sweep::{run_sweep, Axis};
use qsp::harness::validate::run_validation;
use qsp::regime::{classify, design_blowup, design_exponents};
use qsp::solver::Outcome;
use qsp::Error;

#[derive(Parser)]
#[command(name = "qsp", version, about = "Quasilinear Smoluchowski-Poisson laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the regime report as JSON.
    Classify(Common),
    /// Print the blowup design as JSON.
    Design(Common),
    /// Run one experiment and write its outputs.
    Simulate(Common),
    /// Run the Cartesian product of `--set key=v1,v2` values.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Worker threads.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Run the invariant suite on the builtin coefficients.
    Validate,
}

#[derive(Args)]
struct Common {
    /// Config file, or the name of a preset.
    #[arg(long)]
    config: Option<String>,
    /// Preset name: blowup-demo, global-demo, decr-demo, crossval.
    #[arg(long)]
    preset: Option<String>,
    /// Coefficient: shift(c,beta), singular(c,p,beta), const(c) or an expression in r.
    #[arg(long)]
    coeff: Option<String>,
    #[arg(long)]
    formulation: Option<String>,
    #[arg(long)]
    t_max: Option<f64>,
    /// Cells in both x and y.
    #[arg(long)]
    grid: Option<i64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override `section.key=value`; in a sweep, `section.key=v1,v2,...`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

struct Base {
    table: Table,
    dir: Option<PathBuf>,
}

fn load_base(c: &Common) -> qsp::Result<Base> {
    if c.config.is_some() && c.preset.is_some() {
        return Err(config_err("preset", "give either --config or --preset"));
    }
    let (mut table, dir) = match (&c.config, &c.preset) {
        (Some(s), _) if Path::new(s).is_file() => {
            let text = std::fs::read_to_string(s).map_err(|e| config_err("config", format!("{s}: {e}")))?;
            (parse_table(&text)?, Path::new(s).parent().map(Path::to_path_buf))
        }
        (Some(s), _) | (None, Some(s)) => (preset(s)?, None),
        (None, None) => (Table::new(), None),
    };
    if let Some(coeff) = &c.coeff {
        remove_key(&mut table, "coefficient.expr");
        set_key(&mut table, "coefficient.spec", Value::String(coeff.clone()))?;
    }
    if let Some(f) = &c.formulation {
        set_key(&mut table, "run.formulation", Value::String(f.clone()))?;
    }
    if let Some(t) = c.t_max {
        set_key(&mut table, "run.t_max", Value::Float(t))?;
    }
    if let Some(n) = c.grid {
        set_key(&mut table, "grid.n", Value::Integer(n))?;
        set_key(&mut table, "grid.n_y", Value::Integer(n))?;
    }
    if let Some(out) = &c.out {
        set_key(&mut table, "output.dir", Value::String(out.display().to_string()))?;
    }
    Ok(Base { table, dir })
}

fn config_err(key: &str, msg: impl Into<String>) -> Error {
    Error::Config {
        key: key.to_string(),
        msg: msg.into(),
    }
}

fn apply_single_overrides(table: &mut Table, sets: &[String]) -> qsp::Result<()> {
    for s in sets {
        let (k, v) = s
            .split_once('=')
            .ok_or_else(|| config_err(s, "expected section.key=value"))?;
        set_key(table, k.trim(), parse_value(v.trim()))?;
    }
    Ok(())
}

fn resolve(c: &Common) -> qsp::Result<RunConfig> {
    let mut base = load_base(c)?;
    apply_single_overrides(&mut base.table, &c.set)?;
    from_table(base.table, base.dir.as_deref())
}

fn potentials(cfg: &RunConfig) -> qsp::Result<Potentials> {
    let coef = Coefficient::from_spec(&cfg.coefficient).map_err(|e| config_err("coefficient.spec", e.to_string()))?;
    Potentials::new(Arc::new(coef))
}

fn print_stdout(text: &str) -> qsp::Result<()> {
    match writeln!(std::io::stdout().lock(), "{text}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn print_json<T: serde::Serialize>(v: &T) -> qsp::Result<()> {
    print_stdout(&serde_json::to_string_pretty(v).map_err(|e| Error::Io(e.to_string()))?)
}

fn run(cli: Cli) -> qsp::Result<ExitCode> {
    match cli.command {
        Command::Classify(c) => {
            let cfg = resolve(&c)?;
            print_json(&classify(&potentials(&cfg)?, &cfg.candidates)?)?;
        }
        Command::Design(c) => {
            let cfg = resolve(&c)?;
            let p = potentials(&cfg)?;
            let report = classify(&p, &cfg.candidates)?;
            let Some((theta, alpha)) = design_exponents(&report) else {
                return Err(Error::Design(format!(
                    "clause `{}` admits no blowup design",
                    report.clause.as_str()
                )));
            };
            print_json(&design_blowup(&p, cfg.mass, theta, alpha, cfg.n_y)?)?;
        }
        Command::Simulate(c) => {
            let cfg = resolve(&c)?;
            let dir = cfg.out_dir.clone().unwrap_or_else(|| PathBuf::from("qsp-out"));
            let start = Instant::now();
            let out = execute(&cfg)?;
            let timing = Timing {
                wall_clock_s: start.elapsed().as_secs_f64(),
            };
            write_run(&dir, &out, timing)?;
            let s = &out.summary;
            eprintln!(
                "verdict {} at t = {} ({} steps); outputs in {}",
                s.verdict.as_str(),
                s.blowup_time.unwrap_or(s.final_time),
                s.runs.iter().map(|r| r.steps).sum::<usize>(),
                dir.display()
            );
            for check in &s.checks {
                eprintln!("  {:<18} {}", check.name, if check.passed { "pass" } else { "FAIL" });
            }
            if s.verdict == Outcome::Inconclusive {
                return Ok(ExitCode::from(2));
            }
        }
        Command::Sweep { common, jobs } => {
            let base = load_base(&common)?;
            let axes = common.set.iter().map(|s| Axis::parse(s)).collect::<qsp::Result<Vec<_>>>()?;
            let out = common.out.clone().unwrap_or_else(|| PathBuf::from("qsp-sweep"));
            let mut table = base.table;
            remove_key(&mut table, "output.dir");
            let manifest = run_sweep(&table, &axes, &out, jobs, base.dir.as_deref())?;
            for child in &manifest.children {
                let status = match (&child.verdict, &child.error) {
                    (Some(v), _) => v.as_str().to_string(),
                    (None, Some(e)) => format!("error: {e}"),
                    (None, None) => "unknown".into(),
                };
                eprintln!("{}  {status}", child.dir.display());
            }
            eprintln!("manifest: {}", out.join("manifest.json").display());
        }
        Command::Validate => {
            let results = run_validation();
            let mut all = true;
            for r in &results {
                all &= r.passed;
                print_stdout(&format!("{} {:<32} {}", if r.passed { "pass" } else { "FAIL" }, r.name, r.detail))?;
            }
            if !all {
                return Ok(ExitCode::from(2));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config { .. } | Error::Expr(_) | Error::Io(_) => ExitCode::from(1),
                _ => ExitCode::from(2),
            }
        }
    }
}
