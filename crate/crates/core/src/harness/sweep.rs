//! Cartesian parameter sweeps over a base configuration.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use toml::{Table, Value};

use crate::error::{Error, Result};
use crate::harness::config::{from_table, parse_value, set_key};
use crate::harness::output::{write_json, write_run, Timing};
use crate::harness::run::execute;
use crate::solver::Outcome;

/// One swept key with its candidate values.
#[derive(Debug, Clone, PartialEq)]
pub struct Axis {
    pub key: String,
    pub values: Vec<Value>,
}

/// Split on top-level commas, so `shift(1,-2),shift(1,-1)` yields two values.
fn split_values(s: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let (mut depth, mut quoted, mut start) = (0i32, false, 0);
    for (i, c) in s.char_indices() {
        match c {
            '"' => quoted = !quoted,
            '(' | '[' if !quoted => depth += 1,
            ')' | ']' if !quoted => depth -= 1,
            ',' if !quoted && depth == 0 => {
                out.push(s[start..i].trim());
                start = i + 1;
            }
            _ => {}
        }
    }
    out.push(s[start..].trim());
    out
}

impl Axis {
    /// Parse `section.key=v1,v2,...`.
    pub fn parse(arg: &str) -> Result<Axis> {
        let (key, values) = arg
            .split_once('=')
            .ok_or_else(|| Error::config(arg, "expected section.key=value[,value...]"))?;
        let values: Vec<Value> = split_values(values).into_iter().map(parse_value).collect();
        if values.iter().any(|v| matches!(v, Value::String(s) if s.is_empty())) {
            return Err(Error::config(key.trim(), "empty value"));
        }
        Ok(Axis {
            key: key.trim().to_string(),
            values,
        })
    }
}

/// Every combination, last axis varying fastest.
pub fn combinations(axes: &[Axis]) -> Vec<Vec<(String, Value)>> {
    let mut out = vec![Vec::new()];
    for axis in axes {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                axis.values.iter().map(move |v| {
                    let mut p = prefix.clone();
                    p.push((axis.key.clone(), v.clone()));
                    p
                })
            })
            .collect();
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChildEntry {
    pub index: usize,
    pub dir: PathBuf,
    pub overrides: Table,
    pub verdict: Option<Outcome>,
    pub blowup_time: Option<f64>,
    pub final_time: Option<f64>,
    pub checks_passed: Option<bool>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub children: Vec<ChildEntry>,
}

fn run_child(index: usize, base: &Table, overrides: &[(String, Value)], out: &Path, base_dir: Option<&Path>) -> ChildEntry {
    let dir = out.join(format!("run-{index:03}"));
    let mut table = base.clone();
    let mut echo = Table::new();
    let mut entry = ChildEntry {
        index,
        dir: PathBuf::from(dir.file_name().unwrap()),
        overrides: Table::new(),
        verdict: None,
        blowup_time: None,
        final_time: None,
        checks_passed: None,
        error: None,
    };
    let result = (|| -> Result<()> {
        for (k, v) in overrides {
            echo.insert(k.clone(), v.clone());
            set_key(&mut table, k, v.clone())?;
        }
        let cfg = from_table(table, base_dir)?;
        let start = Instant::now();
        let run = execute(&cfg)?;
        let timing = Timing {
            wall_clock_s: start.elapsed().as_secs_f64(),
        };
        write_run(&dir, &run, timing)?;
        entry.verdict = Some(run.summary.verdict);
        entry.blowup_time = run.summary.blowup_time;
        entry.final_time = Some(run.summary.final_time);
        entry.checks_passed = Some(run.summary.checks.iter().all(|c| c.passed));
        Ok(())
    })();
    entry.overrides = echo;
    if let Err(e) = result {
        entry.error = Some(e.to_string());
    }
    entry
}

/// Run every combination on `jobs` worker threads and write `manifest.json`.
/// A failing child is recorded in the manifest; the sweep carries on.
pub fn run_sweep(base: &Table, axes: &[Axis], out: &Path, jobs: usize, base_dir: Option<&Path>) -> Result<Manifest> {
    std::fs::create_dir_all(out)?;
    let combos = combinations(axes);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::config("jobs", e.to_string()))?;
    let children = pool.install(|| {
        combos
            .par_iter()
            .enumerate()
            .map(|(i, c)| run_child(i, base, c, out, base_dir))
            .collect::<Vec<_>>()
    });
    let manifest = Manifest { children };
    write_json(&out.join("manifest.json"), &manifest)?;
    Ok(manifest)
}
