//! Files written into a run directory.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::diagnostics::DiagnosticsRecord;
use crate::error::{Error, Result};
use crate::harness::run::RunOutput;
use crate::transform::write_field_csv;

pub const SERIES_HEADER: &str =
    "t,dt,f_min,f_max,u_max,mass_err,L1,m_q,sigma,slack_corollary,slack_gex5,slack_gex6,slack_moment_ode,slack_prandtl";

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.16e}")).unwrap_or_default()
}

pub fn write_series<W: Write>(mut w: W, rows: &[DiagnosticsRecord]) -> Result<()> {
    writeln!(w, "{SERIES_HEADER}")?;
    for r in rows {
        let cells = [
            Some(r.t),
            Some(r.dt),
            r.f_min,
            r.f_max,
            r.u_max,
            Some(r.mass_err),
            r.l1,
            r.m_q,
            r.sigma,
            r.slack_corollary,
            r.slack_gex5,
            r.slack_gex6,
            r.slack_moment_ode,
            r.slack_prandtl,
        ];
        let line: Vec<String> = cells.iter().map(|c| cell(*c)).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Error::Io(e.to_string()))?;
    writeln!(w)?;
    Ok(())
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Timing {
    pub wall_clock_s: f64,
}

/// `series.csv` holds the f-form rows when present, otherwise the u-form rows.
pub fn write_run(dir: &Path, out: &RunOutput, timing: Timing) -> Result<()> {
    fs::create_dir_all(dir)?;
    let (main, extra) = if out.series_f.is_empty() {
        (&out.series_u, None)
    } else {
        (&out.series_f, Some(&out.series_u).filter(|s| !s.is_empty()))
    };
    write_series(BufWriter::new(File::create(dir.join("series.csv"))?), main)?;
    if let Some(rows) = extra {
        write_series(BufWriter::new(File::create(dir.join("series_u.csv"))?), rows)?;
    }
    if let Some(f) = &out.final_f {
        write_field_csv(BufWriter::new(File::create(dir.join("f_final.csv"))?), f.h(), f.values())?;
    }
    if let Some(u) = &out.final_u {
        write_field_csv(BufWriter::new(File::create(dir.join("u_final.csv"))?), u.h(), u.values())?;
    }
    write_json(&dir.join("summary.json"), &out.summary)?;
    write_json(&dir.join("timing.json"), &timing)
}
