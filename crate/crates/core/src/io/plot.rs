//! Plot-ready CSV output. Each file starts with `#` comment lines naming the
//! schema version, the run parameters and the columns; numbers use 17
//! significant digits so re-emission is byte-identical.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::limits::{CoherenceReport, PhaseField};
use crate::master::DiagnosticsSeries;

/// Version of the CSV column sets.
pub const CSV_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy)]
pub enum PlotData<'a> {
    Coherence(&'a CoherenceReport),
    Phase(&'a PhaseField),
    Diagnostics(&'a DiagnosticsSeries),
}

impl PlotData<'_> {
    pub fn columns(&self) -> &'static [&'static str] {
        match self {
            PlotData::Coherence(_) => &["time", "offdiag_mass", "visibility", "exp_decay"],
            PlotData::Phase(_) => &["q", "p", "value"],
            PlotData::Diagnostics(_) => &["time", "trace", "purity", "hermiticity", "offdiag_coherence"],
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            PlotData::Coherence(_) => "coherence",
            PlotData::Phase(_) => "phase-field",
            PlotData::Diagnostics(_) => "diagnostics",
        }
    }
}

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn row(out: &mut String, values: &[f64]) {
    let cells: Vec<String> = values.iter().map(|&v| num(v)).collect();
    out.push_str(&cells.join(","));
    out.push('\n');
}

/// Renders the CSV text. `params` become `# key = value` lines in the given order.
pub fn render_plot_data(data: PlotData<'_>, params: &[(&str, String)]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# grw {} csv schema {}", data.kind(), CSV_SCHEMA_VERSION);
    for (k, v) in params {
        let _ = writeln!(out, "# {k} = {v}");
    }
    let _ = writeln!(out, "# columns: {}", data.columns().join(","));
    out.push_str(&data.columns().join(","));
    out.push('\n');
    match data {
        PlotData::Coherence(r) => {
            for s in &r.samples {
                row(&mut out, &[s.time, s.offdiag_mass, s.visibility, s.predicted]);
            }
        }
        PlotData::Phase(f) => {
            for ((i, k), v) in f.values().indexed_iter() {
                row(&mut out, &[f.q_grid().x(i), f.p_grid().x(k), *v]);
            }
        }
        PlotData::Diagnostics(d) => {
            for s in &d.samples {
                row(&mut out, &[s.time, s.trace, s.purity, s.hermiticity, s.offdiag_coherence]);
            }
        }
    }
    out
}

pub fn emit_plot_data(data: PlotData<'_>, params: &[(&str, String)], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, render_plot_data(data, params)).map_err(|e| Error::io(path, e))
}
