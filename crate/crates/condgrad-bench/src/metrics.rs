//! Metric rows and CSV emission.
//!
//! One row per recorded iteration (or epoch, for the stochastic runs).
//! The column set mirrors the figures the experiments reproduce: relative
//! objective, relative distance to the truth, duality gap, achieved oracle
//! error, configured residual tolerance, eigenvalue accuracy against the
//! dense reference, and the ratio of the theoretical oracle-error bound to
//! the achieved error.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use condgrad::textfmt::format_g12;

pub const CSV_HEADER: &str =
    "experiment_id,variant,seed,t,k,wall_ms,rel_obj,rel_err,gap,eps_k,xi,lambda_rel_err,bound_ratio";

#[derive(Debug, Clone, Default)]
pub struct MetricRow {
    pub experiment_id: String,
    pub variant: String,
    pub seed: u64,
    pub t: Option<usize>,
    pub k: Option<usize>,
    pub wall_ms: f64,
    pub rel_obj: Option<f64>,
    pub rel_err: Option<f64>,
    pub gap: Option<f64>,
    pub eps_k: Option<f64>,
    pub xi: Option<f64>,
    pub lambda_rel_err: Option<f64>,
    pub bound_ratio: Option<f64>,
}

fn cell(v: Option<f64>) -> String {
    v.map(format_g12).unwrap_or_default()
}

impl MetricRow {
    pub fn to_csv_line(&self) -> String {
        let mut line = String::new();
        let _ = write!(
            line,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.experiment_id,
            self.variant,
            self.seed,
            self.t.map(|t| t.to_string()).unwrap_or_default(),
            self.k.map(|k| k.to_string()).unwrap_or_default(),
            format_g12(self.wall_ms),
            cell(self.rel_obj),
            cell(self.rel_err),
            cell(self.gap),
            cell(self.eps_k),
            cell(self.xi),
            cell(self.lambda_rel_err),
            cell(self.bound_ratio),
        );
        line
    }
}

/// Renders a full CSV document (header plus one line per row).
pub fn render_csv(rows: &[MetricRow]) -> String {
    let mut out = String::with_capacity(64 + rows.len() * 96);
    out.push_str(CSV_HEADER);
    out.push('\n');
    for row in rows {
        out.push_str(&row.to_csv_line());
        out.push('\n');
    }
    out
}

/// Writes the CSV to `path`, or to stdout when `path` is `-`.
pub fn write_csv(rows: &[MetricRow], path: &Path) -> std::io::Result<()> {
    let doc = render_csv(rows);
    if path.as_os_str() == "-" {
        std::io::stdout().write_all(doc.as_bytes())
    } else {
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent)?;
            }
        }
        std::fs::write(path, doc)
    }
}
