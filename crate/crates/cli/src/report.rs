//! CSV schemas and the per-stage summary.
//!
//! `timings.csv`: step, time, dt, one column per stage (ms), total_ms,
//! solver_iterations, solver_residual, solver_converged, max_divergence,
//! particles. Stage columns and total_ms are wall clock.
//!
//! `energy.csv`: step, time, energy, particles.
//!
//! `bench.csv`: scene, res, particles, stage, ms. One row per stage plus a
//! `total` row per matrix cell, means over the measured steps.

use std::fmt::Write as _;
use std::fs::File;
use std::path::Path;

use flipsim::sim::{StageTimings, StepReport};

use crate::CliError;

pub fn timings_header() -> Vec<&'static str> {
    let mut h = vec!["step", "time", "dt"];
    h.extend(StageTimings::NAMES);
    h.extend(["total_ms", "solver_iterations", "solver_residual", "solver_converged", "max_divergence", "particles"]);
    h
}

pub const ENERGY_HEADER: [&str; 4] = ["step", "time", "energy", "particles"];
pub const BENCH_HEADER: [&str; 5] = ["scene", "res", "particles", "stage", "ms"];

/// Columns of `timings.csv` that depend on wall-clock time.
pub fn wall_clock_columns() -> Vec<&'static str> {
    let mut c: Vec<&str> = StageTimings::NAMES.to_vec();
    c.push("total_ms");
    c
}

pub fn timings_row(r: &StepReport, time: f64) -> Vec<String> {
    let mut row = vec![r.step.to_string(), time.to_string(), r.dt.to_string()];
    row.extend(r.timings.values().iter().map(|v| format!("{v:.4}")));
    row.extend([
        format!("{:.4}", r.total_ms),
        r.solver_iterations.to_string(),
        r.solver_residual.to_string(),
        r.solver_converged.to_string(),
        r.max_divergence.to_string(),
        r.particles.to_string(),
    ]);
    row
}

pub struct CsvFile {
    writer: csv::Writer<File>,
    path: std::path::PathBuf,
}

impl CsvFile {
    pub fn create(path: &Path, header: &[&str]) -> Result<Self, CliError> {
        let writer = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
        let mut f = Self { writer, path: path.to_path_buf() };
        f.row(header)?;
        Ok(f)
    }

    pub fn row<I, S>(&mut self, fields: I) -> Result<(), CliError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.writer.write_record(fields).map_err(|e| csv_err(&self.path, e))
    }

    pub fn finish(mut self) -> Result<(), CliError> {
        self.writer.flush().map_err(|e| CliError::io(&self.path, e))
    }
}

fn csv_err(path: &Path, e: csv::Error) -> CliError {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => CliError::io(path, source),
        other => CliError::Runtime(format!("{}: {other:?}", path.display())),
    }
}

/// Average step time and per-stage means, as printed by `run` and `bench`.
pub fn format_summary(label: &str, steps: usize, particles: usize, mean: &StageTimings, avg_step_ms: f64) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{label}: {steps} steps, {particles} particles, avg step {avg_step_ms:.3} ms");
    for (name, v) in StageTimings::NAMES.iter().zip(mean.values()) {
        let share = if avg_step_ms > 0.0 { 100.0 * v / avg_step_ms } else { 0.0 };
        let _ = writeln!(s, "  {name:<15}{v:>10.3} ms {share:>6.1}%");
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_matches_row_width() {
        let r = StepReport {
            step: 1,
            dt: 0.01,
            timings: StageTimings::default(),
            total_ms: 1.0,
            solver_iterations: 3,
            solver_residual: 1e-7,
            solver_converged: true,
            max_divergence: 2e-7,
            particles: 10,
        };
        assert_eq!(timings_row(&r, 0.01).len(), timings_header().len());
        assert_eq!(timings_header()[..3], ["step", "time", "dt"]);
        assert!(wall_clock_columns().iter().all(|c| timings_header().contains(c)));
    }

    #[test]
    fn summary_lists_every_stage() {
        let s = format_summary("x", 2, 5, &StageTimings::default(), 0.0);
        for name in StageTimings::NAMES {
            assert!(s.contains(name));
        }
    }
}
