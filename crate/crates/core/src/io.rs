//! Artifact writers. Every float in a CSV is written with 17 significant
//! digits so identical runs give byte-identical files.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::analysis::StabilitySweep;
use crate::control::{SolveReport, TraceRecord};
use crate::fp::{LogDensityRecord, MarginalFlow};
use crate::hjb::{Multiplier, ValueField};
use crate::model::SpaceTimeGrid;
use crate::particles::{GibbsRow, ParticleEnsemble};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum IoError {
    #[error("cannot write {path}: {message}")]
    Write { path: PathBuf, message: String },
    #[error("cannot read {path}: {message}")]
    Read { path: PathBuf, message: String },
    #[error("{path} line {line}: {message}")]
    Format { path: PathBuf, line: usize, message: String },
}

/// 17 significant digits.
pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

/// Collects rows and writes them in one go.
pub struct Csv {
    text: String,
}

impl Csv {
    pub fn new(header: &[&str]) -> Csv {
        Csv { text: header.join(",") + "\n" }
    }

    pub fn row(&mut self, fields: &[String]) {
        self.text.push_str(&fields.join(","));
        self.text.push('\n');
    }

    pub fn into_string(self) -> String {
        self.text
    }

    pub fn write(self, path: &Path) -> Result<(), IoError> {
        write_text(path, &self.text)
    }
}

pub fn write_text(path: &Path, text: &str) -> Result<(), IoError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| IoError::Write { path: dir.to_path_buf(), message: e.to_string() })?;
    }
    std::fs::write(path, text).map_err(|e| IoError::Write { path: path.to_path_buf(), message: e.to_string() })
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| IoError::Write { path: path.to_path_buf(), message: e.to_string() })?;
    write_text(path, &(text + "\n"))
}

pub fn flow_csv(flow: &MarginalFlow) -> Csv {
    let g = &flow.grid;
    let mut csv = Csv::new(&["t", "x", "density"]);
    for (k, row) in flow.densities.iter().enumerate() {
        for (i, d) in row.iter().enumerate() {
            csv.row(&[num(g.t(k)), num(g.x(i)), num(*d)]);
        }
    }
    csv
}

pub fn value_csv(v: &ValueField) -> Csv {
    let g = &v.grid;
    let mut csv = Csv::new(&["t", "x", "phi", "grad_phi"]);
    for k in 0..=g.nt {
        for i in 0..g.nx {
            csv.row(&[num(g.t(k)), num(g.x(i)), num(v.phi[k][i]), num(v.grad[k][i])]);
        }
    }
    csv
}

/// Interior density per time cell, reported at the cell midpoint.
pub fn multiplier_csv(lambda: &Multiplier, grid: &SpaceTimeGrid) -> Csv {
    let dt = grid.dt();
    let mut csv = Csv::new(&["t", "lambda_density"]);
    for (k, l) in lambda.interior.iter().enumerate() {
        csv.row(&[num(grid.t(k) + 0.5 * dt), num(*l)]);
    }
    csv
}

pub fn atoms_csv(lambda: &Multiplier, grid: &SpaceTimeGrid) -> Csv {
    let mut csv = Csv::new(&["atom", "t", "mass"]);
    csv.row(&["atom0".into(), num(0.0), num(lambda.atom0)]);
    csv.row(&["atomT".into(), num(grid.t_final), num(lambda.atom_t)]);
    csv
}

pub fn trace_csv(trace: &[TraceRecord]) -> Csv {
    let mut csv = Csv::new(&["iteration", "violation", "slackness", "kkt_residual", "dual_step", "value", "accepted"]);
    for r in trace {
        csv.row(&[
            r.iteration.to_string(),
            num(r.violation),
            num(r.slackness),
            num(r.kkt_residual),
            num(r.dual_step),
            num(r.value),
            r.accepted.to_string(),
        ]);
    }
    csv
}

pub fn stability_csv(sweep: &StabilitySweep) -> Csv {
    let mut csv = Csv::new(&["epsilon", "entropy_gap", "tv_sup", "w1_sup", "multiplier_l1", "control_sup"]);
    for r in &sweep.records {
        csv.row(&[num(r.epsilon), num(r.entropy_gap), num(r.tv_sup), num(r.w1_sup), num(r.multiplier_l1), num(r.control_sup)]);
    }
    csv
}

pub fn ensemble_csv(e: &ParticleEnsemble) -> Csv {
    let mut csv = Csv::new(&["t", "particle_id", "x", "log_weight"]);
    for (k, row) in e.positions.iter().enumerate() {
        for (p, x) in row.iter().enumerate() {
            csv.row(&[num(e.times[k]), p.to_string(), num(*x), num(e.log_weights[p])]);
        }
    }
    csv
}

pub fn gibbs_csv(rows: &[GibbsRow]) -> Csv {
    let mut csv = Csv::new(&["N", "probe_t", "W1", "acceptance_rate", "seed"]);
    for r in rows {
        csv.row(&[r.n.to_string(), num(r.probe_t), num(r.w1), num(r.acceptance_rate), r.seed.to_string()]);
    }
    csv
}

pub fn log_density_csv(records: &[LogDensityRecord]) -> Csv {
    let mut csv = Csv::new(&["t", "entropy", "score2", "score4", "hess2", "third2", "core_lo", "core_hi"]);
    for r in records {
        csv.row(&[num(r.t), num(r.entropy), num(r.score2), num(r.score4), num(r.hess2), num(r.third2), num(r.core_lo), num(r.core_hi)]);
    }
    csv
}

/// Writes the flow, value field, multiplier and trace of a solve into `dir`
/// and returns the paths written.
pub fn write_report(dir: &Path, report: &SolveReport) -> Result<Vec<PathBuf>, IoError> {
    let g = &report.flow.grid;
    let files = [
        ("flow.csv", flow_csv(&report.flow)),
        ("value.csv", value_csv(&report.value_field)),
        ("multiplier.csv", multiplier_csv(&report.lambda, g)),
        ("multiplier_atoms.csv", atoms_csv(&report.lambda, g)),
        ("trace.csv", trace_csv(&report.trace)),
    ];
    let mut out = Vec::new();
    for (name, csv) in files {
        let p = dir.join(name);
        csv.write(&p)?;
        out.push(p);
    }
    let p = dir.join("report.json");
    write_json(&p, &ReportSummary::from(report))?;
    out.push(p);
    Ok(out)
}

/// Scalar part of a solve, for report.json.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ReportSummary {
    pub optimal_value: f64,
    pub converged: bool,
    pub iterations: usize,
    pub fixed_point_iterations: usize,
    pub constraint_violation: f64,
    pub slackness_residual: f64,
    pub kkt_residual: f64,
    pub atom0: f64,
    pub interior_mass: f64,
    pub atom_t: f64,
    pub initial_law: crate::control::InitialLawPolicy,
    pub qualification_warnings: Vec<String>,
}

impl From<&SolveReport> for ReportSummary {
    fn from(r: &SolveReport) -> Self {
        ReportSummary {
            optimal_value: r.optimal_value,
            converged: r.converged,
            iterations: r.iterations,
            fixed_point_iterations: r.fixed_point_iterations,
            constraint_violation: r.constraint_violation,
            slackness_residual: r.slackness_residual,
            kkt_residual: r.kkt_residual,
            atom0: r.lambda.atom0,
            interior_mass: r.lambda.interior_mass(r.flow.grid.dt()),
            atom_t: r.lambda.atom_t,
            initial_law: r.initial_law,
            qualification_warnings: r.qualification_warnings.clone(),
        }
    }
}

/// Reads a grid-valued column (`t`, `x`, then the requested column index)
/// from a CSV written by this module into `(nt + 1) x nx` rows.
pub fn read_grid_csv(path: &Path, column: usize, grid: &SpaceTimeGrid) -> Result<Vec<Vec<f64>>, IoError> {
    let text = std::fs::read_to_string(path).map_err(|e| IoError::Read { path: path.to_path_buf(), message: e.to_string() })?;
    let mut values = Vec::with_capacity((grid.nt + 1) * grid.nx);
    for (n, line) in text.lines().enumerate().skip(1) {
        let field = line.split(',').nth(column).ok_or_else(|| IoError::Format {
            path: path.to_path_buf(),
            line: n + 1,
            message: format!("missing column {column}"),
        })?;
        values.push(field.trim().parse::<f64>().map_err(|e| IoError::Format { path: path.to_path_buf(), line: n + 1, message: e.to_string() })?);
    }
    if values.len() != (grid.nt + 1) * grid.nx {
        return Err(IoError::Format {
            path: path.to_path_buf(),
            line: 0,
            message: format!("expected {} rows for the config grid, found {}", (grid.nt + 1) * grid.nx, values.len()),
        });
    }
    Ok(values.chunks(grid.nx).map(|c| c.to_vec()).collect())
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub tool_version: String,
    pub wall_time_seconds: f64,
    pub outputs: Vec<String>,
}

/// Hex SHA-256 of the config bytes.
pub fn config_hash(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Gnuplot script plotting the stability columns against ε on log axes.
pub fn sweep_plot_script(csv_name: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "set datafile separator ','");
    let _ = writeln!(s, "set logscale xy");
    let _ = writeln!(s, "set key left top");
    let _ = writeln!(s, "set xlabel 'epsilon'");
    let _ = writeln!(s, "set terminal pngcairo size 900,600");
    let _ = writeln!(s, "set output 'stability.png'");
    let cols = ["entropy_gap", "tv_sup", "w1_sup", "multiplier_l1", "control_sup"];
    let parts: Vec<String> = cols
        .iter()
        .enumerate()
        .map(|(i, c)| format!("'{csv_name}' using 1:{} skip 1 with linespoints title '{c}'", i + 2))
        .collect();
    let _ = writeln!(s, "plot {}", parts.join(", \\\n     "));
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_have_seventeen_digits() {
        assert_eq!(num(0.1), "1.0000000000000001e-1");
        assert_eq!(num(0.1).parse::<f64>().unwrap(), 0.1);
        assert_eq!(num(-2.0), "-2.0000000000000000e0");
    }

    #[test]
    fn hash_changes_with_content() {
        assert_eq!(config_hash(b"a"), config_hash(b"a"));
        assert_ne!(config_hash(b"a"), config_hash(b"b"));
        assert_eq!(config_hash(b"").len(), 64);
    }

    #[test]
    fn flow_round_trip() {
        let g = SpaceTimeGrid::new(-1.0, 1.0, 8, 1.0, 8).unwrap();
        let mu: Vec<f64> = (0..8).map(|i| 0.5 + 0.01 * i as f64).collect();
        let flow = MarginalFlow::constant(g, &mu);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("flow.csv");
        flow_csv(&flow).write(&p).unwrap();
        let back = read_grid_csv(&p, 2, &g).unwrap();
        assert_eq!(back, flow.densities);
    }
}
