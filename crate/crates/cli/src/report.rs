//! Machine-readable outputs: one JSON report per run and a plot-ready CSV
//! table. Numeric CSV columns carry 17 significant digits so repeated runs
//! are byte-identical and values round-trip.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use driftfem::linsolve::SolveStats;
use driftfem::pipeline::{ConstantsReport, SolutionNorms, TransformResult, WeightResult};
use driftfem::verify::CheckReport;

/// Top-level report object. Every key is always present; absent values are
/// explicit nulls with a reason recorded where the library supplies one.
#[derive(Serialize)]
pub struct Report {
    pub command: String,
    pub constants: Option<ConstantsReport>,
    pub solution_norms: Option<SolutionNorms>,
    pub solve_stats: Option<SolveStats>,
    pub weight: Option<WeightSummary>,
    pub transform: Option<TransformSummary>,
    pub checks: Vec<CheckReport>,
    pub warnings: Vec<String>,
    /// Set for d = 2 runs: the derived constants assume d >= 3.
    pub outside_regime: Option<String>,
}

#[derive(Serialize)]
pub struct WeightSummary {
    pub harnack_ratio: f64,
    pub min_rho: f64,
    pub max_rho: f64,
    pub x1: Vec<f64>,
    pub solve_stats: SolveStats,
}

impl WeightSummary {
    pub fn from_weight(weight: &WeightResult, dim: usize) -> WeightSummary {
        WeightSummary {
            harnack_ratio: weight.harnack_ratio,
            min_rho: weight.min_rho,
            max_rho: weight.max_rho,
            x1: weight.x1_point[..dim].to_vec(),
            solve_stats: weight.stats.clone(),
        }
    }
}

#[derive(Serialize)]
pub struct TransformSummary {
    pub divfree_residual: f64,
}

impl TransformSummary {
    pub fn from_transform(t: &TransformResult) -> TransformSummary {
        TransformSummary {
            divfree_residual: t.divfree_residual,
        }
    }
}

impl Report {
    pub fn new(command: &str) -> Report {
        Report {
            command: command.to_string(),
            constants: None,
            solution_norms: None,
            solve_stats: None,
            weight: None,
            transform: None,
            checks: Vec::new(),
            warnings: Vec::new(),
            outside_regime: None,
        }
    }

    pub fn mark_regime(&mut self, dim: usize) {
        if dim < 3 {
            self.outside_regime =
                Some("d = 2 run: the derived constants assume d >= 3".to_string());
        }
    }

    pub fn all_checks_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// A CSV table: fixed header, one row per level/epsilon/theta, CRLF line
/// endings, 17-significant-digit floats.
pub struct CsvTable {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

pub enum Cell {
    Text(String),
    Number(f64),
    Integer(i64),
    Flag(bool),
}

pub fn number(v: f64) -> Cell {
    Cell::Number(v)
}

impl CsvTable {
    pub fn new(header: &[&str]) -> CsvTable {
        CsvTable {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, cells: Vec<Cell>) {
        assert_eq!(cells.len(), self.header.len(), "row width mismatch");
        self.rows.push(cells.into_iter().map(render_cell).collect());
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        write_record(&mut out, &self.header);
        for row in &self.rows {
            write_record(&mut out, row);
        }
        out
    }
}

fn render_cell(cell: Cell) -> String {
    match cell {
        Cell::Text(s) => s,
        Cell::Number(v) => format!("{v:.16e}"),
        Cell::Integer(v) => format!("{v}"),
        Cell::Flag(b) => if b { "true" } else { "false" }.to_string(),
    }
}

fn write_record(out: &mut Vec<u8>, fields: &[String]) {
    for (i, field) in fields.iter().enumerate() {
        if i > 0 {
            out.push(b',');
        }
        if field.contains([',', '"', '\n', '\r']) {
            out.push(b'"');
            out.extend_from_slice(field.replace('"', "\"\"").as_bytes());
            out.push(b'"');
        } else {
            out.extend_from_slice(field.as_bytes());
        }
    }
    out.extend_from_slice(b"\r\n");
}

/// Resolve an output path against the directory override environment
/// variable: when set, outputs land there under their original file name.
pub fn resolve_output(path: &Path) -> PathBuf {
    match std::env::var_os("DRIFTFEM_OUT_DIR") {
        Some(dir) => PathBuf::from(dir).join(path.file_name().unwrap_or_default()),
        None => path.to_path_buf(),
    }
}

pub fn write_report(path: &Path, report: &Report) -> std::io::Result<PathBuf> {
    let path = resolve_output(path);
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let mut file = fs::File::create(&path)?;
    let json = serde_json::to_string_pretty(report).expect("report serialization");
    file.write_all(json.as_bytes())?;
    file.write_all(b"\n")?;
    Ok(path)
}

pub fn write_csv(path: &Path, table: &CsvTable) -> std::io::Result<PathBuf> {
    let path = resolve_output(path);
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    fs::write(&path, table.to_bytes())?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_is_rfc4180_with_roundtrip_floats() {
        let mut table = CsvTable::new(&["h", "n", "measured", "passed"]);
        table.push(vec![
            number(0.125),
            Cell::Integer(8),
            number(1.0 / 3.0),
            Cell::Flag(true),
        ]);
        let bytes = table.to_bytes();
        let text = String::from_utf8(bytes).unwrap();
        assert!(text.ends_with("\r\n"));
        let lines: Vec<&str> = text.trim_end().split("\r\n").collect();
        assert_eq!(lines.len(), 2);
        let third: f64 = lines[1].split(',').nth(2).unwrap().parse().unwrap();
        assert_eq!(third, 1.0 / 3.0);
    }

    #[test]
    fn quoting_escapes_embedded_commas() {
        let mut table = CsvTable::new(&["name", "value"]);
        table.push(vec![Cell::Text("a,b\"c".to_string()), number(1.0)]);
        let text = String::from_utf8(table.to_bytes()).unwrap();
        assert!(text.contains("\"a,b\"\"c\""));
    }
}
