use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::codec::EncoderFamily;
use crate::error::{Error, Result};
use crate::interop::Method;
use crate::N_SUBBANDS;

/// Held-out mean SGCS of one (family, rank, method).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SgcsCell {
    pub family: EncoderFamily,
    /// 1-based eigenvector rank.
    pub rank: usize,
    pub method: Method,
    pub sgcs: f64,
}

/// Deployed system trained on `trained_on`, evaluated on `eval_scenario`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainRow {
    pub eval_scenario: String,
    pub trained_on: String,
    pub family: EncoderFamily,
    pub ml_capacity: f64,
    pub baseline_capacity: f64,
    pub ideal_capacity: f64,
    /// `(ml - baseline) / baseline`.
    pub capacity_gain: f64,
    pub ml_sgcs: f64,
    pub baseline_sgcs: f64,
}

/// Mean SGCS per sub-band and layer on one eval scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSeries {
    pub eval_scenario: String,
    pub family: EncoderFamily,
    /// `[layer][sub-band]`.
    pub ml: Vec<Vec<f64>>,
    pub baseline: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub families: Vec<EncoderFamily>,
    pub methods: Vec<Method>,
    pub n_layers: usize,
    pub cells: Vec<SgcsCell>,
    pub gains: Vec<GainRow>,
    pub traces: Vec<TraceSeries>,
}

impl ResultTable {
    pub fn cell(&self, family: EncoderFamily, rank: usize, method: Method) -> Option<f64> {
        self.cells
            .iter()
            .find(|c| c.family == family && c.rank == rank && c.method == method)
            .map(|c| c.sgcs)
    }

    /// Every configured cell is present, unique and within `[0, 1]`.
    pub fn validate(&self) -> Result<()> {
        for &family in &self.families {
            for &method in &self.methods {
                for rank in 1..=self.n_layers {
                    let n = self
                        .cells
                        .iter()
                        .filter(|c| c.family == family && c.rank == rank && c.method == method)
                        .count();
                    if n != 1 {
                        return Err(Error::InvalidInput(format!(
                            "{} cells for ({family}, rank {rank}, {method})",
                            if n == 0 { "no".to_string() } else { n.to_string() }
                        )));
                    }
                    let v = self.cell(family, rank, method).unwrap_or(f64::NAN);
                    if !(0.0..=1.0).contains(&v) {
                        return Err(Error::InvalidInput(format!("SGCS {v} for ({family}, rank {rank}, {method})")));
                    }
                }
            }
        }
        let extra = self.cells.iter().find(|c| {
            !self.families.contains(&c.family) || !self.methods.contains(&c.method) || !(1..=self.n_layers).contains(&c.rank)
        });
        if let Some(c) = extra {
            return Err(Error::InvalidInput(format!("unconfigured cell ({}, rank {}, {})", c.family, c.rank, c.method)));
        }
        for t in &self.traces {
            if !(1..=self.n_layers).contains(&t.ml.len())
                || t.baseline.len() != t.ml.len()
                || t.ml.iter().chain(&t.baseline).any(|l| l.len() != N_SUBBANDS) {
                return Err(Error::Shape(format!("trace for {} / {}", t.eval_scenario, t.family)));
            }
        }
        Ok(())
    }

    /// Mean over ranks for one family.
    pub fn family_mean(&self, family: EncoderFamily, method: Method) -> Option<f64> {
        let v: Option<Vec<f64>> = (1..=self.n_layers).map(|r| self.cell(family, r, method)).collect();
        v.map(|v| v.iter().sum::<f64>() / v.len() as f64)
    }

    /// Mean over families and ranks.
    pub fn method_average(&self, method: Method) -> Option<f64> {
        let v: Option<Vec<f64>> = self.families.iter().map(|&f| self.family_mean(f, method)).collect();
        v.map(|v| v.iter().sum::<f64>() / v.len() as f64)
    }

    /// `mean(a) - mean(b)` for one family.
    pub fn method_gap(&self, family: EncoderFamily, a: Method, b: Method) -> Option<f64> {
        Some(self.family_mean(family, a)? - self.family_mean(family, b)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(run_dir: &Path) -> Result<Self> {
        let path = run_dir.join(RESULT_FILE);
        let text = std::fs::read_to_string(&path)
            .map_err(|e| Error::InvalidInput(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}

pub const RESULT_FILE: &str = "result.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    /// Aligned columns.
    Txt,
    Csv,
}

impl ReportFormat {
    fn ext(self) -> &'static str {
        match self {
            ReportFormat::Txt => "txt",
            ReportFormat::Csv => "csv",
        }
    }
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "txt" => Ok(ReportFormat::Txt),
            "csv" => Ok(ReportFormat::Csv),
            _ => Err(Error::Config(format!("unknown report format {s:?} (txt or csv)"))),
        }
    }
}

fn render(rows: &[Vec<String>], format: ReportFormat) -> String {
    let mut out = String::new();
    match format {
        ReportFormat::Csv => {
            for r in rows {
                out.push_str(&r.join(","));
                out.push('\n');
            }
        }
        ReportFormat::Txt => {
            let ncol = rows.iter().map(Vec::len).max().unwrap_or(0);
            let widths: Vec<usize> =
                (0..ncol).map(|c| rows.iter().filter_map(|r| r.get(c)).map(String::len).max().unwrap_or(0)).collect();
            for r in rows {
                let line: Vec<String> = r.iter().zip(&widths).map(|(v, w)| format!("{v:<w$}")).collect();
                out.push_str(line.join("  ").trim_end());
                out.push('\n');
            }
        }
    }
    out
}

fn comment(format: ReportFormat, text: &str) -> String {
    match format {
        ReportFormat::Txt => format!("# {text}\n"),
        ReportFormat::Csv => String::new(),
    }
}

fn f4(v: f64) -> String {
    format!("{v:.4}")
}

/// Methods as columns, family x rank as rows, then the per-method average.
pub fn sgcs_table_text(table: &ResultTable, format: ReportFormat) -> Result<String> {
    table.validate()?;
    let mut rows = vec![std::iter::once("family".to_string())
        .chain(std::iter::once("rank".to_string()))
        .chain(table.methods.iter().map(|m| m.to_string()))
        .collect::<Vec<_>>()];
    for &f in &table.families {
        for rank in 1..=table.n_layers {
            let mut row = vec![f.to_string(), rank.to_string()];
            row.extend(table.methods.iter().map(|&m| f4(table.cell(f, rank, m).unwrap_or(f64::NAN))));
            rows.push(row);
        }
    }
    let mut avg = vec!["average".to_string(), String::new()];
    avg.extend(table.methods.iter().map(|&m| f4(table.method_average(m).unwrap_or(f64::NAN))));
    rows.push(avg);
    let mut out = comment(format, "held-out mean SGCS per eigenvector rank");
    out.push_str(&render(&rows, format));
    Ok(out)
}

pub fn gain_table_text(table: &ResultTable, format: ReportFormat) -> String {
    let mut rows = vec![[
        "eval_scenario",
        "trained_on",
        "family",
        "ml_capacity",
        "baseline_capacity",
        "ideal_capacity",
        "capacity_gain_pct",
        "ml_sgcs",
        "baseline_sgcs",
    ]
    .map(String::from)
    .to_vec()];
    for g in &table.gains {
        rows.push(vec![
            g.eval_scenario.clone(),
            g.trained_on.clone(),
            g.family.to_string(),
            f4(g.ml_capacity),
            f4(g.baseline_capacity),
            f4(g.ideal_capacity),
            format!("{:.2}", 100.0 * g.capacity_gain),
            f4(g.ml_sgcs),
            f4(g.baseline_sgcs),
        ]);
    }
    let mut out = comment(
        format,
        "capacity gain of ML feedback over the wideband Type-I baseline (bits/s/Hz, closed-loop capacity proxy; not an OTA throughput target)",
    );
    out.push_str(&render(&rows, format));
    out
}

/// One row per (layer, sub-band).
pub fn trace_text(trace: &TraceSeries, format: ReportFormat) -> String {
    let mut rows = vec![["layer", "subband", "ml_sgcs", "baseline_sgcs"].map(String::from).to_vec()];
    for (l, (ml, base)) in trace.ml.iter().zip(&trace.baseline).enumerate() {
        for (k, (a, b)) in ml.iter().zip(base).enumerate() {
            rows.push(vec![(l + 1).to_string(), k.to_string(), f4(*a), f4(*b)]);
        }
    }
    render(&rows, format)
}

/// Writes the SGCS table, the gain summary and one trace per
/// (eval scenario, family) into `dir`; returns the paths written.
pub fn emit_report(table: &ResultTable, dir: &Path, format: ReportFormat) -> Result<Vec<PathBuf>> {
    table.validate()?;
    std::fs::create_dir_all(dir)?;
    let ext = format.ext();
    let mut files = vec![
        (dir.join(format!("table1.{ext}")), sgcs_table_text(table, format)?),
        (dir.join(format!("gains.{ext}")), gain_table_text(table, format)),
    ];
    for t in &table.traces {
        files.push((dir.join(format!("trace_{}_{}.{ext}", t.eval_scenario, t.family)), trace_text(t, format)));
    }
    for (path, text) in &files {
        std::fs::write(path, text)?;
    }
    Ok(files.into_iter().map(|(p, _)| p).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellDelta {
    pub family: EncoderFamily,
    pub rank: usize,
    /// Method of the left and right side.
    pub method: (Method, Method),
    pub a: f64,
    pub b: f64,
    pub delta: f64,
    pub highlighted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunDiff {
    pub threshold: f64,
    pub cells: Vec<CellDelta>,
    pub max_abs_delta: f64,
}

impl RunDiff {
    pub fn highlighted(&self) -> impl Iterator<Item = &CellDelta> {
        self.cells.iter().filter(|c| c.highlighted)
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        for c in &self.cells {
            let mark = if c.highlighted { " *" } else { "" };
            let method = if c.method.0 == c.method.1 {
                c.method.0.to_string()
            } else {
                format!("{} vs {}", c.method.0, c.method.1)
            };
            let _ = writeln!(s, "{} rank {} {}: {:.4} -> {:.4} ({:+.4}){mark}", c.family, c.rank, method, c.a, c.b, c.delta);
        }
        let n = self.highlighted().count();
        let _ = writeln!(s, "max |delta| {:.4}; {n} cell(s) above {:.4}", self.max_abs_delta, self.threshold);
        s
    }
}

pub const DEFAULT_DIFF_THRESHOLD: f64 = 0.02;

type CellPair = (EncoderFamily, usize, (Method, Method), f64, f64);

fn diff(pairs: Vec<CellPair>, threshold: f64) -> RunDiff {
    let cells: Vec<CellDelta> = pairs
        .into_iter()
        .map(|(family, rank, method, a, b)| {
            let delta = b - a;
            CellDelta { family, rank, method, a, b, delta, highlighted: delta.abs() > threshold }
        })
        .collect();
    let max_abs_delta = cells.iter().map(|c| c.delta.abs()).fold(0.0, f64::max);
    RunDiff { threshold, cells, max_abs_delta }
}

/// Cell-wise `b - a` of two tables with the same schema.
pub fn compare_tables(a: &ResultTable, b: &ResultTable, threshold: f64) -> Result<RunDiff> {
    if a.families != b.families || a.methods != b.methods || a.n_layers != b.n_layers {
        return Err(Error::Malformed(format!(
            "schema mismatch: {:?}/{:?}/{} layers vs {:?}/{:?}/{} layers",
            a.families, a.methods, a.n_layers, b.families, b.methods, b.n_layers
        )));
    }
    a.validate()?;
    b.validate()?;
    let mut pairs = Vec::new();
    for &f in &a.families {
        for &m in &a.methods {
            for rank in 1..=a.n_layers {
                let (Some(x), Some(y)) = (a.cell(f, rank, m), b.cell(f, rank, m)) else {
                    unreachable!("validated tables are complete")
                };
                pairs.push((f, rank, (m, m), x, y));
            }
        }
    }
    Ok(diff(pairs, threshold))
}

/// Cell-wise `method b - method a` within one table.
pub fn compare_methods(table: &ResultTable, a: Method, b: Method, threshold: f64) -> Result<RunDiff> {
    table.validate()?;
    for m in [a, b] {
        if !table.methods.contains(&m) {
            return Err(Error::InvalidInput(format!("method {m} not in the table")));
        }
    }
    let mut pairs = Vec::new();
    for &f in &table.families {
        for rank in 1..=table.n_layers {
            let x = table.cell(f, rank, a).unwrap_or(f64::NAN);
            let y = table.cell(f, rank, b).unwrap_or(f64::NAN);
            pairs.push((f, rank, (a, b), x, y));
        }
    }
    Ok(diff(pairs, threshold))
}

/// Compares the `result.json` of two run directories.
pub fn compare_runs(dir_a: &Path, dir_b: &Path, threshold: f64) -> Result<RunDiff> {
    compare_tables(&ResultTable::load(dir_a)?, &ResultTable::load(dir_b)?, threshold)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> ResultTable {
        let family = EncoderFamily::DenseA;
        ResultTable {
            families: vec![family],
            methods: vec![Method::E2e],
            n_layers: 4,
            cells: (1..=4).map(|rank| SgcsCell { family, rank, method: Method::E2e, sgcs: 1.0 - 0.1 * rank as f64 }).collect(),
            gains: vec![GainRow {
                eval_scenario: "mixed".into(),
                trained_on: "mixed".into(),
                family,
                ml_capacity: 12.0,
                baseline_capacity: 10.0,
                ideal_capacity: 13.0,
                capacity_gain: 0.2,
                ml_sgcs: 0.8,
                baseline_sgcs: 0.5,
            }],
            traces: vec![TraceSeries {
                eval_scenario: "mixed".into(),
                family,
                ml: vec![vec![0.9; N_SUBBANDS]; 4],
                baseline: vec![vec![0.5; N_SUBBANDS]; 4],
            }],
        }
    }

    #[test]
    fn missing_cell_is_named() {
        let mut t = minimal();
        t.cells.remove(2);
        let err = t.validate().unwrap_err().to_string();
        assert!(err.contains("dense_a") && err.contains("rank 3") && err.contains("e2e"), "{err}");
        assert!(emit_report(&t, Path::new("/nonexistent"), ReportFormat::Csv).is_err());
    }

    #[test]
    fn out_of_range_cell_rejected() {
        let mut t = minimal();
        t.cells[0].sgcs = 1.5;
        assert!(t.validate().is_err());
    }

    #[test]
    fn emits_three_deterministic_files() {
        let dir = tempfile::tempdir().unwrap();
        let t = minimal();
        for format in [ReportFormat::Txt, ReportFormat::Csv] {
            let files = emit_report(&t, dir.path(), format).unwrap();
            assert_eq!(files.len(), 3);
            let first: Vec<String> = files.iter().map(|p| std::fs::read_to_string(p).unwrap()).collect();
            emit_report(&t, dir.path(), format).unwrap();
            let second: Vec<String> = files.iter().map(|p| std::fs::read_to_string(p).unwrap()).collect();
            assert_eq!(first, second);
        }
        let trace = std::fs::read_to_string(dir.path().join("trace_mixed_dense_a.csv")).unwrap();
        assert_eq!(trace.lines().count(), 1 + 70 * 4);
        let table = std::fs::read_to_string(dir.path().join("table1.csv")).unwrap();
        assert_eq!(table.lines().next().unwrap(), "family,rank,e2e");
        assert_eq!(table.lines().last().unwrap(), "average,,0.7500");
    }

    #[test]
    fn compare_identical_and_mismatched() {
        let t = minimal();
        let d = compare_tables(&t, &t, DEFAULT_DIFF_THRESHOLD).unwrap();
        assert_eq!(d.max_abs_delta, 0.0);
        assert_eq!(d.cells.len(), 4);
        let mut other = minimal();
        other.families = vec![EncoderFamily::SharedB];
        for c in &mut other.cells {
            c.family = EncoderFamily::SharedB;
        }
        assert!(matches!(compare_tables(&t, &other, 0.02), Err(Error::Malformed(_))));
        let mut shifted = minimal();
        shifted.cells[1].sgcs -= 0.05;
        let d = compare_tables(&t, &shifted, 0.02).unwrap();
        assert_eq!(d.highlighted().count(), 1);
        assert!((d.max_abs_delta - 0.05).abs() < 1e-12);
    }

    #[test]
    fn json_round_trip() {
        let t = minimal();
        assert_eq!(ResultTable::from_json(&t.to_json().unwrap()).unwrap(), t);
    }
}
