//! Per-round metric records, the CSV metric file format, and run summaries.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::{Error, Result};

pub const METRIC_HEADER: &str = "round,min_acc,avg_acc,max_acc,objective,dispersion";

/// One evaluated round: device test-accuracy spread, the global objective at
/// the average parameters, and the parameter dispersion (max distance of any
/// device from the mean parameter vector).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RoundMetrics {
    pub round: u64,
    pub min_acc: f64,
    pub avg_acc: f64,
    pub max_acc: f64,
    pub objective: f64,
    pub dispersion: f64,
}

/// Nine significant digits, fixed scientific form; decimal output is
/// bit-exact for a given value.
pub fn fmt_sig9(x: f64) -> String {
    format!("{x:.8e}")
}

pub struct MetricWriter {
    out: BufWriter<File>,
    path: PathBuf,
    last_round: Option<u64>,
}

impl MetricWriter {
    pub fn create(path: &Path) -> Result<Self> {
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
            }
        }
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        writeln!(out, "{METRIC_HEADER}").map_err(|e| Error::io(path, e))?;
        Ok(MetricWriter {
            out,
            path: path.to_path_buf(),
            last_round: None,
        })
    }

    pub fn append(&mut self, m: &RoundMetrics) -> Result<()> {
        debug_assert!(self.last_round.is_none_or(|r| m.round > r), "rounds must increase");
        self.last_round = Some(m.round);
        let mut line = String::with_capacity(96);
        let _ = write!(line, "{}", m.round);
        for v in [m.min_acc, m.avg_acc, m.max_acc, m.objective, m.dispersion] {
            let _ = write!(line, ",{}", fmt_sig9(v));
        }
        writeln!(self.out, "{line}").map_err(|e| Error::io(&self.path, e))
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush().map_err(|e| Error::io(&self.path, e))
    }
}

pub fn read_metrics(path: &Path) -> Result<Vec<RoundMetrics>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut rows = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        let parse_err = |detail: String| Error::MetricParse {
            path: path.to_path_buf(),
            line: lineno,
            detail,
        };
        if lineno == 1 {
            if line.trim() != METRIC_HEADER {
                return Err(parse_err(format!("expected header '{METRIC_HEADER}'")));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(parse_err(format!("expected 6 fields, got {}", fields.len())));
        }
        let round = fields[0]
            .parse::<u64>()
            .map_err(|e| parse_err(format!("bad round index '{}': {e}", fields[0])))?;
        let mut vals = [0.0f64; 5];
        for (slot, raw) in vals.iter_mut().zip(&fields[1..]) {
            *slot = raw
                .parse::<f64>()
                .map_err(|e| parse_err(format!("bad numeric field '{raw}': {e}")))?;
        }
        rows.push(RoundMetrics {
            round,
            min_acc: vals[0],
            avg_acc: vals[1],
            max_acc: vals[2],
            objective: vals[3],
            dispersion: vals[4],
        });
    }
    Ok(rows)
}

/// First evaluated round whose minimum device accuracy reached `threshold`.
pub fn rounds_to_threshold(rows: &[RoundMetrics], threshold: f64) -> Option<u64> {
    rows.iter().find(|m| m.min_acc >= threshold).map(|m| m.round)
}

/// Comparison table across runs plus merged series output for plotting.
pub struct Summary {
    pub rows: Vec<SummaryRow>,
    pub threshold: f64,
}

pub struct SummaryRow {
    pub name: String,
    pub rounds_to_threshold: Option<u64>,
    pub last_round: u64,
    pub final_min_acc: f64,
    pub final_avg_acc: f64,
}

pub fn summarize(files: &[PathBuf], threshold: f64) -> Result<Summary> {
    if files.is_empty() {
        return Err(Error::EmptyInput { op: "summarize" });
    }
    let mut rows = Vec::with_capacity(files.len());
    for path in files {
        let metrics = read_metrics(path)?;
        let last = metrics.last().copied().ok_or_else(|| Error::MetricParse {
            path: path.clone(),
            line: 1,
            detail: "no metric records".into(),
        })?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        rows.push(SummaryRow {
            name,
            rounds_to_threshold: rounds_to_threshold(&metrics, threshold),
            last_round: last.round,
            final_min_acc: last.min_acc,
            final_avg_acc: last.avg_acc,
        });
    }
    Ok(Summary { rows, threshold })
}

impl std::fmt::Display for Summary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name_w = self
            .rows
            .iter()
            .map(|r| r.name.len())
            .max()
            .unwrap_or(4)
            .max(4);
        writeln!(
            f,
            "{:<name_w$}  {:>10}  {:>10}  {:>10}  {:>10}",
            "run",
            format!("rounds@{:.0}%", self.threshold * 100.0),
            "last round",
            "final min",
            "final avg",
        )?;
        for r in &self.rows {
            let rounds = r
                .rounds_to_threshold
                .map(|x| x.to_string())
                .unwrap_or_else(|| "-".to_string());
            writeln!(
                f,
                "{:<name_w$}  {:>10}  {:>10}  {:>10.4}  {:>10.4}",
                r.name, rounds, r.last_round, r.final_min_acc, r.final_avg_acc,
            )?;
        }
        Ok(())
    }
}

/// Merge several metric files into one long-format CSV keyed by run name.
pub fn write_series(files: &[PathBuf], out_path: &Path) -> Result<()> {
    if files.is_empty() {
        return Err(Error::EmptyInput { op: "write_series" });
    }
    let mut out = BufWriter::new(File::create(out_path).map_err(|e| Error::io(out_path, e))?);
    writeln!(out, "run,{METRIC_HEADER}").map_err(|e| Error::io(out_path, e))?;
    for path in files {
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        for m in read_metrics(path)? {
            writeln!(
                out,
                "{name},{},{},{},{},{},{}",
                m.round,
                fmt_sig9(m.min_acc),
                fmt_sig9(m.avg_acc),
                fmt_sig9(m.max_acc),
                fmt_sig9(m.objective),
                fmt_sig9(m.dispersion),
            )
            .map_err(|e| Error::io(out_path, e))?;
        }
    }
    out.flush().map_err(|e| Error::io(out_path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn record(round: u64, min: f64) -> RoundMetrics {
        RoundMetrics {
            round,
            min_acc: min,
            avg_acc: min + 0.01,
            max_acc: min + 0.02,
            objective: 2.0 - min,
            dispersion: 1e-3 / round as f64,
        }
    }

    #[test]
    fn roundtrip_is_exact() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let rows = vec![record(1, 0.5), record(2, 0.9), record(3, 0.971)];
        let mut w = MetricWriter::create(&path).unwrap();
        for r in &rows {
            w.append(r).unwrap();
        }
        w.finish().unwrap();
        let back = read_metrics(&path).unwrap();
        assert_eq!(back.len(), 3);
        for (a, b) in rows.iter().zip(&back) {
            assert_eq!(a.round, b.round);
            // 9 significant digits survive the roundtrip at metric scales.
            assert!((a.min_acc - b.min_acc).abs() < 1e-8);
            assert!((a.dispersion - b.dispersion).abs() < 1e-10);
        }
    }

    #[test]
    fn threshold_detection_and_monotonicity() {
        let rows = vec![record(1, 0.5), record(2, 0.9), record(3, 0.971), record(4, 0.98)];
        assert_eq!(rounds_to_threshold(&rows, 0.97), Some(3));
        assert_eq!(rounds_to_threshold(&rows, 0.0), Some(1));
        assert_eq!(rounds_to_threshold(&rows, 0.999), None);
        // Monotone: a higher threshold never crosses earlier.
        let mut prev = Some(1);
        for t in [0.1, 0.5, 0.9, 0.95, 0.97, 0.975, 0.99] {
            let r = rounds_to_threshold(&rows, t);
            if let (Some(a), Some(b)) = (prev, r) {
                assert!(b >= a);
            }
            if prev.is_none() {
                assert!(r.is_none());
            }
            prev = r;
        }
    }

    #[test]
    fn summary_renders_dash_for_unconverged() {
        let dir = tempdir().unwrap();
        let good = dir.path().join("fast_run.csv");
        let slow = dir.path().join("slow_run.csv");
        for (path, top) in [(&good, 0.99), (&slow, 0.8)] {
            let mut w = MetricWriter::create(path).unwrap();
            w.append(&record(1, 0.5)).unwrap();
            w.append(&record(2, top)).unwrap();
            w.finish().unwrap();
        }
        let s = summarize(&[good, slow], 0.97).unwrap();
        let text = s.to_string();
        assert!(text.contains("fast_run"));
        assert!(text.lines().any(|l| l.contains("slow_run") && l.contains(" - ") || l.trim_end().ends_with("-") || l.contains("  -")), "table:\n{text}");
        assert_eq!(s.rows[0].rounds_to_threshold, Some(2));
        assert_eq!(s.rows[1].rounds_to_threshold, None);
    }

    #[test]
    fn summarize_requires_input() {
        assert!(matches!(summarize(&[], 0.97), Err(Error::EmptyInput { .. })));
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, format!("{METRIC_HEADER}\n1,0.1,0.2,0.3,2.0,0.0\n2,oops,0.2,0.3,2.0,0.0\n")).unwrap();
        match read_metrics(&path) {
            Err(Error::MetricParse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
        std::fs::write(&path, "wrong,header\n").unwrap();
        match read_metrics(&path) {
            Err(Error::MetricParse { line, .. }) => assert_eq!(line, 1),
            other => panic!("expected header error, got {other:?}"),
        }
    }

    #[test]
    fn series_merge_has_run_column() {
        let dir = tempdir().unwrap();
        let a = dir.path().join("a.csv");
        let mut w = MetricWriter::create(&a).unwrap();
        w.append(&record(1, 0.4)).unwrap();
        w.finish().unwrap();
        let out = dir.path().join("series.csv");
        write_series(&[a], &out).unwrap();
        let text = std::fs::read_to_string(&out).unwrap();
        assert!(text.starts_with("run,round,"));
        assert!(text.lines().nth(1).unwrap().starts_with("a,1,"));
    }
}
