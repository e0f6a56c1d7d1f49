//! Step-metrics CSV: one row per training iteration, evaluation columns
//! filled only at evaluation points. Formatting uses the shortest round-trip
//! float representation, so identical runs produce byte-identical files.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::learner::StepMetrics;

pub const METRICS_HEADER: &str =
    "iteration,v_loss,q_loss,mu_loss,pi_loss,mean_q,mean_v,mean_mu_norm,eval_return,eval_score";

pub struct MetricsWriter {
    out: BufWriter<File>,
}

impl MetricsWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let mut out = BufWriter::new(File::create(path)?);
        writeln!(out, "{METRICS_HEADER}")?;
        Ok(MetricsWriter { out })
    }

    pub fn write_step(&mut self, m: &StepMetrics, eval: Option<(f64, f64)>) -> Result<()> {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        writeln!(
            self.out,
            "{},{},{},{},{},{},{},{},{},{}",
            m.iteration,
            m.v_loss,
            m.q_loss,
            opt(m.mu_loss),
            opt(m.pi_loss),
            m.mean_q,
            m.mean_v,
            m.mean_mu_norm,
            opt(eval.map(|e| e.0)),
            opt(eval.map(|e| e.1)),
        )?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush()?;
        Ok(())
    }
}

/// Parsed metrics file: header names plus one row per iteration; missing
/// fields are `None`.
#[derive(Debug, Clone)]
pub struct MetricsTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Option<f64>>>,
}

impl MetricsTable {
    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }
}

/// Parse a metrics CSV, reporting malformed content with its line number
/// (1-based, header is line 1).
pub fn read_metrics_csv(path: &Path) -> Result<MetricsTable> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(Error::Parse {
        line: 1,
        msg: "empty metrics file".to_string(),
    })?;
    let columns: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
    if columns.is_empty() || columns.iter().any(|c| c.is_empty()) {
        return Err(Error::Parse {
            line: 1,
            msg: "malformed header".to_string(),
        });
    }
    let mut rows = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != columns.len() {
            return Err(Error::Parse {
                line: idx + 1,
                msg: format!(
                    "expected {} fields, found {}",
                    columns.len(),
                    fields.len()
                ),
            });
        }
        let mut row = Vec::with_capacity(fields.len());
        for f in fields {
            let f = f.trim();
            if f.is_empty() {
                row.push(None);
            } else {
                let v: f64 = f.parse().map_err(|_| Error::Parse {
                    line: idx + 1,
                    msg: format!("not a number: '{f}'"),
                })?;
                row.push(Some(v));
            }
        }
        rows.push(row);
    }
    Ok(MetricsTable { columns, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn fake_step(iter: u64) -> StepMetrics {
        StepMetrics {
            iteration: iter,
            v_loss: 0.5 / (iter + 1) as f64,
            q_loss: 1.25,
            mu_loss: if iter % 2 == 0 { Some(-0.125) } else { None },
            pi_loss: None,
            mean_q: -3.5,
            mean_v: -3.25,
            mean_mu_norm: 0.0625,
        }
    }

    #[test]
    fn write_read_roundtrip() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let mut w = MetricsWriter::create(&path).unwrap();
        for i in 0..5 {
            let eval = (i == 4).then_some((12.5, 87.5));
            w.write_step(&fake_step(i), eval).unwrap();
        }
        w.finish().unwrap();
        let table = read_metrics_csv(&path).unwrap();
        assert_eq!(table.rows.len(), 5);
        let score_col = table.column("eval_score").unwrap();
        assert_eq!(table.rows[4][score_col], Some(87.5));
        assert_eq!(table.rows[3][score_col], None);
        let mu_col = table.column("mu_loss").unwrap();
        assert_eq!(table.rows[1][mu_col], None);
        assert_eq!(table.rows[2][mu_col], Some(-0.125));
    }

    #[test]
    fn malformed_rows_name_the_line() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "a,b\n1,2\n3\n").unwrap();
        match read_metrics_csv(&path) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
        std::fs::write(&path, "a,b\n1,x\n").unwrap();
        match read_metrics_csv(&path) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn empty_file_is_a_parse_error() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("empty.csv");
        std::fs::write(&path, "").unwrap();
        assert!(matches!(
            read_metrics_csv(&path),
            Err(Error::Parse { line: 1, .. })
        ));
    }
}
