//! Plot bundles: a self-contained plotting script plus the data it reads.
//! No rendering happens here; the bundle is meant to be carried off-machine.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

use super::metrics::read_metrics_csv;

/// Columns that make sense as learning curves.
const CURVE_COLUMNS: &[&str] = &[
    "v_loss",
    "q_loss",
    "mu_loss",
    "pi_loss",
    "mean_q",
    "mean_v",
    "mean_mu_norm",
    "eval_return",
    "eval_score",
];

/// Copy the metrics files into `out_dir`, write an aggregated CSV (mean and
/// std per iteration across files) and a python script that renders one curve
/// per metric column with a shaded std band for multi-seed input.
pub fn emit_plots(metrics_files: &[PathBuf], out_dir: &Path) -> Result<Vec<PathBuf>> {
    if metrics_files.is_empty() {
        return Err(Error::invalid("no metrics files given"));
    }
    let tables = metrics_files
        .iter()
        .map(|p| read_metrics_csv(p))
        .collect::<Result<Vec<_>>>()?;
    let columns = &tables[0].columns;
    for (path, t) in metrics_files.iter().zip(&tables) {
        if &t.columns != columns {
            return Err(Error::invalid(format!(
                "column mismatch in {}",
                path.display()
            )));
        }
        if t.rows.is_empty() {
            return Err(Error::Parse {
                line: 2,
                msg: format!("{} has no data rows", path.display()),
            });
        }
    }
    fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();

    for (i, path) in metrics_files.iter().enumerate() {
        let dst = out_dir.join(format!("metrics_{i}.csv"));
        fs::copy(path, &dst)?;
        written.push(dst);
    }

    // Aggregate rows by iteration index across files. Missing cells (eval
    // columns off-schedule, absent losses) stay missing.
    let iter_col = tables[0]
        .column("iteration")
        .ok_or_else(|| Error::invalid("metrics files lack an iteration column"))?;
    let n_rows = tables.iter().map(|t| t.rows.len()).min().unwrap_or(0);
    let keep: Vec<(usize, &str)> = CURVE_COLUMNS
        .iter()
        .filter_map(|name| tables[0].column(name).map(|idx| (idx, *name)))
        .collect();

    let mut agg = String::from("iteration");
    for (_, name) in &keep {
        agg.push_str(&format!(",{name}_mean,{name}_std"));
    }
    agg.push('\n');
    for r in 0..n_rows {
        let iter_val = tables[0].rows[r][iter_col].unwrap_or(r as f64);
        agg.push_str(&format!("{iter_val}"));
        for (idx, _) in &keep {
            let vals: Vec<f64> = tables
                .iter()
                .filter_map(|t| t.rows[r][*idx])
                .collect();
            if vals.is_empty() {
                agg.push_str(",,");
            } else {
                let m = vals.iter().sum::<f64>() / vals.len() as f64;
                let s = if vals.len() < 2 {
                    0.0
                } else {
                    (vals.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / vals.len() as f64)
                        .sqrt()
                };
                agg.push_str(&format!(",{m},{s}"));
            }
        }
        agg.push('\n');
    }
    let agg_path = out_dir.join("aggregated.csv");
    fs::write(&agg_path, agg)?;
    written.push(agg_path);

    let script = r#"#!/usr/bin/env python3
"""Render learning curves from the bundled CSVs (mean with a std band)."""
import csv
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

HERE = os.path.dirname(os.path.abspath(__file__))


def load(path):
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    return rows


def series(rows, key):
    xs, ys = [], []
    for row in rows:
        if row.get(key):
            xs.append(float(row["iteration"]))
            ys.append(float(row[key]))
    return xs, ys


def main():
    rows = load(os.path.join(HERE, "aggregated.csv"))
    metrics = sorted(
        {k[: -len("_mean")] for k in rows[0] if k.endswith("_mean")}
    )
    for metric in metrics:
        xs, mean = series(rows, metric + "_mean")
        _, std = series(rows, metric + "_std")
        if not xs:
            continue
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.plot(xs, mean, label=metric)
        if std:
            lo = [m - s for m, s in zip(mean, std)]
            hi = [m + s for m, s in zip(mean, std)]
            ax.fill_between(xs, lo, hi, alpha=0.25)
        ax.set_xlabel("iteration")
        ax.set_ylabel(metric)
        ax.legend()
        fig.tight_layout()
        fig.savefig(os.path.join(HERE, metric + ".png"), dpi=150)
        plt.close(fig)
    print(f"rendered {len(metrics)} curves into {HERE}")


if __name__ == "__main__":
    main()
"#;
    let script_path = out_dir.join("plot.py");
    fs::write(&script_path, script)?;
    written.push(script_path);
    Ok(written)
}
