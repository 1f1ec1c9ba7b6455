use std::collections::BTreeMap;
use std::io::Write;

use serde::Serialize;

use crate::Variant;

use super::{mean_std, ModelKind, RunResult};

pub const REPORT_COLUMNS: [&str; 7] = ["asset", "model", "variant", "MAE", "MSE", "CORR", "MAE_std"];

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReportRow {
    pub asset: String,
    pub model: ModelKind,
    pub variant: Variant,
    pub mae: f64,
    pub mse: f64,
    pub corr: f64,
    pub mae_std: f64,
    /// Seeds (or member rows, for averages) behind the row.
    pub count: usize,
}

/// Per-asset test metrics averaged over seeds, followed by top-k averages.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<ReportRow>,
}

/// Builds the report for `assets` in the given order.
///
/// For each `k` in `tops` with `k <= assets.len()` an extra row per
/// (model, variant) named `top<k>` averages the first `k` asset rows; it
/// is omitted when any of those assets lacks results.
pub fn build_report(results: &[RunResult], assets: &[String], tops: &[usize]) -> EvalReport {
    let mut cells: BTreeMap<(usize, ModelKind, Variant), Vec<&RunResult>> = BTreeMap::new();
    for r in results {
        if let Some(pos) = assets.iter().position(|a| *a == r.manifest.asset) {
            cells.entry((pos, r.manifest.model, r.manifest.variant)).or_default().push(r);
        }
    }
    let mut rows = Vec::new();
    let mut by_pair: BTreeMap<(ModelKind, Variant), BTreeMap<usize, usize>> = BTreeMap::new();
    for ((pos, model, variant), runs) in &cells {
        let col = |f: fn(&RunResult) -> f64| runs.iter().map(|r| f(r)).collect::<Vec<_>>();
        let (mae, mae_std) = mean_std(&col(|r| r.test.mae));
        let (mse, _) = mean_std(&col(|r| r.test.mse));
        let (corr, _) = mean_std(&col(|r| r.test.corr));
        by_pair.entry((*model, *variant)).or_default().insert(*pos, rows.len());
        rows.push(ReportRow {
            asset: assets[*pos].clone(),
            model: *model,
            variant: *variant,
            mae,
            mse,
            corr,
            mae_std,
            count: runs.len(),
        });
    }
    let mut extra = Vec::new();
    for &k in tops {
        if k == 0 || k > assets.len() {
            continue;
        }
        for ((model, variant), members) in &by_pair {
            let idx: Vec<usize> = (0..k).filter_map(|p| members.get(&p).copied()).collect();
            if idx.len() != k {
                continue;
            }
            let avg = |f: fn(&ReportRow) -> f64| idx.iter().map(|&i| f(&rows[i])).sum::<f64>() / k as f64;
            extra.push(ReportRow {
                asset: format!("top{k}"),
                model: *model,
                variant: *variant,
                mae: avg(|r| r.mae),
                mse: avg(|r| r.mse),
                corr: avg(|r| r.corr),
                mae_std: avg(|r| r.mae_std),
                count: k,
            });
        }
    }
    rows.extend(extra);
    EvalReport { rows }
}

impl EvalReport {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(REPORT_COLUMNS)?;
        for r in &self.rows {
            w.write_record([
                r.asset.clone(),
                r.model.to_string(),
                r.variant.to_string(),
                r.mae.to_string(),
                r.mse.to_string(),
                r.corr.to_string(),
                r.mae_std.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Fixed-width table with four decimals.
    pub fn to_text(&self) -> String {
        let cells: Vec<[String; 7]> = self
            .rows
            .iter()
            .map(|r| {
                [
                    r.asset.clone(),
                    r.model.to_string(),
                    r.variant.to_string(),
                    format!("{:.4}", r.mae),
                    format!("{:.4}", r.mse),
                    format!("{:.4}", r.corr),
                    format!("{:.4}", r.mae_std),
                ]
            })
            .collect();
        let mut widths = REPORT_COLUMNS.map(str::len);
        for row in &cells {
            for (w, c) in widths.iter_mut().zip(row) {
                *w = (*w).max(c.len());
            }
        }
        let mut out = String::new();
        let line = |out: &mut String, row: &[String]| {
            for (i, (c, w)) in row.iter().zip(widths).enumerate() {
                if i < 3 {
                    out.push_str(&format!("{c:<w$}"));
                } else {
                    out.push_str(&format!("{c:>w$}"));
                }
                out.push_str(if i + 1 < row.len() { "  " } else { "\n" });
            }
        };
        line(&mut out, &REPORT_COLUMNS.map(String::from));
        let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
        line(&mut out, &rule);
        for row in &cells {
            line(&mut out, row);
        }
        out
    }
}
