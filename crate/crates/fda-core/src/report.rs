//! Run outputs and run-to-run comparison.
//!
//! A run writes `metrics.csv` (one row per K) and `js_report.json` (group
//! click-distribution divergences). `compare` lines two metrics files up
//! side by side with absolute and relative deltas.

use serde::{Deserialize, Serialize};

use crate::backbone::EmbeddingTable;
use crate::dataset::InteractionDataset;
use crate::metrics::{self, TopKLists};
use crate::trainer::KMetrics;
use crate::{FdaError, Result};

pub fn metrics_to_csv(per_k: &[KMetrics]) -> String {
    let mut out = String::from("k,hr,ndcg,dp,eo\n");
    for m in per_k {
        out.push_str(&format!("{},{},{},{},{}\n", m.k, m.hr, m.ndcg, m.dp, m.eo));
    }
    out
}

pub fn parse_metrics_csv(text: &str) -> Result<Vec<KMetrics>> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| FdaError::InvalidConfig("empty metrics file".to_string()))?;
    if header.trim() != "k,hr,ndcg,dp,eo" {
        return Err(FdaError::InvalidConfig(format!(
            "unexpected metrics header {header:?}"
        )));
    }
    let mut out = Vec::new();
    for (idx, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(FdaError::InvalidConfig(format!(
                "metrics line {}: expected 5 fields, found {}",
                idx + 2,
                fields.len()
            )));
        }
        let num = |s: &str| -> Result<f64> {
            s.trim()
                .parse()
                .map_err(|e| FdaError::InvalidConfig(format!("metrics line {}: {e}", idx + 2)))
        };
        out.push(KMetrics {
            k: num(fields[0])? as usize,
            hr: num(fields[1])?,
            ndcg: num(fields[2])?,
            dp: num(fields[3])?,
            eo: num(fields[4])?,
        });
    }
    if out.is_empty() {
        return Err(FdaError::InvalidConfig("metrics file has no rows".to_string()));
    }
    Ok(out)
}

/// Jensen-Shannon divergences between the two groups' item distributions
/// over training clicks, top-K exposure, and top-K hits.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JsReport {
    pub k: usize,
    pub training: f64,
    pub topk: f64,
    pub topk_hit: f64,
}

/// Builds the JS divergence report for one scored model.
pub fn js_report(ds: &InteractionDataset, topk: &TopKLists) -> Result<JsReport> {
    let [tr0, tr1] = metrics::group_click_distribution(&ds.train, &ds.group_label, ds.num_items)?;
    let exposure = metrics::exposure_lists(topk, ds.num_users);
    let [ex0, ex1] = metrics::group_click_distribution(&exposure, &ds.group_label, ds.num_items)?;
    let hits = metrics::hit_lists(topk, &ds.test, ds.num_users);
    let [h0, h1] = metrics::group_click_distribution(&hits, &ds.group_label, ds.num_items)?;
    Ok(JsReport {
        k: topk.k,
        training: metrics::js_divergence(&tr0, &tr1)?,
        topk: metrics::js_divergence(&ex0, &ex1)?,
        topk_hit: metrics::js_divergence(&h0, &h1)?,
    })
}

/// Full evaluation of a table on a dataset: per-K metrics.
pub fn evaluate_table(
    table: &EmbeddingTable,
    ds: &InteractionDataset,
    k_list: &[usize],
    threads: usize,
) -> Result<Vec<KMetrics>> {
    let mut out = Vec::new();
    for &k in k_list {
        let top = metrics::topk_with_threads(table, ds, k, threads);
        out.push(KMetrics {
            k,
            hr: metrics::hr_at_k(&top, &ds.test),
            ndcg: metrics::ndcg_at_k(&top, &ds.test),
            dp: metrics::dp_at_k(&top, &ds.group_label, ds.num_items)?,
            eo: metrics::eo_at_k(&top, &ds.test, &ds.group_label, ds.num_items)?,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub k: usize,
    pub metric: &'static str,
    pub baseline: f64,
    pub candidate: f64,
    pub delta: f64,
    /// Relative change versus the baseline; `None` when the baseline is 0.
    pub relative: Option<f64>,
}

/// Side-by-side comparison; the two runs must have been evaluated at the
/// same K values.
pub fn compare(baseline: &[KMetrics], candidate: &[KMetrics]) -> Result<Vec<ComparisonRow>> {
    let base_ks: Vec<usize> = baseline.iter().map(|m| m.k).collect();
    let cand_ks: Vec<usize> = candidate.iter().map(|m| m.k).collect();
    if base_ks != cand_ks {
        return Err(FdaError::InvalidConfig(format!(
            "runs were evaluated at different K values: {base_ks:?} vs {cand_ks:?}"
        )));
    }
    let mut rows = Vec::new();
    for (b, c) in baseline.iter().zip(candidate) {
        for (metric, bv, cv) in [
            ("hr", b.hr, c.hr),
            ("ndcg", b.ndcg, c.ndcg),
            ("dp", b.dp, c.dp),
            ("eo", b.eo, c.eo),
        ] {
            let delta = cv - bv;
            let relative = if bv != 0.0 { Some(delta / bv) } else { None };
            rows.push(ComparisonRow {
                k: b.k,
                metric,
                baseline: bv,
                candidate: cv,
                delta,
                relative,
            });
        }
    }
    Ok(rows)
}

/// Renders the comparison as an aligned text table.
pub fn render_comparison(rows: &[ComparisonRow]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:>4} {:>6} {:>12} {:>12} {:>12} {:>9}\n",
        "k", "metric", "baseline", "candidate", "delta", "rel"
    ));
    for r in rows {
        let rel = match r.relative {
            Some(x) => format!("{:+.2}%", 100.0 * x),
            None => "n/a".to_string(),
        };
        out.push_str(&format!(
            "{:>4} {:>6} {:>12.6} {:>12.6} {:>+12.6} {:>9}\n",
            r.k, r.metric, r.baseline, r.candidate, r.delta, rel
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(k: usize, hr: f64, ndcg: f64, dp: f64, eo: f64) -> KMetrics {
        KMetrics { k, hr, ndcg, dp, eo }
    }

    #[test]
    fn csv_round_trip() {
        let rows = vec![m(10, 0.1, 0.2, 0.3, 0.4), m(20, 0.15, 0.25, 0.35, 0.45)];
        let parsed = parse_metrics_csv(&metrics_to_csv(&rows)).unwrap();
        assert_eq!(parsed, rows);
    }

    #[test]
    fn csv_rejects_bad_header_and_short_rows() {
        assert!(parse_metrics_csv("k,hr\n1,2\n").is_err());
        assert!(parse_metrics_csv("k,hr,ndcg,dp,eo\n1,2,3\n").is_err());
        assert!(parse_metrics_csv("k,hr,ndcg,dp,eo\n").is_err());
    }

    #[test]
    fn compare_computes_deltas() {
        let base = vec![m(20, 0.2, 0.2, 0.6, 0.6)];
        let cand = vec![m(20, 0.1, 0.3, 0.3, 0.6)];
        let rows = compare(&base, &cand).unwrap();
        assert_eq!(rows.len(), 4);
        let hr = &rows[0];
        assert_eq!(hr.metric, "hr");
        assert!((hr.delta + 0.1).abs() < 1e-12);
        assert!((hr.relative.unwrap() + 0.5).abs() < 1e-12);
        let dp = &rows[2];
        assert!((dp.relative.unwrap() + 0.5).abs() < 1e-12);
    }

    #[test]
    fn compare_rejects_mismatched_k() {
        let base = vec![m(10, 0.0, 0.0, 0.0, 0.0)];
        let cand = vec![m(20, 0.0, 0.0, 0.0, 0.0)];
        assert!(compare(&base, &cand).is_err());
    }

    #[test]
    fn zero_baseline_has_no_relative_change() {
        let base = vec![m(20, 0.0, 0.1, 0.1, 0.1)];
        let cand = vec![m(20, 0.2, 0.1, 0.1, 0.1)];
        let rows = compare(&base, &cand).unwrap();
        assert!(rows[0].relative.is_none());
        let text = render_comparison(&rows);
        assert!(text.contains("n/a"));
    }
}
