//! Summaries of a metrics CSV.

use std::collections::BTreeMap;
use std::fmt::Write;

use serde::Serialize;

use crate::experiment::MetricsRecord;

/// Mean and standard error over repetitions of one grid point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointSummary {
    pub axis: String,
    pub value: Option<f64>,
    pub repetitions: usize,
    pub tp_mean: f64,
    pub tp_se: f64,
    pub fp_mean: f64,
    pub fp_se: f64,
    pub baseline_tp_mean: Option<f64>,
    pub baseline_fp_mean: Option<f64>,
}

/// Sample mean and standard error of the mean; SE is 0 for a single value.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn mean_opt(xs: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Option<Vec<f64>> = xs.collect();
    v.filter(|v| !v.is_empty()).map(|v| mean_se(&v).0)
}

/// Groups rows by grid point, keeping first-appearance order.
pub fn summarize(records: &[MetricsRecord]) -> Vec<PointSummary> {
    let mut order: Vec<(String, Option<u64>)> = Vec::new();
    let mut groups: BTreeMap<(String, Option<u64>), Vec<&MetricsRecord>> = BTreeMap::new();
    for r in records {
        let key = (r.axis.clone(), r.value.map(f64::to_bits));
        if !groups.contains_key(&key) {
            order.push(key.clone());
        }
        groups.entry(key).or_default().push(r);
    }
    order
        .into_iter()
        .map(|key| {
            let rows = &groups[&key];
            let tp: Vec<f64> = rows.iter().map(|r| r.tp_rate).collect();
            let fp: Vec<f64> = rows.iter().map(|r| r.fp_rate).collect();
            let (tp_mean, tp_se) = mean_se(&tp);
            let (fp_mean, fp_se) = mean_se(&fp);
            PointSummary {
                axis: key.0.clone(),
                value: key.1.map(f64::from_bits),
                repetitions: rows.len(),
                tp_mean,
                tp_se,
                fp_mean,
                fp_se,
                baseline_tp_mean: mean_opt(rows.iter().map(|r| r.baseline_tp_rate)),
                baseline_fp_mean: mean_opt(rows.iter().map(|r| r.baseline_fp_rate)),
            }
        })
        .collect()
}

pub fn render_table(summary: &[PointSummary]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<20} {:>10} {:>4} {:>15} {:>15} {:>9} {:>9}",
        "axis", "value", "reps", "tp (se)", "fp (se)", "base tp", "base fp"
    );
    let opt = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{v:.4}"));
    for p in summary {
        let _ = writeln!(
            s,
            "{:<20} {:>10} {:>4} {:>15} {:>15} {:>9} {:>9}",
            p.axis,
            p.value.map_or("-".to_string(), |v| format!("{v}")),
            p.repetitions,
            format!("{:.4} ({:.4})", p.tp_mean, p.tp_se),
            format!("{:.4} ({:.4})", p.fp_mean, p.fp_se),
            opt(p.baseline_tp_mean),
            opt(p.baseline_fp_mean),
        );
    }
    s
}
