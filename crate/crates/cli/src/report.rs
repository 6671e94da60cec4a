use std::collections::BTreeMap;
use std::fmt::Write as _;

use anyhow::Result;
use serde::Serialize;

use crate::commands::{group_runs, RunSummary};

/// One dataset and training method: the critical step bracket from fixed-step runs
/// next to the adaptive runs, both over non-excluded seeds only.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReportRow {
    pub dataset: String,
    pub train_solver: String,
    /// Largest training step count whose models are solver-locked.
    pub locked_k: Option<usize>,
    /// Smallest training step count from which on all models are ODE-like.
    pub ode_like_k: Option<usize>,
    pub fixed_nfe: Option<f64>,
    pub fixed_accuracy: Option<f64>,
    pub fixed_accuracy_std: Option<f64>,
    pub adaptive_nfe: Option<f64>,
    pub adaptive_accuracy: Option<f64>,
    pub adaptive_accuracy_std: Option<f64>,
    /// `ode-like seeds / included seeds` of the adaptive runs.
    pub adaptive_ode_like: Option<String>,
    pub excluded_runs: usize,
}

/// Given ODE-likeness per training step count, the bracketing pair
/// `(largest locked K below the ODE-like tail, first K of the ODE-like tail)`.
pub fn critical_bracket(per_k: &BTreeMap<usize, bool>) -> (Option<usize>, Option<usize>) {
    let ks: Vec<(usize, bool)> = per_k.iter().map(|(k, v)| (*k, *v)).collect();
    let tail_start = ks.iter().rposition(|(_, ode)| !ode).map_or(0, |i| i + 1);
    let locked = tail_start.checked_sub(1).map(|i| ks[i].0);
    let ode = ks.get(tail_start).map(|(k, _)| *k);
    (locked, ode)
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn summarize(runs: &[RunSummary]) -> Vec<ReportRow> {
    let mut rows = Vec::new();
    for ((dataset, train_solver), group) in group_runs(runs) {
        let excluded_runs = group.iter().filter(|r| r.excluded).count();
        let included: Vec<&&RunSummary> = group.iter().filter(|r| !r.excluded).collect();

        let mut by_k: BTreeMap<usize, Vec<&RunSummary>> = BTreeMap::new();
        for r in included.iter().filter(|r| !r.adaptive) {
            by_k.entry(r.train_k).or_default().push(r);
        }
        let per_k: BTreeMap<usize, bool> = by_k
            .iter()
            .map(|(k, rs)| {
                let drops: Vec<f64> = rs.iter().map(|r| r.max_drop).collect();
                (*k, mean_std(&drops).0 <= rs[0].threshold)
            })
            .collect();
        let (locked_k, ode_like_k) = critical_bracket(&per_k);
        let at_ode = ode_like_k.map(|k| &by_k[&k]);
        let fixed = at_ode.map(|rs| {
            let acc: Vec<f64> = rs.iter().map(|r| r.test_acc).collect();
            let nfe: Vec<f64> = rs.iter().map(|r| r.mean_nfe).collect();
            (mean_std(&nfe).0, mean_std(&acc))
        });

        let adaptive: Vec<&&&RunSummary> = included.iter().filter(|r| r.adaptive).collect();
        let adapt_stats = (!adaptive.is_empty()).then(|| {
            let acc: Vec<f64> = adaptive.iter().map(|r| r.test_acc).collect();
            let nfe: Vec<f64> = adaptive.iter().map(|r| r.mean_nfe).collect();
            let ode = adaptive
                .iter()
                .filter(|r| r.verdict == nodelab::diagnostics::Verdict::OdeLike)
                .count();
            (mean_std(&nfe).0, mean_std(&acc), format!("{ode}/{}", adaptive.len()))
        });

        rows.push(ReportRow {
            dataset,
            train_solver,
            locked_k,
            ode_like_k,
            fixed_nfe: fixed.map(|f| f.0),
            fixed_accuracy: fixed.map(|f| f.1 .0),
            fixed_accuracy_std: fixed.map(|f| f.1 .1),
            adaptive_nfe: adapt_stats.as_ref().map(|a| a.0),
            adaptive_accuracy: adapt_stats.as_ref().map(|a| a.1 .0),
            adaptive_accuracy_std: adapt_stats.as_ref().map(|a| a.1 .1),
            adaptive_ode_like: adapt_stats.map(|a| a.2),
            excluded_runs,
        });
    }
    rows
}

pub fn write_report_csv(rows: &[ReportRow], out: &mut Vec<u8>) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Human-readable table for the terminal.
pub fn render_table(rows: &[ReportRow]) -> String {
    let opt = |v: Option<usize>| v.map_or("-".to_string(), |k| k.to_string());
    let pct = |m: Option<f64>, s: Option<f64>| match (m, s) {
        (Some(m), Some(s)) => format!("{:.1}±{:.1}%", 100.0 * m, 100.0 * s),
        _ => "-".into(),
    };
    let nfe = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.1}"));
    let mut s = String::new();
    writeln!(
        s,
        "{:<10} {:<8} {:>10} {:>9} {:>12} {:>9} {:>12} {:>8}",
        "dataset", "solver", "critical K", "NFE", "accuracy", "adapt NFE", "adapt acc", "excluded"
    )
    .unwrap();
    for r in rows {
        writeln!(
            s,
            "{:<10} {:<8} {:>10} {:>9} {:>12} {:>9} {:>12} {:>8}",
            r.dataset,
            r.train_solver,
            format!("{}-{}", opt(r.locked_k), opt(r.ode_like_k)),
            nfe(r.fixed_nfe),
            pct(r.fixed_accuracy, r.fixed_accuracy_std),
            nfe(r.adaptive_nfe),
            pct(r.adaptive_accuracy, r.adaptive_accuracy_std),
            r.excluded_runs
        )
        .unwrap();
    }
    s
}
