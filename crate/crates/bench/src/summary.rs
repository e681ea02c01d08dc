//! Mean and standard error across seeds.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::records::RunRecord;
use crate::{io_err, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub dataset: String,
    pub method: String,
    pub k: usize,
    pub lambda_ot: Option<f64>,
    pub budget: usize,
    pub runs: usize,
    pub val_mean: f64,
    pub val_se: f64,
    pub test_mean: f64,
    pub test_se: f64,
}

/// Mean and standard error `s / sqrt(n)`, with `s` the sample standard
/// deviation. A single value has zero error.
pub fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Groups by (dataset, method label, k, lambda_ot, budget) in order of first
/// appearance.
pub fn summarize(records: &[RunRecord]) -> Vec<SummaryRow> {
    type Key = (String, String, usize, Option<u64>, usize);
    let mut groups: Vec<(Key, Vec<&RunRecord>)> = Vec::new();
    for r in records {
        let key = (
            r.dataset.clone(),
            r.label(),
            r.k,
            r.lambda_ot.map(f64::to_bits),
            r.budget,
        );
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, members)) => members.push(r),
            None => groups.push((key, vec![r])),
        }
    }
    groups
        .into_iter()
        .map(|((dataset, method, k, lambda, budget), members)| {
            let val: Vec<f64> = members.iter().map(|r| r.val_accuracy).collect();
            let test: Vec<f64> = members.iter().map(|r| r.test_accuracy).collect();
            let (val_mean, val_se) = mean_se(&val);
            let (test_mean, test_se) = mean_se(&test);
            SummaryRow {
                dataset,
                method,
                k,
                lambda_ot: lambda.map(f64::from_bits),
                budget,
                runs: members.len(),
                val_mean,
                val_se,
                test_mean,
                test_se,
            }
        })
        .collect()
}

pub fn summary_tsv(rows: &[SummaryRow]) -> String {
    let mut out = String::from(
        "dataset\tmethod\tk\tlambda_ot\tbudget\truns\tval_mean\tval_se\ttest_mean\ttest_se\n",
    );
    for r in rows {
        let lambda = r.lambda_ot.map(|l| l.to_string()).unwrap_or_default();
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.dataset,
            r.method,
            r.k,
            lambda,
            r.budget,
            r.runs,
            r.val_mean,
            r.val_se,
            r.test_mean,
            r.test_se
        )
        .expect("string write");
    }
    out
}

pub fn save_summary_tsv(rows: &[SummaryRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, summary_tsv(rows)).map_err(io_err(path))
}

/// Human-readable table: one row per method label at one budget.
pub fn markdown_table(rows: &[SummaryRow]) -> String {
    let mut out = String::from("| method | k | lambda_ot | budget | runs | val accuracy | test accuracy |\n|---|---|---|---|---|---|---|\n");
    for r in rows {
        writeln!(
            out,
            "| {} | {} | {} | {} | {} | {:.2} ± {:.2} | {:.2} ± {:.2} |",
            r.method,
            r.k,
            r.lambda_ot
                .map(|l| l.to_string())
                .unwrap_or_else(|| "-".into()),
            r.budget,
            r.runs,
            100.0 * r.val_mean,
            100.0 * r.val_se,
            100.0 * r.test_mean,
            100.0 * r.test_se
        )
        .expect("string write");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::SCHEMA_VERSION;

    fn rec(seed: u64, method: &str, budget: usize, val: f64) -> RunRecord {
        RunRecord {
            schema_version: SCHEMA_VERSION,
            seed,
            method: method.into(),
            dataset: "d".into(),
            k: 10,
            budget,
            lambda_ot: None,
            bilevel: None,
            ot: None,
            ranknet: None,
            val_accuracy: val,
            test_accuracy: val,
            pretrain_seconds: 0.0,
            acquire_seconds: 0.0,
        }
    }

    #[test]
    fn constant_values_have_zero_error() {
        let recs: Vec<_> = (0..10).map(|s| rec(s, "random", 50, 0.625)).collect();
        let rows = summarize(&recs);
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].val_mean, 0.625);
        assert_eq!(rows[0].val_se, 0.0);
        assert_eq!(rows[0].runs, 10);
    }

    #[test]
    fn standard_error_of_two_values() {
        // sample sd of {0, 1} is 1/sqrt(2); divided by sqrt(2) gives 1/2
        let (m, se) = mean_se(&[0.0, 1.0]);
        assert_eq!(m, 0.5);
        assert!((se - 0.5).abs() < 1e-15);
    }

    #[test]
    fn groups_keep_first_appearance_order() {
        let recs = vec![
            rec(0, "margin", 50, 0.5),
            rec(0, "random", 50, 0.4),
            rec(1, "margin", 50, 0.7),
            rec(0, "margin", 100, 0.9),
        ];
        let rows = summarize(&recs);
        let keys: Vec<_> = rows
            .iter()
            .map(|r| (r.method.as_str(), r.budget, r.runs))
            .collect();
        assert_eq!(
            keys,
            vec![("margin", 50, 2), ("random", 50, 1), ("margin", 100, 1)]
        );
        assert!((rows[0].val_mean - 0.6).abs() < 1e-15);
    }

    #[test]
    fn tsv_has_one_line_per_row() {
        let rows = summarize(&[rec(0, "random", 50, 0.5), rec(0, "coreset", 50, 0.5)]);
        assert_eq!(summary_tsv(&rows).lines().count(), 3);
        assert!(markdown_table(&rows).contains("| coreset | 10 | - | 50 | 1 | 50.00 ± 0.00 |"));
    }
}
