//! Aggregation of experiment reports into one readable document.

use std::fmt::Write as _;

use super::experiment::ExperimentReport;
use crate::metrics::fmt2;

/// Markdown document with every table of every report, in input order.
pub fn render_markdown(reports: &[ExperimentReport]) -> String {
    let mut out = String::from("# Experiment report\n");
    for r in reports {
        writeln!(
            out,
            "\ncorpus `{}`, k = {}\n",
            &r.corpus_fingerprint[..16],
            r.spec.k
        )
        .unwrap();
        for t in &r.tables {
            writeln!(out, "## {}\n\n{}", t.title, t.table.to_markdown()).unwrap();
        }
        for p in &r.probes {
            writeln!(out, "## {}\n\n{}", p.title, p.table.to_markdown()).unwrap();
        }
        if !r.runs.is_empty() {
            out.push_str("### Splits\n\n");
            for run in &r.runs {
                writeln!(
                    out,
                    "- {} (k={}): {} train / {} test, overlap {}, F1 {}",
                    run.name,
                    run.k,
                    run.audit.train,
                    run.audit.test,
                    run.audit.overlap,
                    fmt2(run.row.scores.f1)
                )
                .unwrap();
            }
        }
    }
    out
}

/// `(file stem, csv body)` for each table and probe of a report.
pub fn csv_tables(report: &ExperimentReport) -> crate::Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, t) in report.tables.iter().enumerate() {
        out.push((format!("table{}", i + 1), t.table.to_csv()?));
    }
    for (i, p) in report.probes.iter().enumerate() {
        out.push((format!("probe{}", i + 1), p.table.to_csv()?));
    }
    Ok(out)
}
