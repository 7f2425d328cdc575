//! Confusion counts to scores, and scores to the per-pitcher table layout.
//!
//! cargo run --release --example metrics_tables

use pitchflow::metrics::{
    compute_metrics, f1_score, tabulate, ConfusionCounts, Grouping, MetricsRow,
};

fn main() -> pitchflow::Result<()> {
    println!("F1 from (precision, recall):");
    for (p, r) in [(1.0, 0.75), (0.96, 0.97), (0.0, 0.0)] {
        println!("  ({p:.2}, {r:.2}) -> {:.4}", f1_score(p, r));
    }

    let counts = [
        (
            "A. Example",
            ConfusionCounts {
                tp: 9,
                fp: 1,
                fn_: 1,
                tn: 49,
            },
        ),
        (
            "B. Example",
            ConfusionCounts {
                tp: 6,
                fp: 0,
                fn_: 4,
                tn: 50,
            },
        ),
        (
            "C. Example",
            ConfusionCounts {
                tp: 0,
                fp: 0,
                fn_: 10,
                tn: 50,
            },
        ),
    ];
    let mut rows = Vec::new();
    for (name, c) in counts {
        let s = compute_metrics(&c)?;
        println!(
            "{name}: acc {:.3} prec {:.3} rec {:.3} f1 {:.3}",
            s.acc, s.prec, s.rec, s.f1
        );
        let mut row = MetricsRow::new(c)?;
        row.pitcher = Some(name.into());
        rows.push(row);
    }
    let table = tabulate(&rows, Grouping::Pitcher)?;
    println!("\n{}", table.to_markdown());
    print!("{}", table.to_csv()?);
    Ok(())
}
