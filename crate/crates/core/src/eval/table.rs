use std::collections::BTreeSet;
use std::fmt::Write as _;

use super::evaluate::EvalReport;
use super::matching::Level;
use crate::domain::{Daytime, Weather};

/// One row group of a results table: a named run, or the reason it failed.
#[derive(Debug, Clone)]
pub struct TableRun {
    pub label: String,
    pub report: Result<EvalReport, String>,
    pub dataset_hash: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderedTable {
    pub text: String,
    pub csv: String,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Rank {
    Best,
    Second,
    Other,
}

const MISSING: &str = "—";

/// Rows are (run, daytime); columns are weather x difficulty. Per column and daytime the
/// best mAP is printed `**x**` and the runner-up `x*`.
pub fn results_table(runs: &[TableRun]) -> RenderedTable {
    let mut columns: BTreeSet<(Weather, Level)> = BTreeSet::new();
    let mut daytimes: BTreeSet<Daytime> = BTreeSet::new();
    for run in runs {
        if let Ok(report) = &run.report {
            for key in report.cells.keys() {
                columns.insert((key.weather, key.level));
                daytimes.insert(key.daytime);
            }
        }
    }
    let columns: Vec<(Weather, Level)> = columns.into_iter().collect();
    let value = |run: &TableRun, d: Daytime, (w, l): (Weather, Level)| {
        run.report.as_ref().ok().and_then(|r| r.map(w, d, l)).map(|v| (v * 100.0 * 100.0).round() / 100.0)
    };
    let rank = |d: Daytime, col: (Weather, Level), v: f64| {
        let mut distinct: Vec<f64> = runs.iter().filter_map(|r| value(r, d, col)).collect();
        distinct.sort_by(|a, b| b.total_cmp(a));
        distinct.dedup();
        if distinct.first() == Some(&v) {
            Rank::Best
        } else if distinct.get(1) == Some(&v) {
            Rank::Second
        } else {
            Rank::Other
        }
    };
    let show_hash = runs.iter().any(|r| r.dataset_hash.is_some());

    let mut header = vec!["Model".to_string(), "Daytime".to_string()];
    header.extend(columns.iter().map(|(w, l)| format!("{} {}", w.label(), l.short())));
    if show_hash {
        header.push("Dataset".into());
    }
    let mut rows: Vec<Vec<String>> = Vec::new();
    let mut csv = String::from("model,daytime,weather,difficulty,map_percent,marker,dataset_hash\n");
    for run in runs {
        for &d in &daytimes {
            let mut row = vec![run.label.clone(), d.label().to_string()];
            for &col in &columns {
                let (cell, marker, csv_value) = match (&run.report, value(run, d, col)) {
                    (Err(_), _) => ("failed".to_string(), "", "failed".to_string()),
                    (Ok(_), None) => (MISSING.to_string(), "", String::new()),
                    (Ok(_), Some(v)) => match rank(d, col, v) {
                        Rank::Best => (format!("**{v:.2}**"), "best", format!("{v:.2}")),
                        Rank::Second => (format!("{v:.2}*"), "second", format!("{v:.2}")),
                        Rank::Other => (format!("{v:.2}"), "", format!("{v:.2}")),
                    },
                };
                row.push(cell);
                let _ = writeln!(
                    csv,
                    "{},{},{},{},{},{},{}",
                    run.label,
                    d.as_str(),
                    col.0.as_str(),
                    col.1,
                    csv_value,
                    marker,
                    run.dataset_hash.as_deref().unwrap_or("")
                );
            }
            if show_hash {
                row.push(run.dataset_hash.as_deref().map_or(MISSING.to_string(), |h| h[..h.len().min(12)].to_string()));
            }
            rows.push(row);
        }
    }

    let widths: Vec<usize> = (0..header.len())
        .map(|c| {
            std::iter::once(&header)
                .chain(&rows)
                .map(|r| r[c].chars().count())
                .max()
                .unwrap_or(0)
        })
        .collect();
    let line = |cells: &[String]| {
        let padded: Vec<String> = cells
            .iter()
            .zip(&widths)
            .map(|(c, &w)| format!("{c}{}", " ".repeat(w - c.chars().count())))
            .collect();
        format!("| {} |\n", padded.join(" | "))
    };
    let mut text = line(&header);
    text.push_str(&format!(
        "|{}|\n",
        widths.iter().map(|&w| "-".repeat(w + 2)).collect::<Vec<_>>().join("|")
    ));
    for row in &rows {
        text.push_str(&line(row));
    }
    for run in runs {
        if let Err(reason) = &run.report {
            let _ = writeln!(text, "\n{} failed: {reason}", run.label);
        }
    }
    RenderedTable { text, csv }
}
