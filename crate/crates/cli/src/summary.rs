//! Human-readable one-line-per-check summaries of a report.

use nevlab::theorems::{Check, Status};

use crate::experiment::RunReport;

pub fn format_check(c: &Check) -> String {
    let status = match c.status {
        Status::Pass if c.is_vacuous() => "PASS (vacuous regime)",
        Status::Pass => "PASS",
        Status::Fail => "FAIL",
        Status::NotApplicable => "N/A",
    };
    let mut line = if c.name.starts_with("fmt ") {
        format!("{status} {} range={:.1e}", c.name, c.lhs + 0.0)
    } else {
        format!("{status} {} lhs={:.4e} rhs={:.4e}", c.name, c.lhs + 0.0, c.rhs + 0.0)
    };
    if let Some(r) = c.witness_r {
        line.push_str(&format!(" r={r:.4}"));
    }
    if let Some(f) = c.exceptional_fraction {
        line.push_str(&format!(" exceptional={f:.3}"));
    }
    if let Some(n) = c.note.as_deref().filter(|n| !c.is_vacuous() && (c.status != Status::Pass || n.starts_with("growth"))) {
        line.push_str(&format!(" ({n})"));
    }
    line
}

pub fn summary_lines(report: &RunReport) -> Vec<String> {
    report
        .suites
        .iter()
        .flat_map(|s| {
            s.checks.iter().map(move |c| {
                let line = format_check(c);
                // disambiguate repeated suites of one kind
                match c.name.split(' ').next() {
                    Some(kind) if kind != s.suite && !s.suite.starts_with("lemma") => format!("[{}] {line}", s.suite),
                    _ => line,
                }
            })
        })
        .collect()
}
