use std::fmt::Write as _;

use super::eval::EvalResults;
use super::metrics::Scores;

fn pct(x: f64) -> String {
    format!("{:.2}", 100.0 * x)
}

fn score_row(name: &str, s: &Scores) -> String {
    format!(
        "| {name} | {} | {} | {} | {} | {} |\n",
        s.episodes,
        pct(s.sr),
        pct(s.gc),
        pct(s.plwsr),
        pct(s.plwgc)
    )
}

const SCORE_HEADER: &str = "| Run | Episodes | SR | GC | PLWSR | PLWGC |\n|---|---:|---:|---:|---:|---:|\n";

/// Markdown tables for one or more labelled runs: overall scores, scores
/// per task type, and the error-mode breakdown of failures.
pub fn render_report(runs: &[(String, EvalResults)]) -> String {
    let mut out = String::from("# Evaluation report\n\n## Overall\n\n");
    out.push_str(SCORE_HEADER);
    for (label, r) in runs {
        out.push_str(&score_row(label, &r.metrics.overall));
    }

    for (label, r) in runs {
        let _ = write!(out, "\n## Task types: {label}\n\n");
        out.push_str(&SCORE_HEADER.replacen("Run", "Task type", 1));
        for (task, s) in &r.metrics.per_task_type {
            out.push_str(&score_row(task, s));
        }
    }

    out.push_str("\n## Error modes\n\nShare of failed episodes.\n\n| Run | Failures |");
    let modes: Vec<&String> = runs
        .first()
        .map(|(_, r)| r.metrics.error_modes.keys().filter(|k| *k != "none").collect())
        .unwrap_or_default();
    for m in &modes {
        let _ = write!(out, " {m} |");
    }
    out.push_str("\n|---|---:|");
    out.push_str(&"---:|".repeat(modes.len()));
    out.push('\n');
    for (label, r) in runs {
        let failures = r.episodes.iter().filter(|e| !e.success).count();
        let _ = write!(out, "| {label} | {failures} |");
        for m in &modes {
            let n = r.metrics.error_modes.get(*m).copied().unwrap_or(0);
            let share = if failures == 0 { 0.0 } else { n as f64 / failures as f64 };
            let _ = write!(out, " {} |", pct(share));
        }
        out.push('\n');
    }
    out
}
