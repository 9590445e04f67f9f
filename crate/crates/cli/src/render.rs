//! Human-readable summary of a run report.

use std::fmt::Write;

use hyers_core::verify::CHECK_STABILITY_BOUND;

use crate::runner::RunReport;

fn status(passed: bool) -> &'static str {
    if passed {
        "PASS"
    } else {
        "FAIL"
    }
}

pub fn render(report: &RunReport) -> String {
    let mut out = String::new();
    let s = &report.scenario;
    let _ = writeln!(out, "scenario {} (seed {}, depth {}, schema {})", s.name, s.seed, report.depth, report.schema);
    let _ = writeln!(out, "{:<24} {:<6} {:>14} {:>12} {:>8}", "check", "status", "max_residual", "threshold", "samples");
    for c in &report.checks {
        let _ = writeln!(
            out,
            "{:<24} {:<6} {:>14.6e} {:>12.3e} {:>8}",
            c.name,
            status(c.passed),
            c.report.max_residual,
            c.report.threshold,
            c.report.samples
        );
    }
    if let Some(c) = report.check(CHECK_STABILITY_BOUND) {
        let w = &c.report.witness;
        if let (Some(dev), Some(bound)) = (w["deviation"].as_f64(), w["bound"].as_f64()) {
            let _ = writeln!(out, "stability bound at worst sample: observed {dev:.6e} vs bound {bound:.6e}");
        }
    }
    if let Some(slope) = report
        .checks
        .iter()
        .find_map(|c| c.details.get("growth").and_then(|g| g["slope"].as_f64()))
    {
        let _ = writeln!(out, "growth ladder log-log slope: {slope:.4}");
    }
    if let Some(h) = report.checks.iter().find_map(|c| c.details.get("hypothesis_holds").and_then(|v| v.as_bool())) {
        let _ = writeln!(out, "star hypothesis on sampled unitaries: {}", if h { "holds" } else { "violated" });
    }
    let _ = writeln!(
        out,
        "mu j-residual {:.3e}; delta routes {}",
        report.mu.j_residual.unwrap_or(0.0),
        if report.delta.routes_agree { "agree" } else { "DISAGREE" }
    );
    let _ = writeln!(out, "overall: {}", status(report.passed));
    out
}
