//! Report rendering and sink selection. JSON is the stable machine
//! format; CSV carries one fixed header per command; text is for
//! humans and makes no stability promise.

use std::io::Write;
use std::path::Path;

use finsler_geodesics::report::{Status, Tolerance, VerificationReport};

use crate::ops::CommandOutput;

fn status_str(status: Status) -> &'static str {
    match status {
        Status::Pass => "pass",
        Status::Fail => "FAIL",
        Status::Warn => "warn",
    }
}

pub fn render_json(report: &VerificationReport) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("reports always serialize");
    s.push('\n');
    s
}

pub fn render_text(out: &CommandOutput) -> String {
    let mut s = String::new();
    s.push_str(&out.table);
    if !out.table.is_empty() {
        s.push('\n');
    }
    for check in &out.report.checks {
        s.push_str(&format!(
            "[{}] {}: observed {}, expected {}",
            status_str(check.status),
            check.id,
            check.observed,
            check.expected
        ));
        if let Tolerance::Abs(tol) = check.tolerance {
            s.push_str(&format!(" (tol {tol:.1e})"));
        }
        s.push_str(&format!("  [{}]\n", check.anchor));
    }
    let summary = &out.report.summary;
    s.push_str(&format!(
        "{}: {} checks, {} passed, {} failed, {} warnings (toolkit {})\n",
        status_str(summary.status),
        summary.total,
        summary.passed,
        summary.failed,
        summary.warned,
        summary.version
    ));
    s
}

pub fn emit(rendered: &str, out: Option<&Path>) -> std::io::Result<()> {
    match out {
        Some(path) => std::fs::write(path, rendered),
        None => {
            let stdout = std::io::stdout();
            let mut handle = stdout.lock();
            handle.write_all(rendered.as_bytes())
        }
    }
}
