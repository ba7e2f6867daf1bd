//! Verdict reports in text and JSON form.
//!
//! The JSON form is deterministic for a fixed input file and tool version:
//! keys are sorted and timings are left out. The text form is for humans and
//! carries per-suite wall times.

use serde_json::{json, Value};

use vqg_core::Witness;

use crate::suites::{CheckRow, RowStatus};

pub struct SuiteReport {
    pub suite: String,
    pub rows: Vec<CheckRow>,
    pub millis: u128,
}

pub fn row_status_name(row: &CheckRow) -> &'static str {
    match row.status {
        RowStatus::Pass => "pass",
        RowStatus::Fail(_) => "fail",
        RowStatus::Insufficient(_) => "truncation-insufficient",
        RowStatus::Skipped(_) => "skipped",
    }
}

/// fail > truncation-insufficient > pass; skipped rows do not count against.
pub fn suite_status(rows: &[CheckRow]) -> &'static str {
    if rows.iter().any(|r| matches!(r.status, RowStatus::Fail(_))) {
        "fail"
    } else if rows
        .iter()
        .any(|r| matches!(r.status, RowStatus::Insufficient(_)))
    {
        "truncation-insufficient"
    } else if rows.iter().all(|r| matches!(r.status, RowStatus::Skipped(_))) {
        "skipped"
    } else {
        "pass"
    }
}

pub fn overall_status(suites: &[SuiteReport]) -> &'static str {
    if suites.iter().any(|s| suite_status(&s.rows) == "fail") {
        "fail"
    } else if suites
        .iter()
        .any(|s| suite_status(&s.rows) == "truncation-insufficient")
    {
        "truncation-insufficient"
    } else {
        "pass"
    }
}

pub fn exit_code(suites: &[SuiteReport]) -> i32 {
    match overall_status(suites) {
        "pass" => 0,
        _ => 1,
    }
}

fn witness_json(w: &Witness) -> Value {
    json!({
        "check": w.check,
        "states": w.states,
        "exponents": w.exponents,
        "lhs": w.lhs,
        "rhs": w.rhs,
    })
}

fn row_json(row: &CheckRow) -> Value {
    let mut v = json!({
        "check": row.check,
        "status": row_status_name(row),
    });
    let obj = v.as_object_mut().expect("row is an object");
    match &row.status {
        RowStatus::Fail(w) => {
            obj.insert("witness".to_string(), witness_json(w));
        }
        RowStatus::Insufficient(need) => {
            obj.insert("need".to_string(), json!(need));
        }
        RowStatus::Skipped(reason) => {
            obj.insert("reason".to_string(), json!(reason));
        }
        RowStatus::Pass => {}
    }
    v
}

pub fn to_json(
    kind: &str,
    truncation: u32,
    digest: &str,
    suites: &[SuiteReport],
) -> Value {
    json!({
        "digest": digest,
        "kind": kind,
        "overall": overall_status(suites),
        "suites": suites
            .iter()
            .map(|s| {
                json!({
                    "suite": s.suite,
                    "status": suite_status(&s.rows),
                    "checks": s.rows.iter().map(row_json).collect::<Vec<_>>(),
                })
            })
            .collect::<Vec<_>>(),
        "tool_version": env!("CARGO_PKG_VERSION"),
        "truncation": truncation,
    })
}

pub fn render_text(
    path: &str,
    kind: &str,
    truncation: u32,
    digest: &str,
    suites: &[SuiteReport],
) -> String {
    let mut out = String::new();
    out.push_str(&format!("file: {path}\n"));
    out.push_str(&format!("kind: {kind}\n"));
    out.push_str(&format!("truncation: {truncation}\n"));
    out.push_str(&format!("digest: {digest}\n"));
    for s in suites {
        out.push_str(&format!(
            "suite {}: {} ({} ms)\n",
            s.suite,
            suite_status(&s.rows),
            s.millis
        ));
        for row in &s.rows {
            match &row.status {
                RowStatus::Pass => out.push_str(&format!("  {}: pass\n", row.check)),
                RowStatus::Fail(w) => out.push_str(&format!("  {}: FAIL {w}\n", row.check)),
                RowStatus::Insufficient(need) => out.push_str(&format!(
                    "  {}: truncation insufficient ({need}); raise --truncation\n",
                    row.check
                )),
                RowStatus::Skipped(reason) => {
                    out.push_str(&format!("  {}: skipped ({reason})\n", row.check))
                }
            }
        }
    }
    out.push_str(&format!("overall: {}\n", overall_status(suites)));
    out
}
