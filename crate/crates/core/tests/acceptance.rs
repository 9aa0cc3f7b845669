//! Acceptance gate: runs every built-in criterion, prints a PASS/FAIL line
//! per criterion with its measurements, and exits nonzero if any fails.
//!
//! The tolerances live with the checks in `hypstab_core::suite`.

use std::process::ExitCode;

use hypstab_core::suite::{render_report, run_criterion, SuiteSelection};

fn main() -> ExitCode {
    let mut failed = Vec::new();
    for id in SuiteSelection::All.criteria() {
        let result = run_criterion(id);
        print!("{}", render_report(std::slice::from_ref(&result)));
        if !result.passed() {
            failed.push(id);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failed criteria {failed:?}");
        ExitCode::FAILURE
    }
}
