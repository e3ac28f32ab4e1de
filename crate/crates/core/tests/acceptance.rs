//! Runs the eleven acceptance criteria at full size and prints one line each.

use std::process::ExitCode;

use flowdecay::acceptance::{run_suite, AcceptanceOptions};

fn main() -> ExitCode {
    let opts = AcceptanceOptions::default();
    let all: Vec<usize> = (1..=11).collect();
    let outcomes = match run_suite(&opts, &all, |o| println!("{o}")) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("acceptance suite aborted: {e}");
            return ExitCode::FAILURE;
        }
    };
    let failed: Vec<usize> = outcomes.iter().filter(|o| !o.pass).map(|o| o.id).collect();
    println!("acceptance: {} of {} criteria pass", outcomes.len() - failed.len(), outcomes.len());
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("failed: {failed:?}");
        ExitCode::FAILURE
    }
}
