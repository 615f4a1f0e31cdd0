//! Runs every acceptance check and prints one line per check.

use std::process::ExitCode;

use stefan_flame::verify::run_suite;

fn main() -> ExitCode {
    let outcomes = match run_suite("all") {
        Ok(o) => o,
        Err(e) => {
            eprintln!("acceptance: {e}");
            return ExitCode::FAILURE;
        }
    };
    for o in &outcomes {
        println!("{o}");
    }
    let failed = outcomes.iter().filter(|o| !o.passed).count();
    println!("acceptance: {} passed, {failed} failed", outcomes.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
