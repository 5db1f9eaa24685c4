use std::process::ExitCode;

use echo_lab::checks::run_all;

const SEED: u64 = 20_240_611;

fn main() -> ExitCode {
    let results = run_all(SEED);
    for r in &results {
        println!("{r}");
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    println!(
        "acceptance: {} passed, {failed} failed",
        results.len() - failed
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
