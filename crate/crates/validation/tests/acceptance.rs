use std::process::ExitCode;
use std::time::Instant;

use homsim_validation as v;

fn main() -> ExitCode {
    let criteria: [(u32, fn() -> v::Verdict); 9] = [
        (1, v::criterion_1),
        (2, v::criterion_2),
        (3, v::criterion_3),
        (4, v::criterion_4),
        (5, v::criterion_5),
        (6, v::criterion_6),
        (7, v::criterion_7),
        (8, v::criterion_8),
        (9, v::criterion_9),
    ];
    let mut failed = 0;
    for (n, check) in criteria {
        let start = Instant::now();
        let verdict = check();
        if !verdict.pass {
            failed += 1;
        }
        println!(
            "criterion {n}: {} ({:.1} s) {}",
            if verdict.pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64(),
            verdict.detail
        );
    }
    println!("acceptance: {}/9 criteria passed", 9 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
