//! Runner for numbered acceptance criteria: one report line per criterion.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

pub struct Outcome {
    pub pass: bool,
    pub detail: String,
}

impl Outcome {
    pub fn new(pass: bool, detail: String) -> Self {
        Outcome { pass, detail }
    }
}

pub struct Criterion {
    pub number: usize,
    pub name: &'static str,
    pub check: fn() -> Outcome,
}

/// Runs the criteria selected by `args` and returns how many failed.
///
/// Numeric arguments select criteria; `--list` prints them without running;
/// other flags are ignored. A panicking check counts as a failure.
pub fn run(criteria: &[Criterion], args: &[String]) -> usize {
    if args.iter().any(|a| a == "--list") {
        for c in criteria {
            println!("criterion_{}: test", c.number);
        }
        return 0;
    }
    let selected: Vec<usize> = args
        .iter()
        .filter(|a| !a.starts_with('-'))
        .filter_map(|a| a.parse().ok())
        .collect();
    let mut failed = 0;
    for c in criteria {
        if !selected.is_empty() && !selected.contains(&c.number) {
            continue;
        }
        let started = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(c.check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Outcome::new(false, format!("panicked: {msg}"))
        });
        failed += usize::from(!outcome.pass);
        println!(
            "criterion {} ({}): {} [{:.1} s] {}",
            c.number,
            c.name,
            if outcome.pass { "PASS" } else { "FAIL" },
            started.elapsed().as_secs_f64(),
            outcome.detail
        );
    }
    failed
}
