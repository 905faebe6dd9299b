//! Finite-difference check of every loss term on the micro model.
//!
//! ```text
//! cargo run --release --example gradient_check -- [seed]
//! ```

use coguiding::train::{grad_check, GradCheckConfig};

fn main() -> coguiding::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let report = grad_check(&GradCheckConfig { seed, ..Default::default() })?;
    println!("checked {} coordinates ({} skipped at kinks)", report.checked, report.skipped);
    for t in &report.terms {
        println!("{:<24} {:>10.3e}  {}", t.term, t.max_rel_error, t.worst_param);
    }
    println!("{}", if report.passed() { "PASS" } else { "FAIL" });
    Ok(())
}
