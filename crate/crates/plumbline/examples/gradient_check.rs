//! Verify the hand-written backward pass against central finite
//! differences over randomized network configurations.

use plumbline::losses::grad_check;

fn main() -> plumbline::Result<()> {
    let report = grad_check(7, 50)?;
    println!(
        "{} configurations, {} parameters checked",
        report.configs, report.params_checked
    );
    println!(
        "max relative error {:.3e} (threshold {:.0e}) -> {}",
        report.max_rel_err,
        report.threshold,
        if report.passed() { "PASS" } else { "FAIL" }
    );
    Ok(())
}
