//! Compare every analytic gradient with central finite differences.
//!
//! Usage: `cargo run --example gradient_check -- [seed]`

use cobra::gradcheck::{run_gradcheck, GradcheckOptions};

fn main() -> cobra::Result<()> {
    let seed: u64 = std::env::args().nth(1).map_or(0, |a| a.parse().expect("seed"));
    let report = run_gradcheck(&GradcheckOptions { seed, ..GradcheckOptions::default() })?;
    for line in report.records() {
        println!("{line}");
    }
    println!(
        "{} checks, {} failed, max_rel_err={:.3e}",
        report.checks.len(),
        report.failures().len(),
        report.max_rel_err()
    );

    // A deliberately broken gradient is reported by name.
    let broken = run_gradcheck(&GradcheckOptions { seed, corrupt: Some("loss.l_c.nce_log".into()), ..Default::default() })?;
    for c in broken.failures() {
        println!("corrupted: {}", c.record());
    }
    Ok(())
}
