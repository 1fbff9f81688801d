//! Finite-difference audit of every model's analytic gradients.
//!
//! cargo run --release --example gradient_check [probes]

use deeponet_maze::bench::{gradient_audit, AUDIT_STEP, AUDIT_TOLERANCE};

fn main() -> deeponet_maze::Result<()> {
    let probes = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(200);
    println!("central differences, h = {AUDIT_STEP:e}, tolerance {AUDIT_TOLERANCE:e}");
    for (name, r) in gradient_audit(190, probes, 42)? {
        println!(
            "{name:<9} {:>4} probes  max relative error {:.3e}  {}",
            r.probes,
            r.max_rel_error,
            if r.passes(AUDIT_TOLERANCE) { "ok" } else { "FAIL" }
        );
    }
    Ok(())
}
