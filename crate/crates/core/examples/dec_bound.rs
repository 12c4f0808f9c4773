//! Dicode erasure channel at p = 0.5: the certified delay-2 bound against the feedback capacity.

use fscap::dual_mdp::{dec_bound, dec_certificate, dec_feedback_capacity};

fn main() -> fscap::Result<()> {
    let b = dec_bound()?;
    let fb = dec_feedback_capacity(0.5)?;
    println!("delay-2 bound {:.10} at a = {:.10}", b.value, b.a);
    println!("feedback capacity {:.10}", fb.value);
    println!("gap {:.3e}", fb.value - b.value);
    let report = dec_certificate(b.a)?.verify(1e-8)?;
    println!("certificate passes: {} on {} pairs, excluded {:?}", report.passed, report.checks.len(), report.excluded);
    println!("exponent-3 variant minimum {:.10}, violation {:.3e}", b.printed_value, b.printed_violation);
    Ok(())
}
