//! Checks the closed-form trapdoor certificate, then a deliberately broken copy.

use fscap::dual_mdp::trapdoor_certificate;

fn main() -> fscap::Result<()> {
    let bundle = trapdoor_certificate();
    let ok = bundle.verify(1e-12)?;
    println!("{}: passed={} max violation={:.1e}", bundle.name, ok.passed, ok.max_violation);

    let mut broken = bundle.clone();
    broken.certificate = broken.certificate.with_rho(bundle.certificate.rho + 1e-3);
    let bad = broken.verify(1e-12)?;
    println!("rho + 1e-3: passed={}", bad.passed);
    for c in bad.failures().take(3) {
        println!("  (s={}, q={}) lhs={:.6} rhs={:.6}", c.state, c.node, c.lhs, c.rhs);
    }
    println!("{}", serde_json::to_string_pretty(&bundle.certificate.to_json()).unwrap());
    Ok(())
}
