//! Analytic upper bound for the BSC with no two consecutive ones, with its certificate checked.

use fscap::dual_mdp::{bsc_bound, bsc_certificate};

fn main() -> fscap::Result<()> {
    println!("{:>6} {:>12} {:>10}", "p", "bound", "violation");
    for p in [0.01, 0.05, 0.1, 0.2, 0.3, 0.4, 0.45] {
        let b = bsc_bound(p)?;
        let r = bsc_certificate(p, b.params)?.verify(1e-9)?;
        println!("{p:>6} {:>12.9} {:>10.1e}", b.value, r.max_violation);
    }
    Ok(())
}
