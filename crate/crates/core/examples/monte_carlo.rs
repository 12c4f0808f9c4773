//! Simulated rate of the trapdoor encoder against its exact value.

use fscap::graph_bounds::{monte_carlo_rate, rate, trapdoor_encoder};

fn main() -> fscap::Result<()> {
    let (ch, g, pol) = trapdoor_encoder();
    let exact = rate(&ch, &g, &pol)?;
    for steps in [10_000, 100_000, 1_000_000] {
        let mc = monte_carlo_rate(&ch, &g, &pol, steps, 7)?;
        println!("{steps:>8} steps: {:.5} +- {:.5}  (exact {:.5}, inside: {})", mc.value, mc.half_width, exact, mc.contains(exact));
    }
    Ok(())
}
