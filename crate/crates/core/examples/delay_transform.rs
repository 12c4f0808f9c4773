//! Rewrites the trapdoor channel with feedback delay 2 as an
//! instantaneous-feedback channel and prints its extended states.

use fscap::channels::make_trapdoor;
use fscap::delay::transform;

fn main() -> fscap::Result<()> {
    let base = make_trapdoor();
    for d in 1..=4 {
        let tc = transform(&base, d)?;
        let ch = tc.channel();
        println!("d={d}: {} states, {} inputs, {} outputs", ch.state_count(), ch.input_count(), ch.output_count());
    }

    let tc = transform(&base, 2)?;
    let ch = tc.channel();
    for s in 0..ch.state_count() {
        let (b, hist) = tc.decode_state(s)?;
        print!("state {s} = (s={b}, x_prev={hist:?}):");
        for x in ch.admissible(s) {
            for (y, p, next) in ch.transitions(s, *x) {
                print!("  x={x} y={y} p={p:.2} -> {next}");
            }
        }
        println!();
    }
    Ok(())
}
