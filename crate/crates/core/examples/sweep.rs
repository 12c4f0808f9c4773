//! Dicode erasure curve: feedback capacity against the delay-2 dual bound, written as CSV.

use fscap::app::{run_sweep, Grid, OutputPaths, SweepSpec};

fn main() -> fscap::Result<()> {
    let spec = SweepSpec {
        channel: "dec".into(),
        delay: 2,
        grid: Grid::Range { start: 0.1, stop: 0.9, step: 0.2 },
        methods: vec!["dec-fb".into(), "dual-ub-appendixC-d2".into()],
        qgraph: "markov3".into(),
        seed: 0,
        output: OutputPaths::default(),
    };
    let out = run_sweep(&spec, 0)?;
    print!("{}", out.csv());
    println!("input hash {}", out.manifest.input_hash);
    Ok(())
}
