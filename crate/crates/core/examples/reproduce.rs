//! Runs a named reproduction target (default `trapdoor-cfb2`) and prints its checks.

use fscap::app::{reproduce, TARGETS};

fn main() -> fscap::Result<()> {
    let target = std::env::args().nth(1).unwrap_or_else(|| "trapdoor-cfb2".into());
    if !TARGETS.contains(&target.as_str()) {
        eprintln!("known targets: {}", TARGETS.join(", "));
        std::process::exit(2);
    }
    let r = reproduce(&target, 0)?;
    for c in &r.checks {
        let mark = if c.passed { "ok  " } else if c.required { "FAIL" } else { "miss" };
        println!("{mark} {:<45} {:>14.10} expected {}", c.name, c.value, c.expected);
    }
    for n in &r.notes {
        println!("note: {n}");
    }
    println!("{}: {}", r.target, if r.passed { "pass" } else { "fail" });
    Ok(())
}
