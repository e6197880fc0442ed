//! Finite-difference check of every tape op, layer, and assignment loss.
//!
//! Usage: `cargo run --example gradient_check -- [seed] [configs]`

use pitmix::gradcheck::{format_table, run, GradcheckOptions, DEFAULT_CONFIGS};

fn main() -> pitmix::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed = args.next().and_then(|s| s.parse().ok()).unwrap_or(0);
    let configs = args.next().and_then(|s| s.parse().ok()).unwrap_or(DEFAULT_CONFIGS);
    let checks = run(&GradcheckOptions {
        seed,
        configs,
        corrupt: None,
    })?;
    print!("{}", format_table(&checks));
    let failed = checks.iter().filter(|c| !c.passed()).count();
    println!("{failed} of {} ops failed", checks.len());
    Ok(())
}
