//! Edit distance, best assignment, and surplus-stream scoring on unit sequences.
//!
//! Usage: `cargo run --example scoring`

use pitmix::eval::{best_assignment_score, best_injection_score, injections, levenshtein};

fn main() -> pitmix::Result<()> {
    let e = levenshtein(&[3, 7, 7, 2, 9], &[3, 7, 2, 4, 9]);
    println!("distance {} = {} subs + {} dels + {} ins", e.distance, e.subs, e.dels, e.ins);

    let refs = vec![vec![5, 6, 7], vec![1, 2]];
    let hyps = vec![vec![1, 2, 2], vec![5, 6, 8]];
    let a = best_assignment_score(&hyps, &refs)?;
    println!("two streams: total {} under {:?}", a.total, a.perm);

    let three = vec![vec![1, 2], vec![], vec![5, 6, 7]];
    println!("{} ordered ways to pair 3 hypotheses with 2 references", injections(3, 2).len());
    let inj = best_injection_score(&three, &refs)?;
    println!(
        "three streams on two references: total {} under {:?}, surplus streams {:?}",
        inj.total, inj.injection, inj.surplus
    );
    Ok(())
}
