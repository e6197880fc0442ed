//! Permutation-free losses on hand-made two-stream outputs.
//!
//! Usage: `cargo run --example pit_assignment`

use pitmix::nn::Tensor;
use pitmix::pit;

fn stream(rows: &[[f64; 2]]) -> pitmix::Result<Tensor> {
    Tensor::matrix(rows.len(), 2, rows.iter().flatten().copied().collect())
}

fn main() -> pitmix::Result<()> {
    // Two references and a separator that emits them in the other order, slightly off.
    let refs = [stream(&[[1.0, 0.0], [1.0, 0.5]])?, stream(&[[0.0, 2.0], [-1.0, 2.0]])?];
    let outs = [stream(&[[0.1, 1.9], [-0.9, 2.0]])?, stream(&[[0.9, 0.0], [1.0, 0.4]])?];

    let fixed = pit::fixed_mse(&outs, &refs)?;
    let r = pit::pit_mse(&outs, &refs)?;
    println!("fixed-order mse {fixed:.4}");
    for (perm, loss) in &r.all_losses {
        println!("  assignment {perm:?}: {loss:.4}");
    }
    println!("permutation-free mse {:.4} with assignment {:?}", r.best.loss, r.best.perm);

    // Cross entropy over three labels; stream 0 predicts the second reference's labels.
    let labels = vec![vec![1, 1, 2], vec![0, 2, 2]];
    let logits = [
        Tensor::matrix(3, 3, vec![4.0, 0.0, 0.0, 0.0, 0.0, 4.0, 0.0, 0.0, 4.0])?,
        Tensor::matrix(3, 3, vec![0.0, 4.0, 0.0, 0.0, 4.0, 0.0, 0.0, 0.0, 4.0])?,
    ];
    let ce = pit::pit_ce(&logits, &labels)?;
    println!(
        "fixed-order ce {:.4}, permutation-free ce {:.4} with assignment {:?}",
        pit::fixed_ce(&logits, &labels)?,
        ce.best.loss,
        ce.best.perm
    );
    Ok(())
}
