//! Recording a small expression on the tape and checking its gradient.

use pga_grasp::autodiff::{grad_check, primitive_grad_errors, Tape, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> anyhow::Result<()> {
    // f(x) = Σ (x ⊙ x + x)
    let x = Tensor::new(vec![3], vec![0.5, -1.0, 2.0])?;
    let mut tape = Tape::new();
    let v = tape.leaf(x.clone());
    let sq = tape.mul(v, v)?;
    let s = tape.add(sq, v)?;
    let f = tape.sum(s)?;
    let grads = tape.backward_from(f, &Tensor::scalar(1.0))?;
    println!("f = {}", tape.value(f).item());
    println!("df/dx = {:?} (expected 2x + 1)", grads.get(v).unwrap().data());

    let check = grad_check(
        |x| {
            let mut tape = Tape::new();
            let v = tape.leaf(x.clone());
            let sq = tape.mul(v, v)?;
            let f = tape.sum(sq)?;
            let g = tape.backward_from(f, &Tensor::scalar(1.0))?;
            Ok((tape.value(f).item(), g.get(v).unwrap().clone()))
        },
        &x,
        1e-5,
    )?;
    println!("finite-difference check: max relative error {:.1e}", check.max_rel_error);

    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for (name, err) in primitive_grad_errors(2, 1e-5, &mut rng)? {
        println!("{name:>24} {err:.1e}");
    }
    Ok(())
}
