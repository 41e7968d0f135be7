//! Forward noising and one reverse step with the exact noise.

use pga_grasp::diffusion::{reverse_step, Schedule};

fn main() -> anyhow::Result<()> {
    let s = Schedule::linear(100, 1e-3, 0.2)?;
    for t in [1, 10, 50, 100] {
        println!("t={t:>3} beta {:.4} alpha_bar {:.3e} posterior var {:.4}", s.beta(t)?, s.alpha_bar(t)?, s.posterior_variance(t)?);
    }
    let x0 = vec![0.3, -0.2, 1.0];
    let eps = vec![0.5, 1.5, -0.7];
    let xt = s.forward_sample(&x0, 40, &eps)?;
    // With the true noise the posterior mean at t=1 is x0 itself.
    let x1 = s.forward_sample(&x0, 1, &eps)?;
    println!("x_40 = {xt:?}");
    println!("x_0 from x_1 = {:?}", reverse_step(&s, &x1, &eps, 1, None)?);
    Ok(())
}
