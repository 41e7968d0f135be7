//! Stability loss and the perturbation test on a sphere.

use pga_grasp::harness::data::{physics_context, synthesize_grasps, SynthesisParams};
use pga_grasp::harness::{RunConfig, Shape};
use pga_grasp::hand::Grasp;
use pga_grasp::physics::{success_eval, SuccessCriteria};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> anyhow::Result<()> {
    let config = RunConfig::default();
    let hand = config.hand()?;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let points = Shape::Sphere { radius: 0.025 }.sample_surface(256, &mut rng);
    let ctx = physics_context(&config, &hand, &points)?;
    let criteria = SuccessCriteria::default();

    // Far from the object nothing touches it.
    let far = Grasp::from_pose(&nalgebra::Matrix3::identity(), &nalgebra::Vector3::new(1.0, 0.0, 0.0), vec![0.0; hand.dof()]);
    let loss = ctx.phys_loss(&far)?;
    println!("free object: stability {:.4} (= probe speed², {:.4})", loss.stability, config.probe_speed.powi(2));
    let r = success_eval(&far, &ctx, &criteria)?;
    println!("free object: max displacement {:.4} m, passed {}", r.max_displacement(), r.passed);

    let (grasps, stats) = synthesize_grasps(&hand, &ctx, &points, &criteria, &SynthesisParams::default(), 3, &mut rng)?;
    println!("synthesized {} grasps in {} attempts", grasps.len(), stats.attempts);
    for g in &grasps {
        let loss = ctx.phys_loss(&g.grasp)?;
        let r = success_eval(&g.grasp, &ctx, &criteria)?;
        println!("stability {:.5}, max displacement {:.4} m, passed {}", loss.stability, r.max_displacement(), r.passed);
    }
    Ok(())
}
