//! Physics guidance on the last reverse steps, compared with plain sampling
//! from the same noise.

use pga_grasp::harness::data::physics_context;
use pga_grasp::harness::{gen_data, sample_cmd, train, RunConfig};

fn main() -> anyhow::Result<()> {
    let config = RunConfig { seed: 11, spheres: 2, boxes: 2, test_spheres: 1, test_boxes: 0, train_steps: 300, ..RunConfig::default() };
    let data = gen_data(&config)?;
    let (net, _) = train(&config, &data, |_| {})?;
    let obj = &data.test[0];
    let ctx = physics_context(&config, &config.hand()?, &obj.cloud.points)?;

    let plain = sample_cmd(&config, &net, &obj.cloud, 6, 3)?;
    for scale in [0.1, 1.0] {
        // Default guided range is the last three steps.
        let guided_cfg = RunConfig { guidance_scale: scale, ..config.clone() };
        let guided = sample_cmd(&guided_cfg, &net, &obj.cloud, 6, 3)?;
        println!("lambda = {scale}");
        for (a, b) in plain.records.iter().zip(&guided.records) {
            println!("  L_phys {:.5} -> {:.5}", ctx.phys_loss(&a.grasp)?.total, b.phys_loss.unwrap());
        }
        for w in guided.warnings.iter().take(3) {
            println!("  warning: {w}");
        }
    }
    Ok(())
}
