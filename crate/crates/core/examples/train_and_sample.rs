//! A small end-to-end run: data, training, sampling and evaluation.

use pga_grasp::harness::{eval_cmd, gen_data, sample_cmd, train, EvalItem, RunConfig};

fn main() -> anyhow::Result<()> {
    let config = RunConfig {
        seed: 7,
        spheres: 2,
        boxes: 2,
        test_spheres: 1,
        test_boxes: 1,
        grasps_per_object: 10,
        train_steps: 300,
        ..RunConfig::default()
    };
    let data = gen_data(&config)?;
    let (net, report) = train(&config, &data, |p| {
        if let Some(probe) = p.probe {
            println!("step {:>4}: probe loss {probe:.3}", p.step);
        }
    })?;
    println!("probe loss reduced by {:.0}%", 100.0 * report.reduction());

    let mut sampled = Vec::new();
    for obj in &data.test {
        let run = sample_cmd(&config, &net, &obj.cloud, 10, 1)?;
        sampled.push((obj, run.records.into_iter().map(|r| r.grasp).collect::<Vec<_>>()));
    }
    let items: Vec<EvalItem> = sampled.iter().map(|(o, g)| EvalItem { name: &o.name, cloud: &o.cloud, grasps: g }).collect();
    print!("{}", eval_cmd(&config, &items)?.to_text());
    Ok(())
}
