use std::path::Path;

use super::config::RunConfig;
use super::data::physics_context;
use super::formats::{CloudRecord, GraspRecord};
use super::train::init_model;
use crate::diffusion::{sample, GraspCodec, Guide, NoiseStream, TraceStep};
use crate::error::{Error, Result};
use crate::nn::{read_checkpoint, Checkpoint, Denoiser};

/// Rebuilds a model from a checkpoint after checking that its stored keys
/// agree with `config`.
pub fn model_from_checkpoint(config: &RunConfig, ckpt: &Checkpoint) -> Result<Denoiser> {
    let diff = config.mismatches(&ckpt.config);
    if !diff.is_empty() {
        return Err(Error::ConfigMismatch(diff));
    }
    let mut net = init_model(config)?;
    net.params_mut().load_from(&ckpt.params)?;
    Ok(net)
}

pub fn load_model(config: &RunConfig, path: &Path) -> Result<Denoiser> {
    model_from_checkpoint(config, &read_checkpoint(path)?)
}

#[derive(Clone, Debug)]
pub struct SampleRun {
    pub records: Vec<GraspRecord>,
    /// Guidance diagnostics per sample.
    pub traces: Vec<Vec<TraceStep>>,
    pub warnings: Vec<String>,
}

/// Draws `n` grasps for one cloud. Sample `i` uses noise stream `i` of
/// `seed`. Guidance is active when the configured scale is positive, and
/// then each record carries its final physics loss.
pub fn sample_cmd(config: &RunConfig, net: &Denoiser, cloud: &CloudRecord, n: usize, seed: u64) -> Result<SampleRun> {
    let schedule = config.schedule()?;
    let hand = config.hand()?;
    if n == 0 {
        return Ok(SampleRun { records: Vec::new(), traces: Vec::new(), warnings: Vec::new() });
    }
    let codec = GraspCodec::new(cloud.centroid(), config.pos_scale, &hand.lower_limits(), &hand.upper_limits())?;
    let guidance = config.guidance();
    let ctx = physics_context(config, &hand, &cloud.points)?;
    let guide = Guide { config: &guidance, context: &ctx };
    let guided = guidance.scale > 0.0;
    let encoded = net.encode(&net.object_tokens(&cloud.points)?)?;
    let mut streams = NoiseStream::batch(seed, n);
    let outs = sample(net, &schedule, &encoded, &codec, guided.then_some(&guide), &mut streams)?;
    let mut run = SampleRun { records: Vec::with_capacity(n), traces: Vec::with_capacity(n), warnings: Vec::new() };
    for (i, o) in outs.into_iter().enumerate() {
        let phys_loss = if guided { Some(ctx.phys_loss(&o.grasp)?.total) } else { None };
        run.records.push(GraspRecord { grasp: o.grasp, seed: Some(seed), phys_loss, success: None });
        run.warnings.extend(o.warnings.into_iter().map(|w| format!("sample {i}: {w}")));
        run.traces.push(o.trace);
    }
    Ok(run)
}

/// Tab-separated `sample t loss grad_norm` rows.
pub fn trace_tsv(traces: &[Vec<TraceStep>]) -> String {
    let mut s = String::from("sample\tt\tloss\tgrad_norm\n");
    for (i, tr) in traces.iter().enumerate() {
        for step in tr {
            s.push_str(&format!("{i}\t{}\t{:?}\t{:?}\n", step.t, step.loss, step.grad_norm));
        }
    }
    s
}
