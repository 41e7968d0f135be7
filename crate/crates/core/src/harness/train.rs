use std::io::Write;
use std::path::Path;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::RunConfig;
use super::data::{normal_vec, Dataset};
use crate::diffusion::{training_loss, GraspCodec, NoisedBatch, Schedule};
use crate::error::{invalid, Error, Result};
use crate::nn::{write_checkpoint, Checkpoint, Denoiser, ObjectTokens};

/// Adam with bias correction.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n: usize, lr: f64, beta1: f64, beta2: f64) -> Self {
        Self { lr, beta1, beta2, eps: 1e-8, m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            params[i] -= self.lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + self.eps);
        }
    }
}

/// A training object in diffusion coordinates.
pub struct PreparedObject {
    pub tokens: ObjectTokens,
    pub centroid: Vector3<f64>,
    pub x0: Vec<Vec<f64>>,
}

pub fn prepare(denoiser: &Denoiser, config: &RunConfig, data: &Dataset) -> Result<Vec<PreparedObject>> {
    let hand = config.hand()?;
    let (low, up) = (hand.lower_limits(), hand.upper_limits());
    data.train
        .iter()
        .filter(|o| !o.grasps.is_empty())
        .map(|o| {
            let centroid = o.cloud.centroid();
            let codec = GraspCodec::new(centroid, config.pos_scale, &low, &up)?;
            Ok(PreparedObject {
                tokens: denoiser.object_tokens(&o.cloud.points)?,
                centroid,
                x0: o.grasps.iter().map(|g| codec.encode(&g.grasp)).collect::<Result<_>>()?,
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct CurvePoint {
    pub step: usize,
    pub loss: f64,
    /// Loss on the fixed probe batches, when evaluated at this step.
    pub probe: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    pub initial_probe: f64,
    pub final_probe: f64,
    pub curve: Vec<CurvePoint>,
}

impl TrainReport {
    pub fn reduction(&self) -> f64 {
        1.0 - self.final_probe / self.initial_probe
    }

    pub fn to_tsv(&self) -> String {
        let mut s = String::from("step\tloss\tprobe\n");
        for p in &self.curve {
            let probe = p.probe.map(|v| format!("{v:?}")).unwrap_or_default();
            s.push_str(&format!("{}\t{:?}\t{probe}\n", p.step, p.loss));
        }
        s
    }
}

struct Probe {
    steps: Vec<usize>,
    noise: Vec<Vec<f64>>,
    x0: Vec<Vec<f64>>,
}

fn probe_loss(net: &Denoiser, schedule: &Schedule, objects: &[PreparedObject], probes: &[Probe]) -> Result<f64> {
    let mut total = 0.0;
    for (o, p) in objects.iter().zip(probes) {
        let batch = NoisedBatch { object: &o.tokens, centroid: o.centroid, x0: &p.x0, steps: &p.steps, noise: &p.noise };
        total += training_loss(net, schedule, &batch)?.0;
    }
    Ok(total / objects.len() as f64)
}

fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Initial weights for a seed.
pub fn init_model(config: &RunConfig) -> Result<Denoiser> {
    Denoiser::new(config.denoiser()?, &mut rng_stream(config.seed, 0))
}

/// Mini-batch training on the noise-prediction loss. Each step draws one
/// object, `batch` of its grasps with replacement, a uniform step per grasp
/// and fresh noise. `progress` is called with each curve point.
pub fn train(config: &RunConfig, data: &Dataset, mut progress: impl FnMut(&CurvePoint)) -> Result<(Denoiser, TrainReport)> {
    config.validate()?;
    let schedule = config.schedule()?;
    let mut net = init_model(config)?;
    let objects = prepare(&net, config, data)?;
    if objects.is_empty() {
        return Err(invalid("training set has no grasps"));
    }
    let d = net.config().output_dim();
    let t_max = schedule.steps();

    // Fixed probe batches: evenly spread steps, fixed noise.
    let mut prng = rng_stream(config.seed, 2);
    let probes: Vec<Probe> = objects
        .iter()
        .map(|o| {
            let b = config.batch.min(o.x0.len()).max(1);
            Probe {
                steps: (0..b).map(|i| 1 + i * t_max / b).collect(),
                noise: (0..b).map(|_| normal_vec(&mut prng, d)).collect(),
                x0: o.x0[..b].to_vec(),
            }
        })
        .collect();
    let initial_probe = probe_loss(&net, &schedule, &objects, &probes)?;
    let mut curve = vec![CurvePoint { step: 0, loss: initial_probe, probe: Some(initial_probe) }];
    progress(&curve[0]);

    let mut rng = rng_stream(config.seed, 1);
    let mut flat = net.params().flatten();
    let mut adam = Adam::new(flat.len(), config.learning_rate, config.adam_beta1, config.adam_beta2);
    let mut final_probe = initial_probe;
    for step in 1..=config.train_steps {
        let o = &objects[rng.gen_range(0..objects.len())];
        let picks: Vec<usize> = (0..config.batch).map(|_| rng.gen_range(0..o.x0.len())).collect();
        let x0: Vec<Vec<f64>> = picks.iter().map(|&i| o.x0[i].clone()).collect();
        let steps: Vec<usize> = (0..config.batch).map(|_| rng.gen_range(1..=t_max)).collect();
        let noise: Vec<Vec<f64>> = (0..config.batch).map(|_| normal_vec(&mut rng, d)).collect();
        let batch = NoisedBatch { object: &o.tokens, centroid: o.centroid, x0: &x0, steps: &steps, noise: &noise };
        let (loss, grads) = training_loss(&net, &schedule, &batch)?;
        if !loss.is_finite() || loss > 1e3 * initial_probe {
            return Err(Error::Divergence { step, loss, initial: initial_probe });
        }
        let g: Vec<f64> = grads.iter().flat_map(|t| t.data().iter().copied()).collect();
        if !g.iter().all(|v| v.is_finite()) {
            return Err(Error::Divergence { step, loss: f64::NAN, initial: initial_probe });
        }
        adam.step(&mut flat, &g);
        net.params_mut().unflatten(&flat)?;
        let probe = if step == config.train_steps || (config.log_every > 0 && step % config.log_every == 0) {
            let p = probe_loss(&net, &schedule, &objects, &probes)?;
            final_probe = p;
            Some(p)
        } else {
            None
        };
        curve.push(CurvePoint { step, loss, probe });
        progress(curve.last().unwrap());
    }
    Ok((net, TrainReport { initial_probe, final_probe, curve }))
}

pub fn checkpoint_for(config: &RunConfig, net: &Denoiser) -> Checkpoint {
    Checkpoint { config: config.model_entries(), params: net.params().clone() }
}

/// Writes `model.ckpt` and `loss.tsv` into `dir`.
pub fn write_training_outputs(dir: &Path, config: &RunConfig, net: &Denoiser, report: &TrainReport) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_checkpoint(&dir.join("model.ckpt"), &checkpoint_for(config, net))?;
    let mut f = std::fs::File::create(dir.join("loss.tsv"))?;
    f.write_all(report.to_tsv().as_bytes())?;
    Ok(())
}
