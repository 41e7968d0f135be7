use nalgebra::Vector3;

use super::schedule::Schedule;
use crate::autodiff::{relative_error, Tape, Tensor, Var};
use crate::error::{invalid, Result};
use crate::nn::{Denoiser, ObjectTokens};

/// One object with clean diffusion-space grasps and the step and noise
/// drawn for each.
pub struct NoisedBatch<'a> {
    pub object: &'a ObjectTokens,
    pub centroid: Vector3<f64>,
    pub x0: &'a [Vec<f64>],
    pub steps: &'a [usize],
    pub noise: &'a [Vec<f64>],
}

/// Records the noise-prediction loss `(1/B) Σ_i ‖ε̂_i − ε_i‖²` on `tape`.
pub fn training_loss_on_tape(
    tape: &mut Tape,
    params: &[Var],
    denoiser: &Denoiser,
    schedule: &Schedule,
    batch: &NoisedBatch,
) -> Result<Var> {
    let b = batch.x0.len();
    if b == 0 || batch.steps.len() != b || batch.noise.len() != b {
        return Err(invalid(format!(
            "batch of {b} grasps with {} steps and {} noise vectors",
            batch.steps.len(),
            batch.noise.len()
        )));
    }
    let xt = batch
        .x0
        .iter()
        .zip(batch.steps.iter().zip(batch.noise))
        .map(|(x, (&t, e))| schedule.forward_sample(x, t, e))
        .collect::<Result<Vec<_>>>()?;
    let tokens = denoiser.grasp_tokens_at(&batch.centroid, &xt, batch.steps)?;
    let kv = denoiser.encode_on_tape(tape, params, batch.object)?;
    let out = denoiser.decode_on_tape(tape, params, &kv, &tokens)?;
    let pred = tape.concat_cols(out.directions, out.joints)?;
    let d = denoiser.config().output_dim();
    let target = tape.constant(Tensor::new(vec![b, d], batch.noise.concat())?);
    let se = tape.squared_error(pred, target)?;
    tape.scale(se, 1.0 / b as f64)
}

/// Loss value and its gradient with respect to every parameter tensor.
pub fn training_loss(denoiser: &Denoiser, schedule: &Schedule, batch: &NoisedBatch) -> Result<(f64, Vec<Tensor>)> {
    let mut tape = Tape::new();
    let params = denoiser.params().bind(&mut tape, true);
    let loss = training_loss_on_tape(&mut tape, &params, denoiser, schedule, batch)?;
    let grads = tape.backward_from(loss, &Tensor::scalar(1.0))?;
    Ok((tape.value(loss).item(), denoiser.params().collect_grads(&grads, &params)))
}

/// Worst relative error between the analytic training-loss gradient and
/// central differences over the flat parameter coordinates in `probe`.
pub fn training_loss_grad_check(
    denoiser: &Denoiser,
    schedule: &Schedule,
    batch: &NoisedBatch,
    probe: &[usize],
    step: f64,
) -> Result<f64> {
    let (_, grads) = training_loss(denoiser, schedule, batch)?;
    let analytic: Vec<f64> = grads.iter().flat_map(|t| t.data().to_vec()).collect();
    let base = denoiser.params().flatten();
    let mut net = denoiser.clone();
    let mut worst: f64 = 0.0;
    for &i in probe {
        if i >= base.len() {
            return Err(invalid(format!("probe index {i} beyond {} parameters", base.len())));
        }
        let mut theta = base.clone();
        theta[i] = base[i] + step;
        net.params_mut().unflatten(&theta)?;
        let fp = training_loss_value(&net, schedule, batch)?;
        theta[i] = base[i] - step;
        net.params_mut().unflatten(&theta)?;
        let fm = training_loss_value(&net, schedule, batch)?;
        worst = worst.max(relative_error(analytic[i], (fp - fm) / (2.0 * step)));
    }
    Ok(worst)
}

fn training_loss_value(denoiser: &Denoiser, schedule: &Schedule, batch: &NoisedBatch) -> Result<f64> {
    let mut tape = Tape::new();
    let params = denoiser.params().bind(&mut tape, false);
    let loss = training_loss_on_tape(&mut tape, &params, denoiser, schedule, batch)?;
    Ok(tape.value(loss).item())
}
