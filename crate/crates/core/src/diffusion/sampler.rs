use nalgebra::Vector3;

use super::codec::GraspCodec;
use super::noise::NoiseStream;
use super::schedule::Schedule;
use crate::error::{invalid, Error, Result};
use crate::hand::Grasp;
use crate::nn::{Denoiser, EncodedObject};
use crate::physics::PhysicsContext;

/// How the guidance gradient is obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GradientSource {
    /// Analytic joint terms, central differences for the stability term.
    Mixed,
    /// Central differences of the whole physics loss.
    FiniteDifference,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GuidanceConfig {
    /// Scale `λ ≥ 0`.
    pub scale: f64,
    pub source: GradientSource,
    /// Inclusive range of steps `t` where guidance is applied; all steps
    /// when `None`.
    pub steps: Option<(usize, usize)>,
    /// Cap on the Euclidean length of the mean shift per step.
    pub max_shift: Option<f64>,
    /// Evaluate the physics loss at the denoiser's clean-grasp prediction
    /// `x̂_0` rather than at the noisy `x_t`.
    pub at_prediction: bool,
}

impl Default for GuidanceConfig {
    fn default() -> Self {
        Self { scale: 1.0, source: GradientSource::Mixed, steps: None, max_shift: Some(0.002), at_prediction: true }
    }
}

impl GuidanceConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.scale >= 0.0) || !self.scale.is_finite() {
            return Err(invalid(format!("guidance scale must be finite and non-negative, got {}", self.scale)));
        }
        if let Some((lo, hi)) = self.steps {
            if lo == 0 || lo > hi {
                return Err(invalid(format!("guidance step range [{lo}, {hi}] is empty or starts at 0")));
            }
        }
        if let Some(m) = self.max_shift {
            if !(m > 0.0) {
                return Err(invalid("max_shift must be positive"));
            }
        }
        Ok(())
    }

    pub fn is_active(&self, t: usize) -> bool {
        self.scale > 0.0 && self.steps.is_none_or(|(lo, hi)| (lo..=hi).contains(&t))
    }
}

/// Per-step guidance diagnostics.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceStep {
    pub t: usize,
    pub loss: f64,
    pub grad_norm: f64,
}

#[derive(Clone, Debug)]
pub struct SampleOutput {
    /// Final grasp with orthonormalized rotation columns.
    pub grasp: Grasp,
    /// Final diffusion-space vector.
    pub x0: Vec<f64>,
    pub trace: Vec<TraceStep>,
    pub warnings: Vec<String>,
}

/// Unguided step: `μ_t + σ_t z`, with no noise at `t = 1`.
pub fn reverse_step(schedule: &Schedule, xt: &[f64], eps_hat: &[f64], t: usize, z: Option<&[f64]>) -> Result<Vec<f64>> {
    let mean = schedule.posterior_mean(xt, t, eps_hat)?;
    add_noise(schedule, mean, t, z)
}

fn add_noise(schedule: &Schedule, mut mean: Vec<f64>, t: usize, z: Option<&[f64]>) -> Result<Vec<f64>> {
    if t > 1 {
        let z = z.ok_or_else(|| invalid(format!("step {t} needs a noise draw")))?;
        if z.len() != mean.len() {
            return Err(invalid(format!("noise has {} entries, expected {}", z.len(), mean.len())));
        }
        let sigma = schedule.posterior_variance(t)?.sqrt();
        for (m, z) in mean.iter_mut().zip(z) {
            *m += sigma * z;
        }
    }
    Ok(mean)
}

/// Physics loss and its gradient over the raw grasp `[r, p, q]` decoded
/// from `x`, with the gradient mapped into diffusion coordinates as a
/// displacement. Subtracting it moves the grasp itself along `-∇_g L_phys`.
pub fn guidance_gradient(x: &[f64], codec: &GraspCodec, ctx: &PhysicsContext, source: GradientSource) -> Result<(f64, Vec<f64>)> {
    let g = codec.decode(x)?;
    match source {
        GradientSource::Mixed => {
            let (loss, grad) = ctx.phys_loss_grad(&g)?;
            Ok((loss.total, codec.push_forward(&grad)?))
        }
        GradientSource::FiniteDifference => {
            let h = ctx.fd_step;
            let loss = ctx.phys_loss(&g)?.total;
            let mut grad = vec![0.0; x.len()];
            let base = g.to_vec();
            for i in 0..base.len() {
                let mut v = base.clone();
                v[i] = base[i] + h;
                let fp = ctx.phys_loss(&Grasp::from_slice(&v)?)?.total;
                v[i] = base[i] - h;
                let fm = ctx.phys_loss(&Grasp::from_slice(&v)?)?.total;
                grad[i] = (fp - fm) / (2.0 * h);
            }
            Ok((loss, codec.push_forward(&grad)?))
        }
    }
}

/// Guided step: the mean moves against the physics gradient,
/// `μ̂ = μ − λ ∇_g L_phys`, then noise is added as in [`reverse_step`]. The
/// gradient is taken at `x̂_0` or `x_t` per [`GuidanceConfig::at_prediction`].
/// Steps outside the active range, or with `λ = 0`, do no physics work and
/// reproduce [`reverse_step`] exactly. A failed or non-finite gradient
/// skips the shift and returns a warning.
#[allow(clippy::too_many_arguments)]
pub fn guided_reverse_step(
    schedule: &Schedule,
    xt: &[f64],
    eps_hat: &[f64],
    t: usize,
    z: Option<&[f64]>,
    guidance: &GuidanceConfig,
    codec: &GraspCodec,
    ctx: &PhysicsContext,
) -> Result<(Vec<f64>, Option<TraceStep>, Option<String>)> {
    let mut mean = schedule.posterior_mean(xt, t, eps_hat)?;
    if !guidance.is_active(t) {
        return Ok((add_noise(schedule, mean, t, z)?, None, None));
    }
    let x0_hat;
    let at = if guidance.at_prediction {
        let ab = schedule.alpha_bar(t)?;
        x0_hat = xt.iter().zip(eps_hat).map(|(x, e)| (x - (1.0 - ab).sqrt() * e) / ab.sqrt()).collect::<Vec<_>>();
        &x0_hat[..]
    } else {
        xt
    };
    let (loss, grad) = match guidance_gradient(at, codec, ctx, guidance.source) {
        Ok(v) => v,
        Err(e @ (Error::DegenerateRotation { .. } | Error::UnstableIntegration { .. } | Error::NonFinite(_))) => {
            return Ok((add_noise(schedule, mean, t, z)?, None, Some(format!("step {t}: guidance skipped: {e}"))));
        }
        Err(e) => return Err(e),
    };
    let norm = grad.iter().map(|v| v * v).sum::<f64>().sqrt();
    let trace = TraceStep { t, loss, grad_norm: norm };
    if !norm.is_finite() || !loss.is_finite() {
        return Ok((add_noise(schedule, mean, t, z)?, Some(trace), Some(format!("step {t}: non-finite guidance gradient skipped"))));
    }
    let mut c = guidance.scale;
    if let Some(m) = guidance.max_shift {
        if c * norm > m {
            c = m / norm;
        }
    }
    for (m, g) in mean.iter_mut().zip(&grad) {
        *m -= c * g;
    }
    Ok((add_noise(schedule, mean, t, z)?, Some(trace), None))
}

/// Optional physics guidance for [`sample`].
pub struct Guide<'a> {
    pub config: &'a GuidanceConfig,
    pub context: &'a PhysicsContext,
}

/// Draws one grasp per noise stream for an encoded object: `x_T` from the
/// stream, `T` reverse steps, then Gram–Schmidt on the rotation columns.
pub fn sample(
    denoiser: &Denoiser,
    schedule: &Schedule,
    object: &EncodedObject,
    codec: &GraspCodec,
    guide: Option<&Guide>,
    streams: &mut [NoiseStream],
) -> Result<Vec<SampleOutput>> {
    if let Some(g) = guide {
        g.config.validate()?;
    }
    let d = denoiser.config().output_dim();
    if codec.dim() != d {
        return Err(invalid(format!("codec has {} coordinates, model {d}", codec.dim())));
    }
    if streams.is_empty() {
        return Ok(Vec::new());
    }
    let mut xs: Vec<Vec<f64>> = streams.iter_mut().map(|s| s.draw(d)).collect();
    let mut traces = vec![Vec::new(); xs.len()];
    let mut warnings = vec![Vec::new(); xs.len()];
    for t in (1..=schedule.steps()).rev() {
        let tokens = denoiser.grasp_tokens(&codec.centroid, &xs, t)?;
        let eps = denoiser.predict_encoded(object, &tokens)?;
        for i in 0..xs.len() {
            let z = if t > 1 { Some(streams[i].draw(d)) } else { None };
            xs[i] = match guide {
                Some(g) => {
                    let (x, tr, w) =
                        guided_reverse_step(schedule, &xs[i], &eps[i], t, z.as_deref(), g.config, codec, g.context)?;
                    traces[i].extend(tr);
                    warnings[i].extend(w);
                    x
                }
                None => reverse_step(schedule, &xs[i], &eps[i], t, z.as_deref())?,
            };
        }
    }
    xs.into_iter()
        .zip(traces.into_iter().zip(warnings))
        .map(|(x, (trace, warnings))| {
            if !x.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite("sampled grasp".into()));
            }
            Ok(SampleOutput { grasp: codec.decode(&x)?.orthonormalized()?, x0: x, trace, warnings })
        })
        .collect()
}

/// Convenience wrapper that encodes the cloud first. The centroid used for
/// decoding is the cloud mean.
pub fn sample_cloud(
    denoiser: &Denoiser,
    schedule: &Schedule,
    points: &[Vector3<f64>],
    lower: &[f64],
    upper: &[f64],
    guide: Option<&Guide>,
    streams: &mut [NoiseStream],
) -> Result<Vec<SampleOutput>> {
    let tokens = denoiser.object_tokens(points)?;
    let centroid = points.iter().sum::<Vector3<f64>>() / points.len() as f64;
    let codec = GraspCodec::new(centroid, denoiser.config().pos_scale, lower, upper)?;
    sample(denoiser, schedule, &denoiser.encode(&tokens)?, &codec, guide, streams)
}
