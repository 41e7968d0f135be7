//! Gaussian diffusion over flat grasp vectors: schedule, training loss and
//! the plain and physics-guided reverse samplers.

mod codec;
mod loss;
mod noise;
mod sampler;
mod schedule;

pub use codec::GraspCodec;
pub use loss::{training_loss, training_loss_grad_check, training_loss_on_tape, NoisedBatch};
pub use noise::NoiseStream;
pub use sampler::{
    guidance_gradient, guided_reverse_step, reverse_step, sample, sample_cloud, GradientSource, Guide, GuidanceConfig,
    SampleOutput, TraceStep,
};
pub use schedule::Schedule;
