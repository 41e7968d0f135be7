//! Equivariant network layers and the conditional noise predictor.

mod checkpoint;
mod denoiser;
pub mod downsample;
pub mod layers;
mod params;

pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint};
pub use denoiser::{
    assemble, time_features, Denoiser, DenoiserConfig, EncodedObject, ForwardVars, GraspTokens, ObjectTokens,
    GRASP_CHANNELS,
};
pub use params::ParamStore;

#[cfg(test)]
mod tests;
