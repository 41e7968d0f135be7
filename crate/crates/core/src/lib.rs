//! SE(3)-equivariant dexterous grasp generation on projective geometric
//! algebra: a G(3,0,1) kernel, a small reverse-mode autodiff engine, an
//! equivariant transformer denoiser, DDPM sampling with physics guidance, a
//! parametric toy hand and a penalty-contact stability simulator.

pub mod autodiff;
pub mod diffusion;
pub mod error;
pub mod ga;
pub mod hand;
pub mod harness;
pub mod nn;
pub mod physics;

pub use error::{Error, Result};
