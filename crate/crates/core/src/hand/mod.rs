//! Parametric toy hand: kinematic chains, forward kinematics to collision
//! spheres and the grasp parameterization.

mod grasp;
pub mod rot6d;
mod spec;

pub use grasp::Grasp;
pub use spec::{toy_hand, HandSpec, Joint, Sphere, WorldSphere};
