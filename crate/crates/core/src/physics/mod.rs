//! Rigid-body stability rollouts with penalty contact, physics-informed
//! losses and the perturbation success test.

mod eval;
mod loss;
mod object;
mod sim;

pub use eval::{diversity_score, success_eval, SuccessCriteria, SuccessReport};
pub use loss::{
    axis_velocities, limit_loss, limit_loss_grad, range_loss, range_loss_grad, stability_loss, PhysLoss, PhysicsContext,
    ALPHA_LIMIT, ALPHA_RANGE,
};
pub use object::RigidObject;
pub use sim::{RolloutResult, SimParams, SimScene, TraceEntry};

#[cfg(test)]
mod tests;
