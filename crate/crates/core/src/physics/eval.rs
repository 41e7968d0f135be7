use nalgebra::Vector3;

use super::loss::PhysicsContext;
use crate::error::{invalid, Result};
use crate::hand::Grasp;

/// Perturbation test: constant acceleration along each signed axis.
#[derive(Clone, Debug, PartialEq)]
pub struct SuccessCriteria {
    /// Applied acceleration magnitude (m/s²).
    pub accel: f64,
    pub steps: usize,
    /// Largest allowed displacement (m).
    pub threshold: f64,
    /// Tangential force cap used during the test.
    pub mu: f64,
}

impl Default for SuccessCriteria {
    fn default() -> Self {
        Self { accel: 0.5, steps: 60, threshold: 0.02, mu: 10.0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SuccessReport {
    pub passed: bool,
    /// Maximum displacement per test direction, ordered +x, −x, +y, −y, +z, −z.
    pub displacements: [f64; 6],
}

impl SuccessReport {
    pub fn max_displacement(&self) -> f64 {
        self.displacements.iter().copied().fold(0.0, f64::max)
    }
}

pub fn success_eval(g: &Grasp, ctx: &PhysicsContext, criteria: &SuccessCriteria) -> Result<SuccessReport> {
    let mut scene = ctx.scene(g)?;
    scene.params.mu = criteria.mu;
    scene.params.steps = criteria.steps;
    scene.params.gravity = false;
    let mut displacements = [0.0; 6];
    for (i, d) in displacements.iter_mut().enumerate() {
        let mut a = Vector3::zeros();
        a[i / 2] = if i % 2 == 0 { criteria.accel } else { -criteria.accel };
        *d = scene.rollout_with(&Vector3::zeros(), &a, false)?.max_displacement;
    }
    Ok(SuccessReport { passed: displacements.iter().all(|d| *d < criteria.threshold), displacements })
}

/// Mean over joints of the population standard deviation across grasps.
pub fn diversity_score(grasps: &[Grasp]) -> Result<f64> {
    if grasps.len() < 2 {
        return Err(invalid("diversity needs at least two grasps"));
    }
    let k = grasps[0].dof();
    if k == 0 || grasps.iter().any(|g| g.dof() != k) {
        return Err(invalid("grasps must share a non-zero joint count"));
    }
    let n = grasps.len() as f64;
    let mut total = 0.0;
    for j in 0..k {
        let mean = grasps.iter().map(|g| g.q[j]).sum::<f64>() / n;
        let var = grasps.iter().map(|g| (g.q[j] - mean).powi(2)).sum::<f64>() / n;
        total += var.sqrt();
    }
    Ok(total / k as f64)
}
