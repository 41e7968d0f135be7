use std::sync::Arc;

use nalgebra::Vector3;

use super::object::RigidObject;
use super::sim::{SimParams, SimScene};
use crate::error::{invalid, Result};
use crate::hand::{Grasp, HandSpec};

pub const ALPHA_RANGE: f64 = 0.01;
pub const ALPHA_LIMIT: f64 = 10.0;

/// `{±x, ±y, ±z} · speed`.
pub fn axis_velocities(speed: f64) -> Vec<Vector3<f64>> {
    let mut out = Vec::with_capacity(6);
    for k in 0..3 {
        for s in [1.0, -1.0] {
            let mut v = Vector3::zeros();
            v[k] = s * speed;
            out.push(v);
        }
    }
    out
}

/// Mean of final squared linear plus angular speeds over the rollouts.
pub fn stability_loss(scene: &SimScene, velocities: &[Vector3<f64>]) -> Result<f64> {
    if velocities.is_empty() {
        return Err(invalid("stability loss needs at least one initial velocity"));
    }
    let mut total = 0.0;
    for v0 in velocities {
        let r = scene.rollout(v0)?;
        total += r.linear_velocity.norm_squared() + r.angular_velocity.norm_squared();
    }
    Ok(total / velocities.len() as f64)
}

fn check_lengths(q: &[f64], low: &[f64], up: &[f64]) -> Result<()> {
    if q.len() != low.len() || q.len() != up.len() {
        return Err(invalid(format!("{} joints but limits of length {} and {}", q.len(), low.len(), up.len())));
    }
    Ok(())
}

/// `‖q − (q_up + q_low)/2‖²`.
pub fn range_loss(q: &[f64], low: &[f64], up: &[f64]) -> Result<f64> {
    check_lengths(q, low, up)?;
    Ok(q.iter().zip(low.iter().zip(up)).map(|(q, (l, u))| (q - 0.5 * (l + u)).powi(2)).sum())
}

pub fn range_loss_grad(q: &[f64], low: &[f64], up: &[f64]) -> Result<Vec<f64>> {
    check_lengths(q, low, up)?;
    Ok(q.iter().zip(low.iter().zip(up)).map(|(q, (l, u))| 2.0 * (q - 0.5 * (l + u))).collect())
}

/// `Σ_j max(q_j − up_j, 0) + max(low_j − q_j, 0)`.
pub fn limit_loss(q: &[f64], low: &[f64], up: &[f64]) -> Result<f64> {
    check_lengths(q, low, up)?;
    Ok(q.iter().zip(low.iter().zip(up)).map(|(q, (l, u))| (q - u).max(0.0) + (l - q).max(0.0)).sum())
}

pub fn limit_loss_grad(q: &[f64], low: &[f64], up: &[f64]) -> Result<Vec<f64>> {
    check_lengths(q, low, up)?;
    Ok(q.iter()
        .zip(low.iter().zip(up))
        .map(|(q, (l, u))| {
            if q > u {
                1.0
            } else if q < l {
                -1.0
            } else {
                0.0
            }
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhysLoss {
    pub total: f64,
    pub stability: f64,
    pub range: f64,
    pub limit: f64,
}

/// Everything needed to score grasps on one object.
#[derive(Clone, Debug)]
pub struct PhysicsContext {
    pub hand: HandSpec,
    pub object: Arc<RigidObject>,
    /// World position of the object's center of mass.
    pub object_position: Vector3<f64>,
    pub params: SimParams,
    pub velocities: Vec<Vector3<f64>>,
    pub alpha_range: f64,
    pub alpha_limit: f64,
    /// Central-difference step for the stability gradient.
    pub fd_step: f64,
}

impl PhysicsContext {
    pub fn new(hand: HandSpec, points: &[Vector3<f64>], mass: f64, params: SimParams, speed: f64) -> Result<Self> {
        let object = Arc::new(RigidObject::new(points, mass)?);
        let object_position = points.iter().sum::<Vector3<f64>>() / points.len() as f64;
        Ok(Self {
            hand,
            object,
            object_position,
            params,
            velocities: axis_velocities(speed),
            alpha_range: ALPHA_RANGE,
            alpha_limit: ALPHA_LIMIT,
            fd_step: 1e-4,
        })
    }

    pub fn scene(&self, g: &Grasp) -> Result<SimScene> {
        let spheres = self.hand.forward_kinematics(g)?;
        Ok(SimScene::new(self.object.clone(), self.object_position, spheres, self.params.clone()))
    }

    /// True when no hand sphere can touch the object during any rollout,
    /// even after a finite-difference perturbation of the grasp.
    fn out_of_reach(&self, scene: &SimScene) -> bool {
        let speed = self.velocities.iter().map(|v| v.norm()).fold(0.0, f64::max);
        let travel = speed * self.params.dt * self.params.steps as f64;
        let margin = 1e-3 + 100.0 * self.fd_step;
        scene.spheres.iter().all(|s| {
            (s.center - self.object_position).norm()
                > s.radius + self.params.point_radius + self.object.bound() + travel + margin
        })
    }

    fn free_loss(&self) -> f64 {
        self.velocities.iter().map(|v| v.norm_squared()).sum::<f64>() / self.velocities.len() as f64
    }

    pub fn stability(&self, g: &Grasp) -> Result<f64> {
        let scene = self.scene(g)?;
        if self.out_of_reach(&scene) {
            return Ok(self.free_loss());
        }
        stability_loss(&scene, &self.velocities)
    }

    pub fn phys_loss(&self, g: &Grasp) -> Result<PhysLoss> {
        let (low, up) = (self.hand.lower_limits(), self.hand.upper_limits());
        let stability = self.stability(g)?;
        let range = range_loss(&g.q, &low, &up)?;
        let limit = limit_loss(&g.q, &low, &up)?;
        Ok(PhysLoss { total: stability + self.alpha_range * range + self.alpha_limit * limit, stability, range, limit })
    }

    /// Loss and its gradient with respect to the flat `[r, p, q]` grasp
    /// vector: analytic for the joint terms, central differences for the
    /// stability term.
    pub fn phys_loss_grad(&self, g: &Grasp) -> Result<(PhysLoss, Vec<f64>)> {
        let loss = self.phys_loss(g)?;
        let (low, up) = (self.hand.lower_limits(), self.hand.upper_limits());
        let mut grad = vec![0.0; 9 + g.dof()];
        let scene = self.scene(g)?;
        if !self.out_of_reach(&scene) {
            let base = g.to_vec();
            for i in 0..base.len() {
                let mut x = base.clone();
                x[i] = base[i] + self.fd_step;
                let fp = self.stability(&Grasp::from_slice(&x)?)?;
                x[i] = base[i] - self.fd_step;
                let fm = self.stability(&Grasp::from_slice(&x)?)?;
                grad[i] = (fp - fm) / (2.0 * self.fd_step);
            }
        }
        let gr = range_loss_grad(&g.q, &low, &up)?;
        let gl = limit_loss_grad(&g.q, &low, &up)?;
        for j in 0..g.dof() {
            grad[9 + j] += self.alpha_range * gr[j] + self.alpha_limit * gl[j];
        }
        Ok((loss, grad))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::relative_error;

    #[test]
    fn range_and_limit_examples() {
        let (low, up) = ([0.0, -1.0], [1.0, 1.0]);
        assert_eq!(range_loss(&[0.5, 0.0], &low, &up).unwrap(), 0.0);
        assert_eq!(limit_loss(&[0.5, 0.0], &low, &up).unwrap(), 0.0);
        assert_eq!(range_loss(&[1.0, 1.0], &low, &up).unwrap(), 0.25 + 1.0);
        assert_eq!(limit_loss(&[1.0, 1.0], &low, &up).unwrap(), 0.0);
        assert_eq!(limit_loss(&[1.5], &[0.0], &[1.0]).unwrap(), 0.5);
        assert_eq!(limit_loss(&[-0.25], &[0.0], &[1.0]).unwrap(), 0.25);
        assert!(range_loss(&[0.0], &low, &up).is_err());
    }

    #[test]
    fn limit_zero_exactly_on_box() {
        for q in [-0.5, -1e-12, 0.0, 0.3, 1.0, 1.0 + 1e-12, 2.0] {
            let inside = (0.0..=1.0).contains(&q);
            assert_eq!(limit_loss(&[q], &[0.0], &[1.0]).unwrap() == 0.0, inside, "{q}");
        }
    }

    #[test]
    fn joint_term_gradients_match_differences() {
        let (low, up) = (vec![0.0, 0.0, -0.5], vec![1.0, 1.5, 0.5]);
        let q = vec![1.3, 0.4, -0.9];
        let f = |q: &[f64]| ALPHA_RANGE * range_loss(q, &low, &up).unwrap() + ALPHA_LIMIT * limit_loss(q, &low, &up).unwrap();
        let gr = range_loss_grad(&q, &low, &up).unwrap();
        let gl = limit_loss_grad(&q, &low, &up).unwrap();
        for j in 0..3 {
            let h = 1e-6;
            let mut a = q.clone();
            a[j] += h;
            let mut b = q.clone();
            b[j] -= h;
            let numeric = (f(&a) - f(&b)) / (2.0 * h);
            let analytic = ALPHA_RANGE * gr[j] + ALPHA_LIMIT * gl[j];
            assert!(relative_error(analytic, numeric) < 1e-6);
        }
    }
}
