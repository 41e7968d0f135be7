use std::sync::Arc;

use nalgebra::{Matrix3, Matrix6, UnitQuaternion, Vector3, Vector6};

use super::object::RigidObject;
use crate::error::{invalid, Error, Result};
use crate::hand::WorldSphere;

#[derive(Clone, Debug, PartialEq)]
pub struct SimParams {
    /// Time step (s).
    pub dt: f64,
    pub steps: usize,
    /// Normal contact stiffness (N/m).
    pub k_n: f64,
    /// Normal contact damping (N·s/m).
    pub c_n: f64,
    /// Tangential damping (N·s/m).
    pub c_t: f64,
    /// Cap on tangential force relative to the normal force.
    pub mu: f64,
    /// Contact radius assigned to each object point (m).
    pub point_radius: f64,
    pub gravity: bool,
}

impl Default for SimParams {
    fn default() -> Self {
        Self { dt: 0.01, steps: 60, k_n: 1000.0, c_n: 10.0, c_t: 5.0, mu: 1.0, point_radius: 0.005, gravity: false }
    }
}

impl SimParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) {
            return Err(invalid("dt must be positive"));
        }
        if !(self.k_n >= 0.0 && self.c_n >= 0.0 && self.c_t >= 0.0 && self.mu >= 0.0) {
            return Err(invalid("contact coefficients must be non-negative"));
        }
        if !(self.point_radius >= 0.0) {
            return Err(invalid("point radius must be non-negative"));
        }
        Ok(())
    }
}

/// A rigid object at an initial pose facing static hand spheres.
#[derive(Clone, Debug)]
pub struct SimScene {
    pub object: Arc<RigidObject>,
    /// World position of the object's center of mass.
    pub position: Vector3<f64>,
    pub orientation: UnitQuaternion<f64>,
    pub spheres: Vec<WorldSphere>,
    pub params: SimParams,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceEntry {
    pub step: usize,
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub angular_velocity: Vector3<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RolloutResult {
    /// Final linear velocity (m/s).
    pub linear_velocity: Vector3<f64>,
    /// Final angular velocity in the world frame (rad/s).
    pub angular_velocity: Vector3<f64>,
    pub final_position: Vector3<f64>,
    /// Largest center-of-mass displacement from the start (m).
    pub max_displacement: f64,
    pub trace: Vec<TraceEntry>,
}

const GRAVITY: f64 = 9.81;

impl SimScene {
    pub fn new(object: Arc<RigidObject>, position: Vector3<f64>, spheres: Vec<WorldSphere>, params: SimParams) -> Self {
        Self { object, position, orientation: UnitQuaternion::identity(), spheres, params }
    }

    /// Rollout with initial velocity `v0` and no applied acceleration.
    pub fn rollout(&self, v0: &Vector3<f64>) -> Result<RolloutResult> {
        self.rollout_with(v0, &Vector3::zeros(), false)
    }

    /// Integrates the object for `params.steps` steps under contact forces and a
    /// uniform applied acceleration `accel` (m/s²).
    ///
    /// Each step is linearly implicit in the velocity: spring and damper
    /// forces are linearized about the next-step velocity, giving a 6×6
    /// solve `(M + dt·A) V⁺ = M V + dt·W`.
    pub fn rollout_with(&self, v0: &Vector3<f64>, accel: &Vector3<f64>, record_trace: bool) -> Result<RolloutResult> {
        let p = &self.params;
        p.validate()?;
        let obj = &*self.object;
        let mut accel = *accel;
        if p.gravity {
            accel.z -= GRAVITY;
        }
        let m = obj.mass();
        let dt = p.dt;
        let x0 = self.position;
        let mut x = x0;
        let mut rot = self.orientation;
        let mut v = *v0;
        let mut w = Vector3::zeros();
        let mut max_disp: f64 = 0.0;
        let mut trace = Vec::new();
        let mut budget = 0.0;
        let mut ext_work = 0.0;
        for step in 0..p.steps {
            let r = *rot.to_rotation_matrix().matrix();
            let inertia = r * obj.inertia() * r.transpose();
            let mut a = Matrix6::<f64>::zeros();
            let mut rhs = Vector6::<f64>::zeros();
            let mut elastic = 0.0;
            let mut contacts = 0usize;
            for s in &self.spheres {
                let reach = s.radius + p.point_radius;
                if (s.center - x).norm() > reach + obj.bound() {
                    continue;
                }
                let cb = r.transpose() * (s.center - x);
                obj.near(&cb, reach, |i| {
                    let b = r * obj.points()[i];
                    let diff = x + b - s.center;
                    let dist = diff.norm();
                    if dist < 1e-12 {
                        return;
                    }
                    let d = reach - dist;
                    let n = diff / dist;
                    let u = v + w.cross(&b);
                    let vn = n.dot(&u);
                    // Overlap stores energy even while the damped force is
                    // clamped to zero.
                    if d > 0.0 {
                        elastic += 0.5 * p.k_n * d * d;
                    }
                    let f_est = p.k_n * d - p.c_n * vn;
                    if f_est <= 0.0 {
                        return;
                    }
                    contacts += 1;
                    let ut = u - n * vn;
                    let ut_norm = ut.norm();
                    let ct = if ut_norm > 1e-12 { p.c_t.min(p.mu * f_est / ut_norm) } else { p.c_t };
                    let nn = n * n.transpose();
                    let dmat = nn * (p.k_n * dt + p.c_n) + (Matrix3::identity() - nn) * ct;
                    let sk = b.cross_matrix();
                    let ds = dmat * sk;
                    let sd = sk * dmat;
                    add_block(&mut a, 0, 0, &dmat);
                    add_block(&mut a, 0, 3, &(-ds));
                    add_block(&mut a, 3, 0, &sd);
                    add_block(&mut a, 3, 3, &(-(sk * ds)));
                    let f = n * (p.k_n * d);
                    let tq = b.cross(&f);
                    for k in 0..3 {
                        rhs[k] += dt * f[k];
                        rhs[3 + k] += dt * tq[k];
                    }
                });
            }
            let energy = 0.5 * m * v.norm_squared() + 0.5 * w.dot(&(inertia * w)) + elastic;
            if step == 0 {
                budget = energy;
            }
            let limit = 10.0 * (budget + ext_work) + 1e-12;
            if !energy.is_finite() || energy > limit {
                return Err(Error::UnstableIntegration { step, energy, budget: budget + ext_work });
            }
            if contacts == 0 {
                v += accel * dt;
            } else {
                let mut mass = Matrix6::<f64>::zeros();
                for k in 0..3 {
                    mass[(k, k)] = m;
                }
                add_block(&mut mass, 3, 3, &inertia);
                let mv = Vector6::new(m * v.x, m * v.y, m * v.z, 0.0, 0.0, 0.0);
                let iw = inertia * w;
                let mut b6 = rhs + mv;
                for k in 0..3 {
                    b6[3 + k] += iw[k];
                    b6[k] += dt * m * accel[k];
                }
                let lhs = mass + a * dt;
                let sol = match lhs.cholesky() {
                    Some(ch) => ch.solve(&b6),
                    None => lhs.lu().solve(&b6).ok_or_else(|| Error::NonFinite("singular contact system".into()))?,
                };
                v = Vector3::new(sol[0], sol[1], sol[2]);
                w = Vector3::new(sol[3], sol[4], sol[5]);
            }
            ext_work += (m * accel.dot(&v)).abs() * dt;
            x += v * dt;
            if w != Vector3::zeros() {
                rot = UnitQuaternion::from_scaled_axis(w * dt) * rot;
            }
            max_disp = max_disp.max((x - x0).norm());
            if record_trace {
                trace.push(TraceEntry { step: step + 1, position: x, velocity: v, angular_velocity: w });
            }
        }
        if !(v.iter().chain(w.iter()).all(|c| c.is_finite())) {
            return Err(Error::NonFinite("rollout velocity".into()));
        }
        Ok(RolloutResult { linear_velocity: v, angular_velocity: w, final_position: x, max_displacement: max_disp, trace })
    }
}

fn add_block(m: &mut Matrix6<f64>, r0: usize, c0: usize, b: &Matrix3<f64>) {
    for i in 0..3 {
        for j in 0..3 {
            m[(r0 + i, c0 + j)] += b[(i, j)];
        }
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::ga::random_unit_quaternion;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn ball(rng: &mut ChaCha8Rng, n: usize, radius: f64) -> Vec<Vector3<f64>> {
        (0..n)
            .map(|_| loop {
                let p = Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                if p.norm() > 0.1 && p.norm() <= 1.0 {
                    break p.normalize() * radius;
                }
            })
            .collect()
    }

    /// Spheres on a shell around the origin, overlapping the object surface.
    fn cage(radius: f64) -> Vec<WorldSphere> {
        let mut out = Vec::new();
        for i in 0..6 {
            for j in 0..12 {
                let th = std::f64::consts::PI * (i as f64 + 0.5) / 6.0;
                let ph = std::f64::consts::TAU * j as f64 / 12.0;
                let d = Vector3::new(th.sin() * ph.cos(), th.sin() * ph.sin(), th.cos());
                out.push(WorldSphere { center: d * (radius + 0.012), radius: 0.01 });
            }
        }
        out
    }

    fn scene(points: &[Vector3<f64>], spheres: Vec<WorldSphere>) -> SimScene {
        let obj = Arc::new(RigidObject::new(points, 0.1).unwrap());
        let com = points.iter().sum::<Vector3<f64>>() / points.len() as f64;
        SimScene::new(obj, com, spheres, SimParams::default())
    }

    #[test]
    fn free_object_keeps_velocity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = scene(&ball(&mut rng, 100, 0.03), vec![]);
        let v0 = Vector3::new(0.1, -0.05, 0.02);
        let r = s.rollout(&v0).unwrap();
        assert_eq!(r.linear_velocity, v0);
        assert_eq!(r.angular_velocity, Vector3::zeros());
        let r0 = s.rollout(&Vector3::zeros()).unwrap();
        assert_eq!(r0.linear_velocity, Vector3::zeros());
    }

    #[test]
    fn cage_damps_motion() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = scene(&ball(&mut rng, 200, 0.03), cage(0.03));
        let v0 = Vector3::new(0.1, 0.0, 0.0);
        let r = s.rollout(&v0).unwrap();
        assert!(r.linear_velocity.norm() < v0.norm());
    }

    #[test]
    fn deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = scene(&ball(&mut rng, 200, 0.03), cage(0.03));
        let v0 = Vector3::new(0.0, 0.1, 0.05);
        assert_eq!(s.rollout(&v0).unwrap(), s.rollout(&v0).unwrap());
    }

    #[test]
    fn rotation_covariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pts = ball(&mut rng, 150, 0.03);
        let spheres: Vec<WorldSphere> = cage(0.03).into_iter().step_by(3).collect();
        let v0 = Vector3::new(0.08, -0.03, 0.05);
        let base = scene(&pts, spheres.clone()).rollout(&v0).unwrap();
        for _ in 0..5 {
            let q = random_unit_quaternion(&mut rng);
            let pts_r: Vec<_> = pts.iter().map(|p| q * p).collect();
            let sp_r: Vec<_> = spheres.iter().map(|s| WorldSphere { center: q * s.center, radius: s.radius }).collect();
            let moved = scene(&pts_r, sp_r).rollout(&(q * v0)).unwrap();
            assert!((moved.linear_velocity - q * base.linear_velocity).norm() < 1e-6);
            assert!((moved.angular_velocity - q * base.angular_velocity).norm() < 1e-6);
        }
    }

    #[test]
    fn free_fall_under_acceleration() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut s = scene(&ball(&mut rng, 50, 0.03), vec![]);
        s.params.steps = 60;
        let r = s.rollout_with(&Vector3::zeros(), &Vector3::new(0.5, 0.0, 0.0), false).unwrap();
        // Semi-implicit Euler: x_n = a dt² n(n + 1) / 2.
        assert!((r.max_displacement - 0.5 * 1e-4 * 60.0 * 61.0 / 2.0).abs() < 1e-12);
    }

    #[test]
    fn huge_step_is_still_stable_or_reported() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut s = scene(&ball(&mut rng, 200, 0.03), cage(0.03));
        s.params.dt = 0.05;
        s.params.k_n = 1e5;
        match s.rollout(&Vector3::new(0.5, 0.0, 0.0)) {
            Ok(r) => assert!(r.linear_velocity.iter().all(|v| v.is_finite())),
            Err(e) => assert!(matches!(e, Error::UnstableIntegration { .. })),
        }
    }
}
