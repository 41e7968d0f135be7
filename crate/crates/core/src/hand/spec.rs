use nalgebra::{Matrix3, Rotation3, Unit, Vector3};
use serde::{Deserialize, Serialize};

use super::grasp::Grasp;
use crate::error::{invalid, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sphere {
    pub center: [f64; 3],
    pub radius: f64,
}

/// A revolute joint. Its child link frame is the parent frame translated by
/// `origin` and rotated by `q` about `axis`; all child-link spheres are given
/// in that frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Joint {
    pub name: String,
    /// Index of the parent joint, or `None` for the palm.
    pub parent: Option<usize>,
    pub axis: [f64; 3],
    pub origin: [f64; 3],
    pub lower: f64,
    pub upper: f64,
    pub spheres: Vec<Sphere>,
}

/// Kinematic description of a hand. The base frame sits at the palm center
/// with the palm normal along +z.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HandSpec {
    pub palm_spheres: Vec<Sphere>,
    pub joints: Vec<Joint>,
}

/// A collision sphere in world coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WorldSphere {
    pub center: Vector3<f64>,
    pub radius: f64,
}

const PALM_RADIUS: f64 = 0.02;
const PHALANX: f64 = 0.02;
const SPHERE_RADIUS: f64 = 0.006;
const SPLAY: f64 = std::f64::consts::FRAC_PI_4;

/// A planar-palm hand with `k_fingers` evenly spaced on a 4 cm palm, each a
/// chain of `joints_per_finger` flexion joints over 2 cm phalanges.
///
/// At `q = 0` each finger points up and outward at 45° from the palm normal;
/// positive flexion curls it toward the palm axis.
pub fn toy_hand(k_fingers: usize, joints_per_finger: usize) -> Result<HandSpec> {
    if k_fingers < 2 {
        return Err(invalid(format!("toy hand needs at least 2 fingers, got {k_fingers}")));
    }
    if joints_per_finger < 1 {
        return Err(invalid("toy hand needs at least 1 joint per finger"));
    }
    let z = Vector3::z();
    let mut palm_spheres = vec![Sphere { center: [0.0; 3], radius: SPHERE_RADIUS }];
    let mut joints = Vec::new();
    for f in 0..k_fingers {
        let angle = std::f64::consts::TAU * f as f64 / k_fingers as f64;
        let out = Vector3::new(angle.cos(), angle.sin(), 0.0);
        for s in [0.5, 1.0] {
            palm_spheres.push(Sphere { center: (out * PALM_RADIUS * s).into(), radius: SPHERE_RADIUS });
        }
        let dir = z * SPLAY.cos() + out * SPLAY.sin();
        let axis = out.cross(&z);
        for j in 0..joints_per_finger {
            let (parent, origin) = if j == 0 {
                (None, out * PALM_RADIUS)
            } else {
                (Some(joints.len() - 1), dir * PHALANX)
            };
            joints.push(Joint {
                name: format!("f{f}j{j}"),
                parent,
                axis: axis.into(),
                origin: origin.into(),
                lower: 0.0,
                upper: std::f64::consts::FRAC_PI_2,
                spheres: [0.5, 1.0]
                    .iter()
                    .map(|s| Sphere { center: (dir * PHALANX * *s).into(), radius: SPHERE_RADIUS })
                    .collect(),
            });
        }
    }
    let spec = HandSpec { palm_spheres, joints };
    spec.validate()?;
    Ok(spec)
}

impl HandSpec {
    pub fn dof(&self) -> usize {
        self.joints.len()
    }

    pub fn lower_limits(&self) -> Vec<f64> {
        self.joints.iter().map(|j| j.lower).collect()
    }

    pub fn upper_limits(&self) -> Vec<f64> {
        self.joints.iter().map(|j| j.upper).collect()
    }

    pub fn sphere_count(&self) -> usize {
        self.palm_spheres.len() + self.joints.iter().map(|j| j.spheres.len()).sum::<usize>()
    }

    pub fn validate(&self) -> Result<()> {
        let check_sphere = |s: &Sphere, owner: &str| {
            if !(s.radius > 0.0) || !s.center.iter().all(|c| c.is_finite()) {
                return Err(invalid(format!("{owner}: sphere radius must be positive and center finite")));
            }
            Ok(())
        };
        for s in &self.palm_spheres {
            check_sphere(s, "palm")?;
        }
        for (i, j) in self.joints.iter().enumerate() {
            if let Some(p) = j.parent {
                if p >= i {
                    return Err(invalid(format!("joint {}: parent {p} must precede it", j.name)));
                }
            }
            if !(j.lower < j.upper) {
                return Err(invalid(format!("joint {}: lower limit {} not below upper {}", j.name, j.lower, j.upper)));
            }
            let n = Vector3::from(j.axis).norm();
            if !((n - 1.0).abs() < 1e-9) {
                return Err(invalid(format!("joint {}: axis is not unit length", j.name)));
            }
            for s in &j.spheres {
                check_sphere(s, &j.name)?;
            }
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    /// World-frame collision spheres: palm spheres first, then each joint's
    /// child-link spheres in joint order.
    pub fn forward_kinematics(&self, g: &Grasp) -> Result<Vec<WorldSphere>> {
        if g.q.len() != self.dof() {
            return Err(invalid(format!("grasp has {} joint values, hand has {} joints", g.q.len(), self.dof())));
        }
        let base_rot = g.rotation()?;
        let base_pos = Vector3::from(g.p);
        let mut frames: Vec<(Matrix3<f64>, Vector3<f64>)> = Vec::with_capacity(self.dof());
        let mut out = Vec::with_capacity(self.sphere_count());
        for s in &self.palm_spheres {
            out.push(WorldSphere { center: base_rot * Vector3::from(s.center) + base_pos, radius: s.radius });
        }
        for (j, q) in self.joints.iter().zip(&g.q) {
            let (prot, ppos) = match j.parent {
                Some(p) => frames[p],
                None => (base_rot, base_pos),
            };
            let axis = Unit::new_normalize(Vector3::from(j.axis));
            let local = Rotation3::from_axis_angle(&axis, *q);
            let rot = prot * local.matrix();
            let pos = ppos + prot * Vector3::from(j.origin);
            for s in &j.spheres {
                out.push(WorldSphere { center: rot * Vector3::from(s.center) + pos, radius: s.radius });
            }
            frames.push((rot, pos));
        }
        Ok(out)
    }

    /// World positions of each joint origin (knuckles and inner joints).
    pub fn joint_origins(&self, g: &Grasp) -> Result<Vec<Vector3<f64>>> {
        if g.q.len() != self.dof() {
            return Err(invalid(format!("grasp has {} joint values, hand has {} joints", g.q.len(), self.dof())));
        }
        let base_rot = g.rotation()?;
        let base_pos = Vector3::from(g.p);
        let mut frames: Vec<(Matrix3<f64>, Vector3<f64>)> = Vec::with_capacity(self.dof());
        for (j, q) in self.joints.iter().zip(&g.q) {
            let (prot, ppos) = match j.parent {
                Some(p) => frames[p],
                None => (base_rot, base_pos),
            };
            let axis = Unit::new_normalize(Vector3::from(j.axis));
            let rot = prot * Rotation3::from_axis_angle(&axis, *q).matrix();
            frames.push((rot, ppos + prot * Vector3::from(j.origin)));
        }
        Ok(frames.into_iter().map(|(_, p)| p).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ga::{random_unit_quaternion, Versor};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn identity_grasp(k: usize) -> Grasp {
        Grasp::new([1.0, 0.0, 0.0, 0.0, 1.0, 0.0], [0.0; 3], vec![0.0; k])
    }

    #[test]
    fn toy_hand_dimensions() {
        let h = toy_hand(2, 2).unwrap();
        assert_eq!(h.dof(), 4);
        assert_eq!(h.sphere_count(), 13);
        assert!(h.joints.iter().all(|j| j.lower < j.upper));
        assert_eq!(toy_hand(3, 1).unwrap().dof(), 3);
        assert!(toy_hand(1, 2).is_err());
        assert!(toy_hand(2, 0).is_err());
    }

    #[test]
    fn rest_pose_matches_reference_spheres() {
        let h = toy_hand(2, 2).unwrap();
        let s = h.forward_kinematics(&identity_grasp(4)).unwrap();
        assert_eq!(s[0].center, Vector3::zeros());
        // Finger 0, second phalanx tip.
        let knuckle = Vector3::new(0.02, 0.0, 0.0);
        let dir = Vector3::new(SPLAY.sin(), 0.0, SPLAY.cos());
        let tip = s[h.palm_spheres.len() + 3].center;
        assert!((tip - (knuckle + dir * 0.04)).norm() < 1e-15);
    }

    #[test]
    fn fingertips_are_two_phalanges_from_knuckles() {
        let h = toy_hand(3, 2).unwrap();
        let g = identity_grasp(6);
        let s = h.forward_kinematics(&g).unwrap();
        let origins = h.joint_origins(&g).unwrap();
        let np = h.palm_spheres.len();
        for f in 0..3 {
            let tip = s[np + f * 4 + 3].center;
            assert!(((tip - origins[f * 2]).norm() - 0.04).abs() < 1e-12);
        }
    }

    #[test]
    fn flexion_curls_inward() {
        let h = toy_hand(2, 1).unwrap();
        let mut g = identity_grasp(2);
        g.q = vec![std::f64::consts::FRAC_PI_2, 0.0];
        let s = h.forward_kinematics(&g).unwrap();
        let tip = s[h.palm_spheres.len() + 1].center;
        // Rotated from 45° outward to 45° inward over the knuckle at x = 2 cm.
        assert!(tip.x < 0.02 && tip.z > 0.0);
    }

    #[test]
    fn base_translation_shifts_spheres() {
        let h = toy_hand(2, 2).unwrap();
        let mut g = identity_grasp(4);
        g.q = vec![0.3, 0.5, 0.1, 1.2];
        let a = h.forward_kinematics(&g).unwrap();
        g.p = [0.1, -0.2, 0.3];
        let b = h.forward_kinematics(&g).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((y.center - x.center - Vector3::new(0.1, -0.2, 0.3)).norm() < 1e-15);
        }
    }

    #[test]
    fn rigid_transform_equivariance() {
        let h = toy_hand(2, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..50 {
            let g = Grasp::new(
                std::array::from_fn(|_| rng.gen_range(-1.0..1.0)),
                std::array::from_fn(|_| rng.gen_range(-0.2..0.2)),
                (0..4).map(|_| rng.gen_range(0.0..1.5)).collect(),
            );
            let rot = *random_unit_quaternion(&mut rng).to_rotation_matrix().matrix();
            let t = Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let u = Versor::motor(&rot, &t);
            let moved = g.transformed(&u);
            let a = h.forward_kinematics(&g).unwrap();
            let b = h.forward_kinematics(&moved).unwrap();
            for (x, y) in a.iter().zip(&b) {
                assert!((y.center - (rot * x.center + t)).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn wrong_joint_count_is_rejected() {
        let h = toy_hand(2, 2).unwrap();
        assert!(h.forward_kinematics(&identity_grasp(3)).is_err());
    }

    #[test]
    fn toml_round_trip() {
        let h = toy_hand(2, 2).unwrap();
        let text = h.to_toml().unwrap();
        assert_eq!(HandSpec::from_toml(&text).unwrap(), h);
    }

    #[test]
    fn invalid_limits_rejected() {
        let mut h = toy_hand(2, 1).unwrap();
        h.joints[0].lower = 2.0;
        assert!(h.validate().is_err());
    }
}
