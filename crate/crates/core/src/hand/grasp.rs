use nalgebra::{Matrix3, Vector3};

use super::rot6d;
use crate::error::{invalid, Result};
use crate::ga::Versor;

/// Hand pose: 6D base rotation `r`, base translation `p` (meters) and joint
/// angles `q` (radians).
#[derive(Clone, Debug, PartialEq)]
pub struct Grasp {
    pub r: [f64; 6],
    pub p: [f64; 3],
    pub q: Vec<f64>,
}

impl Grasp {
    pub fn new(r: [f64; 6], p: [f64; 3], q: Vec<f64>) -> Self {
        Self { r, p, q }
    }

    pub fn from_pose(rot: &Matrix3<f64>, p: &Vector3<f64>, q: Vec<f64>) -> Self {
        Self { r: rot6d::encode(rot), p: (*p).into(), q }
    }

    pub fn dof(&self) -> usize {
        self.q.len()
    }

    pub fn rotation(&self) -> Result<Matrix3<f64>> {
        rot6d::decode(&self.r)
    }

    pub fn position(&self) -> Vector3<f64> {
        Vector3::from(self.p)
    }

    /// Flat `[r, p, q]` vector of length `9 + k`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(9 + self.q.len());
        v.extend_from_slice(&self.r);
        v.extend_from_slice(&self.p);
        v.extend_from_slice(&self.q);
        v
    }

    pub fn from_slice(v: &[f64]) -> Result<Self> {
        if v.len() < 9 {
            return Err(invalid(format!("grasp vector needs at least 9 entries, got {}", v.len())));
        }
        Ok(Self {
            r: std::array::from_fn(|i| v[i]),
            p: [v[6], v[7], v[8]],
            q: v[9..].to_vec(),
        })
    }

    /// Copy with `r` replaced by its Gram–Schmidt orthonormalized columns.
    pub fn orthonormalized(&self) -> Result<Self> {
        Ok(Self { r: rot6d::encode(&self.rotation()?), ..self.clone() })
    }

    /// Applies a versor: rotation columns as directions, the base position
    /// as a point, joint angles untouched.
    pub fn transformed(&self, u: &Versor) -> Self {
        let lin = u.linear_part();
        Self {
            r: rot6d::rotate(&self.r, &lin),
            p: u.apply_point(&self.position()).into(),
            q: self.q.clone(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_vec().iter().all(|v| v.is_finite())
    }
}
