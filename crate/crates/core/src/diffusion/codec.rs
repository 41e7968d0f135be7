use nalgebra::Vector3;

use crate::error::{invalid, Result};
use crate::hand::Grasp;

/// Maps grasps to the diffusion space `[a1, a2, p', q']`: raw rotation
/// columns, base position relative to the object centroid in units of
/// `pos_scale`, and joints rescaled so the limit box becomes `[−1, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct GraspCodec {
    pub centroid: Vector3<f64>,
    pub pos_scale: f64,
    mid: Vec<f64>,
    half: Vec<f64>,
}

impl GraspCodec {
    pub fn new(centroid: Vector3<f64>, pos_scale: f64, lower: &[f64], upper: &[f64]) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(invalid("joint limit vectors differ in length"));
        }
        if !(pos_scale > 0.0) {
            return Err(invalid("pos_scale must be positive"));
        }
        if lower.iter().zip(upper).any(|(l, u)| !(l < u)) {
            return Err(invalid("joint limits need lower < upper"));
        }
        Ok(Self {
            centroid,
            pos_scale,
            mid: lower.iter().zip(upper).map(|(l, u)| 0.5 * (l + u)).collect(),
            half: lower.iter().zip(upper).map(|(l, u)| 0.5 * (u - l)).collect(),
        })
    }

    pub fn dim(&self) -> usize {
        9 + self.mid.len()
    }

    fn check(&self, n: usize) -> Result<()> {
        if n != self.dim() {
            return Err(invalid(format!("expected {} coordinates, got {n}", self.dim())));
        }
        Ok(())
    }

    pub fn encode(&self, g: &Grasp) -> Result<Vec<f64>> {
        self.check(9 + g.dof())?;
        let mut x = Vec::with_capacity(self.dim());
        x.extend_from_slice(&g.r);
        let p = (g.position() - self.centroid) / self.pos_scale;
        x.extend_from_slice(p.as_slice());
        x.extend(g.q.iter().zip(self.mid.iter().zip(&self.half)).map(|(q, (m, h))| (q - m) / h));
        Ok(x)
    }

    /// Inverse of [`GraspCodec::encode`]; `r` is left as is.
    pub fn decode(&self, x: &[f64]) -> Result<Grasp> {
        self.check(x.len())?;
        let p = self.centroid + Vector3::new(x[6], x[7], x[8]) * self.pos_scale;
        let q = x[9..].iter().zip(self.mid.iter().zip(&self.half)).map(|(v, (m, h))| m + h * v).collect();
        Ok(Grasp::new(std::array::from_fn(|i| x[i]), p.into(), q))
    }

    /// Maps a displacement of raw `[r, p, q]` to diffusion coordinates.
    pub fn push_forward(&self, step: &[f64]) -> Result<Vec<f64>> {
        self.check(step.len())?;
        let mut out = step.to_vec();
        for v in &mut out[6..9] {
            *v /= self.pos_scale;
        }
        for (v, h) in out[9..].iter_mut().zip(&self.half) {
            *v /= h;
        }
        Ok(out)
    }

    /// Pulls a gradient over raw `[r, p, q]` back to diffusion coordinates.
    pub fn pull_back(&self, grad: &[f64]) -> Result<Vec<f64>> {
        self.check(grad.len())?;
        let mut out = grad.to_vec();
        for v in &mut out[6..9] {
            *v *= self.pos_scale;
        }
        for (v, h) in out[9..].iter_mut().zip(&self.half) {
            *v *= h;
        }
        Ok(out)
    }
}
