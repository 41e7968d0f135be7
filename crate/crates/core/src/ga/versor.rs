use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::embed::{embed_plane, extract_direction, extract_point, embed_direction, embed_point};
use super::multivector::Multivector;
use super::tables::GRADE;
use crate::error::{Error, Result};
use crate::hand::rot6d;

const UNIT_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Parity {
    Even,
    Odd,
}

/// A unit versor acting on multivectors by the sandwich product.
///
/// Even versors (rotors, translators, motors) act by `u x u⁻¹`. Odd versors
/// (reflections) act by the twisted form `u x̂ u⁻¹`, where `x̂` is the grade
/// involution, so that every action is an algebra automorphism that also
/// fixes `e0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Versor {
    mv: Multivector,
    inv: Multivector,
    parity: Parity,
}

impl Versor {
    pub fn new(mv: Multivector) -> Result<Self> {
        if !mv.is_finite() {
            return Err(Error::NonUnitVersor("non-finite coefficients".into()));
        }
        let (mut even, mut odd) = (0.0f64, 0.0f64);
        for (i, c) in mv.0.iter().enumerate() {
            if GRADE[i].is_multiple_of(2) {
                even = even.max(c.abs());
            } else {
                odd = odd.max(c.abs());
            }
        }
        let parity = match (even > 1e-12, odd > 1e-12) {
            (true, false) => Parity::Even,
            (false, true) => Parity::Odd,
            (false, false) => return Err(Error::NonUnitVersor("zero element".into())),
            (true, true) => return Err(Error::NonUnitVersor("mixed parity".into())),
        };
        let norm = mv.inner_invariant(&mv);
        if (norm - 1.0).abs() > UNIT_TOL {
            return Err(Error::NonUnitVersor(format!("invariant norm {norm}")));
        }
        let rev = mv.reverse();
        let n = mv.gp(&rev)[0];
        let inv = rev * (1.0 / n);
        let id = mv.gp(&inv);
        if id.max_abs_diff(&Multivector::scalar(1.0)) > UNIT_TOL {
            return Err(Error::NonUnitVersor(format!("u·u⁻¹ = {id}")));
        }
        Ok(Self { mv, inv, parity })
    }

    pub fn identity() -> Self {
        let one = Multivector::scalar(1.0);
        Self { mv: one, inv: one, parity: Parity::Even }
    }

    pub fn multivector(&self) -> &Multivector {
        &self.mv
    }

    pub fn inverse_multivector(&self) -> &Multivector {
        &self.inv
    }

    pub fn parity(&self) -> Parity {
        self.parity
    }

    /// Rotor from a unit quaternion `(w, x, y, z)`.
    pub fn rotor(q: &UnitQuaternion<f64>) -> Self {
        let mut m = Multivector::scalar(q.w);
        m[10] = -q.i; // e23
        m[9] = q.j; // e13
        m[8] = -q.k; // e12
        let rev = m.reverse();
        Self { mv: m, inv: rev, parity: Parity::Even }
    }

    pub fn from_rotation_matrix(r: &Matrix3<f64>) -> Self {
        let rot = Rotation3::from_matrix_unchecked(*r);
        Self::rotor(&UnitQuaternion::from_rotation_matrix(&rot))
    }

    pub fn translator(t: &Vector3<f64>) -> Self {
        let mut m = Multivector::scalar(1.0);
        m[5] = 0.5 * t.x;
        m[6] = 0.5 * t.y;
        m[7] = 0.5 * t.z;
        let rev = m.reverse();
        Self { mv: m, inv: rev, parity: Parity::Even }
    }

    /// Rigid motion `x ↦ R x + t` (rotate, then translate).
    pub fn motor(r: &Matrix3<f64>, t: &Vector3<f64>) -> Self {
        Self::translator(t).compose_unchecked(&Self::from_rotation_matrix(r))
    }

    /// Motor for a hand-base pose given as a 6D rotation and a translation.
    pub fn motor_from_pose(r6: &[f64; 6], p: &Vector3<f64>) -> Result<Self> {
        let r = rot6d::decode(r6)?;
        Ok(Self::motor(&r, p))
    }

    /// Reflection in the plane `{x : n·x = offset}`.
    pub fn reflection(normal: &Vector3<f64>, offset: f64) -> Result<Self> {
        let len = normal.norm();
        if len < 1e-12 {
            return Err(Error::NonUnitVersor("zero plane normal".into()));
        }
        Self::new(embed_plane(&(normal / len), offset / len))
    }

    pub fn random_motor<R: Rng + ?Sized>(rng: &mut R, translation_scale: f64) -> Self {
        let q = random_unit_quaternion(rng);
        let t = Vector3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        ) * translation_scale;
        Self::motor(q.to_rotation_matrix().matrix(), &t)
    }

    fn compose_unchecked(&self, other: &Self) -> Self {
        let parity = if self.parity == other.parity { Parity::Even } else { Parity::Odd };
        Self {
            mv: self.mv.gp(&other.mv),
            inv: other.inv.gp(&self.inv),
            parity,
        }
    }

    /// `self ∘ other`: applying the result equals applying `other`, then `self`.
    pub fn compose(&self, other: &Self) -> Result<Self> {
        Self::new(self.mv.gp(&other.mv))
    }

    /// The sandwich action on a multivector.
    pub fn apply(&self, x: &Multivector) -> Multivector {
        match self.parity {
            Parity::Even => self.mv.gp(x).gp(&self.inv),
            Parity::Odd => self.mv.gp(&x.grade_involution()).gp(&self.inv),
        }
    }

    /// Action on a Euclidean point, through the point embedding.
    pub fn apply_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        extract_point(&self.apply(&embed_point(p))).expect("versors map finite points to finite points")
    }

    /// Action on a free vector. For reflections this is the twisted action,
    /// which equals minus the geometric reflection of the vector.
    pub fn apply_direction(&self, d: &Vector3<f64>) -> Vector3<f64> {
        extract_direction(&self.apply(&embed_direction(d)))
    }

    /// The linear map induced on free vectors.
    pub fn linear_part(&self) -> Matrix3<f64> {
        let mut m = Matrix3::zeros();
        for k in 0..3 {
            let mut e = Vector3::zeros();
            e[k] = 1.0;
            m.set_column(k, &self.apply_direction(&e));
        }
        m
    }

    /// Image of the origin.
    pub fn translation_part(&self) -> Vector3<f64> {
        self.apply_point(&Vector3::zeros())
    }
}

pub fn random_unit_quaternion<R: Rng + ?Sized>(rng: &mut R) -> UnitQuaternion<f64> {
    loop {
        let v: [f64; 4] = [
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
        ];
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-6 {
            return UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(v[0], v[1], v[2], v[3]));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn identity_acts_trivially() {
        let mut x = Multivector::ZERO;
        for (i, c) in x.0.iter_mut().enumerate() {
            *c = (i as f64).sin();
        }
        assert_eq!(Versor::identity().apply(&x), x);
        let t0 = Versor::translator(&Vector3::zeros());
        assert!(t0.apply(&x).max_abs_diff(&x) < 1e-15);
    }

    #[test]
    fn quarter_turn_about_z() {
        let q = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), FRAC_PI_2);
        let r = Versor::rotor(&q);
        let out = r.apply(&embed_point(&Vector3::new(1.0, 0.0, 0.0)));
        assert!(out.max_abs_diff(&embed_point(&Vector3::new(0.0, 1.0, 0.0))) < 1e-12);
    }

    #[test]
    fn pure_translation_moves_origin() {
        let m = Versor::motor_from_pose(&[1.0, 0.0, 0.0, 0.0, 1.0, 0.0], &Vector3::new(1.0, 2.0, 3.0)).unwrap();
        let out = m.apply(&embed_point(&Vector3::zeros()));
        assert!(out.max_abs_diff(&embed_point(&Vector3::new(1.0, 2.0, 3.0))) < 1e-15);
    }

    #[test]
    fn rejects_non_unit() {
        assert!(Versor::new(Multivector::scalar(2.0)).is_err());
        let mixed = Multivector::scalar(1.0) + Multivector::blade(2, 0.1);
        assert!(Versor::new(mixed).is_err());
        // Unit Euclidean part but not normalized in the e0 directions.
        let bad = Multivector::scalar(1.0) + Multivector::blade(15, 0.5);
        assert!(Versor::new(bad).is_err());
    }

    #[test]
    fn reflection_fixes_plane_points() {
        let n = Vector3::new(0.0, 0.0, 1.0);
        let refl = Versor::reflection(&n, 0.5).unwrap();
        let p = Vector3::new(0.3, -0.2, 0.5);
        assert!((refl.apply_point(&p) - p).norm() < 1e-12);
        let q = Vector3::new(0.3, -0.2, 1.5);
        assert!((refl.apply_point(&q) - Vector3::new(0.3, -0.2, -0.5)).norm() < 1e-12);
    }

    #[test]
    fn composition_matches_sequential_action() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let a = Versor::random_motor(&mut rng, 1.0);
            let b = Versor::random_motor(&mut rng, 1.0);
            let ab = a.compose(&b).unwrap();
            let mut x = Multivector::ZERO;
            for c in x.0.iter_mut() {
                *c = rng.gen_range(-1.0..1.0);
            }
            let lhs = ab.apply(&x);
            let rhs = a.apply(&b.apply(&x));
            assert!(lhs.max_abs_diff(&rhs) < 1e-12);
        }
    }
}
