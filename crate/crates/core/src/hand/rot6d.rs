//! Continuous 6D rotation representation: the first two columns of a
//! rotation matrix, decoded by Gram–Schmidt.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

const DEGENERATE: f64 = 1e-9;

pub fn decode(r: &[f64; 6]) -> Result<Matrix3<f64>> {
    let a1 = Vector3::new(r[0], r[1], r[2]);
    let a2 = Vector3::new(r[3], r[4], r[5]);
    if !(a1.iter().chain(a2.iter()).all(|v| v.is_finite())) {
        return Err(Error::NonFinite("6D rotation".into()));
    }
    let n1 = a1.norm();
    if n1 <= DEGENERATE {
        return Err(Error::DegenerateRotation { column: 0, reason: "has zero length" });
    }
    let b1 = a1 / n1;
    let resid = a2 - b1 * b1.dot(&a2);
    let n2 = resid.norm();
    if n2 <= DEGENERATE * a2.norm().max(1.0) {
        return Err(Error::DegenerateRotation { column: 1, reason: "is parallel to column 0" });
    }
    let b2 = resid / n2;
    let b3 = b1.cross(&b2);
    Ok(Matrix3::from_columns(&[b1, b2, b3]))
}

pub fn encode(r: &Matrix3<f64>) -> [f64; 6] {
    [r[(0, 0)], r[(1, 0)], r[(2, 0)], r[(0, 1)], r[(1, 1)], r[(2, 1)]]
}

/// Rotates both 3-vector columns of a 6D representation.
pub fn rotate(r6: &[f64; 6], rot: &Matrix3<f64>) -> [f64; 6] {
    let a = rot * Vector3::new(r6[0], r6[1], r6[2]);
    let b = rot * Vector3::new(r6[3], r6[4], r6[5]);
    [a.x, a.y, a.z, b.x, b.y, b.z]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ga::random_unit_quaternion;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_columns() {
        assert_eq!(decode(&[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]).unwrap(), Matrix3::identity());
    }

    #[test]
    fn scale_invariant() {
        let r = [0.3, -0.2, 0.9, 0.5, 0.7, -0.1];
        let s = r.map(|v| v * 5.0);
        assert!((decode(&r).unwrap() - decode(&s).unwrap()).abs().max() < 1e-15);
    }

    #[test]
    fn degenerate_columns_named() {
        match decode(&[0.0; 6]) {
            Err(Error::DegenerateRotation { column: 0, .. }) => {}
            other => panic!("{other:?}"),
        }
        match decode(&[1.0, 0.0, 0.0, 2.0, 0.0, 0.0]) {
            Err(Error::DegenerateRotation { column: 1, .. }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn round_trip_random_rotations() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let r = *random_unit_quaternion(&mut rng).to_rotation_matrix().matrix();
            let back = decode(&encode(&r)).unwrap();
            assert!((back - r).abs().max() < 1e-12);
            assert!((back.determinant() - 1.0).abs() < 1e-9);
            assert!((back.transpose() * back - Matrix3::identity()).abs().max() < 1e-9);
        }
    }
}
