//! Geometric embeddings. Points are trivectors with unit `e123` weight and
//! spatial coordinates on `e023`, `e013`, `e012`; directions are the ideal
//! trivectors with zero weight; planes are vectors.

use nalgebra::Vector3;

use super::multivector::Multivector;
use super::tables::{E012, E013, E023, E123};
use crate::error::{Error, Result};

pub fn embed_point(p: &Vector3<f64>) -> Multivector {
    let mut m = embed_direction(p);
    m[E123] = 1.0;
    m
}

pub fn embed_direction(d: &Vector3<f64>) -> Multivector {
    let mut m = Multivector::ZERO;
    m[E023] = d.x;
    m[E013] = -d.y;
    m[E012] = d.z;
    m
}

/// The plane `{x : n·x = offset}`.
pub fn embed_plane(normal: &Vector3<f64>, offset: f64) -> Multivector {
    let mut m = Multivector::ZERO;
    m[1] = offset;
    m[2] = normal.x;
    m[3] = normal.y;
    m[4] = normal.z;
    m
}

pub fn extract_point(m: &Multivector) -> Result<Vector3<f64>> {
    let w = m[E123];
    if w.abs() < 1e-12 {
        return Err(Error::DegeneratePoint);
    }
    Ok(extract_direction(m) / w)
}

pub fn extract_direction(m: &Multivector) -> Vector3<f64> {
    Vector3::new(m[E023], -m[E013], m[E012])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn origin_is_pure_e123() {
        assert_eq!(embed_point(&Vector3::zeros()), Multivector::blade(E123, 1.0));
    }

    #[test]
    fn extract_inverts_embed() {
        let p = Vector3::new(0.25, -1.5, 3.0);
        assert_eq!(extract_point(&embed_point(&p)).unwrap(), p);
        assert_eq!(extract_direction(&embed_direction(&p)), p);
        // Weight is projective.
        assert!((extract_point(&(embed_point(&p) * -2.0)).unwrap() - p).norm() < 1e-15);
    }

    #[test]
    fn ideal_point_has_no_location() {
        let d = embed_direction(&Vector3::new(1.0, 0.0, 0.0));
        assert!(matches!(extract_point(&d), Err(Error::DegeneratePoint)));
    }
}
