//! Projective geometric algebra G(3,0,1).

mod embed;
mod multivector;
pub mod tables;
mod versor;

pub use embed::{embed_direction, embed_plane, embed_point, extract_direction, extract_point};
pub use multivector::Multivector;
pub use tables::{ProductTable, TableEntry, BLADE_NAMES};
pub use versor::{random_unit_quaternion, Parity, Versor};

/// Geometric product of two multivectors.
pub fn geometric_product(a: &Multivector, b: &Multivector) -> Multivector {
    a.gp(b)
}

pub fn sandwich(u: &Versor, x: &Multivector) -> Multivector {
    u.apply(x)
}

pub fn inner_invariant(a: &Multivector, b: &Multivector) -> f64 {
    a.inner_invariant(b)
}
