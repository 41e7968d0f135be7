use std::fmt;
use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub};

use super::tables::{BLADE_MASKS, BLADE_NAMES, DUAL, GEOMETRIC, GRADE, JOIN, NON_DEGENERATE, WEDGE};
use crate::error::{invalid, Result};

/// An element of G(3,0,1), stored as 16 coefficients in the fixed blade order
/// `[1; e0,e1,e2,e3; e01,e02,e03,e12,e13,e23; e012,e013,e023,e123; e0123]`.
#[derive(Clone, Copy, PartialEq, Default)]
pub struct Multivector(pub [f64; 16]);

impl Multivector {
    pub const ZERO: Self = Self([0.0; 16]);

    pub fn scalar(s: f64) -> Self {
        Self::blade(0, s)
    }

    /// A single basis blade `value * e_I` by coefficient slot.
    pub fn blade(index: usize, value: f64) -> Self {
        let mut c = [0.0; 16];
        c[index] = value;
        Self(c)
    }

    pub fn pseudoscalar() -> Self {
        Self::blade(15, 1.0)
    }

    pub fn coeffs(&self) -> &[f64; 16] {
        &self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|c| c.is_finite())
    }

    pub fn gp(&self, other: &Self) -> Self {
        Self(GEOMETRIC.apply(&self.0, &other.0))
    }

    pub fn wedge(&self, other: &Self) -> Self {
        Self(WEDGE.apply(&self.0, &other.0))
    }

    /// Right complement, normalized so that `e_I ∧ dual(e_I) = +e0123`.
    pub fn dual(&self) -> Self {
        let mut out = [0.0; 16];
        for (i, d) in DUAL.iter().enumerate() {
            out[d.blade as usize] = f64::from(d.sign) * self.0[i];
        }
        Self(out)
    }

    /// `dual(dual(a) ∧ dual(b))`.
    pub fn join(&self, other: &Self) -> Self {
        Self(JOIN.apply(&self.0, &other.0))
    }

    /// Flips the sign of grades 2 and 3.
    pub fn reverse(&self) -> Self {
        let mut out = self.0;
        for (i, c) in out.iter_mut().enumerate() {
            if matches!(GRADE[i], 2 | 3) {
                *c = -*c;
            }
        }
        Self(out)
    }

    /// Flips the sign of odd grades.
    pub fn grade_involution(&self) -> Self {
        let mut out = self.0;
        for (i, c) in out.iter_mut().enumerate() {
            if GRADE[i] % 2 == 1 {
                *c = -*c;
            }
        }
        Self(out)
    }

    pub fn grade_project(&self, k: usize) -> Result<Self> {
        if k > 4 {
            return Err(invalid(format!("grade {k} out of range 0..=4")));
        }
        let mut out = [0.0; 16];
        for (i, c) in self.0.iter().enumerate() {
            if GRADE[i] == k {
                out[i] = *c;
            }
        }
        Ok(Self(out))
    }

    /// Left multiplication by `e0`: blades already containing `e0` vanish.
    pub fn e0_mul(&self) -> Self {
        let mut out = [0.0; 16];
        for (i, c) in self.0.iter().enumerate() {
            let m = BLADE_MASKS[i];
            if m & 1 == 0 {
                out[super::tables::INDEX_OF_MASK[(m | 1) as usize]] = *c;
            }
        }
        Self(out)
    }

    /// Dot product over the eight coefficients whose blades lack `e0`.
    pub fn inner_invariant(&self, other: &Self) -> f64 {
        NON_DEGENERATE.iter().map(|&i| self.0[i] * other.0[i]).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0, |m, c| m.max(c.abs()))
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.0
            .iter()
            .zip(other.0.iter())
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }
}

impl Index<usize> for Multivector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl IndexMut<usize> for Multivector {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.0[i]
    }
}

impl Add for Multivector {
    type Output = Self;
    fn add(mut self, rhs: Self) -> Self {
        self += rhs;
        self
    }
}

impl AddAssign for Multivector {
    fn add_assign(&mut self, rhs: Self) {
        for (a, b) in self.0.iter_mut().zip(rhs.0) {
            *a += b;
        }
    }
}

impl Sub for Multivector {
    type Output = Self;
    fn sub(mut self, rhs: Self) -> Self {
        for (a, b) in self.0.iter_mut().zip(rhs.0) {
            *a -= b;
        }
        self
    }
}

impl Neg for Multivector {
    type Output = Self;
    fn neg(mut self) -> Self {
        for a in self.0.iter_mut() {
            *a = -*a;
        }
        self
    }
}

impl Mul<f64> for Multivector {
    type Output = Self;
    fn mul(mut self, s: f64) -> Self {
        for a in self.0.iter_mut() {
            *a *= s;
        }
        self
    }
}

impl Mul for Multivector {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        self.gp(&rhs)
    }
}

impl fmt::Debug for Multivector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

/// Diagnostic rendering such as `1·1 + 0.5·e01`; not a stable format.
impl fmt::Display for Multivector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (i, c) in self.0.iter().enumerate() {
            if *c == 0.0 {
                continue;
            }
            if !first {
                write!(f, " + ")?;
            }
            write!(f, "{}·{}", c, BLADE_NAMES[i])?;
            first = false;
        }
        if first {
            write!(f, "0")?;
        }
        Ok(())
    }
}
