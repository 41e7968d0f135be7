//! Compile-time product tables for G(3,0,1).
//!
//! Blades are tracked internally as bitmasks (bit `i` set means `e_i` is a
//! factor) and exposed through the fixed coefficient order in [`BLADE_MASKS`].

/// Bitmask of each coefficient slot, in the public coefficient order
/// `[1; e0,e1,e2,e3; e01,e02,e03,e12,e13,e23; e012,e013,e023,e123; e0123]`.
pub const BLADE_MASKS: [u8; 16] = [
    0b0000, // 1
    0b0001, // e0
    0b0010, // e1
    0b0100, // e2
    0b1000, // e3
    0b0011, // e01
    0b0101, // e02
    0b1001, // e03
    0b0110, // e12
    0b1010, // e13
    0b1100, // e23
    0b0111, // e012
    0b1011, // e013
    0b1101, // e023
    0b1110, // e123
    0b1111, // e0123
];

pub const BLADE_NAMES: [&str; 16] = [
    "1", "e0", "e1", "e2", "e3", "e01", "e02", "e03", "e12", "e13", "e23", "e012", "e013", "e023",
    "e123", "e0123",
];

/// Inverse of [`BLADE_MASKS`].
pub const INDEX_OF_MASK: [usize; 16] = {
    let mut out = [0usize; 16];
    let mut i = 0;
    while i < 16 {
        out[BLADE_MASKS[i] as usize] = i;
        i += 1;
    }
    out
};

pub const GRADE: [usize; 16] = {
    let mut out = [0usize; 16];
    let mut i = 0;
    while i < 16 {
        out[i] = BLADE_MASKS[i].count_ones() as usize;
        i += 1;
    }
    out
};

/// Coefficient slots whose blade contains no `e0` factor.
pub const NON_DEGENERATE: [usize; 8] = [0, 2, 3, 4, 8, 9, 10, 14];

pub const E0123: usize = 15;
pub const E123: usize = 14;
pub const E023: usize = 13;
pub const E013: usize = 12;
pub const E012: usize = 11;

/// Sign picked up when reordering the concatenation `a b` of two canonical
/// blades into canonical order.
const fn reorder_sign(a: u8, b: u8) -> i8 {
    let mut a = a >> 1;
    let mut swaps = 0u32;
    while a != 0 {
        swaps += (a & b).count_ones();
        a >>= 1;
    }
    if swaps.is_multiple_of(2) {
        1
    } else {
        -1
    }
}

/// One entry of a bilinear blade table: `e_i * e_j = sign * e_blade`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TableEntry {
    pub sign: i8,
    pub blade: u8,
}

/// A 16×16 signed blade table describing a bilinear product.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProductTable {
    pub entries: [[TableEntry; 16]; 16],
}

const ZERO_ENTRY: TableEntry = TableEntry { sign: 0, blade: 0 };

impl ProductTable {
    /// Geometric product with metric `e0² = 0`, `e1² = e2² = e3² = 1`.
    pub const fn geometric() -> Self {
        let mut entries = [[ZERO_ENTRY; 16]; 16];
        let mut i = 0;
        while i < 16 {
            let mut j = 0;
            while j < 16 {
                let a = BLADE_MASKS[i];
                let b = BLADE_MASKS[j];
                let sign = if a & b & 1 != 0 { 0 } else { reorder_sign(a, b) };
                entries[i][j] = TableEntry {
                    sign,
                    blade: INDEX_OF_MASK[(a ^ b) as usize] as u8,
                };
                j += 1;
            }
            i += 1;
        }
        Self { entries }
    }

    /// Exterior product: zero whenever the blades share a factor.
    pub const fn wedge() -> Self {
        let mut entries = [[ZERO_ENTRY; 16]; 16];
        let mut i = 0;
        while i < 16 {
            let mut j = 0;
            while j < 16 {
                let a = BLADE_MASKS[i];
                let b = BLADE_MASKS[j];
                let sign = if a & b != 0 { 0 } else { reorder_sign(a, b) };
                entries[i][j] = TableEntry {
                    sign,
                    blade: INDEX_OF_MASK[(a ^ b) as usize] as u8,
                };
                j += 1;
            }
            i += 1;
        }
        Self { entries }
    }

    /// `join(a, b) = dual(dual(a) ∧ dual(b))` flattened into one table.
    pub const fn join() -> Self {
        let wedge = Self::wedge();
        let dual = DUAL;
        let mut entries = [[ZERO_ENTRY; 16]; 16];
        let mut i = 0;
        while i < 16 {
            let mut j = 0;
            while j < 16 {
                let di = dual[i];
                let dj = dual[j];
                let w = wedge.entries[di.blade as usize][dj.blade as usize];
                if w.sign != 0 {
                    let dk = dual[w.blade as usize];
                    entries[i][j] = TableEntry {
                        sign: di.sign * dj.sign * w.sign * dk.sign,
                        blade: dk.blade,
                    };
                }
                j += 1;
            }
            i += 1;
        }
        Self { entries }
    }

    /// Applies the table to two coefficient arrays.
    #[inline]
    pub fn apply(&self, a: &[f64; 16], b: &[f64; 16]) -> [f64; 16] {
        let mut out = [0.0; 16];
        self.apply_into(a, b, &mut out);
        out
    }

    /// Accumulating form used by the batched tensor kernels.
    #[inline]
    pub fn apply_into(&self, a: &[f64], b: &[f64], out: &mut [f64]) {
        for (i, row) in self.entries.iter().enumerate() {
            let ai = a[i];
            if ai == 0.0 {
                continue;
            }
            for (j, e) in row.iter().enumerate() {
                if e.sign != 0 {
                    out[e.blade as usize] += f64::from(e.sign) * ai * b[j];
                }
            }
        }
    }
}

/// Right complement: `e_I ∧ dual(e_I) = +e0123` for every basis blade.
pub const DUAL: [TableEntry; 16] = {
    let mut out = [ZERO_ENTRY; 16];
    let mut i = 0;
    while i < 16 {
        let a = BLADE_MASKS[i];
        let c = 0b1111 ^ a;
        out[i] = TableEntry {
            sign: reorder_sign(a, c),
            blade: INDEX_OF_MASK[c as usize] as u8,
        };
        i += 1;
    }
    out
};

pub const GEOMETRIC: ProductTable = ProductTable::geometric();
pub const WEDGE: ProductTable = ProductTable::wedge();
pub const JOIN: ProductTable = ProductTable::join();
