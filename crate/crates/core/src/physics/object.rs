use nalgebra::{Matrix3, Vector3};

use crate::error::{invalid, Error, Result};

/// Rigid point-cloud object. Points are stored relative to the center of
/// mass in the body frame, bucketed in a uniform grid for neighbor queries.
#[derive(Clone, Debug)]
pub struct RigidObject {
    points: Vec<Vector3<f64>>,
    mass: f64,
    inertia: Matrix3<f64>,
    inertia_inv: Matrix3<f64>,
    bound: f64,
    grid: Grid,
}

#[derive(Clone, Debug)]
struct Grid {
    origin: Vector3<f64>,
    cell: f64,
    dims: [usize; 3],
    cells: Vec<Vec<u32>>,
}

impl Grid {
    fn new(points: &[Vector3<f64>], cell: f64) -> Self {
        let mut lo = Vector3::repeat(f64::INFINITY);
        let mut hi = Vector3::repeat(f64::NEG_INFINITY);
        for p in points {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        let dims = std::array::from_fn(|i| (((hi[i] - lo[i]) / cell).floor() as usize) + 1);
        let mut cells = vec![Vec::new(); dims[0] * dims[1] * dims[2]];
        let g = Self { origin: lo, cell, dims, cells: Vec::new() };
        for (i, p) in points.iter().enumerate() {
            let c = g.cell_of(p);
            cells[g.flat(c)].push(i as u32);
        }
        Self { cells, ..g }
    }

    fn cell_of(&self, p: &Vector3<f64>) -> [usize; 3] {
        std::array::from_fn(|i| (((p[i] - self.origin[i]) / self.cell).floor().max(0.0) as usize).min(self.dims[i] - 1))
    }

    fn flat(&self, c: [usize; 3]) -> usize {
        (c[0] * self.dims[1] + c[1]) * self.dims[2] + c[2]
    }

    /// Calls `f` for every point index in cells overlapping the ball.
    fn for_each_near(&self, center: &Vector3<f64>, radius: f64, mut f: impl FnMut(usize)) {
        let mut lo = [0usize; 3];
        let mut hi = [0usize; 3];
        for i in 0..3 {
            let a = ((center[i] - radius - self.origin[i]) / self.cell).floor();
            let b = ((center[i] + radius - self.origin[i]) / self.cell).floor();
            if b < 0.0 || a > (self.dims[i] - 1) as f64 {
                return;
            }
            lo[i] = a.max(0.0) as usize;
            hi[i] = (b as usize).min(self.dims[i] - 1);
        }
        for x in lo[0]..=hi[0] {
            for y in lo[1]..=hi[1] {
                for z in lo[2]..=hi[2] {
                    for &i in &self.cells[self.flat([x, y, z])] {
                        f(i as usize);
                    }
                }
            }
        }
    }
}

const GRID_CELL: f64 = 0.012;

impl RigidObject {
    /// Equal point masses summing to `mass` (kg). Positions are in meters;
    /// the returned object's body origin is their centroid.
    pub fn new(points: &[Vector3<f64>], mass: f64) -> Result<Self> {
        if points.len() < 3 {
            return Err(invalid("object needs at least 3 points"));
        }
        if !(mass > 0.0) {
            return Err(invalid("object mass must be positive"));
        }
        if !points.iter().all(|p| p.iter().all(|v| v.is_finite())) {
            return Err(Error::NonFinite("object point".into()));
        }
        let com = points.iter().sum::<Vector3<f64>>() / points.len() as f64;
        let body: Vec<Vector3<f64>> = points.iter().map(|p| p - com).collect();
        let mi = mass / body.len() as f64;
        let mut inertia = Matrix3::zeros();
        for b in &body {
            inertia += (Matrix3::identity() * b.norm_squared() - b * b.transpose()) * mi;
        }
        let scale = inertia.trace().max(f64::MIN_POSITIVE);
        let min_eig = inertia.symmetric_eigenvalues().min();
        if min_eig <= 1e-9 * scale {
            return Err(invalid("object points are collinear (singular inertia)"));
        }
        let inertia_inv = inertia.try_inverse().ok_or_else(|| invalid("singular object inertia"))?;
        let bound = body.iter().map(|b| b.norm()).fold(0.0, f64::max);
        let grid = Grid::new(&body, GRID_CELL);
        Ok(Self { points: body, mass, inertia, inertia_inv, bound, grid })
    }

    pub fn points(&self) -> &[Vector3<f64>] {
        &self.points
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn inertia(&self) -> &Matrix3<f64> {
        &self.inertia
    }

    pub fn inertia_inv(&self) -> &Matrix3<f64> {
        &self.inertia_inv
    }

    /// Radius of the smallest origin-centered ball containing all points.
    pub fn bound(&self) -> f64 {
        self.bound
    }

    /// Indices of points within `radius` of `center` (body frame).
    pub fn near(&self, center: &Vector3<f64>, radius: f64, mut f: impl FnMut(usize)) {
        let r2 = radius * radius;
        self.grid.for_each_near(center, radius, |i| {
            if (self.points[i] - center).norm_squared() < r2 {
                f(i)
            }
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn grid_query_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts: Vec<_> = (0..300).map(|_| Vector3::new(rng.gen_range(-0.04..0.04), rng.gen_range(-0.03..0.03), rng.gen_range(-0.05..0.05))).collect();
        let obj = RigidObject::new(&pts, 0.1).unwrap();
        for _ in 0..100 {
            let c = Vector3::new(rng.gen_range(-0.06..0.06), rng.gen_range(-0.06..0.06), rng.gen_range(-0.06..0.06));
            let r = rng.gen_range(0.001..0.03);
            let mut got = Vec::new();
            obj.near(&c, r, |i| got.push(i));
            got.sort();
            let want: Vec<usize> = (0..obj.points().len()).filter(|&i| (obj.points()[i] - c).norm_squared() < r * r).collect();
            assert_eq!(got, want);
        }
    }

    #[test]
    fn collinear_rejected() {
        let pts: Vec<_> = (0..5).map(|i| Vector3::new(i as f64, 0.0, 0.0)).collect();
        assert!(RigidObject::new(&pts, 1.0).is_err());
        assert!(RigidObject::new(&pts[..2], 1.0).is_err());
    }

    #[test]
    fn inertia_of_symmetric_cross() {
        let pts = vec![
            Vector3::new(1.0, 0.0, 0.0),
            Vector3::new(-1.0, 0.0, 0.0),
            Vector3::new(0.0, 1.0, 0.0),
            Vector3::new(0.0, -1.0, 0.0),
            Vector3::new(0.0, 0.0, 1.0),
            Vector3::new(0.0, 0.0, -1.0),
        ];
        let obj = RigidObject::new(&pts, 6.0).unwrap();
        assert!((obj.inertia() - Matrix3::identity() * 4.0).abs().max() < 1e-12);
    }
}
