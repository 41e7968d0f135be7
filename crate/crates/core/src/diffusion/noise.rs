use nalgebra::{Matrix3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Per-sample Gaussian noise. A stream may carry a rotation that is applied
/// to the two rotation columns and the position block of every draw, which
/// gives the matched noise for a rotated object.
#[derive(Clone, Debug)]
pub struct NoiseStream {
    rng: ChaCha8Rng,
    rotation: Option<Matrix3<f64>>,
}

impl NoiseStream {
    /// Stream `index` of the generator seeded with `seed`.
    pub fn new(seed: u64, index: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index);
        Self { rng, rotation: None }
    }

    /// One stream per sample, indices `0..n`.
    pub fn batch(seed: u64, n: usize) -> Vec<Self> {
        (0..n as u64).map(|i| Self::new(seed, i)).collect()
    }

    pub fn rotated(mut self, rotation: Matrix3<f64>) -> Self {
        self.rotation = Some(rotation);
        self
    }

    pub fn draw(&mut self, dim: usize) -> Vec<f64> {
        let mut z: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut self.rng)).collect();
        if let Some(r) = &self.rotation {
            for block in z[..dim.min(9)].chunks_exact_mut(3) {
                let v = r * Vector3::new(block[0], block[1], block[2]);
                block.copy_from_slice(v.as_slice());
            }
        }
        z
    }
}
