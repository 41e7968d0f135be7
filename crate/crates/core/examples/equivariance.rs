//! The denoiser commutes with rigid motions of the object and grasp.

use nalgebra::Vector3;
use pga_grasp::ga::Versor;
use pga_grasp::nn::layers::relative_residual;
use pga_grasp::nn::{Denoiser, DenoiserConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rotate(x: &[f64], rot: &nalgebra::Matrix3<f64>) -> Vec<f64> {
    let mut y = x.to_vec();
    for b in 0..3 {
        let v = rot * Vector3::new(x[3 * b], x[3 * b + 1], x[3 * b + 2]);
        y[3 * b..3 * b + 3].copy_from_slice(v.as_slice());
    }
    y
}

fn main() -> anyhow::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let net = Denoiser::new(DenoiserConfig::default(), &mut rng)?;
    let points: Vec<Vector3<f64>> =
        (0..128).map(|_| Vector3::new(rng.gen_range(-0.03..0.03), rng.gen_range(-0.03..0.03), rng.gen_range(-0.03..0.03))).collect();
    let centroid = points.iter().sum::<Vector3<f64>>() / points.len() as f64;
    let d = net.config().output_dim();
    let xs: Vec<Vec<f64>> = (0..4).map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    let base = net.predict(&net.object_tokens(&points)?, &net.grasp_tokens(&centroid, &xs, 50)?)?;

    for i in 0..5 {
        let u = Versor::random_motor(&mut rng, 0.5);
        let rot = u.linear_part();
        let moved: Vec<_> = points.iter().map(|p| u.apply_point(p)).collect();
        let xm: Vec<_> = xs.iter().map(|x| rotate(x, &rot)).collect();
        let out = net.predict(&net.object_tokens(&moved)?, &net.grasp_tokens(&u.apply_point(&centroid), &xm, 50)?)?;
        let worst = out.iter().zip(&base).map(|(o, b)| relative_residual(o, &rotate(b, &rot))).fold(0.0, f64::max);
        let joints_same = out.iter().zip(&base).all(|(o, b)| o[9..] == b[9..]);
        println!("motor {i}: residual {worst:.1e}, joint noise unchanged: {joints_same}");
    }
    Ok(())
}
