use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::layers::relative_residual;
use super::*;
use crate::autodiff::{grad_check, Tape, Tensor};
use crate::ga::Versor;

fn small_config(symmetry_breaking: bool) -> DenoiserConfig {
    DenoiserConfig { blocks: 2, channels: 4, heads: 2, aux_hidden: 6, downsample_m: 12, knn_k: 4, symmetry_breaking, ..Default::default() }
}

fn cloud(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vector3<f64>> {
    let c = Vector3::new(0.3, -0.1, 0.2);
    (0..n).map(|_| c + Vector3::new(rng.gen_range(-0.04..0.04), rng.gen_range(-0.04..0.04), rng.gen_range(-0.04..0.04))).collect()
}

fn grasp_vectors(rng: &mut ChaCha8Rng, b: usize, k: usize) -> Vec<Vec<f64>> {
    (0..b).map(|_| (0..9 + k).map(|_| rng.gen_range(-1.5..1.5)).collect()).collect()
}

fn centroid(points: &[Vector3<f64>]) -> Vector3<f64> {
    points.iter().sum::<Vector3<f64>>() / points.len() as f64
}

fn rotate_vector(x: &[f64], rot: &Matrix3<f64>) -> Vec<f64> {
    let mut y = x.to_vec();
    for blk in 0..3 {
        let v = rot * Vector3::new(x[3 * blk], x[3 * blk + 1], x[3 * blk + 2]);
        y[3 * blk..3 * blk + 3].copy_from_slice(v.as_slice());
    }
    y
}

fn predict(net: &Denoiser, points: &[Vector3<f64>], xs: &[Vec<f64>], t: usize) -> Vec<Vec<f64>> {
    let obj = net.object_tokens(points).unwrap();
    let g = net.grasp_tokens(&centroid(points), xs, t).unwrap();
    net.predict(&obj, &g).unwrap()
}

#[test]
fn output_dimension() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let net = Denoiser::new(small_config(true), &mut rng).unwrap();
    let pts = cloud(&mut rng, 30);
    let xs = grasp_vectors(&mut rng, 3, 4);
    let out = predict(&net, &pts, &xs, 5);
    assert_eq!(out.len(), 3);
    assert!(out.iter().all(|o| o.len() == 13 && o.iter().all(|v| v.is_finite())));
}

#[test]
fn rigid_motion_equivariance() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let net = Denoiser::new(small_config(true), &mut rng).unwrap();
    let pts = cloud(&mut rng, 40);
    let xs = grasp_vectors(&mut rng, 4, 4);
    let base = predict(&net, &pts, &xs, 17);
    for _ in 0..20 {
        let u = Versor::random_motor(&mut rng, 0.5);
        let rot = u.linear_part();
        let moved: Vec<_> = pts.iter().map(|p| u.apply_point(p)).collect();
        let xs_moved: Vec<_> = xs.iter().map(|x| rotate_vector(x, &rot)).collect();
        let out = predict(&net, &moved, &xs_moved, 17);
        for (o, b) in out.iter().zip(&base) {
            let expect = rotate_vector(b, &rot);
            assert!(relative_residual(o, &expect) < 1e-6, "{o:?} vs {expect:?}");
            // Joint noise depends on invariant scalars only.
            for j in 9..13 {
                assert_eq!(o[j].to_bits(), b[j].to_bits());
            }
        }
    }
}

#[test]
fn translation_equivariance() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let net = Denoiser::new(small_config(true), &mut rng).unwrap();
    let pts = cloud(&mut rng, 40);
    let xs = grasp_vectors(&mut rng, 2, 4);
    let base = predict(&net, &pts, &xs, 3);
    let shift = Vector3::new(0.7, -1.1, 0.25);
    let moved: Vec<_> = pts.iter().map(|p| p + shift).collect();
    let out = predict(&net, &moved, &xs, 3);
    for (o, b) in out.iter().zip(&base) {
        assert!(relative_residual(o, b) < 1e-6);
    }
}

#[test]
fn permutation_invariance() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let net = Denoiser::new(small_config(true), &mut rng).unwrap();
    let pts = cloud(&mut rng, 40);
    let xs = grasp_vectors(&mut rng, 2, 4);
    let base = predict(&net, &pts, &xs, 9);
    let mut perm: Vec<usize> = (0..pts.len()).collect();
    for i in (1..perm.len()).rev() {
        perm.swap(i, rng.gen_range(0..=i));
    }
    let shuffled: Vec<_> = perm.iter().map(|&i| pts[i]).collect();
    let out = predict(&net, &shuffled, &xs, 9);
    for (o, b) in out.iter().zip(&base) {
        assert!(relative_residual(o, b) < 1e-10);
    }
}

fn reflection_residual(symmetry_breaking: bool) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let net = Denoiser::new(small_config(symmetry_breaking), &mut rng).unwrap();
    let pts = cloud(&mut rng, 40);
    let xs = grasp_vectors(&mut rng, 3, 4);
    let obj = net.object_tokens(&pts).unwrap();
    let g = net.grasp_tokens(&centroid(&pts), &xs, 11).unwrap();
    let base = net.predict(&obj, &g).unwrap();
    let mut worst: f64 = 0.0;
    for _ in 0..5 {
        let n = Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let u = Versor::reflection(&n, rng.gen_range(-2.0..2.0)).unwrap();
        let out = net.predict(&obj.transformed(&u), &g.transformed(&u)).unwrap();
        for (o, b) in out.iter().zip(&base) {
            let mut expect = b.clone();
            for blk in 0..3 {
                let d = u.apply_direction(&Vector3::new(b[3 * blk], b[3 * blk + 1], b[3 * blk + 2]));
                expect[3 * blk..3 * blk + 3].copy_from_slice(d.as_slice());
            }
            worst = worst.max(relative_residual(o, &expect));
        }
    }
    worst
}

#[test]
fn reflection_equivariance_without_symmetry_breaking() {
    let r = reflection_residual(false);
    assert!(r < 1e-6, "{r}");
}

#[test]
fn symmetry_breaking_defeats_reflection_equivariance() {
    let r = reflection_residual(true);
    assert!(r > 1e-3, "{r}");
}

#[test]
fn empty_cloud_rejected() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let net = Denoiser::new(small_config(true), &mut rng).unwrap();
    assert!(net.object_tokens(&[]).is_err());
}

#[test]
fn parameter_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let net = std::cell::RefCell::new(Denoiser::new(small_config(true), &mut rng).unwrap());
    let pts = cloud(&mut rng, 20);
    let xs = grasp_vectors(&mut rng, 2, 4);
    let obj = net.borrow().object_tokens(&pts).unwrap();
    let g = net.borrow().grasp_tokens(&centroid(&pts), &xs, 4).unwrap();
    let target: Vec<f64> = (0..26).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let flat = net.borrow().params().flatten();
    let x = Tensor::new(vec![flat.len()], flat).unwrap();
    // Probe a random subset of coordinates to keep the test fast.
    let probe: Vec<usize> = (0..60).map(|_| rng.gen_range(0..x.len())).collect();
    let f = |theta: &Tensor| -> crate::Result<(f64, Tensor)> {
        let mut net = net.borrow_mut();
        net.params_mut().unflatten(theta.data()).unwrap();
        let mut tape = Tape::new();
        let p = net.params().bind(&mut tape, true);
        let kv = net.encode_on_tape(&mut tape, &p, &obj)?;
        let out = net.decode_on_tape(&mut tape, &p, &kv, &g)?;
        let t = tape.constant(Tensor::new(vec![2, 9], target[..18].to_vec()).unwrap());
        let tj = tape.constant(Tensor::new(vec![2, 4], target[18..].to_vec()).unwrap());
        let l1 = tape.squared_error(out.directions, t)?;
        let l2 = tape.squared_error(out.joints, tj)?;
        let loss = tape.add(l1, l2)?;
        let value = tape.value(loss).item();
        let grads = tape.backward_from(loss, &Tensor::scalar(1.0))?;
        let flat: Vec<f64> = net.params().collect_grads(&grads, &p).iter().flat_map(|t| t.data().to_vec()).collect();
        Ok((value, Tensor::new(vec![flat.len()], flat)?))
    };
    // Restrict the check to the probed coordinates.
    let (_, full_grad) = f(&x).unwrap();
    let mut worst: f64 = 0.0;
    for &i in &probe {
        let sub = Tensor::scalar(x.data()[i]);
        let r = grad_check(
            |s| {
                let mut theta = x.clone();
                theta.data_mut()[i] = s.item();
                let (v, g) = f(&theta)?;
                Ok((v, Tensor::scalar(g.data()[i])))
            },
            &sub,
            1e-5,
        )
        .unwrap();
        worst = worst.max(r.max_rel_error);
        assert!(full_grad.data()[i].is_finite());
    }
    assert!(worst < 1e-4, "{worst}");
}

#[test]
fn checkpoint_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let net = Denoiser::new(small_config(true), &mut rng).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    let ckpt = Checkpoint { config: vec![("channels".into(), "4".into())], params: net.params().clone() };
    write_checkpoint(&path, &ckpt).unwrap();
    let back = read_checkpoint(&path).unwrap();
    assert_eq!(back, ckpt);
    std::fs::write(&path, b"garbage").unwrap();
    assert!(read_checkpoint(&path).is_err());
}
