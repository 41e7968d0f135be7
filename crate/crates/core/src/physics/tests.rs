use nalgebra::{Matrix3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::sim::tests::ball;
use super::*;
use crate::hand::{toy_hand, Grasp};

fn context(center: Vector3<f64>) -> PhysicsContext {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let pts: Vec<_> = ball(&mut rng, 256, 0.03).into_iter().map(|p| p + center).collect();
    PhysicsContext::new(toy_hand(2, 2).unwrap(), &pts, 0.1, SimParams::default(), 0.1).unwrap()
}

fn far_grasp(k: usize) -> Grasp {
    Grasp::from_pose(&Matrix3::identity(), &Vector3::new(1.0, 0.0, 0.0), vec![0.3; k])
}

#[test]
fn free_object_fails_success_with_discrete_displacement() {
    let ctx = context(Vector3::zeros());
    let report = success_eval(&far_grasp(4), &ctx, &SuccessCriteria::default()).unwrap();
    assert!(!report.passed);
    // Semi-implicit Euler under constant acceleration: a dt² n(n+1)/2.
    let expected = 0.5 * 0.01f64.powi(2) * 60.0 * 61.0 / 2.0;
    for d in report.displacements {
        assert!((d - expected).abs() < 1e-12, "{d} vs {expected}");
    }
}

#[test]
fn out_of_reach_matches_rollout() {
    let ctx = context(Vector3::new(0.1, -0.2, 0.05));
    let g = far_grasp(4);
    let fast = ctx.stability(&g).unwrap();
    let full = stability_loss(&ctx.scene(&g).unwrap(), &ctx.velocities).unwrap();
    assert!((fast - full).abs() < 1e-15);
    assert!((fast - 0.01).abs() < 1e-15);
    let (_, grad) = ctx.phys_loss_grad(&g).unwrap();
    assert!(grad[..9].iter().all(|v| *v == 0.0));
}

/// Palm facing the object with the fingers wrapped around it.
fn wrap_grasp(flex: f64) -> Grasp {
    // Hand frame: palm at the origin, fingers along +x, closing toward +z
    // in the toy model; place the object just in front of the palm.
    Grasp::from_pose(&Matrix3::identity(), &Vector3::new(0.0, 0.0, -0.035), vec![flex; 4])
}

#[test]
fn contacting_grasp_is_more_stable_than_free() {
    let ctx = context(Vector3::zeros());
    let free = ctx.stability(&far_grasp(4)).unwrap();
    let held = ctx.stability(&wrap_grasp(1.0)).unwrap();
    assert!(held < free, "held {held} free {free}");
}

#[test]
fn phys_gradient_matches_differences_of_total() {
    let ctx = context(Vector3::zeros());
    let g = wrap_grasp(0.9);
    let (loss, grad) = ctx.phys_loss_grad(&g).unwrap();
    assert!(loss.total.is_finite() && grad.iter().all(|v| v.is_finite()));
    let base = g.to_vec();
    let h = 1e-4;
    for i in [0, 4, 6, 7, 8, 9, 12] {
        let mut x = base.clone();
        x[i] += h;
        let fp = ctx.phys_loss(&Grasp::from_slice(&x).unwrap()).unwrap().total;
        x[i] -= 2.0 * h;
        let fm = ctx.phys_loss(&Grasp::from_slice(&x).unwrap()).unwrap().total;
        let numeric = (fp - fm) / (2.0 * h);
        assert!((grad[i] - numeric).abs() <= 1e-6 + 1e-3 * numeric.abs(), "{i}: {} vs {numeric}", grad[i]);
    }
}

#[test]
fn limit_term_drives_gradient_outside_box() {
    let ctx = context(Vector3::zeros());
    let mut g = far_grasp(4);
    let up = ctx.hand.upper_limits();
    g.q[1] = up[1] + 0.5;
    let (loss, grad) = ctx.phys_loss_grad(&g).unwrap();
    assert!((loss.limit - 0.5).abs() < 1e-12);
    assert!(grad[10] > ALPHA_LIMIT * 0.99);
}

#[test]
fn diversity_examples() {
    let a = Grasp::from_pose(&Matrix3::identity(), &Vector3::zeros(), vec![0.0, 1.0]);
    let b = Grasp::from_pose(&Matrix3::identity(), &Vector3::zeros(), vec![1.0, 1.0]);
    assert_eq!(diversity_score(&[a.clone(), a.clone()]).unwrap(), 0.0);
    assert!((diversity_score(&[a.clone(), b]).unwrap() - 0.25).abs() < 1e-15);
    assert!(diversity_score(&[a]).is_err());
}

fn cage_hand(dist: f64) -> crate::hand::HandSpec {
    let mut palm_spheres = Vec::new();
    for x in [-1.0f64, 0.0, 1.0] {
        for y in [-1.0f64, 0.0, 1.0] {
            for z in [-1.0f64, 0.0, 1.0] {
                let d = Vector3::new(x, y, z);
                if d.norm() > 0.0 {
                    palm_spheres.push(crate::hand::Sphere { center: (d.normalize() * dist).into(), radius: 0.02 });
                }
            }
        }
    }
    crate::hand::HandSpec { palm_spheres, joints: Vec::new() }
}

#[test]
fn enclosed_object_passes_success() {
    let mut ctx = context(Vector3::zeros());
    ctx.hand = cage_hand(0.045);
    let g = Grasp::from_pose(&Matrix3::identity(), &Vector3::zeros(), Vec::new());
    let report = success_eval(&g, &ctx, &SuccessCriteria::default()).unwrap();
    assert!(report.passed, "{:?}", report.displacements);
}

#[test]
fn zero_acceleration_trivially_passes() {
    let ctx = context(Vector3::zeros());
    let criteria = SuccessCriteria { accel: 0.0, ..Default::default() };
    let report = success_eval(&far_grasp(4), &ctx, &criteria).unwrap();
    assert!(report.passed);
    assert_eq!(report.max_displacement(), 0.0);
}

#[test]
fn resting_free_object_has_zero_loss() {
    let ctx = context(Vector3::zeros());
    let scene = ctx.scene(&far_grasp(4)).unwrap();
    assert_eq!(stability_loss(&scene, &[Vector3::zeros()]).unwrap(), 0.0);
    assert!(stability_loss(&scene, &[]).is_err());
}

#[test]
fn midpoint_grasp_without_contact_is_pure_stability() {
    let ctx = context(Vector3::zeros());
    let mid: Vec<f64> = ctx.hand.lower_limits().iter().zip(ctx.hand.upper_limits()).map(|(l, u)| 0.5 * (l + u)).collect();
    let g = Grasp::from_pose(&Matrix3::identity(), &Vector3::new(0.0, 1.0, 0.0), mid);
    let loss = ctx.phys_loss(&g).unwrap();
    assert_eq!(loss.range, 0.0);
    assert_eq!(loss.limit, 0.0);
    assert_eq!(loss.total, loss.stability);
    assert!((loss.total - 0.01).abs() < 1e-15);
    let mut caged = ctx.clone();
    caged.hand = cage_hand(0.0545);
    let held = caged.phys_loss(&Grasp::from_pose(&Matrix3::identity(), &Vector3::zeros(), Vec::new())).unwrap();
    assert!(held.total < loss.total, "{held:?}");
}

#[test]
fn diversity_matches_two_pass_oracle() {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..20 {
        let n = rng.gen_range(2..10);
        let grasps: Vec<Grasp> = (0..n)
            .map(|_| Grasp::from_pose(&Matrix3::identity(), &Vector3::zeros(), (0..3).map(|_| rng.gen_range(0.0..1.5)).collect()))
            .collect();
        let mut oracle = 0.0;
        for j in 0..3 {
            let xs: Vec<f64> = grasps.iter().map(|g| g.q[j]).collect();
            let mean = xs.iter().sum::<f64>() / n as f64;
            oracle += (xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64).sqrt();
        }
        assert!((diversity_score(&grasps).unwrap() - oracle / 3.0).abs() < 1e-12);
    }
    let a = Grasp::from_pose(&Matrix3::identity(), &Vector3::zeros(), vec![0.2; 4]);
    let b = Grasp::from_pose(&Matrix3::identity(), &Vector3::zeros(), vec![1.2; 4]);
    assert!((diversity_score(&[a, b]).unwrap() - 0.5).abs() < 1e-15);
}

