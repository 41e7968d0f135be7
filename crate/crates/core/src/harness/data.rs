//! Synthetic objects and reference grasps.

use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, UnitSphere};

use super::config::RunConfig;
use super::formats::{read_grasps, write_grasps, CloudRecord, GraspRecord};
use crate::error::{Error, Result};
use crate::ga::Versor;
use crate::hand::{Grasp, HandSpec};
use crate::physics::{limit_loss, success_eval, PhysicsContext, SuccessCriteria};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Shape {
    Sphere { radius: f64 },
    Box { size: Vector3<f64> },
}

impl Shape {
    pub fn label(&self) -> String {
        match self {
            Shape::Sphere { radius } => format!("sphere radius={radius:?}"),
            Shape::Box { size } => format!("box size={:?},{:?},{:?}", size.x, size.y, size.z),
        }
    }

    /// `n` points on the surface, centered at the origin.
    pub fn sample_surface<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<Vector3<f64>> {
        match *self {
            Shape::Sphere { radius } => (0..n).map(|_| Vector3::from(UnitSphere.sample(rng)) * radius).collect(),
            Shape::Box { size } => {
                let h = size / 2.0;
                let areas = [size.y * size.z, size.x * size.z, size.x * size.y];
                let total: f64 = areas.iter().sum::<f64>();
                (0..n)
                    .map(|_| {
                        let mut u = rng.gen::<f64>() * total;
                        let mut axis = 0;
                        while axis < 2 && u >= areas[axis] {
                            u -= areas[axis];
                            axis += 1;
                        }
                        let mut p = Vector3::new(rng.gen_range(-h.x..h.x), rng.gen_range(-h.y..h.y), rng.gen_range(-h.z..h.z));
                        p[axis] = if rng.gen::<bool>() { h[axis] } else { -h[axis] };
                        p
                    })
                    .collect()
            }
        }
    }
}

/// One object with its reference grasps.
#[derive(Clone, Debug, PartialEq)]
pub struct ObjectData {
    pub name: String,
    pub cloud: CloudRecord,
    pub grasps: Vec<GraspRecord>,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct Dataset {
    pub train: Vec<ObjectData>,
    pub test: Vec<ObjectData>,
    /// Test objects and their grasps under one random rigid motion each.
    pub ood: Vec<ObjectData>,
}

const SPLITS: [&str; 3] = ["train", "test", "ood"];

impl Dataset {
    fn split(&self, name: &str) -> &[ObjectData] {
        match name {
            "train" => &self.train,
            "test" => &self.test,
            _ => &self.ood,
        }
    }

    /// Writes `manifest.txt` plus one `.cloud` and one `.grasps` file per
    /// object under `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut manifest = String::from("# split\tname\tlabel\n");
        for split in SPLITS {
            for obj in self.split(split) {
                let stem = format!("{split}_{}", obj.name);
                obj.cloud.write(&dir.join(format!("{stem}.cloud")))?;
                write_grasps(&dir.join(format!("{stem}.grasps")), &obj.cloud.label, &obj.grasps)?;
                manifest.push_str(&format!("{split}\t{}\t{}\n", obj.name, obj.cloud.label));
            }
        }
        std::fs::write(dir.join("manifest.txt"), manifest)?;
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(dir.join("manifest.txt"))?;
        let mut data = Dataset::default();
        for line in text.lines().filter(|l| !l.trim().is_empty() && !l.starts_with('#')) {
            let mut parts = line.splitn(3, '\t');
            let (Some(split), Some(name)) = (parts.next(), parts.next()) else {
                return Err(Error::Format(format!("manifest line `{line}`")));
            };
            let stem = format!("{split}_{name}");
            let obj = ObjectData {
                name: name.to_string(),
                cloud: CloudRecord::read(&dir.join(format!("{stem}.cloud")))?,
                grasps: read_grasps(&dir.join(format!("{stem}.grasps")))?,
            };
            match split {
                "train" => data.train.push(obj),
                "test" => data.test.push(obj),
                "ood" => data.ood.push(obj),
                _ => return Err(Error::Format(format!("unknown split `{split}`"))),
            }
        }
        Ok(data)
    }
}

/// Rotation whose third column is `n`, rolled by `roll` about it.
pub fn frame_from_normal(n: &Vector3<f64>, roll: f64) -> Matrix3<f64> {
    let n = n.normalize();
    let a = if n.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
    let e1 = (a - n * a.dot(&n)).normalize();
    let e2 = n.cross(&e1);
    let c1 = e1 * roll.cos() + e2 * roll.sin();
    Matrix3::from_columns(&[c1, n.cross(&c1), n])
}

/// Knobs for the reference-grasp synthesizer.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthesisParams {
    /// Palm overlap with the object surface (m).
    pub palm_press: f64,
    /// Largest random palm offset within the palm plane (m).
    pub lateral: f64,
    /// Closing increment of the coupled finger angle (rad).
    pub closing_step: f64,
    /// Extra closure after first contact (rad).
    pub squeeze: f64,
    pub attempts_per_grasp: usize,
}

impl Default for SynthesisParams {
    fn default() -> Self {
        Self { palm_press: 0.001, lateral: 0.008, closing_step: 0.01, squeeze: 0.06, attempts_per_grasp: 40 }
    }
}

fn touches(hand: &HandSpec, g: &Grasp, which: &[usize], points: &[Vector3<f64>], pad: f64) -> Result<bool> {
    let spheres = hand.forward_kinematics(g)?;
    Ok(which.iter().any(|&i| points.iter().any(|p| (p - spheres[i].center).norm() < spheres[i].radius + pad)))
}

/// Places the palm against the object along a random approach direction
/// and closes each finger until it first touches, then squeezes a little.
pub fn propose_grasp<R: Rng + ?Sized>(
    hand: &HandSpec,
    points: &[Vector3<f64>],
    pad: f64,
    params: &SynthesisParams,
    rng: &mut R,
) -> Result<Grasp> {
    let centroid = points.iter().sum::<Vector3<f64>>() / points.len() as f64;
    let n = Vector3::from(UnitSphere.sample(rng));
    let rot = frame_from_normal(&n, rng.gen_range(0.0..std::f64::consts::TAU));
    let depth = points.iter().map(|p| (centroid - p).dot(&n)).fold(f64::NEG_INFINITY, f64::max);
    let palm_radius = hand.palm_spheres[0].radius;
    let offset = rot * Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), 0.0) * params.lateral;
    let base = centroid - n * (depth + palm_radius + pad - params.palm_press) + offset;

    let low = hand.lower_limits();
    let up = hand.upper_limits();
    let mut q = low.clone();
    // Joints sharing a root form one finger; it closes as a unit.
    let root = |mut j: usize| {
        while let Some(p) = hand.joints[j].parent {
            j = p;
        }
        j
    };
    let mut fingers: Vec<Vec<usize>> = Vec::new();
    for j in 0..hand.joints.len() {
        match fingers.iter_mut().find(|f| root(f[0]) == root(j)) {
            Some(f) => f.push(j),
            None => fingers.push(vec![j]),
        }
    }
    let mut sphere_start = vec![hand.palm_spheres.len()];
    for joint in &hand.joints {
        sphere_start.push(sphere_start.last().unwrap() + joint.spheres.len());
    }
    for chain in &fingers {
        let spheres: Vec<usize> = chain.iter().flat_map(|&j| sphere_start[j]..sphere_start[j + 1]).collect();
        let mut angle = 0.0;
        let mut contact = false;
        loop {
            let mut trial = q.clone();
            for &j in chain {
                trial[j] = (low[j] + angle).min(up[j]);
            }
            let g = Grasp::from_pose(&rot, &base, trial.clone());
            if touches(hand, &g, &spheres, points, pad)? {
                contact = true;
            }
            let at_limit = chain.iter().all(|&j| trial[j] >= up[j]);
            if contact || at_limit {
                let extra = if contact { params.squeeze } else { 0.0 };
                for &j in chain {
                    q[j] = (low[j] + angle + extra).min(up[j]);
                }
                break;
            }
            angle += params.closing_step;
        }
    }
    Ok(Grasp::from_pose(&rot, &base, q))
}

/// Counts from one synthesis run, reported when nothing passes.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SynthesisStats {
    pub attempts: usize,
    pub failed_eval: usize,
    pub accepted: usize,
}

/// Proposes grasps until `count` pass the success test or the attempt
/// budget runs out.
#[allow(clippy::too_many_arguments)]
pub fn synthesize_grasps<R: Rng + ?Sized>(
    hand: &HandSpec,
    ctx: &PhysicsContext,
    points: &[Vector3<f64>],
    criteria: &SuccessCriteria,
    params: &SynthesisParams,
    count: usize,
    rng: &mut R,
) -> Result<(Vec<GraspRecord>, SynthesisStats)> {
    let mut stats = SynthesisStats::default();
    let mut out = Vec::with_capacity(count);
    let (low, up) = (hand.lower_limits(), hand.upper_limits());
    while out.len() < count && stats.attempts < params.attempts_per_grasp * count.max(1) {
        stats.attempts += 1;
        let g = propose_grasp(hand, points, ctx.params.point_radius, params, rng)?;
        debug_assert_eq!(limit_loss(&g.q, &low, &up)?, 0.0);
        let report = match success_eval(&g, ctx, criteria) {
            Ok(r) => r,
            Err(Error::UnstableIntegration { .. }) => {
                stats.failed_eval += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        if report.passed {
            stats.accepted += 1;
            out.push(GraspRecord { success: Some(true), ..GraspRecord::new(g) });
        } else {
            stats.failed_eval += 1;
        }
    }
    Ok((out, stats))
}

fn object_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn random_shape<R: Rng + ?Sized>(sphere: bool, rng: &mut R) -> Shape {
    if sphere {
        Shape::Sphere { radius: rng.gen_range(0.02..0.04) }
    } else {
        Shape::Box { size: Vector3::new(rng.gen_range(0.03..0.06), rng.gen_range(0.03..0.06), rng.gen_range(0.03..0.06)) }
    }
}

pub fn physics_context(config: &RunConfig, hand: &HandSpec, points: &[Vector3<f64>]) -> Result<PhysicsContext> {
    let mut ctx = PhysicsContext::new(hand.clone(), points, config.object_mass, config.sim_params(), config.probe_speed)?;
    ctx.fd_step = config.guidance_fd_step;
    Ok(ctx)
}

/// Builds the training and test objects with reference grasps, plus the
/// transformed copy of the test split when `ood_copy` is set.
pub fn gen_data(config: &RunConfig) -> Result<Dataset> {
    config.validate()?;
    let hand = config.hand()?;
    let criteria = config.criteria();
    let synth = SynthesisParams::default();
    let mut data = Dataset::default();
    let plan = [
        (false, config.spheres, true),
        (false, config.boxes, false),
        (true, config.test_spheres, true),
        (true, config.test_boxes, false),
    ];
    let mut index = 0u64;
    for (test, count, sphere) in plan {
        for _ in 0..count {
            let mut rng = object_rng(config.seed, index);
            let shape = random_shape(sphere, &mut rng);
            let points = shape.sample_surface(config.points, &mut rng);
            let ctx = physics_context(config, &hand, &points)?;
            let (grasps, stats) =
                synthesize_grasps(&hand, &ctx, &points, &criteria, &synth, config.grasps_per_object, &mut rng)?;
            let name = format!("obj{index:03}");
            if grasps.is_empty() {
                return Err(Error::NoPassingGrasps {
                    object: format!("{name} ({})", shape.label()),
                    diagnostics: format!("{} attempts, {} failed the success test", stats.attempts, stats.failed_eval),
                });
            }
            log::info!("{name} {}: {}/{} grasps accepted", shape.label(), stats.accepted, stats.attempts);
            let obj = ObjectData { name, cloud: CloudRecord { label: shape.label(), points }, grasps };
            if test {
                data.test.push(obj);
            } else {
                data.train.push(obj);
            }
            index += 1;
        }
    }
    if config.ood_copy {
        for obj in &data.test {
            let mut rng = object_rng(config.seed ^ 0x5eed, index);
            index += 1;
            let u = Versor::random_motor(&mut rng, 0.3);
            data.ood.push(transform_object(obj, &u));
        }
    }
    Ok(data)
}

pub fn transform_object(obj: &ObjectData, u: &Versor) -> ObjectData {
    ObjectData {
        name: obj.name.clone(),
        cloud: CloudRecord { label: obj.cloud.label.clone(), points: obj.cloud.points.iter().map(|p| u.apply_point(p)).collect() },
        grasps: obj.grasps.iter().map(|r| GraspRecord { grasp: r.grasp.transformed(u), ..r.clone() }).collect(),
    }
}

/// Standard normal vector, used for diffusion noise during training.
pub(crate) fn normal_vec<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}
